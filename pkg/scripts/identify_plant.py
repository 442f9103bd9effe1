"""Identify a linear plant model from a simulated closed-loop trace.

Simulates the ``identify_demo`` scenario, fits ``x(t+1) = A x(t) + B u(t)``
by ridge least squares on the sampled epochs, and reports the fit. Inputs
that never move (here wan_share and cloud_capacity under the threshold
policy) make the plain fit rank deficient, which is why a small ridge is the
default.
"""

import argparse

import numpy as np

from hybridsim.ident import IdentTrace, RankDeficiencyError, fit_least_squares
from hybridsim.scenario import bundled_scenario_path, load_valid_scenario
from hybridsim.sim import run


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--scenario", default=str(bundled_scenario_path("identify_demo")))
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--ridge", type=float, default=1e-3)
    args = ap.parse_args()

    sc = load_valid_scenario(args.scenario)
    tr = run(sc, args.seed)
    data = IdentTrace(tr.t, tr.x, tr.u)
    try:
        fit_least_squares(data, ridge=0.0)
        print("plain least squares: well posed")
    except RankDeficiencyError as exc:
        print(f"plain least squares: {exc}")

    rep = fit_least_squares(data, ridge=args.ridge)
    np.set_printoptions(precision=4, suppress=True)
    print(f"\nridge {args.ridge:g}, {tr.t.size} epochs")
    print("state  :", ", ".join(sc.control_loop.state_labels))
    print("control:", ", ".join(sc.control_loop.control_labels))
    print("A =\n", rep.model.A)
    print("B =\n", rep.model.B)
    print("residual rms    :", rep.residual_rms)
    print(f"condition number: {rep.condition_number:.3g}")
    print(f"spectral radius : {rep.spectral_radius_a:.4f}")


if __name__ == "__main__":
    main()
