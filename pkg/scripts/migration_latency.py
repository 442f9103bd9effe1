"""Local-only versus hybrid placement: does interaction time change?

Compares mean family latency of the ``migration`` scenario's static hybrid
policies against local-only service on paired seeds, then sweeps the cloud
capacity scale to show how much extra capacity offsets the WAN delay.
"""

import argparse

import numpy as np

from hybridsim.control import StaticPolicy
from hybridsim.metrics import latency_samples
from hybridsim.scenario import bundled_scenario_path, load_valid_scenario
from hybridsim.sim import Simulation


def mean_latency(sc, seed, controller=None, u=None):
    sim = Simulation(sc, seed, controller)
    if u is not None:
        sim.policy = StaticPolicy(np.asarray(u, dtype=float))
    return float(latency_samples(sim.run())[0].mean())


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--scenario", default=str(bundled_scenario_path("migration")))
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--route-frac", type=float, default=0.5)
    args = ap.parse_args()

    sc = load_valid_scenario(args.scenario)
    base = {s: mean_latency(sc, s, "none") for s in args.seeds}
    print(f"local-only mean latency {np.mean(list(base.values())):.4f}s")

    for ctrl in sc.controller_names()[1:]:
        rel = [(mean_latency(sc, s, ctrl) - base[s]) / base[s] for s in args.seeds]
        print(f"{ctrl:>18}: relative change per seed {np.round(rel, 3).tolist()}, "
              f"mean {np.mean(rel):+.3f}")

    print("\ncloud capacity sweep (route fraction %.2f)" % args.route_frac)
    for cap in (1.0, 1.5, 2.0, 3.0, 4.0):
        rel = [(mean_latency(sc, s, u=[args.route_frac, 0.5, cap]) - base[s]) / base[s]
               for s in args.seeds]
        print(f"  capacity x{cap:<4} mean relative change {np.mean(rel):+.3f}")


if __name__ == "__main__":
    main()
