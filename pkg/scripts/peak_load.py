"""Peak-load experiment: duplicates and latency tails with and without control.

Runs the bundled ``canonical_peak`` scenario for each controller on paired
seeds, prints per-seed duplicate counts and tail mass ratios, and writes
before/after latency histograms (shared bin edges) as CSV.

    python scripts/peak_load.py --seeds 1-5 --out results/peak
"""

import argparse
from pathlib import Path

import numpy as np

from hybridsim.metrics import build_histogram, criteria_report, latency_samples
from hybridsim.scenario import bundled_scenario_path, load_valid_scenario
from hybridsim.sim import run


def seed_range(text):
    lo, _, hi = text.partition("-")
    return list(range(int(lo), int(hi or lo) + 1))


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--scenario", default=str(bundled_scenario_path("canonical_peak")))
    ap.add_argument("--controllers", default="one-step,threshold")
    ap.add_argument("--seeds", type=seed_range, default=seed_range("1-5"))
    ap.add_argument("--bins", type=int, default=40)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    sc = load_valid_scenario(args.scenario)
    base = {s: run(sc, s, "none") for s in args.seeds}
    pooled = {"none": np.concatenate([latency_samples(t)[0] for t in base.values()])}

    for ctrl in args.controllers.split(","):
        rows, lat = [], []
        for s in args.seeds:
            tr = run(sc, s, ctrl)
            c2 = criteria_report(base[s], tr).criterion2
            rows.append((s, c2.dup_count_a, c2.dup_count_b, c2.tail_a.tail_mass_ratio,
                         c2.tail_b.tail_mass_ratio, c2.dup_reduction, c2.tail_mass_reduction))
            lat.append(latency_samples(tr)[0])
        pooled[ctrl] = np.concatenate(lat)
        print(f"\n{ctrl} vs none")
        print(f"{'seed':>4} {'dups none':>9} {'dups ctl':>9} {'tail none':>9} {'tail ctl':>9}"
              f" {'dupRed':>7} {'tailRed':>7}")
        for s, da, db, ta, tb, dr, tr_ in rows:
            print(f"{s:>4} {da:>9} {db:>9} {ta:>9.3f} {tb:>9.3f} {dr:>7.3f} {tr_:>7.3f}")
        a = np.array([r[5:] for r in rows])
        print(f"mean dupReduction {a[:, 0].mean():.3f}, tailMassReduction {a[:, 1].mean():.3f}")

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        edges = build_histogram(pooled["none"], args.bins).bin_edges
        for ctrl, s in pooled.items():
            h = build_histogram(s, edges=edges)
            (args.out / f"latency_hist_{ctrl}.csv").write_text(h.to_csv())
        print(f"\nhistograms written to {args.out}")


if __name__ == "__main__":
    main()
