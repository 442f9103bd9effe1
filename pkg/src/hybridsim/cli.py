"""Command-line entry point.

::

    hybridsim simulate   --scenario F [--seed N] --out D [--controller NAME]
    hybridsim identify   --trace F --n N --m M [--ridge R] [--out FILE]
    hybridsim experiment --scenario F --controllers a,b --seeds 1,2 --out D [--jobs K] [--check]

Exit codes: 0 ok, 1 ``--check`` failed, 2 unparseable input, 3 invalid
input, 4 simulation aborted. Errors go to stderr as one JSON object.
Seed precedence: ``--seed`` > ``$HYBRIDSIM_SEED`` > scenario ``seed``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .ident import (IdentTrace, InsufficientDataError, RankDeficiencyError,
                    fit_least_squares)
from .metrics import (EmptySampleError, Thresholds, build_histogram,
                      criteria_report, latency_samples)
from .scenario import (BASELINE, Scenario, ScenarioParseError,
                       ScenarioValidationError, file_sha256, loads_scenario,
                       parse_scenario, validate_scenario)
from .sim import SimulationAborted, run
from .trace import read_epochs, trace_digest, write_trace

log = logging.getLogger("hybridsim")

EXIT_OK, EXIT_CHECK, EXIT_PARSE, EXIT_INVALID, EXIT_ABORT = 0, 1, 2, 3, 4
SEED_ENV = "HYBRIDSIM_SEED"


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, details=()):
        super().__init__(message)
        self.code, self.kind, self.details = code, kind, list(details)


def dump_json(obj) -> str:
    return json.dumps(_finite(obj), indent=2, sort_keys=True) + "\n"


def _finite(obj):
    # strict JSON has no Infinity/NaN
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    return obj


def _load_scenario(path: str) -> Scenario:
    try:
        sc = parse_scenario(path)
    except ScenarioParseError as exc:
        raise CliError(EXIT_PARSE, "parse", str(exc),
                       [{"path": p, "message": m} for p, m in exc.errors]) from None
    errors = validate_scenario(sc)
    if errors:
        raise CliError(EXIT_INVALID, "validation",
                       f"scenario {path} has {len(errors)} violation(s)", errors)
    return sc


def resolve_seed(flag: int | None, scenario: Scenario) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise CliError(EXIT_PARSE, "parse", f"{SEED_ENV}={env!r} is not an integer") from None
    return scenario.seed


def _manifest(sc: Scenario, path: str, seed: int, controller: str, trace) -> dict:
    return {
        "scenario": sc.name,
        "scenario_path": str(path),
        "scenario_sha256": file_sha256(path),
        "seed": seed,
        "controller": controller,
        "version": __version__,
        "conservation": trace.conservation,
        "event_count": trace.event_count,
        "duplicates": trace.duplicate_count,
        "trace_sha256": trace_digest(trace),
    }


# -- simulate ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    sc = _load_scenario(args.scenario)
    seed = resolve_seed(args.seed, sc)
    controller = args.controller or sc.control_loop.policy
    if controller != BASELINE and controller not in sc.control_loop.policies:
        raise CliError(EXIT_INVALID, "validation", f"unknown controller {controller!r}",
                       [f"scenario defines {sc.controller_names()}"])
    out = Path(args.out)
    try:
        trace = run(sc, seed, controller)
    except SimulationAborted as exc:
        write_trace(exc.trace, out)
        man = _manifest(sc, args.scenario, seed, controller, exc.trace)
        man["aborted"] = str(exc)
        (out / "manifest.json").write_text(dump_json(man))
        raise CliError(EXIT_ABORT, "runtime", str(exc)) from None
    write_trace(trace, out)
    (out / "manifest.json").write_text(dump_json(_manifest(sc, args.scenario, seed, controller, trace)))
    log.info("wrote %s (%d requests, %d duplicates)", out, len(trace.requests),
             trace.duplicate_count)
    return EXIT_OK


# -- identify ---------------------------------------------------------------

def cmd_identify(args) -> int:
    try:
        t, x, u = read_epochs(args.trace)
    except (OSError, ValueError, IndexError) as exc:
        raise CliError(EXIT_PARSE, "parse", f"cannot read trace {args.trace}: {exc}") from None
    if x.shape[1] != args.n or u.shape[1] != args.m:
        raise CliError(EXIT_PARSE, "parse",
                       f"trace has {x.shape[1]} state and {u.shape[1]} control columns, "
                       f"expected n={args.n}, m={args.m}")
    try:
        report = fit_least_squares(IdentTrace(t, x, u), ridge=args.ridge)
    except InsufficientDataError as exc:
        raise CliError(EXIT_INVALID, "insufficient_data", str(exc)) from None
    except RankDeficiencyError as exc:
        raise CliError(EXIT_INVALID, "rank_deficient", str(exc),
                       ["retry with --ridge R for a small R > 0, or excite every control input"]) from None
    except ValueError as exc:
        raise CliError(EXIT_INVALID, "validation", str(exc)) from None
    out = report.to_dict()
    out["ridge"] = args.ridge
    out["epochs"] = int(t.size)
    warnings = []
    if report.spectral_radius_a >= 1.0 - 1e-9:
        warnings.append(f"fitted A has spectral radius {report.spectral_radius_a:.6g} >= 1 "
                        "(not asymptotically stable)")
    out["warnings"] = warnings
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    text = dump_json(out)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- experiment -------------------------------------------------------------

def _run_job(scenario_json: str, seed: int, controller: str):
    sc = loads_scenario(scenario_json)
    try:
        return seed, controller, run(sc, seed, controller), None
    except SimulationAborted as exc:
        return seed, controller, exc.trace, str(exc)


def _mean_report(per_seed: list[dict], thresholds: Thresholds) -> dict:
    def avg(f):
        return float(np.mean([f(r) for r in per_seed]))
    rel = avg(lambda r: r["criterion1"]["relative_change"])
    dup = avg(lambda r: r["criterion2"]["dup_reduction"])
    tail = avg(lambda r: r["criterion2"]["tail_mass_reduction"])
    return {
        "criterion1": {
            "mean_latency_baseline": avg(lambda r: r["criterion1"]["mean_latency_baseline"]),
            "mean_latency_hybrid": avg(lambda r: r["criterion1"]["mean_latency_hybrid"]),
            "relative_change": rel,
            "verdict": abs(rel) <= thresholds.latency_rel_change,
        },
        "criterion2": {
            "dup_count_a": avg(lambda r: r["criterion2"]["dup_count_a"]),
            "dup_count_b": avg(lambda r: r["criterion2"]["dup_count_b"]),
            "tail_mass_ratio_a": avg(lambda r: r["criterion2"]["tail_a"]["tail_mass_ratio"]),
            "tail_mass_ratio_b": avg(lambda r: r["criterion2"]["tail_b"]["tail_mass_ratio"]),
            "dup_reduction": dup,
            "tail_mass_reduction": tail,
            "verdict": dup >= thresholds.dup_reduction and tail >= thresholds.tail_mass_reduction,
        },
    }


def _parse_list(text: str, conv, what: str) -> list:
    try:
        items = [conv(s.strip()) for s in text.split(",") if s.strip()]
    except ValueError:
        raise CliError(EXIT_PARSE, "parse", f"cannot parse {what} list {text!r}") from None
    if not items:
        raise CliError(EXIT_PARSE, "parse", f"empty {what} list")
    return items


def cmd_experiment(args) -> int:
    sc = _load_scenario(args.scenario)
    seeds = _parse_list(args.seeds, int, "seed")
    controllers = _parse_list(args.controllers, str, "controller")
    known = sc.controller_names()
    unknown = [c for c in controllers if c not in known]
    if unknown:
        raise CliError(EXIT_INVALID, "validation", f"unknown controller(s) {unknown}",
                       [f"scenario defines {known}"])
    candidates = [c for c in controllers if c != BASELINE] or [BASELINE]
    run_set = [BASELINE] + [c for c in dict.fromkeys(candidates) if c != BASELINE]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    thresholds = Thresholds()

    jobs = [(sc.to_json(), s, c) for c in run_set for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_job, *zip(*jobs)))
    else:
        results = [_run_job(*j) for j in jobs]
    results.sort(key=lambda r: (run_set.index(r[1]), r[0]))

    traces, runs, aborted = {}, {}, []
    for seed, ctrl, trace, err in results:
        write_trace(trace, out / ctrl / f"seed-{seed}")
        traces[(ctrl, seed)] = trace
        runs.setdefault(ctrl, {})[str(seed)] = {
            "conservation": trace.conservation, "duplicates": trace.duplicate_count,
            "trace_sha256": trace_digest(trace), "aborted": err}
        if err:
            aborted.append(f"{ctrl}/seed-{seed}: {err}")

    comparisons = {}
    for ctrl in dict.fromkeys(candidates):
        per_seed = {}
        for s in seeds:
            try:
                per_seed[str(s)] = criteria_report(traces[(BASELINE, s)], traces[(ctrl, s)],
                                                   thresholds).to_dict()
            except EmptySampleError as exc:
                per_seed[str(s)] = {"error": str(exc)}
        valid = [r for r in per_seed.values() if "error" not in r]
        comparisons[ctrl] = {"per_seed": per_seed,
                             "mean": _mean_report(valid, thresholds) if valid else None}

    _write_histograms(sc, out, traces, seeds, run_set)
    report = {
        "scenario": sc.name,
        "scenario_sha256": file_sha256(args.scenario),
        "version": __version__,
        "baseline": BASELINE,
        "controllers": run_set,
        "seeds": seeds,
        "thresholds": thresholds.__dict__,
        "runs": runs,
        "comparisons": comparisons,
        "aborted": aborted,
    }
    (out / "report.json").write_text(dump_json(report))
    if aborted:
        raise CliError(EXIT_ABORT, "runtime", f"{len(aborted)} run(s) aborted", aborted)
    if args.check:
        failed = [c for c, r in comparisons.items()
                  if r["mean"] is None or not r["mean"]["criterion2"]["verdict"]]
        if failed:
            print(dump_json({"error": "check", "message": "criterion 2 not met",
                             "details": failed}), file=sys.stderr, end="")
            return EXIT_CHECK
    return EXIT_OK


def _write_histograms(sc: Scenario, out: Path, traces, seeds, run_set) -> None:
    """Shared-edge before/after histograms of family latency and local workload."""
    bins = sc.outputs.histogram_bins
    pooled = {}
    for ctrl in run_set:
        samples = []
        for s in seeds:
            try:
                samples.append(latency_samples(traces[(ctrl, s)])[0])
            except EmptySampleError:
                pass
        if samples:
            pooled[ctrl] = np.concatenate(samples)
    if BASELINE in pooled:
        edges = build_histogram(pooled[BASELINE], bins).bin_edges
        for ctrl, s in pooled.items():
            (out / f"latency_hist_{ctrl}.csv").write_text(build_histogram(s, edges=edges).to_csv())
    labels = sc.control_loop.state_labels
    if "local_queue_len" in labels:
        i = labels.index("local_queue_len")
        work = {c: np.concatenate([traces[(c, s)].x[:, i] for s in seeds]) for c in run_set}
        edges = build_histogram(work[BASELINE], bins).bin_edges
        for ctrl, w in work.items():
            if w.size:
                (out / f"workload_hist_{ctrl}.csv").write_text(build_histogram(w, edges=edges).to_csv())


# -- entry point ------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_PARSE, "usage", message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hybridsim", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one scenario and write its trace")
    s.add_argument("--scenario", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--controller", help="policy name (default: the scenario's controlLoop.policy)")
    s.set_defaults(func=cmd_simulate)

    i = sub.add_parser("identify", help="fit A, B to an epochs CSV")
    i.add_argument("--trace", required=True)
    i.add_argument("--n", type=int, required=True)
    i.add_argument("--m", type=int, required=True)
    i.add_argument("--ridge", type=float, default=0.0)
    i.add_argument("--out", help="write the fit report here instead of stdout")
    i.set_defaults(func=cmd_identify)

    e = sub.add_parser("experiment", help="paired-seed controller comparison")
    e.add_argument("--scenario", required=True)
    e.add_argument("--controllers", required=True, help="comma-separated; 'none' is the baseline")
    e.add_argument("--seeds", required=True, help="comma-separated integers")
    e.add_argument("--out", required=True)
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--check", action="store_true", help="exit 1 unless criterion 2 passes")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(dump_json({"error": exc.kind, "message": str(exc),
                                    "details": exc.details}))
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
