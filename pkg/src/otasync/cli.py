"""Command-line entry point: ``otasync <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 scenario/input validation error,
3 budget FAIL under ``distribute --strict``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

from . import montecarlo, report
from .budget import end_to_end_error, evaluate, requirement
from .channel import LinkBudgetParams, load_tdl_profile
from .montecarlo import SYNC_FAILURE, run_experiment, table2_suite
from .nr_signal import Numerology
from .ptp import distribute
from .scenario import ScenarioError, canonical_hash, load_scenario

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_BUDGET_FAIL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _experiment_payload(result, scenario_hash, master_seed) -> dict:
    return {"scenario_hash": scenario_hash, "master_seed": master_seed, **result.summary()}


def _load_calibration(path) -> tuple[LinkBudgetParams, dict]:
    try:
        payload = report.read_payload(path)
    except FileNotFoundError:
        raise ScenarioError("calibration", f"file not found: {path}") from None
    except (json.JSONDecodeError, KeyError, TypeError):
        raise ScenarioError("calibration", f"{path} is not a calibration file") from None
    lb = payload.get("link_budget")
    if not isinstance(lb, dict):
        raise ScenarioError("calibration.link_budget", "missing or not an object")
    known = {f.name for f in fields(LinkBudgetParams)}
    unknown = sorted(set(lb) - known)
    if unknown:
        raise ScenarioError(f"calibration.link_budget.{unknown[0]}", "unknown field")
    if lb.get("reference_snr_db_at_1km") is None:
        raise ScenarioError("calibration.link_budget.reference_snr_db_at_1km", "anchor SNR missing")
    return LinkBudgetParams(**lb), payload


def cmd_table2(args) -> int:
    params, cal_payload = _load_calibration(args.calibration)
    inputs = {"command": "table2", "link_budget": asdict(params), "n_trials": args.trials, "master_seed": args.seed}
    h = canonical_hash(inputs)
    rep = table2_suite(params, args.seed, args.trials, workers=args.workers)
    distances = sorted({c.distance_m for c in rep.cells})
    header = ["scs_khz"] + [f"p90_ns_{d / 1000:g}km" for d in distances]
    out = Path(args.out_dir)
    report.write_csv(out / "table2.csv", header, rep.rows(), h, args.seed)
    cells = [
        {"scs_khz": c.scs_khz, "distance_m": c.distance_m, "display": c.display, **c.result.summary()}
        for c in rep.cells
    ]
    report.write_csv(
        out / "table2_cells.csv",
        ["scs_khz", "distance_m", "snr_db", "p50_ns", "p90_ns", "failure_rate", "verdict"],
        [[c["scs_khz"], c["distance_m"], repr(c["snr_db"]), repr(c["p50_ns"]), repr(c["p90_ns"]),
          repr(c["failure_rate"]), c["verdict"]] for c in cells],
        h, args.seed,
    )
    report.write_json(out / "table2.json", {
        "scenario_hash": h,
        "master_seed": args.seed,
        "n_trials": args.trials,
        "link_budget": asdict(params),
        "calibration_provenance": cal_payload.get("provenance"),
        "cells": cells,
    })
    if not args.no_plots:
        from .plots import plot_table2

        plot_table2(rep, out / "table2.png")
    sys.stdout.write(report.csv_text(header, rep.rows(), h, args.seed))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if not args.target_p90_ns > 0:
        raise ScenarioError("target_p90_ns", "must be > 0")
    base = LinkBudgetParams()
    overrides = {
        k: v for k, v in (
            ("pathloss_exponent", args.pathloss_exponent),
            ("noise_bandwidth_scaling", args.noise_bandwidth_scaling),
        ) if v is not None
    }
    base = replace(base, reference_scs_khz=args.scs, **overrides)
    try:
        Numerology(args.scs)
    except ValueError as exc:
        raise ScenarioError("scs", str(exc)) from None
    try:
        cal = montecarlo.calibrate(
            args.target_p90_ns, args.distance_m, args.scs, base, args.trials, args.seed,
            rel_tol=args.rel_tol, workers=args.workers,
        )
    except ValueError as exc:
        raise ScenarioError("target_p90_ns", str(exc)) from None
    inputs = {"command": "calibrate", "target_p90_ns": args.target_p90_ns, "distance_m": args.distance_m,
              "scs_khz": args.scs, "n_trials": args.trials, "master_seed": args.seed,
              "rel_tol": args.rel_tol, "base": asdict(base)}
    h = canonical_hash(inputs)
    profile = load_tdl_profile("TDL-C", 300.0)
    report.write_json(args.out, {
        "scenario_hash": h,
        "master_seed": args.seed,
        "anchor_snr_db": cal.anchor_snr_db,
        "achieved_p90_ns": cal.achieved_p90_ns,
        "target_p90_ns": cal.target_p90_ns,
        "converged": cal.converged,
        "iterations": cal.iterations,
        "link_budget": asdict(cal.params),
        "provenance": {
            "method": "bisection on anchor SNR at 1 km",
            "distance_m": args.distance_m,
            "scs_khz": args.scs,
            "n_trials": args.trials,
            "master_seed": args.seed,
            "rel_tol": args.rel_tol,
            "channel_profile": profile.name,
            "delay_spread_ns": profile.delay_spread_ns,
            "profile_source": profile.source,
            "timing_reference": "channel_peak",
        },
    })
    status = "converged" if cal.converged else "NOT converged"
    print(f"anchor_snr_db={cal.anchor_snr_db:.4f} achieved_p90_ns={cal.achieved_p90_ns:.3f} "
          f"target_p90_ns={cal.target_p90_ns:g} ({status}, {cal.iterations} iterations) -> {args.out}")
    return EXIT_OK


def _run_scenario(sc, workers):
    return run_experiment(sc.trial, sc.n_trials, sc.master_seed, workers)


def cmd_experiment(args) -> int:
    sc = load_scenario(args.scenario)
    result = _run_scenario(sc, args.workers)
    out = Path(args.out_dir)
    payload = _experiment_payload(result, sc.hash, sc.master_seed)
    report.write_json(out / "experiment.json", payload)
    if not args.no_plots:
        from .plots import plot_cdf

        plot_cdf(result.errors_ns, out / "experiment.png", result.threshold_ns)
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def cmd_plotdata(args) -> int:
    sc = load_scenario(args.scenario)
    result = _run_scenario(sc, args.workers)
    from .plots import empirical_cdf, plot_cdf

    x, y = empirical_cdf(result.errors_ns)
    out = Path(args.out_dir)
    report.write_csv(out / "error_cdf.csv", ["rank", "error_ns", "cdf"],
                     [[i + 1, repr(float(e)), repr(float(p))] for i, (e, p) in enumerate(zip(x, y))],
                     sc.hash, sc.master_seed)
    if not args.no_plots:
        plot_cdf(result.errors_ns, out / "error_cdf.png", result.threshold_ns)
    print(f"wrote {out / 'error_cdf.csv'} ({result.n_trials} trials, p90={result.p90_ns:.3f} ns)")
    return EXIT_OK


def cmd_distribute(args) -> int:
    sc = load_scenario(args.scenario)
    if sc.topology is None:
        raise ScenarioError("topology", "required for distribute")
    if sc.ota_ns is not None:
        ota_ns, ota_source, ota_failed = float(sc.ota_ns), "scenario", False
    else:
        res = _run_scenario(sc, args.workers)
        ota_ns, ota_source, ota_failed = res.p90_ns, "experiment_p90", res.verdict == SYNC_FAILURE
    node_err = distribute(sc.topology, sc.ptp, sc.master_seed)
    ids = list(node_err)
    totals = end_to_end_error(sc.e2e(ota_ns, [node_err[i] for i in ids]))
    req = requirement(sc.budget_level)
    verdict = evaluate(totals, req, sc.topology)
    if ota_failed:
        binding = "+".join(filter(None, ["ota_synchronization_failure", verdict.binding_constraint]))
        verdict = replace(verdict, passed=False, binding_constraint=binding)
    rows = [[i, repr(float(node_err[i])), repr(float(t)), repr(float(m))]
            for i, t, m in zip(ids, totals, verdict.margins_ns)]
    out = Path(args.out_dir)
    report.write_csv(out / "distribution.csv", ["node_id", "distribution_ns", "total_ns", "margin_ns"],
                     rows, sc.hash, sc.master_seed)
    report.write_json(out / "distribution.json", {
        "scenario_hash": sc.hash,
        "master_seed": sc.master_seed,
        "mode": sc.topology.mode,
        "ota_ns": ota_ns,
        "ota_source": ota_source,
        "gateway_internal_ns": sc.gateway_internal_ns,
        "combination_policy": sc.combination_policy,
        "nodes": [{"id": r[0], "distribution_ns": float(node_err[r[0]]), "total_ns": float(t),
                   "margin_ns": float(m)} for r, t, m in zip(rows, totals, verdict.margins_ns)],
        "verdict": verdict.as_dict(),
    })
    if not args.no_plots:
        from .plots import plot_distribution

        plot_distribution(ids, totals, req.budget_ns, out / "distribution.png")
    word = "PASS" if verdict.passed else f"FAIL ({verdict.binding_constraint})"
    print(f"level {req.level}: {word}; max total {verdict.max_total_ns:.3f} ns vs budget {req.budget_ns:g} ns; "
          f"{verdict.n_devices} devices (max {req.max_devices})")
    if args.strict and not verdict.passed:
        return EXIT_BUDGET_FAIL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="otasync", description="5G over-the-air timing and PTP distribution simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="{table2,experiment,distribute,calibrate,plotdata}")

    def common(sp, plots=True):
        sp.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (default: ${montecarlo.WORKERS_ENV} or 1)")
        sp.add_argument("--out-dir", default=".", help="directory for output files")
        if plots:
            sp.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    t2 = sub.add_parser("table2", help="SCS x range p90 grid from a calibration file")
    t2.add_argument("--seed", type=int, required=True)
    t2.add_argument("--calibration", required=True, help="JSON written by `calibrate`")
    t2.add_argument("--trials", type=int, default=montecarlo.DEFAULT_TRIALS)
    common(t2)
    t2.set_defaults(func=cmd_table2)

    ex = sub.add_parser("experiment", help="one Monte Carlo experiment from a scenario")
    ex.add_argument("--scenario", required=True)
    common(ex)
    ex.set_defaults(func=cmd_experiment)

    di = sub.add_parser("distribute", help="PTP distribution and budget verdict")
    di.add_argument("--scenario", required=True)
    di.add_argument("--strict", action="store_true", help="exit 3 when the budget verdict is FAIL")
    common(di)
    di.set_defaults(func=cmd_distribute)

    ca = sub.add_parser("calibrate", help="fit the anchor SNR to a target p90")
    ca.add_argument("--target-p90-ns", type=float, required=True)
    ca.add_argument("--distance-m", type=float, default=1000.0)
    ca.add_argument("--scs", type=int, default=15)
    ca.add_argument("--trials", type=int, default=montecarlo.DEFAULT_TRIALS)
    ca.add_argument("--seed", type=int, default=42)
    ca.add_argument("--rel-tol", type=float, default=0.02)
    ca.add_argument("--pathloss-exponent", type=float, default=None)
    ca.add_argument("--noise-bandwidth-scaling", type=float, default=None)
    ca.add_argument("--out", default="calibration.json")
    ca.add_argument("--workers", type=int, default=None)
    ca.set_defaults(func=cmd_calibrate)

    pd = sub.add_parser("plotdata", help="per-trial error CDF as CSV")
    pd.add_argument("--scenario", required=True)
    common(pd)
    pd.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"otasync: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"otasync: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
