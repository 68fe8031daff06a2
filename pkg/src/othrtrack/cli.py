"""Command-line harness.

Subcommands:
    simulate    generate a ground-truth bundle (JSON) from a configuration
    track       run the tracker once on a bundle (or a fresh simulation)
    experiment  Monte Carlo RMSE study for one benchmark case
    oracle      run the independent verifiers (dense solve, brute force, ...)

Exit codes: 0 success, 1 configuration error, 2 run failures beyond the
acceptable threshold (more than half the runs excluded, or a failed
oracle check).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import ecm, experiment, metrics, sim
from .config import Config, config_to_dict, default_config, load_config
from .errors import ConfigError, OthrTrackError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUN_FAILURE = 2

_CASE_VIH = {1: ecm.VIH_FIXED, 2: ecm.VIH_IONOSONDE, 3: ecm.VIH_FULL,
             4: ecm.VIH_FIXED, 5: ecm.VIH_FULL, 6: ecm.VIH_FULL}


def _load(args) -> Config:
    return load_config(args.config) if args.config else default_config()


def _cmd_simulate(args) -> int:
    config = _load(args)
    truth = sim.simulate(config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "truth.json"
    sim.save_truth(truth, path)
    meta = {
        "seed": args.seed,
        "num_scans": truth.num_scans,
        "num_targets": truth.num_targets,
        "skipped_detections": truth.skipped_detections,
        "config": config_to_dict(config),
    }
    with open(out / "simulate_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_track(args) -> int:
    config = _load(args)
    truth = sim.load_truth(args.truth) if args.truth else sim.simulate(config, args.seed)
    target_ids = experiment.case_target_ids(args.case, config)
    vih_mode = _CASE_VIH[args.case]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.case == 5:
        parts = [
            ecm.run_tracker(truth, config, args.kappa, vih_mode, target_ids=[tid])
            for tid in target_ids
        ]
        states = np.concatenate([p.states for p in parts], axis=0)
        betas = np.concatenate([p.betas for p in parts], axis=0)
        windows = [w for p in parts for w in p.windows]
    else:
        res = ecm.run_tracker(truth, config, args.kappa, vih_mode, target_ids=target_ids)
        states, betas, windows = res.states, res.betas, res.windows

    path = out / "track.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["scan", "target", "range_km", "range_rate_km_s", "bearing_rad",
             "bearing_rate_rad_s", "hE_it_km", "hE_ir_km", "hF_it_km", "hF_ir_km"]
        )
        for l, tid in enumerate(target_ids):
            for k in range(truth.num_scans):
                row = [k + 1, tid + 1] + [f"{v:.12g}" for v in states[l, k]]
                row += [f"{v:.12g}" for v in betas[l, k]]
                writer.writerow(row)
    n_iter = sum(w.iterations for w in windows)
    lgbp_misses = sum(0 if w.lgbp_all_converged else 1 for w in windows)
    print(f"wrote {path} ({len(windows)} windows, {n_iter} iterations, "
          f"{lgbp_misses} windows with unconverged field inference)")
    return EXIT_OK


def _cmd_experiment(args) -> int:
    config = _load(args)
    spec = experiment.ExperimentSpec(
        case=args.case,
        runs=args.runs,
        kappa=args.kappa,
        seed=args.seed,
        config=config,
        workers=args.workers,
    )
    report = experiment.run_experiment(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reference = None
    if args.reference:
        scans_ref, runs_ref, rmse_ref = metrics.load_csv(args.reference)
        reference = metrics.MetricsReport(
            case=0, kappa=args.kappa, runs_requested=runs_ref, runs_completed=runs_ref,
            excluded_runs=0, seed=0, scans=scans_ref,
            target_ids=list(range(1, rmse_ref["range_km"].shape[1] + 1)), rmse=rmse_ref,
        )
    formats = ("csv", "summary") if args.format == "both" else (args.format,)
    if "csv" in formats:
        metrics.export_csv(report, out / f"case{args.case}_metrics.csv")
    if "summary" in formats:
        metrics.export_summary(report, out / f"case{args.case}_summary.txt", reference)
    print(
        f"case {args.case}: {report.runs_completed}/{report.runs_requested} runs, "
        f"mean range RMSE {report.aggregate_mean('range_km'):.4g} km"
    )
    if report.excluded_runs * 2 > report.runs_requested:
        print("error: more than half the runs were excluded", file=sys.stderr)
        return EXIT_RUN_FAILURE
    return EXIT_OK


def _cmd_oracle(args) -> int:
    from . import verify

    checks = {
        "derivatives": verify.check_derivatives,
        "smoother": verify.check_smoother,
        "lgbp": verify.check_lgbp,
        "association": verify.check_association,
    }
    names = list(checks) if args.check == "all" else [args.check]
    ok = True
    for name in names:
        result = checks[name](seed=args.seed)
        passed = bool(result.pop("passed"))
        ok = ok and passed
        detail = ", ".join(f"{k}={v:.3g}" for k, v in result.items())
        print(f"{'PASS' if passed else 'FAIL'} oracle:{name} ({detail})")
    return EXIT_OK if ok else EXIT_RUN_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="othrtrack",
        description="Skywave radar multitarget tracking with ionospheric height inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, case=True):
        p.add_argument("--config", type=str, default=None, help="YAML configuration file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=str, default="out", help="output directory")
        if case:
            p.add_argument("--case", type=int, choices=experiment.CASES, default=3)

    p_sim = sub.add_parser("simulate", help="generate a ground-truth bundle")
    common(p_sim, case=False)
    p_sim.set_defaults(func=_cmd_simulate)

    p_track = sub.add_parser("track", help="run the tracker on one scenario")
    common(p_track)
    p_track.add_argument("--kappa", type=int, default=1, help="window length minus one")
    p_track.add_argument("--truth", type=str, default=None, help="existing truth bundle (JSON)")
    p_track.set_defaults(func=_cmd_track)

    p_exp = sub.add_parser("experiment", help="Monte Carlo RMSE study")
    common(p_exp)
    p_exp.add_argument("--runs", type=int, default=100)
    p_exp.add_argument("--kappa", type=int, default=1)
    p_exp.add_argument("--workers", type=int, default=1)
    p_exp.add_argument("--format", choices=("csv", "summary", "both"), default="both")
    p_exp.add_argument(
        "--reference", type=str, default=None,
        help="metrics CSV of a reference case for improvement ratios",
    )
    p_exp.set_defaults(func=_cmd_experiment)

    p_oracle = sub.add_parser("oracle", help="run independent verifiers")
    p_oracle.add_argument(
        "--check",
        choices=("all", "derivatives", "smoother", "lgbp", "association"),
        default="all",
    )
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OthrTrackError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
