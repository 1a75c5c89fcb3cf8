"""
kerdock-radar command line: waveforms | simulate | roc | verify | bench

Exit codes: 0 when every requested check passes, 1 when a check fails
(failed-check JSON on stdout), 2 on an invalid request (failure JSON on
stdout).
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from rich.console import Console
from rich.progress import BarColumn, Progress, TaskProgressColumn, TextColumn, TimeElapsedColumn
from rich.table import Table

from kerdock_radar.src.core.config import ExperimentConfig, load_config
from kerdock_radar.src.core.errors import KerdockRadarError
from kerdock_radar.src.core.harness import (
    benchmark_forward,
    bernstein_mc,
    campaign_summary,
    roc,
    roc_trial_rows,
    run_sweep,
    run_trials,
    verify_column_norms,
    verify_coherence_bound,
    verify_normalized_coherence,
    verify_operator_norm_bound,
)
from kerdock_radar.src.core.io import (
    read_records,
    write_records,
    write_roc,
    write_roc_trials,
    write_waveforms_csv,
)
from kerdock_radar.src.core.models import KerdockPropertyReport, TheoryReport, write_json
from kerdock_radar.src.core.pipeline import create_pipeline
from kerdock_radar.src.core.waveforms import (
    alltop_waveforms,
    kerdock_family,
    kerdock_waveforms,
    verify_incoherence,
    verify_kerdock_properties,
)

from .config import config as cli_config

logger = logging.getLogger(__name__)

THEORY_CHECKS: Dict[str, Callable[..., TheoryReport]] = {
    "operator_norm": verify_operator_norm_bound,
    "coherence": verify_coherence_bound,
    "normalized_coherence": verify_normalized_coherence,
    "column_norms": verify_column_norms,
}
VERIFY_CHOICES = tuple(THEORY_CHECKS) + ("bernstein", "kerdock")

console = Console()


def _common_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="JSON experiment configuration")
    parent.add_argument("--seed", type=int, help="master seed; every random draw derives from it")
    parent.add_argument("--out", help="output directory (default: KERDOCK_OUTPUT_ROOT or the config's output_dir)")
    parent.add_argument("--jobs", type=int, help="worker processes (default: available cores)")
    parent.add_argument("--dense-oracle", action="store_true", help="cross-check the fast operator densely")
    parent.add_argument("--force", action="store_true", help="run theory checks whose hypotheses fail")
    parent.add_argument("--log-level", default=cli_config.LOG_LEVEL, help="logging level")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kerdock-radar", description="Compressive MIMO radar with Kerdock waveforms")
    common = _common_options()
    commands = parser.add_subparsers(dest="command", required=True)

    waveforms = commands.add_parser("waveforms", parents=[common], help="generate and check a waveform set")
    waveforms.add_argument("--p", type=int, default=37, help="sequence length (odd prime)")
    waveforms.add_argument("--family", choices=("kerdock", "alltop"), default="kerdock")
    waveforms.add_argument("--n-tx", type=int, default=6, help="number of transmit waveforms")
    waveforms.add_argument("--j-select", type=int, default=0, help="vector index taken from each Kerdock basis")
    waveforms.add_argument("--check-gamma", type=float, help="also check incoherence against this gamma")
    waveforms.add_argument("--tolerance", type=float, default=1e-10)

    simulate = commands.add_parser("simulate", parents=[common], help="run a Monte-Carlo recovery campaign")
    simulate.add_argument("--trials", type=int, help="override the configured trial count")

    roc_parser = commands.add_parser("roc", parents=[common], help="ROC curve from a records.csv")
    roc_parser.add_argument("--in", dest="records", required=True, help="records.csv written by simulate")
    roc_parser.add_argument("--pfa", type=float, default=1e-2, help="false-alarm rate of the reported operating point")

    verify = commands.add_parser("verify", parents=[common], help="Monte-Carlo check of a bound")
    verify.add_argument("bound", choices=VERIFY_CHOICES)
    verify.add_argument("--trials", type=int, help="geometries (or draws for bernstein)")
    verify.add_argument("--m", type=int, default=16, help="bernstein: matrix size")
    verify.add_argument("--n", type=int, default=16, help="bernstein: entry bound 1/sqrt(n)")

    bench = commands.add_parser("bench", parents=[common], help="fast against dense forward-apply timing")
    bench.add_argument("--repeats", type=int, default=5)
    return parser


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    """Configuration file (or environment) with the command-line overrides applied"""
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out:
        overrides["output_dir"] = args.out
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.dense_oracle:
        overrides["dense_oracle"] = True
    if args.force:
        overrides["force"] = True
    if getattr(args, "trials", None) is not None and args.command == "simulate":
        overrides["trials"] = args.trials
    if overrides:
        cfg = replace(cfg, **overrides)
        cfg.validate()
    return cfg


def _jobs(cfg: ExperimentConfig) -> Optional[int]:
    return cfg.jobs if cfg.jobs is not None else cli_config.JOBS


def _report_table(title: str, reports: Sequence[TheoryReport]) -> Table:
    table = Table(title=title)
    for column in ("check", "bound", "empirical max", "violations", "allowed", "hypotheses", "passed"):
        table.add_column(column)
    for report in reports:
        table.add_row(
            report.bound_name,
            "n/a" if report.bound_value is None else f"{report.bound_value:.4g}",
            "n/a" if report.empirical_max is None else f"{report.empirical_max:.4g}",
            f"{report.violations}/{report.trials}",
            str(report.allowed_violations),
            "ok" if report.hypotheses_satisfied else ("forced" if report.forced else "failed"),
            "[green]yes[/green]" if report.passed else "[red]no[/red]",
        )
    return table


def _kerdock_failures(report: KerdockPropertyReport) -> Tuple[List[str], List[dict]]:
    names = [name for name, ok in report.properties.items() if not ok]
    payload = {
        "name": "kerdock_properties",
        "p": report.p,
        "properties": report.properties,
        "deviations": report.deviations,
    }
    return names, [payload]


def cmd_waveforms(args: argparse.Namespace) -> int:
    out = args.out or cli_config.OUTPUT_ROOT
    failed: List[str] = []
    reports: List[dict] = []
    if args.family == "kerdock":
        family = kerdock_family(args.p)
        waveforms = kerdock_waveforms(family, args.n_tx, args.j_select)
        report = verify_kerdock_properties(family, tolerance=args.tolerance)
        report.save_to_file(out)
        if not report.passed:
            names, payload = _kerdock_failures(report)
            failed.extend(names)
            reports.extend(payload)
        table = Table(title=f"Kerdock code properties, p={args.p}")
        table.add_column("property")
        table.add_column("passed")
        for name, ok in report.properties.items():
            table.add_row(name, "[green]yes[/green]" if ok else "[red]no[/red]")
        console.print(table)
    else:
        waveforms = alltop_waveforms(args.p, args.n_tx)

    if args.check_gamma is not None:
        incoherence = verify_incoherence(waveforms, args.check_gamma, tolerance=args.tolerance)
        write_json(incoherence.to_dict(), os.path.join(out, "incoherence_report.json"))
        console.print(
            f"Incoherence at gamma={args.check_gamma}: self {incoherence.self_passed}, "
            f"cross {incoherence.cross_passed} (empirical gamma {incoherence.empirical_gamma:.4f})"
        )
        if not incoherence.self_passed:
            failed.append("self_incoherence")
        if not incoherence.cross_passed:
            failed.append("cross_incoherence")
        if not incoherence.passed:
            reports.append(incoherence.to_dict())

    path = write_waveforms_csv(waveforms, os.path.join(out, "waveforms.csv"))
    console.print(f"PAPR per waveform: {', '.join(f'{v:.4f}' for v in waveforms.papr())}")
    console.print(f"Saved {path}")
    return _check_failure(failed, reports) if failed else 0


def _progress() -> Progress:
    return Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        TimeElapsedColumn(),
        console=console,
    )


def _failed_trials(records) -> List[dict]:
    return [{"trial": r.trial, "seed": r.seed, "errors": r.errors} for r in records if not r.success]


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args)
    out = cfg.output_dir
    cfg.save_to_file(os.path.join(out, "config.json"))
    pipeline = create_pipeline(cfg)

    if cfg.sparsity_sweep or cfg.snr_db_sweep:
        sparsities = cfg.sparsity_sweep or [cfg.sparsity]
        snrs = cfg.snr_db_sweep or [cfg.snr_db]
        points = run_sweep(cfg, sparsities, snrs, n_jobs=_jobs(cfg), waveforms=pipeline.waveforms)
        table = Table(title="Sparsity x SNR sweep")
        for column in ("S", "SNR (dB)", "exact support", "AUC", "P_d at P_fa=1e-2"):
            table.add_column(column)
        failed: List[dict] = []
        for point in points:
            point_dir = os.path.join(out, f"S{point.sparsity}_snr{point.snr_db}")
            write_records(point.records, point_dir)
            point_cfg = replace(cfg, sparsity=point.sparsity, snr_db=point.snr_db)
            write_json(campaign_summary(point_cfg, point.records), os.path.join(point_dir, "summary.json"))
            failed.extend(
                {"sparsity": point.sparsity, "snr_db": point.snr_db, **row} for row in _failed_trials(point.records)
            )
            if point.curve is not None:
                write_roc(point.curve, os.path.join(point_dir, "roc.csv"))
            table.add_row(
                str(point.sparsity),
                str(point.snr_db),
                f"{point.exact_recovery_rate:.2f}",
                "n/a" if point.curve is None else f"{point.curve.auc:.4f}",
                "n/a" if point.curve is None else f"{point.curve.pd_at_pfa(1e-2):.4f}",
            )
        console.print(table)
        if failed:
            names = [f"S{row['sparsity']}_snr{row['snr_db']}/trial_{row['trial']}" for row in failed]
            return _check_failure(names, failed)
        return 0

    with _progress() as progress:
        task = progress.add_task("Trials", total=100)
        records = run_trials(
            cfg,
            n_jobs=_jobs(cfg),
            waveforms=pipeline.waveforms,
            progress_callback=lambda percent, message: progress.update(task, completed=percent),
        )
    write_records(records, out)
    if records and records[0].success:
        pipeline.simulate_trial(0).save(os.path.join(out, "trial_0"))
    else:
        logger.warning("Trial 0 failed; no artifacts saved for it")

    summary = campaign_summary(cfg, records)
    write_json(summary, os.path.join(out, "summary.json"))
    table = Table(title=f"Campaign: {cfg.trials} trials, S={cfg.sparsity}, SNR={cfg.snr_db} dB")
    table.add_column("metric")
    table.add_column("value")
    for key, value in summary.items():
        table.add_row(key, f"{value:.4g}" if isinstance(value, float) else str(value))
    console.print(table)
    failed_trials = _failed_trials(records)
    if failed_trials:
        return _check_failure([f"trial_{row['trial']}" for row in failed_trials], failed_trials)
    return 0


def cmd_roc(args: argparse.Namespace) -> int:
    records_path = Path(args.records)
    if not records_path.exists():
        raise KerdockRadarError(f"Records file not found: {records_path}")
    out = args.out or str(records_path.parent)
    records = read_records(str(records_path))
    curve = roc(records, label=records_path.parent.name)
    write_roc(curve, os.path.join(out, "roc.csv"))
    write_roc_trials(roc_trial_rows(records, curve.thresholds), os.path.join(out, "roc_trials.csv"))
    summary = {
        "auc": curve.auc,
        "pfa_target": args.pfa,
        "pd_at_pfa": curve.pd_at_pfa(args.pfa),
        "n_trials": curve.n_trials,
    }
    write_json(summary, os.path.join(out, "roc_summary.json"))
    console.print(
        f"ROC over {curve.n_trials} trials: AUC {curve.auc:.4f}, P_d {summary['pd_at_pfa']:.4f} at P_fa <= {args.pfa}"
    )
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args)
    out = cfg.output_dir

    if args.bound == "kerdock":
        report = verify_kerdock_properties(kerdock_family(cfg.p))
        report.save_to_file(out)
        console.print(f"Kerdock p={cfg.p}: {report.properties}")
        return _check_failure(*_kerdock_failures(report)) if not report.passed else 0

    if args.bound == "bernstein":
        reports: List[TheoryReport] = bernstein_mc(args.m, args.n, trials=args.trials or 10_000, seed=cfg.seed)
    else:
        check = THEORY_CHECKS[args.bound]
        reports = [check(cfg, trials=args.trials or 50, seed=cfg.seed, force=cfg.force)]

    for report in reports:
        report.save_to_file(out)
    console.print(_report_table(f"verify {args.bound}", reports))
    failed_reports = [r for r in reports if not r.passed]
    if failed_reports:
        return _check_failure([r.bound_name for r in failed_reports], [r.to_dict() for r in failed_reports])
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args)
    report = benchmark_forward(cfg, repeats=args.repeats)
    write_json(report.to_dict(), os.path.join(cfg.output_dir, "bench.json"))
    speedup = "n/a" if report.speedup is None else f"{report.speedup:.1f}x"
    console.print(
        f"Fast forward {report.fast_seconds:.3e}s, speedup {speedup}, "
        f"normalized slope {report.normalized_slope:.3f}"
    )
    return 0 if report.passed else _check_failure(["benchmark"], [report.to_dict()])


COMMANDS = {
    "waveforms": cmd_waveforms,
    "simulate": cmd_simulate,
    "roc": cmd_roc,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


def _check_failure(failed: Sequence[str], reports: Sequence[dict]) -> int:
    print(json.dumps({"ok": False, "failed": list(failed), "reports": list(reports)}, default=str))
    return 1


def _failure(error: Exception) -> int:
    print(json.dumps({"ok": False, "error": str(error), "type": type(error).__name__}))
    return 2


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        cli_config.validate()
        return COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, MemoryError) as e:
        logger.error(f"{args.command} failed: {e}")
        return _failure(e)


if __name__ == "__main__":
    sys.exit(main())
