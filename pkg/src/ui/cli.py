#!/usr/bin/env python3
"""riskmine command line: synth, pipeline, stats and report subcommands."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ..cohort.io import write_events, write_roster
from ..core.config import load_config
from ..core.errors import MissingInputError, RiskmineError, UsageError
from ..core.logging import setup_logging
from ..core.storage import BundleWriter
from ..core.types import TestResult
from ..pipeline.orchestrator import run_pipeline
from ..pipeline.reports import summarize_bundle
from ..stats.hypothesis import (
    h_from_ss, mann_whitney, mann_whitney_from_u, pearson_chi2, scheirer_ray_hare, welch_t, welch_t_samples,
    wilcoxon_signed_rank,
)
from ..stats.multiple import bh_adjust
from ..stats.power import PowerSpec, power_report
from ..synth.generator import generate_cohort
from ..synth.models import GeneratorConfig
from ..synth.summary import emit_summary

logger = logging.getLogger(__name__)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Not JSON serializable: {type(value).__name__}")


def emit(result: Dict[str, Any]) -> None:
    """Print one compact JSON line to stdout."""
    print(json.dumps(result, separators=(",", ":"), default=_json_default))


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"Expected comma-separated numbers, got {text!r}") from e


def _test_payload(name: str, result: TestResult) -> Dict[str, Any]:
    return {"test": name, "statistic": result.statistic, "df": result.df, "p_value": result.p_value,
            "auxiliary": result.auxiliary}


def _read_csv(path: str, columns: Sequence[str]) -> pd.DataFrame:
    if not Path(path).exists():
        raise MissingInputError(f"CSV not found: {path}")
    frame = pd.read_csv(path)
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise UsageError(f"{path} has no column(s) {', '.join(missing)}; found {', '.join(frame.columns)}")
    return frame


def _two_groups(args: argparse.Namespace) -> tuple:
    """Split ``--value`` by ``--group`` into the two samples, ordered by ``--groups`` or sorted."""
    if not (args.value and args.group):
        raise UsageError("--csv needs --value and --group")
    frame = _read_csv(args.csv, [args.value, args.group])
    groups = args.groups.split(",") if args.groups else sorted(frame[args.group].astype(str).unique())
    if len(groups) != 2:
        raise UsageError(f"Expected exactly two groups in {args.group}, found {len(groups)}")
    keys = frame[args.group].astype(str)
    return tuple(frame.loc[keys == g, args.value].to_numpy(dtype=float) for g in groups)


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"Missing {', '.join(missing)}")


def run_stats(args: argparse.Namespace) -> Dict[str, Any]:
    """Dispatch one statistical test from summary flags or a CSV."""
    test = args.test
    if test == "welch":
        if args.csv:
            a, b = _two_groups(args)
            return _test_payload(test, welch_t_samples(a, b))
        _require(args, "mean1", "sd1", "n1", "mean2", "sd2", "n2")
        return _test_payload(test, welch_t(args.mean1, args.sd1, args.n1, args.mean2, args.sd2, args.n2))

    if test == "chi2":
        if args.csv:
            if not (args.row and args.col):
                raise UsageError("--csv needs --row and --col")
            frame = _read_csv(args.csv, [args.row, args.col])
            table = pd.crosstab(frame[args.row], frame[args.col]).to_numpy()
            return _test_payload(test, pearson_chi2(table))
        _require(args, "table")
        return _test_payload(test, pearson_chi2([_floats(r) for r in args.table.split(";")]))

    if test == "mwu":
        if args.csv:
            a, b = _two_groups(args)
            return _test_payload(test, mann_whitney(a, b, tie_correction=args.tie_correction))
        _require(args, "u", "n1", "n2")
        return _test_payload(test, mann_whitney_from_u(args.u, args.n1, args.n2))

    if test == "wilcoxon":
        if args.csv:
            if not (args.first and args.second):
                raise UsageError("--csv needs --first and --second")
            frame = _read_csv(args.csv, [args.first, args.second])
            diffs = (frame[args.first] - frame[args.second]).to_numpy(dtype=float)
        else:
            _require(args, "diffs")
            diffs = np.array(_floats(args.diffs))
        return _test_payload(test, wilcoxon_signed_rank(diffs))

    if test == "srh":
        if args.csv:
            if not (args.value and args.factor_a and args.factor_b):
                raise UsageError("--csv needs --value, --factor-a and --factor-b")
            frame = _read_csv(args.csv, [args.value, args.factor_a, args.factor_b])
            results = scheirer_ray_hare(frame[args.value].to_numpy(dtype=float),
                                        frame[args.factor_a].astype(str).to_numpy(),
                                        frame[args.factor_b].astype(str).to_numpy())
            return {"test": test, "results": [_test_payload(test, r) for r in results]}
        _require(args, "ss", "ms_total", "df")
        return _test_payload(test, h_from_ss(args.ss, args.ms_total, args.df))

    if test == "bh":
        if args.csv:
            if not args.column:
                raise UsageError("--csv needs --column")
            p = _read_csv(args.csv, [args.column])[args.column].to_numpy(dtype=float)
        else:
            _require(args, "p")
            p = np.array(_floats(args.p))
        adjusted = bh_adjust(p)
        return {"test": test, "adjusted": adjusted, "rejected": [q <= args.alpha for q in adjusted],
                "alpha": args.alpha}

    if test == "power":
        spec = PowerSpec(odds_ratio=args.odds_ratio, alpha=args.alpha, power=args.power, p0=args.p0,
                         r2_other=args.r2)
        report = power_report(spec)
        return {
            "test": test, **report.model_dump(),
            "note": f"computed n={report.required_n} vs reference subsample size {report.reference_n}",
        }

    raise UsageError(f"Unknown test: {test}")


def run_synth(args: argparse.Namespace) -> Dict[str, Any]:
    """Generate a cohort and write its files atomically."""
    config = load_config(args.config)
    generator = config.synth or GeneratorConfig()
    updates: Dict[str, Any] = {}
    if args.n_shoppers is not None:
        updates["n_shoppers"] = args.n_shoppers
    if args.seed is not None:
        updates["seed"] = args.seed
    generator = GeneratorConfig(**{**generator.model_dump(), **updates})
    cohort = generate_cohort(generator, config.effects, master_seed=config.seed)
    with BundleWriter(args.out) as out:
        out.write_with("events.jsonl", lambda p: write_events(p, cohort.events))
        out.write_with("roster.csv", lambda p: write_roster(p, cohort.roster))
        out.write_csv("truth.csv", cohort.truth)
        out.write_csv("truth_labels.csv", cohort.labels)
        out.write_csv("summary.csv", emit_summary(cohort.events, cohort.roster, generator.window))
        out.manifest.update({"tool": "riskmine", "stage": "synth", "seed": cohort.seed})
    return {"out": str(args.out), "seed": cohort.seed, "shoppers": len(cohort.roster), "events": len(cohort.events)}


def run_pipeline_command(args: argparse.Namespace) -> Dict[str, Any]:
    config = load_config(args.config)
    updates: Dict[str, Any] = {}
    if args.out:
        updates["output_dir"] = args.out
    if args.threads is not None:
        updates["threads"] = args.threads
    if args.seed is not None:
        updates["seed"] = args.seed
    if updates:
        config = config.model_validate({**config.model_dump(), **updates})
    return run_pipeline(config).model_dump()


def run_report(args: argparse.Namespace) -> Dict[str, Any]:
    summary = summarize_bundle(args.bundle)
    if args.plots_dir:
        from .plots import plot_cost_sweep, plot_roc
        out = Path(args.plots_dir)
        out.mkdir(parents=True, exist_ok=True)
        bundle = Path(args.bundle)
        plot_roc(pd.read_csv(bundle / "roc_points.csv"), pd.read_csv(bundle / "baseline_overlay.csv"),
                 out / "roc.svg")
        plot_cost_sweep(pd.read_csv(bundle / "cost_sweep.csv"), out / "cost_sweep.svg")
        summary["plots"] = [str(out / "roc.svg"), str(out / "cost_sweep.svg")]
    return summary


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default="INFO", help="Log level (default: INFO)")
    common.add_argument("--plain-logs", action="store_true", help="Plain text logs instead of JSON")

    parser = argparse.ArgumentParser(
        prog="riskmine",
        description="Lifestyle risk-factor mining and risk prediction for case-control shopper cohorts",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", help="Available commands")

    synth = sub.add_parser("synth", help="Generate a synthetic cohort", parents=[common])
    synth.add_argument("--config", help="JSON config whose synth section drives the generator")
    synth.add_argument("--out", required=True, help="Output directory")
    synth.add_argument("--n-shoppers", type=int, help="Override the number of shoppers")
    synth.add_argument("--seed", type=int, help="Generator seed")

    pipe = sub.add_parser("pipeline", help="Run the full pipeline and write the report bundle", parents=[common])
    pipe.add_argument("--config", help="JSON config (default: configs/demo.json)")
    pipe.add_argument("--out", help="Override the output directory")
    pipe.add_argument("--threads", type=int, help="Worker pool size")
    pipe.add_argument("--seed", type=int, help="Master seed")

    stats = sub.add_parser("stats", help="Run one statistical test", parents=[common])
    stats.add_argument("test", choices=["welch", "chi2", "mwu", "wilcoxon", "srh", "bh", "power"])
    stats.add_argument("--csv", help="Read samples from a CSV instead of summary flags")
    stats.add_argument("--value", help="Value column")
    stats.add_argument("--group", help="Group column (two groups)")
    stats.add_argument("--groups", help="Comma-separated group order, first group is sample 1")
    stats.add_argument("--row", help="Row factor column for chi2")
    stats.add_argument("--col", help="Column factor column for chi2")
    stats.add_argument("--first", help="First paired column for wilcoxon")
    stats.add_argument("--second", help="Second paired column for wilcoxon")
    stats.add_argument("--factor-a", help="First factor column for srh")
    stats.add_argument("--factor-b", help="Second factor column for srh")
    stats.add_argument("--column", help="p-value column for bh")
    stats.add_argument("--mean1", type=float)
    stats.add_argument("--sd1", type=float)
    stats.add_argument("--n1", type=int)
    stats.add_argument("--mean2", type=float)
    stats.add_argument("--sd2", type=float)
    stats.add_argument("--n2", type=int)
    stats.add_argument("--table", help="Contingency table, rows split by ';', cells by ','")
    stats.add_argument("--u", type=float, help="Mann-Whitney U of sample 1")
    stats.add_argument("--tie-correction", action="store_true", help="Tie-corrected Mann-Whitney variance")
    stats.add_argument("--diffs", help="Comma-separated paired differences")
    stats.add_argument("--ss", type=float, help="Sum of squares on ranks")
    stats.add_argument("--ms-total", type=float, help="Total mean square on ranks")
    stats.add_argument("--df", type=int, help="Effect degrees of freedom")
    stats.add_argument("--p", help="Comma-separated p-values")
    stats.add_argument("--or", dest="odds_ratio", type=float, default=1.49, help="Odds ratio (power)")
    stats.add_argument("--alpha", type=float, default=0.05, help="Significance or FDR level")
    stats.add_argument("--power", type=float, default=0.8, help="Target power")
    stats.add_argument("--p0", type=float, default=0.5, help="Baseline event probability")
    stats.add_argument("--r2", type=float, default=0.8, help="R-squared of the covariate on the others")

    report = sub.add_parser("report", help="Summarize a report bundle", parents=[common])
    report.add_argument("--bundle", required=True, help="Bundle directory")
    report.add_argument("--plots-dir", help="Render SVG plots into this directory")
    return parser


COMMANDS = {
    "synth": run_synth,
    "pipeline": run_pipeline_command,
    "stats": run_stats,
    "report": run_report,
}


def main(argv: Optional[List[str]] = None) -> None:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help()
        sys.exit(2)

    setup_logging(args.log_level, structured=not args.plain_logs)

    try:
        emit(COMMANDS[args.command](args))
    except RiskmineError as e:
        logger.error(f"{type(e).__name__}: {e}", extra={"stage": args.command})
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(e.exit_code)
    except ValidationError as e:
        print(f"Error: invalid arguments: {e}", file=sys.stderr)
        sys.exit(UsageError.exit_code)


if __name__ == "__main__":
    main()
