"""
lqr-bench: command-line runner for the benchmark experiments.

    lqr-bench montecarlo --config configs/montecarlo.json --out results.csv
    lqr-bench nondetectable --methods s0,s1,s2,sinf
    lqr-bench scenario --seed 7 --format json
    lqr-bench solve --config configs/single_scalar.json --methods sinf
    lqr-bench schema
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.config import settings
from src.core.constants import LOG_LEVELS, ExperimentKind, OutputFormat, TrialStatus
from src.core.error_response import ExitCodes
from src.core.exceptions import ConfigurationError
from src.core.logging_config import setup_logging
from src.middleware.error_handler import run_guarded
from src.models.schemas import ExperimentConfig
from src.services.experiment_service import ExperimentService, format_summary_table, summarize
from src.services.export_service import ExportService
from src.solvers.registry import get_solver_registry

logger = logging.getLogger(__name__)

COMMANDS = {
    "montecarlo": ExperimentKind.MONTECARLO,
    "nondetectable": ExperimentKind.NONDETECTABLE,
    "scenario": ExperimentKind.SCENARIO,
    "solve": ExperimentKind.SINGLE,
}


def build_parser() -> argparse.ArgumentParser:
    methods_help = ", ".join(
        f"{d['name']} ({d['description']})" for d in get_solver_registry().describe()
    )
    parser = argparse.ArgumentParser(
        prog="lqr-bench",
        description="Stabilizing LQR benchmarks on Leslie population models",
    )
    parser.add_argument(
        "--log-level", type=str.upper, choices=LOG_LEVELS, default=None, help="Override LOG_LEVEL"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, kind in COMMANDS.items():
        p = sub.add_parser(name, help=f"Run the {kind.value} experiment")
        p.add_argument("--config", help="Path to a JSON ExperimentConfig")
        p.add_argument("--seed", type=int, help="Seed (overrides the config)")
        p.add_argument("--out", help="Output path; stdout when omitted")
        p.add_argument("--format", choices=[f.value for f in OutputFormat])
        p.add_argument("--methods", help=f"Comma-separated subset of: {methods_help}")
        p.add_argument("--trials", type=int, help="Number of trials")
        p.add_argument(
            "--timing", action="store_true", help="Record wall time (output is no longer reproducible)"
        )

    sub.add_parser("schema", help="Print the JSON schema of the experiment config")
    return parser


def _read_config_file(path: str) -> Dict[str, Any]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config file is not valid JSON: {e}")


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """File values first, then command-line overrides; validated before any computation."""
    kind = COMMANDS[args.command]
    data: Dict[str, Any] = _read_config_file(args.config) if args.config else {}
    if not isinstance(data, dict):
        raise ConfigurationError("config file must contain a JSON object")
    if data.setdefault("kind", kind.value) != kind.value:
        raise ConfigurationError(f"config is for '{data['kind']}', not '{kind.value}'")

    if args.seed is not None:
        data["seed"] = args.seed
    if args.methods:
        data["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if args.format:
        data["format"] = args.format
    if args.out:
        data["output"] = args.out
    if args.trials is not None:
        data["trials"] = args.trials
    if args.timing:
        data["record_timing"] = True
    data.setdefault("seed", settings.DEFAULT_SEED)
    return ExperimentConfig.model_validate(data)


def _run_experiment(args: argparse.Namespace) -> int:
    config = load_config(args)
    service = ExperimentService(config)
    exporter = ExportService(record_timing=config.record_timing)

    if config.kind == ExperimentKind.SINGLE:
        report = service.run_single()
        exporter.write(exporter.report_to_json(report), config.output)
        if report.status == TrialStatus.NOT_DETECTABLE:
            return ExitCodes.NOT_DETECTABLE
        return ExitCodes.SUCCESS

    records = service.run()
    summary = summarize(config.kind, records)
    exporter.write(exporter.render(records, config.format, summary), config.output)
    sys.stderr.write(format_summary_table(summary) + "\n")
    return ExitCodes.SUCCESS


def _print_schema() -> int:
    sys.stdout.write(json.dumps(ExperimentConfig.model_json_schema(), indent=2) + "\n")
    return ExitCodes.SUCCESS


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = args.log_level or settings.LOG_LEVEL
    setup_logging(
        level=getattr(logging, level),
        json_format=settings.LOG_JSON,
        log_file=settings.LOG_FILE,
    )

    if args.command == "schema":
        return run_guarded("schema", _print_schema)
    return run_guarded(args.command, lambda: _run_experiment(args))


if __name__ == "__main__":
    sys.exit(main())
