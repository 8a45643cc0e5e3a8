"""Command-line entry points: run a scenario, export plot data."""
import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from .artifacts import ArtifactError, export_plotdata
from .scenario import load_scenario
from .tasks import ScenarioRunner
from .utils import AdmissibilityError, DomainError, ScenarioError, configure_logging

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def output_root() -> Path:
    return Path(os.getenv("CONE_CONTACT_OUTPUT_DIR", "output"))


def run_scenario(path, out: Optional[str] = None, seed: Optional[int] = None, step: Optional[float] = None,
                 tol_scale: Optional[float] = None) -> int:
    try:
        scenario = load_scenario(path).with_overrides(seed=seed, step=step, tol_scale=tol_scale)
        output_dir = Path(out) if out else output_root() / scenario.name
        runner = ScenarioRunner(scenario, output_dir)
    except (ScenarioError, AdmissibilityError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = runner.kickoff()
    if summary.passed:
        print(f"{scenario.name}: all {len(summary.outcomes)} tasks passed; artifacts in {output_dir}")
        return EXIT_OK
    print(f"{scenario.name}: tolerance gates failed", file=sys.stderr)
    for line in summary.failure_lines():
        print(f"  - {line}", file=sys.stderr)
    return EXIT_FAILED


def run_export(artifact_dir, plot_dir: Optional[str] = None) -> int:
    try:
        written = export_plotdata(artifact_dir, plot_dir)
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    for path in written:
        print(path)
    return EXIT_OK


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0.0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _add_run_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("scenario", help="scenario TOML file")
    parser.add_argument("--out", help="artifact directory (default: $CONE_CONTACT_OUTPUT_DIR/<name>)")
    parser.add_argument("--seed", type=int, help="override the scenario seed")
    parser.add_argument("--step", type=_positive_float, help="override the integrator step")
    parser.add_argument("--tol-scale", type=_positive_float, help="scale every tolerance by this factor")


def _add_export_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("artifact_dir", help="directory written by a scenario run")
    parser.add_argument("--plot-dir", help="target directory (default: <artifact_dir>/plot)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cone_contact",
                                     description="Cone structures and positive contact paths, checked numerically.")
    parser.add_argument("--log-level", help="overrides CONE_CONTACT_LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)
    _add_run_arguments(commands.add_parser("run", help="run the tasks of a scenario"))
    _add_export_arguments(commands.add_parser("export", help="write plot-ready CSVs from artifacts"))
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    if args.command == "run":
        return run_scenario(args.scenario, args.out, args.seed, args.step, args.tol_scale)
    return run_export(args.artifact_dir, args.plot_dir)


def cli():
    sys.exit(main())


def run_scenario_cli():
    parser = argparse.ArgumentParser(prog="run_scenario", description="Run the tasks of a scenario.")
    _add_run_arguments(parser)
    args = parser.parse_args()
    configure_logging()
    sys.exit(run_scenario(args.scenario, args.out, args.seed, args.step, args.tol_scale))


def export_plotdata_cli():
    parser = argparse.ArgumentParser(prog="export_plotdata", description="Write plot-ready CSVs from artifacts.")
    _add_export_arguments(parser)
    args = parser.parse_args()
    configure_logging()
    sys.exit(run_export(args.artifact_dir, args.plot_dir))
