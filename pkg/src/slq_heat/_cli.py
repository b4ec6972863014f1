"""Command-line entry point: ``slqheat {rates,gd,crosscheck,describe}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import subprocess
import tempfile
import time
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import IO

from slq_heat._config import (
    CROSSCHECK_EXPERIMENT,
    GD_EXPERIMENT,
    RATE_EXPERIMENTS,
    ExperimentSpec,
    load_config,
)
from slq_heat._constants import CSV_HEADER
from slq_heat._errors import ConfigError, InvalidArgumentError, SlqHeatError
from slq_heat._renderer import format_cell
from slq_heat._runner import Report, run_experiment
from slq_heat._types import RunInfo

logger = logging.getLogger("slq_heat")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_ACCEPTANCE = 3

SUBCOMMAND_EXPERIMENTS: dict[str, Callable[[str], bool]] = {
    "rates": lambda experiment: experiment in RATE_EXPERIMENTS,
    "gd": lambda experiment: experiment == GD_EXPERIMENT,
    "crosscheck": lambda experiment: experiment == CROSSCHECK_EXPERIMENT,
    "describe": lambda experiment: True,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slqheat",
        description="Convergence and optimality experiments for stochastic LQ "
        "control of the heat equation.",
    )
    subcommands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("rates", "run a convergence-rate ladder"),
        ("gd", "run gradient descent against the Riccati optimum"),
        ("crosscheck", "compare all solvers on a small problem"),
        ("describe", "print the fully resolved configuration"),
    ):
        sub = subcommands.add_parser(name, help=help_text)
        sub.add_argument("--config", required=True, help="experiment JSON file")
        sub.add_argument("--seed", type=int, help="override the master seed")
        sub.add_argument(
            "--out", help="CSV output path; a .json sidecar is written next to it"
        )
        sub.add_argument(
            "--threads", type=int, help="worker threads for independent levels"
        )
        sub.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def _version() -> str:
    """``git describe`` of the working tree, else the installed package version."""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            capture_output=True,
            text=True,
            check=False,
            cwd=Path(__file__).resolve().parent,
        )
    except OSError:
        result = None
    if result is not None and result.returncode == 0 and result.stdout.strip():
        return result.stdout.strip()
    from slq_heat import __version__

    return __version__


def _write_atomic(path: Path, write: Callable[[IO[str]], None]) -> None:
    """Write through a temporary file in the target directory, then rename it."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", newline="", dir=path.parent, delete=False, suffix=".tmp"
    ) as handle:
        write(handle)
    os.replace(handle.name, path)


def write_results(
    report: Report, spec: ExperimentSpec, path: Path, wall_time: float
) -> None:
    """CSV rows in ``CSV_HEADER`` order plus a JSON sidecar with run metadata."""

    def write_csv(handle: IO[str]) -> None:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in report.rows():
            cells = [row[column] for column in CSV_HEADER]  # type: ignore[literal-required]
            writer.writerow([format_cell(cell) for cell in cells])

    info = RunInfo(
        config=spec.to_config(),
        version=_version(),
        wall_time_seconds=wall_time,
        passed=report.passed,
    )

    def write_sidecar(handle: IO[str]) -> None:
        json.dump(info, handle, indent=2, sort_keys=True)

    _write_atomic(path, write_csv)
    _write_atomic(path.with_suffix(".json"), write_sidecar)
    logger.info("Wrote %s and %s", path, path.with_suffix(".json"))


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        spec = load_config(args.config).with_overrides(
            seed=args.seed, output=args.out, threads=args.threads
        )
        if not SUBCOMMAND_EXPERIMENTS[args.command](spec.experiment):
            raise ConfigError(
                f"experiment {spec.experiment!r} cannot run under '{args.command}'"
            )
    except ConfigError as exc:
        logger.error("Configuration error: %s", exc)
        return EXIT_CONFIG

    if args.command == "describe":
        print(json.dumps(spec.to_config(), indent=2, sort_keys=True))
        return EXIT_OK

    started = time.perf_counter()
    try:
        report = run_experiment(spec)
    except InvalidArgumentError as exc:
        logger.error("Invalid experiment: %s", exc)
        return EXIT_CONFIG
    except SlqHeatError as exc:
        logger.error("Experiment failed: %s", exc)
        return EXIT_FAILURE
    wall_time = time.perf_counter() - started

    output = Path(spec.output or f"slqheat-{spec.experiment}.csv")
    write_results(report, spec, output, wall_time)
    if not report.passed:
        logger.warning("Acceptance checks failed for %s", spec.experiment)
        return EXIT_ACCEPTANCE
    logger.info("All acceptance checks passed for %s", spec.experiment)
    return EXIT_OK
