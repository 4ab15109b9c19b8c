#!/usr/bin/env python3
import argparse
import asyncio
import os
import sys

from fusion_framework.analysis.analyzer import analyze_results
from fusion_framework.config import load_config, with_overrides
from fusion_framework.core.errors import InputError, PipelineStageError
from fusion_framework.core.runner import run_pipeline
from fusion_framework.scenarios.base_scenario import load_scenario
from fusion_framework.scenarios.generator import generate_scenario, write_scenario
from utils import (
    build_parser,
    console,
    enable_default_logger,
    error_console,
)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_PIPELINE_FAILURE = 2


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data-dir", default="data", help="Data directory; default: %(default)s")
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--seed", type=int, help="Scenario seed (overrides the config file)")
    parser.add_argument("--scenario", help="Scenario name (overrides the config file)")


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser("BAN Telemetry Fusion Platform")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "Generate a synthetic scenario into the data directory"),
        ("run", "Run the fusion pipeline on the data directory"),
        ("report", "Summarize the report bundle of the data directory"),
    ):
        add_common_arguments(subparsers.add_parser(name, help=help_text))
    return parser.parse_args(argv)


def simulate(args, config) -> None:
    scenario = load_scenario(config.simulation.scenario)
    spec = scenario.get_spec(config.simulation.seed, config.simulation.start_epoch_ms)
    console.print(
        f"\n--- Simulating scenario: [bold cyan]{spec.name}[/bold cyan] "
        f"(seed {spec.seed}, {spec.subjects} subjects) ---"
    )
    data = generate_scenario(spec)
    written = write_scenario(data, args.data_dir, derived_dirs=(config.storage.central_dir, "report"))
    console.print(f"Wrote {len(written)} files to [green]{args.data_dir}[/green]")


async def run(args, config) -> None:
    console.print(f"\n--- Running pipeline on [bold cyan]{args.data_dir}[/bold cyan] ---")
    bundle = await run_pipeline(args.data_dir, config)
    labels = ", ".join(s.label.value for s in bundle.segments) or "none"
    console.print(f"Segments: [bold]{labels}[/bold]")


def report(args) -> None:
    report_dir = os.path.join(args.data_dir, "report")
    console.print(f"--- Running Analysis on {report_dir} ---")
    analyze_results(report_dir)


async def main(argv=None) -> int:
    args = parse_args(argv)
    enable_default_logger(args.log_file)

    try:
        config = with_overrides(load_config(args.config), seed=args.seed, scenario=args.scenario)
        if args.command == "simulate":
            simulate(args, config)
        elif args.command == "run":
            await run(args, config)
        else:
            report(args)
    except InputError as e:
        error_console.print(f"[bold red]Input error: {e}[/bold red]")
        return EXIT_INPUT_ERROR
    except PipelineStageError as e:
        error_console.print(f"[bold red]Pipeline failed in stage '{e.stage}': {e.cause}[/bold red]")
        return EXIT_PIPELINE_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
