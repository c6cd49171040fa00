import argparse
import logging
import sys
from typing import List, Optional

from src import __version__
from src.conf.config import settings
from src.repository.config_repo import repo_read_config, scenario_from_mapping
from src.repository.results_repo import repo_write_table
from src.routes.presets import PRESETS, run_preset
from src.routes.scenarios import run
from src.services.errors import EXIT_OK, EXIT_VALIDATION, MetrologyError, PreconditionError

logger = logging.getLogger("fock_metrology")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fock-metrology",
        description="Fisher information, MLE error curves and Gaussian comparisons for Fock-state probes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--list-presets", action="store_true", help="print the available presets and exit")
    commands = parser.add_subparsers(dest="command")

    run_parser = commands.add_parser("run", help="run a preset or a scenario file")
    source = run_parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--preset", help="figure preset name")
    source.add_argument("--config", help="scenario file with `key = value` lines")
    run_parser.add_argument("--out", default="-", help="CSV output path, '-' for stdout")
    run_parser.add_argument("--seed", type=int, help="override the scenario seed")
    run_parser.add_argument("--trials", type=int, help="override the number of Monte Carlo trials")
    run_parser.add_argument("--threads", type=int, help="worker processes (default FOCK_METROLOGY_THREADS)")
    return parser


def configure_logging() -> None:
    logging.basicConfig(
        level=settings.log_level.upper(),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def list_presets() -> str:
    return "\n".join(f"{name:<16} {preset.description}" for name, preset in PRESETS.items())


def execute(args: argparse.Namespace):
    if args.threads is not None:
        if args.threads < 1:
            raise PreconditionError("--threads must be >= 1")
        settings.threads = args.threads
    if args.preset:
        return run_preset(args.preset, seed=args.seed, trials=args.trials)
    scenario = repo_read_config(args.config)
    overrides = {key: value for key, value in (("seed", args.seed), ("trials", args.trials)) if value is not None}
    if overrides:
        scenario = scenario_from_mapping({**scenario.echo(), **overrides})
    return run(scenario)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Точка входа CLI.

    Returns:
        int: 0 при успехе, 2 при ошибке проверки входных данных,
             3 при отсутствии численной сходимости.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging()
    if args.list_presets:
        print(list_presets())
        return EXIT_OK
    if args.command != "run":
        parser.print_usage(sys.stderr)
        return EXIT_VALIDATION
    try:
        table = execute(args)
        repo_write_table(table, args.out)
    except MetrologyError as exc:
        logger.error("%s", exc.detail)
        return exc.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
