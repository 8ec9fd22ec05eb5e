import argparse

from scancap.commands.common import add_config_arguments, load_or_make_split, resolve_config
from scancap.operations.training import ABLATION_COLUMNS, ablate
from scancap.store.report_store import CsvReport


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("ablate", help="train every variant of ablate.grid for each seed")
    add_config_arguments(parser)
    parser.set_defaults(handler=cli_ablate)


def cli_ablate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    train_scenes, eval_scenes = load_or_make_split(config)
    rows = ablate(config, train_scenes, eval_scenes, CsvReport(config.output_dir))
    print(",".join(ABLATION_COLUMNS))
    for row in rows:
        print(",".join(_cell(row[column]) for column in ABLATION_COLUMNS))
    return 0


def _cell(value) -> str:
    return f"{value:.4f}" if isinstance(value, float) else str(value)
