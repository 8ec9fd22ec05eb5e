import argparse
import logging

from scancap.commands.common import (
    EVAL_MANIFEST,
    TRAIN_MANIFEST,
    add_config_arguments,
    load_or_make_split,
    resolve_config,
)

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "make-data", help="write the train and eval manifests of the synthetic split"
    )
    add_config_arguments(parser)
    parser.set_defaults(handler=cli_make_data)


def cli_make_data(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    train, held_out = load_or_make_split(config)
    print(f"{len(train)} train scenes -> {config.output_dir / TRAIN_MANIFEST}")
    print(f"{len(held_out)} eval scenes -> {config.output_dir / EVAL_MANIFEST}")
    return 0
