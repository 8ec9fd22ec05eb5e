import argparse

from scancap.commands.common import CHECKPOINT, add_config_arguments, load_or_make_split, resolve_config
from scancap.operations.training import train
from scancap.store.checkpoint_store import CheckpointFile
from scancap.store.report_store import CsvReport


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("train", help="train the captioner, write checkpoint and loss curve")
    add_config_arguments(parser)
    parser.set_defaults(handler=cli_train)


def cli_train(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    train_scenes, eval_scenes = load_or_make_split(config)
    checkpoint_interface = CheckpointFile(config.output_dir / CHECKPOINT)
    report_interface = CsvReport(config.output_dir)
    result = train(config, train_scenes, eval_scenes, checkpoint_interface, report_interface)
    final = f"{result.losses[-1]:.4f}" if result.losses else "n/a"
    print(f"checkpoint {checkpoint_interface.path} after {len(result.losses)} steps, final loss {final}")
    return 0
