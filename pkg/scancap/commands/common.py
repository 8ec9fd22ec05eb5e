import argparse
from pathlib import Path

from scancap.operations.config import RunConfig, load_config, write_config_echo
from scancap.operations.synthdata import SyntheticScene, make_split
from scancap.store.manifest_store import ManifestFile

TRAIN_MANIFEST = "train_manifest.csv"
EVAL_MANIFEST = "eval_manifest.csv"
CHECKPOINT = "model.ckpt"


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="TOML file with dotted keys")
    parser.add_argument("--seed", type=int, help="shorthand for --set train.seed=N")
    parser.add_argument("--out", metavar="DIR", help="output directory (output.dir)")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one key, e.g. --set train.lr=3e-4 (repeatable)",
    )


def resolve_config(args: argparse.Namespace, base: str | None = None) -> RunConfig:
    """Validate the configuration and echo it into the output directory."""
    config = load_config(args.config, args.overrides, args.seed, args.out, base=base)
    write_config_echo(config, config.output_dir)
    return config


def checkpoint_path(args: argparse.Namespace) -> Path:
    if args.checkpoint:
        return Path(args.checkpoint)
    return Path(args.out or load_config(args.config, args.overrides).output.dir) / CHECKPOINT


def load_or_make_split(config: RunConfig) -> tuple[list[SyntheticScene], list[SyntheticScene]]:
    """Reuse the manifests in the output directory, generating them when absent."""
    data = config.data
    train_file = ManifestFile(config.output_dir / TRAIN_MANIFEST)
    eval_file = ManifestFile(config.output_dir / EVAL_MANIFEST)
    if train_file.path.exists() and eval_file.path.exists():
        return train_file.read_all()[0], eval_file.read_all()[0]
    train, held_out = make_split(
        data.n_train, data.n_eval, data.seed, data.frames, data.height, data.width
    )
    train_file.write(train, data.frames, data.height, data.width)
    eval_file.write(held_out, data.frames, data.height, data.width)
    return train, held_out
