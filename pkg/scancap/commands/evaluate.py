import argparse

from scancap.commands.common import (
    EVAL_MANIFEST,
    add_config_arguments,
    checkpoint_path,
    resolve_config,
)
from scancap.operations.tokenizer import Vocabulary
from scancap.operations.training import EVAL_COLUMNS, evaluate, make_encoders, restore_captioner
from scancap.store.checkpoint_store import CheckpointFile
from scancap.store.manifest_store import ManifestFile
from scancap.store.report_store import CsvReport


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("eval", help="corpus BLEU/ROUGE-L of a checkpoint on a manifest")
    add_config_arguments(parser)
    parser.add_argument("--checkpoint", metavar="PATH", help="defaults to <out>/model.ckpt")
    parser.add_argument("--manifest", metavar="PATH", help="defaults to <out>/eval_manifest.csv")
    parser.set_defaults(handler=cli_evaluate)


def cli_evaluate(args: argparse.Namespace) -> int:
    checkpoint_interface = CheckpointFile(checkpoint_path(args))
    _, echo = checkpoint_interface.load()
    config = resolve_config(args, base=echo)
    manifest = ManifestFile(args.manifest or config.output_dir / EVAL_MANIFEST)
    scenes, _ = manifest.read_all()
    vocab = Vocabulary()
    params = restore_captioner(config, vocab, checkpoint_interface)
    summary = evaluate(params, scenes, config, make_encoders(config), vocab)
    path = CsvReport(config.output_dir).write("eval.csv", EVAL_COLUMNS, summary.rows)
    print(
        f"bleu1 {summary.bleu1:.4f} bleu4 {summary.bleu4:.4f} rouge_l {summary.rouge_l:.4f} "
        f"event_bleu1 {summary.event_bleu1:.4f} ({len(scenes)} scenes, {path})"
    )
    return 0
