import argparse

from scancap.commands.common import EVAL_MANIFEST, add_config_arguments, checkpoint_path, resolve_config
from scancap.operations.captioner import caption_features
from scancap.operations.tokenizer import Vocabulary
from scancap.operations.training import features_of, make_encoders, restore_captioner
from scancap.store.checkpoint_store import CheckpointFile
from scancap.store.manifest_store import ManifestFile


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("generate", help="print greedy captions for manifest sample seeds")
    add_config_arguments(parser)
    parser.add_argument("sample_seeds", type=int, nargs="+", metavar="SAMPLE_SEED")
    parser.add_argument("--checkpoint", metavar="PATH", help="defaults to <out>/model.ckpt")
    parser.add_argument("--manifest", metavar="PATH", help="defaults to <out>/eval_manifest.csv")
    parser.set_defaults(handler=cli_generate)


def cli_generate(args: argparse.Namespace) -> int:
    checkpoint_interface = CheckpointFile(checkpoint_path(args))
    _, echo = checkpoint_interface.load()
    config = resolve_config(args, base=echo)
    manifest = ManifestFile(args.manifest or config.output_dir / EVAL_MANIFEST)
    scenes = [manifest.read_by_seed(seed) for seed in args.sample_seeds]
    vocab = Vocabulary()
    params = restore_captioner(config, vocab, checkpoint_interface)
    features = features_of(scenes, config, make_encoders(config))
    captions = caption_features(features, params, config.ahbs, vocab, config.eval.max_len)
    for scene, caption in zip(scenes, captions):
        print(f"{scene.sample_seed}\t{caption}")
    return 0
