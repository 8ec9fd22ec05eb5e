import argparse
import logging
import sys

from scancap.commands import ablate, bench, data, evaluate, generate, train
from scancap.operations.errors import ScancapError

LOG_FORMAT = "%(asctime)s [%(levelname)8s] %(name)s - %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

logger = logging.getLogger("scancap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scancap", description="Selective-scan video captioning at desk scale"
    )
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Include commands
    train.register(subparsers)
    evaluate.register(subparsers)
    generate.register(subparsers)
    ablate.register(subparsers)
    bench.register(subparsers)
    data.register(subparsers)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format=LOG_FORMAT,
        datefmt=LOG_DATE_FORMAT,
    )
    try:
        return args.handler(args)
    except ScancapError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
