import argparse

from scancap.commands.common import add_config_arguments, resolve_config
from scancap.operations.bench import bench_memory, bench_throughput
from scancap.store.report_store import CsvReport


def register(subparsers: argparse._SubParsersAction) -> None:
    throughput = subparsers.add_parser(
        "bench-throughput", help="time scan vs attention blocks over bench.lengths"
    )
    add_config_arguments(throughput)
    throughput.set_defaults(handler=cli_bench_throughput)

    memory = subparsers.add_parser("bench-memory", help="decode state size per step")
    add_config_arguments(memory)
    memory.set_defaults(handler=cli_bench_memory)


def cli_bench_throughput(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    report = bench_throughput(config, CsvReport(config.output_dir))
    for row in report.summary():
        print(f"{row['metric']}: {row['value']:.4g}")
    return 0


def cli_bench_memory(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    report = bench_memory(config, CsvReport(config.output_dir))
    for row in report.summary():
        print(f"{row['metric']}: {row['value']}")
    return 0
