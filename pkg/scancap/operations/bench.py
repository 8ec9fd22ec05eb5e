"""Throughput and memory benchmarks: one selective-scan block against one causal
attention block at equal width, in parallel (forward) and recurrent (decode) mode.

Timings exclude warmup runs and video I/O; only compute is measured.
"""

import logging
import statistics
import time
import tracemalloc
from typing import Callable

import numpy as np
from pydantic import BaseModel

from scancap.operations.attention import (
    KVCache,
    attention_block,
    attention_block_step,
    init_attention_params,
    prefill_cache,
)
from scancap.operations.config import BenchSection, RunConfig
from scancap.operations.interface import ReportInterface
from scancap.operations.model import (
    ModelConfig,
    init_block_params,
    init_decode_state,
    init_model_params,
    lm_step,
    mamba_block,
    mamba_block_forward,
    mamba_block_step,
)
from scancap.operations.precision import compute_dtype
from scancap.operations.tokenizer import BOS, Vocabulary

logger = logging.getLogger(__name__)

# a timed run shorter than this many timer ticks is considered unresolved
RESOLUTION_TICKS = 1000
MAX_TRIAL_DOUBLINGS = 4

THROUGHPUT_COLUMNS = (
    "sequence_length",
    "mean_seconds_ssm",
    "std_seconds_ssm",
    "mean_seconds_attention",
    "std_seconds_attention",
    "ssm_state_elements",
    "attention_cache_elements",
    "trials",
)
MEMORY_COLUMNS = ("step", "ssm_state_elements", "attention_cache_elements")
SUMMARY_COLUMNS = ("metric", "value")


class BenchRow(BaseModel):
    sequence_length: int
    mean_seconds_ssm: float
    std_seconds_ssm: float
    mean_seconds_attention: float
    std_seconds_attention: float
    ssm_state_elements: int
    attention_cache_elements: int
    trials: int


class BenchReport(BaseModel):
    rows: list[BenchRow]
    ssm_slope: float
    attention_slope: float
    ssm_decode_tokens_per_second: float
    attention_decode_tokens_per_second: float
    model_decode_tokens_per_second: float

    def summary(self) -> list[dict]:
        return [
            {"metric": name, "value": getattr(self, name)}
            for name in (
                "ssm_slope",
                "attention_slope",
                "ssm_decode_tokens_per_second",
                "attention_decode_tokens_per_second",
                "model_decode_tokens_per_second",
            )
        ]


class MemoryReport(BaseModel):
    rows: list[dict]
    ssm_closed_form: int
    ssm_constant: bool
    attention_linear: bool
    ssm_peak_bytes: int
    attention_peak_bytes: int

    def summary(self) -> list[dict]:
        return [
            {"metric": name, "value": getattr(self, name)}
            for name in (
                "ssm_closed_form",
                "ssm_constant",
                "attention_linear",
                "ssm_peak_bytes",
                "attention_peak_bytes",
            )
        ]


def timer_floor() -> float:
    return time.get_clock_info("perf_counter").resolution * RESOLUTION_TICKS


def time_trials(fn: Callable[[], object], trials: int, warmup: int, label: str) -> list[float]:
    """Wall-clock seconds per call after warmup; doubles the trials while runs are unresolved."""
    for _ in range(warmup):
        fn()
    floor = timer_floor()
    for _ in range(MAX_TRIAL_DOUBLINGS + 1):
        times = []
        for _ in range(trials):
            start = time.perf_counter()
            fn()
            times.append(time.perf_counter() - start)
        if min(times) >= floor:
            break
        logger.warning(
            "%s: %.3g s is below the timer floor %.3g s, raising trials to %d",
            label,
            min(times),
            floor,
            2 * trials,
        )
        trials *= 2
    return times


def loglog_slope(lengths: list[int], seconds: list[float]) -> float:
    """Least-squares slope of log(seconds) against log(length)."""
    slope, _ = np.polyfit(np.log(lengths), np.log(seconds), 1)
    return float(slope)


def block_config(config: RunConfig) -> ModelConfig:
    return config.model.model_copy(update={"d": config.bench.d, "layers": 1})


def ssm_state_elements(model: ModelConfig) -> int:
    """Closed form of the carried decode state: layers * E d * (Q + k_conv)."""
    inner = model.expand * model.d
    return model.layers * inner * (model.state_dim + model.conv_width)


def _decode_rate(step: Callable[[], object], tokens: int) -> float:
    start = time.perf_counter()
    for _ in range(tokens):
        step()
    return tokens / (time.perf_counter() - start)


def bench_throughput(config: RunConfig, report_interface: ReportInterface | None = None) -> BenchReport:
    bench: BenchSection = config.bench
    dtype = compute_dtype()
    rng = np.random.default_rng(config.train.seed)
    model = block_config(config)
    block = init_block_params(model, rng, dtype)
    attention = init_attention_params(bench.d, rng, dtype)

    rows = []
    for L in bench.lengths:
        x = rng.normal(size=(L, bench.d)).astype(dtype)
        ssm_times = time_trials(lambda: mamba_block(x, block), bench.trials, bench.warmup, f"ssm L={L}")
        att_times = time_trials(
            lambda: attention_block(x, attention), bench.trials, bench.warmup, f"attention L={L}"
        )
        row = BenchRow(
            sequence_length=L,
            mean_seconds_ssm=statistics.fmean(ssm_times),
            std_seconds_ssm=statistics.pstdev(ssm_times),
            mean_seconds_attention=statistics.fmean(att_times),
            std_seconds_attention=statistics.pstdev(att_times),
            ssm_state_elements=ssm_state_elements(model),
            attention_cache_elements=2 * bench.d * L,
            trials=len(ssm_times),
        )
        logger.debug("L=%d ssm %.4fs attention %.4fs", L, row.mean_seconds_ssm, row.mean_seconds_attention)
        rows.append(row)

    lengths = [r.sequence_length for r in rows]
    report = BenchReport(
        rows=rows,
        ssm_slope=loglog_slope(lengths, [r.mean_seconds_ssm for r in rows]),
        attention_slope=loglog_slope(lengths, [r.mean_seconds_attention for r in rows]),
        ssm_decode_tokens_per_second=ssm_decode_rate(block, bench, rng, dtype),
        attention_decode_tokens_per_second=attention_decode_rate(attention, bench, rng, dtype),
        model_decode_tokens_per_second=model_decode_rate(config, rng, dtype),
    )
    logger.info(
        "slopes ssm %.2f attention %.2f; decode tokens/s ssm %.0f attention %.0f",
        report.ssm_slope,
        report.attention_slope,
        report.ssm_decode_tokens_per_second,
        report.attention_decode_tokens_per_second,
    )
    if report_interface is not None:
        report_interface.write("bench_throughput.csv", THROUGHPUT_COLUMNS, [r.model_dump() for r in rows])
        report_interface.write("bench_summary.csv", SUMMARY_COLUMNS, report.summary())
    return report


def ssm_decode_rate(block, bench: BenchSection, rng: np.random.Generator, dtype) -> float:
    """Tokens/s of recurrent decoding after a parallel prefill of decode_context positions."""
    context = rng.normal(size=(bench.decode_context, bench.d)).astype(dtype)
    (_, state), _ = mamba_block_forward(context, block, keep=False)
    x_t = rng.normal(size=bench.d).astype(dtype)

    def step():
        nonlocal state
        _, state = mamba_block_step(x_t, state, block)

    return _decode_rate(step, bench.decode_tokens)


def attention_decode_rate(attention, bench: BenchSection, rng: np.random.Generator, dtype) -> float:
    context = rng.normal(size=(bench.decode_context, bench.d)).astype(dtype)
    cache = prefill_cache(context, attention, bench.decode_context + bench.decode_tokens)
    x_t = rng.normal(size=bench.d).astype(dtype)
    return _decode_rate(lambda: attention_block_step(x_t, cache, attention), bench.decode_tokens)


def model_decode_rate(config: RunConfig, rng: np.random.Generator, dtype) -> float:
    """Tokens/s of the full captioning language model stepping one token at a time."""
    params = init_model_params(config.model, len(Vocabulary()), rng, dtype)
    state = init_decode_state(params, (1,))
    token = np.array([BOS])

    def step():
        nonlocal state
        _, state = lm_step(token, state, params)

    return _decode_rate(step, config.bench.decode_tokens)


def bench_memory(config: RunConfig, report_interface: ReportInterface | None = None) -> MemoryReport:
    """Carried decode state per step for the scan stack and the attention stack."""
    bench = config.bench
    dtype = compute_dtype()
    rng = np.random.default_rng(config.train.seed)
    model = config.model.model_copy(update={"d": bench.d})
    params = init_model_params(model, len(Vocabulary()), rng, dtype)
    attention = [init_attention_params(bench.d, rng, dtype) for _ in range(model.layers)]
    x_t = rng.normal(size=bench.d).astype(dtype)

    tracemalloc.start()
    try:
        state = init_decode_state(params)
        tracemalloc.reset_peak()
        base = tracemalloc.get_traced_memory()[0]
        ssm_counts = []
        for _ in range(bench.memory_steps):
            x = x_t
            blocks = []
            for block, block_state in zip(params.blocks, state.blocks):
                x, block_state = mamba_block_step(x, block_state, block)
                blocks.append(block_state)
            state.blocks = blocks
            ssm_counts.append(state.element_count())
        ssm_peak = tracemalloc.get_traced_memory()[1] - base

        caches = [KVCache(bench.d, 1, dtype) for _ in attention]
        tracemalloc.reset_peak()
        base = tracemalloc.get_traced_memory()[0]
        attention_counts = []
        for _ in range(bench.memory_steps):
            x = x_t
            for layer, cache in zip(attention, caches):
                x = attention_block_step(x, cache, layer)
            attention_counts.append(sum(cache.element_count() for cache in caches))
        attention_peak = tracemalloc.get_traced_memory()[1] - base
    finally:
        tracemalloc.stop()

    closed_form = ssm_state_elements(model)
    per_step = 2 * bench.d * model.layers
    report = MemoryReport(
        rows=[
            {"step": i + 1, "ssm_state_elements": s, "attention_cache_elements": a}
            for i, (s, a) in enumerate(zip(ssm_counts, attention_counts))
        ],
        ssm_closed_form=closed_form,
        ssm_constant=all(count == closed_form for count in ssm_counts),
        attention_linear=all(count == per_step * (i + 1) for i, count in enumerate(attention_counts)),
        ssm_peak_bytes=ssm_peak,
        attention_peak_bytes=attention_peak,
    )
    if not (report.ssm_constant and report.attention_linear):
        logger.error(
            "memory law violated: ssm constant=%s attention linear=%s",
            report.ssm_constant,
            report.attention_linear,
        )
    if report_interface is not None:
        report_interface.write("bench_memory.csv", MEMORY_COLUMNS, report.rows)
        report_interface.write("bench_memory_summary.csv", SUMMARY_COLUMNS, report.summary())
    return report
