"""
Unit Tests for the Attention Baseline

TESTING APPROACH:
- Causal masking and softmax normalization
- Cached decoding agrees with the parallel block
- KV cache size grows linearly with consumed tokens
"""

import numpy as np
import pytest

from scancap.operations.attention import (
    KVCache,
    attention_block,
    attention_block_step,
    attention_reference,
    attention_weights,
    init_attention_params,
    prefill_cache,
)
from scancap.operations.errors import ShapeError
from scancap.tests.utils import assert_close


@pytest.mark.unit
@pytest.mark.model
class TestAttention:
    """
    Unit tests for causal softmax attention.

    SCOPE: attention_weights, attention_reference, attention_block
    PATTERN: Degenerate weights with known outputs
    """

    def test_single_position_attends_to_itself(self, rng):
        params = init_attention_params(4, rng)
        x = rng.normal(size=(1, 4))

        assert_close(attention_reference(x, params), x @ params.W_v @ params.W_o, 1e-12)

    def test_zero_keys_average_the_prefix(self, rng):
        params = init_attention_params(3, rng)
        params.W_k[:] = 0.0

        weights = attention_weights(rng.normal(size=(4, 3)), params)

        for i in range(4):
            assert_close(weights[i, : i + 1], np.full(i + 1, 1.0 / (i + 1)), 1e-12)
            assert not np.any(weights[i, i + 1 :])

    def test_rows_sum_to_one(self, rng):
        weights = attention_weights(rng.normal(size=(2, 6, 4)), init_attention_params(4, rng))

        assert_close(weights.sum(axis=-1), np.ones((2, 6)), 1e-12)

    def test_is_causal(self, rng):
        params = init_attention_params(4, rng)
        x = rng.normal(size=(6, 4))
        x_changed = x.copy()
        x_changed[3:] = rng.normal(size=(3, 4))

        assert_close(attention_block(x, params)[:3], attention_block(x_changed, params)[:3], 1e-12)

    def test_width_mismatch(self, rng):
        with pytest.raises(ShapeError):
            attention_weights(np.zeros((3, 5)), init_attention_params(4, rng))


@pytest.mark.unit
@pytest.mark.model
class TestCachedDecoding:
    """
    Unit tests for KV-cached decoding.

    SCOPE: KVCache, prefill_cache, attention_step, attention_block_step
    PATTERN: Step-by-step versus parallel
    """

    def test_steps_match_block(self, rng):
        params = init_attention_params(4, rng)
        x = rng.normal(size=(7, 4))
        cache = KVCache(4, capacity=7)

        steps = np.stack([attention_block_step(x_t, cache, params) for x_t in x])

        assert_close(steps, attention_block(x, params), 1e-12)

    def test_prefill_then_step_matches_block(self, rng):
        params = init_attention_params(4, rng)
        params.norm[:] = rng.uniform(0.5, 2.0, size=4)
        x = rng.normal(size=(6, 4))

        cache = prefill_cache(x[:-1], params, capacity=6)
        last = attention_block_step(x[-1], cache, params)

        assert cache.length == 6
        assert_close(last, attention_block(x, params)[-1], 1e-12)

    def test_cache_grows_linearly(self, rng):
        params = init_attention_params(3, rng)
        cache = KVCache(3, capacity=2)

        counts = []
        for x_t in rng.normal(size=(5, 3)):
            attention_block_step(x_t, cache, params)
            counts.append(cache.element_count())

        assert cache.length == 5
        assert counts == [6, 12, 18, 24, 30]
        assert cache.keys.shape[0] >= 5
