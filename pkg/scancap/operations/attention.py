"""Single-head causal softmax attention, the quadratic baseline for benchmarks."""

from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from scancap.operations.errors import ShapeError
from scancap.operations.layers import rmsnorm


@dataclass
class AttentionParams:
    W_q: np.ndarray
    W_k: np.ndarray
    W_v: np.ndarray
    W_o: np.ndarray
    norm: np.ndarray

    @property
    def d(self) -> int:
        return self.W_q.shape[0]


def init_attention_params(d: int, rng: np.random.Generator, dtype=np.float64) -> AttentionParams:
    def proj() -> np.ndarray:
        return (rng.uniform(-1, 1, size=(d, d)) / np.sqrt(d)).astype(dtype)

    return AttentionParams(
        W_q=proj(), W_k=proj(), W_v=proj(), W_o=proj(), norm=np.ones(d, dtype=dtype)
    )


def attention_weights(x: np.ndarray, params: AttentionParams) -> np.ndarray:
    """Causal softmax weights (..., L, L); row i spreads over keys 1..i."""
    if x.shape[-1] != params.d:
        raise ShapeError(f"attention expects width {params.d}, got {x.shape[-1]}")
    L = x.shape[-2]
    q = x @ params.W_q
    k = x @ params.W_k
    scores = (q @ np.swapaxes(k, -1, -2)) / params.d**0.5
    scores[..., np.triu(np.ones((L, L), dtype=bool), k=1)] = -np.inf
    return softmax(scores, axis=-1)


def attention_reference(x: np.ndarray, params: AttentionParams) -> np.ndarray:
    """OutProj(softmax(QK^T / sqrt(d) + causal mask) V) for x (..., L, d)."""
    weights = attention_weights(x, params)
    return (weights @ (x @ params.W_v)) @ params.W_o


def attention_block(x: np.ndarray, params: AttentionParams) -> np.ndarray:
    return x + attention_reference(rmsnorm(x, params.norm), params)


class KVCache:
    """Key/value rows for every consumed position; grows by 2 d per step."""

    def __init__(self, d: int, capacity: int, dtype=np.float64) -> None:
        self.keys = np.empty((capacity, d), dtype=dtype)
        self.values = np.empty((capacity, d), dtype=dtype)
        self.length = 0

    def append(self, k: np.ndarray, v: np.ndarray) -> None:
        if self.length == self.keys.shape[0]:
            grow = max(1, self.keys.shape[0])
            self.keys = np.concatenate([self.keys, np.empty_like(self.keys[:grow])])
            self.values = np.concatenate([self.values, np.empty_like(self.values[:grow])])
        self.keys[self.length] = k
        self.values[self.length] = v
        self.length += 1

    def element_count(self) -> int:
        return 2 * self.length * self.keys.shape[1]


def attention_step(x_t: np.ndarray, cache: KVCache, params: AttentionParams) -> np.ndarray:
    """Decode one position (d,) against the cache, appending its key and value."""
    cache.append(x_t @ params.W_k, x_t @ params.W_v)
    n = cache.length
    scores = cache.keys[:n] @ (x_t @ params.W_q) / params.d**0.5
    weights = softmax(scores)
    return (weights @ cache.values[:n]) @ params.W_o


def attention_block_step(x_t: np.ndarray, cache: KVCache, params: AttentionParams) -> np.ndarray:
    return x_t + attention_step(rmsnorm(x_t, params.norm), cache, params)


def prefill_cache(context: np.ndarray, params: AttentionParams, capacity: int) -> KVCache:
    """Cache for a (L, d) context, keyed on the normalized input as in attention_block_step."""
    cache = KVCache(params.d, max(capacity, len(context)), context.dtype)
    normed = rmsnorm(context, params.norm)
    for k, v in zip(normed @ params.W_k, normed @ params.W_v):
        cache.append(k, v)
    return cache
