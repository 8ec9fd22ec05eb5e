"""Elementwise and affine building blocks with their adjoints.

All functions accept arbitrary leading batch dimensions; the feature axis is
last and, where present, the time axis is second to last.
"""

import numpy as np
from scipy.special import expit

from scancap.operations.errors import InputError, ShapeError
from scancap.operations.records import Record, expect

RMS_EPS = 1e-5


def _flat(a: np.ndarray) -> np.ndarray:
    return a.reshape(-1, a.shape[-1])


def linear_forward(
    x: np.ndarray, W: np.ndarray, b: np.ndarray | None = None
) -> tuple[np.ndarray, Record]:
    if x.shape[-1] != W.shape[0]:
        raise ShapeError(f"linear expects width {W.shape[0]}, got {x.shape[-1]}")
    y = x @ W
    if b is not None:
        y = y + b
    return y, Record("linear", {"x": x, "W": W, "has_bias": b is not None})


def linear(x: np.ndarray, W: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    return linear_forward(x, W, b)[0]


def linear_backward(
    dy: np.ndarray, record: Record
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Returns (dx, dW, db); db is None for bias-free layers."""
    saved = expect(record, "linear")
    x, W = saved["x"], saved["W"]
    dW = _flat(x).T @ _flat(dy)
    db = _flat(dy).sum(axis=0) if saved["has_bias"] else None
    return dy @ W.T, dW, db


def rmsnorm_forward(x: np.ndarray, scale: np.ndarray) -> tuple[np.ndarray, Record]:
    inv = 1.0 / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + RMS_EPS)
    x_hat = x * inv
    return x_hat * scale, Record("rmsnorm", {"x_hat": x_hat, "inv": inv, "scale": scale})


def rmsnorm(x: np.ndarray, scale: np.ndarray) -> np.ndarray:
    return rmsnorm_forward(x, scale)[0]


def rmsnorm_backward(dy: np.ndarray, record: Record) -> tuple[np.ndarray, np.ndarray]:
    saved = expect(record, "rmsnorm")
    x_hat, inv, scale = saved["x_hat"], saved["inv"], saved["scale"]
    d_scale = _flat(dy * x_hat).sum(axis=0)
    g = dy * scale
    dx = inv * (g - x_hat * np.mean(g * x_hat, axis=-1, keepdims=True))
    return dx, d_scale


def silu_forward(x: np.ndarray) -> tuple[np.ndarray, Record]:
    s = expit(x)
    return x * s, Record("silu", {"x": x, "s": s})


def silu(x: np.ndarray) -> np.ndarray:
    return x * expit(x)


def silu_backward(dy: np.ndarray, record: Record) -> np.ndarray:
    saved = expect(record, "silu")
    x, s = saved["x"], saved["s"]
    return dy * s * (1.0 + x * (1.0 - s))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def softplus_inverse(y: np.ndarray) -> np.ndarray:
    return y + np.log(-np.expm1(-y))


def causal_conv_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, Record]:
    """Depthwise causal convolution along time: x (..., L, C), w (k, C), b (C)."""
    k, C = w.shape
    if x.shape[-1] != C:
        raise ShapeError(f"conv expects {C} channels, got {x.shape[-1]}")
    L = x.shape[-2]
    pad = np.zeros(x.shape[:-2] + (k - 1, C), dtype=x.dtype)
    xp = np.concatenate([pad, x], axis=-2)
    y = np.broadcast_to(b, x.shape).copy()
    for j in range(k):
        y += w[j] * xp[..., j : j + L, :]
    return y, Record("causal_conv", {"xp": xp, "w": w, "L": L})


def causal_conv(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return causal_conv_forward(x, w, b)[0]


def causal_conv_backward(
    dy: np.ndarray, record: Record
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dw, db)."""
    saved = expect(record, "causal_conv")
    xp, w, L = saved["xp"], saved["w"], saved["L"]
    k = w.shape[0]
    dxp = np.zeros_like(xp, dtype=dy.dtype)
    dw = np.empty(w.shape, dtype=dy.dtype)
    for j in range(k):
        dxp[..., j : j + L, :] += dy * w[j]
        dw[j] = _flat(dy * xp[..., j : j + L, :]).sum(axis=0)
    db = _flat(dy).sum(axis=0)
    return dxp[..., k - 1 :, :], dw, db


def causal_conv_step(
    x_t: np.ndarray, window: np.ndarray, w: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One decode step; `window` (..., k, C) holds the last k inputs, oldest first."""
    window = np.concatenate([window[..., 1:, :], x_t[..., None, :]], axis=-2)
    return np.einsum("...kc,kc->...c", window, w) + b, window


def embed_forward(ids: np.ndarray, table: np.ndarray) -> tuple[np.ndarray, Record]:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise InputError(f"token id outside vocabulary of size {table.shape[0]}")
    return table[ids], Record("embed", {"ids": ids, "rows": table.shape[0]})


def embed_backward(dy: np.ndarray, record: Record) -> np.ndarray:
    saved = expect(record, "embed")
    d_table = np.zeros((saved["rows"], dy.shape[-1]), dtype=dy.dtype)
    np.add.at(d_table, saved["ids"].reshape(-1), _flat(dy))
    return d_table
