"""
Common test utilities and helper functions.

This module contains reusable test helpers that don't fit into fixtures:
array assertions, the central-difference gradient checker, random builders
for every parameter bundle, and canonical sample scenes.
"""

from typing import Any, Callable

import numpy as np

from scancap.operations.ahbs import AhbsConfig, AhbsParams, init_ahbs_params
from scancap.operations.model import ModelConfig, ModelParams, init_model_params
from scancap.operations.selective import SelectiveSSMLayer, init_selective_layer
from scancap.operations.ssm import ContinuousSSM, DiscreteSSM, discretize_zoh
from scancap.operations.synthdata import SyntheticScene

FD_EPS = 1e-6
GRAD_TOL = 1e-4


# ============================================================================
# Assertion Helpers
# ============================================================================


def assert_finite(array: np.ndarray) -> None:
    """Assert that every entry of an array is finite."""
    assert np.all(np.isfinite(array)), "array holds non-finite values"


def assert_close(actual: np.ndarray, expected: np.ndarray, atol: float) -> None:
    """
    Assert max-abs agreement with a readable failure message.

    Args:
        actual: Computed array
        expected: Oracle array
        atol: Largest allowed absolute difference

    Raises:
        AssertionError: If shapes differ or any entry is further than atol
    """
    actual, expected = np.asarray(actual), np.asarray(expected)
    assert actual.shape == expected.shape, f"shape {actual.shape} != {expected.shape}"
    worst = float(np.max(np.abs(actual - expected))) if actual.size else 0.0
    assert worst <= atol, f"max abs difference {worst:.3g} exceeds {atol:.3g}"


def assert_gradient(analytic: np.ndarray, numeric: np.ndarray, tol: float = GRAD_TOL) -> None:
    error = gradient_relative_error(analytic, numeric)
    assert error <= tol, f"gradient relative error {error:.3g} exceeds {tol:.3g}"


# ============================================================================
# Gradient Checking
# ============================================================================


def numerical_gradient(
    loss: Callable[[], float], array: np.ndarray, eps: float = FD_EPS
) -> np.ndarray:
    """
    Central differences of a scalar loss w.r.t. every entry of `array`.

    The array is perturbed in place and restored, so `loss` must read it
    through whatever bundle or closure holds it.
    """
    grad = np.zeros(array.shape)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + eps
        up = loss()
        array[index] = original - eps
        down = loss()
        array[index] = original
        grad[index] = (up - down) / (2 * eps)
    return grad


def gradient_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error ||a - n|| / max(||a||, ||n||); zero when both vanish."""
    analytic, numeric = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def projection_loss(output: np.ndarray, weights: np.ndarray) -> float:
    """Scalar sum(weights * output); its adjoint w.r.t. output is `weights`."""
    return float(np.sum(weights * output))


# ============================================================================
# Data Builders
# ============================================================================


def random_continuous_ssm(rng: np.random.Generator, Q: int, dense: bool = False) -> ContinuousSSM:
    """
    Build a stable continuous SSM.

    Args:
        rng: Random generator
        Q: State dimension
        dense: Dense A (negative definite shift) instead of a diagonal one

    Returns:
        ContinuousSSM with eigenvalues in the left half-plane
    """
    if dense:
        M = rng.normal(size=(Q, Q)) / np.sqrt(Q)
        A = M - M.T - np.eye(Q) * rng.uniform(0.5, 1.5)
    else:
        A = -rng.uniform(0.1, 2.0, size=Q)
    return ContinuousSSM(
        A=A, B=rng.normal(size=Q), C=rng.normal(size=Q), D=float(rng.normal())
    )


def random_discrete_ssm(rng: np.random.Generator, Q: int, dense: bool = False) -> DiscreteSSM:
    return discretize_zoh(random_continuous_ssm(rng, Q, dense), float(rng.uniform(0.01, 0.5)))


def random_selective_layer(
    rng: np.random.Generator, d: int = 3, Q: int = 2
) -> SelectiveSSMLayer:
    """Initialized layer with every array jittered so no gradient is trivially zero."""
    layer = init_selective_layer(d, Q, rng)
    for value in vars(layer).values():
        value += 0.1 * rng.normal(size=value.shape)
    return layer


def constant_gate_layer(
    rng: np.random.Generator, d: int, Q: int, delta: np.ndarray
) -> SelectiveSSMLayer:
    """Selective layer whose gates ignore the input: W_delta = W_B = W_C = 0."""
    return SelectiveSSMLayer(
        a_log=np.log(rng.uniform(0.1, 2.0, size=(d, Q))),
        D=rng.normal(size=d),
        W_delta=np.zeros((d, d)),
        b_delta=np.log(np.expm1(delta)),
        W_B=np.zeros((d, Q)),
        b_B=rng.normal(size=Q),
        W_C=np.zeros((d, Q)),
        b_C=rng.normal(size=Q),
    )


def tiny_model_config(**changes: Any) -> ModelConfig:
    values = {"layers": 2, "d": 4, "expand": 2, "conv_width": 3, "state_dim": 2}
    values.update(changes)
    return ModelConfig(**values)


def tiny_model_params(
    rng: np.random.Generator, vocab_size: int = 7, dtype=np.float64, **changes: Any
) -> ModelParams:
    return init_model_params(tiny_model_config(**changes), vocab_size, rng, dtype)


def tiny_ahbs(
    rng: np.random.Generator, d_v: int = 3, state_dim: int = 2, **changes: Any
) -> tuple[AhbsConfig, AhbsParams]:
    values = {"pathways": 2, "stride": 2, "spatial_pool": 1, "d_model": 3}
    values.update(changes)
    config = AhbsConfig(**values)
    return config, init_ahbs_params(config, d_v, state_dim, rng)


# ============================================================================
# Canonical Samples
# ============================================================================


def scene_sample(changes: dict[str, Any] | None = None) -> SyntheticScene:
    """
    Red square moving right from the top-left corner, no event.

    Args:
        changes: Field overrides

    Returns:
        SyntheticScene that fits a 16 x 32 x 32 video
    """
    values = {
        "sample_seed": 11,
        "shape": "square",
        "color": "red",
        "direction": "right",
        "speed": 1,
        "event": "none",
        "event_frame": -1,
        "origin_row": 4,
        "origin_col": 0,
    }
    values.update(changes or {})
    return SyntheticScene(**values)


def horizontal_centroid(frame: np.ndarray) -> float:
    """Intensity-weighted mean column of a (H, W, 3) frame."""
    mass = frame.sum(axis=-1)
    return float((mass.sum(axis=0) * np.arange(frame.shape[1])).sum() / mass.sum())
