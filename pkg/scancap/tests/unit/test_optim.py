"""
Unit Tests for Optimization Helpers

TESTING APPROACH:
- Parameter flattening shares memory with the bundle
- Schedule values at warmup and decay boundaries
- Clipping and AdamW update rules on hand-sized arrays

DESIGN PATTERNS:
1. Arrange-Act-Assert (AAA) - Clear test structure
2. Parametrized Testing - Weight-decay eligibility table
"""

from dataclasses import dataclass

import numpy as np
import pytest

from scancap.operations.errors import DataError, NumericRangeError
from scancap.operations.optim import (
    AdamW,
    clip_global_norm,
    decays,
    load_arrays,
    lr_at,
    named_arrays,
)
from scancap.tests.utils import assert_close, tiny_model_params


@dataclass
class Inner:
    weight: np.ndarray
    bias: np.ndarray | None = None


@dataclass
class Outer:
    head: Inner
    layers: list


def bundle() -> Outer:
    return Outer(
        head=Inner(weight=np.ones((2, 2))),
        layers=[Inner(weight=np.zeros((1, 3)), bias=np.zeros(3))],
    )


@pytest.mark.unit
@pytest.mark.model
class TestParameterNames:
    """
    Unit tests for named_arrays and load_arrays.

    SCOPE: flattening and restoring parameter bundles
    """

    def test_dotted_names_skip_missing_leaves(self):
        names = named_arrays(bundle())

        assert sorted(names) == ["head.weight", "layers.0.bias", "layers.0.weight"]

    def test_names_share_memory(self):
        params = bundle()

        named_arrays(params)["layers.0.bias"][1] = 7.0

        assert params.layers[0].bias[1] == 7.0

    def test_model_names(self, rng):
        names = named_arrays(tiny_model_params(rng))

        assert "embedding" in names and "final_norm" in names
        assert "blocks.1.ssm.a_log" in names

    def test_load_copies_in_place(self):
        params = bundle()
        weight = params.head.weight

        load_arrays(params, {name: np.full_like(a, 2.0) for name, a in named_arrays(bundle()).items()})

        assert params.head.weight is weight
        assert np.all(weight == 2.0)

    def test_load_rejects_missing_tensor(self):
        tensors = named_arrays(bundle())
        del tensors["head.weight"]

        with pytest.raises(DataError, match="head.weight"):
            load_arrays(bundle(), tensors)

    def test_load_rejects_extra_tensor(self):
        tensors = {**named_arrays(bundle()), "tail.weight": np.zeros(1)}

        with pytest.raises(DataError, match="tail.weight"):
            load_arrays(bundle(), tensors)

    def test_load_rejects_shape_mismatch(self):
        tensors = named_arrays(bundle())
        tensors["head.weight"] = np.zeros((3, 2))

        with pytest.raises(DataError, match="shape"):
            load_arrays(bundle(), tensors)

    @pytest.mark.parametrize(
        "name, shape, expected",
        [
            ("blocks.0.in_W", (4, 16), True),
            ("blocks.0.ssm.a_log", (8, 2), False),
            ("blocks.0.ssm.D", (8,), False),
            ("final_norm", (4,), False),
        ],
    )
    def test_weight_decay_eligibility(self, name, shape, expected):
        assert decays(name, np.zeros(shape)) is expected


@pytest.mark.unit
@pytest.mark.model
class TestSchedule:
    """Unit tests for the warmup + cosine learning rate."""

    def test_warmup_ramps_linearly(self):
        assert lr_at(0, 100, 1.0, 0.03) == pytest.approx(1.0 / 3.0)
        assert lr_at(2, 100, 1.0, 0.03) == pytest.approx(1.0)

    def test_cosine_decay(self):
        rates = [lr_at(step, 100, 1.0, 0.03) for step in range(3, 100)]

        assert rates[0] == pytest.approx(1.0)
        assert all(b <= a for a, b in zip(rates, rates[1:]))
        assert rates[-1] < 1e-3

    def test_midpoint_is_half(self):
        assert lr_at(50, 100, 2.0, 0.0) == pytest.approx(1.0)

    def test_no_warmup(self):
        assert lr_at(0, 10, 0.5, 0.0) == pytest.approx(0.5)


@pytest.mark.unit
@pytest.mark.model
class TestClipping:
    """Unit tests for global-norm clipping."""

    def test_scales_down_large_gradients(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}

        norm = clip_global_norm(grads, 1.0)

        assert norm == pytest.approx(5.0)
        assert_close(np.concatenate([grads["a"], grads["b"]]), [0.6, 0.8], 1e-12)

    def test_small_gradients_untouched(self):
        grads = {"a": np.array([0.3, 0.4])}

        clip_global_norm(grads, 1.0)

        assert_close(grads["a"], [0.3, 0.4], 0.0)

    def test_zero_disables_clipping(self):
        grads = {"a": np.array([30.0])}

        clip_global_norm(grads, 0.0)

        assert grads["a"][0] == 30.0

    def test_non_finite_norm(self):
        with pytest.raises(NumericRangeError):
            clip_global_norm({"a": np.array([np.nan, 1.0])}, 1.0)


@pytest.mark.unit
@pytest.mark.model
class TestAdamW:
    """
    Unit tests for AdamW.

    SCOPE: bias-corrected moments and decoupled weight decay
    """

    def test_first_step_moves_by_lr_times_sign(self):
        params = {"w": np.array([1.0, -2.0, 0.5])}
        optimizer = AdamW(params, eps=0.0)

        optimizer.step({"w": np.array([0.2, -5.0, 3.0])}, lr=0.1)

        assert_close(params["w"], [0.9, -1.9, 0.4], 1e-12)

    def test_decay_skips_vectors(self):
        params = {"matrix": np.ones((2, 2)), "vector": np.ones(2)}
        optimizer = AdamW(params, weight_decay=0.5)

        optimizer.step({"matrix": np.zeros((2, 2)), "vector": np.zeros(2)}, lr=0.1)

        assert_close(params["matrix"], np.full((2, 2), 0.95), 1e-12)
        assert_close(params["vector"], np.ones(2), 0.0)

    def test_minimizes_a_quadratic(self):
        params = {"w": np.zeros(3)}
        target = np.array([1.0, -2.0, 3.0])
        optimizer = AdamW(params)

        for _ in range(500):
            optimizer.step({"w": 2.0 * (params["w"] - target)}, lr=0.05)

        assert_close(params["w"], target, 0.1)
