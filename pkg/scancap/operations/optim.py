"""Parameter flattening, AdamW, the warmup + cosine schedule and gradient clipping."""

import logging
import math
from dataclasses import fields, is_dataclass
from typing import Any

import numpy as np

from scancap.operations.errors import DataError, NumericRangeError

logger = logging.getLogger(__name__)

# 1-D leaves (norm scales, biases, skip weights D) and these names skip weight decay
NO_DECAY_NAMES = ("a_log",)


def named_arrays(bundle: Any, prefix: str = "") -> dict[str, np.ndarray]:
    """Flatten a parameter bundle into {dotted.name: array}, sharing memory."""
    out: dict[str, np.ndarray] = {}
    if bundle is None:
        return out
    if isinstance(bundle, np.ndarray):
        out[prefix] = bundle
    elif is_dataclass(bundle):
        for f in fields(bundle):
            name = f"{prefix}.{f.name}" if prefix else f.name
            out.update(named_arrays(getattr(bundle, f.name), name))
    elif isinstance(bundle, (list, tuple)):
        for i, item in enumerate(bundle):
            out.update(named_arrays(item, f"{prefix}.{i}" if prefix else str(i)))
    return out


def load_arrays(bundle: Any, tensors: dict[str, np.ndarray]) -> None:
    """Copy tensors into the bundle in place; names and shapes must match exactly."""
    targets = named_arrays(bundle)
    missing = sorted(set(targets) - set(tensors))
    extra = sorted(set(tensors) - set(targets))
    if missing or extra:
        raise DataError(f"checkpoint tensors differ from the model: missing {missing}, unexpected {extra}")
    for name, target in targets.items():
        if target.shape != tensors[name].shape:
            raise DataError(
                f"tensor {name} has shape {tensors[name].shape}, model expects {target.shape}"
            )
        target[...] = tensors[name]


def decays(name: str, value: np.ndarray) -> bool:
    return value.ndim > 1 and name.rsplit(".", 1)[-1] not in NO_DECAY_NAMES


def lr_at(step: int, total_steps: int, base_lr: float, warmup_ratio: float) -> float:
    """Linear warmup over the first warmup_ratio of steps, then cosine decay to zero."""
    warmup = math.ceil(warmup_ratio * total_steps)
    if step < warmup:
        return base_lr * (step + 1) / warmup
    progress = (step - warmup) / max(1, total_steps - warmup)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale grads in place so their global L2 norm is at most max_norm; returns the norm before."""
    norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if not math.isfinite(norm):
        raise NumericRangeError("gradient norm is not finite")
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class AdamW:
    """Adam with decoupled weight decay; parameters are updated in place."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        weight_decay: float = 0.0,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        self.params = params
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = {name: np.zeros_like(p) for name, p in params.items()}
        self.v = {name: np.zeros_like(p) for name, p in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = grads[name]
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.weight_decay and decays(name, p):
                p -= lr * self.weight_decay * p
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
