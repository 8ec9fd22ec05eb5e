"""Aligned hierarchical bidirectional scan (AHBS) video projector.

    V (T, N_p, d_v) -> spatial pool -> projector -> M temporal pathways
    -> per pathway: temporal pool, forward + re-aligned backward scan,
       nearest-neighbour upsample -> aggregate -> temporal compression

Every function accepts leading batch axes in front of (T, N, d). Tokens are
scanned frame-major: all tokens of frame 1, then frame 2, and so on.
"""

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from scancap.operations.errors import ConfigError, ShapeError
from scancap.operations.layers import linear_backward, linear_forward
from scancap.operations.records import Record, expect
from scancap.operations.selective import (
    SelectiveSSMLayer,
    init_selective_layer,
    selective_scan_backward,
    selective_scan_forward,
    zeros_like_layer,
)


class AhbsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pathways: int = Field(3, ge=1)
    stride: int = Field(2, ge=2)
    spatial_pool: int = Field(2, ge=1)
    aggregate: Literal["add", "concat"] = "add"
    temporal_compress: int = Field(1, ge=1)
    d_model: int = Field(64, ge=1)
    backward: bool = True
    scan: bool = True
    projector_first: bool = True

    def check_frames(self, T: int) -> None:
        if self.scan and T < self.stride ** (self.pathways - 1):
            raise ConfigError(
                f"{self.pathways} pathways at stride {self.stride} need at least "
                f"{self.stride ** (self.pathways - 1)} frames, got {T}"
            )
        if T < self.temporal_compress:
            raise ConfigError(
                f"temporal_compress {self.temporal_compress} exceeds {T} frames"
            )

    def pathway_lengths(self, T: int) -> list[int]:
        return [T // self.stride**m for m in range(self.pathways)]


@dataclass
class AhbsParams:
    proj_W: np.ndarray  # (d_v, d_model)
    proj_b: np.ndarray  # (d_model,)
    forward: list[SelectiveSSMLayer] = field(default_factory=list)
    backward: list[SelectiveSSMLayer] = field(default_factory=list)
    concat_W: np.ndarray | None = None  # (M * d_scan, d_scan)
    concat_b: np.ndarray | None = None


def init_ahbs_params(
    config: AhbsConfig, d_v: int, state_dim: int, rng: np.random.Generator, dtype=np.float64
) -> AhbsParams:
    d_scan = config.d_model if config.projector_first else d_v
    bound = 1.0 / np.sqrt(d_v)
    params = AhbsParams(
        proj_W=rng.uniform(-bound, bound, size=(d_v, config.d_model)).astype(dtype),
        proj_b=np.zeros(config.d_model, dtype=dtype),
    )
    if config.scan:
        for _ in range(config.pathways):
            params.forward.append(init_selective_layer(d_scan, state_dim, rng, dtype))
            if config.backward:
                params.backward.append(init_selective_layer(d_scan, state_dim, rng, dtype))
        if config.aggregate == "concat":
            eye = np.eye(d_scan) / config.pathways
            params.concat_W = np.concatenate([eye] * config.pathways).astype(dtype)
            params.concat_b = np.zeros(d_scan, dtype=dtype)
    return params


def zeros_like_params(params: AhbsParams) -> AhbsParams:
    return AhbsParams(
        proj_W=np.zeros_like(params.proj_W),
        proj_b=np.zeros_like(params.proj_b),
        forward=[zeros_like_layer(layer) for layer in params.forward],
        backward=[zeros_like_layer(layer) for layer in params.backward],
        concat_W=None if params.concat_W is None else np.zeros_like(params.concat_W),
        concat_b=None if params.concat_b is None else np.zeros_like(params.concat_b),
    )


def check_features(V: np.ndarray) -> None:
    if V.ndim < 3 or min(V.shape[-3:]) < 1:
        raise ShapeError(f"features must be (..., T, N, d) with positive sizes, got {V.shape}")


# --- spatial pooling ---------------------------------------------------------


def _square_side(n: int) -> int | None:
    side = int(round(np.sqrt(n)))
    return side if side * side == n else None


def spatial_pool_forward(V: np.ndarray, window: int) -> tuple[np.ndarray, Record]:
    check_features(V)
    N_p, d = V.shape[-2], V.shape[-1]
    group = window * window
    if group > N_p:
        raise ConfigError(f"spatial window {window} needs {group} tokens, frame has {N_p}")
    lead = V.shape[:-2]
    side = _square_side(N_p)
    if side is not None and side % window == 0:
        blocks = side // window
        grid = V.reshape(lead + (blocks, window, blocks, window, d))
        out = grid.mean(axis=(-4, -2)).reshape(lead + (blocks * blocks, d))
        mode = "grid"
    else:
        n_d = N_p // group
        out = V[..., : n_d * group, :].reshape(lead + (n_d, group, d)).mean(axis=-2)
        mode = "contiguous"
    return out, Record("spatial_pool", {"shape": V.shape, "window": window, "mode": mode})


def spatial_pool(V: np.ndarray, window: int) -> np.ndarray:
    """Mean over window x window token groups; N_d = N_p // window**2."""
    return spatial_pool_forward(V, window)[0]


def spatial_pool_backward(dY: np.ndarray, record: Record) -> np.ndarray:
    saved = expect(record, "spatial_pool")
    shape, window = saved["shape"], saved["window"]
    lead, N_p, d = shape[:-2], shape[-2], shape[-1]
    group = window * window
    if saved["mode"] == "grid":
        blocks = _square_side(N_p) // window
        g = dY.reshape(lead + (blocks, 1, blocks, 1, d)) / group
        g = np.broadcast_to(g, lead + (blocks, window, blocks, window, d))
        return g.reshape(shape).copy()
    dV = np.zeros(shape, dtype=dY.dtype)
    n_d = dY.shape[-2]
    g = np.broadcast_to(dY[..., :, None, :] / group, lead + (n_d, group, d))
    dV[..., : n_d * group, :] = g.reshape(lead + (n_d * group, d))
    return dV


# --- temporal resampling -----------------------------------------------------


def _pool_matrix(T: int, factor: int, dtype) -> np.ndarray:
    T_out = T // factor
    P = np.zeros((T_out, T), dtype=dtype)
    for j in range(T_out):
        P[j, j * factor : (j + 1) * factor] = 1.0 / factor
    return P


def _upsample_matrix(T: int, T_m: int, factor: int, dtype) -> np.ndarray:
    U = np.zeros((T, T_m), dtype=dtype)
    U[np.arange(T), np.minimum(np.arange(T) // factor, T_m - 1)] = 1.0
    return U


def _apply_time(matrix: np.ndarray, V: np.ndarray) -> np.ndarray:
    return np.einsum("st,...tnd->...snd", matrix, V)


def frame_pool_forward(V: np.ndarray, factor: int) -> tuple[np.ndarray, Record]:
    T = V.shape[-3]
    if T < factor:
        raise ConfigError(f"cannot pool {T} frames by a factor of {factor}")
    P = _pool_matrix(T, factor, V.dtype)
    return _apply_time(P, V), Record("frame_pool", {"P": P})


def frame_pool_backward(dY: np.ndarray, record: Record) -> np.ndarray:
    return _apply_time(expect(record, "frame_pool")["P"].T, dY)


def temporal_pool_forward(V: np.ndarray, m: int, stride: int) -> tuple[np.ndarray, Record]:
    if m < 1:
        raise ConfigError(f"pathway index starts at 1, got {m}")
    factor = stride ** (m - 1)
    if V.shape[-3] < factor:
        raise ConfigError(
            f"pathway {m} is empty: {V.shape[-3]} frames < stride^(m-1) = {factor}"
        )
    return frame_pool_forward(V, factor)


def temporal_pool(V: np.ndarray, m: int, stride: int) -> np.ndarray:
    """Mean over non-overlapping windows of stride**(m-1) frames, remainder dropped."""
    return temporal_pool_forward(V, m, stride)[0]


temporal_pool_backward = frame_pool_backward


def temporal_upsample_forward(
    Ym: np.ndarray, stride: int, m: int, T: int
) -> tuple[np.ndarray, Record]:
    factor = stride ** (m - 1)
    T_m = Ym.shape[-3]
    if T_m != T // factor:
        raise ShapeError(f"pathway {m} has {T_m} frames, expected {T // factor}")
    U = _upsample_matrix(T, T_m, factor, Ym.dtype)
    return _apply_time(U, Ym), Record("temporal_upsample", {"U": U})


def temporal_upsample(Ym: np.ndarray, stride: int, m: int, T: int) -> np.ndarray:
    """Repeat each pooled frame stride**(m-1) times; edge-pad to exactly T frames."""
    return temporal_upsample_forward(Ym, stride, m, T)[0]


def temporal_upsample_backward(dY: np.ndarray, record: Record) -> np.ndarray:
    return _apply_time(expect(record, "temporal_upsample")["U"].T, dY)


# --- scanning ------------------------------------------------------------------


def bidirectional_scan_forward(
    Vm: np.ndarray, fwd: SelectiveSSMLayer, bwd: SelectiveSSMLayer | None
) -> tuple[np.ndarray, Record]:
    check_features(Vm)
    if Vm.shape[-1] != fwd.d or (bwd is not None and bwd.d != Vm.shape[-1]):
        raise ShapeError(f"scan layers expect {fwd.d} channels, got {Vm.shape[-1]}")
    shape = Vm.shape
    seq = Vm.reshape(shape[:-3] + (shape[-3] * shape[-2], shape[-1]))
    (y, _), rec_f = selective_scan_forward(fwd, seq)
    rec_b = None
    if bwd is not None:
        (y_rev, _), rec_b = selective_scan_forward(bwd, np.flip(seq, axis=-2))
        y = y + np.flip(y_rev, axis=-2)
    return y.reshape(shape), Record("bidirectional_scan", {"shape": shape, "f": rec_f, "b": rec_b})


def bidirectional_scan(
    Vm: np.ndarray, fwd: SelectiveSSMLayer, bwd: SelectiveSSMLayer | None
) -> np.ndarray:
    """scan_fwd(seq) + f_rev(scan_bwd(f_rev(seq))); bwd=None gives the causal scan."""
    return bidirectional_scan_forward(Vm, fwd, bwd)[0]


def bidirectional_scan_backward(
    dY: np.ndarray, record: Record
) -> tuple[np.ndarray, SelectiveSSMLayer, SelectiveSSMLayer | None]:
    saved = expect(record, "bidirectional_scan")
    shape = saved["shape"]
    dy = dY.reshape(shape[:-3] + (shape[-3] * shape[-2], shape[-1]))
    d_seq, g_fwd, _ = selective_scan_backward(dy, saved["f"])
    g_bwd = None
    if saved["b"] is not None:
        d_rev, g_bwd, _ = selective_scan_backward(np.flip(dy, axis=-2), saved["b"])
        d_seq = d_seq + np.flip(d_rev, axis=-2)
    return d_seq.reshape(shape), g_fwd, g_bwd


# --- aggregation ---------------------------------------------------------------


def aggregate_forward(
    outputs: list[np.ndarray],
    mode: str,
    concat_W: np.ndarray | None = None,
    concat_b: np.ndarray | None = None,
) -> tuple[np.ndarray, Record]:
    if not outputs:
        raise ShapeError("aggregate needs at least one pathway output")
    if any(out.shape != outputs[0].shape for out in outputs):
        raise ShapeError("pathway outputs must share one shape")
    if mode == "add":
        total = outputs[0]
        for out in outputs[1:]:
            total = total + out
        return total, Record("aggregate", {"mode": mode, "count": len(outputs)})
    if mode == "concat":
        if concat_W is None:
            raise ConfigError("concat aggregation needs an output projection")
        stacked = np.concatenate(outputs, axis=-1)
        y, rec = linear_forward(stacked, concat_W, concat_b)
        return y, Record("aggregate", {"mode": mode, "count": len(outputs), "linear": rec})
    raise ConfigError(f"unknown aggregate mode {mode!r}; expected add or concat")


def aggregate(
    outputs: list[np.ndarray],
    mode: str,
    concat_W: np.ndarray | None = None,
    concat_b: np.ndarray | None = None,
) -> np.ndarray:
    return aggregate_forward(outputs, mode, concat_W, concat_b)[0]


def aggregate_backward(
    dY: np.ndarray, record: Record
) -> tuple[list[np.ndarray], np.ndarray | None, np.ndarray | None]:
    """Returns (per-pathway adjoints, d concat_W, d concat_b)."""
    saved = expect(record, "aggregate")
    count = saved["count"]
    if saved["mode"] == "add":
        return [dY] * count, None, None
    d_stacked, dW, db = linear_backward(dY, saved["linear"])
    return np.split(d_stacked, count, axis=-1), dW, db


# --- full module ---------------------------------------------------------------


def ahbs_forward_recorded(
    V: np.ndarray, config: AhbsConfig, params: AhbsParams
) -> tuple[np.ndarray, Record]:
    check_features(V)
    if V.shape[-1] != params.proj_W.shape[0]:
        raise ShapeError(f"projector expects d_v={params.proj_W.shape[0]}, got {V.shape[-1]}")
    T = V.shape[-3]
    config.check_frames(T)
    saved: dict = {}
    X, saved["spatial"] = spatial_pool_forward(V, config.spatial_pool)
    if config.projector_first:
        X, saved["proj"] = linear_forward(X, params.proj_W, params.proj_b)
    H = X
    if config.scan:
        saved["pathways"] = []
        outputs = []
        for m in range(1, config.pathways + 1):
            Vm, rec_pool = temporal_pool_forward(X, m, config.stride)
            bwd = params.backward[m - 1] if config.backward else None
            Ym, rec_scan = bidirectional_scan_forward(Vm, params.forward[m - 1], bwd)
            Um, rec_up = temporal_upsample_forward(Ym, config.stride, m, T)
            outputs.append(Um)
            saved["pathways"].append((rec_pool, rec_scan, rec_up))
        H, saved["aggregate"] = aggregate_forward(
            outputs, config.aggregate, params.concat_W, params.concat_b
        )
    if not config.projector_first:
        H, saved["proj"] = linear_forward(H, params.proj_W, params.proj_b)
    H, saved["compress"] = frame_pool_forward(H, config.temporal_compress)
    saved["config"] = config
    return H, Record("ahbs", saved)


def ahbs_forward(V: np.ndarray, config: AhbsConfig, params: AhbsParams) -> np.ndarray:
    """V (..., T, N_p, d_v) -> H_v (..., T // c, N_d, d_model)."""
    return ahbs_forward_recorded(V, config, params)[0]


def ahbs_backward(dH: np.ndarray, record: Record) -> tuple[np.ndarray, AhbsParams]:
    saved = expect(record, "ahbs")
    config: AhbsConfig = saved["config"]
    dH = frame_pool_backward(dH, saved["compress"])
    d_proj_W = d_proj_b = None
    if not config.projector_first:
        dH, d_proj_W, d_proj_b = linear_backward(dH, saved["proj"])
    dX = dH
    grads_fwd: list[SelectiveSSMLayer] = []
    grads_bwd: list[SelectiveSSMLayer] = []
    d_concat_W = d_concat_b = None
    if config.scan:
        d_outputs, d_concat_W, d_concat_b = aggregate_backward(dH, saved["aggregate"])
        dX = 0.0
        for d_out, (rec_pool, rec_scan, rec_up) in zip(d_outputs, saved["pathways"]):
            dYm = temporal_upsample_backward(d_out, rec_up)
            dVm, g_fwd, g_bwd = bidirectional_scan_backward(dYm, rec_scan)
            dX = dX + temporal_pool_backward(dVm, rec_pool)
            grads_fwd.append(g_fwd)
            if g_bwd is not None:
                grads_bwd.append(g_bwd)
    if config.projector_first:
        dX, d_proj_W, d_proj_b = linear_backward(dX, saved["proj"])
    dV = spatial_pool_backward(dX, saved["spatial"])
    grads = AhbsParams(
        proj_W=d_proj_W,
        proj_b=d_proj_b,
        forward=grads_fwd,
        backward=grads_bwd,
        concat_W=d_concat_W,
        concat_b=d_concat_b,
    )
    return dV, grads
