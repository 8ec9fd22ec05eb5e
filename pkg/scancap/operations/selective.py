"""Input-conditioned (selective) diagonal state-space scan.

Per step k and channel c:

    delta_k = softplus(u_k W_delta + b_delta)
    B_k     = u_k W_B + b_B,   C_k = u_k W_C + b_C
    h_k     = exp(delta_k a_c) * h_{k-1} + delta_k B_k u_{k,c}
    y_{k,c} = <C_k, h_k> + D_c u_{k,c}

with a_c = -exp(a_log_c). A uses exact zero-order hold, B the first-order rule.
Time steps run strictly in order; batch, channel and state axes are vectorized.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from scancap.operations.errors import NumericRangeError, ShapeError
from scancap.operations.layers import softplus, softplus_inverse
from scancap.operations.records import Record, expect

DT_MIN = 1e-2
DT_MAX = 1e-1


@dataclass
class SelectiveSSMLayer:
    a_log: np.ndarray  # (d, Q)
    D: np.ndarray  # (d,)
    W_delta: np.ndarray  # (d, d)
    b_delta: np.ndarray  # (d,)
    W_B: np.ndarray  # (d, Q)
    b_B: np.ndarray  # (Q,)
    W_C: np.ndarray  # (d, Q)
    b_C: np.ndarray  # (Q,)

    def __post_init__(self) -> None:
        d, Q = self.a_log.shape
        expected = {
            "D": (d,),
            "W_delta": (d, d),
            "b_delta": (d,),
            "W_B": (d, Q),
            "b_B": (Q,),
            "W_C": (d, Q),
            "b_C": (Q,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(
                    f"{name} must have shape {shape}, got {getattr(self, name).shape}"
                )

    @property
    def d(self) -> int:
        return self.a_log.shape[0]

    @property
    def Q(self) -> int:
        return self.a_log.shape[1]

    @property
    def A(self) -> np.ndarray:
        return -np.exp(self.a_log)


def init_selective_layer(
    d: int, Q: int, rng: np.random.Generator, dtype=np.float64
) -> SelectiveSSMLayer:
    """A spans [-1, -Q] log-spaced per state; delta starts in [1e-2, 1e-1]."""
    a_log = np.log(np.tile(np.geomspace(1.0, max(Q, 1), Q), (d, 1)))
    scale = 1.0 / np.sqrt(d)
    dt = np.exp(rng.uniform(np.log(DT_MIN), np.log(DT_MAX), size=d))
    layer = SelectiveSSMLayer(
        a_log=a_log,
        D=np.ones(d),
        W_delta=rng.uniform(-0.1 * scale, 0.1 * scale, size=(d, d)),
        b_delta=softplus_inverse(dt),
        W_B=rng.uniform(-scale, scale, size=(d, Q)),
        b_B=np.zeros(Q),
        W_C=rng.uniform(-scale, scale, size=(d, Q)),
        b_C=np.zeros(Q),
    )
    return cast_layer(layer, dtype)


def cast_layer(layer: SelectiveSSMLayer, dtype) -> SelectiveSSMLayer:
    return SelectiveSSMLayer(
        **{name: np.asarray(value, dtype=dtype) for name, value in vars(layer).items()}
    )


def zeros_like_layer(layer: SelectiveSSMLayer) -> SelectiveSSMLayer:
    return SelectiveSSMLayer(
        **{name: np.zeros_like(value) for name, value in vars(layer).items()}
    )


def _first_bad_step(y: np.ndarray) -> int:
    bad = ~np.isfinite(y)
    per_step = bad.reshape(-1, y.shape[-2], y.shape[-1]).any(axis=(0, 2))
    return int(np.argmax(per_step))


def selective_scan_forward(
    layer: SelectiveSSMLayer,
    u: np.ndarray,
    h0: np.ndarray | None = None,
    keep: bool = True,
) -> tuple[tuple[np.ndarray, np.ndarray], Record]:
    """Scan u (..., L, d). Returns ((y, h_last), record); h_last is (..., d, Q).

    With keep=False no values are saved and the record cannot be used for
    backward; this is the inference path.
    """
    if u.ndim < 2 or u.shape[-1] != layer.d:
        raise ShapeError(f"selective scan expects (..., L, {layer.d}), got {u.shape}")
    L = u.shape[-2]
    lead = u.shape[:-2]
    A = layer.A
    z = u @ layer.W_delta + layer.b_delta
    delta = softplus(z)
    Bm = u @ layer.W_B + layer.b_B
    Cm = u @ layer.W_C + layer.b_C
    with np.errstate(over="ignore", invalid="ignore"):
        dA = np.exp(delta[..., None] * A)
        dBu = (delta * u)[..., None] * Bm[..., None, :]
    if h0 is None:
        h = np.zeros(lead + (layer.d, layer.Q), dtype=dA.dtype)
    else:
        h = np.broadcast_to(h0, lead + (layer.d, layer.Q)).astype(dA.dtype)
    h_init = h
    hs = np.empty(lead + (L, layer.d, layer.Q), dtype=dA.dtype) if keep else None
    y = np.empty(lead + (L, layer.d), dtype=dA.dtype)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(L):
            h = dA[..., k, :, :] * h + dBu[..., k, :, :]
            if keep:
                hs[..., k, :, :] = h
            else:
                y[..., k, :] = np.einsum("...dq,...q->...d", h, Cm[..., k, :])
        if keep:
            y = np.einsum("...ldq,...lq->...ld", hs, Cm)
        y = y + layer.D * u
    if not np.all(np.isfinite(y)):
        raise NumericRangeError(
            f"selective scan produced non-finite values at step {_first_bad_step(y)}"
        )
    saved = None
    if keep:
        saved = {
            "layer": layer,
            "u": u,
            "z": z,
            "delta": delta,
            "Bm": Bm,
            "Cm": Cm,
            "dA": dA,
            "hs": hs,
            "h0": h_init,
        }
    return (y, h), Record("selective_scan", saved)


def selective_scan(layer: SelectiveSSMLayer, u: np.ndarray) -> np.ndarray:
    return selective_scan_forward(layer, u, keep=False)[0][0]


def selective_scan_backward(
    dy: np.ndarray, record: Record, dh_last: np.ndarray | None = None
) -> tuple[np.ndarray, SelectiveSSMLayer, np.ndarray]:
    """Returns (du, layer grads, dh0)."""
    s = expect(record, "selective_scan")
    layer: SelectiveSSMLayer = s["layer"]
    u, z, delta, Bm, Cm, dA, hs = (
        s["u"],
        s["z"],
        s["delta"],
        s["Bm"],
        s["Cm"],
        s["dA"],
        s["hs"],
    )
    L = u.shape[-2]
    A = layer.A
    lead_axes = tuple(range(u.ndim - 2))

    du = dy * layer.D
    d_D = (dy * u).sum(axis=lead_axes + (u.ndim - 2,))
    d_Cm = np.einsum("...ld,...ldq->...lq", dy, hs)

    g_h = np.zeros_like(s["h0"]) if dh_last is None else np.array(dh_last, dtype=hs.dtype)
    d_dA = np.empty_like(hs)
    d_dBu = np.empty_like(hs)
    for k in range(L - 1, -1, -1):
        g_h = g_h + dy[..., k, :, None] * Cm[..., k, None, :]
        d_dBu[..., k, :, :] = g_h
        h_prev = hs[..., k - 1, :, :] if k > 0 else s["h0"]
        d_dA[..., k, :, :] = g_h * h_prev
        g_h = g_h * dA[..., k, :, :]

    t = d_dA * dA
    d_delta = np.einsum("...ldq,dq->...ld", t, A)
    flat_t = t.reshape((-1,) + t.shape[-3:])
    d_A = np.einsum("nldq,nld->dq", flat_t, delta.reshape(flat_t.shape[:-1]))
    S = np.einsum("...ldq,...lq->...ld", d_dBu, Bm)
    d_delta = d_delta + S * u
    du = du + S * delta
    d_Bm = np.einsum("...ldq,...ld->...lq", d_dBu, delta * u)

    dz = d_delta * expit(z)
    u2 = u.reshape(-1, layer.d)
    grads = SelectiveSSMLayer(
        a_log=d_A * A,
        D=d_D,
        W_delta=u2.T @ dz.reshape(-1, layer.d),
        b_delta=dz.reshape(-1, layer.d).sum(axis=0),
        W_B=u2.T @ d_Bm.reshape(-1, layer.Q),
        b_B=d_Bm.reshape(-1, layer.Q).sum(axis=0),
        W_C=u2.T @ d_Cm.reshape(-1, layer.Q),
        b_C=d_Cm.reshape(-1, layer.Q).sum(axis=0),
    )
    du = du + dz @ layer.W_delta.T + d_Bm @ layer.W_B.T + d_Cm @ layer.W_C.T
    return du, grads, g_h


def selective_step(
    layer: SelectiveSSMLayer, u_t: np.ndarray, h: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One recurrent step: u_t (..., d), h (..., d, Q) -> (y_t, h_next)."""
    delta = softplus(u_t @ layer.W_delta + layer.b_delta)
    Bm = u_t @ layer.W_B + layer.b_B
    Cm = u_t @ layer.W_C + layer.b_C
    h = np.exp(delta[..., None] * layer.A) * h + (delta * u_t)[..., None] * Bm[..., None, :]
    y = np.einsum("...dq,...q->...d", h, Cm) + layer.D * u_t
    return y, h
