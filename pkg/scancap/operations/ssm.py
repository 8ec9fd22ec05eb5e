"""Linear time-invariant state-space kernels.

Discretization (zero-order hold), the recurrent and convolutional evaluation
forms, and their reverse-mode adjoints. `A` is either a Q-vector (diagonal
state matrix) or a dense Q x Q matrix; the models only ever use the diagonal
form, the dense form backs the oracle tests.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, expm_frechet

from scancap.operations.errors import NumericRangeError, ShapeError
from scancap.operations.records import Record, expect

# |delta * a| below this switches B_bar to its series limit delta * b
ZOH_SERIES_THRESHOLD = 1e-8


def _check_state_matrix(A: np.ndarray, Q: int) -> None:
    if A.ndim == 1 and A.shape != (Q,):
        raise ShapeError(f"diagonal A must have shape ({Q},), got {A.shape}")
    if A.ndim == 2 and A.shape != (Q, Q):
        raise ShapeError(f"dense A must have shape ({Q}, {Q}), got {A.shape}")
    if A.ndim not in (1, 2):
        raise ShapeError(f"A must be a vector or a square matrix, got rank {A.ndim}")


@dataclass
class ContinuousSSM:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float = 0.0

    def __post_init__(self) -> None:
        self.A = np.asarray(self.A)
        self.B = np.asarray(self.B).reshape(-1)
        self.C = np.asarray(self.C).reshape(-1)
        if self.Q < 1:
            raise ShapeError("state dimension Q must be at least 1")
        _check_state_matrix(self.A, self.Q)
        if self.C.shape != (self.Q,):
            raise ShapeError(f"C must have {self.Q} entries, got {self.C.shape}")
        for name in ("A", "B", "C"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NumericRangeError(f"continuous {name} has non-finite entries")
        if not np.isfinite(self.D):
            raise NumericRangeError("continuous D is not finite")

    @property
    def Q(self) -> int:
        return self.B.shape[0]

    @property
    def diagonal(self) -> bool:
        return self.A.ndim == 1


@dataclass
class DiscreteSSM:
    A_bar: np.ndarray
    B_bar: np.ndarray
    C: np.ndarray
    D: float
    delta: float

    def __post_init__(self) -> None:
        self.A_bar = np.asarray(self.A_bar)
        self.B_bar = np.asarray(self.B_bar).reshape(-1)
        self.C = np.asarray(self.C).reshape(-1)
        if not self.delta > 0:
            raise ShapeError(f"delta must be positive, got {self.delta}")
        _check_state_matrix(self.A_bar, self.Q)
        if self.C.shape != (self.Q,):
            raise ShapeError(f"C must have {self.Q} entries, got {self.C.shape}")

    @property
    def Q(self) -> int:
        return self.B_bar.shape[0]

    @property
    def diagonal(self) -> bool:
        return self.A_bar.ndim == 1


@dataclass
class SSMGrads:
    """Adjoints of an SSM parameter bundle; unused fields stay None."""

    A: np.ndarray | None = None
    B: np.ndarray | None = None
    C: np.ndarray | None = None
    D: float = 0.0
    delta: float = 0.0


def _expm1_ratio(x: np.ndarray) -> np.ndarray:
    """(exp(x) - 1) / x with the limit 1 at x = 0."""
    safe = np.where(np.abs(x) < ZOH_SERIES_THRESHOLD, 1.0, x)
    return np.where(np.abs(x) < ZOH_SERIES_THRESHOLD, 1.0, np.expm1(safe) / safe)


def _expm1_ratio_slope(x: np.ndarray) -> np.ndarray:
    """d/dx of (exp(x) - 1) / x, series-evaluated near zero."""
    small = np.abs(x) < 1e-3
    safe = np.where(small, 1.0, x)
    exact = (safe * np.exp(safe) - np.expm1(safe)) / (safe * safe)
    series = 0.5 + x / 3.0 + x * x / 8.0 + x**3 / 30.0
    return np.where(small, series, exact)


def discretize_zoh_forward(cont: ContinuousSSM, delta: float) -> tuple[DiscreteSSM, Record]:
    if not delta > 0:
        raise ShapeError(f"delta must be positive, got {delta}")
    if cont.diagonal:
        x = delta * cont.A
        with np.errstate(over="ignore", invalid="ignore"):
            A_bar = np.exp(x)
            B_bar = delta * _expm1_ratio(x) * cont.B
        bad = ~(np.isfinite(A_bar) & np.isfinite(B_bar))
        if bad.any():
            worst = cont.A[np.argmax(np.where(bad, x, -np.inf))]
            raise NumericRangeError(
                f"ZOH overflow: eigenvalue {worst:.6g} with delta {delta:.6g}"
            )
        saved = {"cont": cont, "delta": delta}
    else:
        Q = cont.Q
        M = np.zeros((Q + 1, Q + 1), dtype=np.result_type(cont.A, cont.B, float))
        M[:Q, :Q] = delta * cont.A
        M[:Q, Q] = delta * cont.B
        with np.errstate(over="ignore", invalid="ignore"):
            E = expm(M)
        if not np.all(np.isfinite(E)):
            eig = np.linalg.eigvals(cont.A)
            worst = eig[np.argmax(eig.real)]
            raise NumericRangeError(
                f"ZOH overflow: eigenvalue {worst:.6g} with delta {delta:.6g}"
            )
        A_bar, B_bar = E[:Q, :Q].copy(), E[:Q, Q].copy()
        saved = {"cont": cont, "delta": delta, "M": M}
    disc = DiscreteSSM(A_bar=A_bar, B_bar=B_bar, C=cont.C.copy(), D=cont.D, delta=delta)
    return disc, Record("discretize_zoh", saved)


def discretize_zoh(cont: ContinuousSSM, delta: float) -> DiscreteSSM:
    """A_bar = exp(delta A), B_bar = (delta A)^-1 (exp(delta A) - I) delta B."""
    return discretize_zoh_forward(cont, delta)[0]


def discretize_zoh_backward(grads: SSMGrads, record: Record) -> SSMGrads:
    """Map adjoints of (A_bar, B_bar, C, D) to adjoints of (A, B, C, D, delta)."""
    saved = expect(record, "discretize_zoh")
    cont: ContinuousSSM = saved["cont"]
    delta: float = saved["delta"]
    Q = cont.Q
    g_A_bar = np.zeros_like(cont.A, dtype=float) if grads.A is None else grads.A
    g_B_bar = np.zeros(Q) if grads.B is None else grads.B
    g_C = np.zeros(Q) if grads.C is None else grads.C
    if cont.diagonal:
        x = delta * cont.A
        A_bar = np.exp(x)
        phi = _expm1_ratio(x)
        slope = _expm1_ratio_slope(x)
        # B_bar = delta * phi(delta a) * b
        d_A = g_A_bar * delta * A_bar + g_B_bar * cont.B * delta * delta * slope
        d_B = g_B_bar * delta * phi
        d_delta = np.sum(g_A_bar * cont.A * A_bar) + np.sum(
            g_B_bar * cont.B * (phi + x * slope)
        )
    else:
        M = saved["M"]
        G = np.zeros_like(M)
        G[:Q, :Q] = g_A_bar
        G[:Q, Q] = g_B_bar
        g_M = expm_frechet(M.T, G, compute_expm=False)
        d_A = delta * g_M[:Q, :Q]
        d_B = delta * g_M[:Q, Q]
        d_delta = np.sum(g_M[:Q, :Q] * cont.A) + np.sum(g_M[:Q, Q] * cont.B)
    return SSMGrads(A=d_A, B=d_B, C=g_C, D=grads.D, delta=float(d_delta))


def _transition(A_bar: np.ndarray, h: np.ndarray) -> np.ndarray:
    return A_bar * h if A_bar.ndim == 1 else A_bar @ h


def _transition_adjoint(A_bar: np.ndarray, g: np.ndarray) -> np.ndarray:
    return A_bar * g if A_bar.ndim == 1 else A_bar.T @ g


def scan_recurrent_forward(
    disc: DiscreteSSM, x: np.ndarray, h0: np.ndarray | None = None
) -> tuple[tuple[np.ndarray, np.ndarray], Record]:
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] < 1:
        raise ShapeError(f"x must be a non-empty scalar sequence, got shape {x.shape}")
    dtype = np.result_type(x, disc.A_bar, disc.B_bar)
    h = np.zeros(disc.Q, dtype=dtype) if h0 is None else np.asarray(h0, dtype=dtype)
    if h.shape != (disc.Q,):
        raise ShapeError(f"h0 must have shape ({disc.Q},), got {h.shape}")
    L = x.shape[0]
    states = np.empty((L + 1, disc.Q), dtype=dtype)
    states[0] = h
    y = np.empty(L, dtype=dtype)
    for k in range(L):
        h = _transition(disc.A_bar, h) + disc.B_bar * x[k]
        states[k + 1] = h
        y[k] = disc.C @ h + disc.D * x[k]
    return (y, h), Record("scan_recurrent", {"disc": disc, "x": x, "states": states})


def scan_recurrent(
    disc: DiscreteSSM, x: np.ndarray, h0: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """h_k = A_bar h_{k-1} + B_bar x_k; y_k = C h_k + D x_k. Returns (y, h_L)."""
    return scan_recurrent_forward(disc, x, h0)[0]


def scan_recurrent_backward(
    dy: np.ndarray, record: Record, dh_final: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray, SSMGrads]:
    """Returns (dx, dh0, grads of A_bar/B_bar/C/D)."""
    saved = expect(record, "scan_recurrent")
    disc: DiscreteSSM = saved["disc"]
    x, states = saved["x"], saved["states"]
    L = x.shape[0]
    dy = np.asarray(dy)
    if dy.shape != (L,):
        raise ShapeError(f"dy must have shape ({L},), got {dy.shape}")
    g_h = np.zeros(disc.Q) if dh_final is None else np.array(dh_final, dtype=float)
    d_A = np.zeros_like(disc.A_bar, dtype=float)
    d_B = np.zeros(disc.Q)
    d_C = np.zeros(disc.Q)
    dx = np.empty(L)
    for k in range(L - 1, -1, -1):
        g_h = g_h + disc.C * dy[k]
        d_C += dy[k] * states[k + 1]
        dx[k] = dy[k] * disc.D + disc.B_bar @ g_h
        d_B += g_h * x[k]
        if disc.diagonal:
            d_A += g_h * states[k]
        else:
            d_A += np.outer(g_h, states[k])
        g_h = _transition_adjoint(disc.A_bar, g_h)
    d_D = float(dy @ x)
    return dx, g_h, SSMGrads(A=d_A, B=d_B, C=d_C, D=d_D)


def ssm_kernel_forward(disc: DiscreteSSM, L: int) -> tuple[np.ndarray, Record]:
    if L < 1:
        raise ShapeError(f"kernel length must be positive, got {L}")
    powers = np.empty((L, disc.Q), dtype=np.result_type(disc.A_bar, disc.B_bar))
    p = disc.B_bar
    for k in range(L):
        powers[k] = p
        p = _transition(disc.A_bar, p)
    kernel = powers @ disc.C
    if not np.all(np.isfinite(kernel)):
        raise NumericRangeError("SSM kernel overflowed; A_bar has spectral radius > 1")
    return kernel, Record("ssm_kernel", {"disc": disc, "powers": powers})


def ssm_kernel(disc: DiscreteSSM, L: int) -> np.ndarray:
    """Taps C A_bar^(k-1) B_bar, k = 1..L. D is applied separately by conv_apply."""
    return ssm_kernel_forward(disc, L)[0]


def ssm_kernel_backward(d_kernel: np.ndarray, record: Record) -> SSMGrads:
    saved = expect(record, "ssm_kernel")
    disc: DiscreteSSM = saved["disc"]
    powers = saved["powers"]
    L = powers.shape[0]
    d_C = d_kernel @ powers
    d_A = np.zeros_like(disc.A_bar, dtype=float)
    g_p = np.zeros(disc.Q)
    for k in range(L - 1, -1, -1):
        g_p = g_p + d_kernel[k] * disc.C
        if k > 0:
            if disc.diagonal:
                d_A += g_p * powers[k - 1]
            else:
                d_A += np.outer(g_p, powers[k - 1])
            g_p = _transition_adjoint(disc.A_bar, g_p)
    return SSMGrads(A=d_A, B=g_p, C=d_C)


def conv_apply_forward(
    kernel: np.ndarray, x: np.ndarray, D: float
) -> tuple[np.ndarray, Record]:
    kernel, x = np.asarray(kernel), np.asarray(x)
    if kernel.ndim != 1 or kernel.shape != x.shape:
        raise ShapeError(
            f"kernel and x must be equal-length vectors, got {kernel.shape} and {x.shape}"
        )
    L = x.shape[0]
    y = np.convolve(kernel, x)[:L] + D * x
    return y, Record("conv_apply", {"kernel": kernel, "x": x, "D": D})


def conv_apply(kernel: np.ndarray, x: np.ndarray, D: float) -> np.ndarray:
    """Causal convolution y_k = sum_j kernel_j x_{k-j+1} plus feedthrough D x_k."""
    return conv_apply_forward(kernel, x, D)[0]


def conv_apply_backward(
    dy: np.ndarray, record: Record
) -> tuple[np.ndarray, np.ndarray, float]:
    """Returns (d_kernel, dx, dD)."""
    saved = expect(record, "conv_apply")
    kernel, x, D = saved["kernel"], saved["x"], saved["D"]
    L = x.shape[0]
    reversed_dy = np.asarray(dy)[::-1]
    d_kernel = np.convolve(reversed_dy, x)[:L][::-1]
    dx = np.convolve(reversed_dy, kernel)[:L][::-1] + D * dy
    return d_kernel, dx, float(np.dot(dy, x))
