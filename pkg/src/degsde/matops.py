"""Small dense linear algebra: matrix exponential, Kalman rank test and the
weighted controllability Gramian used by the coupling plan."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

# Taylor degree after scaling to norm <= 1/2; truncation error (1/2)^19/19! ~ 1e-23.
_TAYLOR_DEGREE = 18
_SCALE_TARGET = 0.5


class GramianError(ValueError):
    """The weighted Gramian is not positive definite at the requested horizon."""


@dataclass(frozen=True)
class KalmanResult:
    rank: int
    k_star: int | None
    satisfied: bool


@dataclass(frozen=True)
class GramianResult:
    q: np.ndarray
    inverse: np.ndarray
    condition_estimate: float
    bound_ratio: float


def _as_square(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def mat_exp(a, t: float = 1.0) -> np.ndarray:
    """Return ``exp(t * a)`` by scaling and squaring a truncated Taylor series."""
    a = _as_square(a)
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    return mat_exp_many(a, np.array([t]))[0]


def mat_exp_many(a, ts) -> np.ndarray:
    """``exp(t * a)`` for every ``t`` in ``ts``; returns shape ``(len(ts), n, n)``.

    A single scaling exponent is chosen from the largest ``|t|`` so the whole
    batch shares one squaring chain.
    """
    a = _as_square(a)
    ts = np.asarray(ts, dtype=float).reshape(-1)
    n = a.shape[0]
    eye = np.eye(n)
    if n == 0:
        return np.zeros((ts.size, 0, 0))
    norm = np.linalg.norm(a, 1) * (np.max(np.abs(ts)) if ts.size else 0.0)
    s = 0 if norm <= _SCALE_TARGET else int(math.ceil(math.log2(norm / _SCALE_TARGET)))
    x = (ts / 2.0**s)[:, None, None] * a[None]
    # Horner evaluation of sum_{j<=deg} x^j / j!
    result = np.broadcast_to(eye, x.shape).copy()
    for j in range(_TAYLOR_DEGREE, 0, -1):
        result = eye + (x @ result) / j
    for _ in range(s):
        result = result @ result
    return result


def kalman_rank(a, mm, tol: float = 1e-10) -> KalmanResult:
    """Numerical rank of ``[M, AM, ..., A^{m-1}M]`` and the smallest full-rank ``k``."""
    a = np.asarray(a, dtype=float)
    mm = np.asarray(mm, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"A must be square, got shape {a.shape}")
    m = a.shape[0]
    if m == 0:
        return KalmanResult(rank=0, k_star=0, satisfied=True)
    if a.shape != (m, m) or mm.ndim != 2 or mm.shape[0] != m:
        raise ValueError(f"dimension mismatch: A {a.shape}, M {mm.shape}")
    blocks = []
    power = mm
    rank = 0
    k_star = None
    for k in range(m):
        blocks.append(power)
        rank = _numerical_rank(np.hstack(blocks), tol)
        if rank == m and k_star is None:
            k_star = k
            break
        power = a @ power
    return KalmanResult(rank=rank, k_star=k_star, satisfied=rank == m)


def _numerical_rank(mat: np.ndarray, tol: float) -> int:
    if mat.size == 0:
        return 0
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def simpson_nodes(upper: float, panel: float) -> tuple[np.ndarray, int]:
    """Nodes ``0, panel/2, panel, ...`` for per-panel Simpson on ``[0, upper]``."""
    n_panels = int(round(upper / panel))
    if n_panels < 1 or abs(n_panels * panel - upper) > 1e-9 * max(1.0, upper):
        raise ValueError(f"panel width {panel} does not divide {upper}")
    return np.linspace(0.0, upper, 2 * n_panels + 1), n_panels


def simpson_cumulative(values: np.ndarray, panel: float) -> np.ndarray:
    """Cumulative per-panel Simpson integral at panel boundaries.

    ``values`` are sampled at the nodes from :func:`simpson_nodes` along
    axis 0; the result has one entry per panel boundary (starting at 0).
    """
    left = values[0:-1:2]
    mid = values[1::2]
    right = values[2::2]
    pieces = (panel / 6.0) * (left + 4.0 * mid + right)
    out = np.zeros((pieces.shape[0] + 1,) + values.shape[1:])
    np.cumsum(pieces, axis=0, out=out[1:])
    return out


def gramian_weight(s, tau: float):
    """``s (tau - s)^+ / tau^2``."""
    s = np.asarray(s, dtype=float)
    return s * np.clip(tau - s, 0.0, None) / tau**2


def gramian(a, mm, t_horizon: float, tau: float, quad_step: float) -> GramianResult:
    """Weighted controllability Gramian ``Q_t`` and its Cholesky-based inverse.

    ``quad_step`` is the Simpson panel width (each panel uses its midpoint),
    so it has to divide ``min(t_horizon, tau)``.
    """
    a = _as_square(a)
    mm = np.asarray(mm, dtype=float)
    m = a.shape[0]
    if tau <= 0:
        raise ValueError("tau must be positive")
    if mm.ndim != 2 or mm.shape[0] != m:
        raise ValueError(f"dimension mismatch: A {a.shape}, M {mm.shape}")
    upper = min(t_horizon, tau)
    nodes, _ = simpson_nodes(upper, quad_step)
    e = mat_exp_many(-a, nodes)  # e^{-sA}
    em = e @ mm
    integrand = gramian_weight(nodes, tau)[:, None, None] * (em @ np.swapaxes(em, 1, 2))
    q = simpson_cumulative(integrand, quad_step)[-1]
    q = 0.5 * (q + q.T)
    if m == 0:
        return GramianResult(q=q, inverse=q.copy(), condition_estimate=1.0, bound_ratio=0.0)
    scale = max(np.max(np.abs(q)), np.finfo(float).tiny)
    try:
        factor = cho_factor(q, lower=True)
    except np.linalg.LinAlgError as exc:
        raise GramianError(f"Q_t is not positive definite at t={upper}: rank condition fails") from exc
    pivots = np.abs(np.diag(factor[0]))
    if np.min(pivots) ** 2 <= 1e-14 * scale:
        raise GramianError(f"Q_t is numerically singular at t={upper}: rank condition fails")
    inverse = cho_solve(factor, np.eye(m))
    inverse = 0.5 * (inverse + inverse.T)
    cond = float(np.linalg.cond(q))
    k = kalman_rank(a, mm).k_star or 0
    reference = tau * min(upper, 1.0) ** (-2 * (k + 1))
    bound_ratio = float(np.linalg.norm(inverse, 2) / reference)
    return GramianResult(q=q, inverse=inverse, condition_estimate=cond, bound_ratio=bound_ratio)
