"""Functional SDE instances, initial segments, coefficient oracles and
Lyapunov data, plus the two built-in worked examples and an OU benchmark.

The state is ``(X, Y)`` with ``X`` in R^m (the degenerate block, driven only
through ``dX = (AX + MY) dt``) and ``Y`` in R^d (driven by ``sigma dB``).
Arrays carry the m+d state components in their last axis, ``x`` first.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .matops import kalman_rank

_SQRT_EPS = math.sqrt(np.finfo(float).eps)


# ---------------------------------------------------------------------------
# Segments


@dataclass(frozen=True)
class Segment:
    """A function on ``[-r0, 0]`` stored at ``n_hist + 1`` uniform nodes.

    ``values[j]`` is the value at ``theta_j = -r0 + j * r0 / n_hist``;
    evaluation between nodes is linear interpolation.
    """

    r0: float
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 2:
            raise ValueError("segment values must have shape (n_hist + 1, dim) with n_hist >= 1")
        if not np.all(np.isfinite(values)):
            raise ValueError("segment values must be finite")
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_hist(self) -> int:
        return self.values.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def dtheta(self) -> float:
        return self.r0 / self.n_hist

    @property
    def thetas(self) -> np.ndarray:
        return np.linspace(-self.r0, 0.0, self.n_hist + 1)

    @property
    def head(self) -> np.ndarray:
        """Value at ``theta = 0``."""
        return self.values[-1]

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def eval(self, theta: float) -> np.ndarray:
        if not (-self.r0 - 1e-12 * self.r0 <= theta <= 1e-12 * self.r0):
            raise ValueError(f"theta={theta} outside [-{self.r0}, 0]")
        pos = (theta + self.r0) / self.dtheta
        j = min(max(int(math.floor(pos)), 0), self.n_hist - 1)
        frac = min(max(pos - j, 0.0), 1.0)
        if frac == 0.0:
            return self.values[j].copy()
        if frac == 1.0:
            return self.values[j + 1].copy()
        return (1.0 - frac) * self.values[j] + frac * self.values[j + 1]

    def resample(self, n_hist: int) -> "Segment":
        if n_hist == self.n_hist:
            return self
        grid = np.linspace(-self.r0, 0.0, n_hist + 1)
        return Segment(self.r0, np.stack([self.eval(t) for t in grid]))

    def __add__(self, other: "Segment") -> "Segment":
        _check_compatible(self, other)
        return Segment(self.r0, self.values + other.values)

    def __sub__(self, other: "Segment") -> "Segment":
        _check_compatible(self, other)
        return Segment(self.r0, self.values - other.values)

    def __mul__(self, c: float) -> "Segment":
        return Segment(self.r0, c * self.values)

    __rmul__ = __mul__

    @classmethod
    def constant(cls, r0: float, n_hist: int, vector) -> "Segment":
        vec = np.atleast_1d(np.asarray(vector, dtype=float))
        return cls(r0, np.tile(vec, (n_hist + 1, 1)))

    @classmethod
    def from_function(cls, r0: float, n_hist: int, fn: Callable[[float], np.ndarray]) -> "Segment":
        grid = np.linspace(-r0, 0.0, n_hist + 1)
        return cls(r0, np.stack([np.atleast_1d(np.asarray(fn(t), dtype=float)) for t in grid]))

    @classmethod
    def zeros(cls, r0: float, n_hist: int, dim: int) -> "Segment":
        return cls(r0, np.zeros((n_hist + 1, dim)))


def _check_compatible(a: Segment, b: Segment) -> None:
    if a.values.shape != b.values.shape or not math.isclose(a.r0, b.r0):
        raise ValueError("segments live on different grids")


def segment_eval(s: Segment, theta: float) -> np.ndarray:
    return s.eval(theta)


def fd_directional(fn, point, direction, step: float | None = None):
    """Central difference ``(f(p + h u) - f(p - h u)) / (2 h)``.

    The default step is ``sqrt(eps) * (1 + |p|)``.
    """
    point = np.asarray(point, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if step is None:
        step = _SQRT_EPS * (1.0 + float(np.max(np.abs(point), initial=0.0)))
    if not step > 0:
        raise ValueError("step must be positive")
    hi = np.asarray(fn(point + step * direction), dtype=float)
    lo = np.asarray(fn(point - step * direction), dtype=float)
    if not (np.all(np.isfinite(hi)) and np.all(np.isfinite(lo))):
        raise FloatingPointError("non-finite evaluation in finite difference")
    return (hi - lo) / (2.0 * step)


def trapezoid_weights(n_hist: int, r0: float, weight_fn=None) -> np.ndarray:
    """Trapezoid weights on the segment grid, multiplied by ``weight_fn(theta)``."""
    dtheta = r0 / n_hist
    wq = np.full(n_hist + 1, dtheta)
    wq[0] = wq[-1] = 0.5 * dtheta
    if weight_fn is not None:
        wq = wq * np.asarray(weight_fn(np.linspace(-r0, 0.0, n_hist + 1)), dtype=float)
    return wq


# ---------------------------------------------------------------------------
# Coefficient oracles


class CoefficientOracle:
    """Drift coefficients ``Z(x, y)`` and ``b(segment)`` with directional derivatives.

    All maps are vectorised: ``x`` has shape ``(..., m)``, ``y`` ``(..., d)``,
    segments are arrays ``(..., n_hist + 1, m + d)`` on the uniform grid.
    Subclasses must be pure (no hidden mutable state) so they can be shared
    by concurrent path workers.  The ``*_path`` methods evaluate along a whole
    batch of stored paths and may be overridden with faster forms.
    """

    m: int
    d: int
    r0: float

    def z_value(self, x, y):
        raise NotImplementedError

    def b_value(self, seg):
        raise NotImplementedError

    def z_dir(self, x, y, u):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        u = np.asarray(u, dtype=float)
        m = self.m

        def f(z):
            return self.z_value(z[..., :m], z[..., m:])

        z = np.concatenate([x, y], axis=-1)
        step = _SQRT_EPS * (1.0 + np.max(np.abs(z)))
        return fd_directional(f, z, u, step)

    def b_dir(self, seg, useg):
        seg = np.asarray(seg, dtype=float)
        step = _SQRT_EPS * (1.0 + np.max(np.abs(seg)))
        return fd_directional(self.b_value, seg, np.asarray(useg, dtype=float), step)

    # -- path-level evaluation -------------------------------------------------

    def b_path(self, states, n_hist):
        """``b`` at every step ``n = 0..N-1``; returns ``(P, N, d)``."""
        n_steps = states.shape[1] - n_hist - 1
        out = np.empty(states.shape[:1] + (n_steps, self.d))
        for n in range(n_steps):
            out[:, n] = self.b_value(states[:, n:n + n_hist + 1])
        return out

    def b_dir_path(self, states, theta, n_hist):
        """Directional derivative of ``b`` along the windows of ``theta``."""
        n_steps = states.shape[1] - n_hist - 1
        out = np.empty(states.shape[:1] + (n_steps, self.d))
        for n in range(n_steps):
            win = states[:, n:n + n_hist + 1]
            out[:, n] = self.b_dir(win, np.broadcast_to(theta[n:n + n_hist + 1], win.shape))
        return out

    def b_diff_path(self, states, theta, eps, n_hist):
        """``b(segment) - b(segment + eps * theta window)`` at every step."""
        n_steps = states.shape[1] - n_hist - 1
        out = np.empty(states.shape[:1] + (n_steps, self.d))
        for n in range(n_steps):
            win = states[:, n:n + n_hist + 1]
            out[:, n] = self.b_value(win) - self.b_value(win + eps * theta[n:n + n_hist + 1])
        return out


class CallableCoefficients(CoefficientOracle):
    """Coefficients given as user callables; derivatives default to central differences."""

    def __init__(self, m, d, r0, z, b, z_dir=None, b_dir=None):
        self.m, self.d, self.r0 = int(m), int(d), float(r0)
        self._z, self._b = z, b
        self._z_dir, self._b_dir = z_dir, b_dir

    def z_value(self, x, y):
        return np.asarray(self._z(np.asarray(x, dtype=float), np.asarray(y, dtype=float)), dtype=float)

    def b_value(self, seg):
        return np.asarray(self._b(np.asarray(seg, dtype=float)), dtype=float)

    def z_dir(self, x, y, u):
        if self._z_dir is None:
            return super().z_dir(x, y, u)
        return np.asarray(self._z_dir(x, y, u), dtype=float)

    def b_dir(self, seg, useg):
        if self._b_dir is None:
            return super().b_dir(seg, useg)
        return np.asarray(self._b_dir(seg, useg), dtype=float)


class PolyDelayCoefficients(CoefficientOracle):
    """Polynomial drift family covering the built-in models.

    ``Z(x, y) = Kx x + Ky y + c3 * y**3`` (cube taken componentwise) and
    ``b(xi) = Bx xi_1(-r0) + By xi_2(-r0) + b3 * xi_2(-r0)**3
    + G * integral(delay_weight(theta) xi_1(theta) dtheta)``,
    the integral by the trapezoid rule on the segment grid.
    """

    def __init__(self, m, d, r0, Kx=None, Ky=None, c3=None, Bx=None, By=None, b3=None, G=None,
                 delay_weight=None):
        self.m, self.d, self.r0 = int(m), int(d), float(r0)
        m, d = self.m, self.d
        self.Kx = _mat(Kx, (d, m))
        self.Ky = _mat(Ky, (d, d))
        self.c3 = _vec(c3, d)
        self.Bx = _mat(Bx, (d, m))
        self.By = _mat(By, (d, d))
        self.b3 = _vec(b3, d)
        self.G = _mat(G, (d, m))
        self.delay_weight = _weight_fn(delay_weight, self.r0)
        self._wq_cache: dict[int, np.ndarray] = {}

    def weights(self, n_hist: int) -> np.ndarray:
        wq = self._wq_cache.get(n_hist)
        if wq is None:
            wq = trapezoid_weights(n_hist, self.r0, self.delay_weight)
            wq.setflags(write=False)
            self._wq_cache[n_hist] = wq
        return wq

    def kernel_params(self, n_hist: int):
        c = np.ascontiguousarray
        return (c(self.Kx), c(self.Ky), c(self.c3), c(self.Bx), c(self.By), c(self.b3), c(self.G),
                c(self.weights(n_hist)))

    def z_value(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return x @ self.Kx.T + y @ self.Ky.T + self.c3 * y**3

    def z_dir(self, x, y, u):
        y = np.asarray(y, dtype=float)
        u = np.asarray(u, dtype=float)
        m = self.m
        return u[..., :m] @ self.Kx.T + u[..., m:] @ self.Ky.T + 3.0 * self.c3 * y**2 * u[..., m:]

    def _linear(self, seg):
        m = self.m
        n_hist = seg.shape[-2] - 1
        out = seg[..., 0, :m] @ self.Bx.T + seg[..., 0, m:] @ self.By.T
        if m:
            out = out + (self.weights(n_hist) @ seg[..., :m]) @ self.G.T
        return out

    def b_value(self, seg):
        seg = np.asarray(seg, dtype=float)
        yd = seg[..., 0, self.m:]
        return self._linear(seg) + self.b3 * yd**3

    def b_dir(self, seg, useg):
        seg = np.asarray(seg, dtype=float)
        useg = np.asarray(useg, dtype=float)
        yd = seg[..., 0, self.m:]
        return self._linear(useg) + 3.0 * self.b3 * yd**2 * useg[..., 0, self.m:]

    def _linear_windows(self, theta, n_hist):
        """Linear part of ``b`` on every window of a single deterministic path."""
        from numpy.lib.stride_tricks import sliding_window_view

        n_steps = theta.shape[0] - n_hist - 1
        m = self.m
        out = theta[:n_steps, :m] @ self.Bx.T + theta[:n_steps, m:] @ self.By.T
        if m:
            win = sliding_window_view(theta[:-1, :m], n_hist + 1, axis=0)  # (N, m, n_hist+1)
            out = out + (win @ self.weights(n_hist)) @ self.G.T
        return out

    def b_path(self, states, n_hist):
        n_steps = states.shape[1] - n_hist - 1
        yd = states[:, :n_steps, self.m:]
        out = states[:, :n_steps, :self.m] @ self.Bx.T + yd @ self.By.T + self.b3 * yd**3
        if self.m:
            wq = self.weights(n_hist)
            integ = np.empty(states.shape[:1] + (n_steps, self.m))
            for n in range(n_steps):
                integ[:, n] = wq @ states[:, n:n + n_hist + 1, :self.m]
            out = out + integ @ self.G.T
        return out

    def b_dir_path(self, states, theta, n_hist):
        n_steps = states.shape[1] - n_hist - 1
        lin = self._linear_windows(theta, n_hist)
        yd = states[:, :n_steps, self.m:]
        return lin[None] + 3.0 * self.b3 * yd**2 * theta[None, :n_steps, self.m:]

    def b_diff_path(self, states, theta, eps, n_hist):
        n_steps = states.shape[1] - n_hist - 1
        lin = self._linear_windows(theta, n_hist)
        yd = states[:, :n_steps, self.m:]
        shifted = yd + eps * theta[None, :n_steps, self.m:]
        return -eps * lin[None] + self.b3 * (yd**3 - shifted**3)

    def describe(self) -> dict:
        return {
            "form": "poly",
            "Kx": self.Kx.tolist(), "Ky": self.Ky.tolist(), "c3": self.c3.tolist(),
            "Bx": self.Bx.tolist(), "By": self.By.tolist(), "b3": self.b3.tolist(),
            "G": self.G.tolist(),
        }


def _mat(value, shape) -> np.ndarray:
    if value is None:
        return np.zeros(shape)
    arr = np.array(value, dtype=float).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError("coefficient matrix has non-finite entries")
    return arr


def _vec(value, n) -> np.ndarray:
    if value is None:
        return np.zeros(n)
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()
    return arr


def _weight_fn(weight, r0):
    """Normalise a delay weight given as constant, callable or uniform samples."""
    if weight is None:
        return None
    if callable(weight):
        return lambda th: np.broadcast_to(np.asarray(weight(th), dtype=float), np.shape(th))
    arr = np.asarray(weight, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("delay weight must be finite")
    if arr.ndim == 0:
        c = float(arr)
        return lambda th: np.full(np.shape(th), c)
    grid = np.linspace(-r0, 0.0, arr.size)
    return lambda th: np.interp(th, grid, arr)


# ---------------------------------------------------------------------------
# Model and Lyapunov data


@dataclass(frozen=True)
class ModelSpec:
    m: int
    d: int
    r0: float
    a: np.ndarray
    mm: np.ndarray
    sigma: np.ndarray
    sigma_inv: np.ndarray
    coeffs: CoefficientOracle
    k_star: int
    name: str = "custom"
    params: Mapping = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.m + self.d

    @property
    def is_poly(self) -> bool:
        return isinstance(self.coeffs, PolyDelayCoefficients)

    @classmethod
    def build(cls, a, mm, sigma, coeffs: CoefficientOracle, r0: float, name="custom", params=None):
        a = np.array(a, dtype=float)
        sigma = np.atleast_2d(np.array(sigma, dtype=float))
        d = sigma.shape[0]
        m = 0 if a.size == 0 else a.shape[0]
        a = a.reshape(m, m)
        mm = np.array(mm, dtype=float).reshape(m, d)
        if sigma.shape != (d, d):
            raise ValueError("sigma must be square")
        if not r0 > 0:
            raise ValueError("r0 must be positive")
        if coeffs.m != m or coeffs.d != d:
            raise ValueError("coefficient oracle dimensions do not match the model")
        if not math.isclose(coeffs.r0, r0):
            raise ValueError("coefficient oracle r0 does not match the model")
        try:
            sigma_inv = np.linalg.inv(sigma)
        except np.linalg.LinAlgError as exc:
            raise ValueError("sigma must be invertible") from exc
        if not np.allclose(sigma @ sigma_inv, np.eye(d), atol=1e-10, rtol=0):
            raise ValueError("sigma is numerically singular")
        kr = kalman_rank(a, mm)
        if not kr.satisfied:
            raise ValueError(f"rank condition fails: rank {kr.rank} < m = {m}")
        for arr in (a, mm, sigma, sigma_inv):
            arr.setflags(write=False)
        return cls(m=m, d=d, r0=float(r0), a=a, mm=mm, sigma=sigma, sigma_inv=sigma_inv,
                   coeffs=coeffs, k_star=int(kr.k_star), name=name, params=dict(params or {}))

    def describe(self) -> dict:
        out = {"name": self.name, "m": self.m, "d": self.d, "r0": self.r0,
               "A": self.a.tolist(), "M": self.mm.tolist(), "sigma": self.sigma.tolist(),
               "k_star": self.k_star}
        out.update({k: v for k, v in self.params.items()})
        return out


@dataclass(frozen=True)
class LyapunovSuite:
    """Lyapunov data for the assumption checks.

    Maps take points ``z`` of shape ``(..., m + d)``.  ``u_value`` is the
    state function of the two-point drift condition; ``u_dist`` is the
    increasing function of a distance used by the strengthened Lipschitz
    conditions.  ``b_tilde`` is the discrete-delay drift, when the model
    has one.
    """

    m: int
    w_value: Callable
    w_grad2: Callable
    l_w: Callable
    u_value: Callable | None = None
    u_dist: Callable | None = None
    w_tilde_log: Callable | None = None
    l_w_tilde_ratio: Callable | None = None
    b_tilde: Callable | None = None
    lw_bound: Callable | None = None
    constants: Mapping[str, float] = field(default_factory=dict)

    def two_point_lw(self, z, zp):
        """Generator of the discrete-delay equation applied to ``W``."""
        if self.b_tilde is None:
            raise ValueError("suite has no discrete-delay drift")
        return self.l_w(z) + np.sum(self.b_tilde(zp) * self.w_grad2(z), axis=-1)

    def w_sup(self, seg: Segment) -> float:
        return float(np.max(self.w_value(seg.values)))


# ---------------------------------------------------------------------------
# Built-in models


def make_example_4_1(eps: float = 1.0, delay_weight=1.0, r0: float = 0.5):
    """Two-dimensional model with cubic damping and distributed delay.

    ``dX = -(X + Y) dt``,
    ``dY = dB + (-eps Y^3 + Y(t - r0) + int delay_weight(th) X(t + th) dth) dt``.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    coeffs = PolyDelayCoefficients(1, 1, r0, c3=[-eps], By=[[1.0]], G=[[1.0]], delay_weight=delay_weight)
    model = ModelSpec.build([[-1.0]], [[-1.0]], [[1.0]], coeffs, r0, name="example-4.1",
                            params={"eps": float(eps)})
    wabs = trapezoid_weights(512, r0, coeffs.delay_weight)
    weight_l1 = float(np.sum(np.abs(wabs))) if coeffs.delay_weight is not None else 0.0

    def w_value(z):
        z = np.asarray(z, dtype=float)
        return 1.0 + z[..., 0] ** 2 + z[..., 1] ** 2

    def w_grad2(z):
        return 2.0 * np.asarray(z, dtype=float)[..., 1:2]

    def l_w(z):
        z = np.asarray(z, dtype=float)
        x, y = z[..., 0], z[..., 1]
        return 1.0 - 2.0 * x * (x + y) - 2.0 * eps * y**4

    lam = max(3.0, 2.0 * (1.0 + weight_l1), 4.5 * eps, math.sqrt(2.0) * max(weight_l1, 1.0))
    suite = LyapunovSuite(
        m=1, w_value=w_value, w_grad2=w_grad2, l_w=l_w,
        u_dist=lambda r: np.asarray(r, dtype=float) ** 2,
        constants={"lambda": lam, "lambda_A1": 3.0, "l": 1.0, "delta_lyap": 4.0},
    )
    return model, suite


EXP_DRIFT_EPS_DEFAULT = 0.1
_W_INF_4_2 = -1e-4  # min of x^2/4 + y^4/4 + xy/10, at y^2 = 1/50, x = -y/5


def exp_drift_constant(eps_param: float) -> float:
    return 0.5 * (0.35**2 / eps_param + 1.4) ** 2


def make_example_4_2(r0: float = 0.5, exp_eps: float = EXP_DRIFT_EPS_DEFAULT):
    """Two-dimensional model with super-linear discrete delay.

    ``dX = -(X + Y) dt``,
    ``dY = dB + (-Y^3 + Y(t - r0)^3 / 4 + X/2 - Y) dt``.
    """
    coeffs = PolyDelayCoefficients(1, 1, r0, Kx=[[0.5]], Ky=[[-1.0]], c3=[-1.0], b3=[0.25])
    model = ModelSpec.build([[-1.0]], [[-1.0]], [[1.0]], coeffs, r0, name="example-4.2")

    def w_value(z):
        z = np.asarray(z, dtype=float)
        return 1.0 + z[..., 0] ** 2 + z[..., 1] ** 4

    def w_grad2(z):
        return 4.0 * np.asarray(z, dtype=float)[..., 1:2] ** 3

    def l_w(z):
        z = np.asarray(z, dtype=float)
        x, y = z[..., 0], z[..., 1]
        return -2.0 * x * (x + y) + 4.0 * y**3 * (0.5 * x - y - y**3) + 6.0 * y**2

    def b_tilde(zp):
        return 0.25 * np.asarray(zp, dtype=float)[..., 1:2] ** 3

    def w_tilde_log(z):
        z = np.asarray(z, dtype=float)
        x, y = z[..., 0], z[..., 1]
        return 0.25 * (x**2 + y**4) + 0.1 * x * y - _W_INF_4_2

    def l_w_tilde_ratio(z, zp):
        z = np.asarray(z, dtype=float)
        zp = np.asarray(zp, dtype=float)
        x, y, yp = z[..., 0], z[..., 1], zp[..., 1]
        wx = 0.5 * x + 0.1 * y
        wy = y**3 + 0.1 * x
        return -(x + y) * wx + wy * (0.5 * x - y - y**3 + 0.25 * yp**3) + 1.5 * y**2 + 0.5 * wy**2

    def lw_bound(z, zp):
        # intermediate bound on the two-point generator
        y = np.asarray(z, dtype=float)[..., 1]
        yp = np.asarray(zp, dtype=float)[..., 1]
        return y**2 - 4.0 * y**4 - 2.5 * y**6 + 0.5 * yp**6

    lam1 = min(0.2325 - exp_eps, 0.5)
    suite = LyapunovSuite(
        m=1, w_value=w_value, w_grad2=w_grad2, l_w=l_w,
        u_value=lambda z: np.asarray(z, dtype=float)[..., 1] ** 6,
        w_tilde_log=w_tilde_log, l_w_tilde_ratio=l_w_tilde_ratio, b_tilde=b_tilde, lw_bound=lw_bound,
        constants={
            "lyap_alpha": 1.0, "beta": 2.5, "gamma": 0.5, "l": 0.5, "nu": 40.0,
            "K": exp_drift_constant(exp_eps) + lam1, "lambda1": lam1, "lambda2": 0.0,
            "lambda3": 0.175, "lambda4": 0.1375, "exp_eps": exp_eps,
        },
    )
    return model, suite


def make_ou(r0: float = 0.5, rate: float = 1.0, sigma: float = 1.0):
    """Scalar OU benchmark with no degenerate block: ``dY = -rate Y dt + sigma dB``."""
    coeffs = PolyDelayCoefficients(0, 1, r0, Ky=[[-rate]])
    model = ModelSpec.build(np.zeros((0, 0)), np.zeros((0, 1)), [[sigma]], coeffs, r0, name="ou",
                            params={"rate": float(rate)})

    def w_value(z):
        return 1.0 + np.asarray(z, dtype=float)[..., 0] ** 2

    def w_grad2(z):
        return 2.0 * np.asarray(z, dtype=float)[..., 0:1]

    def l_w(z):
        y = np.asarray(z, dtype=float)[..., 0]
        return -2.0 * rate * y**2 + sigma**2

    suite = LyapunovSuite(m=0, w_value=w_value, w_grad2=w_grad2, l_w=l_w,
                          constants={"lambda": max(sigma**2, 1.0), "l": 0.0})
    return model, suite


# ---------------------------------------------------------------------------
# Model definition files

_EXAMPLE_KEYS = {
    "4.1": {"eps", "delay_weight", "r0"},
    "4.2": {"r0", "exp_eps"},
    "ou": {"r0", "rate", "sigma"},
}
_EXPLICIT_KEYS = {"m", "d", "r0", "A", "M", "sigma", "coefficients", "name"}
_POLY_KEYS = {"form", "Kx", "Ky", "c3", "Bx", "By", "b3", "G", "delay_weight"}


class ModelFileError(ValueError):
    """Invalid model definition; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def load_model(source, field_path: str = "model"):
    """Build ``(ModelSpec, LyapunovSuite | None)`` from a model definition.

    ``source`` is a built-in name (``"4.1"``, ``"4.2"``, ``"ou"``), a mapping,
    or a path to a JSON file holding such a mapping.
    """
    if isinstance(source, (str, Path)):
        text = str(source)
        if text in _EXAMPLE_KEYS:
            source = {"example": text}
        else:
            p = Path(text)
            if not p.is_file():
                raise ModelFileError(field_path, f"unknown built-in model or missing file {text!r}")
            try:
                source = json.loads(p.read_text())
            except json.JSONDecodeError as exc:
                raise ModelFileError(field_path, f"invalid JSON: {exc}") from exc
    if not isinstance(source, Mapping):
        raise ModelFileError(field_path, "expected an object")
    if "example" in source:
        name = str(source["example"])
        if name not in _EXAMPLE_KEYS:
            raise ModelFileError(f"{field_path}.example", f"unknown example {name!r}")
        extra = set(source) - {"example"} - _EXAMPLE_KEYS[name]
        if extra:
            raise ModelFileError(f"{field_path}.{sorted(extra)[0]}", "unknown field")
        kwargs = {k: v for k, v in source.items() if k != "example"}
        maker = {"4.1": make_example_4_1, "4.2": make_example_4_2, "ou": make_ou}[name]
        try:
            return maker(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ModelFileError(field_path, str(exc)) from exc
    extra = set(source) - _EXPLICIT_KEYS
    if extra:
        raise ModelFileError(f"{field_path}.{sorted(extra)[0]}", "unknown field")
    for key in ("m", "d", "r0", "A", "M", "sigma", "coefficients"):
        if key not in source:
            raise ModelFileError(f"{field_path}.{key}", "missing field")
    m, d, r0 = int(source["m"]), int(source["d"]), float(source["r0"])
    coef = source["coefficients"]
    cpath = f"{field_path}.coefficients"
    if not isinstance(coef, Mapping):
        raise ModelFileError(cpath, "expected an object")
    form = coef.get("form", "poly")
    if form not in ("poly", "zero"):
        raise ModelFileError(f"{cpath}.form", f"unknown coefficient form {form!r}")
    extra = set(coef) - _POLY_KEYS
    if extra:
        raise ModelFileError(f"{cpath}.{sorted(extra)[0]}", "unknown field")
    try:
        kwargs = {k: v for k, v in coef.items() if k != "form"} if form == "poly" else {}
        coeffs = PolyDelayCoefficients(m, d, r0, **kwargs)
        a = np.array(source["A"], dtype=float).reshape(m, m)
        mm = np.array(source["M"], dtype=float).reshape(m, d)
        model = ModelSpec.build(a, mm, source["sigma"], coeffs, r0, name=source.get("name", "custom"))
    except ValueError as exc:
        raise ModelFileError(field_path, str(exc)) from exc
    return model, None
