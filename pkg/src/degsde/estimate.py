"""Monte Carlo estimators: terminal functionals, the Bismut gradient, a
central finite-difference oracle with common random numbers and the
Girsanov identity check."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .coupling import CouplingPlan, bismut_weight_path, bismut_weights, build_plan, girsanov_terms  # noqa: F401
from .model import ModelSpec, Segment
from .simulate import SimGrid, brownian_block, map_chunks, simulate_batch


# ---------------------------------------------------------------------------
# Terminal functionals


@dataclass(frozen=True)
class TerminalFunctional:
    """Cylindrical functional of the terminal segment.

    ``fn(terminal, m)`` receives terminal segments of shape
    ``(P, n_hist + 1, m + d)`` and returns ``P`` values.
    """

    name: str
    fn: Callable[[np.ndarray, int], np.ndarray]
    positivity: bool = False
    params: tuple = ()

    def batch(self, terminal: np.ndarray, m: int) -> np.ndarray:
        return np.asarray(self.fn(terminal, m), dtype=float)

    def eval(self, seg: Segment, m: int) -> float:
        return float(self.batch(seg.values[None], m)[0])

    @property
    def is_constant(self) -> bool:
        return self.name == "const"


def _component(params, m):
    return m + int(params.get("component", 0))


def make_functional(name: str, **params) -> TerminalFunctional:
    """Functional from the built-in registry (see :data:`FUNCTIONALS`)."""
    if name not in FUNCTIONALS:
        raise KeyError(f"unknown functional {name!r}; choose from {sorted(FUNCTIONALS)}")
    builder, allowed = FUNCTIONALS[name]
    extra = set(params) - allowed
    if extra:
        raise KeyError(f"functional {name!r} does not take {sorted(extra)}")
    return builder(params)


def _const(p):
    c = float(p.get("value", 1.0))
    return TerminalFunctional("const", lambda t, m: np.full(t.shape[0], c), positivity=c > 0,
                              params=(("value", c),))


def _y_t(p):
    return TerminalFunctional("y_T", lambda t, m: t[:, -1, _component(p, m)],
                              params=tuple(sorted(p.items())))


def _x_t(p):
    i = int(p.get("component", 0))
    return TerminalFunctional("x_T", lambda t, m: t[:, -1, i], params=tuple(sorted(p.items())))


def _y_t_sq(p):
    return TerminalFunctional("y_T_sq", lambda t, m: t[:, -1, _component(p, m)] ** 2,
                              params=tuple(sorted(p.items())))


def _tanh_y(p):
    return TerminalFunctional("tanh_y", lambda t, m: np.tanh(t[:, -1, _component(p, m)]),
                              params=tuple(sorted(p.items())))


def _one_plus_tanh2(p):
    return TerminalFunctional("one_plus_tanh2", lambda t, m: 1.0 + np.tanh(t[:, -1, _component(p, m)]) ** 2,
                              positivity=True, params=tuple(sorted(p.items())))


def _exp_neg_sq(p):
    # exp(-|z(T)|^2), bounded and positive
    return TerminalFunctional("exp_neg_sq", lambda t, m: np.exp(-np.sum(t[:, -1] ** 2, axis=1)),
                              positivity=True)


def _mean_y(p):
    # average of Y over the terminal window (trapezoid)
    def fn(t, m):
        y = t[:, :, _component(p, m)]
        return (0.5 * (y[:, 0] + y[:, -1]) + y[:, 1:-1].sum(axis=1)) / (t.shape[1] - 1)
    return TerminalFunctional("mean_y", fn, params=tuple(sorted(p.items())))


FUNCTIONALS = {
    "const": (_const, {"value"}),
    "x_T": (_x_t, {"component"}),
    "y_T": (_y_t, {"component"}),
    "y_T_sq": (_y_t_sq, {"component"}),
    "tanh_y": (_tanh_y, {"component"}),
    "one_plus_tanh2": (_one_plus_tanh2, {"component"}),
    "exp_neg_sq": (_exp_neg_sq, set()),
    "mean_y": (_mean_y, {"component"}),
}


# ---------------------------------------------------------------------------
# Results


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_err: float
    n: int
    n_rejected: int = 0

    @classmethod
    def from_samples(cls, samples: np.ndarray, n_rejected: int = 0) -> "Estimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        if n < 2:
            raise ValueError("need at least two accepted samples")
        mean = float(np.mean(samples))
        se = float(np.std(samples, ddof=1) / math.sqrt(n))
        return cls(mean=mean, std_err=se, n=n, n_rejected=int(n_rejected))

    def to_dict(self) -> dict:
        return asdict(self)


def z_score(a: Estimate, b: Estimate) -> float:
    se = math.hypot(a.std_err, b.std_err)
    diff = abs(a.mean - b.mean)
    if se == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / se


@dataclass(frozen=True)
class GradientReport:
    bismut: Estimate
    fd: Estimate
    z_score: float
    weight_variance: float

    def to_dict(self) -> dict:
        return {"bismut": self.bismut.to_dict(), "fd": self.fd.to_dict(),
                "z_score": self.z_score, "weight_variance": self.weight_variance}


@dataclass(frozen=True)
class GirsanovCheck:
    lhs: Estimate          # E[R f(terminal)]
    rhs: Estimate          # P_T f(xi + eps h)
    r_mean: Estimate       # E[R]
    z_score: float         # combined standard errors
    z_score_paired: float  # standard error of the per-path difference
    r_z_score: float       # |E R - 1| / SE
    n_nonfinite: int
    valid: bool

    def to_dict(self) -> dict:
        return {"lhs": self.lhs.to_dict(), "rhs": self.rhs.to_dict(), "r_mean": self.r_mean.to_dict(),
                "z_score": self.z_score, "z_score_paired": self.z_score_paired,
                "r_z_score": self.r_z_score, "n_nonfinite": self.n_nonfinite, "valid": self.valid}


# ---------------------------------------------------------------------------
# Path batches


def _check_grid(model: ModelSpec, grid: SimGrid, T: float, n_paths: int):
    if not math.isclose(grid.T, T, rel_tol=1e-9):
        raise ValueError(f"grid horizon {grid.T} does not match T={T}")
    if not math.isclose(grid.r0, model.r0, rel_tol=1e-9):
        raise ValueError("grid delay does not match the model")
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")


def _batch(model, xi, grid, seed, start, count, backend):
    dB = brownian_block(seed, start, count, grid.n_steps, model.d, grid.dt, backend)
    states, bad = simulate_batch(model, xi.resample(grid.n_hist), grid, dB, backend)
    return states, dB, bad


def _gather(parts):
    return [np.concatenate(col) for col in zip(*parts)]


def functional_samples(model, xi, f, grid, n_paths, seed, threads=1, backend=None):
    """Per-path ``f(terminal)`` and the accepted-path mask."""
    def work(start, count):
        states, _, bad = _batch(model, xi, grid, seed, start, count, backend)
        ok = bad < 0
        vals = np.zeros(count)
        vals[ok] = f.batch(states[ok, grid.n_steps:], model.m)
        return vals, ok
    return _gather(map_chunks(work, n_paths, threads))


def estimate_functional(model: ModelSpec, xi: Segment, f: TerminalFunctional, T: float, n_paths: int,
                        seed: int, grid: SimGrid, threads: int = 1, backend=None) -> Estimate:
    _check_grid(model, grid, T, n_paths)
    vals, ok = functional_samples(model, xi, f, grid, n_paths, seed, threads, backend)
    if not ok.any():
        raise FloatingPointError("all paths rejected")
    return Estimate.from_samples(vals[ok], int(np.sum(~ok)))


def bismut_samples(model, xi, plan, f, n_paths, seed, threads=1, backend=None):
    """Per-path ``(f(terminal), weight, accepted)`` along the plan's grid."""
    grid = plan.grid

    def work(start, count):
        states, dB, bad = _batch(model, xi, grid, seed, start, count, backend)
        ok = bad < 0
        fv = np.zeros(count)
        w = np.zeros(count)
        if ok.any():
            fv[ok] = f.batch(states[ok, grid.n_steps:], model.m)
            w[ok] = bismut_weights(model, plan, states[ok], dB[ok])
        ok &= np.isfinite(w) & np.isfinite(fv)
        return fv, w, ok
    return _gather(map_chunks(work, n_paths, threads))


def estimate_gradient_bismut(model: ModelSpec, xi: Segment, h: Segment, f: TerminalFunctional, T: float,
                             n_paths: int, seed: int, grid: SimGrid, control_variate: bool = True,
                             threads: int = 1, backend=None, plan: CouplingPlan | None = None,
                             return_weight_variance: bool = False):
    """Bismut estimate of ``grad_h P_T f(xi)``.

    With ``control_variate`` the sample mean of ``f`` is subtracted before
    multiplying by the (mean-zero) weight.
    """
    _check_grid(model, grid, T, n_paths)
    if plan is None:
        plan = build_plan(model, T, h, grid)
    fv, w, ok = bismut_samples(model, xi, plan, f, n_paths, seed, threads, backend)
    if not ok.any():
        raise FloatingPointError("all paths rejected")
    fv, w = fv[ok], w[ok]
    centred = fv - np.mean(fv) if control_variate else fv
    est = Estimate.from_samples(centred * w, int(np.sum(~ok)))
    if return_weight_variance:
        return est, float(np.var(w, ddof=1))
    return est


def default_fd_step(xi: Segment, h: Segment) -> float:
    return 0.05 * (1.0 + xi.sup_norm()) / (1.0 + h.sup_norm())


def estimate_gradient_fd(model: ModelSpec, xi: Segment, h: Segment, f: TerminalFunctional, T: float,
                         n_paths: int, seed: int, grid: SimGrid, eps_fd: float | None = None,
                         threads: int = 1, backend=None) -> Estimate:
    """Central difference of ``P_T f`` along ``h`` with common random numbers."""
    _check_grid(model, grid, T, n_paths)
    if eps_fd is None:
        eps_fd = default_fd_step(xi, h)
    if not eps_fd > 0:
        raise ValueError("eps_fd must be positive")
    xi = xi.resample(grid.n_hist)
    h = h.resample(grid.n_hist)
    up, down = xi + eps_fd * h, xi - eps_fd * h

    def work(start, count):
        dB = brownian_block(seed, start, count, grid.n_steps, model.d, grid.dt, backend)
        s_up, bad_up = simulate_batch(model, up, grid, dB, backend)
        s_dn, bad_dn = simulate_batch(model, down, grid, dB, backend)
        ok = (bad_up < 0) & (bad_dn < 0)
        vals = np.zeros(count)
        vals[ok] = (f.batch(s_up[ok, grid.n_steps:], model.m)
                    - f.batch(s_dn[ok, grid.n_steps:], model.m)) / (2.0 * eps_fd)
        return vals, ok

    vals, ok = _gather(map_chunks(work, n_paths, threads))
    if not ok.any():
        raise FloatingPointError("all paths rejected")
    return Estimate.from_samples(vals[ok], int(np.sum(~ok)))


def gradient_report(model: ModelSpec, xi: Segment, h: Segment, f: TerminalFunctional, T: float,
                    n_paths: int, seed: int, grid: SimGrid, eps_fd: float | None = None,
                    control_variate: bool = True, threads: int = 1, backend=None) -> GradientReport:
    bis, wvar = estimate_gradient_bismut(model, xi, h, f, T, n_paths, seed, grid, control_variate,
                                         threads, backend, return_weight_variance=True)
    fd = estimate_gradient_fd(model, xi, h, f, T, n_paths, seed, grid, eps_fd, threads, backend)
    return GradientReport(bismut=bis, fd=fd, z_score=z_score(bis, fd), weight_variance=wvar)


def girsanov_identity_check(model: ModelSpec, xi: Segment, h: Segment, f: TerminalFunctional, T: float,
                            eps: float, n_paths: int, seed: int, grid: SimGrid, threads: int = 1,
                            backend=None) -> GirsanovCheck:
    """Compare ``E[R^eps f(terminal)]`` with a direct estimate of ``P_T f(xi + eps h)``.

    Both sides use the same seed.  Shifted states inside the density come
    from ``base + eps Theta``.  More than 1% non-finite weights marks the
    check invalid.
    """
    _check_grid(model, grid, T, n_paths)
    plan = build_plan(model, T, h, grid)
    xi = xi.resample(grid.n_hist)
    start_shift = xi + eps * plan.h

    def work(start, count):
        states, dB, bad = _batch(model, xi, grid, seed, start, count, backend)
        ok = bad < 0
        lr = np.full(count, np.nan)
        fv = np.zeros(count)
        if ok.any():
            ito, quad = girsanov_terms(model, plan, states[ok], dB[ok], eps)
            lr[ok] = -ito - 0.5 * quad
            fv[ok] = f.batch(states[ok, grid.n_steps:], model.m)
        s_sh, bad_sh = simulate_batch(model, start_shift, grid, dB, backend)
        ok_sh = bad_sh < 0
        fs = np.zeros(count)
        fs[ok_sh] = f.batch(s_sh[ok_sh, grid.n_steps:], model.m)
        return lr, fv, ok, fs, ok_sh

    lr, fv, ok, fs, ok_sh = _gather(map_chunks(work, n_paths, threads))
    finite = ok & np.isfinite(lr) & (lr < 700.0)
    n_nonfinite = int(np.sum(ok & ~finite))
    if not finite.any() or not ok_sh.any():
        raise FloatingPointError("all paths rejected")
    r = np.exp(lr[finite])
    lhs = Estimate.from_samples(r * fv[finite], int(np.sum(~finite)))
    rhs = Estimate.from_samples(fs[ok_sh], int(np.sum(~ok_sh)))
    r_mean = Estimate.from_samples(r, int(np.sum(~finite)))
    both = finite & ok_sh
    paired = np.exp(lr[both]) * fv[both] - fs[both]
    se_p = float(np.std(paired, ddof=1) / math.sqrt(paired.size)) if paired.size > 1 else math.inf
    diff = abs(lhs.mean - rhs.mean)
    zp = 0.0 if diff == 0.0 else (diff / se_p if se_p > 0 else math.inf)
    rz = abs(r_mean.mean - 1.0)
    rz = 0.0 if rz == 0.0 else (rz / r_mean.std_err if r_mean.std_err > 0 else math.inf)
    return GirsanovCheck(lhs=lhs, rhs=rhs, r_mean=r_mean, z_score=z_score(lhs, rhs), z_score_paired=zp,
                         r_z_score=rz, n_nonfinite=n_nonfinite, valid=n_nonfinite <= 0.01 * n_paths)

