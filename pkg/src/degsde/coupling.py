"""Coupling plan, coupling identity check and Girsanov densities.

The plan steers a copy of the solution started from ``xi + eps h`` back
onto the original path by time ``tau = T - r0``:

* ``v(s) = (tau - s)^+ / tau``,
* ``plan_alpha(s) = -g(s) M* exp(-s A*) q`` with ``g(s) = s (tau - s)^+ / tau^2``
  and ``q = Q_tau^{-1} (h_1(0) + int_0^tau v(r) exp(-r A) M h_2(0) dr)``,
* ``phi = v h_2(0) + plan_alpha`` and the displacement ``Theta``.

Every integral shares one per-panel Simpson rule on the simulation grid,
so the terminal constraint holds to rounding regardless of ``dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matops import GramianResult, gramian, gramian_weight, mat_exp_many, simpson_cumulative
from .model import ModelSpec, Segment
from .simulate import PathBundle, SimGrid

CONSTRAINT_TOL = 1e-8


class PlanError(ValueError):
    """The coupling plan could not be built or violates its constraints."""


@dataclass(frozen=True)
class CouplingPlan:
    grid: SimGrid
    tau: float
    h: Segment
    times: np.ndarray          # t_n, n = 0..N
    v: np.ndarray              # (N+1,)
    v_prime: np.ndarray        # (N+1,), value on [t_n, t_{n+1})
    alpha: np.ndarray          # (N+1, d)
    alpha_prime: np.ndarray    # (N+1, d), value on [t_n, t_{n+1})
    phi: np.ndarray            # (N+1, d)
    theta: np.ndarray          # (n_hist + N + 1, m + d), times -r0..T
    q_inv_vec: np.ndarray      # (m,)
    constraint_residual: float
    theta_terminal_max: float
    gramian: GramianResult | None

    @property
    def shift_drift(self) -> np.ndarray:
        """``v' h_2(0) + alpha'`` at every grid time."""
        return self.v_prime[:, None] * self.h.head[None, -self.alpha.shape[1]:] + self.alpha_prime

    def to_dict(self) -> dict:
        m = self.q_inv_vec.shape[0]
        return {
            "tau": self.tau,
            "dt": self.grid.dt,
            "constraint_residual": self.constraint_residual,
            "theta_terminal_max": self.theta_terminal_max,
            "q_inv_vec": self.q_inv_vec.tolist(),
            "times": self.times.tolist(),
            "v": self.v.tolist(),
            "v_prime": self.v_prime.tolist(),
            "alpha": self.alpha.tolist(),
            "alpha_prime": self.alpha_prime.tolist(),
            "phi": self.phi.tolist(),
            "theta": self.theta[self.grid.n_hist:].tolist(),
            "theta_history": self.theta[:self.grid.n_hist + 1].tolist(),
            "m": m,
        }

    def table(self):
        """Rows ``t, v, v', alpha..., alpha'..., phi..., theta...`` for CSV export."""
        d = self.alpha.shape[1]
        D = self.theta.shape[1]
        header = (["t", "v", "v_prime"] + [f"alpha_{i}" for i in range(d)]
                  + [f"alpha_prime_{i}" for i in range(d)] + [f"phi_{i}" for i in range(d)]
                  + [f"theta_{i}" for i in range(D)])
        nh = self.grid.n_hist
        rows = np.column_stack([self.times, self.v, self.v_prime, self.alpha, self.alpha_prime,
                                self.phi, self.theta[nh:]])
        return header, rows


def build_plan(model: ModelSpec, T: float, h: Segment, grid: SimGrid) -> CouplingPlan:
    if not math.isclose(grid.T, T, rel_tol=1e-9):
        raise PlanError(f"grid horizon {grid.T} does not match T={T}")
    if not math.isclose(grid.r0, model.r0, rel_tol=1e-9):
        raise PlanError("grid delay does not match the model")
    if h.dim != model.dim:
        raise PlanError("direction segment has the wrong dimension")
    h = h.resample(grid.n_hist)
    m, d = model.m, model.d
    dt, N, nh = grid.dt, grid.n_steps, grid.n_hist
    n_tau = N - nh
    tau = grid.tau
    h1, h2 = h.head[:m], h.head[m:]

    fine = np.arange(2 * N + 1) * (dt / 2)   # Simpson nodes on [0, T]
    times = fine[::2]
    fine_tau = fine[:2 * n_tau + 1]
    e_neg = mat_exp_many(-model.a, fine)       # exp(-sA)
    em = e_neg @ model.mm                      # (2N+1, m, d)
    g_fine = gramian_weight(fine, tau)
    v_fine = np.clip(tau - fine, 0.0, None) / tau

    if m:
        gram = gramian(model.a, model.mm, tau, tau, dt)
        i_v = simpson_cumulative((v_fine[:2 * n_tau + 1, None] * (em[:2 * n_tau + 1] @ h2)), dt)[-1]
        q = gram.inverse @ (h1 + i_v)
        alpha_fine = -g_fine[:, None] * (np.swapaxes(em, 1, 2) @ q)
    else:
        gram = None
        q = np.zeros(0)
        alpha_fine = np.zeros((fine.size, d))
    phi_fine = v_fine[:, None] * h2[None] + alpha_fine

    theta = np.empty((grid.n_total, m + d))
    theta[:nh + 1] = h.values
    if m:
        integrand = np.einsum("kij,kj->ki", em, phi_fine)
        J = simpson_cumulative(integrand, dt)  # (N+1, m), at grid times
        e_pos = mat_exp_many(model.a, times)
        theta1 = np.einsum("kij,kj->ki", e_pos, h1[None] + J)
        constraint_residual = float(np.max(np.linalg.norm(h1[None] + J[n_tau:], axis=1)))
    else:
        theta1 = np.zeros((N + 1, 0))
        constraint_residual = 0.0
    phi = phi_fine[::2]
    theta[nh + 1:, :m] = theta1[1:]
    theta[nh + 1:, m:] = phi[1:]

    before = times < tau - 1e-12 * tau
    v = v_fine[::2]
    v_prime = np.where(before, -1.0 / tau, 0.0)
    g = g_fine[::2]
    g_prime = np.where(before, (tau - 2.0 * times) / tau**2, 0.0)
    alpha = alpha_fine[::2]
    if m:
        emq = np.swapaxes(em[::2], 1, 2) @ q                       # M* e^{-sA*} q
        a_emq = np.swapaxes(model.a[None] @ em[::2], 1, 2) @ q     # M* A* e^{-sA*} q
        alpha_prime = -(g_prime[:, None] * emq - g[:, None] * a_emq)
    else:
        alpha_prime = np.zeros((N + 1, d))

    scale_h = 1.0 + float(np.linalg.norm(h.head))
    if constraint_residual > CONSTRAINT_TOL * scale_h:
        raise PlanError(f"terminal constraint residual {constraint_residual:.3e} above tolerance")
    terminal_max = float(np.max(np.linalg.norm(theta[nh + n_tau:], axis=1)))
    for arr in (times, v, v_prime, alpha, alpha_prime, phi, theta, q):
        arr.setflags(write=False)
    return CouplingPlan(grid=grid, tau=tau, h=h, times=times, v=v, v_prime=v_prime, alpha=alpha,
                        alpha_prime=alpha_prime, phi=phi, theta=theta, q_inv_vec=q,
                        constraint_residual=constraint_residual, theta_terminal_max=terminal_max, gramian=gram)


def theta_segment(plan: CouplingPlan, s: float) -> Segment:
    """The window ``theta -> Theta(s + theta)`` on ``[-r0, 0]``."""
    grid = plan.grid
    if not (-1e-12 <= s <= grid.T * (1 + 1e-12)):
        raise ValueError(f"s={s} outside [0, T]")
    pos = s / grid.dt
    n = int(round(pos))
    if abs(pos - n) < 1e-9:
        return Segment(grid.r0, plan.theta[n:n + grid.n_hist + 1])
    t = grid.times()
    targets = s + np.linspace(-grid.r0, 0.0, grid.n_hist + 1)
    cols = [np.interp(targets, t, plan.theta[:, i]) for i in range(plan.theta.shape[1])]
    return Segment(grid.r0, np.column_stack(cols))


@dataclass(frozen=True)
class CouplingCheck:
    sup_error: float
    terminal_gap: float
    order_estimate: float | None = None


def check_coupling_identity(base: PathBundle, shifted: PathBundle, plan: CouplingPlan, eps: float) -> CouplingCheck:
    """Sup over grid times of ``|shifted - base - eps Theta|`` and the terminal-window gap."""
    if base.grid != shifted.grid or base.grid != plan.grid:
        raise ValueError("paths and plan use different grids")
    diff = shifted.states - base.states
    err = float(np.max(np.linalg.norm(diff - eps * plan.theta, axis=-1)))
    gap = float(np.max(np.linalg.norm(diff[base.grid.n_steps:], axis=-1)))
    return CouplingCheck(sup_error=err, terminal_gap=gap)


def shifted_states(model: ModelSpec, plan: CouplingPlan, states: np.ndarray, eps: float) -> np.ndarray:
    """Shifted paths from the coupling identity: ``base + eps Theta``."""
    return states + eps * plan.theta[None]


def _phi_eps(model: ModelSpec, plan: CouplingPlan, states: np.ndarray, eps: float) -> np.ndarray:
    grid = plan.grid
    nh, N, m = grid.n_hist, grid.n_steps, model.m
    cur = states[:, nh:nh + N]
    th = plan.theta[nh:nh + N]
    x, y = cur[..., :m], cur[..., m:]
    z_diff = model.coeffs.z_value(x, y) - model.coeffs.z_value(x + eps * th[:, :m], y + eps * th[:, m:])
    b_diff = model.coeffs.b_diff_path(states, plan.theta, eps, nh)
    return z_diff + b_diff + eps * plan.shift_drift[None, :N]


def girsanov_terms(model: ModelSpec, plan: CouplingPlan, states: np.ndarray, dB: np.ndarray, eps: float):
    """Itô and quadratic terms of ``log R^eps(T)`` for a batch of paths."""
    if eps == 0:
        zeros = np.zeros(states.shape[0])
        return zeros, zeros.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        u = _phi_eps(model, plan, states, eps) @ model.sigma_inv.T
        ito = np.einsum("pnd,pnd->p", u, dB)
        quad = np.einsum("pnd,pnd->p", u, u) * plan.grid.dt
    return ito, quad


@dataclass(frozen=True)
class GirsanovRecord:
    log_r: float
    r: float
    ito_term: float
    quad_term: float
    finite: bool


def girsanov_weight(model: ModelSpec, plan: CouplingPlan, base: PathBundle, eps: float) -> GirsanovRecord:
    if base.grid != plan.grid:
        raise ValueError("plan and path use different grids")
    ito, quad = girsanov_terms(model, plan, base.states[None], base.increments.increments[None], eps)
    ito, quad = float(ito[0]), float(quad[0])
    log_r = -ito - 0.5 * quad
    finite = math.isfinite(log_r) and log_r < 700.0
    return GirsanovRecord(log_r=log_r, r=math.exp(log_r) if finite else math.nan,
                          ito_term=ito, quad_term=quad, finite=finite)


def bismut_weights(model: ModelSpec, plan: CouplingPlan, states: np.ndarray, dB: np.ndarray) -> np.ndarray:
    """Left-point Itô sum of ``<sigma^{-1} N(t_n), dB_n>`` for each path.

    ``N = grad_Theta Z + grad_{Theta window} b - v' h_2(0) - alpha'``.
    """
    grid = plan.grid
    nh, N, m = grid.n_hist, grid.n_steps, model.m
    cur = states[:, nh:nh + N]
    th = plan.theta[nh:nh + N]
    n_val = (model.coeffs.z_dir(cur[..., :m], cur[..., m:], np.broadcast_to(th, cur.shape))
             + model.coeffs.b_dir_path(states, plan.theta, nh)
             - plan.shift_drift[None, :N])
    return np.einsum("pnd,pnd->p", n_val @ model.sigma_inv.T, dB)


def bismut_weight_path(model: ModelSpec, plan: CouplingPlan, path: PathBundle) -> float:
    if path.grid != plan.grid:
        raise ValueError("plan and path use different grids")
    w = float(bismut_weights(model, plan, path.states[None], path.increments.increments[None])[0])
    if not math.isfinite(w):
        raise FloatingPointError("non-finite Bismut weight")
    return w


def coupling_errors(model: ModelSpec, xi: Segment, h: Segment, T: float, dt: float, eps: float,
                    n_paths: int, seed: int) -> tuple[float, float]:
    """Largest identity error and terminal-window gap over ``n_paths`` coupled pairs."""
    from .simulate import brownian_block, shifted_batch, simulate_batch

    grid = SimGrid.from_times(T, model.r0, dt)
    plan = build_plan(model, T, h, grid)
    dB = brownian_block(seed, 0, n_paths, grid.n_steps, model.d, grid.dt)
    base, bad = simulate_batch(model, xi.resample(grid.n_hist), grid, dB)
    shifted, bad_s = shifted_batch(model, plan, base, dB, eps)
    ok = (bad < 0) & (bad_s < 0)
    if not ok.any():
        raise FloatingPointError("every coupled pair blew up")
    diff = shifted[ok] - base[ok]
    err = float(np.max(np.linalg.norm(diff - eps * plan.theta[None], axis=-1)))
    gap = float(np.max(np.linalg.norm(diff[:, grid.n_steps:], axis=-1)))
    return err, gap


def coupling_convergence(model: ModelSpec, xi: Segment, h: Segment, T: float, dt: float, eps: float,
                         n_paths: int = 100, seed: int = 0) -> CouplingCheck:
    """Identity error at ``dt`` with the observed order from a rerun at ``dt / 2``."""
    err, gap = coupling_errors(model, xi, h, T, dt, eps, n_paths, seed)
    err_half, _ = coupling_errors(model, xi, h, T, dt / 2, eps, n_paths, seed)
    if err == 0.0 or err_half == 0.0:
        order = None
    else:
        order = math.log2(err / err_half)
    return CouplingCheck(sup_error=err, terminal_gap=gap, order_estimate=order)
