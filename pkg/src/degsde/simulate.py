"""Euler-Maruyama integration of the delay equation and of its shifted
(coupled) variant, with counter-based Brownian increments.

Paths are processed in fixed chunks of ``CHUNK`` consecutive path ids.
Chunk boundaries never depend on the thread count, so per-path results are
bit-identical whether one or many worker threads are used.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import ModelSpec, Segment

CHUNK = 1024
BLOWUP_THRESHOLD = 1e8


class BlowUpError(FloatingPointError):
    """A state component left the finite box; ``step`` is the first bad step."""

    def __init__(self, step: int):
        super().__init__(f"path blew up at step {step}")
        self.step = step


@dataclass(frozen=True)
class SimGrid:
    dt: float
    n_steps: int
    n_hist: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_hist < 1:
            raise ValueError("r0 must be at least one step")
        if self.n_steps <= self.n_hist:
            raise ValueError("T must exceed r0")

    @classmethod
    def from_times(cls, T: float, r0: float, dt: float) -> "SimGrid":
        n_steps = _exact_multiple(T, dt, "T")
        n_hist = _exact_multiple(r0, dt, "r0")
        return cls(dt=float(dt), n_steps=n_steps, n_hist=n_hist)

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    @property
    def r0(self) -> float:
        return self.n_hist * self.dt

    @property
    def tau(self) -> float:
        return (self.n_steps - self.n_hist) * self.dt

    @property
    def n_total(self) -> int:
        return self.n_hist + self.n_steps + 1

    def times(self) -> np.ndarray:
        """Times ``-r0 .. T`` of the stored states."""
        return (np.arange(self.n_total) - self.n_hist) * self.dt

    def refined(self) -> "SimGrid":
        return SimGrid(self.dt / 2, 2 * self.n_steps, 2 * self.n_hist)


def _exact_multiple(value: float, dt: float, name: str) -> int:
    n = int(round(value / dt))
    if n < 1 or abs(n * dt - value) > 1e-9 * max(1.0, abs(value)):
        raise ValueError(f"{name}={value} is not an integer multiple of dt={dt}")
    return n


@dataclass(frozen=True)
class BrownianIncrements:
    seed: int
    path_id: int
    dt: float
    increments: np.ndarray  # (n_steps, d)


@dataclass(frozen=True)
class PathBundle:
    grid: SimGrid
    states: np.ndarray  # (n_total, m + d), times -r0 .. T
    increments: BrownianIncrements

    def terminal_segment(self) -> np.ndarray:
        return self.states[self.grid.n_steps:]

    def segment_at(self, n: int) -> np.ndarray:
        """Stored segment at grid time ``t_n`` (window of ``n_hist + 1`` states)."""
        return self.states[n:n + self.grid.n_hist + 1]


def brownian_block(seed: int, path_start: int, n_paths: int, n_steps: int, d: int, dt: float,
                   backend=None) -> np.ndarray:
    """Increments ``(n_paths, n_steps, d)`` for consecutive path ids."""
    z = kernels.standard_normals(seed, path_start, n_paths, n_steps, d, backend)
    return z * math.sqrt(dt)


def generate_increments(seed: int, path_id: int, n_steps: int, d: int, dt: float = 1.0) -> BrownianIncrements:
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    inc = brownian_block(seed, path_id, 1, n_steps, d, dt)[0]
    inc.setflags(write=False)
    return BrownianIncrements(seed=int(seed), path_id=int(path_id), dt=float(dt), increments=inc)


def initial_states(xi: Segment, grid: SimGrid, n_paths: int) -> np.ndarray:
    if xi.n_hist != grid.n_hist or not math.isclose(xi.r0, grid.r0, rel_tol=1e-9):
        raise ValueError("initial segment grid does not match the simulation grid")
    states = np.empty((n_paths, grid.n_total, xi.dim))
    states[:, :grid.n_hist + 1] = xi.values
    return states


def euler_generic(model: ModelSpec, states: np.ndarray, dB: np.ndarray, dt: float, n_hist: int,
                  base_drift: np.ndarray | None = None, extra_drift: np.ndarray | None = None,
                  threshold: float = BLOWUP_THRESHOLD) -> np.ndarray:
    """Euler sweep through the oracle interface, vectorised over paths.

    With ``base_drift`` the Y-drift is taken from it instead of the own
    state (the shifted equation); ``extra_drift`` of shape ``(N, d)`` is
    added to it.  Returns the first bad step per path (``-1`` if none).
    """
    m = model.m
    coeffs = model.coeffs
    P, n_total, _ = states.shape
    N = n_total - n_hist - 1
    noise = dB @ model.sigma.T
    At, Mt = model.a.T, model.mm.T
    bad = np.full(P, -1, dtype=np.int64)
    alive = np.ones(P, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(N):
            cur = n + n_hist
            x = states[:, cur, :m]
            y = states[:, cur, m:]
            if base_drift is None:
                drift = coeffs.z_value(x, y) + coeffs.b_value(states[:, n:cur + 1])
            else:
                drift = base_drift[:, n]
            new = states[:, cur + 1]
            new[:, :m] = x + (x @ At + y @ Mt) * dt
            ynew = y + drift * dt + noise[:, n]
            if extra_drift is not None:
                ynew = ynew + extra_drift[n] * dt
            new[:, m:] = ynew
            ok = np.all(np.abs(new) <= threshold, axis=1)
            newly = alive & ~ok
            if newly.any():
                bad[newly] = n
                alive &= ok
            if not alive.all():
                new[~alive] = 0.0
    return bad


def simulate_batch(model: ModelSpec, xi: Segment, grid: SimGrid, dB: np.ndarray, backend=None):
    """Simulate ``len(dB)`` paths from ``xi``; returns ``(states, bad_step)``.

    Polynomial-family models go through the hot kernel (compiled when
    available); other oracles use :func:`euler_generic`.
    """
    states = initial_states(xi, grid, dB.shape[0])
    dB = np.ascontiguousarray(dB, dtype=float)
    if model.is_poly:
        c = np.ascontiguousarray
        params = (c(model.a), c(model.mm), c(model.sigma)) + model.coeffs.kernel_params(grid.n_hist)
        bad = kernels.euler_poly(states, dB, params, grid.dt, grid.n_hist, BLOWUP_THRESHOLD, backend)
    else:
        bad = euler_generic(model, states, dB, grid.dt, grid.n_hist)
    return states, np.asarray(bad)


def simulate_path(model: ModelSpec, xi: Segment, grid: SimGrid, noise: BrownianIncrements) -> PathBundle:
    """Single path through the oracle interface; raises :class:`BlowUpError`."""
    if noise.increments.shape != (grid.n_steps, model.d):
        raise ValueError("increments do not match grid and noise dimension")
    if not math.isclose(noise.dt, grid.dt):
        raise ValueError("increments were generated for a different dt")
    states = initial_states(xi, grid, 1)
    bad = euler_generic(model, states, noise.increments[None], grid.dt, grid.n_hist)
    if bad[0] >= 0:
        raise BlowUpError(int(bad[0]))
    out = states[0]
    out.setflags(write=False)
    return PathBundle(grid=grid, states=out, increments=noise)


def base_drift_path(model: ModelSpec, states: np.ndarray, n_hist: int) -> np.ndarray:
    """Y-drift ``Z + b`` of stored paths at steps ``0..N-1``; shape ``(P, N, d)``."""
    m = model.m
    N = states.shape[1] - n_hist - 1
    x = states[:, n_hist:n_hist + N, :m]
    y = states[:, n_hist:n_hist + N, m:]
    return model.coeffs.z_value(x, y) + model.coeffs.b_path(states, n_hist)


def shifted_batch(model: ModelSpec, plan, base_states: np.ndarray, dB: np.ndarray, eps: float):
    """Shifted equation for a batch of base paths; returns ``(states, bad_step)``.

    The initial segment is ``xi + eps h`` and the Y-equation uses the base
    path's drift plus ``eps (v' h_2(0) + alpha')``; increments are reused.
    """
    grid = plan.grid
    nh, N, m = grid.n_hist, grid.n_steps, model.m
    if base_states.shape[1] != grid.n_total:
        raise ValueError("plan and base paths use different grids")
    states = np.empty_like(base_states)
    states[:, :nh + 1] = base_states[:, :nh + 1]
    if eps != 0:
        states[:, :nh + 1] += eps * plan.h.values
    # recompute the base drift the same way euler_generic does
    drift = np.empty((base_states.shape[0], N, model.d))
    for n in range(N):
        cur = n + nh
        drift[:, n] = model.coeffs.z_value(base_states[:, cur, :m], base_states[:, cur, m:]) \
            + model.coeffs.b_value(base_states[:, n:cur + 1])
    extra = eps * plan.shift_drift[:N]
    bad = euler_generic(model, states, dB, grid.dt, nh, base_drift=drift, extra_drift=extra)
    return states, bad


def simulate_shifted(model: ModelSpec, plan, base: PathBundle, eps: float) -> PathBundle:
    """Integrate the shifted (coupled) equation along ``base``; raises :class:`BlowUpError`."""
    if plan.grid != base.grid:
        raise ValueError("plan and base path use different grids")
    states, bad = shifted_batch(model, plan, base.states[None], base.increments.increments[None], eps)
    if bad[0] >= 0:
        raise BlowUpError(int(bad[0]))
    out = states[0]
    out.setflags(write=False)
    return PathBundle(grid=base.grid, states=out, increments=base.increments)


def chunk_ranges(n_paths: int, chunk: int = CHUNK):
    return [(s, min(chunk, n_paths - s)) for s in range(0, n_paths, chunk)]


def map_chunks(fn, n_paths: int, threads: int = 1, chunk: int = CHUNK):
    """Apply ``fn(start, count)`` to every fixed chunk; results in path order."""
    ranges = chunk_ranges(n_paths, chunk)
    if threads <= 1 or len(ranges) == 1:
        return [fn(s, c) for s, c in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: fn(*r), ranges))


def simulate_many(model: ModelSpec, xi: Segment, grid: SimGrid, n_paths: int, seed: int,
                  threads: int = 1, keep_states: bool = True, backend=None):
    """Simulate ``n_paths`` paths with ids ``0..n_paths-1``.

    Returns ``(states or None, terminal (P, n_hist + 1, m + d), bad (P,))``.
    """
    def work(start, count):
        dB = brownian_block(seed, start, count, grid.n_steps, model.d, grid.dt, backend)
        states, bad = simulate_batch(model, xi, grid, dB, backend)
        term = states[:, grid.n_steps:].copy()
        return (states if keep_states else None), term, bad

    parts = map_chunks(work, n_paths, threads)
    states = np.concatenate([p[0] for p in parts]) if keep_states else None
    return states, np.concatenate([p[1] for p in parts]), np.concatenate([p[2] for p in parts])
