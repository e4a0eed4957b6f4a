import numpy as np
import pytest

from degsde.coupling import (
    PlanError, bismut_weight_path, build_plan, check_coupling_identity, girsanov_terms, girsanov_weight,
    theta_segment,
)
from degsde.model import ModelSpec, PolyDelayCoefficients, Segment, make_ou
from degsde.simulate import SimGrid, generate_increments, simulate_path, simulate_shifted

GRID = SimGrid.from_times(1.5, 0.5, 0.01)


def _seg(vec, grid=GRID):
    return Segment.constant(grid.r0, grid.n_hist, vec)


def _tol(h):
    return 1e-8 * (1 + h.sup_norm())


@pytest.mark.parametrize("which", ["ex41", "ex42"])
def test_plan_invariants(which, request):
    model, _ = request.getfixturevalue(which)
    rng = np.random.default_rng(3)
    for _ in range(5):
        h = Segment.from_function(0.5, 50, lambda t, c=rng.normal(size=(3, 2)): c[0] + c[1] * t + c[2] * t * t)
        plan = build_plan(model, 1.5, h, GRID)
        assert plan.v[0] == 1.0 and np.all(plan.alpha[0] == 0)
        after = plan.times >= plan.tau - 1e-12
        assert np.all(plan.v[after] == 0) and np.all(plan.alpha[after] == 0)
        assert np.allclose(plan.theta[:GRID.n_hist + 1], h.values)
        assert plan.constraint_residual <= 1e-8 * (1 + np.linalg.norm(h.head))
        assert plan.theta_terminal_max <= _tol(h)
        assert np.allclose(plan.phi, plan.v[:, None] * h.head[1:] + plan.alpha)


def test_scalar_integrator_example():
    coeffs = PolyDelayCoefficients(1, 1, 0.5)
    model = ModelSpec.build([[0.0]], [[1.0]], [[1.0]], coeffs, 0.5)
    plan = build_plan(model, 1.5, _seg([1.0, 0.0]), GRID)
    assert plan.q_inv_vec[0] == pytest.approx(6.0, rel=1e-10)
    s = plan.times
    expected = np.where(s < 1, -6 * s * (1 - s), 0.0)
    assert np.allclose(plan.alpha[:, 0], expected, atol=1e-12)
    # X part of theta at tau: 1 + int alpha = 0
    assert abs(plan.theta[GRID.n_hist + 100, 0]) < 1e-12


def test_alpha_prime_matches_finite_differences(ex41):
    model, _ = ex41
    plan = build_plan(model, 1.5, _seg([1.0, -0.5]), GRID)
    fd = np.diff(plan.alpha, axis=0) / GRID.dt
    mid = 0.5 * (plan.alpha_prime[:-1] + plan.alpha_prime[1:])
    inside = plan.times[1:] < plan.tau - 1e-9
    assert np.max(np.abs(fd[inside] - mid[inside])) < 1e-3


def test_ou_plan_has_no_alpha(ou):
    model, _ = ou
    h = _seg([2.0])
    plan = build_plan(model, 1.5, h, GRID)
    assert np.all(plan.alpha == 0)
    nh = GRID.n_hist
    assert np.allclose(plan.theta[nh:, 0], plan.v * 2.0)
    assert np.all(plan.theta[nh + 100:] == 0)


@pytest.mark.parametrize("c", [-1.0, 2.0])
def test_plan_is_linear_in_h(ex42, c):
    model, _ = ex42
    h = Segment.from_function(0.5, 50, lambda t: [1 + t, np.cos(3 * t)])
    p1 = build_plan(model, 1.5, h, GRID)
    pc = build_plan(model, 1.5, c * h, GRID)
    for name in ("alpha", "phi", "theta", "alpha_prime"):
        a, b = getattr(p1, name), getattr(pc, name)
        assert np.allclose(b, c * a, rtol=1e-12, atol=1e-13)


def test_plan_errors(ex41):
    model, _ = ex41
    with pytest.raises(PlanError):
        build_plan(model, 2.0, _seg([1.0, 1.0]), GRID)
    with pytest.raises(PlanError):
        build_plan(model, 1.5, _seg([1.0]), GRID)


def test_plan_is_read_only(ex41):
    plan = build_plan(ex41[0], 1.5, _seg([1.0, 1.0]), GRID)
    with pytest.raises(ValueError):
        plan.theta[0, 0] = 1.0


def test_theta_segment_cases(ex41):
    model, _ = ex41
    h = Segment.from_function(0.5, 50, lambda t: [1 + t, 2 - t])
    plan = build_plan(model, 1.5, h, GRID)
    assert np.allclose(theta_segment(plan, 0.0).values, h.values)
    assert np.allclose(theta_segment(plan, 0.5).eval(-0.5), h.head)
    assert np.max(np.abs(theta_segment(plan, 1.5).values)) <= _tol(h)
    mid = theta_segment(plan, 0.705)
    assert mid.n_hist == GRID.n_hist
    with pytest.raises(ValueError):
        theta_segment(plan, 1.6)


def _pair(model, h, eps, seed=0, xi=(1.0, 1.0)):
    plan = build_plan(model, 1.5, h, GRID)
    noise = generate_increments(seed, 0, GRID.n_steps, model.d, GRID.dt)
    base = simulate_path(model, _seg(list(xi)[:model.dim]), GRID, noise)
    return plan, base, simulate_shifted(model, plan, base, eps)


def test_shift_zero_is_bit_identical(ex41):
    plan, base, shifted = _pair(ex41[0], _seg([1.0, 1.0]), 0.0)
    assert np.array_equal(base.states, shifted.states)
    assert check_coupling_identity(base, shifted, plan, 0.0).sup_error == 0.0


def test_y_difference_is_eps_phi(ex42):
    plan, base, shifted = _pair(ex42[0], _seg([0.5, -1.0]), 0.3)
    nh = GRID.n_hist
    dy = shifted.states[nh:, 1] - base.states[nh:, 1]
    # the shared drift cancels, leaving the grid accumulation of phi'
    acc = -1.0 + np.concatenate([[0.0], np.cumsum(plan.shift_drift[:-1, 0]) * GRID.dt])
    assert np.max(np.abs(dy - 0.3 * acc)) < 1e-12
    assert np.max(np.abs(dy - 0.3 * plan.phi[:, 0])) < 0.1 * 0.3


def test_coupling_identity_small_and_terminal_gap(ex41):
    plan, base, shifted = _pair(ex41[0], _seg([1.0, 1.0]), 0.5)
    chk = check_coupling_identity(base, shifted, plan, 0.5)
    assert chk.sup_error < 0.02
    assert chk.terminal_gap <= chk.sup_error + 1e-12


def test_girsanov_eps_zero(ex41):
    plan, base, _ = _pair(ex41[0], _seg([1.0, 1.0]), 0.0)
    rec = girsanov_weight(ex41[0], plan, base, 0.0)
    assert rec.r == 1.0 and rec.log_r == 0.0 and rec.finite


def test_girsanov_record_consistency(ex41):
    plan, base, _ = _pair(ex41[0], _seg([1.0, 1.0]), 0.0)
    rec = girsanov_weight(ex41[0], plan, base, 0.5)
    assert rec.log_r == pytest.approx(-rec.ito_term - 0.5 * rec.quad_term, rel=1e-14)
    assert rec.r == pytest.approx(np.exp(rec.log_r), rel=1e-14)


def test_linear_quadratic_term_is_deterministic():
    model, _ = make_ou(rate=1.0)
    h = _seg([1.0])
    plan = build_plan(model, 1.5, h, GRID)
    eps = 0.4
    phi = eps * (plan.phi[:-1, 0] * 1.0 + plan.v_prime[:-1] * 1.0)  # -phi * slope(-1) + v' h2
    direct = np.sum(phi**2) * GRID.dt
    rng = np.random.default_rng(0)
    for _ in range(3):
        states = rng.normal(size=(1, GRID.n_total, 1))
        dB = rng.normal(size=(1, GRID.n_steps, 1))
        _, quad = girsanov_terms(model, plan, states, dB, eps)
        assert abs(quad[0] - direct) <= 1e-10


def test_bismut_weight_zero_direction(ex42):
    model, _ = ex42
    plan, base, _ = _pair(model, _seg([0.0, 0.0]), 0.0)
    assert bismut_weight_path(model, plan, base) == 0.0


def test_bismut_weight_pure_noise_model():
    coeffs = PolyDelayCoefficients(0, 1, 0.5)
    model = ModelSpec.build(np.zeros((0, 0)), np.zeros((0, 1)), [[2.0]], coeffs, 0.5)
    plan = build_plan(model, 1.5, _seg([1.0]), GRID)
    ws = []
    for seed in range(400):
        noise = generate_increments(seed, 0, GRID.n_steps, 1, GRID.dt)
        base = simulate_path(model, _seg([0.0]), GRID, noise)
        w = bismut_weight_path(model, plan, base)
        expected = -np.sum(plan.v_prime[:-1] * noise.increments[:, 0]) / 2.0
        assert w == pytest.approx(expected, rel=1e-12, abs=1e-14)
        ws.append(w)
    ws = np.array(ws)
    assert abs(ws.mean()) < 4 * ws.std() / np.sqrt(ws.size)
