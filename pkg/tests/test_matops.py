import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from degsde.matops import GramianError, gramian, kalman_rank, mat_exp, mat_exp_many, simpson_cumulative, simpson_nodes


def test_exp_zero_time_is_identity():
    a = np.array([[1.0, 2.0], [-3.0, 0.5]])
    assert np.array_equal(mat_exp(a, 0.0), np.eye(2))


def test_exp_diagonal():
    assert mat_exp(np.array([[-1.0]]), 2.0)[0, 0] == pytest.approx(np.exp(-2.0), rel=1e-14)


def test_exp_nilpotent():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    for t in (0.3, 2.0, -7.5):
        assert np.allclose(mat_exp(a, t), [[1.0, t], [0.0, 1.0]], rtol=0, atol=1e-14)


def test_exp_rejects_bad_input():
    with pytest.raises(ValueError):
        mat_exp(np.ones((2, 3)), 1.0)
    with pytest.raises(ValueError):
        mat_exp(np.array([[np.nan]]), 1.0)
    with pytest.raises(ValueError):
        mat_exp(np.eye(2), np.inf)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-3, 3)), st.floats(-5, 5))
def test_exp_matches_scipy(a, t):
    # ||t a|| <= 45 here, inside the stated accuracy range
    ref = expm(t * a)
    got = mat_exp(a, t)
    assert np.linalg.norm(got - ref) <= 1e-12 * max(1.0, np.linalg.norm(ref)) * 50


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-1, 1)), st.floats(0, 2), st.floats(0, 2))
def test_exp_semigroup(a, s, t):
    lhs = mat_exp(a, s) @ mat_exp(a, t)
    rhs = mat_exp(a, s + t)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(1.0, np.linalg.norm(rhs))


def test_exp_many_matches_single():
    a = np.array([[0.2, 1.0], [-1.0, -0.3]])
    ts = np.linspace(0, 3, 7)
    many = mat_exp_many(a, ts)
    for t, e in zip(ts, many):
        assert np.allclose(e, expm(t * a), rtol=1e-12, atol=1e-14)


def test_kalman_examples():
    r = kalman_rank(np.array([[-1.0]]), np.array([[-1.0]]))
    assert (r.rank, r.k_star, r.satisfied) == (1, 0, True)
    r = kalman_rank(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]))
    assert (r.rank, r.k_star, r.satisfied) == (2, 1, True)
    r = kalman_rank(np.array([[0.0]]), np.array([[0.0]]))
    assert (r.rank, r.k_star, r.satisfied) == (0, None, False)


def test_kalman_m_zero_and_mismatch():
    assert kalman_rank(np.zeros((0, 0)), np.zeros((0, 1))).satisfied
    with pytest.raises(ValueError):
        kalman_rank(np.eye(2), np.ones((3, 1)))


@pytest.mark.parametrize("tau,expected", [(1.0, 1 / 6), (0.5, 1 / 12)])
def test_gramian_closed_form(tau, expected):
    g = gramian(np.zeros((1, 1)), np.ones((1, 1)), tau, tau, 0.01)
    assert abs(g.q[0, 0] - expected) <= 1e-10
    assert g.inverse[0, 0] == pytest.approx(1 / expected, rel=1e-10)


def test_gramian_zero_input_fails():
    with pytest.raises(GramianError):
        gramian(np.zeros((1, 1)), np.zeros((1, 1)), 1.0, 1.0, 0.01)


def test_gramian_step_must_divide():
    with pytest.raises(ValueError):
        gramian(np.zeros((1, 1)), np.ones((1, 1)), 1.0, 1.0, 0.3)


def _controllable_pair(rng, m):
    while True:
        a = rng.normal(size=(m, m))
        mm = rng.normal(size=(m, 1))
        if kalman_rank(a, mm).satisfied:
            return a, mm


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_gramian_spd_for_controllable_pairs(m):
    rng = np.random.default_rng(m)
    for _ in range(5):
        a, mm = _controllable_pair(rng, m)
        g = gramian(a, mm, 1.0, 1.0, 0.01)
        assert np.allclose(g.q, g.q.T, rtol=1e-12, atol=0)
        assert np.all(np.linalg.eigvalsh(g.q) > 0)
        assert np.linalg.norm(g.q @ g.inverse - np.eye(m)) <= 1e-9 * np.linalg.cond(g.q)
        assert g.bound_ratio > 0 and np.isfinite(g.condition_estimate)


def test_gramian_simpson_order():
    a = np.array([[0.0, 1.0], [-2.0, -0.5]])
    mm = np.array([[0.0], [1.0]])
    fine = gramian(a, mm, 1.0, 1.0, 1 / 256).q
    e1 = np.max(np.abs(gramian(a, mm, 1.0, 1.0, 1 / 8).q - fine))
    e2 = np.max(np.abs(gramian(a, mm, 1.0, 1.0, 1 / 16).q - fine))
    assert e2 <= e1 / 12


def test_gramian_against_scipy_quadrature():
    from scipy.integrate import quad

    a = np.array([[-0.3, 1.0], [0.0, 0.2]])
    mm = np.array([[0.0], [1.0]])
    tau = 0.8
    g = gramian(a, mm, tau, tau, 0.01)
    for i in range(2):
        for j in range(2):
            def f(s):
                e = expm(-s * a) @ mm
                return s * (tau - s) / tau**2 * (e @ e.T)[i, j]
            assert g.q[i, j] == pytest.approx(quad(f, 0, tau, epsabs=1e-14)[0], rel=1e-8, abs=1e-12)


def test_simpson_cumulative_exact_on_cubics():
    nodes, n = simpson_nodes(1.0, 0.25)
    cum = simpson_cumulative(nodes**3, 0.25)
    assert np.allclose(cum, np.linspace(0, 1, n + 1) ** 4 / 4, atol=1e-15)
