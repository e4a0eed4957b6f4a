import math

import numpy as np
import pytest

from degsde.estimate import (
    Estimate, estimate_functional, estimate_gradient_bismut, estimate_gradient_fd, girsanov_identity_check,
    make_functional, z_score,
)
from degsde.model import Segment
from degsde.simulate import SimGrid

GRID = SimGrid.from_times(1.5, 0.5, 0.01)


def _seg(vec):
    return Segment.constant(GRID.r0, GRID.n_hist, vec)


def test_functional_registry():
    f = make_functional("one_plus_tanh2")
    assert f.positivity
    seg = _seg([0.0, 2.0])
    assert f.eval(seg, 1) == pytest.approx(1 + np.tanh(2.0) ** 2)
    assert make_functional("const", value=2.0).is_constant
    with pytest.raises(KeyError):
        make_functional("nope")
    with pytest.raises(KeyError):
        make_functional("y_T", power=2)


def test_estimate_and_z_score():
    e = Estimate.from_samples(np.array([1.0, 3.0]))
    assert e.mean == 2.0 and e.std_err == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Estimate.from_samples(np.array([1.0]))
    a, b = Estimate(1.0, 0.3, 10), Estimate(2.0, 0.4, 10)
    assert z_score(a, b) == pytest.approx(2.0)
    assert z_score(Estimate(1.0, 0.0, 2), Estimate(1.0, 0.0, 2)) == 0.0


def test_constant_functional(ex41):
    model, _ = ex41
    est = estimate_functional(model, _seg([1, 1]), make_functional("const"), 1.5, 100, 0, GRID)
    assert est.mean == 1.0 and est.std_err == 0.0
    g = estimate_gradient_bismut(model, _seg([1, 1]), _seg([1, 1]), make_functional("const"), 1.5, 100, 0, GRID)
    assert g.mean == 0.0
    g = estimate_gradient_bismut(model, _seg([1, 1]), _seg([1, 1]), make_functional("const"), 1.5, 4000, 0,
                                 GRID, control_variate=False)
    assert abs(g.mean) <= 3 * g.std_err


def test_ou_second_moment(ou):
    model, _ = ou
    n = 20000
    est = estimate_functional(model, Segment.constant(0.5, 50, [1.0]), make_functional("y_T_sq"), 1.5, n, 4, GRID)
    q = (1 - GRID.dt) ** 2
    N = GRID.n_steps
    euler = q**N + GRID.dt * (1 - q**N) / (1 - q)
    assert abs(est.mean - euler) <= 3 * est.std_err
    assert euler == pytest.approx(math.exp(-3) + (1 - math.exp(-3)) / 2, rel=0.01)


def test_ou_bismut_gradient(ou):
    model, _ = ou
    est = estimate_gradient_bismut(model, Segment.constant(0.5, 50, [1.0]), Segment.constant(0.5, 50, [1.0]),
                                   make_functional("y_T"), 1.5, 20000, 5, GRID)
    euler = (1 - GRID.dt) ** GRID.n_steps
    assert abs(est.mean - euler) <= 3 * est.std_err


def test_zero_direction(ex42):
    model, _ = ex42
    f = make_functional("tanh_y")
    b = estimate_gradient_bismut(model, _seg([1, 1]), _seg([0, 0]), f, 1.5, 50, 0, GRID)
    d = estimate_gradient_fd(model, _seg([1, 1]), _seg([0, 0]), f, 1.5, 50, 0, GRID, eps_fd=0.1)
    assert b.mean == 0.0 and d.mean == 0.0


@pytest.mark.parametrize("c", [2.0, -0.5])
def test_bismut_linear_in_direction(ex41, c):
    model, _ = ex41
    f = make_functional("tanh_y")
    h = Segment.from_function(0.5, 50, lambda t: [0.2 + t, 0.2 - t])
    a = estimate_gradient_bismut(model, _seg([1, 1]), h, f, 1.5, 500, 2, GRID)
    b = estimate_gradient_bismut(model, _seg([1, 1]), c * h, f, 1.5, 500, 2, GRID)
    assert b.mean == pytest.approx(c * a.mean, rel=1e-10)


def test_fd_exact_for_linear_model(ou):
    model, _ = ou
    xi, h = Segment.constant(0.5, 50, [1.0]), Segment.constant(0.5, 50, [1.0])
    f = make_functional("y_T")
    a = estimate_gradient_fd(model, xi, h, f, 1.5, 200, 0, GRID, eps_fd=0.1)
    b = estimate_gradient_fd(model, xi, h, f, 1.5, 200, 0, GRID, eps_fd=0.01)
    exact = (1 - GRID.dt) ** GRID.n_steps
    assert a.mean == pytest.approx(exact, rel=1e-10)
    assert b.mean == pytest.approx(exact, rel=1e-10)
    with pytest.raises(ValueError):
        estimate_gradient_fd(model, xi, h, f, 1.5, 200, 0, GRID, eps_fd=0.0)


def test_fd_richardson(ex41):
    model, _ = ex41
    f = make_functional("tanh_y")
    e = [estimate_gradient_fd(model, _seg([1, 1]), _seg([0.2, 0.2]), f, 1.5, 1000, 1, GRID, eps_fd=s).mean
         for s in (0.4, 0.2, 0.1)]
    assert 2.5 <= (e[0] - e[1]) / (e[1] - e[2]) <= 6.0


def test_control_variate_reduces_variance(ex41):
    model, _ = ex41
    f = make_functional("one_plus_tanh2")
    args = (model, _seg([1, 1]), _seg([0.5, 0.5]), f, 1.5, 3000, 6, GRID)
    on = estimate_gradient_bismut(*args, control_variate=True)
    off = estimate_gradient_bismut(*args, control_variate=False)
    assert on.std_err < off.std_err
    assert abs(on.mean - off.mean) <= 3 * off.std_err


def test_threads_do_not_change_estimates(ex42):
    model, _ = ex42
    f = make_functional("tanh_y")
    a = estimate_gradient_bismut(model, _seg([1, 1]), _seg([1, 1]), f, 1.5, 2100, 3, GRID, threads=1)
    b = estimate_gradient_bismut(model, _seg([1, 1]), _seg([1, 1]), f, 1.5, 2100, 3, GRID, threads=3)
    assert a == b


def test_girsanov_eps_zero(ex41):
    model, _ = ex41
    chk = girsanov_identity_check(model, _seg([1, 1]), _seg([1, 1]), make_functional("tanh_y"), 1.5, 0.0, 300,
                                  0, GRID)
    assert chk.z_score == 0.0 and chk.lhs == chk.rhs and chk.valid


def test_girsanov_constant_functional(ex41):
    model, _ = ex41
    chk = girsanov_identity_check(model, _seg([1, 1]), _seg([1, 1]), make_functional("const"), 1.5, 0.5, 5000,
                                  1, GRID)
    assert chk.lhs.mean == chk.r_mean.mean
    assert chk.r_z_score <= 3 and chk.valid


def test_grid_mismatch(ex41):
    model, _ = ex41
    with pytest.raises(ValueError):
        estimate_functional(model, _seg([1, 1]), make_functional("const"), 2.0, 10, 0, GRID)
    with pytest.raises(ValueError):
        estimate_functional(model, _seg([1, 1]), make_functional("const"), 1.5, 1, 0, GRID)
