import numpy as np
import pytest

from degsde import kernels
from degsde.kernels import _fallback
from degsde.model import Segment, make_example_4_1, make_example_4_2
from degsde.simulate import SimGrid, brownian_block, initial_states

# Published Philox4x32-10 known-answer vectors
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(ctr, key, expected):
    args = [np.array([v], dtype=np.uint64) for v in ctr]
    out = _fallback.philox4x32(*args, *key)
    assert tuple(int(o[0]) for o in out) == expected


@pytest.mark.parametrize("backend", kernels.available_backends())
def test_words_deterministic(backend):
    a = kernels.philox_words(7, 3, 5, 11, 2, backend)
    b = kernels.philox_words(7, 3, 5, 11, 2, backend)
    assert a.shape == (5, 11, 2, 4)
    assert np.array_equal(a, b)


def test_backends_agree_on_words():
    backends = kernels.available_backends()
    if len(backends) < 2:
        pytest.skip("compiled backend not built")
    a = kernels.philox_words(12345678901, 100, 40, 33, 3, "python")
    b = kernels.philox_words(12345678901, 100, 40, 33, 3, "cython")
    assert np.array_equal(a, b)


def test_path_streams_are_independent_of_batching():
    full = kernels.standard_normals(3, 0, 10, 20, 3)
    part = kernels.standard_normals(3, 4, 3, 20, 3)
    assert np.array_equal(full[4:7], part)


def test_seeds_differ():
    assert not np.array_equal(kernels.standard_normals(1, 0, 2, 5, 1), kernels.standard_normals(2, 0, 2, 5, 1))


def test_normal_moments():
    z = kernels.standard_normals(99, 0, 400, 250, 2).reshape(-1, 2)
    n = z.shape[0]
    assert abs(z.mean()) < 4 / np.sqrt(2 * n)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / (2 * n))
    assert abs(np.corrcoef(z.T)[0, 1]) < 4 / np.sqrt(n)
    # lag-one correlation along the time axis
    zz = kernels.standard_normals(99, 0, 400, 250, 1)[..., 0]
    assert abs(np.mean(zz[:, 1:] * zz[:, :-1])) < 4 / np.sqrt(zz[:, 1:].size)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.philox_words(0, 0, 1, 1, 1, "fortran")


@pytest.mark.parametrize("maker", [make_example_4_1, make_example_4_2])
def test_backends_agree_on_euler(maker):
    backends = kernels.available_backends()
    if len(backends) < 2:
        pytest.skip("compiled backend not built")
    model, _ = maker()
    grid = SimGrid.from_times(1.5, 0.5, 0.01)
    xi = Segment.constant(0.5, grid.n_hist, [1.0, 1.0])
    dB = brownian_block(5, 0, 64, grid.n_steps, 1, grid.dt)
    c = np.ascontiguousarray
    params = (c(model.a), c(model.mm), c(model.sigma)) + model.coeffs.kernel_params(grid.n_hist)
    out = {}
    for b in backends:
        s = initial_states(xi, grid, 64)
        bad = kernels.euler_poly(s, dB, params, grid.dt, grid.n_hist, 1e8, b)
        out[b] = (s, np.asarray(bad))
    assert np.array_equal(out["python"][1], out["cython"][1])
    assert np.max(np.abs(out["python"][0] - out["cython"][0])) < 1e-12
