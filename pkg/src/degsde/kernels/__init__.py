"""Hot kernels with a compiled (Cython) backend and a NumPy fallback.

The compiled module is used when it imports cleanly.  Setting the
environment variable ``DEGSDE_BACKEND=python`` forces the fallback.
Both backends produce bit-identical random words; the Euler sweep agrees
to rounding (summation order differs).
"""

import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("DEGSDE_BACKEND", "").lower() not in ("python", "fallback", "numpy"):
    try:
        from . import _compiled as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 2.0 ** -53


def philox_words(seed, path_start, n_paths, n_steps, n_blocks, backend=None):
    impl = _select(backend)
    return impl.philox_words(seed, path_start, n_paths, n_steps, n_blocks)


def standard_normals(seed, path_start, n_paths, n_steps, d, backend=None):
    """Standard normal draws of shape ``(n_paths, n_steps, d)``.

    Each (path, step, component pair) is one Philox block, turned into two
    normals by Box-Muller; the transform is shared by both backends.
    """
    n_blocks = (d + 1) // 2
    w = philox_words(seed, path_start, n_paths, n_steps, n_blocks, backend).astype(np.uint64)
    a = (w[..., 0] << np.uint64(32)) | w[..., 1]
    b = (w[..., 2] << np.uint64(32)) | w[..., 3]
    u1 = ((a >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _INV_2_53
    u2 = (b >> np.uint64(11)).astype(np.float64) * _INV_2_53
    r = np.sqrt(-2.0 * np.log(u1))
    ang = _TWO_PI * u2
    z = np.empty((n_paths, n_steps, 2 * n_blocks))
    z[..., 0::2] = r * np.cos(ang)
    z[..., 1::2] = r * np.sin(ang)
    return z[..., :d]


def euler_poly(states, dB, params, dt, n_hist, threshold, backend=None):
    impl = _select(backend)
    return impl.euler_poly(states, dB, *params, dt, n_hist, threshold)


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _fallback
    if backend == "cython":
        if _impl is _fallback:
            raise RuntimeError("compiled backend is not available")
        return _impl
    raise ValueError(f"unknown backend {backend!r}")


def available_backends():
    return ["python"] if _impl is _fallback else ["python", "cython"]
