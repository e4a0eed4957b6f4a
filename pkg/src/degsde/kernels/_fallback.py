"""Pure NumPy versions of the hot kernels.

These are always importable and serve as the reference the compiled
backend is checked against.
"""

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on uint64 arrays holding 32-bit counter words."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    k0, k1 = int(k0), int(k1)
    for rnd in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = ((p1 >> _SHIFT32) ^ c1 ^ np.uint64(k0), p1 & _MASK32,
                          (p0 >> _SHIFT32) ^ c3 ^ np.uint64(k1), p0 & _MASK32)
        if rnd < 9:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def philox_words(seed, path_start, n_paths, n_steps, n_blocks):
    """Philox4x32-10 output words for every (path, step, block) counter.

    The counter is ``(step, block, path_lo, path_hi)`` and the key is the
    64-bit seed split into two 32-bit halves.  Returns a uint32 array of
    shape ``(n_paths, n_steps, n_blocks, 4)``.
    """
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    shape = (n_paths, n_steps, n_blocks)
    path = np.arange(path_start, path_start + n_paths, dtype=np.uint64)
    c0 = np.broadcast_to(np.arange(n_steps, dtype=np.uint64)[None, :, None], shape).copy()
    c1 = np.broadcast_to(np.arange(n_blocks, dtype=np.uint64)[None, None, :], shape).copy()
    c2 = np.broadcast_to((path & _MASK32)[:, None, None], shape).copy()
    c3 = np.broadcast_to((path >> _SHIFT32)[:, None, None], shape).copy()
    c0, c1, c2, c3 = philox4x32(c0, c1, c2, c3, seed & 0xFFFFFFFF, seed >> 32)
    out = np.empty(shape + (4,), dtype=np.uint32)
    out[..., 0] = c0
    out[..., 1] = c1
    out[..., 2] = c2
    out[..., 3] = c3
    return out


def euler_poly(states, dB, A, M, sigma, Kx, Ky, c3, Bx, By, b3, G, wq, dt, n_hist, threshold):
    """Euler-Maruyama sweep for the polynomial delay family, vectorised over paths.

    ``states`` has shape ``(P, n_hist + N + 1, m + d)`` with the history
    block already filled; it is overwritten in place.  Returns the first
    bad step per path (``-1`` when the path stayed finite and bounded).
    """
    P, n_total, D = states.shape
    m = A.shape[0]
    N = n_total - n_hist - 1
    bad = np.full(P, -1, dtype=np.int64)
    alive = np.ones(P, dtype=bool)
    noise = dB @ sigma.T
    At, Mt, Kxt, Kyt, Bxt, Byt, Gt = A.T, M.T, Kx.T, Ky.T, Bx.T, By.T, G.T
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(N):
            cur = n + n_hist
            x = states[:, cur, :m]
            y = states[:, cur, m:]
            xd = states[:, n, :m]
            yd = states[:, n, m:]
            drift = x @ Kxt + y @ Kyt + c3 * y ** 3 + xd @ Bxt + yd @ Byt + b3 * yd ** 3
            if m:
                drift = drift + (wq @ states[:, n:cur + 1, :m]) @ Gt
            new = states[:, cur + 1]
            new[:, :m] = x + (x @ At + y @ Mt) * dt
            new[:, m:] = y + drift * dt + noise[:, n]
            ok = np.all(np.abs(new) <= threshold, axis=1)
            newly = alive & ~ok
            if newly.any():
                bad[newly] = n
                alive &= ok
            if not alive.all():
                new[~alive] = 0.0
    return bad
