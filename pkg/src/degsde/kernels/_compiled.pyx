# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: Philox4x32-10 word generation and the Euler sweep
for the polynomial delay family.  Signatures mirror ``_fallback``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdint cimport uint32_t, uint64_t, int64_t

cnp.import_array()

cdef uint64_t M0 = 0xD2511F53
cdef uint64_t M1 = 0xCD9E8D57
cdef uint32_t W0 = 0x9E3779B9
cdef uint32_t W1 = 0xBB67AE85
cdef uint64_t MASK32 = 0xFFFFFFFF


cdef inline void _philox(uint32_t* c, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t x0, x1, x2, x3
    cdef int rnd
    x0 = c[0]; x1 = c[1]; x2 = c[2]; x3 = c[3]
    for rnd in range(10):
        p0 = M0 * <uint64_t>x0
        p1 = M1 * <uint64_t>x2
        x0 = <uint32_t>(p1 >> 32) ^ x1 ^ k0
        x1 = <uint32_t>p1
        x2 = <uint32_t>(p0 >> 32) ^ x3 ^ k1
        x3 = <uint32_t>p0
        k0 = k0 + W0
        k1 = k1 + W1
    c[0] = x0; c[1] = x1; c[2] = x2; c[3] = x3


def philox_words(seed, path_start, Py_ssize_t n_paths, Py_ssize_t n_steps, Py_ssize_t n_blocks):
    cdef uint64_t s = (<uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF))
    cdef uint32_t k0 = <uint32_t>(s & MASK32)
    cdef uint32_t k1 = <uint32_t>(s >> 32)
    cdef uint64_t p0 = <uint64_t>path_start
    out = np.empty((n_paths, n_steps, n_blocks, 4), dtype=np.uint32)
    cdef uint32_t[:, :, :, ::1] o = out
    cdef Py_ssize_t p, n, b
    cdef uint64_t pid
    cdef uint32_t c[4]
    with nogil:
        for p in range(n_paths):
            pid = p0 + <uint64_t>p
            for n in range(n_steps):
                for b in range(n_blocks):
                    c[0] = <uint32_t>n
                    c[1] = <uint32_t>b
                    c[2] = <uint32_t>(pid & MASK32)
                    c[3] = <uint32_t>(pid >> 32)
                    _philox(c, k0, k1)
                    o[p, n, b, 0] = c[0]
                    o[p, n, b, 1] = c[1]
                    o[p, n, b, 2] = c[2]
                    o[p, n, b, 3] = c[3]
    return out


def euler_poly(double[:, :, ::1] states, const double[:, :, ::1] dB,
               const double[:, ::1] A, const double[:, ::1] M, const double[:, ::1] sigma,
               const double[:, ::1] Kx, const double[:, ::1] Ky, const double[::1] c3,
               const double[:, ::1] Bx, const double[:, ::1] By, const double[::1] b3,
               const double[:, ::1] G, const double[::1] wq,
               double dt, Py_ssize_t n_hist, double threshold):
    cdef Py_ssize_t P = states.shape[0]
    cdef Py_ssize_t n_total = states.shape[1]
    cdef Py_ssize_t D = states.shape[2]
    cdef Py_ssize_t m = A.shape[0]
    cdef Py_ssize_t d = D - m
    cdef Py_ssize_t N = n_total - n_hist - 1
    bad_arr = np.full(P, -1, dtype=np.int64)
    cdef int64_t[::1] bad = bad_arr
    integ_arr = np.zeros(max(m, 1), dtype=np.float64)
    cdef double[::1] integ = integ_arr
    cdef Py_ssize_t p, n, i, j, k, cur
    cdef double acc, v, yd
    cdef bint failed
    with nogil:
        for p in range(P):
            failed = False
            for n in range(N):
                cur = n + n_hist
                for j in range(m):
                    acc = 0.0
                    for k in range(n_hist + 1):
                        acc = acc + wq[k] * states[p, n + k, j]
                    integ[j] = acc
                for i in range(m):
                    acc = 0.0
                    for j in range(m):
                        acc = acc + states[p, cur, j] * A[i, j]
                    for j in range(d):
                        acc = acc + states[p, cur, m + j] * M[i, j]
                    v = states[p, cur, i] + acc * dt
                    states[p, cur + 1, i] = v
                    if not (fabs(v) <= threshold):
                        failed = True
                for i in range(d):
                    acc = 0.0
                    for j in range(m):
                        acc = acc + states[p, cur, j] * Kx[i, j]
                    for j in range(d):
                        acc = acc + states[p, cur, m + j] * Ky[i, j]
                    v = states[p, cur, m + i]
                    acc = acc + c3[i] * v * v * v
                    for j in range(m):
                        acc = acc + states[p, n, j] * Bx[i, j]
                    for j in range(d):
                        acc = acc + states[p, n, m + j] * By[i, j]
                    yd = states[p, n, m + i]
                    acc = acc + b3[i] * yd * yd * yd
                    for j in range(m):
                        acc = acc + integ[j] * G[i, j]
                    v = v + acc * dt
                    for j in range(d):
                        v = v + sigma[i, j] * dB[p, n, j]
                    states[p, cur + 1, m + i] = v
                    if not (fabs(v) <= threshold):
                        failed = True
                if failed:
                    bad[p] = n
                    for k in range(cur + 1, n_total):
                        for i in range(D):
                            states[p, k, i] = 0.0
                    break
    return bad_arr
