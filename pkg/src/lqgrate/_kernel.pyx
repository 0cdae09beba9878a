# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed-loop trial.

Bit-identical to ``_kernel_py.run_trial``: every floating-point expression is
evaluated in the same order, with the same libm calls, and the build disables
FMA contraction.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport erfc, log, log2, sqrt, floor, ceil, frexp, fabs, isfinite, INFINITY
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX2 = 0x94D049BB133111EBULL
cdef double TWO_M53 = 1.1102230246251565e-16
cdef double SQRT1_2 = 0.7071067811865476
cdef double XI_SCALE = 1048576.0
cdef int MAX_POLAR = 128
cdef int MAX_DIM = 64


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline double uniform(uint64_t key, uint64_t t, uint64_t lane) noexcept nogil:
    cdef uint64_t x = mix64(key + ((t << 20) + lane + 1) * GOLDEN)
    return <double>(x >> 11) * TWO_M53


cdef int normals(uint64_t key, uint64_t t, int n, double* out) noexcept nogil:
    cdef int j = 0, filled = 0, a
    cdef uint64_t lane
    cdef double v1, v2, s, f
    while filled < n:
        for a in range(MAX_POLAR):
            lane = (<uint64_t>j << 8) | (<uint64_t>a << 1)
            v1 = 2.0 * uniform(key, t, lane) - 1.0
            v2 = 2.0 * uniform(key, t, lane | 1) - 1.0
            s = v1 * v1 + v2 * v2
            if 0.0 < s < 1.0:
                break
        else:
            return -1
        f = sqrt(-2.0 * log(s) / s)
        out[filled] = v1 * f
        filled += 1
        if filled < n:
            out[filled] = v2 * f
            filled += 1
        j += 1
    return 0


cdef inline double cell_prob(double k, double xi, double d, double s) noexcept nogil:
    cdef double lo = (k * d - 0.5 * d - xi) / s
    cdef double hi = (k * d + 0.5 * d - xi) / s
    if lo >= 0.0:
        return 0.5 * (erfc(lo * SQRT1_2) - erfc(hi * SQRT1_2))
    if hi <= 0.0:
        return 0.5 * (erfc(-hi * SQRT1_2) - erfc(-lo * SQRT1_2))
    return 1.0 - 0.5 * erfc(-lo * SQRT1_2) - 0.5 * erfc(hi * SQRT1_2)


def run_trial(const double[:, ::1] A, const double[:, ::1] B, const double[:, ::1] K,
              const double[:, ::1] L, const double[:, ::1] C, const double[:, ::1] Wc,
              const double[:, ::1] Q, const double[:, ::1] R,
              const double[::1] delta, const double[::1] sigma, double z,
              const double[::1] x0, uint64_t key_noise, uint64_t key_dither,
              Py_ssize_t burn, Py_ssize_t steps, bint record_u=False, double limit=1e9):
    cdef Py_ssize_t n = A.shape[0], m = B.shape[1], r = C.shape[0]
    if n > MAX_DIM or m > MAX_DIM or r > MAX_DIM:
        raise ValueError("dimension exceeds the compiled kernel's limit")

    cost_a = np.zeros(steps)
    bits_a = np.zeros(steps, dtype=np.int64)
    ideal_a = np.zeros(steps)
    esc_t_a = np.zeros(steps, dtype=np.int64)
    esc_k_a = np.zeros((steps, r), dtype=np.int64)
    sx_a = np.zeros(n)
    sxx_a = np.zeros((n, n))
    su_a = np.zeros(m)
    suu_a = np.zeros((m, m))
    u_a = np.zeros((steps if record_u else 0, m))
    cdef double[::1] cost = cost_a, ideal = ideal_a, sx = sx_a, su = su_a
    cdef int64_t[::1] bits = bits_a, esc_t = esc_t_a
    cdef int64_t[:, ::1] esc_k = esc_k_a
    cdef double[:, ::1] sxx = sxx_a, suu = suu_a, u_rec = u_a

    cdef double x[64]
    cdef double xp[64]
    cdef double xn[64]
    cdef double e[64]
    cdef double xf[64]
    cdef double u[64]
    cdef double w[64]
    cdef double g[64]
    cdef double q[64]
    cdef double xi[64]
    cdef double kc[64]

    cdef Py_ssize_t t, i, j, s_idx, total = burn + steps, n_esc = 0
    cdef Py_ssize_t status = -1, fail_step = -1
    cdef double acc, th, xbar, p, lo, hi
    cdef int ex
    cdef bint inside

    for i in range(n):
        x[i] = x0[i]
        xp[i] = 0.0

    with nogil:
        for t in range(total):
            for i in range(n):
                e[i] = x[i] - xp[i]
            p = 1.0
            inside = True
            for i in range(r):
                acc = 0.0
                for j in range(n):
                    acc += C[i, j] * e[j]
                th = acc
                xi[i] = (uniform(key_dither, <uint64_t>t, <uint64_t>i) - 0.5) * delta[i]
                kc[i] = floor((th + xi[i]) / delta[i] + 0.5)
                q[i] = kc[i] * delta[i] - xi[i]
                xbar = floor(xi[i] / delta[i] * XI_SCALE + 0.5) * delta[i] / XI_SCALE
                hi = ceil((z * sigma[i] + xbar - 0.5 * delta[i]) / delta[i])
                lo = floor((xbar + 0.5 * delta[i] - z * sigma[i]) / delta[i])
                if hi < 0.0:
                    hi = 0.0
                if lo > 0.0:
                    lo = 0.0
                if kc[i] < lo or kc[i] > hi:
                    inside = False
                p *= cell_prob(kc[i], xbar, delta[i], sigma[i])

            for i in range(n):
                acc = 0.0
                for j in range(r):
                    acc += L[i, j] * q[j]
                xf[i] = xp[i] + acc
            for i in range(m):
                acc = 0.0
                for j in range(n):
                    acc += K[i, j] * xf[j]
                u[i] = acc
            if normals(key_noise, <uint64_t>t, <int>n, g) != 0:
                status = 1
                fail_step = t
                break
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += Wc[i, j] * g[j]
                w[i] = acc
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += A[i, j] * x[j]
                for j in range(m):
                    acc += B[i, j] * u[j]
                acc += w[i]
                xn[i] = acc
                if not isfinite(acc) or fabs(acc) > limit:
                    status = 2
                    fail_step = t

            if t >= burn:
                s_idx = t - burn
                acc = 0.0
                for i in range(n):
                    for j in range(n):
                        acc += xn[i] * Q[i, j] * xn[j]
                for i in range(m):
                    for j in range(m):
                        acc += u[i] * R[i, j] * u[j]
                cost[s_idx] = acc
                if inside and p > 0.0:
                    frexp(p, &ex)
                    bits[s_idx] = 1 - ex if ex < 0 else 1
                else:
                    bits[s_idx] = -1
                    esc_t[n_esc] = s_idx
                    for i in range(r):
                        esc_k[n_esc, i] = <int64_t>kc[i]
                    n_esc += 1
                if p > 0.0:
                    ideal[s_idx] = -log2(p)
                else:
                    ideal[s_idx] = INFINITY
                for i in range(n):
                    sx[i] += x[i]
                    for j in range(n):
                        sxx[i, j] += x[i] * x[j]
                for i in range(m):
                    su[i] += u[i]
                    for j in range(m):
                        suu[i, j] += u[i] * u[j]
                if record_u:
                    for i in range(m):
                        u_rec[s_idx, i] = u[i]

            if status >= 0:
                break
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += A[i, j] * xf[j]
                for j in range(m):
                    acc += B[i, j] * u[j]
                xp[i] = acc
                x[i] = xn[i]

    return {
        "status": status,
        "fail_step": fail_step,
        "cost": cost_a,
        "bits": bits_a,
        "ideal": ideal_a,
        "escape_steps": esc_t_a[:n_esc].copy(),
        "escape_cells": esc_k_a[:n_esc].copy(),
        "sum_x": sx_a,
        "sum_xx": sxx_a,
        "sum_u": su_a,
        "sum_uu": suu_a,
        "u": u_a,
    }
