"""Pure-Python closed-loop trial, used when the compiled kernel is unavailable.

Scalar loops with the same evaluation order as ``_kernel.pyx`` so both
backends return identical arrays.
"""

from __future__ import annotations

import math

import numpy as np

from .codec import cell_prob
from .prng import normals, uniform

XI_SCALE = 1048576.0


def run_trial(A, B, K, L, C, Wc, Q, R, delta, sigma, z, x0, key_noise, key_dither,
              burn, steps, record_u=False, limit=1e9):
    A, B, K, L, C, Wc, Q, R = (np.asarray(M, dtype=float).tolist() for M in (A, B, K, L, C, Wc, Q, R))
    delta = [float(d) for d in delta]
    sigma = [float(s) for s in sigma]
    n, m, r = len(A), len(B[0]), len(C)
    rn, rm, rr = range(n), range(m), range(r)

    cost = [0.0] * steps
    bits = [0] * steps
    ideal = [0.0] * steps
    esc_t, esc_k = [], []
    sx = [0.0] * n
    sxx = [[0.0] * n for _ in rn]
    su = [0.0] * m
    suu = [[0.0] * m for _ in rm]
    u_rec = [] if record_u else None
    status, fail_step = -1, -1

    x = [float(v) for v in x0]
    xp = [0.0] * n
    xi = [0.0] * r
    kc = [0.0] * r
    q = [0.0] * r
    floor, ceil = math.floor, math.ceil

    for t in range(burn + steps):
        e = [x[i] - xp[i] for i in rn]
        p = 1.0
        inside = True
        for i in rr:
            acc = 0.0
            Ci = C[i]
            for j in rn:
                acc += Ci[j] * e[j]
            d, s = delta[i], sigma[i]
            xi[i] = (uniform(key_dither, t, i) - 0.5) * d
            kc[i] = float(floor((acc + xi[i]) / d + 0.5))
            q[i] = kc[i] * d - xi[i]
            xbar = floor(xi[i] / d * XI_SCALE + 0.5) * d / XI_SCALE
            hi = max(float(ceil((z * s + xbar - 0.5 * d) / d)), 0.0)
            lo = min(float(floor((xbar + 0.5 * d - z * s) / d)), 0.0)
            if kc[i] < lo or kc[i] > hi:
                inside = False
            p *= cell_prob(kc[i], xbar, d, s)

        xf = [0.0] * n
        for i in rn:
            acc = 0.0
            for j in rr:
                acc += L[i][j] * q[j]
            xf[i] = xp[i] + acc
        u = [0.0] * m
        for i in rm:
            acc = 0.0
            for j in rn:
                acc += K[i][j] * xf[j]
            u[i] = acc
        try:
            g = normals(key_noise, t, n)
        except RuntimeError:
            status, fail_step = 1, t
            break
        w = [0.0] * n
        for i in rn:
            acc = 0.0
            for j in rn:
                acc += Wc[i][j] * g[j]
            w[i] = acc
        xn = [0.0] * n
        for i in rn:
            acc = 0.0
            for j in rn:
                acc += A[i][j] * x[j]
            for j in rm:
                acc += B[i][j] * u[j]
            acc += w[i]
            xn[i] = acc
            if not math.isfinite(acc) or abs(acc) > limit:
                status, fail_step = 2, t

        if t >= burn:
            s_idx = t - burn
            acc = 0.0
            for i in rn:
                for j in rn:
                    acc += xn[i] * Q[i][j] * xn[j]
            for i in rm:
                for j in rm:
                    acc += u[i] * R[i][j] * u[j]
            cost[s_idx] = acc
            if inside and p > 0.0:
                ex = math.frexp(p)[1]
                bits[s_idx] = 1 - ex if ex < 0 else 1
            else:
                bits[s_idx] = -1
                esc_t.append(s_idx)
                esc_k.append([int(k) for k in kc])
            ideal[s_idx] = -math.log2(p) if p > 0.0 else math.inf
            for i in rn:
                sx[i] += x[i]
                row = sxx[i]
                for j in rn:
                    row[j] += x[i] * x[j]
            for i in rm:
                su[i] += u[i]
                row = suu[i]
                for j in rm:
                    row[j] += u[i] * u[j]
            if record_u:
                u_rec.append(list(u))

        if status >= 0:
            break
        for i in rn:
            acc = 0.0
            for j in rn:
                acc += A[i][j] * xf[j]
            for j in rm:
                acc += B[i][j] * u[j]
            xp[i] = acc
            x[i] = xn[i]

    return {
        "status": status,
        "fail_step": fail_step,
        "cost": np.array(cost),
        "bits": np.array(bits, dtype=np.int64),
        "ideal": np.array(ideal),
        "escape_steps": np.array(esc_t, dtype=np.int64),
        "escape_cells": np.array(esc_k, dtype=np.int64).reshape(len(esc_t), r),
        "sum_x": np.array(sx),
        "sum_xx": np.array(sxx),
        "sum_u": np.array(su),
        "sum_uu": np.array(suu).reshape(m, m),
        "u": np.array(u_rec if record_u else [], dtype=float).reshape(-1, m),
    }
