"""Fused numba kernels for the hot basis-evaluation path.

One pass computes basis derivative tables
B^(k)[s, i] = d^k/dz^k sum_d diag[i, d] * max(z_s - t_{i+d}, 0)^p without
materializing the intermediate power matrix.  In spline mode on uniform
knots the combination has compact support (the truncated powers cancel
exactly r+1 columns past the active interval), so the kernels visit only
those columns; inputs are clamped into the knot domain upstream, which
keeps the incomplete boundary rows correct.  Knots ascend, so the inner
diagonal loop stops at the first negative shift.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _col_range(z, k0, h, r, kdim, compact):
    if not compact:
        return 0, kdim - 1
    idx = int((z - k0) / h)
    if idx < 0:
        idx = 0
    if idx > kdim - 1:
        idx = kdim - 1
    lo = idx - r
    if lo < 0:
        lo = 0
    hi = idx + 1
    if hi > kdim - 1:
        hi = kdim - 1
    return lo, hi


@numba.njit(cache=True, inline="always")
def _upow(u, pk):
    if pk == 0:
        return 1.0
    if pk == 1:
        return u
    if pk == 2:
        return u * u
    if pk == 3:
        return u * u * u
    val = u
    for _ in range(pk - 1):
        val *= u
    return val


@numba.njit(cache=True, inline="always")
def _cell(x, knots, diags, i, kdim, bw, pk):
    acc = 0.0
    for d in range(bw):
        col = i + d
        if col >= kdim:
            break
        u = x - knots[col]
        if u < 0.0:
            break  # knots ascend: later diagonals only get more negative
        acc += diags[i, d] * _upow(u, pk)
    return acc


@numba.njit(cache=True)
def basis_table(z, knots, diags, p, k, h, compact):
    """(m, K) table of k-th derivatives of the banded basis combination."""
    m = z.shape[0]
    kdim = knots.shape[0]
    bw = diags.shape[1]
    r = bw - 1 if bw > 1 else p + 1
    pk = p - k
    if pk < 0:
        return np.zeros((m, kdim))
    coef = 1.0
    for j in range(k):
        coef *= p - j
    out = np.empty((m, kdim))
    k0 = knots[0]
    for s in range(m):
        x = z[s]
        lo, hi = _col_range(x, k0, h, r, kdim, compact)
        for i in range(lo):
            out[s, i] = 0.0
        for i in range(lo, hi + 1):
            out[s, i] = coef * _cell(x, knots, diags, i, kdim, bw, pk)
        for i in range(hi + 1, kdim):
            out[s, i] = 0.0
    return out


@numba.njit(cache=True)
def basis_table_backward(z, knots, diags, p, k, h, compact, adj):
    """Adjoint w.r.t. z of sum(adj * basis_table(z, .., k)): contracts the
    (k+1)-th derivative table against adj on the fly."""
    m = z.shape[0]
    kdim = knots.shape[0]
    bw = diags.shape[1]
    r = bw - 1 if bw > 1 else p + 1
    out = np.zeros(m)
    kk = k + 1
    pk = p - kk
    if pk < 0:
        return out
    coef = 1.0
    for j in range(kk):
        coef *= p - j
    k0 = knots[0]
    for s in range(m):
        x = z[s]
        lo, hi = _col_range(x, k0, h, r, kdim, compact)
        total = 0.0
        for i in range(lo, hi + 1):
            aj = adj[s, i]
            if aj != 0.0:
                total += aj * _cell(x, knots, diags, i, kdim, bw, pk)
        out[s] = total * coef
    return out
