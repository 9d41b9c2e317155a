"""Compiled inner loops for the Monte Carlo routines."""
from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(cache=True, nogil=True)
def first_violation(E, L, U):
    """Smallest grid index violated by each replication.

    ``E`` holds n+1 standard exponentials per row; the uniform order
    statistics are their normalised partial sums. ``L`` and ``U`` are
    ``(G, n)`` grids with ``L`` nondecreasing and ``U`` nonincreasing in the
    grid index, so violating grid g implies violating every grid above g.
    Returns G for rows that violate nothing.
    """
    reps, n1 = E.shape
    n = n1 - 1
    G = L.shape[0]
    out = np.empty(reps, np.int64)
    for m in range(reps):
        tot = 0.0
        for k in range(n1):
            tot += E[m, k]
        s = 0.0
        w = G
        for k in range(n):
            s += E[m, k]
            x = s / tot
            if w == 0:
                break
            g = w - 1
            if L[g, k] > x or U[g, k] < x:
                lo = 0
                hi = g
                while lo < hi:
                    mid = (lo + hi) // 2
                    if L[mid, k] > x or U[mid, k] < x:
                        hi = mid
                    else:
                        lo = mid + 1
                w = lo
        out[m] = w
    return out


@nb.njit(cache=True, nogil=True)
def labels_from_uniforms(R, nx, ny):
    """Uniformly random X/Y orderings by sequential draws without replacement.

    Row m of ``R`` supplies the uniforms for ordering m; label 1 marks X.
    """
    reps = R.shape[0]
    N = nx + ny
    lab = np.empty((reps, N), np.int8)
    for m in range(reps):
        rx = nx
        rem = N
        for p in range(N):
            if R[m, p] * rem < rx:
                lab[m, p] = 1
                rx -= 1
            else:
                lab[m, p] = 0
            rem -= 1
    return lab


@nb.njit(cache=True, nogil=True)
def labels_from_samples(X, Y):
    """Merge sorted X and Y rows into 1/0 orderings (1 = X)."""
    reps, nx = X.shape
    ny = Y.shape[1]
    lab = np.empty((reps, nx + ny), np.int8)
    for m in range(reps):
        a = 0
        b = 0
        for p in range(nx + ny):
            if b >= ny or (a < nx and X[m, a] < Y[m, b]):
                lab[m, p] = 1
                a += 1
            else:
                lab[m, p] = 0
                b += 1
    return lab


@nb.njit(cache=True, nogil=True)
def path_min(lab, C):
    """Minimum of ``C[i, j]`` over the lattice vertices visited by each ordering."""
    reps, N = lab.shape
    out = np.empty(reps)
    for m in range(reps):
        i = 0
        j = 0
        best = np.inf
        for p in range(N - 1):
            if lab[m, p] == 1:
                i += 1
            else:
                j += 1
            c = C[i, j]
            if c < best:
                best = c
        out[m] = best
    return out


@nb.njit(cache=True, nogil=True)
def path_ks(lab, nx, ny):
    """Signed two-sample KS extremes per ordering: max(Fx - Fy), max(Fy - Fx)."""
    reps, N = lab.shape
    plus = np.empty(reps)
    minus = np.empty(reps)
    for m in range(reps):
        i = 0
        j = 0
        dp = 0.0
        dm = 0.0
        for p in range(N):
            if lab[m, p] == 1:
                i += 1
            else:
                j += 1
            d = i / nx - j / ny
            if d > dp:
                dp = d
            if -d > dm:
                dm = -d
        plus[m] = dp
        minus[m] = dm
    return plus, minus


@nb.njit(cache=True, nogil=True)
def ks_1s_stats(E):
    """One-sample KS extremes for uniform samples given as exponential spacings.

    Returns (max(k/n - U_k), max(U_k - (k-1)/n)) per row.
    """
    reps, n1 = E.shape
    n = n1 - 1
    plus = np.empty(reps)
    minus = np.empty(reps)
    for m in range(reps):
        tot = 0.0
        for k in range(n1):
            tot += E[m, k]
        s = 0.0
        dp = 0.0
        dm = 0.0
        for k in range(n):
            s += E[m, k]
            x = s / tot
            a = (k + 1) / n - x
            b = x - k / n
            if a > dp:
                dp = a
            if b > dm:
                dm = b
        plus[m] = dp
        minus[m] = dm
    return plus, minus


@nb.njit(cache=True, nogil=True)
def weighted_ks_stat(E, index_weight):
    """max_k max(k/n - U_k, U_k - (k-1)/n) / s_k, unscaled.

    ``s_k = sqrt(tau_k (1 - tau_k))`` with ``tau_k = k/(n+1)`` when
    ``index_weight``, else ``sqrt(U_k (1 - U_k))``.
    """
    reps, n1 = E.shape
    n = n1 - 1
    out = np.empty(reps)
    for m in range(reps):
        tot = 0.0
        for k in range(n1):
            tot += E[m, k]
        s = 0.0
        best = 0.0
        for k in range(n):
            s += E[m, k]
            x = s / tot
            v = x * (1.0 - x)
            if v <= 0.0:
                best = np.inf
                break
            if index_weight:
                tau = (k + 1) / n1
                v = tau * (1.0 - tau)
            a = (k + 1) / n - x
            b = x - k / n
            d = a if a > b else b
            d = d / np.sqrt(v)
            if d > best:
                best = d
        out[m] = best
    return out
