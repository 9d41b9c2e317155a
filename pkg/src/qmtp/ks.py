"""Kolmogorov-Smirnov baselines read as multiple testing procedures.

A KS test at level alpha rejects the pointwise CDF hypothesis at every x
where the scaled EDF gap exceeds the critical value, so the global test
rejects exactly when that set is nonempty.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

from . import _kernels
from .calibrate import n_orderings, ordering_blocks, EXHAUSTIVE_LIMIT
from .models import (Interval, NullModel, PooledPath, RejectionSet, as_sample, check_sides,
                     merge_intervals, segments_to_intervals)
from .rng import RngStream, as_stream, blocks
from .stat_core import _reps_per_block, kolmogorov_critical, kolmogorov_sf

__all__ = [
    "KsResult",
    "ks_stats_1s",
    "ks_critical_1s",
    "ks_mtp_1s",
    "ks_stats_2s",
    "ks_critical_2s",
    "ks_mtp_2s",
    "weighted_ks_stat",
    "weighted_ks_critical",
    "weighted_ks_mtp_1s",
]

DEFAULT_SEED = 20_240_601
MODES = ("exact", "asymptotic", "analytic")


@dataclass(frozen=True)
class KsResult:
    """Scaled statistic, critical value, p-value and the rejected region."""

    statistic: float
    critical_value: float
    p_value: float
    rejections: RejectionSet
    mode: str
    sides: str

    @property
    def reject(self) -> bool:
        return self.statistic > self.critical_value

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "critical_value": self.critical_value,
                "p_value": self.p_value, "mode": self.mode, "sides": self.sides,
                "reject": self.reject, "rejections": [iv.to_dict() for iv in self.rejections]}


def _pick(plus, minus, sides):
    if sides == "lower":
        return plus
    if sides == "upper":
        return minus
    return np.maximum(plus, minus)


def _upper_quantile(sorted_vals: np.ndarray, alpha: float) -> float:
    """Smallest c among the draws with Pr(D > c) <= alpha."""
    M = sorted_vals.size
    m = int(math.floor(alpha * M + 1e-9))
    return float(sorted_vals[max(0, M - m - 1)])


def _one_sided_asymptotic(alpha: float) -> float:
    return math.sqrt(-math.log(alpha) / 2.0)


# ---------------------------------------------------------------- one sample


def ks_stats_1s(t: np.ndarray) -> tuple[float, float]:
    """Unscaled (max(F_hat - F0), max(F0 - F_hat)) from sorted PIT values."""
    n = t.size
    k = np.arange(1, n + 1)
    return float(max(0.0, np.max(k / n - t))), float(max(0.0, np.max(t - (k - 1) / n)))


@lru_cache(maxsize=32)
def _null_1s(n: int, M: int, seed: int, stream_id: int) -> tuple[np.ndarray, np.ndarray]:
    stream = RngStream(seed, stream_id)
    plus, minus = [], []
    for b, s in blocks(M, _reps_per_block(n)):
        p, q = _kernels.ks_1s_stats(stream.generator(b).standard_exponential((s, n + 1)))
        plus.append(p)
        minus.append(q)
    return np.concatenate(plus) * math.sqrt(n), np.concatenate(minus) * math.sqrt(n)


def _null_sorted_1s(n, sides, M, stream):
    p, q = _null_1s(n, M, int(stream.seed), int(stream.stream_id))
    return np.sort(_pick(p, q, sides))


def ks_critical_1s(n: int, alpha: float, sides: str = "two_sided", mode: str = "exact",
                   M: int = 1_000_000, rng=None) -> float:
    """Critical value for sqrt(n) * sup|F_hat - F0| (or a one-sided sup).

    ``exact`` simulates the distribution-free null, ``analytic`` uses scipy's
    exact finite-n laws, ``asymptotic`` the Kolmogorov / Smirnov limits.
    """
    check_sides(sides)
    if mode == "asymptotic":
        return kolmogorov_critical(alpha) if sides == "two_sided" else _one_sided_asymptotic(alpha)
    if mode == "analytic":
        d = stats.kstwo if sides == "two_sided" else stats.ksone
        return float(d.isf(alpha, n)) * math.sqrt(n)
    if mode == "exact":
        stream = as_stream(DEFAULT_SEED if rng is None else rng)
        return _upper_quantile(_null_sorted_1s(n, sides, M, stream), alpha)
    raise ValueError(f"unknown mode {mode!r}")


def _pvalue_1s(D: float, n: int, sides: str, mode: str, M: int, rng) -> float:
    if mode == "asymptotic":
        return kolmogorov_sf(D) if sides == "two_sided" else math.exp(-2.0 * D * D)
    if mode == "analytic":
        d = stats.kstwo if sides == "two_sided" else stats.ksone
        return float(d.sf(D / math.sqrt(n), n))
    stream = as_stream(DEFAULT_SEED if rng is None else rng)
    null = _null_sorted_1s(n, sides, M, stream)
    return float(1.0 - np.searchsorted(null, D * (1 - 1e-12), side="left") / null.size)


def _ks_tau_intervals(t: np.ndarray, d: float, sides: str, quantile) -> list[Interval]:
    """Rejected tau-set of sqrt(n)|F_hat - F0| > c, with d = c / sqrt(n)."""
    n = t.size
    knots = np.concatenate([[0.0], t, [1.0]])
    raw_below, raw_above = [], []
    for k in range(n + 1):
        a, b = knots[k], knots[k + 1]
        if b <= a:
            continue
        p = k / n
        if sides != "upper":
            hi = min(b, p - d)
            if hi > a:
                raw_below.append((a, hi, k > 0, False, max(k, 1)))
        if sides != "lower":
            lo = max(a, p + d)
            if lo < b:
                raw_above.append((lo, b, lo == a and k > 0, False, min(k + 1, n)))
    return merge_intervals(raw_below, "below", quantile) + merge_intervals(raw_above, "above", quantile)


def ks_mtp_1s(sample, null: NullModel, alpha: float, sides: str = "two_sided",
              mode: str = "exact", M: int = 1_000_000, rng=None) -> KsResult:
    """One-sample KS test with its implied pointwise rejections.

    ``sides="lower"`` tests F <= F0 pointwise (equivalently quantiles at or
    above the null) and rejects where the EDF sits too high.
    """
    check_sides(sides)
    sample = as_sample(sample)
    n = sample.n
    t = np.asarray(null.cdf(sample.sorted), float)
    dp, dm = ks_stats_1s(t)
    D = float(_pick(dp, dm, sides)) * math.sqrt(n)
    c = ks_critical_1s(n, alpha, sides, mode, M, rng)
    p = _pvalue_1s(D, n, sides, mode, M, rng)
    ivs = _ks_tau_intervals(t, c / math.sqrt(n), sides, null.quantile) if D > c else []
    ivs.sort(key=lambda iv: iv.tau_lo)
    return KsResult(D, c, p, RejectionSet(tuple(ivs), "tau"), mode, sides)


# ---------------------------------------------------------------- two sample


def _scale_2s(nx: int, ny: int) -> float:
    return math.sqrt(nx * ny / (nx + ny))


def ks_stats_2s(path: PooledPath) -> tuple[float, float]:
    d = path.i / path.nx - path.j / path.ny
    return float(max(0.0, d.max())), float(max(0.0, (-d).max()))


@lru_cache(maxsize=32)
def _null_2s(nx: int, ny: int, scheme: str, M: int, seed: int, stream_id: int):
    plus, minus = [], []
    for lab in ordering_blocks(nx, ny, scheme, M, RngStream(seed, stream_id)):
        p, q = _kernels.path_ks(lab, nx, ny)
        plus.append(p)
        minus.append(q)
    return np.concatenate(plus), np.concatenate(minus)


def _null_sorted_2s(nx, ny, sides, scheme, M, stream):
    if scheme == "auto":
        scheme = "exhaustive" if n_orderings(nx, ny) <= EXHAUSTIVE_LIMIT else "permutation"
    p, q = _null_2s(nx, ny, scheme, M if scheme != "exhaustive" else 0,
                    int(stream.seed), int(stream.stream_id))
    return np.sort(_pick(p, q, sides))


def ks_critical_2s(nx: int, ny: int, alpha: float, sides: str = "two_sided",
                   mode: str = "exact", scheme: str = "auto", M: int = 1_000_000, rng=None) -> float:
    """Critical value for sqrt(nx ny / N) sup|F_hat_X - F_hat_Y|.

    Exact mode uses the permutation law of the pooled ordering, enumerated
    when there are at most 2e5 orderings.
    """
    check_sides(sides)
    if mode == "asymptotic":
        return kolmogorov_critical(alpha) if sides == "two_sided" else _one_sided_asymptotic(alpha)
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    stream = as_stream(DEFAULT_SEED if rng is None else rng)
    return _upper_quantile(_null_sorted_2s(nx, ny, sides, scheme, M, stream), alpha) * _scale_2s(nx, ny)


def ks_mtp_2s(x, y, alpha: float, sides: str = "two_sided", mode: str = "exact",
              scheme: str = "auto", M: int = 1_000_000, rng=None) -> KsResult:
    """Two-sample KS with pointwise rejections over pooled segments.

    ``sides="lower"`` targets F_X > F_Y (X stochastically smaller), labelled
    ``below``; ``upper`` the reverse.
    """
    check_sides(sides)
    x, y = as_sample(x), as_sample(y)
    path = PooledPath.of(x, y)
    nx, ny = x.n, y.n
    dp, dm = ks_stats_2s(path)
    scale = _scale_2s(nx, ny)
    D_raw = float(_pick(dp, dm, sides))
    D = D_raw * scale
    c = ks_critical_2s(nx, ny, alpha, sides, mode, scheme, M, rng)
    if mode == "asymptotic":
        p = kolmogorov_sf(D) if sides == "two_sided" else math.exp(-2.0 * D * D)
    else:
        stream = as_stream(DEFAULT_SEED if rng is None else rng)
        null = _null_sorted_2s(nx, ny, sides, scheme, M, stream)
        p = float(1.0 - np.searchsorted(null, D_raw - 1e-12, side="left") / null.size)
    gap = path.i / nx - path.j / ny
    thr = c / scale + 1e-12
    ivs = []
    if sides != "upper":
        ivs += segments_to_intervals(gap > thr, "below", path)
    if sides != "lower":
        ivs += segments_to_intervals(-gap > thr, "above", path)
    ivs.sort(key=lambda iv: iv.r_lo)
    return KsResult(D, c, p, RejectionSet(tuple(ivs), "r"), mode, sides)


# ---------------------------------------------------------------- weighted


WEIGHTS = ("index", "null")


def _check_weight(weight: str) -> None:
    if weight not in WEIGHTS:
        raise ValueError(f"weight must be one of {WEIGHTS}, got {weight!r}")


def weighted_ks_scale(T: np.ndarray, weight: str = "index") -> np.ndarray:
    """Standard deviations dividing the KS gaps at each order statistic.

    ``index``: sqrt(tau_k (1 - tau_k)) with tau_k = k/(n+1), the null spread
    of the k-th uniform order statistic's index. ``null``: sqrt(F0 (1 - F0))
    evaluated at the data, which explodes at extreme order statistics.
    """
    _check_weight(weight)
    T = np.asarray(T, float)
    if weight == "null":
        return np.sqrt(T * (1.0 - T))
    n = T.shape[-1]
    tau = np.arange(1, n + 1) / (n + 1)
    return np.broadcast_to(np.sqrt(tau * (1.0 - tau)), T.shape)


def weighted_ks_stat(t: np.ndarray, weight: str = "index") -> float:
    """sqrt(n) max_k max(k/n - t_k, t_k - (k-1)/n) / s_k; +inf if a PIT hits 0 or 1.

    With the ``null`` weight the supremum over each EDF step still sits at a
    step endpoint, so order statistics and their left limits suffice.
    """
    n = t.size
    if np.any(t * (1.0 - t) <= 0.0):
        return math.inf
    k = np.arange(1, n + 1)
    g = np.maximum(k / n - t, t - (k - 1) / n)
    return float(np.max(g / weighted_ks_scale(t, weight)) * math.sqrt(n))


@lru_cache(maxsize=16)
def _null_weighted(n: int, M: int, seed: int, stream_id: int, weight: str = "index") -> np.ndarray:
    stream = RngStream(seed, stream_id)
    out = [_kernels.weighted_ks_stat(stream.generator(b).standard_exponential((s, n + 1)), weight == "index")
           for b, s in blocks(M, _reps_per_block(n))]
    return np.sort(np.concatenate(out) * math.sqrt(n))


def weighted_ks_critical(n: int, alpha: float, M: int = 1_000_000, rng=None, weight: str = "index") -> float:
    _check_weight(weight)
    stream = as_stream(DEFAULT_SEED if rng is None else rng)
    return _upper_quantile(_null_weighted(n, M, int(stream.seed), int(stream.stream_id), weight), alpha)


def _weighted_intervals_null(t: np.ndarray, d: float, quantile) -> list[Interval]:
    """Rejected tau-set of |k/n - tau| > d sqrt(tau (1 - tau)) on each EDF step."""
    n = t.size
    knots = np.concatenate([[0.0], t, [1.0]])
    d2 = d * d
    below, above = [], []
    for k in range(n + 1):
        a, b = knots[k], knots[k + 1]
        if b <= a:
            continue
        p = k / n
        disc = max(0.0, (2 * p + d2) ** 2 - 4 * (1 + d2) * p * p)
        r1 = ((2 * p + d2) - math.sqrt(disc)) / (2 * (1 + d2))
        r2 = ((2 * p + d2) + math.sqrt(disc)) / (2 * (1 + d2))
        hi = min(b, r1)
        if hi > a:
            below.append((a, hi, k > 0, False, max(k, 1)))
        lo = max(a, r2)
        if lo < b:
            above.append((lo, b, lo == a and k > 0, False, min(k + 1, n)))
    return merge_intervals(below, "below", quantile) + merge_intervals(above, "above", quantile)


def _weighted_intervals_index(t: np.ndarray, d: float, quantile) -> list[Interval]:
    """Rejected tau-set when step k's gaps are scaled by the indices of its end order statistics.

    On ``[t_k, t_{k+1})`` the EDF is k/n; the gap below it is judged with
    s_k (order statistic k) and the gap above with s_{k+1}.
    """
    n = t.size
    knots = np.concatenate([[0.0], t, [1.0]])
    tau = np.arange(0, n + 2) / (n + 1)
    s = np.sqrt(tau * (1.0 - tau))
    below, above = [], []
    for k in range(n + 1):
        a, b = knots[k], knots[k + 1]
        if b <= a:
            continue
        p = k / n
        if k >= 1:
            hi = min(b, p - d * s[k])
            if hi > a:
                below.append((a, hi, True, False, k))
        if k < n:
            lo = max(a, p + d * s[k + 1])
            if lo < b:
                above.append((lo, b, lo == a and k > 0, False, k + 1))
    return merge_intervals(below, "below", quantile) + merge_intervals(above, "above", quantile)


def _boundary_intervals(t: np.ndarray, quantile) -> list[Interval]:
    """On the EDF step touching a PIT of 0 or 1, any positive gap rejects."""
    n = t.size
    below, above = [], []
    lo_hits = np.flatnonzero(t <= 0.0)
    if lo_hits.size:
        k = int(lo_hits[-1]) + 1
        nxt = t[k] if k < n else 1.0
        below.append((0.0, min(nxt, k / n), True, False, k))
    hi_hits = np.flatnonzero(t >= 1.0)
    if hi_hits.size:
        k = int(hi_hits[0]) + 1
        prev = t[k - 2] if k >= 2 else 0.0
        above.append((max(prev, (k - 1) / n), 1.0, k >= 2 and prev > (k - 1) / n, False, k))
    return merge_intervals(below, "below", quantile) + merge_intervals(above, "above", quantile)


def weighted_ks_mtp_1s(sample, null: NullModel, alpha: float, M: int = 1_000_000,
                       rng=None, weight: str = "index") -> KsResult:
    """Variance-weighted one-sample KS with a simulated exact critical value.

    ``weight="index"`` (default) scales the gap at order statistic k by the
    spread at its index k/(n+1); ``weight="null"`` scales by sqrt(F0 (1 - F0))
    at the data. Both reject outright when a PIT lands on 0 or 1.
    """
    _check_weight(weight)
    sample = as_sample(sample)
    n = sample.n
    t = np.asarray(null.cdf(sample.sorted), float)
    W = weighted_ks_stat(t, weight)
    stream = as_stream(DEFAULT_SEED if rng is None else rng)
    null_w = _null_weighted(n, M, int(stream.seed), int(stream.stream_id), weight)
    c = _upper_quantile(null_w, alpha)
    p = float(1.0 - np.searchsorted(null_w, W * (1 - 1e-12), side="left") / null_w.size)
    ivs = []
    if W > c:
        d = c / math.sqrt(n)
        if not math.isfinite(W):
            ivs = _boundary_intervals(t, null.quantile)
        inner = (_weighted_intervals_index if weight == "index" else _weighted_intervals_null)(
            np.clip(t, 0.0, 1.0), d, null.quantile)
        ivs = ivs + inner
    ivs.sort(key=lambda iv: (iv.tau_lo, iv.side))
    return KsResult(W, c, p, RejectionSet(tuple(ivs), "tau"), "exact", "two_sided")
