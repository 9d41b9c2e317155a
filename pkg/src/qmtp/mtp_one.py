"""One-sample quantile multiple testing, goodness-of-fit p-values and CDF bands.

Work happens in tau-space: with ``t_k = F0(X_{n:k})`` the hypothesis
``F^{-1}(tau) >= F0^{-1}(tau)`` is rejected through order statistic k for
every tau in ``(t_k, ell_k]``, and ``F^{-1}(tau) <= F0^{-1}(tau)`` for every
tau in ``[u_k, t_k)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .calibrate import (Calibration, band_levels, calibrate_1s, one_sided_unadjust,
                        DEFAULT_COEFFICIENTS, FORMULA_ALPHA_RANGE)
from .models import Band, NullModel, RejectionSet, Sample, as_sample, check_sides, merge_intervals
from .rng import as_stream, blocks
from .stat_core import DomainError, _reps_per_block

__all__ = [
    "QuantileGrid",
    "PValue",
    "build_grid",
    "pit",
    "pointwise_flags",
    "rejection_set_1s",
    "run_mtp_1s",
    "gof_pvalue_1s",
    "confidence_band_1s",
    "critical_level_1s",
    "uneven_grid",
    "UnevenCalibration",
    "calibrate_uneven_1s",
    "run_mtp_1s_uneven",
]


@dataclass(frozen=True)
class QuantileGrid:
    """Tested quantile indices ell_k and u_k for k = 1..n."""

    ell: np.ndarray
    u: np.ndarray
    tilde_alpha: float
    sides: str = "two_sided"

    @property
    def n(self) -> int:
        return int(self.ell.size)


def build_grid(n: int, calib: Calibration) -> QuantileGrid:
    if not calib.size_matches(n):
        raise ValueError(f"calibration was built for n={calib.n}, not {n}")
    ell, u = band_levels(n, calib.tilde_alpha, "two_sided")
    return QuantileGrid(ell, u, calib.tilde_alpha, calib.sides)


def pit(sample: Sample, null: NullModel) -> np.ndarray:
    """Probability integral transforms of the order statistics."""
    return np.asarray(null.cdf(sample.sorted), float)


def pointwise_flags(t: np.ndarray, grid: QuantileGrid) -> tuple[np.ndarray, np.ndarray]:
    """(reject_low, reject_high) per order statistic, honouring the grid's sides."""
    low = t < grid.ell if grid.sides != "upper" else np.zeros(t.size, bool)
    high = t > grid.u if grid.sides != "lower" else np.zeros(t.size, bool)
    return low, high


def rejection_set_1s(t: np.ndarray, grid: QuantileGrid, quantile=None) -> RejectionSet:
    """Exact rejected tau-set from transformed order statistics."""
    low, high = pointwise_flags(t, grid)
    k = np.arange(1, t.size + 1)
    below = merge_intervals(
        ((t[i], grid.ell[i], False, True, k[i]) for i in np.flatnonzero(low)), "below", quantile)
    above = merge_intervals(
        ((grid.u[i], t[i], True, False, k[i]) for i in np.flatnonzero(high)), "above", quantile)
    ivs = sorted(below + above, key=lambda iv: (iv.tau_lo, iv.side))
    return RejectionSet(tuple(ivs), "tau")


def run_mtp_1s(sample, null: NullModel, calib: Calibration) -> RejectionSet:
    """Test F^{-1}(tau) = F0^{-1}(tau) (or a one-sided version) for every tau at once.

    The calibration's ``sides`` selects the family: ``two_sided``, ``lower``
    (H0: F^{-1} >= F0^{-1}, rejections labelled ``below``) or ``upper``.
    """
    sample = as_sample(sample)
    grid = build_grid(sample.n, calib)
    return rejection_set_1s(pit(sample, null), grid, null.quantile)


def critical_level_1s(t: np.ndarray, sides: str = "two_sided") -> float:
    """Smallest per-tail beta tail probability across order statistics.

    The data reject at per-tail level ``a`` exactly when this is below ``a``.
    """
    check_sides(sides)
    n = t.size
    k = np.arange(1, n + 1, dtype=float)
    cdf = special.betainc(k, n + 1 - k, np.clip(t, 0.0, 1.0))
    if sides == "lower":
        return float(cdf.min())
    if sides == "upper":
        return float((1.0 - cdf).min())
    return float(np.minimum(cdf, 1.0 - cdf).min())


@dataclass(frozen=True)
class PValue:
    """A p-value with the statistic it came from.

    ``censored`` is ``"below"`` or ``"above"`` when the closed-form inversion
    hit the edge of its fitted alpha range and ``p`` is that edge.
    """

    p: float
    statistic: float
    method: str
    censored: str | None = None

    def to_dict(self) -> dict:
        return {"p": self.p, "statistic": self.statistic, "method": self.method,
                "censored": self.censored}


def _formula_raw(alpha: float, n: int) -> float:
    c1, c2, c3, c4 = DEFAULT_COEFFICIENTS.evaluate(alpha)
    ln = math.log(n)
    return math.exp(-c1 - c2 * math.sqrt(math.log(ln)) - c3 * ln ** c4)


def _invert_formula(target: float, n: int) -> tuple[float, str | None]:
    lo, hi = FORMULA_ALPHA_RANGE
    if target <= _formula_raw(lo, n):
        return lo, "below"
    if target >= _formula_raw(hi, n):
        return hi, "above"
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _formula_raw(mid, n) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi), None


def _null_critical_levels(n: int, sides: str, M: int, rng) -> np.ndarray:
    stream = as_stream(rng)
    k = np.arange(1, n + 1, dtype=float)
    out = []
    for b, s in blocks(M, _reps_per_block(n)):
        e = stream.generator(b).standard_exponential((s, n + 1))
        c = np.cumsum(e, axis=1)
        u = c[:, :n] / c[:, n:]
        cdf = special.betainc(k, n + 1 - k, u)
        if sides == "lower":
            out.append(cdf.min(axis=1))
        elif sides == "upper":
            out.append((1 - cdf).min(axis=1))
        else:
            out.append(np.minimum(cdf, 1 - cdf).min(axis=1))
    return np.concatenate(out)


def gof_pvalue_1s(sample, null: NullModel, sides: str = "two_sided", method: str = "auto",
                  M: int = 100_000, rng=None) -> PValue:
    """Global goodness-of-fit p-value implied by the multiple testing procedure.

    ``formula`` inverts the closed-form calibration in alpha (n >= 4);
    ``monte_carlo`` compares with simulated null draws of the statistic.
    """
    check_sides(sides)
    sample = as_sample(sample)
    n = sample.n
    s = critical_level_1s(pit(sample, null), sides)
    if method == "auto":
        method = "formula" if n >= 4 else "monte_carlo"
    if method == "formula":
        if n < 4:
            raise DomainError("the closed-form p-value needs n >= 4")
        a2, cens = _invert_formula(2.0 * s, n)
        p = a2 if sides == "two_sided" else one_sided_unadjust(a2)
        return PValue(float(p), s, "formula", cens)
    if method == "monte_carlo":
        null_s = _null_critical_levels(n, sides, M, rng)
        return PValue(float(np.mean(null_s <= s)), s, "monte_carlo")
    raise ValueError(f"unknown method {method!r}")


def confidence_band_1s(sample, alpha: float | None = None, sides: str = "two_sided",
                       calib: Calibration | None = None) -> Band:
    """Uniform band for the CDF with exact simultaneous coverage.

    On ``[X_{n:k}, X_{n:k+1})`` the band is ``[ell_k, u_{k+1}]`` with
    ``ell_0 = 0`` and ``u_{n+1} = 1``. A continuous CDF lies inside the band
    exactly when the matching multiple testing procedure rejects nothing.
    """
    sample = as_sample(sample)
    n = sample.n
    if calib is None:
        if alpha is None:
            raise ValueError("give alpha or a calibration")
        calib = calibrate_1s(alpha, n, sides)
    ell, u = band_levels(n, calib.tilde_alpha, calib.sides)
    lower = np.concatenate([[0.0], ell])
    upper = np.concatenate([u, [1.0]])
    return Band(np.asarray(sample.sorted, float).copy(), lower, upper, "x")


# ------------------------------------------------------- uneven sensitivity


def uneven_grid(n: int, levels, sides: str = "two_sided") -> QuantileGrid:
    """Grid whose order statistic k is tested at its own two-sided level ``levels[k-1]``."""
    check_sides(sides)
    lv = np.broadcast_to(np.asarray(levels, float), (n,))
    if not np.all((lv > 0.0) & (lv < 1.0)):
        raise DomainError("per-order-statistic levels must lie in (0, 1)")
    k = np.arange(1, n + 1, dtype=float)
    ell = special.betaincinv(k, n + 1 - k, lv / 2) if sides != "upper" else np.zeros(n)
    u = special.betaincinv(k, n + 1 - k, 1 - lv / 2) if sides != "lower" else np.ones(n)
    return QuantileGrid(ell, u, float(lv.max()), sides)


@dataclass(frozen=True)
class UnevenCalibration:
    alpha: float
    a: float
    fwer: float
    grid: QuantileGrid


def calibrate_uneven_1s(alpha: float, n: int, g, sides: str = "two_sided", M: int = 200_000,
                        rng=None, iters: int = 40) -> UnevenCalibration:
    """Solve for the scalar ``a`` in ``levels(k) = g(k, a)`` giving familywise level ``alpha``.

    ``g`` takes the array k = 1..n and a scalar and must be increasing in ``a``.
    Every trial shares the same uniform draws, so the simulated rate is
    monotone in ``a`` and plain bisection (in log a) applies.
    """
    from .calibrate import fwer_for_grids

    check_sides(sides)
    k = np.arange(1, n + 1)
    stream = as_stream(rng)

    def rate(a: float) -> float:
        lv = np.asarray(g(k, a), float)
        if np.any(lv >= 1.0):
            return 1.0
        grid = uneven_grid(n, lv, sides)
        return float(fwer_for_grids(grid.ell[None], grid.u[None], M, stream)[0])

    lo, hi = 1e-12, 1e-3
    while rate(hi) <= alpha:
        lo, hi = hi, hi * 4
        if hi > 1e6:
            raise DomainError("g never reaches the target familywise level")
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        if rate(mid) <= alpha:
            lo = mid
        else:
            hi = mid
    return UnevenCalibration(alpha, lo, rate(lo), uneven_grid(n, g(k, lo), sides))


def run_mtp_1s_uneven(sample, null: NullModel, cal: UnevenCalibration) -> RejectionSet:
    sample = as_sample(sample)
    if sample.n != cal.grid.n:
        raise ValueError(f"calibration was built for n={cal.grid.n}, not {sample.n}")
    return rejection_set_1s(pit(sample, null), cal.grid, null.quantile)
