"""Pointwise level calibration.

Every procedure here tests each order statistic at the same two-sided
pointwise level ``tilde_alpha``: order statistic k is flagged when its
probability-integral transform falls below ``B^{a}_{k,n}`` or above
``B^{1-a}_{k,n}`` with per-tail level ``a = tilde_alpha / 2``. One-sided
procedures use the same per-tail level on a single side. This module turns a
familywise target ``alpha`` into ``tilde_alpha`` by a closed-form
approximation, by Monte Carlo search, or by lookup in a stored table.
"""
from __future__ import annotations

import itertools
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import special, stats

from . import _kernels
from .io import atomic_write_text, format_csv
from .models import check_sides
from .rng import RngStream, as_stream, blocks, map_blocks
from .stat_core import DomainError, _reps_per_block, order_stat_quantiles

__all__ = [
    "Calibration",
    "CalibAccuracy",
    "FormulaCoefficients",
    "ReferenceTable",
    "TableKeyError",
    "CalibrationFailure",
    "DiscretenessWarning",
    "tilde_alpha_formula",
    "one_sided_adjust",
    "one_sided_unadjust",
    "band_levels",
    "simulate_fwer_1s",
    "fwer_curve_1s",
    "tilde_alpha_mc_1s",
    "calibrate_1s",
    "critical_levels_2s",
    "ordering_blocks",
    "null_statistics_2s",
    "tilde_alpha_mc_2s",
    "calibrate_2s",
    "calibrate_2s_many",
    "table_lookup",
    "default_table",
    "solve_level_hook",
]


class CalibrationFailure(RuntimeError):
    """Monte Carlo search could not bracket or hit the target."""


class DiscretenessWarning(UserWarning):
    """The attainable familywise rate sits well below the target."""


class TableKeyError(KeyError):
    pass


# --------------------------------------------------------------------------
# closed form


@dataclass(frozen=True)
class FormulaCoefficients:
    """Coefficients of the closed-form approximation as affine-ish maps of alpha.

    ``c1 = a1 + b1 ln(alpha)``, ``c2 = a2 + b2 alpha``, ``c3 = a3 + b3 alpha``,
    ``c4 = a4 + b4 alpha**p4``. Override to plug in alpha-specific fits.
    """

    a1: float = -2.75
    b1: float = -1.04
    a2: float = 4.76
    b2: float = -1.20
    a3: float = 1.15
    b3: float = -2.39
    a4: float = -3.96
    b4: float = 1.72
    p4: float = 0.171

    def evaluate(self, alpha: float) -> tuple[float, float, float, float]:
        return (self.a1 + self.b1 * math.log(alpha),
                self.a2 + self.b2 * alpha,
                self.a3 + self.b3 * alpha,
                self.a4 + self.b4 * alpha ** self.p4)


DEFAULT_COEFFICIENTS = FormulaCoefficients()
FORMULA_ALPHA_RANGE = (0.001, 0.9)


def tilde_alpha_formula(alpha: float, n: int,
                        coefs: FormulaCoefficients = DEFAULT_COEFFICIENTS) -> float:
    """Closed-form two-sided pointwise level for familywise level ``alpha``.

    ``exp(-c1 - c2 sqrt(ln ln n) - c3 (ln n)^c4)``. Valid for n >= 4; alpha
    outside [0.001, 0.9] triggers a warning since the fit was not built there.
    """
    if int(n) != n or n < 4:
        raise DomainError(f"closed-form calibration needs an integer n >= 4, got {n}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    lo, hi = FORMULA_ALPHA_RANGE
    if not lo <= alpha <= hi:
        warnings.warn(f"alpha={alpha} is outside [{lo}, {hi}], where the closed form was fitted",
                      RuntimeWarning, stacklevel=2)
    c1, c2, c3, c4 = coefs.evaluate(alpha)
    ln = math.log(n)
    val = math.exp(-c1 - c2 * math.sqrt(math.log(ln)) - c3 * ln ** c4)
    if not 0.0 < val < 0.5:
        raise DomainError(f"closed form gives tilde_alpha={val:.4g} at alpha={alpha}, n={n}; "
                          "outside (0, 0.5)")
    return val


def one_sided_adjust(alpha1: float) -> float:
    """Two-sided familywise level matched to a one-sided level: 2a - a^2."""
    if not 0.0 <= alpha1 <= 1.0:
        raise DomainError("alpha1 must lie in [0, 1]")
    return 2.0 * alpha1 - alpha1 * alpha1


def one_sided_unadjust(alpha2: float) -> float:
    """Inverse of :func:`one_sided_adjust` on [0, 1]."""
    if not 0.0 <= alpha2 <= 1.0:
        raise DomainError("alpha2 must lie in [0, 1]")
    return 1.0 - math.sqrt(1.0 - alpha2)


# --------------------------------------------------------------------------
# result types


@dataclass(frozen=True)
class Calibration:
    """A calibrated pointwise level and where it came from.

    ``tilde_alpha`` is always the two-sided pointwise level; ``tail`` is the
    per-tail level actually used for each beta quantile.
    """

    alpha: float
    tilde_alpha: float
    sides: str
    n: int | tuple[int, int]
    source: str
    mc_meta: dict | None = None
    alpha_low: float | None = None
    alpha_high: float | None = None
    interpolated: bool = False

    def __post_init__(self) -> None:
        check_sides(self.sides)
        if self.source not in ("formula", "monte_carlo", "table"):
            raise ValueError(f"unknown calibration source {self.source!r}")
        if not 0.0 < self.tilde_alpha < 0.5:
            raise DomainError(f"tilde_alpha must lie in (0, 0.5), got {self.tilde_alpha}")
        if isinstance(self.n, list):
            object.__setattr__(self, "n", tuple(int(v) for v in self.n))

    @property
    def tail(self) -> float:
        return self.tilde_alpha / 2.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n"] = list(self.n) if isinstance(self.n, tuple) else self.n
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Calibration":
        d = dict(d)
        if isinstance(d.get("n"), list):
            d["n"] = tuple(int(v) for v in d["n"])
        return cls(**d)

    @classmethod
    def from_json(cls, s: str) -> "Calibration":
        return cls.from_dict(json.loads(s))

    def size_matches(self, n) -> bool:
        if isinstance(self.n, tuple):
            return tuple(self.n) == tuple(n) if isinstance(n, (tuple, list)) else False
        return int(self.n) == int(n)


@dataclass(frozen=True)
class CalibAccuracy:
    """Monte Carlo accuracy settings.

    ``M`` replications and stopping tolerance ``T`` are tied so that, with
    probability at least 1 - p, the search stops at a level whose true
    familywise rate is within a relative ``c`` of the target.
    """

    alpha: float
    c: float
    p: float = 0.05
    M: int = 200_000

    @property
    def T(self) -> float:
        a = self.alpha * (1.0 + self.c)
        z = stats.norm.ppf(1.0 - self.p)
        return float(self.c * self.alpha - z * math.sqrt(a * (1.0 - a)) / math.sqrt(self.M))

    def __post_init__(self) -> None:
        if self.M < 1 or not 0 < self.p < 1 or self.c <= 0:
            raise ValueError("need M >= 1, p in (0, 1), c > 0")
        if self.T <= 0:
            raise ValueError(f"accuracy settings give a nonpositive tolerance T={self.T:.3g}; raise M")

    @classmethod
    def default(cls, alpha: float) -> "CalibAccuracy":
        """c = 0.02 with M = 2e5 for alpha >= 0.05, c = 0.05 with M = 1e6 below."""
        if alpha >= 0.05:
            return cls(alpha, 0.02, 0.05, 200_000)
        return cls(alpha, 0.05, 0.05, 1_000_000)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "c": self.c, "p": self.p, "M": self.M, "T": float(self.T)}


# --------------------------------------------------------------------------
# one-sample Monte Carlo


def band_levels(n: int, tilde_alpha: float, sides: str = "two_sided") -> tuple[np.ndarray, np.ndarray]:
    """(ell, u) for k = 1..n at per-tail level tilde_alpha / 2.

    One-sided bands put 0 or 1 on the unused side so it never triggers.
    """
    check_sides(sides)
    q = tilde_alpha / 2.0
    ell = order_stat_quantiles(n, q) if sides != "upper" else np.zeros(n)
    u = order_stat_quantiles(n, 1.0 - q) if sides != "lower" else np.ones(n)
    return ell, u


class _Draws:
    """Exponential-spacing blocks for a fixed stream, cached when small."""

    CACHE_LIMIT = 25_000_000

    def __init__(self, n: int, M: int, rng: RngStream):
        self.n, self.M, self.rng = n, M, rng
        self.block = _reps_per_block(n)
        self._cache = None
        if M * (n + 1) <= self.CACHE_LIMIT:
            self._cache = [self._make(b, s) for b, s in blocks(M, self.block)]

    def _make(self, b: int, s: int) -> np.ndarray:
        return self.rng.generator(b).standard_exponential((s, self.n + 1))

    def get(self, b: int, s: int) -> np.ndarray:
        return self._cache[b] if self._cache is not None else self._make(b, s)


def _first_violation_counts(draws: _Draws, L: np.ndarray, U: np.ndarray, workers: int = 1) -> np.ndarray:
    G = L.shape[0]
    L = np.ascontiguousarray(L, dtype=float)
    U = np.ascontiguousarray(U, dtype=float)

    def run(b, s):
        w = _kernels.first_violation(draws.get(b, s), L, U)
        return np.bincount(w, minlength=G + 1)

    return np.sum(map_blocks(run, draws.M, draws.block, workers), axis=0)


def _grids(n: int, tildes: Sequence[float], sides: str) -> tuple[np.ndarray, np.ndarray]:
    L = np.empty((len(tildes), n))
    U = np.empty((len(tildes), n))
    for g, t in enumerate(tildes):
        L[g], U[g] = band_levels(n, t, sides)
    return L, U


def fwer_for_grids(L: np.ndarray, U: np.ndarray, M: int, rng, workers: int = 1) -> np.ndarray:
    """Familywise rate of each nested band ``(L[g], U[g])`` on shared draws.

    Grids must be nested: row g+1 rejects whenever row g does.
    """
    n = L.shape[1]
    draws = _Draws(n, M, as_stream(rng))
    counts = _first_violation_counts(draws, L, U, workers)
    return np.cumsum(counts)[:-1] / M


def fwer_curve_1s(tildes: Sequence[float], n: int, sides: str, M: int, rng,
                  workers: int = 1) -> np.ndarray:
    """Simulated familywise rate at several levels from one pass over the draws."""
    check_sides(sides)
    t = np.asarray(tildes, float)
    order = np.argsort(t)
    L, U = _grids(n, t[order], sides)
    out = np.empty(t.size)
    out[order] = fwer_for_grids(L, U, M, rng, workers)
    return out


def simulate_fwer_1s(tilde_alpha: float, n: int, sides: str, M: int, rng,
                     workers: int = 1) -> float:
    """Fraction of M uniform samples whose order statistics leave the band."""
    if not 0.0 <= tilde_alpha < 1.0:
        raise DomainError("tilde_alpha must lie in [0, 1)")
    if tilde_alpha == 0.0:
        return 0.0
    return float(fwer_curve_1s([tilde_alpha], n, sides, M, rng, workers)[0])


def _formula_guess(alpha: float, n: int, sides: str) -> float:
    a2 = alpha if sides == "two_sided" else one_sided_adjust(alpha)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return tilde_alpha_formula(a2, max(int(n), 4))
    except DomainError:
        return min(0.25, a2 / max(1.0, math.log(n + 1.0)))


def _multisection(fwer_at: Callable[[np.ndarray], np.ndarray], alpha: float, T: float,
                  guess: float, lo_bound: float, hi_bound: float,
                  grid: int = 15, max_iter: int = 60) -> tuple[float, float, int]:
    """Search a monotone step function in log space for a level hitting alpha within T.

    Each iteration evaluates ``grid`` levels on the shared draws, which is as
    cheap as one level because the kernel scans all grids in one pass.
    """
    lo, hi = max(lo_bound, guess / 4.0), min(hi_bound, guess * 4.0)
    best = None
    for it in range(1, max_iter + 1):
        pts = np.exp(np.linspace(math.log(lo), math.log(hi), grid))
        f = fwer_at(pts)
        err = np.abs(f - alpha)
        j = int(np.argmin(err))
        if best is None or err[j] < abs(best[1] - alpha):
            best = (float(pts[j]), float(f[j]))
        if err[j] < T:
            return float(pts[j]), float(f[j]), it
        if f[0] > alpha:
            if lo <= lo_bound * (1 + 1e-12):
                break
            hi, lo = pts[0], max(lo_bound, lo / 16.0)
        elif f[-1] < alpha:
            if hi >= hi_bound * (1 - 1e-12):
                break
            lo, hi = pts[-1], min(hi_bound, hi * 16.0)
        else:
            idx = int(np.searchsorted(f, alpha))
            lo, hi = pts[idx - 1], pts[idx]
            if hi / lo - 1.0 < 1e-13:
                break
    raise CalibrationFailure(
        f"could not reach |fwer - alpha| < T={T:.3g}; closest level {best[0]:.6g} gave {best[1]:.6g}")


def tilde_alpha_mc_1s(alpha: float, n: int, sides: str = "two_sided",
                      acc: CalibAccuracy | None = None, rng=None,
                      workers: int = 1) -> Calibration:
    """Search for the level whose simulated familywise rate is alpha within T.

    The M uniform samples are drawn once and re-thresholded at every step, so
    the simulated rate is a fixed monotone step function of the level.
    """
    check_sides(sides)
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    if n < 1:
        raise DomainError("n must be >= 1")
    acc = acc or CalibAccuracy.default(alpha)
    stream = as_stream(rng)
    draws = _Draws(n, acc.M, stream)

    def fwer_at(pts):
        L, U = _grids(n, pts, sides)
        return np.cumsum(_first_violation_counts(draws, L, U, workers))[:-1] / acc.M

    t, f, iters = _multisection(fwer_at, alpha, acc.T, _formula_guess(alpha, n, sides),
                                1e-300, 0.4999999)
    meta = {"M": acc.M, "T": float(acc.T), "c": acc.c, "p": acc.p, "fwer_hat": f,
            "iterations": iters, **stream.to_dict()}
    return Calibration(alpha, t, sides, int(n), "monte_carlo", meta)


def calibrate_1s(alpha: float, n: int, sides: str = "two_sided", source: str = "auto",
                 acc: CalibAccuracy | None = None, rng=None,
                 coefs: FormulaCoefficients = DEFAULT_COEFFICIENTS, workers: int = 1) -> Calibration:
    """One-sample calibration by closed form (default) or Monte Carlo.

    One-sided targets go through ``2a - a^2`` before the closed form. With
    ``source="auto"`` the closed form is used inside its fitted domain and
    Monte Carlo elsewhere.
    """
    check_sides(sides)
    lo, hi = FORMULA_ALPHA_RANGE
    if source == "auto":
        source = "formula" if n >= 4 and lo <= alpha <= hi else "monte_carlo"
    if source == "formula":
        a2 = alpha if sides == "two_sided" else one_sided_adjust(alpha)
        return Calibration(alpha, tilde_alpha_formula(a2, n, coefs), sides, int(n), "formula")
    if source == "monte_carlo":
        return tilde_alpha_mc_1s(alpha, n, sides, acc, rng, workers)
    raise ValueError(f"unknown source {source!r}")


def solve_level_hook(alpha: float, n: int, levels: Callable[[np.ndarray, float], np.ndarray],
                     a_range: tuple[float, float], sides: str = "two_sided", M: int = 200_000,
                     rng=None, tol: float | None = None) -> tuple[float, float]:
    """Calibrate a k-dependent pointwise level family by Monte Carlo.

    ``levels(k, a)`` returns two-sided pointwise levels for k = 1..n and must
    be nondecreasing in the scalar ``a``. Returns ``(a, simulated fwer)``.
    """
    k = np.arange(1, n + 1, dtype=float)
    draws = _Draws(n, M, as_stream(rng))
    tol = tol if tol is not None else 3.0 * math.sqrt(alpha * (1 - alpha) / M)

    def grid_for(a):
        lv = np.clip(np.asarray(levels(k, a), float), 1e-300, 0.999999)
        ell = special.betaincinv(k, n + 1 - k, lv / 2) if sides != "upper" else np.zeros(n)
        u = special.betaincinv(k, n + 1 - k, 1 - lv / 2) if sides != "lower" else np.ones(n)
        return ell, u

    def fwer_at(pts):
        L = np.empty((len(pts), n))
        U = np.empty((len(pts), n))
        for g, a in enumerate(pts):
            L[g], U[g] = grid_for(a)
        return np.cumsum(_first_violation_counts(draws, L, U))[:-1] / M

    lo, hi = a_range
    for _ in range(60):
        pts = np.linspace(lo, hi, 9)
        f = fwer_at(pts)
        j = int(np.argmin(np.abs(f - alpha)))
        if abs(f[j] - alpha) < tol:
            return float(pts[j]), float(f[j])
        idx = int(np.searchsorted(f, alpha))
        if idx == 0 or idx == len(pts):
            raise CalibrationFailure("a_range does not bracket the target rate")
        lo, hi = pts[idx - 1], pts[idx]
    raise CalibrationFailure("level hook search did not converge")


# --------------------------------------------------------------------------
# two-sample


def _crossing_levels(ka: np.ndarray, na: int, kb: np.ndarray, nb: int) -> np.ndarray:
    """Per-tail level where B^{a}_{ka,na} meets B^{1-a}_{kb+1,nb}.

    Solves I_x(ka, na+1-ka) + I_x(kb+1, nb-kb) = 1 for x by bisection and
    returns I_x(ka, na+1-ka). Entries with ka = 0 or kb = nb (a band pinned
    at 0 or 1) or with a crossing at or above 1/2 never reject: inf.
    """
    ka = np.asarray(ka, float)
    kb = np.asarray(kb, float)
    out = np.full(np.broadcast(ka, kb).shape, np.inf)
    ok = (ka > 0) & (kb < nb)
    ka_, kb_ = np.broadcast_arrays(ka, kb)
    a1, b1 = ka_[ok], na + 1 - ka_[ok]
    a2, b2 = kb_[ok] + 1, nb - kb_[ok]
    lo = np.zeros(a1.size)
    hi = np.ones(a1.size)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        f = special.betainc(a1, b1, mid) + special.betainc(a2, b2, mid) - 1.0
        up = f > 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    c = special.betainc(a1, b1, 0.5 * (lo + hi))
    c = np.where(c < 0.5, c, np.inf)
    out[ok] = c
    return out


def critical_levels_2s(nx: int, ny: int, sides: str = "two_sided") -> np.ndarray:
    """Matrix C[i, j]: per-tail level above which lattice vertex (i, j) rejects.

    Vertex (i, j) means i X's and j Y's at or below r. ``lower`` checks
    ell_X > u_Y (X stochastically smaller), ``upper`` checks ell_Y > u_X.
    """
    check_sides(sides)
    i = np.arange(nx + 1)[:, None]
    j = np.arange(ny + 1)[None, :]
    cx = _crossing_levels(i, nx, j, ny) if sides != "upper" else np.full((nx + 1, ny + 1), np.inf)
    cy = _crossing_levels(j, ny, i, nx) if sides != "lower" else np.full((nx + 1, ny + 1), np.inf)
    return np.minimum(cx, cy)


EXHAUSTIVE_LIMIT = 200_000


def n_orderings(nx: int, ny: int) -> int:
    return math.comb(nx + ny, nx)


def ordering_blocks(nx: int, ny: int, scheme: str, M: int | None, rng) -> Iterator[np.ndarray]:
    """Yield int8 label blocks (1 = X) of null orderings of the pooled sample.

    ``exhaustive`` lists every ordering once; ``permutation`` samples
    orderings of a pooled index vector; ``uniform_sim`` sorts independent
    uniform samples. ``auto`` is exhaustive when the count is at most 2e5.
    """
    if nx < 1 or ny < 1:
        raise DomainError("both samples need at least one observation")
    if scheme == "auto":
        scheme = "exhaustive" if n_orderings(nx, ny) <= EXHAUSTIVE_LIMIT else "permutation"
    N = nx + ny
    if scheme == "exhaustive":
        total = n_orderings(nx, ny)
        if total > 5_000_000:
            raise DomainError(f"{total} orderings is too many to enumerate")
        it = itertools.combinations(range(N), nx)
        while True:
            chunk = list(itertools.islice(it, 50_000))
            if not chunk:
                return
            lab = np.zeros((len(chunk), N), np.int8)
            rows = np.repeat(np.arange(len(chunk)), nx)
            lab[rows, np.asarray(chunk).ravel()] = 1
            yield lab
        return
    if M is None or M < 1:
        raise DomainError("sampled schemes need M >= 1")
    stream = as_stream(rng)
    bs = max(1, min(20_000, 4_000_000 // N))
    for b, s in blocks(M, bs):
        g = stream.generator(b)
        if scheme == "permutation":
            yield _kernels.labels_from_uniforms(g.random((s, N)), nx, ny)
        elif scheme == "uniform_sim":
            x = np.sort(g.random((s, nx)), axis=1)
            y = np.sort(g.random((s, ny)), axis=1)
            yield _kernels.labels_from_samples(x, y)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")


def null_statistics_2s(nx: int, ny: int, sides: str, scheme: str, M: int | None, rng) -> np.ndarray:
    """Null draws of the smallest per-tail level at which an ordering rejects."""
    C = critical_levels_2s(nx, ny, sides)
    return np.concatenate([_kernels.path_min(lab, C) for lab in ordering_blocks(nx, ny, scheme, M, rng)])


TILDE_OFFSET = 1e-4
TAIL_CAP = 0.25


def _from_null_stats(s_sorted: np.ndarray, alpha: float, nx: int, ny: int, sides: str,
                     meta: dict) -> Calibration:
    M = s_sorted.size
    m = int(math.floor(alpha * M + 1e-9))
    a_star = float(s_sorted[m]) if m < M else np.inf
    a_star = min(a_star, TAIL_CAP)
    tilde = 2.0 * a_star - TILDE_OFFSET
    lo = float(np.searchsorted(s_sorted, tilde / 2.0, side="left")) / M
    hi = float(np.searchsorted(s_sorted, a_star, side="right")) / M
    if lo < 0.5 * alpha:
        warnings.warn(f"severe discreteness at (nx={nx}, ny={ny}): attainable familywise rate "
                      f"{lo:.4g} is far below alpha={alpha}", DiscretenessWarning, stacklevel=3)
    return Calibration(alpha, tilde, sides, (int(nx), int(ny)), "monte_carlo", dict(meta),
                       alpha_low=lo, alpha_high=hi)


def calibrate_2s_many(alphas: Sequence[float], nx: int, ny: int, sides: str = "two_sided",
                      scheme: str = "auto", M: int | None = 200_000, rng=None) -> list[Calibration]:
    """Calibrate several targets from a single set of null orderings."""
    check_sides(sides)
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise DomainError("alpha must lie in (0, 1)")
    if scheme == "auto":
        scheme = "exhaustive" if n_orderings(nx, ny) <= EXHAUSTIVE_LIMIT else "permutation"
    stream = as_stream(rng)
    s = np.sort(null_statistics_2s(nx, ny, sides, scheme, M, stream))
    meta = {"scheme": scheme, "M": int(s.size)}
    if scheme != "exhaustive":
        meta.update(stream.to_dict())
    return [_from_null_stats(s, a, nx, ny, sides, meta) for a in alphas]


def tilde_alpha_mc_2s(alpha: float, nx: int, ny: int, sides: str = "two_sided",
                      scheme: str = "auto", M: int | None = 200_000, rng=None) -> Calibration:
    """Largest level on the simulated familywise step function with rate <= alpha, minus 1e-4.

    ``alpha_low`` is the rate at the returned level and ``alpha_high`` the
    rate just past the step.
    """
    return calibrate_2s_many([alpha], nx, ny, sides, scheme, M, rng)[0]



def calibrate_2s(alpha: float, nx: int, ny: int, sides: str = "two_sided", source: str = "auto",
                 M: int | None = 200_000, rng=None, table: "ReferenceTable | None" = None) -> Calibration:
    """Two-sample calibration from the stored table when possible, else by simulation.

    ``auto`` uses an exact (alpha, nx, ny) table hit for two-sided requests and
    falls back to :func:`tilde_alpha_mc_2s` otherwise.
    """
    check_sides(sides)
    if source not in ("auto", "table", "monte_carlo"):
        raise ValueError(f"unknown source {source!r}")
    if source in ("auto", "table"):
        try:
            tab = table if table is not None else default_table()
            if tab.sides == sides:
                return table_lookup(alpha, nx, ny, tab)
        except TableKeyError:
            pass
        except ValueError as exc:
            if source == "table":
                raise
            warnings.warn(f"reference table unusable ({exc}); simulating instead", stacklevel=2)
        if source == "table":
            raise TableKeyError(f"no stored {sides} calibration for alpha={alpha}, sizes ({nx}, {ny})")
    return tilde_alpha_mc_2s(alpha, nx, ny, sides, "auto", M, rng)

# --------------------------------------------------------------------------
# reference table

TABLE_HEADER = ("alpha", "nx", "ny", "tilde_alpha", "alpha_low", "alpha_high")


@dataclass(frozen=True)
class TableRow:
    alpha: float
    nx: int
    ny: int
    tilde_alpha: float
    alpha_low: float
    alpha_high: float


def _g8(x: float) -> str:
    return f"{x:.8g}"


@dataclass
class ReferenceTable:
    """Stored two-sample calibrations keyed by (alpha, nx, ny)."""

    rows: list[TableRow] = field(default_factory=list)
    sides: str = "two_sided"

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ReferenceTable":
        from .io import read_rows
        header, data = read_rows(path)
        if header is None or tuple(h.lower() for h in header) != TABLE_HEADER:
            raise ValueError(f"{path}: header must be {','.join(TABLE_HEADER)}")
        rows = []
        for ln, r in data:
            try:
                rows.append(TableRow(float(r[0]), int(r[1]), int(r[2]), float(r[3]),
                                     float(r[4]), float(r[5])))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}: line {ln}: malformed row") from exc
        t = cls(rows)
        t.validate()
        return t

    def validate(self) -> None:
        by = {}
        for r in self.rows:
            by.setdefault((r.nx, r.ny), []).append(r)
        for key, rs in by.items():
            rs = sorted(rs, key=lambda r: r.alpha)
            for a, b in zip(rs, rs[1:]):
                if b.tilde_alpha < a.tilde_alpha:
                    raise ValueError(f"tilde_alpha not monotone in alpha at sizes {key}")

    def to_csv(self) -> str:
        rows = sorted(self.rows, key=lambda r: (r.nx, r.ny, r.alpha))
        return format_csv(TABLE_HEADER, [(_g8(r.alpha), r.nx, r.ny, _g8(r.tilde_alpha),
                                          _g8(r.alpha_low), _g8(r.alpha_high)) for r in rows])

    def save(self, path: str | os.PathLike) -> None:
        self.validate()
        atomic_write_text(path, self.to_csv())

    def upsert(self, row: TableRow) -> None:
        self.rows = [r for r in self.rows if not _same_key(r, row.alpha, row.nx, row.ny)] + [row]

    def add(self, calib: Calibration) -> None:
        nx, ny = calib.n
        self.upsert(TableRow(float(_g8(calib.alpha)), nx, ny, float(_g8(calib.tilde_alpha)),
                             float(_g8(calib.alpha_low)), float(_g8(calib.alpha_high))))

    def find(self, alpha: float, nx: int, ny: int) -> TableRow | None:
        for r in self.rows:
            if _same_key(r, alpha, nx, ny):
                return r
        return None


def _same_key(r: TableRow, alpha: float, nx: int, ny: int) -> bool:
    return r.nx == nx and r.ny == ny and math.isclose(r.alpha, alpha, rel_tol=1e-9, abs_tol=1e-12)


def default_table_path() -> Path:
    env = os.environ.get("QMTP_TABLE_PATH")
    if env:
        return Path(env)
    return Path(str(resources.files("qmtp") / "data" / "reference_table.csv"))


def default_table() -> ReferenceTable:
    return ReferenceTable.load(default_table_path())


def table_lookup(alpha: float, nx: int, ny: int, table: ReferenceTable | None = None,
                 interpolate: bool = False) -> Calibration:
    """Stored calibration for (alpha, nx, ny).

    Sizes may be swapped (the two-sided problem is symmetric). With
    ``interpolate`` a missing size is filled by linear interpolation in
    ``log n`` between stored rows sharing alpha and the other size.
    """
    table = table if table is not None else default_table()
    for a, b in ((nx, ny), (ny, nx)):
        r = table.find(alpha, a, b)
        if r is not None:
            return Calibration(r.alpha, r.tilde_alpha, table.sides, (nx, ny), "table",
                               alpha_low=r.alpha_low, alpha_high=r.alpha_high)
    if interpolate:
        for fixed, free, flip in ((nx, ny, False), (ny, nx, False), (nx, ny, True), (ny, nx, True)):
            cands = []
            for r in table.rows:
                if not math.isclose(r.alpha, alpha, rel_tol=1e-9):
                    continue
                a, b = (r.ny, r.nx) if flip else (r.nx, r.ny)
                if a == fixed:
                    cands.append((b, r.tilde_alpha))
            below = [c for c in cands if c[0] < free]
            above = [c for c in cands if c[0] > free]
            if below and above:
                n0, t0 = max(below)
                n1, t1 = min(above)
                w = (math.log(free) - math.log(n0)) / (math.log(n1) - math.log(n0))
                t = (1 - w) * t0 + w * t1
                return Calibration(alpha, t, table.sides, (nx, ny), "table", interpolated=True)
    raise TableKeyError(f"no table entry for alpha={alpha}, nx={nx}, ny={ny}")
