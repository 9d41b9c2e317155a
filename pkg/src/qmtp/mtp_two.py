"""Two-sample multiple testing.

The main procedure tests ``F_X(r) = F_Y(r)`` at every r by comparing the
two samples' CDF bands. The quantile procedures at the end test equality of
a small number of quantiles through joint confidence intervals built from
fractional order statistics; their familywise control is asymptotic and
only checked by simulation, so treat them as experimental.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special, stats

from . import _kernels
from .calibrate import (Calibration, critical_levels_2s, null_statistics_2s, tilde_alpha_mc_2s,
                        EXHAUSTIVE_LIMIT, n_orderings)
from .models import (Band, Interval, PooledPath, RejectionSet, Sample, as_sample, check_sides,
                     segments_to_intervals)
from .rng import RngStream, as_stream
from .stat_core import DomainError, binom_cdf, order_stat_quantiles

__all__ = [
    "bands_2s",
    "run_mtp_2s",
    "critical_level_2s",
    "gof_pvalue_2s",
    "CounterexampleReport",
    "quantile_fwer_counterexample_check",
    "QuantileTask",
    "JointCiResult",
    "quantile_task",
    "joint_quantile_ci_2s",
    "stepdown_2s",
    "pretest_then_stepdown_2s",
    "pretest_alpha",
]


# ------------------------------------------------------------------ bands


def _band_values(counts: np.ndarray, n: int, a: float) -> tuple[np.ndarray, np.ndarray]:
    """(B^{a}_{c,n}, B^{1-a}_{c+1,n}) for EDF counts c, with B_0 = 0 and B_{n+1} = 1."""
    lo_q = np.concatenate([[0.0], order_stat_quantiles(n, a)])
    hi_q = np.concatenate([order_stat_quantiles(n, 1.0 - a), [1.0]])
    return lo_q[counts], hi_q[counts]


def bands_2s(x, y, calib: Calibration) -> tuple[Band, Band]:
    """CDF bands of both samples on the pooled segments."""
    x, y = as_sample(x), as_sample(y)
    path = PooledPath.of(x, y)
    a = calib.tail
    lx, ux = _band_values(path.i, x.n, a)
    ly, uy = _band_values(path.j, y.n, a)
    return Band(path.breaks, lx, ux, "x"), Band(path.breaks, ly, uy, "y")


def run_mtp_2s(x, y, calib: Calibration, sides: str | None = None) -> RejectionSet:
    """Reject ``F_X(r) = F_Y(r)`` wherever the two CDF bands separate.

    Segments where ``ell_X > u_Y`` (X stochastically smaller there) are
    labelled ``below``; ``ell_Y > u_X`` gives ``above``. ``sides="lower"``
    keeps only the first comparison and ``upper`` only the second.
    """
    x, y = as_sample(x), as_sample(y)
    sides = check_sides(sides or calib.sides)
    if not calib.size_matches((x.n, y.n)) and not calib.size_matches((y.n, x.n)):
        raise ValueError(f"calibration was built for sizes {calib.n}, not {(x.n, y.n)}")
    path = PooledPath.of(x, y)
    a = calib.tail
    lx, ux = _band_values(path.i, x.n, a)
    ly, uy = _band_values(path.j, y.n, a)
    ivs: list[Interval] = []
    if sides != "upper":
        ivs += segments_to_intervals(lx > uy, "below", path)
    if sides != "lower":
        ivs += segments_to_intervals(ly > ux, "above", path)
    ivs.sort(key=lambda iv: iv.r_lo)
    return RejectionSet(tuple(ivs), "r")


def critical_level_2s(x, y, sides: str = "two_sided") -> float:
    """Largest per-tail level at which the data still reject nothing."""
    x, y = as_sample(x), as_sample(y)
    path = PooledPath.of(x, y)
    C = critical_levels_2s(x.n, y.n, sides)
    return float(C[path.i, path.j].min())


def gof_pvalue_2s(x, y, sides: str = "two_sided", scheme: str = "auto", M: int = 200_000,
                  rng=None) -> float:
    """Null probability of a critical level at least as extreme as observed.

    Discrete by nature; exact when the orderings are enumerated.
    """
    x, y = as_sample(x), as_sample(y)
    s_obs = critical_level_2s(x, y, sides)
    s_null = null_statistics_2s(x.n, y.n, sides, scheme, M, rng)
    return float(np.mean(s_null <= s_obs * (1 + 1e-12)))


# --------------------------------------------------------- counterexample


@dataclass(frozen=True)
class CounterexampleReport:
    """Quantile familywise rate of the band procedure in a degenerate limit.

    X is a point mass at 1/2 and Y puts (almost) half its mass at 0 and half
    at 1, so only the median hypothesis is true and it is rejected when
    ``Y_{k_low} = 0`` or ``Y_{k_high} = 1``.
    """

    alpha: float
    nx: int
    ny: int
    tilde_alpha: float
    k_low: int
    k_high: int
    x_always_straddles: bool
    quantile_fwer: float
    cdf_fwer_equal: float | None


def quantile_fwer_counterexample_check(alpha: float = 0.05, nx: int = 6, ny: int = 12,
                                       tilde_alpha: float | None = None) -> CounterexampleReport:
    calib = None
    if tilde_alpha is None:
        calib = tilde_alpha_mc_2s(alpha, nx, ny, "two_sided", scheme="exhaustive")
        tilde_alpha = calib.tilde_alpha
    a = tilde_alpha / 2.0
    by_lo = order_stat_quantiles(ny, a)
    by_hi = order_stat_quantiles(ny, 1.0 - a)
    k_low = int(np.flatnonzero(by_lo > 0.5)[0]) + 1
    k_high = int(np.flatnonzero(by_hi < 0.5)[-1]) + 1
    bx_lo = order_stat_quantiles(nx, a)
    bx_hi = order_stat_quantiles(nx, 1.0 - a)
    straddle = bool(bx_lo[-1] > 0.5 and bx_hi[0] < 0.5)
    fwer = binom_cdf(ny - k_low, ny, 0.5) + binom_cdf(k_high - 1, ny, 0.5)
    return CounterexampleReport(alpha, nx, ny, tilde_alpha, k_low, k_high, straddle, fwer,
                                None if calib is None else calib.alpha_low)


# ------------------------------------------------------ quantile procedures


def pretest_alpha(alpha: float, n: int) -> float:
    return alpha / math.log(math.log(max(n, 15)))


@dataclass(frozen=True)
class QuantileTask:
    """The tested quantiles: M = floor(n^{2/5}) points tau_j = j / (M + 1)."""

    nx: int
    ny: int
    M: int
    taus: np.ndarray

    @property
    def neighbourhoods(self) -> list[tuple[float, float]]:
        return [((j - 0.5) / (self.M + 1), (j + 0.5) / (self.M + 1)) for j in range(1, self.M + 1)]


def quantile_task(nx: int, ny: int) -> QuantileTask:
    n = min(nx, ny)
    M = int(math.floor(n ** 0.4 + 1e-12))
    if M < 1:
        raise DomainError("need at least one tested quantile")
    return QuantileTask(nx, ny, M, np.arange(1, M + 1) / (M + 1))


def _beta_index(n: int, taus: np.ndarray, target: float) -> np.ndarray:
    """Fractional k in (0, n+1) with I_tau(k, n+1-k) = target (decreasing in k)."""
    lo = np.zeros(taus.size)
    hi = np.full(taus.size, n + 1.0)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        f = special.betainc(mid, n + 1.0 - mid, taus)
        up = f > target
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    return 0.5 * (lo + hi)


def _indices(n: int, taus: np.ndarray, tilde: float, sides: str) -> tuple[np.ndarray, np.ndarray]:
    """(k_ell, k_u) per tau: lower and upper fractional indices."""
    if sides == "two_sided":
        k_u = _beta_index(n, taus, tilde / 2.0)
        k_l = _beta_index(n, taus, 1.0 - tilde / 2.0)
        return k_l, k_u
    z = stats.norm.ppf(1.0 - tilde)
    half = z * np.sqrt(taus * (1 - taus)) / math.sqrt(n)
    return (n + 1) * (taus - half), (n + 1) * (taus + half)


def _interp_order_stat(sorted_x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """(1 - k + floor k) X_{floor k} + (k - floor k) X_{floor k + 1}, X_0 = -inf, X_{n+1} = inf."""
    n = sorted_x.size
    ext = np.concatenate([[-np.inf], sorted_x, [np.inf]])
    f = np.clip(np.floor(k).astype(int), 0, n + 1)
    w = k - f
    lo = ext[f]
    hi = ext[np.minimum(f + 1, n + 1)]
    out = np.empty(k.size)
    for m in range(k.size):
        if w[m] == 0 or np.isinf(lo[m]):
            out[m] = lo[m]
        elif np.isinf(hi[m]):
            out[m] = hi[m]
        else:
            out[m] = (1 - w[m]) * lo[m] + w[m] * hi[m]
    return out


def _dirichlet_at(n: int, ks: np.ndarray, gen: np.random.Generator, M: int) -> np.ndarray:
    """Joint uniform-scale values at fractional indices ``ks`` (shape (M, len(ks)))."""
    pos = np.unique(ks)
    shapes = np.diff(np.concatenate([[0.0], pos, [n + 1.0]]))
    shapes = np.maximum(shapes, 1e-12)
    g = gen.standard_gamma(shapes, size=(M, shapes.size))
    d = np.cumsum(g, axis=1)[:, :-1] / g.sum(axis=1, keepdims=True)
    return d[:, np.searchsorted(pos, ks)]


def _valid(k: np.ndarray, n: int) -> bool:
    return bool(np.all((k > 0) & (k < n + 1)))


def _coverage(tilde: float, task: QuantileTask, sides: str, active: tuple[int, ...], M: int,
              stream: RngStream) -> float:
    taus = task.taus[list(active)]
    kxl, kxu = _indices(task.nx, taus, tilde, sides)
    kyl, kyu = _indices(task.ny, taus, tilde, sides)
    if not all(_valid(k, n) for k, n in ((kxl, task.nx), (kxu, task.nx), (kyl, task.ny), (kyu, task.ny))):
        return 1.0
    m = len(active)
    dx = _dirichlet_at(task.nx, np.concatenate([kxl, kxu]), stream.generator(0), M)
    dy = _dirichlet_at(task.ny, np.concatenate([kyl, kyu]), stream.generator(1), M)
    ok = np.ones(M, bool)
    if sides != "lower":
        ok &= np.all(dx[:, :m] < dy[:, m:], axis=1)
    if sides != "upper":
        ok &= np.all(dy[:, :m] < dx[:, m:], axis=1)
    return float(ok.mean())


@lru_cache(maxsize=256)
def _calibrate_joint(nx: int, ny: int, alpha: float, sides: str, active: tuple[int, ...],
                     M: int, seed: int, stream_id: int) -> float:
    task = quantile_task(nx, ny)
    stream = RngStream(seed, stream_id)
    lo, hi = math.log(1e-10), math.log(0.999 if sides == "two_sided" else 0.4999)
    if _coverage(math.exp(hi), task, sides, active, M, stream) >= 1 - alpha:
        return math.exp(hi)
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if _coverage(math.exp(mid), task, sides, active, M, stream) >= 1 - alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-6:
            break
    return math.exp(lo)


@dataclass(frozen=True)
class JointCiResult:
    """Joint confidence intervals for Delta_j = Q_Y(tau_j) - Q_X(tau_j) and the rejections."""

    taus: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    tilde_alpha: float
    rejections: RejectionSet
    trace: list = field(default_factory=list)

    def rejected(self) -> set[int]:
        return {iv.witness_k - 1 for iv in self.rejections}


_DEFAULT_M = 20_000
_DEFAULT_SEED = 77_123


def _ci(x: Sample, y: Sample, task: QuantileTask, tilde: float, sides: str):
    kxl, kxu = _indices(x.n, task.taus, tilde, sides)
    kyl, kyu = _indices(y.n, task.taus, tilde, sides)
    for k, n in ((kxl, x.n), (kxu, x.n), (kyl, y.n), (kyu, y.n)):
        if not _valid(k, n):
            raise DomainError("a fractional index left (0, n+1); samples too small for these quantiles")
    lower = _interp_order_stat(y.sorted, kyl) - _interp_order_stat(x.sorted, kxu)
    upper = _interp_order_stat(y.sorted, kyu) - _interp_order_stat(x.sorted, kxl)
    if sides == "upper":
        lower = np.full(task.M, -np.inf)
    elif sides == "lower":
        upper = np.full(task.M, np.inf)
    return lower, upper


def _rejections(lower, upper, task: QuantileTask, among) -> list[Interval]:
    ivs = []
    for j in among:
        side = "below" if lower[j] > 0 else "above" if upper[j] < 0 else None
        if side is None:
            continue
        lo, hi = task.neighbourhoods[j]
        ivs.append(Interval(side, lo, hi, None, None, True, True, witness_k=j + 1))
    return ivs


def _run_steps(x: Sample, y: Sample, alpha: float, sides: str, active0: tuple[int, ...],
               max_iter: int | None, M: int, stream: RngStream) -> JointCiResult:
    task = quantile_task(x.n, y.n)
    rejected: dict[int, Interval] = {}
    active = tuple(active0)
    trace = []
    i = 0
    tilde = None
    lower = upper = None
    while True:
        if not active:
            break
        tilde = _calibrate_joint(x.n, y.n, alpha, sides, active, M, int(stream.seed), int(stream.stream_id))
        lower, upper = _ci(x, y, task, tilde, sides)
        new = [iv for iv in _rejections(lower, upper, task, range(task.M))
               if iv.witness_k - 1 not in rejected]
        for iv in new:
            rejected[iv.witness_k - 1] = iv
        trace.append({"iteration": i, "active_set_size": len(active), "tilde_alpha": tilde,
                      "new_rejections": [iv.witness_k for iv in new]})
        nxt = tuple(j for j in active if j not in rejected)
        i += 1
        if nxt == active or (max_iter is not None and i >= max_iter):
            break
        active = nxt
    if tilde is None:
        tilde = float("nan")
        lower = np.full(task.M, np.nan)
        upper = np.full(task.M, np.nan)
    ivs = tuple(sorted(rejected.values(), key=lambda iv: iv.tau_lo))
    return JointCiResult(task.taus, lower, upper, tilde, RejectionSet(ivs, "tau"), trace)


def joint_quantile_ci_2s(x, y, alpha: float, sides: str = "two_sided", M: int = _DEFAULT_M,
                         rng=None) -> JointCiResult:
    """Joint CIs for the quantile differences (iteration 0 only).

    ``sides="upper"`` tests ``Q_X(tau_j) <= Q_Y(tau_j)`` with upper CI
    endpoints and reports rejections as ``above``; ``lower`` is the mirror.
    """
    check_sides(sides)
    x, y = as_sample(x), as_sample(y)
    stream = as_stream(_DEFAULT_SEED if rng is None else rng)
    task = quantile_task(x.n, y.n)
    return _run_steps(x, y, alpha, sides, tuple(range(task.M)), 1, M, stream)


def stepdown_2s(x, y, alpha: float, sides: str = "two_sided", M: int = _DEFAULT_M, rng=None,
                active: tuple[int, ...] | None = None) -> JointCiResult:
    """Recalibrate the joint CIs on the not-yet-rejected quantiles until nothing changes."""
    check_sides(sides)
    x, y = as_sample(x), as_sample(y)
    stream = as_stream(_DEFAULT_SEED if rng is None else rng)
    task = quantile_task(x.n, y.n)
    start = tuple(range(task.M)) if active is None else tuple(sorted(active))
    return _run_steps(x, y, alpha, sides, start, None, M, stream)


def pretest_then_stepdown_2s(x, y, alpha: float, sides: str = "upper", M: int = _DEFAULT_M,
                             rng=None) -> JointCiResult:
    """Screen out clearly slack quantiles with a reversed one-sided test, then step down.

    The screen runs at ``alpha / ln ln max(n, 15)`` with n = min(nx, ny).
    """
    if sides not in ("lower", "upper"):
        raise ValueError("the pre-test applies to one-sided families only")
    x, y = as_sample(x), as_sample(y)
    stream = as_stream(_DEFAULT_SEED if rng is None else rng)
    a_p = pretest_alpha(alpha, min(x.n, y.n))
    reverse = "lower" if sides == "upper" else "upper"
    pre = joint_quantile_ci_2s(x, y, a_p, reverse, M, stream.child("pretest"))
    task = quantile_task(x.n, y.n)
    survivors = tuple(j for j in range(task.M) if j not in pre.rejected())
    res = _run_steps(x, y, alpha, sides, survivors, None, M, stream)
    trace = [{"pretest_alpha": a_p, "pretest_rejections": sorted(j + 1 for j in pre.rejected())}]
    return JointCiResult(res.taus, res.ci_lower, res.ci_upper, res.tilde_alpha, res.rejections,
                         trace + res.trace)
