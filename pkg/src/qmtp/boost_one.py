"""Stepdown and pre-test refinements of the one-sample procedure.

Everything is computed for the ``lower`` family (H0: F^{-1}(tau) >=
F0^{-1}(tau), rejections labelled ``below``); the ``upper`` family is the
mirror image under tau -> 1 - tau and k -> n + 1 - k.

The stepdown lets order statistic r_k (instead of k) test the quantile
ell_k once other hypotheses have been rejected. The r_k are lowered greedily,
one unit at a time, picking the k whose pointwise rejection probability grows
most, for as long as a Monte Carlo estimate of the familywise constraint over
the surviving hypotheses stays at or below alpha. The estimate uses a fixed
set of uniform samples, so the whole procedure is a deterministic function
of the data.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

from .calibrate import Calibration, band_levels
from .models import Interval, NullModel, RejectionSet, as_sample, merge_intervals
from .mtp_one import pit
from .rng import RngStream
from .stat_core import order_stat_quantiles, sample_uniform_order_stats

__all__ = [
    "StepState",
    "StepdownResult",
    "PretestResult",
    "constraint_draws",
    "stepdown_1s",
    "stepdown_1s_two_sided",
    "pretest_alpha",
    "pretest_1s",
    "pretest_then_stepdown_1s",
    "apply_shape_restriction",
]

CONSTRAINT_M = 20_000
CONSTRAINT_SEED = 31_337
MAX_ITER = 50


@lru_cache(maxsize=8)
def constraint_draws(n: int, M: int = CONSTRAINT_M, seed: int = CONSTRAINT_SEED) -> np.ndarray:
    """Fixed (M, n) uniform order statistics used for every constraint check."""
    u = sample_uniform_order_stats(n, RngStream(seed, 0), size=M)
    u.flags.writeable = False
    return u


@dataclass
class StepState:
    """Iteration counter, surviving hypotheses and current index assignment."""

    iteration: int
    active: np.ndarray
    r: np.ndarray
    history: list = field(default_factory=list)


@dataclass(frozen=True)
class StepdownResult:
    rejections: RejectionSet
    trace: list
    state: StepState


class _Family:
    """One list of constraints ``W[:, r_k - 1] >= ell_k`` over active k."""

    def __init__(self, W: np.ndarray, ell: np.ndarray, r: np.ndarray, active: np.ndarray):
        self.W, self.ell, self.r, self.active = W, ell, r, active
        self.n = ell.size

    def violated(self) -> np.ndarray:
        ks = np.flatnonzero(self.active)
        if ks.size == 0:
            return np.zeros(self.W.shape[0], bool)
        return np.any(self.W[:, self.r[ks] - 1] < self.ell[ks], axis=1)


def _digest(*arrays: np.ndarray) -> str:
    h = hashlib.blake2b(digest_size=8)
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.int64).tobytes())
    return h.hexdigest()


def _greedy(fams: list[_Family], alpha: float) -> None:
    """Lower the r_k in place while the estimated familywise rate stays <= alpha."""
    M = fams[0].W.shape[0]
    hit = np.zeros(M, bool)
    for f in fams:
        hit |= f.violated()
    budget = int(math.floor(alpha * M + 1e-9)) - int(hit.sum())
    if budget < 0:
        return
    free = ~hit
    cand = []
    for fi, f in enumerate(fams):
        for k in np.flatnonzero(f.active & (f.r > 1)):
            cand.append((fi, int(k)))
    if not cand:
        return
    fi_arr = np.array([c[0] for c in cand])
    k_arr = np.array([c[1] for c in cand])

    def delta_of(idx: int) -> int:
        f = fams[fi_arr[idx]]
        k = k_arr[idx]
        return int(np.count_nonzero(free & (f.W[:, f.r[k] - 2] < f.ell[k])))

    def gain_of(idx: int) -> float:
        f = fams[fi_arr[idx]]
        k = k_arr[idx]
        return float(stats.binom.pmf(f.r[k] - 1, f.n, f.ell[k]))

    delta = np.array([delta_of(i) for i in range(len(cand))])
    gain = np.array([gain_of(i) for i in range(len(cand))])
    alive = np.ones(len(cand), bool)
    while True:
        ok = alive & (delta <= budget)
        if not ok.any():
            return
        g = np.where(ok, gain, -np.inf)
        best = int(np.flatnonzero(g == g.max())[0])
        f = fams[fi_arr[best]]
        k = k_arr[best]
        Z = np.flatnonzero(free & (f.W[:, f.r[k] - 2] < f.ell[k]))
        f.r[k] -= 1
        budget -= Z.size
        if Z.size:
            free[Z] = False
            for i in np.flatnonzero(alive):
                if i == best:
                    continue
                ff = fams[fi_arr[i]]
                kk = k_arr[i]
                delta[i] -= int(np.count_nonzero(ff.W[Z, ff.r[kk] - 2] < ff.ell[kk]))
        if f.r[k] <= 1:
            alive[best] = False
        else:
            delta[best] = delta_of(best)
            gain[best] = gain_of(best)


def _lower_intervals(t: np.ndarray, ell: np.ndarray, r: np.ndarray) -> list[tuple]:
    """Raw pieces (t_{r_k}, ell_k] for every k with t_{r_k} < ell_k."""
    tr = t[r - 1]
    ks = np.flatnonzero(tr < ell)
    return [(tr[k], ell[k], False, True, int(k) + 1) for k in ks]


def _rejected_ell(t: np.ndarray, ell: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Which ell_k lie in the current rejected set (some k' with t_{r_k'} < ell_k <= ell_k')."""
    tr = t[r - 1]
    out = np.zeros(ell.size, bool)
    for k in np.flatnonzero(tr < ell):
        out |= (ell > tr[k]) & (ell <= ell[k])
    return out


def _reflect(t: np.ndarray) -> np.ndarray:
    return 1.0 - t[::-1]


def _upper_intervals(t: np.ndarray, u: np.ndarray, r_refl: np.ndarray) -> list[tuple]:
    """Pieces [u_k, t_{r}) in original coordinates from a reflected assignment."""
    n = t.size
    k = n - np.arange(n)
    r = n + 1 - r_refl
    tr = t[r - 1]
    uk = u[k - 1]
    idx = np.flatnonzero(tr > uk)
    return [(uk[i], tr[i], True, False, int(k[i])) for i in idx]


def _to_set(pieces_lower, pieces_upper, quantile) -> RejectionSet:
    below = merge_intervals(pieces_lower, "below", quantile)
    above = merge_intervals(pieces_upper, "above", quantile)
    return RejectionSet(tuple(sorted(below + above, key=lambda iv: iv.tau_lo)), "tau")


def _one_sided(sample, null: NullModel, calib: Calibration, active0: np.ndarray | None,
               M: int, greedy_first: bool) -> StepdownResult:
    if calib.sides not in ("lower", "upper"):
        raise ValueError("stepdown_1s needs a one-sided calibration; use stepdown_1s_two_sided")
    sample = as_sample(sample)
    n = sample.n
    t_orig = pit(sample, null)
    t = _reflect(t_orig) if calib.sides == "upper" else t_orig
    ell, u = band_levels(n, calib.tilde_alpha, "two_sided")
    W = constraint_draws(n, M)
    r = np.arange(1, n + 1)
    active = np.ones(n, bool) if active0 is None else active0.copy()
    fam = _Family(W, ell, r, active)
    trace = []

    def ks_of(mask):
        idx = np.flatnonzero(mask) + 1
        return sorted((n + 1 - idx).tolist()) if calib.sides == "upper" else idx.tolist()

    if greedy_first:
        _greedy([fam], calib.alpha)
    rej = _rejected_ell(t, ell, r)
    trace.append({"iteration": 0, "active_set_size": int(active.sum()),
                  "assignment_digest": _digest(r), "new_rejections": ks_of(rej & active)})
    it = 0
    while it < MAX_ITER:
        nxt = active & ~rej
        if not nxt.any() or np.array_equal(nxt, active):
            break
        it += 1
        r_prev = r.copy()
        active[:] = nxt
        _greedy([fam], calib.alpha)
        assert np.all(r <= r_prev) and np.all(r >= 1)
        new = _rejected_ell(t, ell, r)
        trace.append({"iteration": it, "active_set_size": int(active.sum()),
                      "assignment_digest": _digest(r),
                      "new_rejections": ks_of(new & ~rej)})
        rej = new
    if calib.sides == "lower":
        rs = _to_set(_lower_intervals(t, ell, r), [], null.quantile)
    else:
        rs = _to_set([], _upper_intervals(t_orig, u, r), null.quantile)
    r_out = r if calib.sides == "lower" else (n + 1 - r[::-1])
    act_out = active if calib.sides == "lower" else active[::-1]
    return StepdownResult(rs, trace, StepState(it, act_out.copy(), r_out.copy(), trace))


def stepdown_1s(sample, null: NullModel, calib: Calibration, M: int = CONSTRAINT_M) -> StepdownResult:
    """One-sided stepdown; always rejects at least what the basic procedure rejects."""
    return _one_sided(sample, null, calib, None, M, greedy_first=False)


def stepdown_1s_two_sided(sample, null: NullModel, calib: Calibration,
                          M: int = CONSTRAINT_M) -> StepdownResult:
    """Two-sided stepdown with separate index lists for the lower and upper bounds.

    Both lists share one familywise constraint evaluated on the same draws.
    """
    if calib.sides != "two_sided":
        raise ValueError("needs a two-sided calibration")
    sample = as_sample(sample)
    n = sample.n
    t = pit(sample, null)
    tv = _reflect(t)
    ell, u = band_levels(n, calib.tilde_alpha, "two_sided")
    U = constraint_draws(n, M)
    V = 1.0 - U[:, ::-1]
    lo = _Family(U, ell, np.arange(1, n + 1), np.ones(n, bool))
    hi = _Family(V, ell, np.arange(1, n + 1), np.ones(n, bool))
    rej_l = _rejected_ell(t, ell, lo.r)
    rej_u = _rejected_ell(tv, ell, hi.r)
    trace = [{"iteration": 0, "active_set_size": n + n, "assignment_digest": _digest(lo.r, hi.r),
              "new_rejections": {"lower": (np.flatnonzero(rej_l) + 1).tolist(),
                                 "upper": sorted((n - np.flatnonzero(rej_u)).tolist())}}]
    it = 0
    while it < MAX_ITER:
        nl, nu = lo.active & ~rej_l, hi.active & ~rej_u
        if (not nl.any() and not nu.any()) or (np.array_equal(nl, lo.active) and np.array_equal(nu, hi.active)):
            break
        it += 1
        pl, pu = lo.r.copy(), hi.r.copy()
        lo.active[:] = nl
        hi.active[:] = nu
        _greedy([lo, hi], calib.alpha)
        assert np.all(lo.r <= pl) and np.all(hi.r <= pu)
        new_l = _rejected_ell(t, ell, lo.r)
        new_u = _rejected_ell(tv, ell, hi.r)
        trace.append({"iteration": it, "active_set_size": int(lo.active.sum() + hi.active.sum()),
                      "assignment_digest": _digest(lo.r, hi.r),
                      "new_rejections": {"lower": (np.flatnonzero(new_l & ~rej_l) + 1).tolist(),
                                         "upper": sorted((n - np.flatnonzero(new_u & ~rej_u)).tolist())}})
        rej_l, rej_u = new_l, new_u
    rs = _to_set(_lower_intervals(t, ell, lo.r), _upper_intervals(t, u, hi.r), null.quantile)
    r_upper = n + 1 - hi.r[::-1]
    state = StepState(it, np.concatenate([lo.active, hi.active[::-1]]),
                      np.stack([lo.r, r_upper]), trace)
    return StepdownResult(rs, trace, state)


# ------------------------------------------------------------------ pre-test


def pretest_alpha(alpha: float, n: int) -> float:
    """alpha / ln(ln(max(n, 15)))."""
    return alpha / math.log(math.log(max(n, 15)))


@dataclass(frozen=True)
class PretestResult:
    """Pre-test outcome in the main family's own index order.

    ``survivors`` flags k whose tested quantile ell_k was not rejected by the
    reversed pre-test; ``r`` maps each k >= ``k_boundary`` to the order
    statistic the pre-test uses for it (0 where unused).
    """

    alpha_p: float
    tilde_alpha_p: float
    survivors: np.ndarray
    r: np.ndarray
    k_boundary: int
    rejections: RejectionSet


def _pretest_indices(ell: np.ndarray, q: float) -> tuple[int, np.ndarray]:
    n = ell.size
    B = order_stat_quantiles(n, 1.0 - q)
    r = np.searchsorted(B, ell, side="right")
    kb = int(np.flatnonzero(r >= 1)[0]) + 1 if np.any(r >= 1) else n + 1
    return kb, r


@lru_cache(maxsize=64)
def _calibrate_pretest(n: int, tilde_main: float, alpha_p: float, M: int, seed: int) -> float:
    ell, _ = band_levels(n, tilde_main, "lower")
    U = sample_uniform_order_stats(n, RngStream(seed, 1), size=M)

    def rate(q):
        kb, r = _pretest_indices(ell, q)
        ks = np.flatnonzero(r >= 1)
        if ks.size == 0:
            return 0.0
        return float(np.mean(np.any(U[:, r[ks] - 1] > ell[ks], axis=1)))

    lo, hi = math.log(1e-12), math.log(0.4999)
    if rate(math.exp(hi)) <= alpha_p:
        return math.exp(hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if rate(math.exp(mid)) <= alpha_p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-7:
            break
    return math.exp(lo)


def pretest_1s(sample, null: NullModel, calib: Calibration, alpha_p: float | None = None,
               M: int = 100_000) -> PretestResult:
    """Reversed one-sided screen at familywise level alpha_p.

    For the ``lower`` family it tests F^{-1}(ell_k) <= F0^{-1}(ell_k) and
    rejects tau in [ell_k, t_{r_k}); those ell_k are slack for the main test.
    Its own pointwise level is calibrated by Monte Carlo so that the screen's
    familywise rate equals alpha_p.
    """
    if calib.sides not in ("lower", "upper"):
        raise ValueError("the pre-test accompanies a one-sided family")
    sample = as_sample(sample)
    n = sample.n
    alpha_p = pretest_alpha(calib.alpha, n) if alpha_p is None else alpha_p
    if not 0.0 < alpha_p < 0.5:
        raise ValueError("alpha_p must lie in (0, 0.5)")
    t = pit(sample, null)
    if calib.sides == "upper":
        t = _reflect(t)
    ell, _ = band_levels(n, calib.tilde_alpha, "lower")
    q = _calibrate_pretest(n, calib.tilde_alpha, alpha_p, M, CONSTRAINT_SEED)
    kb, r = _pretest_indices(ell, q)
    ks = np.flatnonzero(r >= 1)
    tr = np.where(r >= 1, t[np.maximum(r, 1) - 1], -np.inf)
    pieces = [(ell[k], tr[k], True, False, int(k) + 1) for k in ks if tr[k] > ell[k]]
    hit = np.zeros(n, bool)
    for lo, hi, *_ in pieces:
        hit |= (ell >= lo) & (ell < hi)
    if calib.sides == "lower":
        rs = RejectionSet(tuple(merge_intervals(pieces, "above", null.quantile)), "tau")
        surv, r_out, kb_out = ~hit, r, kb
    else:
        mirrored = [(1 - hi, 1 - lo, hc, lc, n + 1 - w) for lo, hi, lc, hc, w in pieces]
        rs = RejectionSet(tuple(merge_intervals(mirrored, "below", null.quantile)), "tau")
        surv = (~hit)[::-1]
        r_out = np.where(r[::-1] >= 1, n + 1 - r[::-1], 0)
        kb_out = n + 1 - kb
    return PretestResult(alpha_p, 2 * q, surv, r_out, kb_out, rs)


def pretest_then_stepdown_1s(sample, null: NullModel, calib: Calibration,
                             M: int = CONSTRAINT_M) -> tuple[StepdownResult, PretestResult]:
    """Pre-test, then run the stepdown with only the survivors in the constraint.

    The survivors depend on the data only through the pre-test decisions.
    Familywise level is at most alpha + alpha_p.
    """
    pre = pretest_1s(sample, null, calib)
    surv = pre.survivors if calib.sides == "lower" else pre.survivors[::-1]
    res = _one_sided(sample, null, calib, surv.copy(), M, greedy_first=True)
    return res, pre


# --------------------------------------------------------- shape restriction


def apply_shape_restriction(rej: RejectionSet, restriction: str = "contiguous") -> RejectionSet:
    """Fill gaps between same-side rejected intervals (their convex hull).

    Valid when the alternative is known to hold on a single interval.
    """
    if restriction != "contiguous":
        raise ValueError(f"unknown restriction {restriction!r}")
    out = []
    for side in ("below", "above"):
        ivs = [iv for iv in rej.intervals if iv.side == side]
        if not ivs:
            continue
        if len(ivs) == 1:
            out.append(ivs[0])
            continue
        key = (lambda iv: iv.tau_lo) if rej.space == "tau" else (lambda iv: iv.r_lo)
        ivs.sort(key=key)
        first, last = ivs[0], ivs[-1]
        out.append(Interval(side, first.tau_lo, last.tau_hi, first.r_lo, last.r_hi,
                            first.lo_closed, last.hi_closed,
                            witness_k=min((iv.witness_k for iv in ivs if iv.witness_k is not None), default=None),
                            seg_lo=first.seg_lo, seg_hi=last.seg_hi))
    key = (lambda iv: iv.tau_lo) if rej.space == "tau" else (lambda iv: iv.r_lo)
    return RejectionSet(tuple(sorted(out, key=key)), rej.space)
