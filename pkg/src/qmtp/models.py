"""Domain types shared across the one- and two-sample procedures."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

SIDES = ("lower", "upper", "two_sided")


def check_sides(sides: str) -> str:
    if sides not in SIDES:
        raise ValueError(f"sides must be one of {SIDES}, got {sides!r}")
    return sides


class TieWarning(UserWarning):
    """Tied observations: the procedures remain valid but become conservative."""


@dataclass(frozen=True)
class Sample:
    """Observations in their original order plus the sorted copy."""

    values: np.ndarray
    sorted: np.ndarray = field(repr=False)

    @classmethod
    def of(cls, values: Iterable[float], warn_ties: bool = True) -> "Sample":
        v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float).ravel()
        if v.size == 0:
            raise ValueError("sample is empty")
        if np.isnan(v).any():
            raise ValueError("sample contains NaN")
        s = np.sort(v)
        if warn_ties and s.size > 1 and np.any(s[1:] == s[:-1]):
            warnings.warn("sample contains ties; inference is conservative for discrete data",
                          TieWarning, stacklevel=2)
        v.flags.writeable = False
        s.flags.writeable = False
        return cls(v, s)

    @property
    def n(self) -> int:
        return int(self.values.size)


def as_sample(x) -> Sample:
    return x if isinstance(x, Sample) else Sample.of(x)


@dataclass(frozen=True)
class NullModel:
    """A continuous null distribution given by its CDF and quantile function."""

    kind: str
    params: tuple
    cdf: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    quantile: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    @classmethod
    def uniform(cls, a: float = 0.0, b: float = 1.0) -> "NullModel":
        if not b > a:
            raise ValueError("uniform null needs b > a")
        d = stats.uniform(loc=a, scale=b - a)
        return cls("uniform", (a, b), d.cdf, d.ppf)

    @classmethod
    def normal(cls, mu: float = 0.0, sigma: float = 1.0) -> "NullModel":
        if not sigma > 0:
            raise ValueError("normal null needs sigma > 0")
        d = stats.norm(loc=mu, scale=sigma)
        return cls("normal", (mu, sigma), d.cdf, d.ppf)

    @classmethod
    def table(cls, taus: Sequence[float], qs: Sequence[float]) -> "NullModel":
        """Piecewise-linear quantile through ``(tau, q)`` knots covering [0, 1]."""
        t = np.asarray(taus, float)
        q = np.asarray(qs, float)
        if t.ndim != 1 or t.shape != q.shape or t.size < 2:
            raise ValueError("table null needs matching vectors of at least two knots")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise ValueError("table knots must span tau in [0, 1]; extrapolation is not allowed")
        if np.any(np.diff(t) <= 0) or np.any(np.diff(q) <= 0):
            raise ValueError("table knots must be strictly increasing in both tau and q")

        def cdf(x):
            return np.interp(x, q, t)

        def quantile(tau):
            return np.interp(tau, t, q)

        return cls("table", (tuple(t), tuple(q)), cdf, quantile)

    @classmethod
    def custom(cls, cdf, quantile, name: str = "custom") -> "NullModel":
        return cls("custom", (name,), cdf, quantile)

    @classmethod
    def parse(cls, spec: str) -> "NullModel":
        """Build from ``uniform:a,b``, ``normal:mu,sigma`` or ``table:path``."""
        kind, _, rest = spec.partition(":")
        kind = kind.strip().lower()
        if kind in ("uniform", "normal"):
            try:
                args = [float(a) for a in rest.split(",")] if rest.strip() else []
            except ValueError as exc:
                raise ValueError(f"bad parameters in null spec {spec!r}") from exc
            if len(args) not in (0, 2):
                raise ValueError(f"{kind} null takes two parameters")
            return getattr(cls, kind)(*args)
        if kind == "table":
            from .io import read_columns
            cols = read_columns(rest, 2)
            return cls.table(cols[0], cols[1])
        raise ValueError(f"unknown null kind {kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}


@dataclass(frozen=True)
class Interval:
    """One rejected stretch of tau (or r) with its side and provenance.

    ``side`` is ``"below"`` when the true quantile (or CDF, in r-space) lies
    below the null / other sample and ``"above"`` otherwise. ``witness_k``
    is the order statistic that triggered the rejection (one-sample), and
    ``seg_lo``/``seg_hi`` index pooled segments (two-sample).
    """

    side: str
    tau_lo: float | None
    tau_hi: float | None
    r_lo: float | None
    r_hi: float | None
    lo_closed: bool = False
    hi_closed: bool = True
    witness_k: int | None = None
    seg_lo: int | None = None
    seg_hi: int | None = None

    def contains_tau(self, tau: float) -> bool:
        if self.tau_lo is None:
            return False
        lo_ok = tau >= self.tau_lo if self.lo_closed else tau > self.tau_lo
        hi_ok = tau <= self.tau_hi if self.hi_closed else tau < self.tau_hi
        return lo_ok and hi_ok

    def contains_r(self, r: float) -> bool:
        if self.r_lo is None:
            return False
        lo_ok = r >= self.r_lo if self.lo_closed else r > self.r_lo
        hi_ok = r <= self.r_hi if self.hi_closed else r < self.r_hi
        return lo_ok and hi_ok

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("tau_lo", "tau_hi", "r_lo", "r_hi"):
            d[key] = _enc_float(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Interval":
        d = dict(d)
        for key in ("tau_lo", "tau_hi", "r_lo", "r_hi"):
            d[key] = _dec_float(d[key])
        return cls(**d)


def _enc_float(x: float | None):
    if x is None:
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(x)


def _dec_float(x) -> float | None:
    return None if x is None else float(x)


@dataclass(frozen=True)
class RejectionSet:
    """Sorted, disjoint rejected intervals. ``space`` is ``tau`` or ``r``."""

    intervals: tuple[Interval, ...] = ()
    space: str = "tau"

    def __post_init__(self) -> None:
        if self.space not in ("tau", "r"):
            raise ValueError("space must be 'tau' or 'r'")

    def __len__(self) -> int:
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    @property
    def empty(self) -> bool:
        return not self.intervals

    def side(self, side: str) -> "RejectionSet":
        return RejectionSet(tuple(iv for iv in self.intervals if iv.side == side), self.space)

    def rejects_tau(self, tau: float, side: str | None = None) -> bool:
        return any(iv.contains_tau(tau) for iv in self.intervals if side is None or iv.side == side)

    def rejects_r(self, r: float, side: str | None = None) -> bool:
        return any(iv.contains_r(r) for iv in self.intervals if side is None or iv.side == side)

    def to_json(self) -> str:
        return json.dumps({"space": self.space, "intervals": [iv.to_dict() for iv in self.intervals]})

    @classmethod
    def from_json(cls, s: str) -> "RejectionSet":
        d = json.loads(s)
        return cls(tuple(Interval.from_dict(x) for x in d["intervals"]), d["space"])


@dataclass(frozen=True)
class Band:
    """Step-function envelope for a CDF.

    ``lower[i]`` and ``upper[i]`` hold on ``[breaks[i-1], breaks[i])`` with
    ``breaks[-1] = -inf`` and ``breaks[len] = +inf``, so both arrays have
    ``len(breaks) + 1`` entries.
    """

    breaks: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    owner: str = "x"

    def __post_init__(self) -> None:
        if self.lower.shape != (self.breaks.size + 1,) or self.upper.shape != self.lower.shape:
            raise ValueError("band arrays must have len(breaks) + 1 entries")

    def segment(self, r) -> np.ndarray:
        return np.searchsorted(self.breaks, r, side="right")

    def at(self, r) -> tuple[np.ndarray, np.ndarray]:
        i = self.segment(r)
        return self.lower[i], self.upper[i]

    def contains(self, cdf: Callable[[np.ndarray], np.ndarray]) -> bool:
        """Whether a continuous CDF lies inside the band everywhere.

        On each segment the CDF is monotone, so checking the segment's left
        value against the lower envelope and the left limit at its right end
        against the upper envelope suffices.
        """
        b = self.breaks
        left = np.concatenate([[0.0], cdf(b)])
        right = np.concatenate([cdf(b), [1.0]])
        return bool(np.all(left >= self.lower) and np.all(right <= self.upper))

    def rows(self) -> list[tuple[float, float, float]]:
        xs = np.concatenate([[-np.inf], self.breaks])
        return [(float(x), float(lo), float(hi)) for x, lo, hi in zip(xs, self.lower, self.upper)]


def merge_intervals(raw: Iterable[tuple[float, float, bool, bool, int]], side: str,
                    to_r: Callable[[np.ndarray], np.ndarray] | None = None,
                    space: str = "tau") -> list[Interval]:
    """Union of ``(lo, hi, lo_closed, hi_closed, witness)`` pieces as disjoint intervals.

    Overlapping pieces, and pieces that touch at a point covered by either,
    are fused; the fused witness is the smallest contributing one.
    """
    items = sorted(raw, key=lambda t: (t[0], not t[2]))
    out: list[list] = []
    for lo, hi, lc, hc, w in items:
        if lo > hi or (lo == hi and not (lc and hc)):
            continue
        if out:
            cur = out[-1]
            touches = lo < cur[1] or (lo == cur[1] and (lc or cur[3]))
            if touches:
                if hi > cur[1] or (hi == cur[1] and hc):
                    cur[1], cur[3] = hi, hc if hi > cur[1] else (cur[3] or hc)
                cur[4] = min(cur[4], w)
                continue
        out.append([lo, hi, lc, hc, w])
    res = []
    for lo, hi, lc, hc, w in out:
        if space == "tau":
            r_lo, r_hi = (float(v) for v in to_r(np.array([lo, hi]))) if to_r else (np.nan, np.nan)
            res.append(Interval(side, float(lo), float(hi), r_lo, r_hi, bool(lc), bool(hc),
                                witness_k=int(w)))
        else:
            res.append(Interval(side, None, None, float(lo), float(hi), bool(lc), bool(hc),
                                witness_k=int(w)))
    return res


@dataclass(frozen=True)
class PooledPath:
    """Counts of each sample at or below every distinct pooled value.

    Segment 0 is ``(-inf, breaks[0])`` and segment m >= 1 is
    ``[breaks[m-1], breaks[m])`` (the last one open to +inf); ``i[m]`` and
    ``j[m]`` count the X and Y observations at or below any r in segment m.
    """

    breaks: np.ndarray
    i: np.ndarray
    j: np.ndarray
    nx: int
    ny: int
    cross_ties: bool

    @classmethod
    def of(cls, x: Sample, y: Sample) -> "PooledPath":
        b = np.unique(np.concatenate([x.sorted, y.sorted]))
        i = np.concatenate([[0], np.searchsorted(x.sorted, b, side="right")])
        j = np.concatenate([[0], np.searchsorted(y.sorted, b, side="right")])
        ties = bool(np.intersect1d(x.sorted, y.sorted).size)
        return cls(b, i, j, x.n, y.n, ties)

    def segment_bounds(self, m: int) -> tuple[float, float]:
        lo = -np.inf if m == 0 else float(self.breaks[m - 1])
        hi = np.inf if m == self.breaks.size else float(self.breaks[m])
        return lo, hi


def segments_to_intervals(mask: np.ndarray, side: str, path: PooledPath) -> list[Interval]:
    """Merge runs of rejected pooled segments into r-intervals ``[lo, hi)``."""
    out = []
    m = 0
    n = mask.size
    while m < n:
        if not mask[m]:
            m += 1
            continue
        a = m
        while m + 1 < n and mask[m + 1]:
            m += 1
        lo, _ = path.segment_bounds(a)
        _, hi = path.segment_bounds(m)
        out.append(Interval(side, None, None, lo, hi, lo_closed=a > 0, hi_closed=False,
                            seg_lo=a, seg_hi=m))
        m += 1
    return out
