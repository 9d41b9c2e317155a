"""Regression-discontinuity and conditional-distribution front ends.

Both pick local samples by distance and hand them to the two-sample
procedure unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibrate import Calibration, calibrate_2s
from .models import RejectionSet
from .mtp_two import run_mtp_2s
from .stat_core import DomainError

__all__ = [
    "InsufficientDataError",
    "RdSpec",
    "select_rd",
    "rd_mtp",
    "CondSpec",
    "select_conditional",
    "conditional_mtp",
    "DISCRETE_PENALTY",
]

DISCRETE_PENALTY = 1e9


class InsufficientDataError(DomainError):
    """Not enough observations to form a requested neighbourhood."""


def _nearest(dist: np.ndarray, idx: np.ndarray, q: int) -> np.ndarray:
    """Indices of the q smallest distances; ties go to the smaller original index."""
    order = np.lexsort((idx, dist))
    return idx[order[:q]]


@dataclass(frozen=True)
class RdSpec:
    """Outcomes ``y`` with running variable ``z``; ``z >= cutoff`` is the right side."""

    y: np.ndarray
    z: np.ndarray
    cutoff: float
    q: int

    def __post_init__(self) -> None:
        y = np.asarray(self.y, float)
        z = np.asarray(self.z, float)
        if y.shape != z.shape or y.ndim != 1:
            raise ValueError("y and z must be 1-d arrays of equal length")
        if np.isnan(y).any() or np.isnan(z).any():
            raise ValueError("NaN in RD data")
        if int(self.q) < 1:
            raise ValueError("q must be at least 1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "q", int(self.q))


def select_rd(spec: RdSpec) -> tuple[np.ndarray, np.ndarray]:
    """Original indices of the q nearest observations left and right of the cutoff."""
    idx = np.arange(spec.z.size)
    left = spec.z < spec.cutoff
    out = []
    for mask, name in ((left, "left"), (~left, "right")):
        if mask.sum() < spec.q:
            raise InsufficientDataError(
                f"only {int(mask.sum())} observations {name} of the cutoff, need q={spec.q}")
        out.append(_nearest(np.abs(spec.z[mask] - spec.cutoff), idx[mask], spec.q))
    return out[0], out[1]


def rd_mtp(spec: RdSpec, alpha: float, sides: str = "two_sided",
           calib: Calibration | None = None, rng=None) -> RejectionSet:
    """Distributional discontinuity test at the cutoff.

    X is the left neighbourhood and Y the right one, so ``below`` intervals
    are outcome values r where the left-side CDF is larger (outcomes shifted
    up across the cutoff) and ``above`` the reverse.
    """
    li, ri = select_rd(spec)
    if calib is None:
        calib = calibrate_2s(alpha, spec.q, spec.q, sides, rng=rng)
    return run_mtp_2s(spec.y[li], spec.y[ri], calib, sides)


@dataclass(frozen=True)
class CondSpec:
    """Outcome, treatment indicator and covariates for a conditional comparison.

    ``discrete`` flags covariate columns that must match exactly; a mismatch
    costs ``penalty`` times the largest continuous range, which dominates
    every continuous distance. ``weights`` scale the continuous coordinates.
    """

    y: np.ndarray
    t: np.ndarray
    x: np.ndarray
    x0: np.ndarray
    q0: int
    q1: int
    discrete: np.ndarray | None = None
    weights: np.ndarray | None = None
    penalty: float = DISCRETE_PENALTY
    notes: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        y = np.asarray(self.y, float)
        t = np.asarray(self.t)
        x = np.asarray(self.x, float)
        if x.ndim == 1:
            x = x[:, None]
        x0 = np.atleast_1d(np.asarray(self.x0, float))
        if not (y.ndim == 1 and t.shape == y.shape and x.shape[0] == y.size):
            raise ValueError("y, t and the rows of x must have the same length")
        if x0.size != x.shape[1]:
            raise ValueError(f"x0 has {x0.size} coordinates, covariates have {x.shape[1]}")
        if not np.isin(t, (0, 1)).all():
            raise ValueError("treatment must be 0 or 1")
        if min(int(self.q0), int(self.q1)) < 1:
            raise ValueError("q0 and q1 must be at least 1")
        d = np.zeros(x.shape[1], bool) if self.discrete is None else np.asarray(self.discrete, bool)
        w = np.ones(x.shape[1]) if self.weights is None else np.asarray(self.weights, float)
        if d.size != x.shape[1] or w.size != x.shape[1] or (w < 0).any():
            raise ValueError("discrete flags and weights need one nonnegative entry per covariate")
        for k, v in (("y", y), ("t", t.astype(int)), ("x", x), ("x0", x0), ("discrete", d), ("weights", w),
                     ("q0", int(self.q0)), ("q1", int(self.q1))):
            object.__setattr__(self, k, v)

    def distances(self) -> np.ndarray:
        cont = ~self.discrete
        diff = self.x - self.x0
        dist = np.sqrt(np.sum(self.weights[cont] * diff[:, cont] ** 2, axis=1))
        if self.discrete.any():
            span = np.ptp(self.x[:, cont], axis=0).max() if cont.any() else 1.0
            span = span if span > 0 else 1.0
            mism = np.any(diff[:, self.discrete] != 0, axis=1)
            dist = dist + mism * self.penalty * span
        return dist


def select_conditional(spec: CondSpec) -> tuple[np.ndarray, np.ndarray]:
    """Original indices of the q0 control and q1 treated observations nearest x0.

    ``spec.notes["cell_mismatch"]`` records whether any selected point
    differs from x0 in a discrete coordinate.
    """
    dist = spec.distances()
    idx = np.arange(spec.y.size)
    out = []
    mism = False
    for arm, q in ((0, spec.q0), (1, spec.q1)):
        m = spec.t == arm
        if m.sum() < q:
            raise InsufficientDataError(f"arm T={arm} has {int(m.sum())} observations, need {q}")
        sel = _nearest(dist[m], idx[m], q)
        if spec.discrete.any():
            mism |= bool(np.any(spec.x[sel][:, spec.discrete] != spec.x0[spec.discrete]))
        out.append(sel)
    spec.notes["cell_mismatch"] = mism
    return out[0], out[1]


def conditional_mtp(spec: CondSpec, alpha: float, sides: str = "two_sided",
                    calib: Calibration | None = None, rng=None) -> RejectionSet:
    """Compare outcome distributions of the two arms near covariate value x0.

    X is the control arm (T=0) and Y the treated arm.
    """
    i0, i1 = select_conditional(spec)
    if calib is None:
        calib = calibrate_2s(alpha, spec.q0, spec.q1, sides, rng=rng)
    return run_mtp_2s(spec.y[i0], spec.y[i1], calib, sides)
