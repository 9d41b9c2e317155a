"""Simulation harness: size, power and pointwise rejection curves.

One-sample studies draw blocks of uniform order statistics once and push them
through every method, so the methods share random numbers. Two-sample null
studies draw random pooled orderings and evaluate the compiled path kernels.
Procedures with data-dependent recalibration (stepdown, pre-test, joint
quantile CIs) are run replication by replication.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import numpy as np
from scipy import stats

from . import _kernels
from .boost_one import pretest_then_stepdown_1s, stepdown_1s
from .calibrate import (Calibration, band_levels, calibrate_1s, calibrate_2s, critical_levels_2s,
                        ordering_blocks, tilde_alpha_mc_2s)
from .io import format_csv, read_rows
from .ks import ks_critical_1s, ks_critical_2s, ks_mtp_2s, weighted_ks_critical, weighted_ks_scale
from .models import NullModel, RejectionSet, TieWarning
from .mtp_one import run_mtp_1s
from .mtp_two import joint_quantile_ci_2s, pretest_then_stepdown_2s, run_mtp_2s, stepdown_2s
from .rng import as_stream, blocks
from .stat_core import DomainError, _reps_per_block

__all__ = [
    "Dgp",
    "SimReport",
    "intro_dataset",
    "is_superset",
    "run_fwer_table",
    "run_pointwise_rp",
    "run_power_table",
    "run_empirical_dgp",
    "empirical_data",
    "SCENARIOS",
]


def intro_dataset() -> np.ndarray:
    """Fifteen evenly spread points in (0, 1) plus five far outliers."""
    return np.concatenate([np.arange(1, 16) / 21.0, 1e6 + np.arange(1, 6)])


# ------------------------------------------------------------------ DGPs


@dataclass(frozen=True)
class Dgp:
    """A population given by its quantile function.

    ``piecewise_linear_quantile`` interpolates ``points`` (tau, value) and,
    with ``floor``, rounds down to integers.
    """

    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def uniform(cls, a: float = 0.0, b: float = 1.0) -> "Dgp":
        return cls("uniform", {"a": a, "b": b})

    @classmethod
    def normal(cls, mu: float = 0.0, sigma: float = 1.0) -> "Dgp":
        return cls("normal", {"mu": mu, "sigma": sigma})

    @classmethod
    def piecewise(cls, taus, values, floor: bool = False) -> "Dgp":
        taus = [float(t) for t in taus]
        values = [float(v) for v in values]
        if any(b < a for a, b in zip(values, values[1:])) or any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError("quantile knots must be increasing in tau and nondecreasing in value")
        if taus[0] != 0.0 or taus[-1] != 1.0:
            raise ValueError("quantile knots must span [0, 1]")
        return cls("piecewise_linear_quantile", {"taus": taus, "values": values, "floor": floor})

    @classmethod
    def from_sample(cls, y, floor: bool = True, top_pad: float = 10.0) -> "Dgp":
        """Knots (k/(n+1), Y_k) with anchors (0, 0) and (1, Y_n + top_pad)."""
        y = np.sort(np.asarray(y, float))
        n = y.size
        taus = np.concatenate([[0.0], np.arange(1, n + 1) / (n + 1), [1.0]])
        vals = np.concatenate([[0.0], y, [y[-1] + top_pad]])
        return cls.piecewise(taus, np.maximum.accumulate(vals), floor)

    def quantile(self, u: np.ndarray) -> np.ndarray:
        p = self.params
        if self.kind == "uniform":
            return p["a"] + (p["b"] - p["a"]) * u
        if self.kind == "normal":
            return p["mu"] + p["sigma"] * stats.norm.ppf(u)
        if self.kind == "piecewise_linear_quantile":
            q = np.interp(u, p["taus"], p["values"])
            return np.floor(q) if p["floor"] else q
        raise ValueError(f"unknown DGP kind {self.kind!r}")

    def cdf_int(self, r: np.ndarray) -> np.ndarray:
        """P(Y <= r) at integer r for a floored piecewise DGP."""
        p = self.params
        return np.interp(np.asarray(r, float) + 1.0, p["values"], p["taus"], left=0.0, right=1.0)

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return self.quantile(gen.random(n))


def _table2_quantile(row: int) -> Callable[[np.ndarray], np.ndarray]:
    """True quantile functions against F0 = Unif(-1, 1)."""
    null = lambda u: 2.0 * (u - 0.5)
    alt = lambda u: 4.0 * (u - 0.5)
    if row == 1:
        return null
    if row == 2:
        return lambda u: np.where(u <= 0.5, null(u), alt(u))
    if row == 3:
        return lambda u: np.where(u <= 0.5, alt(u), null(u))
    if row == 4:
        return alt
    raise ValueError("rows are numbered 1..4")


# table-2 style rows: (true-H0 tau upper end, printed values per method)
TABLE2 = {1: (1.0, (0.101, 0.101, 0.101)), 2: (0.5, (0.048, 0.083, 0.082)),
          3: (1.0, (0.068, 0.068, 0.079)), 4: (0.5, (0.004, 0.017, 0.024))}
TABLE4 = {1: (1.0, (0.049, 0.044, 0.044, 0.044)), 2: (0.5, (0.031, 0.031, 0.044, 0.044)),
          3: (1.0, (0.013, 0.026, 0.026, 0.032)), 4: (0.5, (0.003, 0.000, 0.002, 0.006))}
TABLE1 = [(0.10, 20, (0.101, 0.100, 0.100, 0.099)), (0.10, 100, (0.101, 0.094, 0.100, 0.098)),
          (0.05, 20, (0.050, 0.050, 0.050, 0.053)), (0.05, 100, (0.050, 0.045, 0.050, 0.049))]
TABLE3 = [(0.05, 25, 500, (0.050, 0.039, 0.049)), (0.10, 25, 500, (0.100, 0.082, 0.095)),
          (0.10, 30, 30, (0.101, 0.071, 0.071)), (0.10, 29, 30, (0.101, 0.079, 0.099)),
          (0.10, 100, 100, (0.101, 0.078, 0.078)), (0.10, 99, 100, (0.106, 0.090, 0.099))]
TABLE7 = [(0.3, 1.0, (80.5, 82.4, 62.4)), (0.2, 1.0, (49.4, 52.2, 33.9)),
          (0.0, 0.7, (92.0, 65.6, 98.6)), (0.0, 0.8, (50.1, 26.7, 76.6)),
          (0.0, 1.2, (64.2, 25.5, 2.8))]
SCENARIOS = ("table1", "table2", "table3", "table4", "table7", "library", "fundraising")


# ------------------------------------------------------------------ reports


def _se(p: float, R: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / R) if R > 0 else float("nan")


@dataclass
class SimReport:
    """Estimated probabilities (with MC standard errors) keyed by label.

    ``reference`` holds published values for the same labels where they exist.
    """

    scenario: str
    R: int
    seed: dict
    estimates: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def add(self, key: str, hits: int | float, R: int | None = None, ref: float | None = None) -> None:
        R = self.R if R is None else R
        p = float(hits) / R
        self.estimates[key] = {"p": p, "se": _se(p, R), "R": int(R)}
        if ref is not None:
            self.reference[key] = ref

    def p(self, key: str) -> float:
        return self.estimates[key]["p"]

    def se(self, key: str) -> float:
        return self.estimates[key]["se"]

    def to_dict(self) -> dict:
        curves = {k: {c: np.asarray(v).tolist() for c, v in cv.items()} for k, cv in self.curves.items()}
        return {"scenario": self.scenario, "R": self.R, "seed": self.seed, "estimates": self.estimates,
                "reference": self.reference, "curves": curves, "notes": self.notes}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        rows = [(k, f"{v['p']:.6g}", f"{v['se']:.3g}", v["R"], self.reference.get(k, ""))
                for k, v in self.estimates.items()]
        return format_csv(("key", "p", "se", "R", "reference"), rows)

    def curve_csv(self, name: str) -> str:
        c = self.curves[name]
        return format_csv(("x", "rp", "se"), zip(c["x"], c["rp"], c["se"]))


# -------------------------------------------------------------- one sample


def _order_stat_blocks(n: int, R: int, stream):
    for b, s in blocks(R, _reps_per_block(n)):
        e = stream.generator(b).standard_exponential((s, n + 1))
        c = np.cumsum(e, axis=1)
        yield c[:, :n] / c[:, n:]


def _ks_parts(T: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = T.shape[1]
    k = np.arange(1, n + 1)
    return k / n - T, T - (k - 1) / n


def _weighted(d: np.ndarray, T: np.ndarray) -> np.ndarray:
    """KS gaps over the weighted-KS scale; a PIT of exactly 0 or 1 counts as infinite."""
    return np.where(T * (1 - T) > 0, d / weighted_ks_scale(T), np.inf)


def _one_sample_flags(T: np.ndarray, ell, u, c_ks, c_w) -> dict[str, np.ndarray]:
    """Per-(rep, k) trigger indicators for each two-sided method."""
    n = T.shape[1]
    a, b = _ks_parts(T)
    d = np.maximum(a, b)
    w = _weighted(d, T)
    out = {"dirichlet": (T < ell) | (T > u),
           "ks": math.sqrt(n) * d > c_ks}
    if c_w is not None:
        out["weighted_ks"] = math.sqrt(n) * w > c_w
    return out


def _table1(R: int, stream, rows) -> SimReport:
    rep = SimReport("table1", R, stream.to_dict())
    for i in rows:
        alpha, n, ref = TABLE1[i]
        cal = calibrate_1s(alpha, n, "two_sided", "formula")
        ell, u = band_levels(n, cal.tilde_alpha, "two_sided")
        c_asy = ks_critical_1s(n, alpha, mode="asymptotic")
        c_ex = ks_critical_1s(n, alpha, mode="analytic")
        c_w = weighted_ks_critical(n, alpha)
        hits = np.zeros(4)
        for T in _order_stat_blocks(n, R, stream.child(f"t1-{i}")):
            a, b = _ks_parts(T)
            D = math.sqrt(n) * np.maximum(a, b).max(axis=1)
            W = math.sqrt(n) * np.max(_weighted(np.maximum(a, b), T), axis=1)
            hits += [np.any((T < ell) | (T > u), axis=1).sum(), (D > c_asy).sum(), (D > c_ex).sum(),
                     (W > c_w).sum()]
        tag = f"alpha={alpha:g},n={n}"
        for name, h, r in zip(("dirichlet", "ks", "ks_exact", "weighted_ks_exact"), hits, ref):
            rep.add(f"{tag}/{name}", h, ref=r)
    return rep


def run_pointwise_rp(method: str, dgp: Dgp | None, n: int, alpha: float, R: int, rng=None,
                     null: NullModel | None = None, sides: str = "two_sided") -> SimReport:
    """Per-order-statistic probability of triggering a rejection.

    ``method`` is ``dirichlet``, ``ks`` or ``weighted_ks``; all are two-sided
    procedures at familywise level alpha. ``sides`` restricts which
    deviation counts (``lower``: X_{n:k} too small). ``dgp=None`` is the null.
    """
    stream = as_stream(rng)
    null = null or NullModel.uniform(0.0, 1.0)
    cal = calibrate_1s(alpha, n, "two_sided")
    ell, u = band_levels(n, cal.tilde_alpha, "two_sided")
    c = ks_critical_1s(n, alpha, mode="analytic")
    c_w = weighted_ks_critical(n, alpha) if method == "weighted_ks" else None
    counts = np.zeros(n)
    for U in _order_stat_blocks(n, R, stream):
        T = U if dgp is None else np.asarray(null.cdf(dgp.quantile(U)), float)
        if method == "dirichlet":
            flag = (T < ell) if sides == "lower" else (T > u) if sides == "upper" else (T < ell) | (T > u)
        else:
            a, b = _ks_parts(T)
            d = a if sides == "lower" else b if sides == "upper" else np.maximum(a, b)
            if method == "weighted_ks":
                d = _weighted(d, T)
                flag = math.sqrt(n) * d > c_w
            elif method == "ks":
                flag = math.sqrt(n) * d > c
            else:
                raise ValueError(f"unknown method {method!r}")
        counts += flag.sum(axis=0)
    rp = counts / R
    rep = SimReport(f"pointwise/{method}", R, stream.to_dict(),
                    notes={"tilde_alpha": cal.tilde_alpha, "n": n, "alpha": alpha, "sides": sides})
    rep.curves[method] = {"x": np.arange(1, n + 1), "rp": rp, "se": np.sqrt(rp * (1 - rp) / R)}
    return rep


def run_power_table(R: int, rng=None, rows=None, n: int = 100, alpha: float = 0.1,
                    calibration: str = "monte_carlo", ks_mode: str = "asymptotic") -> SimReport:
    """Global power against N(mu, sigma^2) with null N(0, 1), two-sided.

    Defaults match the reference rows: the Dirichlet level is simulated to
    exact size (the closed form is about 0.7 points conservative at n=100)
    and KS uses the asymptotic Kolmogorov cutoff.
    """
    stream = as_stream(rng)
    rows = range(len(TABLE7)) if rows is None else rows
    null = NullModel.normal(0.0, 1.0)
    cal = calibrate_1s(alpha, n, "two_sided", calibration, rng=stream.child("cal"))
    ell, u = band_levels(n, cal.tilde_alpha, "two_sided")
    c = ks_critical_1s(n, alpha, mode=ks_mode)
    c_w = weighted_ks_critical(n, alpha)
    rep = SimReport("table7", R, stream.to_dict(),
                    notes={"units": "probability; reference in percent", "tilde_alpha": cal.tilde_alpha,
                           "ks_critical": c, "weighted_ks_critical": c_w})
    for i in rows:
        mu, sigma, ref = TABLE7[i]
        dgp = Dgp.normal(mu, sigma)
        hits = dict.fromkeys(("dirichlet", "ks", "weighted_ks"), 0)
        for U in _order_stat_blocks(n, R, stream.child(f"t7-{i}")):
            T = np.asarray(null.cdf(dgp.quantile(U)), float)
            for name, f in _one_sample_flags(T, ell, u, c, c_w).items():
                hits[name] += int(np.any(f, axis=1).sum())
        for (name, h), r in zip(hits.items(), ref):
            rep.add(f"mu={mu:g},sigma={sigma:g}/{name}", h, ref=r)
    return rep


def is_superset(big: RejectionSet, small: RejectionSet) -> bool:
    """Every interval of ``small`` lies inside one interval of ``big`` on the same side."""
    for s in small.intervals:
        lo, hi = (s.tau_lo, s.tau_hi) if small.space == "tau" else (s.r_lo, s.r_hi)
        ok = False
        for b in big.intervals:
            if b.side != s.side:
                continue
            blo, bhi = (b.tau_lo, b.tau_hi) if big.space == "tau" else (b.r_lo, b.r_hi)
            if blo <= lo and hi <= bhi:
                ok = True
                break
        if not ok:
            return False
    return True


def _false_tau(rej: RejectionSet, true_hi: float) -> bool:
    """Does the rejected tau-set meet the true nulls [0, true_hi]?"""
    return any(iv.tau_lo < true_hi or (iv.tau_lo == true_hi and iv.lo_closed) for iv in rej.intervals)


def _table2(R: int, stream, rows, taus) -> SimReport:
    alpha, n = 0.1, 100
    null = NullModel.uniform(-1.0, 1.0)
    cal = calibrate_1s(alpha, n, "upper")
    rep = SimReport("table2", R, stream.to_dict(), notes={"alpha": alpha, "n": n, "sides": "upper"})
    names = ("dirichlet", "stepdown", "pre_step")
    for row in rows:
        true_hi, ref = TABLE2[row]
        q = _table2_quantile(row)
        hits = np.zeros(3)
        rp = np.zeros((3, taus.size))
        bad_superset = 0
        g = stream.child(f"t2-{row}")
        for r in range(R):
            x = q(g.generator(r).random(n))
            basic = run_mtp_1s(x, null, cal)
            sd = stepdown_1s(x, null, cal).rejections
            ps, _ = pretest_then_stepdown_1s(x, null, cal)
            ps = ps.rejections
            bad_superset += (not is_superset(sd, basic)) + (not is_superset(ps, basic))
            for m, rs in enumerate((basic, sd, ps)):
                hits[m] += _false_tau(rs, true_hi)
                rp[m] += [rs.rejects_tau(t) for t in taus]
        for name, h, rv in zip(names, hits, ref):
            rep.add(f"row{row}/{name}", h, ref=rv)
        rep.notes[f"row{row}/superset_violations"] = int(bad_superset)
        rep.curves[f"row{row}"] = {"x": taus, **{name: rp[m] / R for m, name in enumerate(names)}}
    return rep


# -------------------------------------------------------------- two sample


def _table3(R: int, stream, rows) -> SimReport:
    rep = SimReport("table3", R, stream.to_dict())
    for i in rows:
        alpha, nx, ny, ref = TABLE3[i]
        cal = calibrate_2s(alpha, nx, ny, "two_sided", rng=stream.child(f"cal-{i}"))
        C = critical_levels_2s(nx, ny, "two_sided")
        scale = math.sqrt(nx * ny / (nx + ny))
        c_asy = ks_critical_2s(nx, ny, alpha, mode="asymptotic")
        c_ex = ks_critical_2s(nx, ny, alpha, mode="exact")
        hits = np.zeros(3)
        for lab in ordering_blocks(nx, ny, "uniform_sim", R, stream.child(f"t3-{i}")):
            s = _kernels.path_min(lab, C)
            p, m = _kernels.path_ks(lab, nx, ny)
            D = np.maximum(p, m) * scale
            hits += [(s < cal.tail).sum(), (D > c_asy + 1e-12).sum(), (D > c_ex + 1e-12).sum()]
        tag = f"alpha={alpha:g},nx={nx},ny={ny}"
        for name, h, r in zip(("dirichlet", "ks", "ks_exact"), hits, ref):
            rep.add(f"{tag}/{name}", h, ref=r)
        rep.notes[f"{tag}/calibration"] = cal.to_dict()
    return rep


def _basic_false_r(rej: RejectionSet, grid: np.ndarray) -> bool:
    return any(rej.rejects_r(r) for r in grid)


def _table4(R: int, stream, rows, M: int) -> SimReport:
    alpha, n = 0.05, 200
    cal = tilde_alpha_mc_2s(alpha, n, n, "upper", "permutation", 200_000, stream.child("cal"))
    r_grid = np.round(np.arange(-99, 100) / 100.0, 2)
    rep = SimReport("table4", R, stream.to_dict(),
                    notes={"alpha": alpha, "n": n, "sides": "upper", "basic_tilde_alpha": cal.tilde_alpha})
    names = ("basic", "joint", "stepdown", "pre_step")
    for row in rows:
        true_hi, ref = TABLE4[row]
        q = _table2_quantile(row)
        true_r = r_grid[r_grid <= 2.0 * true_hi - 1.0]
        hits = np.zeros(4)
        g = stream.child(f"t4-{row}")
        for r in range(R):
            gen = g.generator(r)
            x = q(gen.random(n))
            y = 2.0 * gen.random(n) - 1.0
            basic = run_mtp_2s(x, y, cal, "upper")
            hits[0] += _basic_false_r(basic, true_r)
            joint = joint_quantile_ci_2s(x, y, alpha, "upper", M)
            sd = stepdown_2s(x, y, alpha, "upper", M)
            ps = pretest_then_stepdown_2s(x, y, alpha, "upper", M)
            for m, res in enumerate((joint, sd, ps), start=1):
                hits[m] += any(res.taus[j] <= true_hi for j in res.rejected())
        for name, h, rv in zip(names, hits, ref):
            rep.add(f"row{row}/{name}", h, ref=rv)
    return rep


def joint_coverage_h0(R: int, rng=None, n: int = 200, alpha: float = 0.05,
                      sides: str = "two_sided", M: int = 20_000) -> SimReport:
    """Fraction of null replications whose joint quantile-difference CIs all cover zero."""
    stream = as_stream(rng)
    rep = SimReport("joint_coverage", R, stream.to_dict())
    cover = 0
    for r in range(R):
        gen = stream.generator(r)
        res = joint_quantile_ci_2s(gen.random(n), gen.random(n), alpha, sides, M)
        cover += bool(np.all(res.ci_lower <= 0) and np.all(res.ci_upper >= 0))
    rep.add("coverage", cover, ref=1 - alpha)
    return rep


def run_fwer_table(scenario: str, R: int, rng=None, rows=None, taus=None, M: int = 20_000) -> SimReport:
    """Familywise error rates for one of the size tables.

    ``table1``: one sample, two-sided, all nulls true. ``table2``: one sample,
    one-sided, basic / stepdown / pre-test + stepdown on four quantile
    configurations. ``table3``: two samples, two-sided, all nulls true.
    ``table4``: two samples, one-sided, basic / joint / stepdown / pre-test.
    ``rows`` selects row numbers (0-based for tables 1 and 3, 1-based for 2 and 4).
    """
    stream = as_stream(rng)
    if scenario == "table1":
        return _table1(R, stream, range(len(TABLE1)) if rows is None else rows)
    if scenario == "table2":
        taus = np.round(np.arange(0.51, 1.0, 0.02), 2) if taus is None else np.asarray(taus)
        return _table2(R, stream, [1, 2, 3, 4] if rows is None else rows, taus)
    if scenario == "table3":
        return _table3(R, stream, range(len(TABLE3)) if rows is None else rows)
    if scenario == "table4":
        return _table4(R, stream, [1, 2, 3, 4] if rows is None else rows, M)
    raise ValueError(f"unknown scenario {scenario!r}")


# --------------------------------------------------------- empirical DGP


EMPIRICAL = {"library": "gift_library.csv", "fundraising": "gift_fundraising.csv"}
TABLE5 = {"library": {"basic": 0.647, "ks": 0.477, "joint": 0.583, "stepdown": 0.583, "pre_step": 0.583},
          "fundraising": {"basic": 0.815, "ks": 0.714, "joint": 0.758, "stepdown": 0.758, "pre_step": 0.759}}


def empirical_data(task: str) -> tuple[np.ndarray, np.ndarray]:
    """Bundled synthetic (control, treatment) samples shaped like the gift-wage data."""
    if task not in EMPIRICAL:
        raise ValueError(f"task must be one of {sorted(EMPIRICAL)}")
    path = resources.files("qmtp") / "data" / EMPIRICAL[task]
    _, rows = read_rows(str(path))
    ctrl = np.array([float(v) for _, (v, g) in rows if g == "control"])
    trt = np.array([float(v) for _, (v, g) in rows if g == "treatment"])
    return ctrl, trt


def run_empirical_dgp(task: str, R: int, rng=None, alpha: float = 0.1, M: int = 20_000) -> SimReport:
    """FWER and global power for H0r: F_T(r) >= F_C(r) under floored piecewise-linear DGPs."""
    ctrl, trt = empirical_data(task)
    dc, dt = Dgp.from_sample(ctrl), Dgp.from_sample(trt)
    nc, nt = ctrl.size, trt.size
    stream = as_stream(rng)
    top = int(max(dc.params["values"][-1], dt.params["values"][-1]))
    r_all = np.arange(0, top + 1)
    true_r = r_all[dt.cdf_int(r_all) >= dc.cdf_int(r_all)]
    cal = calibrate_2s(alpha, nt, nc, "upper", rng=stream.child("cal"))
    names = ("basic", "ks", "joint", "stepdown", "pre_step")
    fw = dict.fromkeys(names, 0)
    pw = dict.fromkeys(names, 0)
    rep = SimReport(f"empirical/{task}", R, stream.to_dict(),
                    notes={"true_null_r": true_r.tolist(), "tilde_alpha": cal.tilde_alpha,
                           "sizes": {"control": nc, "treatment": nt}})
    g = stream.child("reps")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TieWarning)
        for r in range(R):
            gen = g.generator(r)
            x = dt.sample(nt, gen)
            y = dc.sample(nc, gen)
            for name, rs in (("basic", run_mtp_2s(x, y, cal, "upper")),
                             ("ks", ks_mtp_2s(x, y, alpha, "upper").rejections)):
                rej = [v for v in r_all if rs.rejects_r(v)]
                pw[name] += bool(rej)
                fw[name] += any(v in set(true_r) for v in rej)
            for name, fn in (("joint", joint_quantile_ci_2s), ("stepdown", stepdown_2s),
                             ("pre_step", pretest_then_stepdown_2s)):
                try:
                    res = fn(x, y, alpha, "upper", M)
                except DomainError:
                    continue
                js = res.rejected()
                pw[name] += bool(js)
                fw[name] += any(dt.quantile(np.array([res.taus[j]]))[0] <= dc.quantile(np.array([res.taus[j]]))[0]
                                for j in js)
    for name in names:
        rep.add(f"fwer/{name}", fw[name])
        rep.add(f"power/{name}", pw[name], ref=TABLE5[task][name])
    return rep


def run_scenario(name: str, R: int, rng=None) -> SimReport:
    """Dispatch by scenario name (used by the command line)."""
    if name in ("table1", "table2", "table3", "table4"):
        return run_fwer_table(name, R, rng)
    if name == "table7":
        return run_power_table(R, rng)
    if name in EMPIRICAL:
        return run_empirical_dgp(name, R, rng)
    raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
