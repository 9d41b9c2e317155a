import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from qmtp.calibrate import (CalibAccuracy, Calibration, ReferenceTable, TableKeyError, TableRow,
                            band_levels, calibrate_1s, calibrate_2s, calibrate_2s_many, default_table,
                            fwer_curve_1s, null_statistics_2s, one_sided_adjust, one_sided_unadjust,
                            simulate_fwer_1s, table_lookup, tilde_alpha_formula, tilde_alpha_mc_1s,
                            tilde_alpha_mc_2s)
from qmtp.rng import RngStream
from qmtp.stat_core import DomainError


def _fwer_from_stats(s, tilde):
    return float(np.mean(s < tilde / 2.0))


# ------------------------------------------------------------- closed form


def test_formula_reference_values():
    assert tilde_alpha_formula(0.1, 20) == pytest.approx(0.01, rel=0.1)
    assert tilde_alpha_formula(0.1, 100) == pytest.approx(0.005, rel=0.15)


def test_formula_direct_evaluation():
    a, n = 0.05, 1000
    c1 = -2.75 - 1.04 * math.log(a)
    c2 = 4.76 - 1.20 * a
    c3 = 1.15 - 2.39 * a
    c4 = -3.96 + 1.72 * a ** 0.171
    ln = math.log(n)
    expect = math.exp(-c1 - c2 * math.sqrt(math.log(ln)) - c3 * ln ** c4)
    assert tilde_alpha_formula(a, n) == pytest.approx(expect, rel=1e-14)


def test_formula_domain():
    with pytest.raises(DomainError):
        tilde_alpha_formula(0.1, 3)
    with pytest.warns(RuntimeWarning):
        tilde_alpha_formula(0.95, 50)


@pytest.mark.parametrize("a1,a2", [(0.05, 0.0975), (0.0, 0.0), (0.1, 0.19)])
def test_one_sided_adjust(a1, a2):
    assert one_sided_adjust(a1) == pytest.approx(a2, abs=1e-15)
    assert one_sided_unadjust(a2) == pytest.approx(a1, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(4, 100_000), a=st.floats(0.001, 0.3), b=st.floats(0.001, 0.3))
def test_formula_monotone_in_alpha(n, a, b):
    lo, hi = sorted((a, b))
    assert tilde_alpha_formula(lo, n) <= tilde_alpha_formula(hi, n)


def test_formula_refuses_levels_above_alpha():
    # at tiny n and large alpha the fit overshoots; a pointwise level above alpha is impossible
    with pytest.raises(DomainError):
        tilde_alpha_formula(0.5, 4)


# ------------------------------------------------------------- simulation


def test_fact1_envelope_at_n20():
    t = tilde_alpha_formula(0.1, 20)
    f = simulate_fwer_1s(t, 20, "two_sided", 1_000_000, RngStream(1))
    assert 0.089 <= f <= 0.111


def test_zero_level_never_rejects():
    assert simulate_fwer_1s(0.0, 20, "two_sided", 1000, RngStream(1)) == 0.0


def test_n2_against_quadrature():
    tilde = 0.25
    ell, u = band_levels(2, tilde)
    inside, _ = integrate.dblquad(lambda u2, u1: 2.0, ell[0], u[0],
                                  lambda u1: max(u1, ell[1]), lambda u1: u[1], epsabs=1e-12)
    exact = 1.0 - inside
    M = 1_000_000
    f = simulate_fwer_1s(tilde, 2, "two_sided", M, RngStream(2))
    assert abs(f - exact) < 4 * math.sqrt(exact * (1 - exact) / M)


def test_band_levels_closed_forms():
    ell, u = band_levels(1, 0.1)
    assert ell[0] == pytest.approx(0.05) and u[0] == pytest.approx(0.95)
    ell, u = band_levels(2, 0.25)
    assert ell[0] == pytest.approx(1 - math.sqrt(1 - 0.125), abs=1e-14)
    assert u[1] == pytest.approx(math.sqrt(1 - 0.125), abs=1e-14)


def test_one_and_two_sided_rates_are_consistent():
    n, t, M = 50, tilde_alpha_formula(0.1, 50), 400_000
    lo = simulate_fwer_1s(t, n, "lower", M, RngStream(3))
    up = simulate_fwer_1s(t, n, "upper", M, RngStream(3))
    two = simulate_fwer_1s(t, n, "two_sided", M, RngStream(3))
    assert lo == pytest.approx(up, abs=4 * math.sqrt(lo / M))
    assert 2 * lo - lo * lo - 0.002 <= two <= 2 * lo + 1e-12


def test_fwer_curve_is_monotone_step_function():
    ts = np.geomspace(1e-4, 0.2, 25)
    f = fwer_curve_1s(ts, 30, "two_sided", 20_000, RngStream(4))
    assert np.all(np.diff(f) >= 0)


@pytest.mark.parametrize("alpha,T", [(0.05, 0.00019), (0.1, 0.00089), (0.01, 0.00033)])
def test_accuracy_tolerances(alpha, T):
    assert CalibAccuracy.default(alpha).T == pytest.approx(T, abs=1e-5)


def test_accuracy_rejects_nonpositive_tolerance():
    with pytest.raises(ValueError):
        CalibAccuracy(0.05, 0.001, 0.05, 100)


def test_mc_1s_hits_target_within_tolerance():
    c = tilde_alpha_mc_1s(0.05, 100, rng=RngStream(5))
    assert c.source == "monte_carlo"
    assert abs(c.mc_meta["fwer_hat"] - 0.05) < c.mc_meta["T"]
    f = simulate_fwer_1s(c.tilde_alpha, 100, "two_sided", 200_000, RngStream(5))
    assert f == pytest.approx(c.mc_meta["fwer_hat"], abs=1e-12)


def test_mc_1s_agrees_with_formula():
    c = tilde_alpha_mc_1s(0.1, 20, rng=RngStream(6))
    f = simulate_fwer_1s(tilde_alpha_formula(0.1, 20), 20, "two_sided", 200_000, RngStream(6))
    assert abs(f - c.mc_meta["fwer_hat"]) / 0.1 <= 0.11


def test_calibrate_1s_sources():
    f = calibrate_1s(0.1, 20)
    assert f.source == "formula"
    one = calibrate_1s(0.1, 20, "lower")
    assert one.tilde_alpha == pytest.approx(tilde_alpha_formula(0.19, 20))
    small = calibrate_1s(0.1, 3, rng=RngStream(1))
    assert small.source == "monte_carlo"


def test_calibration_json_round_trip():
    c = calibrate_1s(0.1, 20)
    assert Calibration.from_json(c.to_json()) == c
    c2 = table_lookup(0.05, 6, 12)
    assert Calibration.from_json(c2.to_json()) == c2


# ------------------------------------------------------------- two sample


def test_exhaustive_6_12():
    c = tilde_alpha_mc_2s(0.05, 6, 12, scheme="exhaustive")
    assert c.mc_meta == {"scheme": "exhaustive", "M": 18564}
    s = null_statistics_2s(6, 12, "two_sided", "exhaustive", None, None)
    # same step of the exact rate function as the published level
    assert _fwer_from_stats(s, c.tilde_alpha) == _fwer_from_stats(s, 0.15351700)
    assert c.alpha_low <= 0.05 < c.alpha_high
    assert c.tilde_alpha == pytest.approx(0.1535, abs=5e-4)


def test_exhaustive_6_11_at_one_percent():
    c = tilde_alpha_mc_2s(0.01, 6, 11, scheme="exhaustive")
    s = null_statistics_2s(6, 11, "two_sided", "exhaustive", None, None)
    assert _fwer_from_stats(s, c.tilde_alpha) == _fwer_from_stats(s, 0.07164299)


def test_degenerate_sizes_never_reject():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c = tilde_alpha_mc_2s(0.05, 1, 1, scheme="exhaustive")
    s = null_statistics_2s(1, 1, "two_sided", "exhaustive", None, None)
    assert _fwer_from_stats(s, c.tilde_alpha) == 0.0


def test_sampled_schemes_agree_with_enumeration():
    s = np.sort(null_statistics_2s(6, 12, "two_sided", "exhaustive", None, None))
    steps = np.unique(s)
    exact = tilde_alpha_mc_2s(0.05, 6, 12, scheme="exhaustive").tilde_alpha
    for scheme in ("permutation", "uniform_sim"):
        c = tilde_alpha_mc_2s(0.05, 6, 12, scheme=scheme, M=200_000, rng=RngStream(7))
        i, j = np.searchsorted(steps, [exact / 2, c.tilde_alpha / 2])
        assert abs(int(i) - int(j)) <= 1


def test_2s_monotone_in_alpha():
    cs = calibrate_2s_many([0.01, 0.05, 0.1, 0.2], 8, 9, scheme="exhaustive")
    t = [c.tilde_alpha for c in cs]
    assert t == sorted(t)


# ------------------------------------------------------------- table


def test_table_exact_hit_is_verbatim():
    tab = default_table()
    row = tab.find(0.05, 6, 12)
    c = table_lookup(0.05, 6, 12, tab)
    assert (c.tilde_alpha, c.alpha_low, c.alpha_high) == (row.tilde_alpha, row.alpha_low, row.alpha_high)
    assert table_lookup(0.05, 12, 6, tab).tilde_alpha == row.tilde_alpha


def test_table_miss_and_interpolation():
    tab = default_table()
    with pytest.raises(TableKeyError):
        table_lookup(0.05, 7, 13, tab)
    c = table_lookup(0.05, 10, 35, tab, interpolate=True)
    assert c.interpolated
    lo, hi = table_lookup(0.05, 10, 30, tab).tilde_alpha, table_lookup(0.05, 10, 40, tab).tilde_alpha
    assert min(lo, hi) <= c.tilde_alpha <= max(lo, hi)


def test_table_entry_matches_fresh_simulation():
    c = table_lookup(0.1, 40, 40)
    M = 200_000
    s = null_statistics_2s(40, 40, "two_sided", "permutation", M, RngStream(99))
    f = _fwer_from_stats(s, c.tilde_alpha)
    assert abs(f - c.alpha_low) < 4 * math.sqrt(0.1 * 0.9 / M) * math.sqrt(2)


def test_table_monotone_everywhere():
    tab = default_table()
    tab.validate()
    for r in tab.rows:
        assert r.alpha_low <= r.alpha + 1e-12 and r.alpha_high >= r.alpha - 1e-12


def test_table_round_trip(tmp_path):
    tab = ReferenceTable([TableRow(0.05, 6, 12, 0.153417, 0.046326223, 0.057530705)])
    p = tmp_path / "t.csv"
    tab.save(p)
    assert p.read_text().splitlines()[0] == "alpha,nx,ny,tilde_alpha,alpha_low,alpha_high"
    assert ReferenceTable.load(p).rows == tab.rows


def test_table_rejects_nonmonotone(tmp_path):
    tab = ReferenceTable([TableRow(0.05, 6, 12, 0.2, 0.04, 0.06), TableRow(0.1, 6, 12, 0.1, 0.09, 0.11)])
    with pytest.raises(ValueError):
        tab.validate()


def test_calibrate_2s_routing(tmp_path, monkeypatch):
    assert calibrate_2s(0.05, 6, 12).source == "table"
    one = calibrate_2s(0.05, 6, 12, "upper")
    assert one.source == "monte_carlo"
    with pytest.raises(TableKeyError):
        calibrate_2s(0.05, 7, 13, source="table")
    monkeypatch.setenv("QMTP_TABLE_PATH", str(tmp_path / "missing.csv"))
    with pytest.warns(UserWarning):
        c = calibrate_2s(0.05, 6, 12)
    assert c.source == "monte_carlo"
