import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from qmtp.calibrate import Calibration, band_levels, calibrate_1s, tilde_alpha_formula
from qmtp.models import NullModel, RejectionSet, Sample, TieWarning
from qmtp.mtp_one import (_null_critical_levels, calibrate_uneven_1s, confidence_band_1s, critical_level_1s,
                          gof_pvalue_1s, pit, run_mtp_1s, run_mtp_1s_uneven)
from qmtp.rng import RngStream
from qmtp.simlab import intro_dataset

U01 = NullModel.uniform(0, 1)


def _oracle_rejects(t, ell, u, tau):
    low = np.any((t < tau) & (tau <= ell))
    high = np.any((u <= tau) & (tau < t))
    return bool(low), bool(high)


def test_null_quantile_data_rejects_nothing():
    n = 20
    x = U01.quantile(np.arange(1, n + 1) / (n + 1))
    assert run_mtp_1s(x, U01, calibrate_1s(0.1, n)).empty


def test_intro_dataset_rejects_upper_tail():
    rs = run_mtp_1s(intro_dataset(), U01, calibrate_1s(0.1, 20))
    assert not rs.empty
    assert {iv.side for iv in rs} == {"above"}
    assert rs.rejects_tau(0.95)


@settings(max_examples=80, deadline=None)
@given(data=st.lists(st.floats(0.0, 1.0), min_size=4, max_size=40, unique=True),
       taus=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20),
       alpha=st.sampled_from([0.05, 0.1, 0.3]))
def test_rejection_set_matches_pointwise_oracle(data, taus, alpha):
    x = np.asarray(data)
    cal = calibrate_1s(alpha, x.size)
    rs = run_mtp_1s(Sample.of(x, warn_ties=False), U01, cal)
    t = np.sort(x)
    ell, u = band_levels(x.size, cal.tilde_alpha)
    for tau in taus:
        low, high = _oracle_rejects(t, ell, u, tau)
        assert rs.rejects_tau(tau, "below") == low
        assert rs.rejects_tau(tau, "above") == high


def test_one_sided_family_keeps_one_side():
    x = np.r_[np.linspace(0.001, 0.002, 5), np.linspace(0.3, 0.99999, 15)]
    for sides, label in (("lower", "below"), ("upper", "above")):
        rs = run_mtp_1s(x, U01, calibrate_1s(0.1, x.size, sides))
        assert all(iv.side == label for iv in rs)


def test_monotone_transform_equivariance():
    g = np.random.default_rng(0)
    x = g.normal(0.4, 1.3, 60)
    a = run_mtp_1s(x, NullModel.normal(), calibrate_1s(0.1, 60))
    lognull = NullModel.custom(lambda v: stats.norm.cdf(np.log(v)), lambda t: np.exp(stats.norm.ppf(t)))
    b = run_mtp_1s(np.exp(x), lognull, calibrate_1s(0.1, 60))
    assert len(a) == len(b) > 0
    for p, q in zip(a, b):
        assert (p.side, p.tau_lo, p.tau_hi, p.lo_closed, p.hi_closed) == \
               (q.side, q.tau_lo, q.tau_hi, q.lo_closed, q.hi_closed)
        assert q.r_lo == pytest.approx(math.exp(p.r_lo)) and q.r_hi == pytest.approx(math.exp(p.r_hi))


@pytest.mark.parametrize("dist", [stats.uniform(), stats.norm(1, 2)])
def test_pointwise_exactness(dist):
    n, R = 20, 200_000
    cal = calibrate_1s(0.1, n)
    ell, _ = band_levels(n, cal.tilde_alpha)
    g = RngStream(8).generator(0)
    x = np.sort(dist.rvs(size=(R, n), random_state=g), axis=1)
    rate = np.mean(x < dist.ppf(ell), axis=0)
    se = math.sqrt(cal.tail * (1 - cal.tail) / R)
    assert np.all(np.abs(rate - cal.tail) < 4 * se)


def test_ties_warn():
    with pytest.warns(TieWarning):
        Sample.of([0.1, 0.2, 0.2, 0.5])


def test_rejection_set_json_round_trip():
    rs = run_mtp_1s(intro_dataset(), U01, calibrate_1s(0.1, 20))
    assert RejectionSet.from_json(rs.to_json()) == rs


def test_calibration_size_mismatch():
    with pytest.raises(ValueError):
        run_mtp_1s(np.linspace(0.1, 0.9, 10), U01, calibrate_1s(0.1, 20))


# ------------------------------------------------------------- p-values


def test_pvalue_near_one_at_null_quantiles():
    n = 50
    x = (np.arange(1, n + 1)) / (n + 1)
    p = gof_pvalue_1s(x, U01)
    assert p.p >= 0.9 and p.censored == "above"


def test_intro_pvalue_small():
    p = gof_pvalue_1s(intro_dataset(), U01)
    assert p.p < 0.1


def test_pvalue_rejection_duality():
    g = np.random.default_rng(1)
    n = 30
    t2 = tilde_alpha_formula(0.1, n)
    for _ in range(300):
        x = g.beta(0.9, 1.1, n)
        p = gof_pvalue_1s(x, U01).p
        rejects = not run_mtp_1s(x, U01, calibrate_1s(0.1, n)).empty
        s = critical_level_1s(np.sort(x))
        assert rejects == (s < t2 / 2)
        if abs(p - 0.1) > 1e-6:
            assert (p < 0.1) == rejects


def test_pvalue_uniform_under_null():
    n, R = 20, 100_000
    s = _null_critical_levels(n, "two_sided", R, RngStream(12))
    frac = np.mean(s < tilde_alpha_formula(0.1, n) / 2)
    assert frac == pytest.approx(0.10, abs=0.011)


def test_monte_carlo_pvalue_close_to_formula():
    g = np.random.default_rng(3)
    x = g.beta(1.3, 1.0, 40)
    a = gof_pvalue_1s(x, U01, method="formula").p
    b = gof_pvalue_1s(x, U01, method="monte_carlo", M=50_000, rng=RngStream(2)).p
    assert abs(a - b) < 0.15 * max(a, 0.01) + 0.01


# ------------------------------------------------------------- bands


def test_band_duality_on_random_datasets():
    g = np.random.default_rng(5)
    n = 25
    cal = calibrate_1s(0.1, n)
    for _ in range(100):
        x = g.beta(1.0 + g.uniform(-0.4, 0.4), 1.0, n)
        band = confidence_band_1s(x, calib=cal)
        assert band.contains(U01.cdf) == run_mtp_1s(x, U01, cal).empty


def test_band_single_observation():
    cal = Calibration(0.1, 0.1, "two_sided", 1, "formula")
    band = confidence_band_1s([0.3], calib=cal)
    assert band.at(0.2) == (0.0, pytest.approx(0.95))
    assert band.at(0.4) == (pytest.approx(0.05), 1.0)


def test_band_coverage_simulation():
    n, R = 20, 20_000
    cal = calibrate_1s(0.1, n)
    g = RngStream(21).generator(0)
    x = g.random((R, n))
    miss = sum(not confidence_band_1s(row, calib=cal).contains(U01.cdf) for row in x)
    assert miss / R == pytest.approx(0.101, abs=4 * math.sqrt(0.1 * 0.9 / R))


def test_band_monotone_steps():
    band = confidence_band_1s(np.random.default_rng(0).random(30), 0.1)
    assert np.all(np.diff(band.lower) >= 0) and np.all(np.diff(band.upper) >= 0)
    assert np.all(band.lower < band.upper)


# ------------------------------------------------------------- null models


def test_null_parse_and_table(tmp_path):
    assert NullModel.parse("uniform:0,2").cdf(1.0) == pytest.approx(0.5)
    assert NullModel.parse("normal:1,2").quantile(0.5) == pytest.approx(1.0)
    p = tmp_path / "q.csv"
    p.write_text("tau,q\n0,0\n0.5,1\n1,4\n")
    m = NullModel.parse(f"table:{p}")
    assert m.quantile(0.75) == pytest.approx(2.5)
    assert m.cdf(2.5) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        NullModel.table([0.1, 1.0], [0, 1])
    with pytest.raises(ValueError):
        NullModel.parse("beta:1,2")


def test_pit_is_null_cdf_of_sorted_sample():
    s = Sample.of([0.9, 0.1, 0.5])
    assert np.array_equal(pit(s, U01), [0.1, 0.5, 0.9])


# ------------------------------------------------------------- uneven levels


def test_uneven_constant_g_recovers_even_level():
    c = calibrate_uneven_1s(0.1, 20, lambda k, a: np.full(k.size, a), M=50_000, rng=RngStream(1))
    assert c.a == pytest.approx(tilde_alpha_formula(0.1, 20), rel=0.06)
    assert c.fwer <= 0.1


def test_uneven_levels_shift_power_and_keep_fwer():
    n = 20
    c = calibrate_uneven_1s(0.1, n, lambda k, a: np.where(k < n / 2, 3 * a, a), M=50_000, rng=RngStream(2))
    even = tilde_alpha_formula(0.1, n)
    assert c.a < even < 3 * c.a
    g = RngStream(3).generator(0)
    R = 20_000
    hits = sum(not run_mtp_1s_uneven(row, U01, c).empty for row in g.random((R, n)))
    assert hits / R == pytest.approx(0.1, abs=4 * math.sqrt(0.09 / R))
    with pytest.raises(ValueError):
        run_mtp_1s_uneven(np.linspace(0.1, 0.9, 5), U01, c)
