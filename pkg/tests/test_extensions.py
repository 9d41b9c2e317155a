import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmtp.calibrate import calibrate_2s
from qmtp.extensions import (CondSpec, InsufficientDataError, RdSpec, conditional_mtp, rd_mtp,
                             select_conditional, select_rd)
from qmtp.mtp_two import run_mtp_2s
from qmtp.rng import RngStream


def test_rd_selection_example():
    z = np.array([-3, -1, -0.5, 0.2, 0.9, 4])
    left, right = select_rd(RdSpec(np.zeros(6), z, 0.0, 2))
    assert sorted(z[left]) == [-1, -0.5]
    assert sorted(z[right]) == [0.2, 0.9]


def test_cutoff_point_goes_right():
    z = np.array([-1.0, 0.0, 1.0])
    left, right = select_rd(RdSpec(np.zeros(3), z, 0.0, 1))
    assert z[left].tolist() == [-1.0] and z[right].tolist() == [0.0]


def test_rd_insufficient():
    with pytest.raises(InsufficientDataError):
        select_rd(RdSpec(np.zeros(4), np.array([-1, 1, 2, 3.0]), 0.0, 2))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.01, 100))
def test_rd_selection_scale_invariant(seed, scale):
    g = np.random.default_rng(seed)
    z = g.normal(size=40)
    a = select_rd(RdSpec(np.zeros(40), z, 0.0, 5))
    b = select_rd(RdSpec(np.zeros(40), z * scale, 0.0, 5))
    assert all(np.array_equal(p, q) for p, q in zip(a, b))


def test_rd_is_pure_delegation():
    g = np.random.default_rng(1)
    z = g.uniform(-1, 1, 300)
    y = g.normal(size=300) + (z >= 0)
    spec = RdSpec(y, z, 0.0, 40)
    cal = calibrate_2s(0.1, 40, 40)
    li, ri = select_rd(spec)
    assert rd_mtp(spec, 0.1, calib=cal) == run_mtp_2s(y[li], y[ri], cal)
    rs = rd_mtp(spec, 0.1, calib=cal)
    assert rs and all(iv.side == "below" for iv in rs)


def test_rd_local_randomisation_fwer():
    # outcome law flat in z within the window, no jump: every rejection is false
    q, R = 20, 2000
    cal = calibrate_2s(0.1, q, q)
    g = RngStream(4).generator(0)
    hits = 0
    for _ in range(R):
        z = g.uniform(-1, 1, 120)
        y = g.normal(size=120)
        hits += not rd_mtp(RdSpec(y, z, 0.0, q), 0.1, calib=cal).empty
    assert hits / R <= 0.1 + 3 * math.sqrt(0.09 / R)


def test_discrete_mismatch_never_ranked_first():
    g = np.random.default_rng(2)
    n = 300
    x = np.c_[g.normal(size=n), g.normal(size=n), g.integers(0, 3, n)]
    spec = CondSpec(np.zeros(n), g.integers(0, 2, n), x, [0, 0, 1], 10, 10,
                    discrete=[False, False, True], weights=[1, 1, 1e6])
    d = spec.distances()
    match = x[:, 2] == 1
    assert d[match].max() < d[~match].min()


def test_exact_cell_selects_conditional_subsample():
    g = np.random.default_rng(3)
    n = 400
    cell = g.integers(0, 4, n)
    t = g.integers(0, 2, n)
    y = g.normal(size=n)
    in_cell = cell == 2
    q0, q1 = int(np.sum(in_cell & (t == 0))), int(np.sum(in_cell & (t == 1)))
    spec = CondSpec(y, t, cell[:, None], [2], q0, q1, discrete=[True])
    i0, i1 = select_conditional(spec)
    assert set(i0) == set(np.flatnonzero(in_cell & (t == 0)))
    assert set(i1) == set(np.flatnonzero(in_cell & (t == 1)))
    assert spec.notes["cell_mismatch"] is False
    spec = CondSpec(y, t, cell[:, None], [2], q0 + 1, q1, discrete=[True])
    select_conditional(spec)
    assert spec.notes["cell_mismatch"] is True


def test_conditional_delegation_and_errors():
    g = np.random.default_rng(5)
    n = 200
    t = np.r_[np.zeros(100), np.ones(100)].astype(int)
    x = g.normal(size=n)
    y = g.normal(size=n) + 2 * t
    spec = CondSpec(y, t, x, [0.0], 30, 30)
    cal = calibrate_2s(0.1, 30, 30)
    i0, i1 = select_conditional(spec)
    rs = conditional_mtp(spec, 0.1, calib=cal)
    assert rs == run_mtp_2s(y[i0], y[i1], cal)
    assert rs and all(iv.side == "below" for iv in rs)
    with pytest.raises(InsufficientDataError):
        select_conditional(CondSpec(y, t, x, [0.0], 101, 5))
    with pytest.raises(ValueError):
        CondSpec(y, t, x, [0.0, 1.0], 5, 5)
    with pytest.raises(ValueError):
        CondSpec(y, t + 1, x, [0.0], 5, 5)


def test_conditional_fwer_near_x0():
    q, R = 50, 400
    cal = calibrate_2s(0.1, q, q)
    g = RngStream(7).generator(0)
    hits = 0
    for _ in range(R):
        x = g.uniform(-1, 1, 2000)
        t = g.integers(0, 2, 2000)
        y = g.normal(x, 1.0)
        hits += not conditional_mtp(CondSpec(y, t, x, [0.0], q, q), 0.1, calib=cal).empty
    assert hits / R <= 0.1 + 0.02 + 2 * math.sqrt(0.09 / R)


@pytest.mark.skipif(not os.environ.get("QMTP_SENATE_CSV"),
                    reason="set QMTP_SENATE_CSV to a path or URL of rdlocrand_senate.csv")
def test_senate_incumbency_window():
    import csv
    import io
    import urllib.request

    src = os.environ["QMTP_SENATE_CSV"]
    if src.startswith("http"):
        try:
            text = urllib.request.urlopen(src, timeout=30).read().decode()
        except OSError as exc:
            pytest.skip(f"could not fetch {src}: {exc}")
    else:
        text = open(src).read()
    rows = list(csv.DictReader(io.StringIO(text)))
    z = np.array([float(r["demmv"]) if r["demmv"] not in ("", "NA") else np.nan for r in rows])
    y = np.array([float(r["demvoteshfor2"]) if r["demvoteshfor2"] not in ("", "NA") else np.nan
                  for r in rows])
    ok = ~np.isnan(z) & ~np.isnan(y)
    z, y = z[ok], y[ok]
    ctrl = y[(z >= -0.75) & (z < 0)]
    treat = y[(z > 0) & (z < 0.75)]
    cal = calibrate_2s(0.05, ctrl.size, treat.size, "lower", rng=RngStream(1))
    rs = run_mtp_2s(ctrl, treat, cal)
    assert rs and all(iv.side == "below" for iv in rs)
    covered = sum(min(iv.r_hi, 56.6) - max(iv.r_lo, 43.2) for iv in rs if iv.r_hi > 43.2 and iv.r_lo < 56.6)
    assert covered / (56.6 - 43.2) > 0.5
