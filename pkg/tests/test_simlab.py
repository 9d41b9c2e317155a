import csv
import io
import json
import math

import numpy as np
import pytest

from qmtp.calibrate import tilde_alpha_formula
from qmtp.rng import RngStream
from qmtp.simlab import (Dgp, SCENARIOS, SimReport, empirical_data, intro_dataset, run_fwer_table,
                         run_pointwise_rp, run_power_table, run_scenario)


def test_same_seed_same_report():
    a = run_fwer_table("table1", 5_000, RngStream(2024), rows=[0])
    b = run_fwer_table("table1", 5_000, RngStream(2024), rows=[0])
    assert a.to_json() == b.to_json()
    c = run_fwer_table("table1", 5_000, RngStream(2025), rows=[0])
    assert c.estimates != a.estimates


@pytest.mark.parametrize("name", SCENARIOS)
def test_every_scenario_runs_once(name):
    rep = run_scenario(name, 1, RngStream(0))
    assert rep.estimates
    assert all(0.0 <= v["p"] <= 1.0 for v in rep.estimates.values())
    json.loads(rep.to_json())


def test_unknown_scenario():
    with pytest.raises(ValueError):
        run_scenario("table9", 1)


def test_from_sample_knots():
    d = Dgp.from_sample([3.0, 1.0, 7.0])
    assert d.params["taus"] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert d.params["values"] == [0.0, 1.0, 3.0, 7.0, 17.0]
    assert d.quantile(np.array([0.25, 0.375, 0.9])).tolist() == [1.0, 2.0, 13.0]
    assert d.cdf_int(np.array([0]))[0] == pytest.approx(0.25)


def test_piecewise_rejects_bad_knots():
    with pytest.raises(ValueError):
        Dgp.piecewise([0, 0.5, 1], [0, 2, 1])
    with pytest.raises(ValueError):
        Dgp.piecewise([0.1, 1], [0, 1])


def test_report_se_and_csv():
    rep = SimReport("x", 400, {})
    rep.add("a", 40, ref=0.1)
    assert rep.p("a") == 0.1
    assert rep.se("a") == pytest.approx(math.sqrt(0.09 / 400))
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["key", "p", "se", "R", "reference"]
    assert rows[1][0] == "a" and float(rows[1][1]) == 0.1 and rows[1][4] == "0.1"


def test_pointwise_dirichlet_is_flat():
    n, R = 20, 100_000
    rep = run_pointwise_rp("dirichlet", None, n, 0.1, R, RngStream(5), sides="lower")
    tail = tilde_alpha_formula(0.1, n) / 2
    rp = rep.curves["dirichlet"]["rp"]
    assert np.all(np.abs(rp - tail) < 4 * math.sqrt(tail * (1 - tail) / R))


def test_power_increases_with_shift():
    rep = run_power_table(4_000, RngStream(1), rows=[0, 1])
    keys = sorted(rep.estimates)
    assert all(rep.p(k) > 0.15 for k in keys)


def test_table2_first_row_small_run():
    rep = run_fwer_table("table2", 200, RngStream(3), rows=[1])
    for name in ("dirichlet", "stepdown", "pre_step"):
        p = rep.p(f"row1/{name}")
        assert p == pytest.approx(0.1, abs=0.07)
    assert rep.notes["row1/superset_violations"] == 0


def test_intro_and_empirical_data():
    x = intro_dataset()
    assert x.size == 20 and np.all(np.diff(x) > 0)
    for task in ("library", "fundraising"):
        c, t = empirical_data(task)
        assert c.size >= 5 and t.size >= 5
    with pytest.raises(ValueError):
        empirical_data("senate")
