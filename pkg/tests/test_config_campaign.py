import csv
import io
import json
import math

import numpy as np
import pytest

from aerothrow.campaign import (CSV_COLUMNS, ExportError, aggregate, csv_text, export_results, landing_stats,
                                read_traces, run_campaign, trace_record)
from aerothrow.cli import main
from aerothrow.config import bundled, bundled_scenarios, load_scenario, scenario_from_dict
from aerothrow.errors import InvalidConfigError, InvalidInputError
from aerothrow.sim import FlightResult


# -- configuration ------------------------------------------------------------------

def test_bundled_scenarios_load_and_validate():
    names = set(bundled_scenarios())
    assert {"drop", "throw4m", "t1_v49", "t1_v22", "t1_v25", "t2_v43", "t2_v23", "t2_v26"} <= names
    for n in names:
        sc = bundled(n)
        assert sc.scenario_id == n
    for n in ("t1_v49", "t1_v22", "t1_v25"):
        sc = bundled(n)
        assert sc.planner.a_max == sc.reference_a_max and sc.actuator_delay == 0.0
    for n in ("t2_v43", "t2_v23", "t2_v26"):
        assert bundled(n).actuator_delay == pytest.approx(0.04)
    with pytest.raises(InvalidConfigError):
        bundled("nope")


def test_unknown_keys_are_rejected():
    with pytest.raises(InvalidConfigError, match="unknown"):
        scenario_from_dict({"scenario_id": "x", "colour": "red"})
    with pytest.raises(InvalidConfigError, match="planner"):
        scenario_from_dict({"planner": {"tauu": 0.1}})
    with pytest.raises(InvalidConfigError):
        scenario_from_dict({"trigger": "sometimes"})
    with pytest.raises(InvalidConfigError):
        scenario_from_dict({"rates": {"sim_hz": 1000, "sensor_hz": 300, "control_hz": 100}})


def test_toml_and_json_load_identically(tmp_path):
    toml = tmp_path / "s.toml"
    toml.write_text('scenario_id = "t"\nseed = 3\ntrigger = "reassess"\n'
                    '[planner]\nstart = [0, 0, 1]\ngoal = [4, 0, 1]\ntarget = [2.5, 0, 0]\ntau = 0.2\n'
                    '[payload]\nmass = 0.1\n')
    js = tmp_path / "s.json"
    js.write_text(json.dumps({"scenario_id": "t", "seed": 3, "trigger": "reassess",
                              "planner": {"start": [0, 0, 1], "goal": [4, 0, 1], "target": [2.5, 0, 0], "tau": 0.2},
                              "payload": {"mass": 0.1}}))
    a, b = load_scenario(toml), load_scenario(js)
    assert a.to_dict() == b.to_dict()
    assert a.planner.tau == 0.2 and a.payload.mass == 0.1 and a.trigger == "reassess"
    # the plain-dict form round trips
    assert scenario_from_dict(a.to_dict()).to_dict() == a.to_dict()
    with pytest.raises(InvalidConfigError):
        load_scenario(tmp_path / "missing.json")


# -- statistics ----------------------------------------------------------------------

def test_landing_stats_examples():
    rmse, mean, med, mx = landing_stats([0.03, 0.04])
    assert rmse == pytest.approx(0.035355, abs=1e-6) and mx == 0.04 and mean == pytest.approx(0.035)
    assert landing_stats([0.021]) == (0.021, 0.021, 0.021, 0.021)
    assert all(math.isnan(v) for v in landing_stats([]))


def fake(sid, seed, err, failed=False, trig="nominal", abl="full"):
    f = FlightResult(sid, seed, trig, abl, failed=failed, reason="boom" if failed else "")
    if not failed:
        f.landing_error, f.release_time, f.v_release, f.tracking_rmse = err, 1.0 + seed, 2.0, 0.01
        f.landing_point = np.array([err, 0.0, 0.0])
    f.observer_trace = [(0.0, 0.0, 0.0, -1.962), (0.01, 0.0, 0.0, -1.9)]
    f.state_log = [(0.0, *range(13))]
    return f


def test_failures_are_excluded_and_reported():
    res = aggregate([fake("a", 1, 0.04), fake("a", 0, 0.03), fake("a", 2, 0.0, failed=True)])
    cell = res.cell("a", "nominal", "full")
    assert cell.n == 2 and cell.n_failed == 1
    assert cell.rmse == pytest.approx(0.035355, abs=1e-6) and cell.max == 0.04
    table = res.table()
    assert "failed flights: 1" in table and "boom" in table
    assert [f.seed for f in res.flights] == [0, 1, 2]


def test_csv_layout_and_empty_campaign(tmp_path):
    assert csv_text([]) == ",".join(CSV_COLUMNS) + "\n"
    text = csv_text([fake("a", 5, 0.0123)])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == list(CSV_COLUMNS)
    assert rows[1] == ["a", "5", "nominal", "full", "2.0", "0.0123", "6.0", "0.01", "false"]
    paths = export_results(aggregate([]), tmp_path / "empty")
    assert paths["csv"].read_text() == ",".join(CSV_COLUMNS) + "\n"


def test_trace_round_trip(tmp_path):
    flights = [fake("a", 0, 0.03), fake("b", 1, 0.0, failed=True)]
    paths = export_results(flights, tmp_path)
    back = read_traces(paths["traces"])
    expect = [json.loads(json.dumps(trace_record(f))) for f in flights]
    assert back == expect
    assert back[0]["observer_trace"] == [list(r) for r in flights[0].observer_trace]
    plots = json.loads(paths["plots"].read_text())
    assert plots["flights"][0]["f_ext_hat"][0] == [0.0, 0.0, -1.962]


def test_export_error_carries_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ExportError) as err:
        export_results([fake("a", 0, 0.01)], blocker / "sub")
    assert "file" in str(err.value)


# -- campaigns -----------------------------------------------------------------------

def test_campaign_repeats_one_and_determinism():
    sc = bundled("drop")
    with pytest.raises(InvalidInputError):
        run_campaign([sc], repeats=0)
    one = run_campaign([sc], repeats=1)
    c = one.cells[0]
    assert c.n == 1 and c.rmse == c.mean == c.max == one.flights[0].landing_error
    a = run_campaign([sc], seeds=[3, 4], triggers=["nominal", "reassess"])
    b = run_campaign([sc], seeds=[4, 3], triggers=["reassess", "nominal"], workers=2)
    assert csv_text(a.flights) == csv_text(b.flights)
    assert a.table() == b.table()


def test_cli_plan_fly_and_errors(tmp_path, capsys):
    assert main(["plan", "--scenario", "drop", "--out", str(tmp_path)]) == 0
    plan = json.loads((tmp_path / "drop_plan.json").read_text())
    assert plan["tau"] == 0.3 and len(plan["durations"]) == 4
    assert main(["fly", "--scenario", "drop", "--seed", "2", "--trigger", "reassess", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "drop_seed2.csv")))
    assert rows[0]["trigger_mode"] == "reassess" and rows[0]["failed"] == "false"
    assert main(["fly", "--scenario", "no_such_scenario", "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["fly", "--scenario", "drop", "--ablation", "half"])
