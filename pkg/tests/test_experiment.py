import json
import math

import numpy as np
import pytest

from swiptnoma import experiment as ex
from swiptnoma.netmodel import ConfigError, Scenario, scenario_to_dict
from swiptnoma.sca import ScaSettings

# Student-t 0.975 quantiles by degrees of freedom (table values)
T975 = {1: 12.706204736174698, 2: 4.302652729749464, 3: 3.182446305284263, 4: 2.7764451051977987}

TINY = Scenario().with_overrides(n_cells=1, pairs_per_cell=1, antennas=2)


def _spec(tmp_path, **kw):
    base = dict(scenario=TINY, axis="antennas", values=[2, 3, 4], algorithms=["ps-maxmin", "ts-maxmin"],
                trials=5, seed_base=10, output=str(tmp_path / "out"), settings=ScaSettings(max_iters=6))
    base.update(kw)
    return ex.ExperimentSpec(**base)


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sweep")
    spec = _spec(tmp)
    paths = ex.run_experiment(spec)
    return spec, paths


def test_detail_has_one_row_per_trial(sweep):
    spec, paths = sweep
    rows = ex.read_detail(paths["detail"].read_text())
    assert len(rows) == 3 * 2 * 5
    assert [r["seed"] for r in rows[:5]] == ["10", "11", "12", "13", "14"]
    assert {r["value"] for r in rows} == {"2", "3", "4"}
    assert all(r["unit"] == "bits/s/Hz" for r in rows)


def test_golden_headers(sweep):
    _, paths = sweep
    assert paths["detail"].read_text().splitlines()[0] == (
        "schema,axis,value,algorithm,trial,seed,status,objective,unit,iterations,min_rate_bits,"
        "sum_rate_bits,ee_bits_per_hz_per_w,ee_bits_per_joule")
    assert paths["aggregate"].read_text().splitlines()[0] == (
        "schema,axis,value,algorithm,trials,feasible,mean,ci95,unit")
    assert paths["timing"].read_text().splitlines()[0] == "axis,value,algorithm,trial,wall_time_s"


def test_aggregates_recomputable(sweep):
    _, paths = sweep
    rows = ex.read_detail(paths["detail"].read_text())
    aggs = ex.read_detail(paths["aggregate"].read_text())
    assert len(aggs) == 6
    for a in aggs:
        vals = [float(r["objective"]) for r in rows if r["value"] == a["value"] and r["algorithm"] == a["algorithm"]
                and r["status"] != "infeasible"]
        assert int(a["feasible"]) == len(vals) and int(a["trials"]) == 5
        assert float(a["mean"]) == pytest.approx(np.mean(vals), rel=1e-9)
        half = T975[len(vals) - 1] * np.std(vals, ddof=1) / math.sqrt(len(vals))
        assert float(a["ci95"]) == pytest.approx(half, rel=1e-8)


def test_objective_equals_min_rate_for_maxmin(sweep):
    _, paths = sweep
    for r in ex.read_detail(paths["detail"].read_text()):
        assert float(r["objective"]) == pytest.approx(float(r["min_rate_bits"]), rel=1e-9)
        assert float(r["ee_bits_per_joule"]) == pytest.approx(float(r["ee_bits_per_hz_per_w"]) * TINY.network.bandwidth, rel=1e-9)


def test_rerun_is_byte_identical(sweep, tmp_path):
    spec, paths = sweep
    again = ex.run_experiment(_spec(tmp_path))
    assert again["detail"].read_bytes() == paths["detail"].read_bytes()
    assert again["aggregate"].read_bytes() == paths["aggregate"].read_bytes()


def test_infeasible_counted_not_averaged():
    def tr(obj, status):
        return ex.TrialResult("antennas", 4, "ps-maxmin", 0, 0, status, obj, 1, obj, obj, 0.0, 0.0, 0.0)
    aggs = ex.aggregate([tr(1.0, "converged"), tr(3.0, "max-iters"), tr(float("nan"), "infeasible")])
    assert aggs[0].trials == 3 and aggs[0].feasible == 2 and aggs[0].mean == 2.0


def test_mean_ci_edge_cases():
    assert math.isnan(ex.mean_ci([])[0])
    m, h = ex.mean_ci([2.0])
    assert m == 2.0 and math.isnan(h)
    assert ex.mean_ci([1.0, 1.0, 1.0]) == (1.0, 0.0)


def test_noise_axis_moves_both_noises():
    spec = ex.ExperimentSpec(Scenario(), "noise_psd_dbm_hz", [-160.0], ["ps-maxmin"])
    s = spec.scenario_at(-160.0)
    assert s.power.noise_psd == pytest.approx(1e-19)
    assert s.power.circuit_noise_psd == pytest.approx(1e-19)


def test_qos_axis_in_bits():
    s = ex.ExperimentSpec(Scenario(), "qos_rate_bits", [1.0], ["ps-ee"]).scenario_at(1.0)
    assert s.power.qos_rate == pytest.approx(math.log(2))


def test_save_traces(tmp_path):
    spec = _spec(tmp_path, values=[2], algorithms=["ps-maxmin"], trials=1, save_traces=True)
    paths = ex.run_experiment(spec)
    trace = (tmp_path / "out" / "traces" / "ps-maxmin_2_0.csv").read_text()
    assert trace.startswith("phase,iteration,objective")
    assert "wall_time" not in trace.splitlines()[0]
    assert paths["detail"].exists()


@pytest.mark.parametrize("bad", [dict(axis="bandwidth"), dict(values=[]), dict(algorithms=["ps-sumrate"]),
                                 dict(algorithms=[]), dict(trials=0), dict(workers=0)])
def test_spec_validation(tmp_path, bad):
    with pytest.raises(ConfigError):
        _spec(tmp_path, **bad).validate()


def test_spec_roundtrip(tmp_path):
    spec = _spec(tmp_path)
    again = ex.spec_from_dict(json.loads(json.dumps(ex.spec_to_dict(spec))))
    assert again == spec


def test_spec_scenario_by_path(tmp_path):
    (tmp_path / "scen.json").write_text(json.dumps(scenario_to_dict(TINY)))
    (tmp_path / "spec.json").write_text(json.dumps(
        {"scenario": "scen.json", "sweep": {"axis": "antennas", "values": [2]}, "algorithms": ["ps-maxmin"]}))
    spec = ex.load_spec(tmp_path / "spec.json")
    assert spec.scenario == TINY and spec.trials == 20


def test_spec_errors_report_line(tmp_path):
    p = tmp_path / "spec.json"
    p.write_text('{\n  "sweep": {"axis": "antennas", "values": [4]},\n  "algorithms": ["nope"]\n}\n')
    with pytest.raises(ConfigError, match=r"spec\.json:3"):
        ex.load_spec(p)
    p.write_text('{\n  "sweep": {"axis": "antennas",\n  "values": [4]\n')
    with pytest.raises(ConfigError, match=r"spec\.json:\d+:\d+"):
        ex.load_spec(p)
    p.write_text('{"sweep": {"axis": "antennas", "values": [4]}, "algorithms": ["ps-maxmin"], "bogus": 1}')
    with pytest.raises(ConfigError, match="bogus"):
        ex.load_spec(p)
    with pytest.raises(ConfigError):
        ex.load_spec(tmp_path / "missing.json")


def test_packaged_configs_parse():
    from pathlib import Path
    for p in sorted((Path(__file__).parents[1] / "configs").glob("*.json")):
        spec = ex.load_spec(p)
        assert spec.algorithms and spec.values


def test_validate_bounds_rows():
    rep = ex.validate_bounds(seed=0, samples=5_000)
    assert rep.passed and len(rep.rows) == 4
    lines = rep.to_csv().splitlines()
    assert lines[0] == "name,samples,max_violation,max_tightness_error,violations,result" and len(lines) == 5
    assert not ex.validate_bounds(seed=0, samples=5_000, sign_flip=True).passed
