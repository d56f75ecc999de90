import math

import numpy as np
import pytest

from swiptnoma import perf
from swiptnoma.netmodel import Scenario, generate_instance
from swiptnoma.sca import ALGORITHMS, InfeasibleScenario, ScaSettings, Scaled, run
from swiptnoma.sca import driver, ps, ts
from swiptnoma.sca.common import TRACE_COLUMNS

SMALL = Scenario().with_overrides(n_cells=2, pairs_per_cell=1, antennas=3)
FAST = ScaSettings(max_iters=8)


@pytest.fixture(scope="module")
def small_sc():
    return Scaled(generate_instance(SMALL, 3))


@pytest.fixture(scope="module")
def default_sc(default_instance):
    return Scaled(default_instance)


@pytest.fixture(scope="module")
def runs():
    inst = generate_instance(SMALL, 3)
    return {alg: run(inst, alg, FAST) for alg in ALGORITHMS}


# settings -----------------------------------------------------------------------------

@pytest.mark.parametrize("bad", [dict(max_iters=0), dict(rel_obj_tol=0.0), dict(rho_grid=()),
                                 dict(rho_grid=(0.5, 1.0)), dict(restarts=0), dict(oma_tau=1.0)])
def test_settings_validation(bad):
    with pytest.raises(ValueError):
        ScaSettings(**bad).validate()


def test_unknown_algorithm(default_instance):
    with pytest.raises(ValueError, match="unknown algorithm"):
        run(default_instance, "ts-sumrate")


# scaled view ------------------------------------------------------------------------------

def test_scaled_units_preserve_snr(default_sc, rng):
    inst = default_sc.inst
    w = rng.standard_normal((3, 4, 4)) + 1j * rng.standard_normal((3, 4, 4))
    x = default_sc.beams_real(w)
    assert np.allclose(default_sc.beams_complex(x, 4), w)
    u = w / default_sc.scale
    assert abs(default_sc.g[0, 1, 2] @ u[0, 3]) ** 2 == pytest.approx(
        abs(inst.channels[0, 1, 2] @ w[0, 3]) ** 2 / inst.sigma2, rel=1e-12)


# initialization ----------------------------------------------------------------------------

def test_ps_init_feasible(default_sc):
    s = ps.init_ps(default_sc, ScaSettings(), np.random.default_rng(0))
    assert perf.audit_ps(default_sc.inst, s).ok(1e-6)
    assert np.all(s.R > 0)


def test_oma_init_feasible(default_sc):
    s = ps.init_ps(default_sc, ScaSettings(), np.random.default_rng(0), oma=True)
    assert ps.audit(default_sc, s, True, 0.5, False).ok(1e-6)


def test_ts_init_feasible(default_sc):
    s = ts.init_ts(default_sc, ScaSettings(), np.random.default_rng(0))
    assert perf.audit_ts(default_sc.inst, s).ok(1e-6)
    assert 0 < s.rho < 1


def test_zero_threshold_init(tiny_scenario):
    sc = Scaled(generate_instance(tiny_scenario.with_overrides(eh_threshold=0.0), 0))
    trace = driver.IterationTrace("ps-maxmin")
    s = ps.init_ps(sc, ScaSettings(), np.random.default_rng(0), trace=trace)
    assert len(trace.rows) == 1 and perf.audit_ps(sc.inst, s).ok(1e-9)
    t = ts.init_ts(sc, ScaSettings(), np.random.default_rng(0))
    assert t.rho >= 1 - ts.THETA_CAP - 1e-12
    state, trace = run(sc.inst, "ts-maxmin", FAST)
    assert state is not None and trace.outcome in ("converged", "max-iters")


# one step ----------------------------------------------------------------------------------

@pytest.mark.parametrize("family", ["ps", "ts"])
def test_step_sandwich(default_sc, family):
    """surrogate at the old point == old exact value <= subproblem optimum <= new exact value."""
    rng = np.random.default_rng(0)
    if family == "ps":
        s = ps.init_ps(default_sc, ScaSettings(), rng)
        new, res, sub = ps.step(default_sc, s, "maxmin", ScaSettings())
        old_val = ps.objective_value(default_sc, s, "maxmin", False, 0.5)
        new_val = ps.objective_value(default_sc, new, "maxmin", False, 0.5)
    else:
        s = ts.init_ts(default_sc, ScaSettings(), rng)
        new, res, sub = ts.step(default_sc, s, "maxmin", ScaSettings())
        old_val = ts.objective_value(default_sc, s, "maxmin")
        new_val = ts.objective_value(default_sc, new, "maxmin")
    assert res.ok
    at_point = sub.maxmin_value(sub.point[None, :])[0]
    assert at_point == pytest.approx(old_val, rel=1e-9)
    assert old_val <= res.objective * (1 + 1e-7)
    assert res.objective <= new_val * (1 + 1e-7)


@pytest.mark.parametrize("family", ["ps", "ts"])
def test_subproblem_value_roundtrip(default_sc, family):
    rng = np.random.default_rng(1)
    if family == "ps":
        s = ps.init_ps(default_sc, ScaSettings(), rng)
        sub = ps.build_ps(default_sc, s, "maxmin")
    else:
        s = ts.init_ts(default_sc, ScaSettings(), rng)
        sub = ts.build_ts(default_sc, s, "maxmin")
    res = sub.prog.solve()
    assert sub.maxmin_value(res.x[None, :])[0] == pytest.approx(res.objective, rel=1e-6)


def test_ts_ee_surrogate_below_exact(default_sc):
    inst = default_sc.inst
    state, trace = run(inst, "ts-ee", ScaSettings(max_iters=4))
    rows = [r for r in trace.main() if r.iteration > 0]
    assert rows
    for r in rows:
        assert r.surrogate <= r.objective * (1 + 1e-7)
        assert r.t_k <= r.objective + 1e-9
    t = [r.t_k for r in rows]
    assert all(b >= a - 1e-9 for a, b in zip(t, t[1:]))


def test_best_rho_is_tight(default_sc):
    s = ts.init_ts(default_sc, ScaSettings(), np.random.default_rng(2))
    rho = ts.best_rho(default_sc, s)
    assert rho is not None and rho <= s.rho + 1e-12
    tight = perf.BeamStateTS(s.wE, s.wI, rho)
    a = perf.audit_ts(default_sc.inst, tight)
    assert a.ok(1e-9)
    assert max(a.eh, a.power) == pytest.approx(0.0, abs=1e-9)


def test_best_alpha_is_eh_tight(default_sc):
    s = ps.init_ps(default_sc, ScaSettings(), np.random.default_rng(0))
    a = perf.audit_ps(default_sc.inst, s)
    assert a.eh == pytest.approx(0.0, abs=1e-9) or np.max(s.alpha) >= ps.ALPHA_CAP - 1e-12


# full runs --------------------------------------------------------------------------------

@pytest.mark.parametrize("alg", ALGORITHMS)
def test_runs_are_monotone_and_feasible(runs, alg):
    state, trace = runs[alg]
    assert state is not None
    assert trace.outcome in ("converged", "max-iters")
    obj = trace.objectives()
    assert np.all(np.diff(obj) >= -1e-6)
    assert all(r.status != "rejected" for r in trace.main())
    kind, objective = alg.split("-")
    sc = Scaled(generate_instance(SMALL, 3))
    if kind == "ts":
        a = perf.audit_ts(sc.inst, state, qos=objective == "ee")
    else:
        a = ps.audit(sc, state, kind == "oma", 0.5, objective == "ee")
    assert a.ok(1e-6)
    assert driver.final_objective(trace) == pytest.approx(obj[-1])


@pytest.mark.parametrize("alg", ["ps-ee", "ts-ee", "oma-ee"])
def test_ee_runs_meet_qos(runs, alg):
    state, trace = runs[alg]
    assert any(r.phase == "qos" for r in trace.rows)
    sc = Scaled(generate_instance(SMALL, 3))
    R = ts.perf.achieved_rates_ts(sc.inst, state) if alg.startswith("ts") else ps.rates(
        sc, state, alg.startswith("oma"), 0.5)
    assert R.min() >= sc.r * (1 - 1e-6)


def test_infeasible_is_typed_outcome():
    inst = generate_instance(SMALL.with_overrides(eh_threshold=1.0), 0)
    for alg in ("ps-maxmin", "ts-maxmin"):
        state, trace = run(inst, alg, FAST)
        assert state is None and trace.outcome == "infeasible" and trace.message
        assert math.isnan(driver.final_objective(trace))


def test_unreachable_qos_is_infeasible():
    inst = generate_instance(SMALL.with_overrides(qos_rate=50.0), 0)
    state, trace = run(inst, "ps-ee", ScaSettings(max_iters=3))
    assert state is None and trace.outcome == "infeasible"


def test_init_raises_typed_error():
    sc = Scaled(generate_instance(SMALL.with_overrides(eh_threshold=1.0), 0))
    with pytest.raises(InfeasibleScenario):
        ps.init_ps(sc, ScaSettings(init_max_iters=3), np.random.default_rng(0))


def test_deterministic_traces():
    inst = generate_instance(SMALL, 5)
    a = run(inst, "ts-maxmin", FAST)[1].to_csv(with_time=False)
    b = run(inst, "ts-maxmin", FAST)[1].to_csv(with_time=False)
    assert a == b
    c = run(inst, "ts-maxmin", ScaSettings(max_iters=8, seed=1))[1].to_csv(with_time=False)
    assert c != a


def test_restarts_keep_best():
    inst = generate_instance(SMALL, 5)
    one = driver.final_objective(run(inst, "ps-maxmin", FAST)[1])
    best = driver.final_objective(run(inst, "ps-maxmin", ScaSettings(max_iters=8, restarts=3))[1])
    assert best >= one - 1e-9


def test_trace_csv_layout(runs):
    trace = runs["ps-maxmin"][1]
    lines = trace.to_csv().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) == len(trace.rows) + 1
    assert trace.to_csv(with_time=False).splitlines()[0] == ",".join(TRACE_COLUMNS[:-1])
    assert trace.iterations == len(trace.main()) - 1


def test_scaling_invariance():
    """Scaling every power (P^max, e^min, both noises) by one constant leaves max-min rates unchanged."""
    base = SMALL
    p = base.power
    big = base.with_overrides(p_max=p.p_max * 10, eh_threshold=p.eh_threshold * 10,
                              noise_psd=p.noise_psd * 10, circuit_noise_psd=p.circuit_noise_psd * 10)
    a_inst, b_inst = generate_instance(base, 4), generate_instance(big, 4)
    assert np.allclose(a_inst.channels, b_inst.channels)
    a, ta = run(a_inst, "ps-maxmin", FAST)
    b, tb = run(b_inst, "ps-maxmin", FAST)
    # identical start, then agreement up to solver tolerance accumulated along the path
    assert ta.objectives()[0] == pytest.approx(tb.objectives()[0], rel=1e-12)
    assert np.allclose(ta.objectives(), tb.objectives(), rtol=1e-4)
