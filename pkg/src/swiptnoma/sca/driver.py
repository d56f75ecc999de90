"""Iteration control shared by the six algorithms."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import perf
from ..netmodel import NetworkInstance
from . import ps, ts
from .common import InfeasibleScenario, IterationTrace, ScaSettings, Scaled, TraceRow

ALGORITHMS = ("ps-maxmin", "ps-ee", "ts-maxmin", "ts-ee", "oma-maxmin", "oma-ee")


@dataclass
class _Family:
    """Closures binding one receiver family to a common step/evaluate/audit interface."""

    init: Callable
    step: Callable              # (state, objective, qos) -> (new | None, res, sub)
    value: Callable             # (state, objective) -> float
    audit: Callable             # (state, qos) -> perf.Audit
    surrogate: Callable         # (res, sub, objective) -> float


def _family(sc: Scaled, kind: str, settings: ScaSettings) -> _Family:
    if kind == "ts":
        def surrogate(res, sub, objective):
            if objective == "maxmin":
                return float(res.objective)
            return float(res.value(sub.f)[0] / res.value(sub.g)[0])

        return _Family(
            init=lambda rng, trace: ts.init_ts(sc, settings, rng, trace=trace),
            step=lambda st, obj, qos: ts.step(sc, st, obj, settings, qos=qos),
            value=lambda st, obj: ts.objective_value(sc, st, obj),
            audit=lambda st, qos: perf.audit_ts(sc.inst, st, qos=qos),
            surrogate=surrogate,
        )
    oma = kind == "oma"
    tau = settings.oma_tau

    def surrogate(res, sub, objective):
        if objective == "maxmin":
            return float(res.objective)
        return 1.0 / float(res.objective) if res.objective > 0 else np.inf

    return _Family(
        init=lambda rng, trace: ps.init_ps(sc, settings, rng, oma=oma, tau=tau, trace=trace),
        step=lambda st, obj, qos: ps.step(sc, st, obj, settings, oma=oma, tau=tau, qos=qos),
        value=lambda st, obj: ps.objective_value(sc, st, obj, oma, tau),
        audit=lambda st, qos: ps.audit(sc, st, oma, tau, qos),
        surrogate=surrogate,
    )


def _iterate(fam: _Family, state, objective: str, qos: bool, settings: ScaSettings, trace: IterationTrace,
             phase: str, stop_at: float | None = None):
    """Path-following loop; returns ``(state, outcome)``.

    ``stop_at`` ends the loop early once the exact objective reaches it
    (used to reach the QoS targets before an EE run).
    """
    t0 = time.perf_counter()
    obj = fam.value(state, objective)
    a = fam.audit(state, qos)
    trace.append(TraceRow(0, obj, np.nan, "start", a.eh, a.power, wall_time=0.0, phase=phase))
    for k in range(1, settings.max_iters + 1):
        if stop_at is not None and obj >= stop_at:
            return state, "converged"
        t_k = obj if objective == "ee" else np.nan
        new, res, sub = fam.step(state, objective, qos)
        wall = time.perf_counter() - t0
        if new is None:
            trace.append(TraceRow(k, obj, np.nan, res.status, np.nan, np.nan, t_k, wall, phase))
            return state, "solver-failure"
        val = fam.value(new, objective)
        a = fam.audit(new, qos)
        row = TraceRow(k, val, fam.surrogate(res, sub, objective), res.status, a.eh, a.power, t_k, wall, phase)
        if val < obj - settings.feas_tol or not a.ok(settings.feas_tol):
            row.status = "rejected"
            trace.append(row)
            return state, "rejected-step"
        trace.append(row)
        done = abs(val - obj) < settings.rel_obj_tol * max(abs(obj), 1e-12)
        state, obj = new, val
        if done:
            return state, "converged"
    return state, "max-iters"


def _run_once(sc: Scaled, algorithm: str, settings: ScaSettings, rng: np.random.Generator):
    kind, objective = algorithm.split("-")
    fam = _family(sc, kind, settings)
    trace = IterationTrace(algorithm)
    try:
        state = fam.init(rng, trace)
        if objective == "ee":
            # reach the QoS targets with max-min steps, then switch objectives
            target = sc.r * (1 + 1e-9)
            state, outcome = _iterate(fam, state, "maxmin", False, settings, trace, "qos", stop_at=target)
            if fam.value(state, "maxmin") < target:
                raise InfeasibleScenario(f"QoS targets unreachable (max-min phase ended: {outcome})")
    except InfeasibleScenario as exc:
        trace.outcome, trace.message = "infeasible", str(exc)
        return None, trace
    state, trace.outcome = _iterate(fam, state, objective, objective == "ee", settings, trace, "main")
    return state, trace


def run(inst: NetworkInstance, algorithm: str, settings: ScaSettings | None = None):
    """Initialize and iterate ``algorithm`` on ``inst``; returns ``(final state or None, trace)``.

    With several restarts the run with the best final exact objective is kept.
    A state of None means no feasible point was found (trace outcome "infeasible").
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    settings = settings or ScaSettings()
    settings.validate()
    sc = Scaled(inst)
    rng = np.random.default_rng([settings.seed, inst.seed])
    best = None
    for _ in range(settings.restarts):
        state, trace = _run_once(sc, algorithm, settings, rng)
        if best is None or (state is not None and (best[0] is None or final_objective(trace) > final_objective(best[1]))):
            best = (state, trace)
    return best


def final_objective(trace: IterationTrace) -> float:
    """Exact objective of the last accepted iterate (NaN when infeasible)."""
    if trace.outcome == "infeasible":
        return float("nan")
    rows = [r for r in trace.main() if r.status != "rejected" and not np.isnan(r.objective)]
    return rows[-1].objective if rows else float("nan")
