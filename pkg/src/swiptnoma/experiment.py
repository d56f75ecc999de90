"""Monte-Carlo sweeps over the algorithms and CSV emission.

Three files are written per experiment:

``detail.csv``
    one row per (sweep value, algorithm, trial); deterministic for a fixed seed base.
``aggregate.csv``
    mean and 95% confidence half-width over the feasible trials of each cell.
``timing.csv``
    wall-clock seconds per detail row (kept apart so ``detail.csv`` is reproducible byte for byte).
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import stats

from . import perf, surrogate
from .netmodel import (ConfigError, Scenario, bits_to_nats, dbm_to_watt, generate_instance, load_scenario,
                       nats_to_bits, scenario_from_dict, scenario_to_dict, default_scenario_path)
from .sca import ALGORITHMS, ScaSettings, final_objective, run

SCHEMA_VERSION = 1
DETAIL_COLUMNS = ("schema", "axis", "value", "algorithm", "trial", "seed", "status", "objective", "unit",
                  "iterations", "min_rate_bits", "sum_rate_bits", "ee_bits_per_hz_per_w", "ee_bits_per_joule")
AGGREGATE_COLUMNS = ("schema", "axis", "value", "algorithm", "trials", "feasible", "mean", "ci95", "unit")
TIMING_COLUMNS = ("axis", "value", "algorithm", "trial", "wall_time_s")

# sweep axis -> how a value modifies the scenario
AXES = {
    "antennas": lambda v: {"antennas": int(v)},
    "p_max_dbm": lambda v: {"p_max": dbm_to_watt(float(v))},
    # both receiver noises move together, as in the default where they are equal
    "noise_psd_dbm_hz": lambda v: {"noise_psd": dbm_to_watt(float(v)), "circuit_noise_psd": dbm_to_watt(float(v))},
    "qos_rate_bits": lambda v: {"qos_rate": bits_to_nats(float(v))},
}


@dataclass
class ExperimentSpec:
    scenario: Scenario
    axis: str
    values: list
    algorithms: list[str]
    trials: int = 20
    seed_base: int = 0
    output: str = "results"
    settings: ScaSettings = field(default_factory=ScaSettings)
    workers: int = 1
    save_traces: bool = False

    def validate(self) -> None:
        if self.axis not in AXES:
            raise ConfigError(f"sweep axis must be one of {sorted(AXES)}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep values must be a nonempty list")
        if not self.algorithms:
            raise ConfigError("algorithm list must be nonempty")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithms {bad}; expected a subset of {list(ALGORITHMS)}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for v in self.values:
            self.scenario_at(v).validate()
        try:
            self.settings.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def scenario_at(self, value) -> Scenario:
        return self.scenario.with_overrides(**AXES[self.axis](value))


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for n, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return n
    return None


def spec_from_dict(data: dict[str, Any], base_dir: Path | None = None) -> ExperimentSpec:
    """Build a spec from its JSON form.

    ``scenario`` may be an inline scenario object or a path (relative to the
    spec file); when absent the packaged default scenario is used.
    """
    if not isinstance(data, dict):
        raise ConfigError("experiment spec must be a JSON object")
    known = {"scenario", "sweep", "algorithms", "trials", "seed_base", "output", "settings", "workers", "save_traces"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown spec fields {sorted(unknown)}")
    scen = data.get("scenario")
    if scen is None:
        scenario = load_scenario(default_scenario_path())
    elif isinstance(scen, str):
        path = Path(scen)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        scenario = load_scenario(path)
    else:
        scenario = scenario_from_dict(scen)
    sweep = data.get("sweep")
    if not isinstance(sweep, dict) or "axis" not in sweep or "values" not in sweep:
        raise ConfigError('"sweep" must be an object with "axis" and "values"')
    raw_settings = data.get("settings", {})
    names = {f.name for f in fields(ScaSettings)}
    bad = set(raw_settings) - names
    if bad:
        raise ConfigError(f"unknown settings fields {sorted(bad)}")
    if "rho_grid" in raw_settings:
        raw_settings = dict(raw_settings, rho_grid=tuple(raw_settings["rho_grid"]))
    try:
        spec = ExperimentSpec(
            scenario=scenario,
            axis=sweep["axis"],
            values=list(sweep["values"]),
            algorithms=list(data.get("algorithms", [])),
            trials=int(data.get("trials", 20)),
            seed_base=int(data.get("seed_base", 0)),
            output=str(data.get("output", "results")),
            settings=ScaSettings(**raw_settings),
            workers=int(data.get("workers", 1)),
            save_traces=bool(data.get("save_traces", False)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    spec.validate()
    return spec


def load_spec(path: str | Path) -> ExperimentSpec:
    """Parse an experiment spec file; errors carry ``path:line`` where the offending key appears."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return spec_from_dict(data, path.parent)
    except ConfigError as exc:
        msg = str(exc)
        for key in ("sweep", "axis", "values", "algorithms", "trials", "workers", "settings", "scenario"):
            if key in msg:
                line = _line_of(text, key)
                if line is not None:
                    raise ConfigError(f"{path}:{line}: {msg}") from exc
        raise ConfigError(f"{path}: {msg}") from exc


# ── execution ─────────────────────────────────────────────────────────────────

@dataclass
class TrialResult:
    axis: str
    value: Any
    algorithm: str
    trial: int
    seed: int
    status: str
    objective: float            # bits/s/Hz (max-min) or bits/s/Hz per watt (EE); NaN when infeasible
    iterations: int
    min_rate_bits: float
    sum_rate_bits: float
    ee_normalized: float        # bits/s/Hz per watt
    ee_bits_per_joule: float    # the same scaled by the bandwidth
    wall_time: float
    trace_csv: str = ""

    @property
    def unit(self) -> str:
        return "bits/s/Hz/W" if self.algorithm.endswith("-ee") else "bits/s/Hz"

    @property
    def feasible(self) -> bool:
        return self.status != "infeasible" and math.isfinite(self.objective)


def _achieved(inst, algorithm: str, state, tau: float) -> tuple[np.ndarray, float]:
    """Final per-user rates and energy efficiency (nats), NaN when there is no state."""
    if state is None:
        return np.full(1, np.nan), float("nan")
    if algorithm.startswith("ts"):
        return perf.achieved_rates_ts(inst, state), perf.ee_objective_ts(inst, state)
    if algorithm.startswith("oma"):
        plan = perf.OMAPlan(tau)
        return perf.oma_rates(inst, state.w, state.alpha, plan), perf.ee_objective_oma(inst, state.w, state.alpha, plan)
    return perf.achieved_rates_ps(inst, state), perf.ee_objective_ps(inst, state)


def run_trial(scenario: Scenario, axis: str, value, algorithm: str, trial: int, seed: int,
              settings: ScaSettings, keep_trace: bool = False) -> TrialResult:
    """One optimizer run on one channel draw.  Pure function of its arguments (except wall time)."""
    t0 = time.perf_counter()
    inst = generate_instance(scenario, seed)
    state, trace = run(inst, algorithm, settings)
    wall = time.perf_counter() - t0
    R, ee = _achieved(inst, algorithm, state, settings.oma_tau)
    ee_bits = float(nats_to_bits(ee))
    return TrialResult(
        axis=axis, value=value, algorithm=algorithm, trial=trial, seed=seed, status=trace.outcome,
        objective=float(nats_to_bits(final_objective(trace))), iterations=trace.iterations,
        min_rate_bits=float(nats_to_bits(np.min(R))), sum_rate_bits=float(nats_to_bits(np.sum(R))),
        ee_normalized=ee_bits, ee_bits_per_joule=ee_bits * scenario.network.bandwidth,
        wall_time=wall, trace_csv=trace.to_csv(with_time=False) if keep_trace else "",
    )


def _task(args):
    return run_trial(*args)


def trial_tasks(spec: ExperimentSpec) -> list[tuple]:
    """Tasks in canonical (value, algorithm, trial) order.  Trial ``t`` uses seed ``seed_base + t`` everywhere."""
    out = []
    for value in spec.values:
        scen = spec.scenario_at(value)
        for alg in spec.algorithms:
            for t in range(spec.trials):
                out.append((scen, spec.axis, value, alg, t, spec.seed_base + t, spec.settings, spec.save_traces))
    return out


def execute(spec: ExperimentSpec, progress=None) -> list[TrialResult]:
    """Run every trial; a worker pool fans out when ``workers > 1``, results are collected in task order."""
    tasks = trial_tasks(spec)
    results: list[TrialResult] = []
    if spec.workers == 1:
        for task in tasks:
            results.append(_task(task))
            if progress:
                progress(results[-1])
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            for res in pool.map(_task, tasks):
                results.append(res)
                if progress:
                    progress(res)
    return results


# ── CSV ───────────────────────────────────────────────────────────────────────

def _num(v: float) -> str:
    return "nan" if not math.isfinite(v) else f"{v:.10g}"


def _value_str(v) -> str:
    return f"{v:g}" if isinstance(v, (int, float)) else str(v)


def detail_csv(results: Sequence[TrialResult]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(DETAIL_COLUMNS)
    for r in results:
        w.writerow([SCHEMA_VERSION, r.axis, _value_str(r.value), r.algorithm, r.trial, r.seed, r.status,
                    _num(r.objective), r.unit, r.iterations, _num(r.min_rate_bits), _num(r.sum_rate_bits),
                    _num(r.ee_normalized), _num(r.ee_bits_per_joule)])
    return out.getvalue()


def timing_csv(results: Sequence[TrialResult]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TIMING_COLUMNS)
    for r in results:
        w.writerow([r.axis, _value_str(r.value), r.algorithm, r.trial, f"{r.wall_time:.4f}"])
    return out.getvalue()


@dataclass
class Aggregate:
    axis: str
    value: Any
    algorithm: str
    trials: int
    feasible: int
    mean: float
    ci95: float
    unit: str


def mean_ci(x: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    """Sample mean and Student-t confidence half-width (NaN half-width below two samples)."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    m = float(x.mean())
    if x.size < 2:
        return m, float("nan")
    half = float(stats.t.ppf(0.5 + level / 2, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size))
    return m, half


def aggregate(results: Sequence[TrialResult]) -> list[Aggregate]:
    """Group by (value, algorithm) in first-seen order; infeasible trials are counted but not averaged."""
    groups: dict[tuple, list[TrialResult]] = {}
    for r in results:
        groups.setdefault((_value_str(r.value), r.algorithm), []).append(r)
    out = []
    for (_, alg), rows in groups.items():
        ok = [r.objective for r in rows if r.feasible]
        m, h = mean_ci(ok)
        out.append(Aggregate(rows[0].axis, rows[0].value, alg, len(rows), len(ok), m, h, rows[0].unit))
    return out


def aggregate_csv(aggs: Sequence[Aggregate]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(AGGREGATE_COLUMNS)
    for a in aggs:
        w.writerow([SCHEMA_VERSION, a.axis, _value_str(a.value), a.algorithm, a.trials, a.feasible,
                    _num(a.mean), _num(a.ci95), a.unit])
    return out.getvalue()


def read_detail(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


def run_experiment(spec: ExperimentSpec, progress=None) -> dict[str, Path]:
    """Execute ``spec`` and write detail/aggregate/timing CSVs (plus traces if requested) under ``spec.output``."""
    spec.validate()
    results = execute(spec, progress)
    out = Path(spec.output)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"detail": out / "detail.csv", "aggregate": out / "aggregate.csv", "timing": out / "timing.csv"}
    paths["detail"].write_text(detail_csv(results))
    paths["aggregate"].write_text(aggregate_csv(aggregate(results)))
    paths["timing"].write_text(timing_csv(results))
    if spec.save_traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for r in results:
            (tdir / f"{r.algorithm}_{_value_str(r.value)}_{r.trial}.csv").write_text(r.trace_csv)
    return paths


# ── bound validation ──────────────────────────────────────────────────────────

@dataclass
class ValidationReport:
    rows: list[surrogate.BoundReport]
    wall_time: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_csv(self) -> str:
        lines = ["name,samples,max_violation,max_tightness_error,violations,result"]
        lines += [r.row() for r in self.rows]
        return "\n".join(lines) + "\n"


def validate_bounds(seed: int = 0, samples: int = 100_000, tol: float = 1e-12,
                    sign_flip: bool = False) -> ValidationReport:
    """Sample every surrogate inequality; ``sign_flip`` corrupts each bound as a negative control."""
    t0 = time.perf_counter()
    rows = [
        surrogate.verify_tangent_bound(samples, seed, tol, sign_flip=sign_flip),
        surrogate.verify_lambda_bounds(samples, seed + 1, tol, with_circuit_noise=False, sign_flip=sign_flip),
        surrogate.verify_lambda_bounds(samples, seed + 2, tol, with_circuit_noise=True, sign_flip=sign_flip),
        surrogate.verify_ratio_bound(samples, seed + 3, tol, sign_flip=sign_flip),
    ]
    return ValidationReport(rows, time.perf_counter() - t0)


def spec_to_dict(spec: ExperimentSpec) -> dict[str, Any]:
    s = asdict(spec.settings)
    s["rho_grid"] = list(s["rho_grid"])
    return {"scenario": scenario_to_dict(spec.scenario), "sweep": {"axis": spec.axis, "values": list(spec.values)},
            "algorithms": list(spec.algorithms), "trials": spec.trials, "seed_base": spec.seed_base,
            "output": spec.output, "settings": s, "workers": spec.workers, "save_traces": spec.save_traces}


def with_settings(spec: ExperimentSpec, **kw) -> ExperimentSpec:
    return replace(spec, settings=replace(spec.settings, **kw))
