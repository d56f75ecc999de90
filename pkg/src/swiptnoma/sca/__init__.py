"""Path-following (successive convex approximation) algorithms for PS, TS and OMA receivers."""
from .common import InfeasibleScenario, IterationTrace, ScaSettings, Scaled, TraceRow, TRACE_COLUMNS
from .driver import ALGORITHMS, final_objective, run
from .ps import init_ps, step_ee_ps, step_maxmin_ps
from .ts import init_ts, step_ee_ts, step_maxmin_ts

__all__ = [
    "ALGORITHMS", "InfeasibleScenario", "IterationTrace", "ScaSettings", "Scaled", "TraceRow", "TRACE_COLUMNS",
    "final_objective", "init_ps", "init_ts", "run", "step_ee_ps", "step_ee_ts", "step_maxmin_ps", "step_maxmin_ts",
]
