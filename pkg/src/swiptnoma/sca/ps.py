"""Power-splitting receivers: NOMA and the cluster-TDMA baseline.

One builder serves both the max-min and the energy-efficiency subproblems.
Variables are the normalized beams ``u`` and the split ratios ``alpha``;
the previous iterate (with its exact rates) is always feasible, so the
exact objective cannot decrease.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import perf
from ..conic import Affine, ConicProgram, SolveResult
from ..perf import BeamStatePS, OMAPlan
from .common import (BeamBlock, InfeasibleScenario, RateBound, SAMPLE_SLACK, ScaSettings, Scaled, TraceRow,
                     add_rate_bound, batch_value, bound_value, quad_lin, solve)

ALPHA_CAP = 0.999
# starting splits for the EH feasibility search, most information-friendly first
ALPHA0_GRID = (0.5, 0.2, 0.05)


@dataclass
class PSSubproblem:
    prog: ConicProgram
    beams: BeamBlock
    alpha: Affine
    point: np.ndarray
    # (bound, weight, user) with weight * R_user <= bound; for max-min every R_user is t
    bounds: list[tuple[RateBound, float, tuple[int, int]]] = field(default_factory=list)
    eh: list[tuple[Affine, int]] = field(default_factory=list)
    n_primary: int = 0
    oma: bool = False

    def extract(self, x: np.ndarray) -> BeamStatePS:
        sc = self.beams.sc
        nb = self.beams.var.size
        w = sc.beams_complex(x[:nb], self.beams.L)
        alpha = x[nb: nb + sc.N * sc.K].reshape(sc.N, sc.K)
        return BeamStatePS(w=w, alpha=alpha)

    def maxmin_value(self, X: np.ndarray) -> np.ndarray:
        """Surrogate max-min value at each row of ``X`` (primary variables); ``-inf`` if infeasible."""
        sc = self.beams.sc
        X = np.atleast_2d(X)
        val = np.full(len(X), np.inf)
        for rb, weight, _ in self.bounds:
            val = np.minimum(val, bound_value(rb, sc, self.point, X) / weight)
        nb = self.beams.var.size
        alpha = X[:, nb: nb + sc.N * sc.K]
        ok = np.all((alpha > 0) & (alpha < 1), axis=1)
        for lin, k in self.eh:
            e = sc.zeta / sc.e * (batch_value(lin, X)[:, 0] + 1.0) * (1.0 - alpha[:, k])
            ok &= e >= 1.0 - SAMPLE_SLACK
        u = X[:, :nb].reshape(len(X), sc.N, -1)
        if not self.oma:
            ok &= np.all(np.sum(u ** 2, axis=2) <= 1.0 + SAMPLE_SLACK, axis=1)
        else:
            half = u.shape[2] // 2
            ok &= np.all(np.sum(u[..., :half] ** 2, axis=2) <= 1.0 + SAMPLE_SLACK, axis=1)
            ok &= np.all(np.sum(u[..., half:] ** 2, axis=2) <= 1.0 + SAMPLE_SLACK, axis=1)
        return np.where(ok, val, -np.inf)


def _point(sc: Scaled, state: BeamStatePS) -> np.ndarray:
    return np.concatenate([sc.beams_real(state.w), np.asarray(state.alpha, dtype=float).ravel()])


def build_ps(sc: Scaled, state: BeamStatePS, objective: str, oma: bool = False, tau: float = 0.5,
             qos: bool = False) -> PSSubproblem:
    """Convex inner approximation at ``state`` for ``objective`` in {"maxmin", "ee"}."""
    N, K = sc.N, sc.K
    prog = ConicProgram()
    B = BeamBlock(prog, sc, 2 * K, "w")
    alpha = prog.variable(N * K, "alpha")
    point = _point(sc, state)
    sub = PSSubproblem(prog, B, alpha, point, n_primary=len(point), oma=oma)
    R_bar = state.R

    if objective == "maxmin":
        t = prog.variable(1, "t")
        rate = lambda i, j: t                                   # noqa: E731
    else:
        Rv = prog.variable(N * 2 * K, "R")
        rate = lambda i, j: Rv[i * 2 * K + j]                   # noqa: E731

    links = B.all_links()
    inst = sc.inst
    for i, j, f in inst.clusters():
        a_ij = alpha[i * K + j]
        if oma:
            near_links = [(s, l) for s, l in links if l < K and (s, l) != (i, j)]
            far_links = [(s, l) for s, l in links if l >= K and (s, l) != (i, f)]
            rb = add_rate_bound(prog, sc, rate(i, j) / tau, B.amplitude((i, j), [(i, j)]),
                                B.amplitude((i, j), near_links), point, a_ij, f"near{i}.{j}")
            sub.bounds.append((rb, 1.0 / tau, (i, j)))
            rb = add_rate_bound(prog, sc, rate(i, f) / (1 - tau), B.amplitude((i, f), [(i, f)]),
                                B.amplitude((i, f), far_links), point, None, f"far{i}.{f}")
            sub.bounds.append((rb, 1.0 / (1 - tau), (i, f)))
        else:
            others = [lk for lk in links if lk != (i, f)]
            rest = [lk for lk in others if lk != (i, j)]
            rb = add_rate_bound(prog, sc, rate(i, f), B.amplitude((i, j), [(i, f)]),
                                B.amplitude((i, j), others), point, a_ij, f"far@near{i}.{j}")
            sub.bounds.append((rb, 1.0, (i, f)))
            rb = add_rate_bound(prog, sc, rate(i, f), B.amplitude((i, f), [(i, f)]),
                                B.amplitude((i, f), others), point, None, f"far@far{i}.{f}")
            sub.bounds.append((rb, 1.0, (i, f)))
            rb = add_rate_bound(prog, sc, rate(i, j), B.amplitude((i, j), [(i, j)]),
                                B.amplitude((i, j), rest), point, a_ij, f"near{i}.{j}")
            sub.bounds.append((rb, 1.0, (i, j)))

        # energy harvesting: zeta (1 - alpha)(p + 1) >= e  via  v (1 - alpha) >= 1,  zeta/e (p_lin + 1) >= v
        if sc.e > 0:
            lin = _eh_lin(B, sc, (i, j), point, oma, tau)
            v = prog.variable(1, f"eh{i}.{j}.v")
            prog.add_hyperbolic(v, 1.0 - a_ij, 1.0, f"eh{i}.{j}.split")
            prog.add_nonneg(sc.zeta / sc.e * (lin + 1.0) - v, f"eh{i}.{j}")
            sub.eh.append((lin, i * K + j))
        else:
            prog.add_nonneg(ALPHA_CAP - a_ij, f"alpha{i}.{j}.cap")
            prog.add_nonneg(a_ij, f"alpha{i}.{j}.pos")

    _power(prog, B, sc, oma)

    if objective == "maxmin":
        prog.maximize(t)
    elif objective == "ee":
        if R_bar is None:
            raise ValueError("EE step needs expansion rates")
        S = Rv.sum()
        if qos:
            prog.add_nonneg(Rv - sc.r, "qos")
        else:
            prog.add_nonneg(Rv, "rate.pos")
        z1 = prog.variable(1, "z.radiated")
        z2 = prog.variable(1, "z.circuit")
        if oma:
            rad = np.sqrt(sc.xi_p) * _oma_weighted(B, sc, tau)
        else:
            rad = np.sqrt(sc.xi_p) * B.var
        prog.add_hyperbolic(z1, S, rad, "ee.radiated")
        prog.add_hyperbolic(z2, S, np.sqrt(sc.p_c), "ee.circuit")
        prog.minimize(z1 + z2)
    else:
        raise ValueError(f"unknown objective {objective!r}")
    return sub


def _oma_weighted(B: BeamBlock, sc: Scaled, tau: float) -> Affine:
    parts = []
    for s in range(sc.N):
        parts.append(np.sqrt(tau) * B.cell(s, range(sc.K)))
        parts.append(np.sqrt(1 - tau) * B.cell(s, range(sc.K, 2 * sc.K)))
    return Affine(np.vstack([p.coef for p in parts]), np.concatenate([p.const for p in parts]))


# ── exact evaluation ──────────────────────────────────────────────────────────

def rates(sc: Scaled, state: BeamStatePS, oma: bool, tau: float) -> np.ndarray:
    if oma:
        return perf.oma_rates(sc.inst, state.w, state.alpha, OMAPlan(tau))
    return perf.achieved_rates_ps(sc.inst, state)


def objective_value(sc: Scaled, state: BeamStatePS, objective: str, oma: bool, tau: float) -> float:
    R = rates(sc, state, oma, tau)
    if objective == "maxmin":
        return float(R.min())
    radiated = perf.total_power_oma(state.w, sc.K, OMAPlan(tau)) if oma else perf.total_power_ps(state.w)
    return perf.ee_from(float(R.sum()), radiated, sc.inst)


def audit(sc: Scaled, state: BeamStatePS, oma: bool, tau: float, qos: bool) -> perf.Audit:
    if oma:
        return perf.audit_oma(sc.inst, state, OMAPlan(tau), qos=qos)
    return perf.audit_ps(sc.inst, state, qos=qos)


def step(sc: Scaled, state: BeamStatePS, objective: str, settings: ScaSettings, oma: bool = False,
         tau: float = 0.5, qos: bool = False) -> tuple[BeamStatePS | None, SolveResult, PSSubproblem]:
    """One convex solve around ``state``; returns the new state (or None on solver failure)."""
    sub = build_ps(sc, state, objective, oma=oma, tau=tau, qos=qos)
    res = solve(sub.prog, settings)
    if not (res.ok or res.usable):
        return None, res, sub
    new = sub.extract(res.x)
    # rates grow with alpha, so lift every split to its EH-tight value at the new beams
    new.alpha = best_alpha(sc, new.w, oma, tau)
    new.R = rates(sc, new, oma, tau)
    return new, res, sub


def step_maxmin_ps(sc: Scaled, state: BeamStatePS, settings: ScaSettings):
    return step(sc, state, "maxmin", settings)


def step_ee_ps(sc: Scaled, state: BeamStatePS, settings: ScaSettings):
    return step(sc, state, "ee", settings, qos=True)


# ── initialization ────────────────────────────────────────────────────────────

def random_beams(sc: Scaled, rng: np.random.Generator, n_beams: int, per_beam: float) -> np.ndarray:
    """Seeded complex Gaussian directions, each scaled to ``per_beam`` watts."""
    w = rng.standard_normal((sc.N, n_beams, sc.Nt)) + 1j * rng.standard_normal((sc.N, n_beams, sc.Nt))
    w /= np.linalg.norm(w, axis=2, keepdims=True)
    return w * np.sqrt(per_beam)


def best_of_draws(sc: Scaled, rng: np.random.Generator, draws: int, per_beam: float, oma: bool,
                  tau: float, alpha0: float) -> np.ndarray:
    """Among ``draws`` random beam sets keep the one with the best worst-user rate at split ``alpha0``."""
    best, best_val = None, -np.inf
    alpha = np.full((sc.N, sc.K), alpha0)
    for _ in range(draws):
        w = random_beams(sc, rng, 2 * sc.K, per_beam)
        val = float(rates(sc, BeamStatePS(w, alpha), oma, tau).min())
        if val > best_val:
            best, best_val = w, val
    return best


def best_alpha(sc: Scaled, w: np.ndarray, oma: bool, tau: float) -> np.ndarray:
    """Largest split meeting every EH constraint with equality (rates grow with alpha)."""
    inst = sc.inst
    alpha = np.full((sc.N, sc.K), ALPHA_CAP)
    if sc.e <= 0:
        return alpha
    zeta = sc.zeta
    e_min = inst.scenario.power.eh_threshold
    K = sc.K
    for i, j, _ in inst.clusters():
        if oma:
            p = tau * perf.received_power(inst, w[:, :K], i, j) + (1 - tau) * perf.received_power(inst, w[:, K:], i, j)
        else:
            p = perf.received_power(inst, w, i, j)
        alpha[i, j] = min(1.0 - e_min / (zeta * (p + inst.sigma2)), ALPHA_CAP)
    return alpha


def _eh_margin_step(sc: Scaled, w: np.ndarray, settings: ScaSettings, oma: bool, tau: float, alpha0: float):
    """Maximize the worst linearized EH margin at fixed split ``alpha0`` over the beams."""
    K = sc.K
    prog = ConicProgram()
    B = BeamBlock(prog, sc, 2 * K, "w")
    point = sc.beams_real(w)
    m = prog.variable(1, "margin")
    for i, j, _ in sc.inst.clusters():
        lin = _eh_lin(B, sc, (i, j), point, oma, tau)
        prog.add_nonneg(sc.zeta * (1 - alpha0) / sc.e * (lin + 1.0) - 1.0 - m, f"eh{i}.{j}")
    _power(prog, B, sc, oma)
    prog.maximize(m)
    res = solve(prog, settings)
    if not (res.ok or res.usable):
        return None, res
    return sc.beams_complex(res.x[: B.var.size], 2 * K), res


def _eh_lin(B: BeamBlock, sc: Scaled, ue, point, oma: bool, tau: float) -> Affine:
    """Tangent minorant of the (slot-averaged) received power at near UE ``ue``."""
    links = B.all_links()
    if oma:
        K = sc.K
        return (tau * quad_lin(B.amplitude(ue, [lk for lk in links if lk[1] < K]), point)
                + (1 - tau) * quad_lin(B.amplitude(ue, [lk for lk in links if lk[1] >= K]), point))
    return quad_lin(B.amplitude(ue, links), point)


def _power(prog: ConicProgram, B: BeamBlock, sc: Scaled, oma: bool) -> None:
    K = sc.K
    for s in range(sc.N):
        if oma:
            prog.add_soc(1.0, B.cell(s, range(K)), f"power{s}.near")
            prog.add_soc(1.0, B.cell(s, range(K, 2 * K)), f"power{s}.far")
        else:
            prog.add_soc(1.0, B.cell(s), f"power{s}")


def _eh_projection_step(sc: Scaled, w: np.ndarray, w_ref: np.ndarray, settings: ScaSettings, oma: bool,
                        tau: float, alpha0: float):
    """Closest beams to ``w_ref`` whose linearized EH (at split ``alpha0``) clears the threshold."""
    K = sc.K
    prog = ConicProgram()
    B = BeamBlock(prog, sc, 2 * K, "w")
    point = sc.beams_real(w)
    for i, j, _ in sc.inst.clusters():
        lin = _eh_lin(B, sc, (i, j), point, oma, tau)
        prog.add_nonneg(sc.zeta * (1 - alpha0) / sc.e * (lin + 1.0) - 1.0, f"eh{i}.{j}")
    _power(prog, B, sc, oma)
    d = prog.variable(1, "dist")
    prog.add_soc(d, B.var - sc.beams_real(w_ref))
    prog.minimize(d)
    res = solve(prog, settings)
    if not (res.ok or res.usable):
        return None, res
    return sc.beams_complex(res.x[: B.var.size], 2 * K), res


def eh_margin(sc: Scaled, w: np.ndarray, alpha0: float, oma: bool, tau: float) -> float:
    """``min alpha_max - alpha0``; nonnegative iff EH holds everywhere at split ``alpha0``."""
    if sc.e <= 0:
        return np.inf
    return float(np.min(best_alpha(sc, w, oma, tau)) - alpha0)


def init_ps(sc: Scaled, settings: ScaSettings, rng: np.random.Generator, oma: bool = False,
            tau: float = 0.5, alpha0: float | None = None, trace=None) -> BeamStatePS:
    """EH-feasible starting point.

    Random beams are pulled toward EH feasibility at split ``alpha0`` by
    repeated proximal steps on the linearized harvested power, until the
    exact constraint holds; the splits are then lifted to their EH-tight
    values.  Without an explicit ``alpha0`` the splits in ``ALPHA0_GRID``
    are tried in turn, so weak channels can route more power to harvesting.
    """
    grid = ALPHA0_GRID if alpha0 is None else (alpha0,)
    err = None
    for a0 in grid:
        try:
            return _init_at(sc, settings, rng, oma, tau, a0, trace)
        except InfeasibleScenario as exc:
            err = exc
    raise err


def _init_at(sc: Scaled, settings: ScaSettings, rng: np.random.Generator, oma: bool, tau: float,
             alpha0: float, trace) -> BeamStatePS:
    K = sc.K
    per_beam = sc.inst.p_max / K if oma else sc.inst.p_max / (2 * K)
    w_ref = best_of_draws(sc, rng, settings.init_draws, per_beam, oma, tau, alpha0)
    w = w_ref
    for it in range(settings.init_max_iters + 1):
        margin = eh_margin(sc, w, alpha0, oma, tau)
        if trace is not None:
            trace.append(TraceRow(it, margin, np.nan, "init", -margin, np.nan, phase="init"))
        if margin >= 0:
            state = BeamStatePS(w=w, alpha=best_alpha(sc, w, oma, tau))
            state.R = rates(sc, state, oma, tau)
            if np.any(state.R <= 0):
                raise InfeasibleScenario("initial point has a user with zero rate")
            return state
        if it == settings.init_max_iters:
            break
        w_new, res = _eh_projection_step(sc, w, w_ref, settings, oma, tau, alpha0)
        if w_new is None:
            # linearized threshold out of reach: climb the worst EH margin instead
            w_new, res = _eh_margin_step(sc, w, settings, oma, tau, alpha0)
        if w_new is None:
            raise InfeasibleScenario(f"EH feasibility program failed: {res.status}")
        w = w_new
    raise InfeasibleScenario("energy-harvesting constraints unreachable within the iteration cap")
