"""Transmit time switching: energy beams during ``rho``, information beams during ``1 - rho``.

The program works with ``theta = 1 - rho``.  Rate constraints use
``R / theta <= 0.5 (R^2 / R_k + R_k) / theta <= Lambda0``; the time-shared
power budget is divided by ``theta`` and its concave parts linearized.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .. import perf
from ..conic import Affine, ConicProgram, SolveResult, vstack
from ..perf import BeamStateTS
from .common import (BeamBlock, InfeasibleScenario, RateBound, SAMPLE_SLACK, ScaSettings, Scaled, TraceRow,
                     add_rate_bound, batch_value, bound_value, quad_lin, solve)

THETA_CAP = 0.999


@dataclass
class TSSubproblem:
    prog: ConicProgram
    energy: BeamBlock
    info: BeamBlock
    theta: Affine
    point: np.ndarray
    R_bar: np.ndarray
    bounds: list[tuple[RateBound, tuple[int, int]]] = field(default_factory=list)
    eh: list[Affine] = field(default_factory=list)
    power_lin: list[Affine] = field(default_factory=list)
    # EE only: concave numerator and convex denominator surrogates, f/g <= exact EE
    f: Affine | None = None
    g: Affine | None = None

    def extract(self, x: np.ndarray) -> BeamStateTS:
        sc = self.energy.sc
        ne, ni = self.energy.var.size, self.info.var.size
        wE = sc.beams_complex(x[:ne], sc.K)
        wI = sc.beams_complex(x[ne: ne + ni], 2 * sc.K)
        theta = float(x[ne + ni])
        return BeamStateTS(wE=wE, wI=wI, rho=1.0 - theta)

    def maxmin_value(self, X: np.ndarray) -> np.ndarray:
        """Best worst-user rate the surrogate constraints allow at each row of ``X``; ``-inf`` if infeasible.

        For fixed beams and ``theta`` the largest ``R`` with
        ``0.5 (R^2/R_k + R_k)/theta <= L`` is ``sqrt(R_k (2 theta L - R_k))``.
        """
        sc = self.energy.sc
        X = np.atleast_2d(X)
        ne, ni = self.energy.var.size, self.info.var.size
        theta = X[:, ne + ni]
        ok = (theta > 0) & (theta < 1)
        K2 = 2 * sc.K
        per_user = {}
        for rb, (i, j) in self.bounds:
            lam = bound_value(rb, sc, self.point, X)
            Rk = self.R_bar[i, j]
            disc = Rk * (2 * theta * lam - Rk)
            r = np.where(disc >= 0, np.sqrt(np.maximum(disc, 0.0)), -np.inf)
            per_user[(i, j)] = np.minimum(per_user.get((i, j), np.inf), r)
        val = np.min(np.stack(list(per_user.values())), axis=0)
        rho = 1.0 - theta
        for lin in self.eh:
            ok &= sc.zeta / sc.e * (batch_value(lin, X)[:, 0] + 1.0) * rho >= 1.0 - SAMPLE_SLACK
        uE = X[:, :ne].reshape(len(X), sc.N, sc.K, -1)
        uI = X[:, ne: ne + ni].reshape(len(X), sc.N, K2, -1)
        pE = np.sum(uE ** 2, axis=3)
        pI = np.sum(uI ** 2, axis=3)
        ok &= np.all(pE <= 1 + SAMPLE_SLACK, axis=(1, 2)) & np.all(pI <= 1 + 1e-12, axis=(1, 2))
        tb = self.point[ne + ni]
        for s, lin in enumerate(self.power_lin):
            lhs = pE[:, s].sum(axis=1) / np.where(ok, theta, 1.0) + pI[:, s].sum(axis=1)
            rhs = 2 / tb - theta / tb ** 2 + batch_value(lin, X)[:, 0]
            ok &= lhs <= rhs + SAMPLE_SLACK
        return np.where(ok, val, -np.inf)


def _point(sc: Scaled, state: BeamStateTS) -> np.ndarray:
    return np.concatenate([sc.beams_real(state.wE), sc.beams_real(state.wI), [1.0 - state.rho]])


def build_ts(sc: Scaled, state: BeamStateTS, objective: str, qos: bool = False) -> TSSubproblem:
    """Convex inner approximation at ``state`` for ``objective`` in {"maxmin", "ee"}."""
    N, K = sc.N, sc.K
    prog = ConicProgram()
    E = BeamBlock(prog, sc, K, "wE")
    I = BeamBlock(prog, sc, 2 * K, "wI")
    theta = prog.variable(1, "theta")
    point = _point(sc, state)
    R_bar = np.asarray(state.R, dtype=float)
    sub = TSSubproblem(prog, E, I, theta, point, R_bar)
    theta_k = 1.0 - state.rho

    R = prog.variable(N * 2 * K, "R")
    inv_theta = prog.variable(1, "inv_theta")
    prog.add_hyperbolic(inv_theta, theta, 1.0, "inv_theta")

    def lhs(i: int, j: int) -> Affine:
        # 0.5 (R^2/R_k + R_k)/theta through h * theta >= R^2 / R_k and inv_theta >= 1/theta
        h = prog.variable(1, f"h{i}.{j}")
        Rk = R_bar[i, j]
        prog.add_hyperbolic(h, theta, R[i * 2 * K + j] / np.sqrt(Rk), f"sq{i}.{j}")
        return 0.5 * h + 0.5 * Rk * inv_theta

    links = I.all_links()
    for i, j, f in sc.inst.clusters():
        others = [lk for lk in links if lk != (i, f)]
        rest = [lk for lk in others if lk != (i, j)]
        lf = lhs(i, f)
        rb = add_rate_bound(prog, sc, lf, I.amplitude((i, j), [(i, f)]), I.amplitude((i, j), others),
                            point, None, f"far@near{i}.{j}")
        sub.bounds.append((rb, (i, f)))
        rb = add_rate_bound(prog, sc, lf, I.amplitude((i, f), [(i, f)]), I.amplitude((i, f), others),
                            point, None, f"far@far{i}.{f}")
        sub.bounds.append((rb, (i, f)))
        rb = add_rate_bound(prog, sc, lhs(i, j), I.amplitude((i, j), [(i, j)]), I.amplitude((i, j), rest),
                            point, None, f"near{i}.{j}")
        sub.bounds.append((rb, (i, j)))

        if sc.e > 0:
            # rho zeta (p_E + 1) >= e  via  v (1 - theta) >= 1,  zeta/e (p_E_lin + 1) >= v
            lin = quad_lin(E.amplitude((i, j), E.all_links()), point)
            v = prog.variable(1, f"eh{i}.{j}.v")
            prog.add_hyperbolic(v, 1.0 - theta, 1.0, f"eh{i}.{j}.split")
            prog.add_nonneg(sc.zeta / sc.e * (lin + 1.0) - v, f"eh{i}.{j}")
            sub.eh.append(lin)
    if sc.e <= 0:
        prog.add_nonneg(THETA_CAP - theta, "theta.cap")

    for s in range(N):
        for l in range(K):
            prog.add_soc(1.0, E.beam(s, l), f"cap.E{s}.{l}")
        for l in range(2 * K):
            prog.add_soc(1.0, I.beam(s, l), f"cap.I{s}.{l}")
        hE = prog.variable(1, f"pE{s}")
        zI = prog.variable(1, f"pI{s}")
        prog.add_hyperbolic(hE, theta, E.cell(s), f"powerE{s}")
        prog.add_hyperbolic(zI, 1.0, I.cell(s), f"powerI{s}")
        lin = quad_lin(E.cell(s), point)
        prog.add_nonneg(2.0 / theta_k - theta / theta_k ** 2 + lin - hE - zI, f"power{s}")
        sub.power_lin.append(lin)

    if objective == "maxmin":
        t = prog.variable(1, "t")
        prog.add_nonneg(R - t, "minrate")
        prog.maximize(t)
    elif objective == "ee":
        if qos:
            prog.add_nonneg(R - sc.r, "qos")
        else:
            prog.add_nonneg(R, "rate.pos")
        S = R.sum()
        S_k = float(R_bar.sum())
        s_var = prog.variable(1, "sqrt_sum_rate")
        prog.add_hyperbolic(S, 1.0, s_var, "sqrt_sum_rate")
        f = 2.0 * np.sqrt(S_k) / theta_k * s_var - S_k / theta_k ** 2 * theta
        hE = prog.variable(1, "piE_over_theta")
        zI = prog.variable(1, "piI")
        prog.add_hyperbolic(hE, theta, E.var, "piE_over_theta")
        prog.add_hyperbolic(zI, 1.0, I.var, "piI")
        g = (sc.xi_p * hE + sc.xi_p * zI + sc.p_c * inv_theta - sc.xi_p * quad_lin(E.var, point))
        t_k = ee_exact(sc, state)
        sub.f, sub.g = f, g
        prog.maximize(f - t_k * g)
    else:
        raise ValueError(f"unknown objective {objective!r}")
    return sub


# ── exact evaluation ──────────────────────────────────────────────────────────

def ee_exact(sc: Scaled, state: BeamStateTS) -> float:
    return perf.ee_objective_ts(sc.inst, state)


def objective_value(sc: Scaled, state: BeamStateTS, objective: str) -> float:
    if objective == "maxmin":
        return float(perf.achieved_rates_ts(sc.inst, state).min())
    return ee_exact(sc, state)


def best_rho(sc: Scaled, state: BeamStateTS) -> float | None:
    """Smallest ``rho`` meeting EH and the time-shared budget with the beams held fixed, or None."""
    inst = sc.inst
    e_min = inst.scenario.power.eh_threshold
    lo, hi = 0.0, 1.0
    if e_min > 0:
        for i, j, _ in inst.clusters():
            p = perf.received_power(inst, state.wE, i, j)
            lo = max(lo, e_min / (sc.zeta * (p + inst.sigma2)))
    else:
        lo = 1.0 - THETA_CAP
    pE = np.sum(np.abs(state.wE) ** 2, axis=(1, 2))
    pI = np.sum(np.abs(state.wI) ** 2, axis=(1, 2))
    P = inst.p_max
    for a, b in zip(pE, pI):
        # rho a + (1 - rho) b <= P
        if a > b:
            hi = min(hi, (P - b) / (a - b))
        elif b > a:
            lo = max(lo, (b - P) / (b - a))
        elif b > P:
            return None
    if lo >= 1.0 or lo > hi:
        return None
    return lo


def scale_info(sc: Scaled, state: BeamStateTS) -> BeamStateTS:
    """Exact line search over a common factor ``c <= 1`` on the information beams (EE only).

    Every SINR grows with ``c`` so the QoS-feasible factors form an interval
    ``[c_min, 1]``; EH does not involve the information beams and the power
    budget only loosens.
    """
    inst, r = sc.inst, sc.r

    def scaled(c):
        return BeamStateTS(state.wE, state.wI * c, state.rho)

    def slack(c):
        return float(perf.achieved_rates_ts(inst, scaled(c)).min()) - r

    if slack(1.0) < 0:
        return state
    lo = 1e-6
    if slack(lo) < 0:
        lo = optimize.brentq(slack, lo, 1.0, xtol=1e-12)
        while slack(lo) < 0:
            lo = min(1.0, lo * (1 + 1e-9) + 1e-15)
    res = optimize.minimize_scalar(lambda c: -ee_exact(sc, scaled(c)), bounds=(lo, 1.0), method="bounded",
                                   options={"xatol": 1e-10})
    c = float(res.x)
    if slack(c) >= 0 and ee_exact(sc, scaled(c)) > ee_exact(sc, state):
        return scaled(c)
    return state


def _polish(sc: Scaled, state: BeamStateTS, objective: str) -> BeamStateTS:
    """Exact improvements that need no solve: smallest feasible ``rho``, then (EE) the info-beam scale."""
    rho = best_rho(sc, state)
    if rho is not None and 0 < rho < state.rho:
        cand = BeamStateTS(state.wE, state.wI, rho)
        if objective_value(sc, cand, objective) >= objective_value(sc, state, objective):
            state = cand
    if objective == "ee":
        state = scale_info(sc, state)
    return state


def step(sc: Scaled, state: BeamStateTS, objective: str, settings: ScaSettings,
         qos: bool = False) -> tuple[BeamStateTS | None, SolveResult, TSSubproblem]:
    sub = build_ts(sc, state, objective, qos=qos)
    res = solve(sub.prog, settings)
    if not (res.ok or res.usable):
        return None, res, sub
    new = sub.extract(res.x)
    if not 0 < new.rho < 1:
        return None, res, sub
    new = _polish(sc, new, objective)
    new.R = perf.achieved_rates_ts(sc.inst, new)
    return new, res, sub


def step_maxmin_ts(sc: Scaled, state: BeamStateTS, settings: ScaSettings):
    return step(sc, state, "maxmin", settings)


def step_ee_ts(sc: Scaled, state: BeamStateTS, settings: ScaSettings):
    return step(sc, state, "ee", settings, qos=True)


# ── initialization ────────────────────────────────────────────────────────────

def _random(sc: Scaled, rng: np.random.Generator, n_beams: int) -> np.ndarray:
    w = rng.standard_normal((sc.N, n_beams, sc.Nt)) + 1j * rng.standard_normal((sc.N, n_beams, sc.Nt))
    return w / np.linalg.norm(w, axis=2, keepdims=True)


def random_start(sc: Scaled, rng: np.random.Generator, rho: float, draws: int) -> BeamStateTS:
    """Unit-direction random beams at common power ``P/(K(rho + 2(1 - rho)))`` (capped at ``P``).

    The information beams are the best of ``draws`` candidates by worst-user rate.
    """
    K = sc.K
    c = min(sc.inst.p_max / (K * (rho + 2 * (1 - rho))), sc.inst.p_max)
    wE = _random(sc, rng, K) * np.sqrt(c)
    best, best_val = None, -np.inf
    for _ in range(draws):
        wI = _random(sc, rng, 2 * K) * np.sqrt(c)
        val = float(perf.achieved_rates_ts(sc.inst, BeamStateTS(wE, wI, rho)).min())
        if val > best_val:
            best, best_val = wI, val
    return BeamStateTS(wE, best, rho)


def eh_margin_ts(sc: Scaled, state: BeamStateTS) -> float:
    """Worst ``rho zeta (p_E + sigma^2) / e_min - 1``; nonnegative iff EH holds."""
    inst = sc.inst
    e_min = inst.scenario.power.eh_threshold
    if e_min <= 0:
        return np.inf
    return min(perf.harvested_energy_ts(inst, state, i, j) / e_min - 1.0 for i, j, _ in inst.clusters())


def _eh_projection_step(sc: Scaled, state: BeamStateTS, ref: BeamStateTS, settings: ScaSettings):
    """Closest beams to ``ref`` whose linearized EH clears the threshold at the fixed ``rho``."""
    K = sc.K
    rho = state.rho
    prog = ConicProgram()
    E = BeamBlock(prog, sc, K, "wE")
    I = BeamBlock(prog, sc, 2 * K, "wI")
    point = np.concatenate([sc.beams_real(state.wE), sc.beams_real(state.wI)])
    for i, j, _ in sc.inst.clusters():
        lin = quad_lin(E.amplitude((i, j), E.all_links()), point)
        prog.add_nonneg(rho * sc.zeta / sc.e * (lin + 1.0) - 1.0, f"eh{i}.{j}")
    for s in range(sc.N):
        for l in range(K):
            prog.add_soc(1.0, E.beam(s, l))
        for l in range(2 * K):
            prog.add_soc(1.0, I.beam(s, l))
        both = vstack([np.sqrt(rho) * E.cell(s), np.sqrt(1 - rho) * I.cell(s)])
        prog.add_soc(1.0, both, f"power{s}")
    d = prog.variable(1, "dist")
    target = np.concatenate([sc.beams_real(ref.wE), sc.beams_real(ref.wI)])
    prog.add_soc(d, Affine(np.eye(len(target), prog.n), -target))
    prog.minimize(d)
    res = solve(prog, settings)
    if not (res.ok or res.usable):
        return None, res
    ne = E.var.size
    return BeamStateTS(sc.beams_complex(res.x[:ne], K), sc.beams_complex(res.x[ne: ne + I.var.size], 2 * K), rho), res


def init_ts(sc: Scaled, settings: ScaSettings, rng: np.random.Generator, trace=None) -> BeamStateTS:
    """Try each ``rho`` of the grid: random beams, then EH feasibility iterations at that ``rho``."""
    it_total = 0
    for rho0 in settings.rho_grid:
        ref = random_start(sc, rng, rho0, settings.init_draws)
        state = ref
        for it in range(settings.init_max_iters + 1):
            margin = eh_margin_ts(sc, state)
            audit = perf.audit_ts(sc.inst, state)
            if trace is not None:
                trace.append(TraceRow(it_total, margin, rho0, "init", -margin, audit.power, phase="init"))
            it_total += 1
            if margin >= 0 and audit.power <= settings.feas_tol:
                state = _polish(sc, state, "maxmin")
                state.R = perf.achieved_rates_ts(sc.inst, state)
                if np.any(state.R <= 0):
                    break
                return state
            if it == settings.init_max_iters:
                break
            nxt, res = _eh_projection_step(sc, state, ref, settings)
            if nxt is None:
                break
            state = nxt
    raise InfeasibleScenario("no rho in the grid yields an EH-feasible starting point")
