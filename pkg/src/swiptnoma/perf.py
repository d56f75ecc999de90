"""Exact rates, harvested energy, consumed power and objectives.

This is the ground truth every surrogate and solver output is audited
against.  All functions take raw (unscaled) beamformers in sqrt-watts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .netmodel import NetworkInstance

LOG2E = 1.0 / math.log(2.0)


@dataclass
class BeamStatePS:
    """Beamformers ``w[i, j]`` (N, 2K, Nt) and PS ratios ``alpha[i, j]`` (N, K)."""

    w: np.ndarray
    alpha: np.ndarray
    R: np.ndarray | None = None


@dataclass
class BeamStateTS:
    """Energy beams ``wE`` (N, K, Nt), information beams ``wI`` (N, 2K, Nt), TS ratio ``rho``."""

    wE: np.ndarray
    wI: np.ndarray
    rho: float
    R: np.ndarray | None = None


@dataclass
class OMAPlan:
    """Equal-slot TDMA inside every cluster: near users get ``tau``, far users ``1 - tau``."""

    tau: float = 0.5


class Stacks(NamedTuple):
    far_at_near: np.ndarray    # |h_{s,i,j} w_{s,l}|^2, (s,l) != (i,p(j))
    far_at_far: np.ndarray     # |h_{s,i,p(j)} w_{s,l}|^2, (s,l) != (i,p(j))
    near_at_near: np.ndarray   # |h_{s,i,j} w_{s,l}|^2, (s,l) not in {(i,p(j)), (i,j)}


def psi(x_pow, y_pow, nu, sigma2: float, sigma_c2: float):
    """Rate ``ln(1 + x/(y + sigma2 + sigma_c2/nu))``; the ``sigma_c2`` term is dropped when ``nu == 0``."""
    x_pow = np.asarray(x_pow, dtype=float)
    y_pow = np.asarray(y_pow, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(x_pow < 0) or np.any(y_pow < 0):
        raise ValueError("signal and interference powers must be nonnegative")
    if np.any(nu < 0) or np.any(nu > 1):
        raise ValueError("split ratio must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        circuit = np.where(nu > 0, sigma_c2 / np.where(nu > 0, nu, 1.0), 0.0)
    out = np.log1p(x_pow / (y_pow + sigma2 + circuit))
    return float(out) if out.ndim == 0 else out


def link_gains(inst: NetworkInstance, w: np.ndarray) -> np.ndarray:
    """Amplitudes ``G[s, i, j, l] = h_{s,i,j} w_{s,l}`` for every BS/UE/beam triple."""
    return np.einsum("sijn,sln->sijl", inst.channels, w)


def _check_beams(inst: NetworkInstance, w: np.ndarray, n_beams: int) -> None:
    shape = (inst.n_cells, n_beams, inst.antennas)
    if w is None or w.shape != shape:
        got = None if w is None else w.shape
        raise ValueError(f"beam set must have shape {shape}, got {got}")


def interference_stacks(inst: NetworkInstance, w: np.ndarray, i: int, j: int) -> Stacks:
    """Per-link interference powers seen in the three decoding steps of cluster ``(i, j)``."""
    _check_beams(inst, w, 2 * inst.pairs)
    if not 0 <= j < inst.pairs:
        raise ValueError("j must index a near user")
    f = int(inst.pairing[i, j])
    P = np.abs(link_gains(inst, w)) ** 2
    at_near = P[:, i, j, :].copy()
    at_far = P[:, i, f, :].copy()
    mask = np.ones_like(at_near, dtype=bool)
    mask[i, f] = False
    mask2 = mask.copy()
    mask2[i, j] = False
    return Stacks(at_near[mask], at_far[mask], at_near[mask2])


def _noma_rates(inst: NetworkInstance, P: np.ndarray, nu: np.ndarray, sigma_c2: float) -> np.ndarray:
    """NOMA decode rates from link powers ``P[s,i,j,l]``; ``nu[i,j]`` is the ID split at near users."""
    s2 = inst.sigma2
    total = P.sum(axis=(0, 3))                          # received power at every UE
    R = np.zeros((inst.n_cells, 2 * inst.pairs))
    for i, j, f in inst.clusters():
        own_far_at_near = P[i, i, j, f]
        own_far_at_far = P[i, i, f, f]
        own_near = P[i, i, j, j]
        r1 = psi(own_far_at_near, max(total[i, j] - own_far_at_near, 0.0), nu[i, j], s2, sigma_c2)
        r2 = psi(own_far_at_far, max(total[i, f] - own_far_at_far, 0.0), 0.0, s2, sigma_c2)
        r3 = psi(own_near, max(total[i, j] - own_far_at_near - own_near, 0.0), nu[i, j], s2, sigma_c2)
        R[i, f] = min(r1, r2)
        R[i, j] = r3
    return R


def achieved_rates_ps(inst: NetworkInstance, state: BeamStatePS) -> np.ndarray:
    """Exact per-user rates (nats/s/Hz) under power splitting; far rate is the min over both decoders."""
    _check_beams(inst, state.w, 2 * inst.pairs)
    alpha = np.asarray(state.alpha, dtype=float)
    if np.any(alpha <= 0) or np.any(alpha >= 1):
        raise ValueError("PS ratios must lie in (0, 1)")
    P = np.abs(link_gains(inst, state.w)) ** 2
    return _noma_rates(inst, P, alpha, inst.sigma_c2)


def achieved_rates_ts(inst: NetworkInstance, state: BeamStateTS) -> np.ndarray:
    """Exact per-user rates under transmit time switching, including the ``1 - rho`` prefactor."""
    _check_beams(inst, state.wI, 2 * inst.pairs)
    if not 0 < state.rho < 1:
        raise ValueError("TS ratio must lie in (0, 1)")
    P = np.abs(link_gains(inst, state.wI)) ** 2
    nu = np.zeros((inst.n_cells, inst.pairs))
    return (1.0 - state.rho) * _noma_rates(inst, P, nu, inst.sigma_c2)


def oma_rates(inst: NetworkInstance, w: np.ndarray, alpha: np.ndarray, plan: OMAPlan = OMAPlan()) -> np.ndarray:
    """Per-user rates for the cluster-TDMA baseline with PS receivers.

    Slots are aligned network-wide: during the near slot only near-user
    beams radiate, during the far slot only far-user beams.  No SIC.
    """
    _check_beams(inst, w, 2 * inst.pairs)
    tau = plan.tau
    if not 0 <= tau <= 1:
        raise ValueError("time share must lie in [0, 1]")
    K = inst.pairs
    P = np.abs(link_gains(inst, w)) ** 2
    near_rx = P[..., :K].sum(axis=(0, 3))
    far_rx = P[..., K:].sum(axis=(0, 3))
    R = np.zeros((inst.n_cells, 2 * K))
    for i, j, f in inst.clusters():
        sig_n = P[i, i, j, j]
        sig_f = P[i, i, f, f]
        R[i, j] = tau * psi(sig_n, max(near_rx[i, j] - sig_n, 0.0), alpha[i, j], inst.sigma2, inst.sigma_c2)
        R[i, f] = (1.0 - tau) * psi(sig_f, max(far_rx[i, f] - sig_f, 0.0), 0.0, inst.sigma2, inst.sigma_c2)
    return R


def received_power(inst: NetworkInstance, w: np.ndarray, i: int, j: int) -> float:
    """``p_{i,j}(w) = sum_{s,l} |h_{s,i,j} w_{s,l}|^2`` over whatever beam set ``w`` holds."""
    return float(np.sum(np.abs(np.einsum("sn,sln->sl", inst.channels[:, i, j], w)) ** 2))


def harvested_energy_ps(inst: NetworkInstance, state: BeamStatePS, i: int, j: int) -> float:
    zeta = inst.scenario.power.eh_efficiency
    return zeta * (1.0 - state.alpha[i, j]) * (received_power(inst, state.w, i, j) + inst.sigma2)


def harvested_energy_ts(inst: NetworkInstance, state: BeamStateTS, i: int, j: int) -> float:
    zeta = inst.scenario.power.eh_efficiency
    return state.rho * zeta * (received_power(inst, state.wE, i, j) + inst.sigma2)


def harvested_energy_oma(inst: NetworkInstance, w: np.ndarray, alpha: np.ndarray, i: int, j: int,
                         plan: OMAPlan = OMAPlan()) -> float:
    """Slot-averaged harvested power for the TDMA baseline."""
    K = inst.pairs
    zeta = inst.scenario.power.eh_efficiency
    p = plan.tau * received_power(inst, w[:, :K], i, j) + (1 - plan.tau) * received_power(inst, w[:, K:], i, j)
    return zeta * (1.0 - alpha[i, j]) * (p + inst.sigma2)


def total_power_ps(w: np.ndarray) -> float:
    return float(np.sum(np.abs(w) ** 2))


def total_power_ts(state: BeamStateTS) -> float:
    """Time-averaged radiated power ``rho pi_E + (1 - rho) pi_I``."""
    return state.rho * float(np.sum(np.abs(state.wE) ** 2)) + (1 - state.rho) * float(np.sum(np.abs(state.wI) ** 2))


def total_power_oma(w: np.ndarray, K: int, plan: OMAPlan = OMAPlan()) -> float:
    return plan.tau * float(np.sum(np.abs(w[:, :K]) ** 2)) + (1 - plan.tau) * float(np.sum(np.abs(w[:, K:]) ** 2))


def ee_from(sum_rate: float, radiated: float, inst: NetworkInstance) -> float:
    xi = inst.scenario.power.amp_inefficiency
    return sum_rate / (xi * radiated + inst.p_c)


def ee_objective_ps(inst: NetworkInstance, state: BeamStatePS) -> float:
    """Energy efficiency in nats/s/Hz per watt: sum rate over ``xi pi(w) + P_c``."""
    return ee_from(float(achieved_rates_ps(inst, state).sum()), total_power_ps(state.w), inst)


def ee_objective_ts(inst: NetworkInstance, state: BeamStateTS) -> float:
    return ee_from(float(achieved_rates_ts(inst, state).sum()), total_power_ts(state), inst)


def ee_objective_oma(inst: NetworkInstance, w: np.ndarray, alpha: np.ndarray, plan: OMAPlan = OMAPlan()) -> float:
    R = oma_rates(inst, w, alpha, plan)
    return ee_from(float(R.sum()), total_power_oma(w, inst.pairs, plan), inst)


# ── feasibility audit ─────────────────────────────────────────────────────────

@dataclass
class Audit:
    """Worst relative violations (positive means violated)."""

    eh: float = -math.inf
    power: float = -math.inf
    split: float = -math.inf
    qos: float = -math.inf
    details: dict = field(default_factory=dict)

    def worst(self) -> float:
        return max(self.eh, self.power, self.split, self.qos)

    def ok(self, tol: float) -> bool:
        return self.worst() <= tol


def _eh_violation(e_min: float, harvested) -> float:
    """Worst relative shortfall; a zero threshold is vacuous."""
    if e_min <= 0:
        return -math.inf
    return max((e_min - e) / e_min for e in harvested)


def _qos_violation(inst: NetworkInstance, R: np.ndarray) -> float:
    r = inst.scenario.power.qos_rate
    if r <= 0:
        return float(np.max(-R))
    return float(np.max((r - R) / r))


def audit_ps(inst: NetworkInstance, state: BeamStatePS, qos: bool = False) -> Audit:
    e_min = inst.scenario.power.eh_threshold
    eh = _eh_violation(e_min, [harvested_energy_ps(inst, state, i, j) for i, j, _ in inst.clusters()])
    bs_power = np.sum(np.abs(state.w) ** 2, axis=(1, 2))
    power = float(np.max((bs_power - inst.p_max) / inst.p_max))
    a = np.asarray(state.alpha)
    split = float(max(np.max(-a), np.max(a - 1.0)))
    out = Audit(eh=eh, power=power, split=split)
    if qos:
        out.qos = _qos_violation(inst, achieved_rates_ps(inst, state))
    return out


def audit_oma(inst: NetworkInstance, state: BeamStatePS, plan: OMAPlan = OMAPlan(), qos: bool = False) -> Audit:
    e_min = inst.scenario.power.eh_threshold
    K = inst.pairs
    eh = _eh_violation(e_min, [harvested_energy_oma(inst, state.w, state.alpha, i, j, plan)
                               for i, j, _ in inst.clusters()])
    near = np.sum(np.abs(state.w[:, :K]) ** 2, axis=(1, 2))
    far = np.sum(np.abs(state.w[:, K:]) ** 2, axis=(1, 2))
    power = float(max(np.max(near), np.max(far)) / inst.p_max - 1.0)
    a = np.asarray(state.alpha)
    split = float(max(np.max(-a), np.max(a - 1.0)))
    out = Audit(eh=eh, power=power, split=split)
    if qos:
        out.qos = _qos_violation(inst, oma_rates(inst, state.w, state.alpha, plan))
    return out


def audit_ts(inst: NetworkInstance, state: BeamStateTS, qos: bool = False) -> Audit:
    e_min = inst.scenario.power.eh_threshold
    eh = _eh_violation(e_min, [harvested_energy_ts(inst, state, i, j) for i, j, _ in inst.clusters()])
    pe = np.sum(np.abs(state.wE) ** 2, axis=2)
    pi = np.sum(np.abs(state.wI) ** 2, axis=2)
    avg = state.rho * pe.sum(axis=1) + (1 - state.rho) * pi.sum(axis=1)
    power = float(max(np.max(avg), np.max(pe), np.max(pi)) / inst.p_max - 1.0)
    split = float(max(-state.rho, state.rho - 1.0))
    out = Audit(eh=eh, power=power, split=split)
    if qos:
        out.qos = _qos_violation(inst, achieved_rates_ts(inst, state))
    return out
