"""Settings, traces, and the noise-normalized view of an instance used by every builder."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ..conic import Affine, ConicProgram, SolveResult, vstack
from ..netmodel import NetworkInstance
from ..surrogate import SurrogateCoeffs, coeffs_lambda, coeffs_lambda0, lambda0_value, lambda_value


# feasibility slack for the sampling evaluators; solver output overshoots the caps by ~1e-10
SAMPLE_SLACK = 1e-8


class InfeasibleScenario(RuntimeError):
    """The feasibility search could not reach a point meeting every constraint."""


@dataclass(frozen=True)
class ScaSettings:
    max_iters: int = 50
    rel_obj_tol: float = 1e-4
    feas_tol: float = 1e-6
    init_max_iters: int = 30
    init_draws: int = 32
    rho_grid: tuple[float, ...] = (0.2, 0.3, 0.5, 0.7, 0.9)
    restarts: int = 1
    solver_tol: float = 1e-8
    audit_tol: float = 1e-6
    oma_tau: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.max_iters < 1 or self.init_max_iters < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.rel_obj_tol <= 0 or self.feas_tol <= 0 or self.solver_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not self.rho_grid or not all(0 < r < 1 for r in self.rho_grid):
            raise ValueError("rho grid must be a nonempty list of fractions in (0, 1)")
        if self.restarts < 1 or self.init_draws < 1:
            raise ValueError("restarts and init_draws must be >= 1")
        if not 0 < self.oma_tau < 1:
            raise ValueError("OMA time share must lie in (0, 1)")


@dataclass
class TraceRow:
    iteration: int
    objective: float            # exact, from perf
    surrogate: float            # optimal value of the convex subproblem
    status: str
    eh_residual: float
    power_residual: float
    t_k: float = float("nan")
    wall_time: float = 0.0
    phase: str = "main"


TRACE_COLUMNS = ("phase", "iteration", "objective", "surrogate", "status", "eh_residual",
                 "power_residual", "t_k", "wall_time")


@dataclass
class IterationTrace:
    algorithm: str
    rows: list[TraceRow] = field(default_factory=list)
    outcome: str = "running"    # converged | max-iters | infeasible | solver-failure | rejected-step
    message: str = ""

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def main(self) -> list[TraceRow]:
        return [r for r in self.rows if r.phase == "main"]

    @property
    def iterations(self) -> int:
        """SCA steps actually taken (row 0 is the initial point)."""
        return max(len(self.main()) - 1, 0)

    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.main()])

    def to_csv(self, with_time: bool = True) -> str:
        cols = TRACE_COLUMNS if with_time else TRACE_COLUMNS[:-1]
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in cols])
        return out.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


class Scaled:
    """Instance with powers measured in noise units and beams in units of ``sqrt(P^max)``.

    ``g[s, i, j]`` is ``h[s, i, j] * sqrt(P^max / sigma^2)`` so ``|g u|^2`` is the
    received SNR contribution of a normalized beam ``u``.
    """

    def __init__(self, inst: NetworkInstance):
        p = inst.scenario.power
        self.inst = inst
        self.N, self.K, self.Nt = inst.n_cells, inst.pairs, inst.antennas
        self.scale = np.sqrt(inst.p_max)
        self.g = inst.channels * np.sqrt(inst.p_max / inst.sigma2)
        self.sc2 = inst.sigma_c2 / inst.sigma2
        self.e = p.eh_threshold / inst.sigma2
        self.zeta = p.eh_efficiency
        self.xi_p = p.amp_inefficiency * inst.p_max
        self.p_c = inst.p_c
        self.r = p.qos_rate

    def beams_real(self, w: np.ndarray) -> np.ndarray:
        u = w / self.scale
        return np.concatenate([u.real, u.imag], axis=-1).reshape(-1)

    def beams_complex(self, x: np.ndarray, n_beams: int) -> np.ndarray:
        u = x.reshape(self.N, n_beams, 2 * self.Nt)
        return (u[..., : self.Nt] + 1j * u[..., self.Nt:]) * self.scale


class BeamBlock:
    """A set of ``N x L`` complex beams laid out as consecutive real variables."""

    def __init__(self, prog: ConicProgram, sc: Scaled, n_beams: int, name: str):
        self.sc = sc
        self.L = n_beams
        self.var = prog.variable(sc.N * n_beams * 2 * sc.Nt, name)
        self.start = self.var.coef.shape[1] - self.var.size
        self.prog = prog

    def index(self, s: int, l: int) -> slice:
        w = 2 * self.sc.Nt
        k = (s * self.L + l) * w
        return slice(self.start + k, self.start + k + w)

    def beam(self, s: int, l: int) -> Affine:
        k = (s * self.L + l) * 2 * self.sc.Nt
        return self.var[k: k + 2 * self.sc.Nt]

    def cell(self, s: int, beams=None) -> Affine:
        if beams is None:
            k = s * self.L * 2 * self.sc.Nt
            return self.var[k: k + self.L * 2 * self.sc.Nt]
        parts = [self.beam(s, l) for l in beams]
        return Affine(np.vstack([p.coef for p in parts]), np.concatenate([p.const for p in parts]))

    def amplitude(self, rx: tuple[int, int], links) -> Affine:
        """Stacked ``[Re; Im]`` of ``g[s, i, j] u[s, l]`` for each ``(s, l)`` in ``links``."""
        i, j = rx
        n = self.start + self.var.size
        links = list(links)
        coef = np.zeros((2 * len(links), n))
        for r, (s, l) in enumerate(links):
            h = self.sc.g[s, i, j]
            coef[2 * r: 2 * r + 2, self.index(s, l)] = np.block([[h.real, -h.imag], [h.imag, h.real]])
        return Affine(coef, np.zeros(2 * len(links)))

    def all_links(self):
        return [(s, l) for s in range(self.sc.N) for l in range(self.L)]


def quad_lin(expr: Affine, point: np.ndarray) -> Affine:
    """Tangent minorant ``2 <e(x_k), e(x)> - ||e(x_k)||^2`` of ``||e(x)||^2`` at ``x_k``."""
    ek = expr.value(point)
    return expr.dot(2.0 * ek) - float(ek @ ek)


@dataclass
class RateBound:
    """One minorant instance, kept so the subproblem value can be re-evaluated off the solver."""

    coeffs: SurrogateCoeffs
    x: Affine
    y: Affine | None
    nu: Affine | None


def add_rate_bound(prog: ConicProgram, sc: Scaled, lhs: Affine, x: Affine, y: Affine | None,
                   point: np.ndarray, nu: Affine | None = None, name: str = "") -> RateBound:
    """Impose ``lhs <= Lambda`` (``Lambda0`` when ``nu`` is None) at the current point.

    The trust region ``x_lin > 0`` is carried by the hyperbolic term
    ``q * (x_lin / x_pow_k) >= 1`` that also epigraphs the reciprocal.
    """
    xk = x.value(point)
    x_pow = float(xk @ xk)
    y_pow = 0.0
    if y is not None and y.size:
        yk = y.value(point)
        y_pow = float(yk @ yk)
    else:
        y = None
    if nu is None:
        co = coeffs_lambda0(x_pow, y_pow, 1.0)
    else:
        co = coeffs_lambda(x_pow, y_pow, float(nu.value(point)[0]), 1.0, sc.sc2)
    x_lin = quad_lin(x, point)
    q = prog.variable(1, f"{name}.q")
    z = prog.variable(1, f"{name}.z")
    prog.add_hyperbolic(q, x_lin / x_pow, 1.0, f"{name}.trust")
    parts = [np.sqrt(co.b) * x]
    if y is not None:
        parts.append(np.sqrt(co.c) * y)
    prog.add_hyperbolic(z, 1.0, vstack(parts), f"{name}.quad")
    rhs = co.a - q - z
    if nu is not None:
        # s >= nu_k / nu, kept near 1 so the cone stays well conditioned when nu is small
        nu_k = float(nu.value(point)[0])
        s = prog.variable(1, f"{name}.s")
        prog.add_hyperbolic(s, nu / nu_k, 1.0, f"{name}.circuit")
        rhs = rhs - (co.c * sc.sc2 / nu_k) * s
    prog.add_nonneg(rhs - lhs, name)
    return RateBound(co, x, y, nu)


def batch_value(expr: Affine, X: np.ndarray) -> np.ndarray:
    """Evaluate ``expr`` at each row of ``X``; returns ``(S, expr.size)``."""
    X = np.atleast_2d(X)
    w = expr.coef.shape[1]
    return X[:, :w] @ expr.coef.T + expr.const


def bound_value(rb: RateBound, sc: Scaled, point_k: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Minorant value at each row of ``X``; ``-inf`` outside the trust region."""
    co = rb.coeffs
    xk = rb.x.value(point_k)
    xv = batch_value(rb.x, X)
    x_lin = 2 * xv @ xk - float(xk @ xk)
    inside = x_lin > 0
    x_pow = np.sum(xv ** 2, axis=1)
    y_pow = np.sum(batch_value(rb.y, X) ** 2, axis=1) if rb.y is not None else np.zeros(len(x_pow))
    safe = np.where(inside, x_lin, 1.0)
    if rb.nu is None:
        val = lambda0_value(co, safe, x_pow, y_pow)
    else:
        nu = batch_value(rb.nu, X)[:, 0]
        inside &= nu > 0
        val = lambda_value(co, safe, x_pow, y_pow, np.where(nu > 0, nu, 1.0))
    return np.where(inside, val, -np.inf)


def solve(prog: ConicProgram, settings: ScaSettings) -> SolveResult:
    return prog.solve(tol=settings.solver_tol, audit_tol=settings.audit_tol)
