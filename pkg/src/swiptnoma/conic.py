"""A small real-valued second-order-cone modelling layer on top of Clarabel.

Programs are assembled from :class:`Affine` expressions (dense coefficient
rows over the program's scalar variables) and three cone families:
nonnegative orthant, zero cone and the second-order cone.  Rotated cones
``u v >= ||w||^2`` are rewritten as ``||(u - v, 2w)|| <= u + v``.
"""
from __future__ import annotations

import io
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import clarabel
import numpy as np
import scipy.sparse as sp

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
FAILED = "numerical-failure"


class ConicError(RuntimeError):
    pass


class Affine:
    """Vector-valued affine map ``coef @ x + const`` over a program's variables."""

    __slots__ = ("coef", "const")
    __array_ufunc__ = None      # let ``ndarray @ Affine`` reach __rmatmul__

    def __init__(self, coef: np.ndarray, const: np.ndarray):
        self.coef = coef
        self.const = const

    @property
    def size(self) -> int:
        return self.const.shape[0]

    @staticmethod
    def constant(values, width: int = 0) -> "Affine":
        v = np.atleast_1d(np.asarray(values, dtype=float))
        return Affine(np.zeros((v.shape[0], width)), v.copy())

    def _padded(self, width: int) -> np.ndarray:
        w = self.coef.shape[1]
        if w == width:
            return self.coef
        return np.pad(self.coef, ((0, 0), (0, width - w)))

    def _lift(self, other) -> "Affine":
        if isinstance(other, Affine):
            return other
        return Affine.constant(np.broadcast_to(np.asarray(other, dtype=float), (self.size,)))

    def __add__(self, other) -> "Affine":
        other = self._lift(other)
        if other.size != self.size and 1 not in (other.size, self.size):
            raise ConicError(f"dimension mismatch {self.size} vs {other.size}")
        width = max(self.coef.shape[1], other.coef.shape[1])
        return Affine(self._padded(width) + other._padded(width), self.const + other.const)

    __radd__ = __add__

    def __neg__(self) -> "Affine":
        return Affine(-self.coef, -self.const)

    def __sub__(self, other) -> "Affine":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "Affine":
        return (-self) + other

    def __mul__(self, k) -> "Affine":
        k = np.asarray(k, dtype=float)
        if k.ndim == 0:
            return Affine(self.coef * k, self.const * k)
        return Affine(self.coef * k[:, None], self.const * k)

    __rmul__ = __mul__

    def __truediv__(self, k: float) -> "Affine":
        return self * (1.0 / k)

    def __rmatmul__(self, M) -> "Affine":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(M @ self.coef, M @ self.const)

    def __getitem__(self, idx) -> "Affine":
        if isinstance(idx, (int, np.integer)):
            idx = slice(idx, idx + 1 if idx != -1 else None)
        return Affine(self.coef[idx], self.const[idx])

    def sum(self) -> "Affine":
        return Affine(self.coef.sum(axis=0, keepdims=True), self.const.sum(keepdims=True))

    def dot(self, v) -> "Affine":
        v = np.asarray(v, dtype=float)
        return Affine(v[None, :] @ self.coef, np.atleast_1d(v @ self.const))

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.coef @ x[: self.coef.shape[1]] + self.const


def vstack(parts: Sequence[Affine | float]) -> Affine:
    parts = [p if isinstance(p, Affine) else Affine.constant(p) for p in parts]
    width = max(p.coef.shape[1] for p in parts)
    return Affine(np.vstack([p._padded(width) for p in parts]), np.concatenate([p.const for p in parts]))


@dataclass
class _Cone:
    kind: str                 # "zero" | "nonneg" | "soc"
    expr: Affine              # constraint is expr in cone
    name: str = ""


@dataclass
class SolveResult:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int
    wall_time: float
    max_residual: float = np.nan
    raw_status: str = ""
    usable: bool = False          # primal passes the constraint audit even if optimality is uncertified

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def value(self, expr: Affine) -> np.ndarray:
        if self.x is None:
            raise ConicError(f"no primal point (status {self.status})")
        return expr.value(self.x)


@dataclass
class ConicProgram:
    """Linear objective, affine equalities/inequalities and second-order cones."""

    n: int = 0
    names: list[tuple[str, int, int]] = field(default_factory=list)
    cones: list[_Cone] = field(default_factory=list)
    objective: Affine | None = None
    sense: str = "min"

    def variable(self, size: int = 1, name: str = "") -> Affine:
        start = self.n
        self.n += size
        self.names.append((name, start, size))
        coef = np.zeros((size, self.n))
        coef[:, start:] = np.eye(size)
        return Affine(coef, np.zeros(size))

    # constraints --------------------------------------------------------------

    def add_nonneg(self, expr: Affine, name: str = "") -> None:
        """``expr >= 0`` elementwise."""
        self.cones.append(_Cone("nonneg", expr, name))

    def add_le(self, lhs, rhs, name: str = "") -> None:
        self.add_nonneg(_as_affine(rhs) - lhs, name)

    def add_eq(self, expr: Affine, name: str = "") -> None:
        self.cones.append(_Cone("zero", expr, name))

    def add_soc(self, t: Affine | float, z: Affine, name: str = "") -> None:
        """``||z|| <= t``."""
        t = _as_affine(t)
        if t.size != 1:
            raise ConicError("cone head must be scalar")
        self.cones.append(_Cone("soc", vstack([t, z]), name))

    def add_hyperbolic(self, u: Affine | float, v: Affine | float, w: Affine | float | Sequence, name: str = "") -> None:
        """``u v >= ||w||^2`` with ``u, v >= 0`` (rotated second-order cone)."""
        u, v = _as_affine(u), _as_affine(v)
        w = _as_affine(w)
        if u.size != 1 or v.size != 1:
            raise ConicError("hyperbolic constraint needs scalar u and v")
        self.cones.append(_Cone("soc", vstack([u + v, u - v, 2.0 * w]), name))

    def minimize(self, expr: Affine) -> None:
        self.objective, self.sense = _as_affine(expr), "min"

    def maximize(self, expr: Affine) -> None:
        self.objective, self.sense = _as_affine(expr), "max"

    # assembly -----------------------------------------------------------------

    def _blocks(self):
        """Group consecutive cones of the same kind; returns (matrix rows, consts, clarabel cones)."""
        rows, consts, cones = [], [], []
        order = sorted(range(len(self.cones)), key=lambda k: {"zero": 0, "nonneg": 1, "soc": 2}[self.cones[k].kind])
        for kind in ("zero", "nonneg"):
            members = [self.cones[k] for k in order if self.cones[k].kind == kind]
            if members:
                dim = sum(c.expr.size for c in members)
                cones.append(clarabel.ZeroConeT(dim) if kind == "zero" else clarabel.NonnegativeConeT(dim))
                for c in members:
                    rows.append(c.expr._padded(self.n))
                    consts.append(c.expr.const)
        for k in order:
            c = self.cones[k]
            if c.kind == "soc":
                cones.append(clarabel.SecondOrderConeT(c.expr.size))
                rows.append(c.expr._padded(self.n))
                consts.append(c.expr.const)
        return rows, consts, cones

    def residuals(self, x: np.ndarray) -> float:
        """Largest cone violation at ``x``, relative to the magnitude of the constraint row block."""
        worst = 0.0
        for c in self.cones:
            v = c.expr.value(x)
            scale = max(1.0, float(np.max(np.abs(v))))
            if c.kind == "zero":
                viol = float(np.max(np.abs(v)))
            elif c.kind == "nonneg":
                viol = float(np.max(-v))
            else:
                viol = float(np.linalg.norm(v[1:]) - v[0])
            worst = max(worst, viol / scale)
        return worst

    def solve(self, tol: float = 1e-8, audit_tol: float = 1e-6, max_iter: int = 200) -> SolveResult:
        if self.objective is None:
            raise ConicError("objective not set")
        if self.objective.size != 1:
            raise ConicError("objective must be scalar")
        rows, consts, cones = self._blocks()
        if not rows:
            raise ConicError("program has no constraints")
        # Clarabel form: A x + s = b, s in K   <=>   expr = -A x + b in K
        A = sp.csc_matrix(-np.vstack(rows))
        b = np.concatenate(consts)
        sign = 1.0 if self.sense == "min" else -1.0
        q = sign * self.objective._padded(self.n)[0]
        P = sp.csc_matrix((self.n, self.n))

        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol
        settings.tol_feas = tol
        settings.max_iter = max_iter
        start = time.perf_counter()
        try:
            sol = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()
        except Exception as exc:  # solver-internal panics surface as plain exceptions
            return SolveResult(FAILED, None, np.nan, 0, time.perf_counter() - start, raw_status=repr(exc))
        wall = time.perf_counter() - start
        raw = str(sol.status)
        x = np.asarray(sol.x, dtype=float)
        if raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            return SolveResult(INFEASIBLE, None, np.nan, sol.iterations, wall, raw_status=raw)
        if not np.all(np.isfinite(x)) or x.shape != (self.n,):
            return SolveResult(FAILED, None, np.nan, sol.iterations, wall, raw_status=raw)
        res = self.residuals(x)
        obj = float(self.objective.value(x)[0])
        status = OPTIMAL if raw in ("Solved", "AlmostSolved") and res <= audit_tol else FAILED
        return SolveResult(status, x, obj, sol.iterations, wall, res, raw, usable=res <= audit_tol)

    # export -------------------------------------------------------------------

    def dump(self) -> str:
        """Plain-text form: one block per cone, each row ``const | idx:coef ...``."""
        out = io.StringIO()
        out.write("# conic program v1\n")
        out.write(f"VARS {self.n}\n")
        for name, start, size in self.names:
            out.write(f"VAR {name or '_'} {start} {size}\n")
        obj = self.objective._padded(self.n)[0] if self.objective is not None else np.zeros(self.n)
        out.write(f"OBJ {self.sense} {_row(obj, self.objective.const[0] if self.objective is not None else 0.0)}\n")
        for c in self.cones:
            out.write(f"CONE {c.kind} {c.expr.size} {c.name or '_'}\n")
            coef = c.expr._padded(self.n)
            for r in range(c.expr.size):
                out.write(f"  {_row(coef[r], c.expr.const[r])}\n")
        return out.getvalue()


def _row(coef: np.ndarray, const: float) -> str:
    nz = np.flatnonzero(coef)
    return f"{const!r} | " + " ".join(f"{k}:{coef[k]!r}" for k in nz)


def _as_affine(v) -> Affine:
    if isinstance(v, Affine):
        return v
    return Affine.constant(v)


# ── complex beamformers as real blocks ────────────────────────────────────────

def complexify(prog: ConicProgram, n_t: int, name: str = "") -> Affine:
    """Declare a complex ``n_t``-vector as ``2 n_t`` reals ``[Re x; Im x]``."""
    return prog.variable(2 * n_t, name)


def to_real(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag], axis=-1)


def from_real(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u)
    n = u.shape[-1] // 2
    return u[..., :n] + 1j * u[..., n:]


def row_map(h: np.ndarray) -> np.ndarray:
    """Real 2 x 2n matrix sending ``[Re x; Im x]`` to ``[Re(h x); Im(h x)]`` for a row vector ``h``."""
    hr, hi = h.real, h.imag
    return np.block([[hr, -hi], [hi, hr]])


def inner_real(a: np.ndarray) -> np.ndarray:
    """Real row ``r`` with ``r @ [Re x; Im x] = Re<a, x> = Re(a^H x)``."""
    return np.concatenate([a.real, a.imag])


def stack_maps(maps: Iterable[np.ndarray]) -> np.ndarray:
    return np.vstack(list(maps))
