"""Concave minorants of the rate function and the ratio bound, plus sampling checks.

A minorant is built at an expansion snapshot ``(x_pow, y_pow[, mu])`` where
``x_pow = ||x^(k)||^2`` is the signal power and ``y_pow = ||y^(k)||^2`` the
interference power.  Its value at a trial point needs the linearized signal
term ``x_lin = 2 Re<x^(k), x> - ||x^(k)||^2``, which must stay positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .perf import psi


class TrustRegionError(ValueError):
    """Linearized signal term is not positive; the minorant is undefined."""


@dataclass(frozen=True)
class SurrogateCoeffs:
    """Minorant coefficients; fields are floats, or arrays for a batch of snapshots."""

    a: float
    b: float
    c: float
    kind: str                  # "lambda0" (no circuit noise) or "lambda"
    x_pow: float
    y_pow: float
    sigma2: float
    sigma_c2: float = 0.0
    mu: float | None = None

    @property
    def noise(self) -> float:
        """Effective noise at the expansion point."""
        if self.kind == "lambda0":
            return self.sigma2
        return self.sigma2 + self.sigma_c2 / self.mu


def _coeffs(x_pow, y_eff, sigma2):
    # y_eff = interference + every noise term at the expansion point
    s = x_pow + y_eff
    a = np.log1p(x_pow / y_eff) + 2.0 - (x_pow / s) * (sigma2 / y_eff)
    b = y_eff / (s * x_pow)
    c = x_pow / (s * y_eff)
    return a, b, c


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else np.asarray(v, dtype=float)


def coeffs_lambda0(x_pow, y_pow, sigma2) -> SurrogateCoeffs:
    """Coefficients of the minorant of ``psi(., ., 0)``.  Accepts scalars or equal-shape arrays."""
    x_pow, y_pow, sigma2 = (np.asarray(v, dtype=float) for v in (x_pow, y_pow, sigma2))
    if not np.all(x_pow > 0):
        raise ValueError("expansion signal power must be positive")
    if np.any(y_pow < 0):
        raise ValueError("interference power must be nonnegative")
    a, b, c = _coeffs(x_pow, y_pow + sigma2, sigma2)
    return SurrogateCoeffs(_scalar(a), _scalar(b), _scalar(c), "lambda0",
                           _scalar(x_pow), _scalar(y_pow), _scalar(sigma2))


def coeffs_lambda(x_pow, y_pow, mu, sigma2, sigma_c2) -> SurrogateCoeffs:
    """Same construction with the circuit-noise term ``sigma_c2 / mu`` folded into the noise."""
    x_pow, y_pow, mu, sigma2, sigma_c2 = (np.asarray(v, dtype=float) for v in (x_pow, y_pow, mu, sigma2, sigma_c2))
    if not np.all(x_pow > 0):
        raise ValueError("expansion signal power must be positive")
    if not np.all((mu > 0) & (mu <= 1)):
        raise ValueError("split ratio must lie in (0, 1]")
    a, b, c = _coeffs(x_pow, y_pow + sigma2 + sigma_c2 / mu, sigma2)
    return SurrogateCoeffs(_scalar(a), _scalar(b), _scalar(c), "lambda", _scalar(x_pow), _scalar(y_pow),
                           _scalar(sigma2), _scalar(sigma_c2), _scalar(mu))


def lambda0_value(co: SurrogateCoeffs, x_lin, x_pow, y_pow):
    x_lin = np.asarray(x_lin, dtype=float)
    if np.any(x_lin <= 0):
        raise TrustRegionError("linearized signal power must be positive")
    out = co.a - co.x_pow / x_lin - co.b * np.asarray(x_pow) - co.c * np.asarray(y_pow)
    return float(out) if np.ndim(out) == 0 else out


def lambda_value(co: SurrogateCoeffs, x_lin, x_pow, y_pow, mu):
    x_lin = np.asarray(x_lin, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(x_lin <= 0):
        raise TrustRegionError("linearized signal power must be positive")
    if np.any(mu <= 0):
        raise ValueError("split ratio must be positive")
    out = co.a - co.x_pow / x_lin - co.b * np.asarray(x_pow) - co.c * (np.asarray(y_pow) + co.sigma_c2 / mu)
    return float(out) if np.ndim(out) == 0 else out


def linearize_quadratic(v_k: np.ndarray, v: np.ndarray):
    """``2 Re<v_k, v> - ||v_k||^2``, the tangent minorant of ``||v||^2`` at ``v_k``.

    Works along the last axis so batches of trial points can be passed.
    """
    v_k = np.asarray(v_k)
    v = np.asarray(v)
    return 2.0 * np.real(np.sum(np.conj(v_k) * v, axis=-1)) - np.sum(np.abs(v_k) ** 2, axis=-1)


def ratio_lower_bound(x, t, x_bar, t_bar):
    """Minorant of ``x / t`` that is concave in ``x`` and affine in ``t``; tight at ``(x_bar, t_bar)``."""
    return 2.0 * np.sqrt(x_bar) / t_bar * np.sqrt(x) - x_bar / t_bar ** 2 * t


# ── sampling verification ─────────────────────────────────────────────────────

@dataclass
class BoundReport:
    name: str
    samples: int
    max_violation: float             # max(bound - exact), must be <= tol
    max_tightness_error: float       # relative gap at expansion points
    violations: int
    tol: float
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.max_tightness_error <= 1e-9

    def row(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"{self.name},{self.samples},{self.max_violation:.3e},"
                f"{self.max_tightness_error:.3e},{self.violations},{flag}")


def _log_uniform(rng, lo, hi, size):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), size))


def _ln_inv_sum(x, y):
    return np.log(1.0 / x + 1.0 / y)


def verify_tangent_bound(samples: int = 100_000, seed: int = 0, tol: float = 1e-12, sign_flip: bool = False) -> BoundReport:
    """Tangent inequality for the convex ``ln(1/x + 1/y)`` and the chain that yields Lambda0.

    ``sign_flip`` perturbs the tangent slope; used as a negative control.
    """
    rng = np.random.default_rng(seed)
    xk = _log_uniform(rng, 1e-3, 1e3, samples)
    yk = _log_uniform(rng, 1e-3, 1e3, samples)
    x = _log_uniform(rng, 1e-3, 1e3, samples)
    y = _log_uniform(rng, 1e-3, 1e3, samples)
    flip = -1.0 if sign_flip else 1.0
    exact = _ln_inv_sum(x, y)
    tangent = _ln_inv_sum(xk, yk) + 1.0 - flip * (yk / xk * x + xk / yk * y) / (xk + yk)
    scale = np.maximum(1.0, np.abs(exact))
    gap = (tangent - exact) / scale
    at_point = _ln_inv_sum(xk, yk) + 1.0 - (yk / xk * xk + xk / yk * yk) / (xk + yk)
    tight = np.abs(at_point - _ln_inv_sum(xk, yk)) / np.maximum(1.0, np.abs(_ln_inv_sum(xk, yk)))

    # convexity by midpoints
    mid = _ln_inv_sum((xk + x) / 2, (yk + y) / 2)
    conv_gap = mid - (_ln_inv_sum(xk, yk) + exact) / 2
    conv_viol = int(np.sum(conv_gap > tol * np.maximum(1.0, np.abs(mid))))

    # log-signal bound  ln(X) >= ln(Xk) + 1 - Xk / x_lin  with x_lin <= X
    x_lin = x * rng.uniform(1e-3, 1.0, samples)
    log_gap = (np.log(xk) + 1.0 - xk / x_lin) - np.log(x)
    log_gap = log_gap / np.maximum(1.0, np.abs(np.log(x)))

    n_viol = int(np.sum(gap > tol)) + conv_viol + int(np.sum(log_gap > tol))
    worst = float(max(gap.max(), log_gap.max()))
    return BoundReport("log_tangent", samples, worst, float(tight.max()), n_viol, tol,
                       {"convexity_violations": conv_viol})


def _random_trust_points(rng, samples, dim=3):
    """Complex expansion/trial signal vectors with the trial point inside the trust region."""
    xk = rng.standard_normal((samples, dim)) + 1j * rng.standard_normal((samples, dim))
    xk *= _log_uniform(rng, 1e-2, 1e2, (samples, 1))
    step = (rng.standard_normal((samples, dim)) + 1j * rng.standard_normal((samples, dim)))
    step *= np.linalg.norm(xk, axis=1, keepdims=True) * _log_uniform(rng, 1e-3, 2.0, (samples, 1))
    x = xk + step
    x_lin = linearize_quadratic(xk, x)
    keep = x_lin > 0
    return xk[keep], x[keep], x_lin[keep]


def verify_lambda_bounds(samples: int = 100_000, seed: int = 1, tol: float = 1e-12,
                         with_circuit_noise: bool = False, sign_flip: bool = False) -> BoundReport:
    """Sample Lambda0 <= psi(., ., 0) (or Lambda <= psi(., ., mu)) inside the trust region."""
    rng = np.random.default_rng(seed)
    xk, x, x_lin = _random_trust_points(rng, 2 * samples)
    xk, x, x_lin = xk[:samples], x[:samples], x_lin[:samples]
    n = len(x_lin)
    x_pow_k = np.sum(np.abs(xk) ** 2, axis=1)
    x_pow = np.sum(np.abs(x) ** 2, axis=1)
    y_pow_k = _log_uniform(rng, 1e-3, 1e2, n)
    y_pow = _log_uniform(rng, 1e-3, 1e2, n)
    sigma2 = _log_uniform(rng, 1e-2, 1e1, n)
    sigma_c2 = _log_uniform(rng, 1e-2, 1e1, n) if with_circuit_noise else np.zeros(n)
    mu_k = rng.uniform(0.01, 1.0, n) if with_circuit_noise else np.zeros(n)
    mu = rng.uniform(0.01, 1.0, n) if with_circuit_noise else np.zeros(n)
    flip = -1.0 if sign_flip else 1.0

    if with_circuit_noise:
        co = coeffs_lambda(x_pow_k, y_pow_k, mu_k, sigma2, sigma_c2)
        co = replace(co, c=flip * co.c)
        bound = lambda_value(co, x_lin, x_pow, y_pow, mu)
        exact = psi(x_pow, y_pow, mu, sigma2, sigma_c2)
        at = lambda_value(co, x_pow_k, x_pow_k, y_pow_k, mu_k)
        ref = psi(x_pow_k, y_pow_k, mu_k, sigma2, sigma_c2)
    else:
        co = coeffs_lambda0(x_pow_k, y_pow_k, sigma2)
        co = replace(co, c=flip * co.c)
        bound = lambda0_value(co, x_lin, x_pow, y_pow)
        exact = psi(x_pow, y_pow, 0.0, sigma2, 0.0)
        at = lambda0_value(co, x_pow_k, x_pow_k, y_pow_k)
        ref = psi(x_pow_k, y_pow_k, 0.0, sigma2, 0.0)
    tight = np.abs(at - ref) / np.abs(ref)
    gap = (bound - exact) / np.maximum(1.0, np.abs(exact))
    name = "lambda_vs_psi_mu" if with_circuit_noise else "lambda0_vs_psi"
    return BoundReport(name, n, float(gap.max()), float(tight.max()), int(np.sum(gap > tol)), tol)


def verify_ratio_bound(samples: int = 100_000, seed: int = 2, tol: float = 1e-12, sign_flip: bool = False) -> BoundReport:
    rng = np.random.default_rng(seed)
    x = _log_uniform(rng, 1e-3, 1e3, samples)
    t = rng.uniform(1e-3, 1.0, samples)
    xb = _log_uniform(rng, 1e-3, 1e3, samples)
    tb = rng.uniform(1e-3, 1.0, samples)
    bound = ratio_lower_bound(x, t, xb, tb)
    if sign_flip:
        bound = 2.0 * np.sqrt(xb) / tb * np.sqrt(x) + xb / tb ** 2 * t
    exact = x / t
    gap = (bound - exact) / np.maximum(1.0, exact)
    tight = np.abs(ratio_lower_bound(xb, tb, xb, tb) - xb / tb) / (xb / tb)
    return BoundReport("ratio_lower_bound", samples, float(gap.max()), float(tight.max()),
                       int(np.sum(gap > tol)), tol)
