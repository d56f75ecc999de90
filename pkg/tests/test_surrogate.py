import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from swiptnoma import surrogate as sg
from swiptnoma.perf import psi

pos = st.floats(1e-3, 1e3)


def test_coefficient_example():
    co = sg.coeffs_lambda0(1.0, 0.0, 1.0)
    assert co.a == pytest.approx(math.log(2) + 1.5, abs=1e-15)
    assert co.b == pytest.approx(0.5) and co.c == pytest.approx(0.5)


def test_coefficients_with_circuit_noise_example():
    # effective noise 1 + 1/0.5 = 3
    co = sg.coeffs_lambda(3.0, 0.0, 0.5, 1.0, 1.0)
    assert co.noise == pytest.approx(3.0)
    assert co.a == pytest.approx(math.log(2) + 2 - 0.5 / 3)
    assert co.b == pytest.approx(3 / 18) and co.c == pytest.approx(3 / 18)


def test_coeffs_reject_bad_inputs():
    with pytest.raises(ValueError):
        sg.coeffs_lambda0(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        sg.coeffs_lambda0(1.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        sg.coeffs_lambda(1.0, 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        sg.coeffs_lambda(1.0, 1.0, 1.5, 1.0, 1.0)


def test_trust_region_error():
    co = sg.coeffs_lambda0(1.0, 1.0, 1.0)
    with pytest.raises(sg.TrustRegionError):
        sg.lambda0_value(co, 0.0, 1.0, 1.0)
    co = sg.coeffs_lambda(1.0, 1.0, 0.5, 1.0, 1.0)
    with pytest.raises(sg.TrustRegionError):
        sg.lambda_value(co, -1.0, 1.0, 1.0, 0.5)
    assert issubclass(sg.TrustRegionError, ValueError)


@given(pos, pos, st.floats(1e-2, 10))
def test_lambda0_tight_at_expansion(x, y, s2):
    co = sg.coeffs_lambda0(x, y, s2)
    assert sg.lambda0_value(co, x, x, y) == pytest.approx(psi(x, y, 0.0, s2, 0.0), rel=1e-9, abs=1e-12)


@given(pos, pos, st.floats(0.01, 1), st.floats(1e-2, 10), st.floats(1e-2, 10))
def test_lambda_tight_at_expansion(x, y, mu, s2, sc2):
    co = sg.coeffs_lambda(x, y, mu, s2, sc2)
    assert sg.lambda_value(co, x, x, y, mu) == pytest.approx(psi(x, y, mu, s2, sc2), rel=1e-9, abs=1e-12)


@settings(max_examples=300)
@given(st.lists(st.floats(-10, 10), min_size=8, max_size=8), st.floats(0.01, 1.9), pos, pos, st.floats(1e-2, 10))
def test_lambda0_dominated_by_rate(v, step, y_k, y, s2):
    xk = np.array(v[0:2]) + 1j * np.array(v[2:4])
    assume(np.linalg.norm(xk) > 1e-3)
    d = np.array(v[4:6]) + 1j * np.array(v[6:8])
    assume(np.linalg.norm(d) > 1e-6)
    # a step shorter than 2 ||xk|| leaves a point inside the trust region when aimed back along xk
    x = xk + step * np.linalg.norm(xk) * d / np.linalg.norm(d)
    x_lin = float(sg.linearize_quadratic(xk, x))
    assume(x_lin > 1e-9)
    xp_k, xp = float(np.sum(abs(xk) ** 2)), float(np.sum(abs(x) ** 2))
    co = sg.coeffs_lambda0(xp_k, y_k, s2)
    exact = psi(xp, y, 0.0, s2, 0.0)
    assert sg.lambda0_value(co, x_lin, xp, y) <= exact + 1e-10 * max(1, abs(exact))


@settings(max_examples=300)
@given(pos, pos, pos, pos, st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.01, 1), st.floats(1e-2, 5),
       st.floats(1e-2, 5))
def test_lambda_dominated_by_rate(xk, x, yk, y, mu_k, mu, shrink, s2, sc2):
    # real scalar signals; x_lin <= |x|^2 always
    x_lin = shrink * x
    co = sg.coeffs_lambda(xk, yk, mu_k, s2, sc2)
    exact = psi(x, y, mu, s2, sc2)
    assert sg.lambda_value(co, x_lin, x, y, mu) <= exact + 1e-10 * max(1, abs(exact))


def test_lambda_large_gap_stays_below():
    co = sg.coeffs_lambda0(100.0, 1.0, 1.0)
    assert sg.lambda0_value(co, 1e-3, 1e4, 0.0) < psi(1e4, 0.0, 0.0, 1.0, 0.0)


def test_batch_coefficients_match_scalar():
    xs, ys = np.array([1.0, 2.0, 5.0]), np.array([0.5, 0.0, 3.0])
    batch = sg.coeffs_lambda0(xs, ys, np.ones(3))
    for k in range(3):
        one = sg.coeffs_lambda0(xs[k], ys[k], 1.0)
        assert batch.a[k] == pytest.approx(one.a) and batch.b[k] == pytest.approx(one.b)


def test_linearize_quadratic():
    vk = np.array([1 + 1j, 2.0])
    assert sg.linearize_quadratic(vk, vk) == pytest.approx(np.sum(abs(vk) ** 2))
    v = np.array([0.5j, -1.0])
    assert sg.linearize_quadratic(vk, v) <= np.sum(abs(v) ** 2)
    assert sg.linearize_quadratic(vk, v) == pytest.approx(2 * (0.5 - 2.0) - 6.0)
    batch = np.stack([vk, v])
    assert sg.linearize_quadratic(vk, batch).shape == (2,)


def test_ratio_examples():
    assert sg.ratio_lower_bound(4, 2, 4, 2) == pytest.approx(2.0)
    assert sg.ratio_lower_bound(9, 1, 4, 2) == pytest.approx(5.0)
    assert sg.ratio_lower_bound(9, 1, 4, 2) <= 9.0


@given(pos, st.floats(1e-3, 1), pos, st.floats(1e-3, 1))
def test_ratio_bound_dominated(x, t, xb, tb):
    assert sg.ratio_lower_bound(x, t, xb, tb) <= x / t * (1 + 1e-12) + 1e-12


@pytest.mark.parametrize("check", [
    lambda **k: sg.verify_tangent_bound(**k),
    lambda **k: sg.verify_lambda_bounds(**k),
    lambda **k: sg.verify_lambda_bounds(with_circuit_noise=True, **k),
    lambda **k: sg.verify_ratio_bound(**k),
], ids=["tangent", "lambda0", "lambda", "ratio"])
def test_sampling_checks_pass_and_flip_fails(check):
    good = check(samples=20_000, seed=5)
    assert good.passed and good.violations == 0
    assert good.max_tightness_error <= 1e-9
    bad = check(samples=20_000, seed=5, sign_flip=True)
    assert not bad.passed and bad.violations > 0
    assert good.row().endswith("PASS") and bad.row().endswith("FAIL")
