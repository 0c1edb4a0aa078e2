import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fcsheom.statistics import (CumulantSeries, cumulants_from_factorial,
                                cumulants_from_moments, detect_steady_state, fd_weights,
                                factorial_cumulants, j_coefficients, kappa_finite_bias,
                                kappa_from_fluctuations, moments_from_cumulants,
                                read_table_csv, saito_utsumi_residual, stencil_derivative,
                                stirling2, sutran_residual, write_series_csv, write_table_csv)


def poisson_raw_moments(nu, order, kmax=200):
    k = np.arange(kmax)
    p = stats.poisson.pmf(k, nu)
    return np.array([np.sum(k.astype(float) ** n * p) for n in range(order + 1)])


def test_stirling_table():
    assert stirling2(3, 2) == 3
    assert [stirling2(4, k) for k in range(5)] == [0, 1, 7, 6, 1]
    assert stirling2(5, 3) == 25


def test_recursion_base_cases():
    mu = np.array([1.0, 0.7, 2.0])
    kap = cumulants_from_moments(mu)
    assert kap[1] == 0.7
    assert kap[2] == pytest.approx(2.0 - 0.49)


@pytest.mark.parametrize("nu", [0.3, 1.7, 4.0])
def test_poisson_cumulants(nu):
    kap = cumulants_from_moments(poisson_raw_moments(nu, 5))
    np.testing.assert_allclose(kap[1:], nu, rtol=1e-10)


@pytest.mark.parametrize("nu", [0.3, 2.5])
def test_poisson_factorial_cumulants(nu):
    kmax = 200
    k = np.arange(kmax, dtype=float)
    p = stats.poisson.pmf(k, nu)
    # factorial moments by direct summation, then their cumulants
    fmom = np.array([np.sum(np.prod([k - j for j in range(n)], axis=0) * p) if n else 1.0
                     for n in range(6)])
    expected = cumulants_from_moments(fmom)
    got = factorial_cumulants(cumulants_from_moments(poisson_raw_moments(nu, 5)))
    np.testing.assert_allclose(got[1:], expected[1:], atol=1e-10)
    np.testing.assert_allclose(got[1:], [nu, 0, 0, 0, 0], atol=1e-10)


def test_first_factorial_cumulant():
    kap = np.array([0.0, 1.3, 0.2, -0.4])
    assert factorial_cumulants(kap)[1] == 1.3


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=6, max_size=6))
def test_pipeline_round_trip(vals):
    kap = np.array([0.0] + vals[:5])
    mu = moments_from_cumulants(kap)
    back = cumulants_from_moments(mu)
    scale = max(1.0, np.max(np.abs(mu)))
    np.testing.assert_allclose(back, kap, atol=1e-12 * scale)
    f = factorial_cumulants(kap)
    np.testing.assert_allclose(cumulants_from_factorial(f)[1:], kap[1:],
                               atol=1e-12 * max(1.0, np.max(np.abs(f))))


def test_cumulant_series_invariants():
    t = np.linspace(0, 1, 11)
    mu = np.vstack([np.ones_like(t), t, t**2 + t, t**3])
    s = CumulantSeries.from_moments(t, mu, "TwoPoint")
    np.testing.assert_allclose(s.cumulants[1], s.moments[1])
    np.testing.assert_allclose(s.cumulants[2], t)
    np.testing.assert_allclose(s.rates()[2], 1.0, atol=1e-12)


def test_fd_weights_known():
    np.testing.assert_allclose(fd_weights([-1, 0, 1], 1), [-0.5, 0, 0.5], atol=1e-14)
    np.testing.assert_allclose(fd_weights([-1, 0, 1], 2), [1, -2, 1], atol=1e-13)
    with pytest.raises(ValueError):
        fd_weights([-1, 0, 1], 3)


def test_stencil_second_order_convergence():
    f = np.exp
    errs = []
    for h in (0.1, 0.05):
        samples = {k: np.array([f(0.3 + k * h)]) for k in (-1, 0, 1)}
        val, _ = stencil_derivative(samples, h, 1)
        errs.append(abs(val[0] - np.exp(0.3)))
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.05)


def test_stencil_error_estimate_covers_error():
    h = 0.2
    samples = {k: np.array([np.sin(1 + k * h)]) for k in range(-3, 4)}
    for order, exact in ((1, np.cos(1)), (2, -np.sin(1)), (3, -np.cos(1))):
        val, err = stencil_derivative(samples, h, order)
        assert abs(val[0] - exact) <= err[0]


def _series(fn, beta, t):
    # moments of a Gaussian counting statistic with mean a(beta) t and variance b(beta) t
    a, b = fn(beta)
    mu = np.vstack([np.ones_like(t), a * t, b * t + (a * t) ** 2])
    return CumulantSeries.from_moments(t, mu, "TwoPoint", beta=beta)


def test_j_coefficients_and_kappa():
    t = np.linspace(0, 2, 41)
    beta, db = 0.5, 0.005

    def fn(b):
        return np.sin(b), b**2
    runs = {k: _series(fn, beta + k * db, t) for k in (-2, -1, 0, 1, 2)}
    J, E = j_coefficients(runs, db, [(1, 0), (1, 1), (2, 1), (0, 1)])
    np.testing.assert_allclose(J[(1, 0)], np.sin(beta) * t)
    np.testing.assert_allclose(J[(1, 1)], np.cos(beta) * t, atol=1e-9)
    np.testing.assert_allclose(J[(2, 1)], 2 * beta * t, atol=1e-9)
    assert np.all(J[(0, 1)] == 0)
    k, err = kappa_finite_bias(runs, db, beta)
    np.testing.assert_allclose(k, beta**2 * np.cos(beta), rtol=1e-8)


def test_decoupled_limits_vanish():
    t = np.linspace(0, 2, 21)
    zero = CumulantSeries.from_moments(t, np.vstack([np.ones_like(t), 0 * t, 0 * t]),
                                       "TwoPoint")
    single = CumulantSeries.from_moments(t, np.vstack([np.ones_like(t), 0 * t, 0 * t]),
                                         "Single")
    assert np.all(kappa_from_fluctuations(zero, single, 0.1) == 0)
    k, _ = kappa_finite_bias({-1: zero, 0: zero, 1: zero}, 0.01, 0.1)
    assert np.all(k == 0)


def test_fluctuation_route_requires_both():
    t = np.linspace(0, 1, 5)
    s = CumulantSeries.from_moments(t, np.vstack([np.ones_like(t), t, t]), "TwoPoint")
    with pytest.raises(ValueError):
        kappa_from_fluctuations(s, None, 1.0)


def test_sutran_n2_m0_is_fluctuation_relation():
    # JS_0^2 = J_0^2 - 2 J_1^1 + J_2^0, and J_2^0 vanishes
    t = np.linspace(0, 1, 5)
    J = {(2, 0): 3 * t, (1, 1): 0.5 * t}
    JS = {(2, 0): 2 * t}
    res, _ = sutran_residual(J, JS, 2, 0)
    np.testing.assert_allclose(res, 2 * t - (3 * t - 2 * 0.5 * t))


def test_sutran_sign_pattern():
    t = np.ones(1)
    J = {(n, m): np.full(1, 10.0**n * 3.0**m) for n in range(4) for m in range(4)}
    zero = {k: np.zeros(1) for k in J}
    r1, _ = sutran_residual(J, zero, 1, 0)
    r2, _ = sutran_residual(J, zero, 2, 0)
    assert r1[0] == pytest.approx(-(10 - 0))
    assert r2[0] == pytest.approx(-(100 - 2 * 10 * 3))


def test_saito_utsumi_zero_for_symmetric_coefficients():
    # L_0^1 equilibrium relation: L_0^1 + L_0^1 = 0 requires L_0^1 = 0
    assert saito_utsumi_residual({(1, 0): 0.0}, 1, 0) == 0.0
    assert saito_utsumi_residual({(1, 0): 1.0}, 1, 0) == 2.0


def test_steady_state_detection():
    t = np.linspace(0, 10, 1001)
    rate = 1 - np.exp(-3 * t)
    ok, drift = detect_steady_state(t, rate[None], 2.0, 1e-4)
    assert ok and drift < 1e-4
    ok, _ = detect_steady_state(t, (1 - np.exp(-0.2 * t))[None], 2.0, 1e-4)
    assert not ok


def test_csv_round_trip(tmp_path):
    t = np.linspace(0, 1, 5)
    s = CumulantSeries.from_moments(t, np.vstack([np.ones_like(t), t, t**2 + t]), "Single")
    path = tmp_path / "s.csv"
    write_series_csv(path, s, {"config_hash": "abc", "converged": True})
    back = read_table_csv(path)
    np.testing.assert_array_equal(back["time"], t)
    assert list(back)[:3] == ["time", "moment_1", "moment_2"]
    assert (tmp_path / "s.csv.meta.json").exists()
    write_table_csv(tmp_path / "t.csv", {"a": [0.1, 0.2], "b": [True, False]}, {})
    assert list(read_table_csv(tmp_path / "t.csv")["b"]) == ["True", "False"]
