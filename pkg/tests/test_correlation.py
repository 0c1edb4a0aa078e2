import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fcsheom.correlation import (FitError, UnsupportedObservable, bare_correlation,
                                 coefficients_at, decompose,
                                 dressed_correlation, dump_basis, load_basis)
from fcsheom.model import BathModel, Scheme, SpectralDensity

ONE_MODE = BathModel(1.0, modes=((1.0, 0.1),), counted=True)
TWO_MODES = BathModel(0.7, modes=((1.3, 0.2), (2.1, 0.15)), counted=True)
SIDES = [(0, 0), (0, 1), (1, 0), (1, 1)]


def d_ichi(f, order, h=1e-3):
    """Centered derivative in ``i chi`` at chi = 0."""
    if order == 1:
        val = (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h)
    else:
        val = (-f(2 * h) + 16 * f(h) - 30 * f(0.0) + 16 * f(-h) - f(-2 * h)) / (12 * h**2)
    return val / 1j**order


def test_single_mode_value():
    assert bare_correlation(ONE_MODE, 0.0) == pytest.approx(0.01 / np.tanh(0.5), abs=1e-15)
    assert bare_correlation(ONE_MODE, 0.0) == pytest.approx(0.0216395, abs=1e-7)


def test_decoupled_bath():
    b = BathModel(1.0, SpectralDensity("ohmic", 0.0, 3.0), counted=True)
    assert np.all(bare_correlation(b, np.linspace(0, 5, 7)) == 0)


def test_ohmic_imaginary_part_temperature_independent():
    sd = SpectralDensity("ohmic", 1.0, 3.0)
    t = np.array([0.3, 1.0, 2.5])
    hot = bare_correlation(BathModel(0.1, sd), t)
    cold = bare_correlation(BathModel(2.0, sd), t)
    np.testing.assert_allclose(hot.imag, cold.imag, atol=1e-9)
    assert np.all(np.abs(hot.real - cold.real) > 1e-3)


def test_discrete_symmetry():
    t = np.linspace(-4, 4, 41)
    c = bare_correlation(TWO_MODES, t)
    np.testing.assert_allclose(c, np.conj(c[::-1]), atol=1e-14)
    np.testing.assert_allclose(c.real, c.real[::-1], atol=1e-14)
    np.testing.assert_allclose(c.imag, -c.imag[::-1], atol=1e-14)


def test_discrete_basis_exact():
    basis = decompose(ONE_MODE, q_max=2)
    assert basis.n_terms == 2
    np.testing.assert_allclose(sorted(basis.exponents.imag), [-1.0, 1.0])
    np.testing.assert_allclose(basis.exponents.real, 0.0)
    t = np.linspace(0, 10, 200)
    np.testing.assert_allclose(basis.reconstruct(t), bare_correlation(ONE_MODE, t), atol=1e-15)
    assert basis.fit_residual == 0.0


def test_closure_is_diagonal():
    basis = decompose(TWO_MODES, q_max=1)
    assert np.array_equal(basis.eta, np.diag(basis.exponents))
    t = 0.37
    dphi = basis.exponents * basis.phi(t)
    np.testing.assert_allclose(dphi, basis.eta @ basis.phi(t), atol=1e-15)


def test_drude_matsubara():
    sd = SpectralDensity("drude", 0.1, 1.0)
    bath = BathModel(1.0, sd, counted=True)
    K = 20
    basis = decompose(bath, n_matsubara=K, q_max=1)
    assert basis.n_terms == K + 1
    rates = np.sort(-basis.exponents.real)
    np.testing.assert_allclose(rates[0], 1.0)
    np.testing.assert_allclose(rates[1:], 2 * np.pi * np.arange(1, K + 1))
    assert np.all(basis.exponents.imag == 0)
    t = np.linspace(0.5, 5, 10)
    np.testing.assert_allclose(basis.reconstruct(t), bare_correlation(bath, t), atol=1e-6)


def test_ohmic_six_term_fit():
    # fit quality target for six exponentials at the transport parameters
    bath = BathModel(0.1, SpectralDensity("ohmic", 1.0, 3.0), counted=True)
    basis = decompose(bath, n_terms=6, q_max=0, strict=False)
    c0 = abs(bare_correlation(bath, 0.0))
    t = np.linspace(0, 10, 200)
    resid = np.max(np.abs(basis.reconstruct(t) - bare_correlation(bath, t)))
    assert resid < 1e-4 * c0


def test_ohmic_default_fit_meets_tolerance():
    bath = BathModel(0.1, SpectralDensity("ohmic", 1.0, 3.0), counted=True)
    basis = decompose(bath, q_max=0)
    t = np.linspace(0, 10, 200)
    resid = np.max(np.abs(basis.reconstruct(t) - bare_correlation(bath, t)))
    assert resid < 1e-4 * abs(bare_correlation(bath, 0.0))


def test_fit_failure_reports_residual():
    bath = BathModel(0.1, SpectralDensity("ohmic", 1.0, 3.0), counted=True)
    with pytest.raises(FitError) as err:
        decompose(bath, n_terms=2, q_max=0)
    assert err.value.residual > 1e-3


@pytest.mark.parametrize("scheme", ["TwoPoint", "Single"])
def test_zeroth_order_matches_bare(scheme):
    basis = decompose(TWO_MODES, scheme, q_max=2)
    c0 = coefficients_at(basis, 0.0)
    np.testing.assert_allclose(basis.coeffs[..., 0], c0, atol=1e-15)


@pytest.mark.parametrize("scheme", ["TwoPoint", "Single"])
@pytest.mark.parametrize("q", [1, 2])
def test_counting_derivatives_vs_dressed_formula(scheme, q):
    basis = decompose(ONE_MODE, scheme, q_max=2)
    t = np.linspace(0, 6, 25)
    for j, k in SIDES:
        fd = d_ichi(lambda chi: dressed_correlation(ONE_MODE, chi, t, j, k, scheme), q)
        tol = 1e-8 if q == 1 else 1e-6
        np.testing.assert_allclose(basis.reconstruct(t, j, k, q), fd, atol=tol)


def test_single_minus_two_point_is_initial_dressing():
    tp = decompose(ONE_MODE, "TwoPoint", q_max=1)
    s = decompose(ONE_MODE, "Single", q_max=1)
    t = np.linspace(0, 5, 11)
    for j, k in SIDES:
        diff = s.reconstruct(t, j, k, 1) - tp.reconstruct(t, j, k, 1)

        def shift(chi):
            # only the thermal weights move, to beta - i chi
            b = ONE_MODE.with_beta(ONE_MODE.beta - 1j * chi)
            return dressed_correlation(b, 0.0, t, j, k, "TwoPoint")
        np.testing.assert_allclose(diff, d_ichi(shift, 1), atol=1e-8)
    assert np.max(np.abs(s.coeffs[..., 1] - tp.coeffs[..., 1])) > 1e-4


@pytest.mark.parametrize("scheme", ["TwoPoint", "Single"])
def test_finite_chi_tables(scheme):
    basis = decompose(TWO_MODES, scheme, q_max=0)
    t = np.linspace(0, 8, 30)
    for chi in (-1.0, -0.4, 0.0, 0.3, 1.2):
        c = coefficients_at(basis, chi)
        for j, k in SIDES:
            exact = dressed_correlation(TWO_MODES, chi, t, j, k, scheme)
            np.testing.assert_allclose(basis.phi(t) @ c[:, j, k], exact, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.01, 0.5), st.floats(0.2, 5.0), st.floats(-2, 2))
def test_finite_chi_random_modes(w, g, beta, chi):
    bath = BathModel(beta, modes=((w, g),), counted=True)
    basis = decompose(bath, "TwoPoint", q_max=0)
    t = np.linspace(0, 5, 9)
    c = coefficients_at(basis, chi)
    for j, k in SIDES:
        exact = dressed_correlation(bath, chi, t, j, k, "TwoPoint")
        np.testing.assert_allclose(basis.phi(t) @ c[:, j, k], exact,
                                   atol=1e-12 * max(1.0, np.max(np.abs(exact))))


def test_unsupported_observable():
    bath = BathModel(1.0, modes=((1.0, 0.1),), counted=True, observable="number")
    with pytest.raises(UnsupportedObservable):
        decompose(bath)


def test_dump_and_load(tmp_path):
    bath = BathModel(0.5, SpectralDensity("ohmic", 0.2, 3.0), counted=True)
    basis = decompose(bath, "Single", q_max=2)
    dump_basis(basis, tmp_path / "b.json")
    back = load_basis(tmp_path / "b.json")
    np.testing.assert_array_equal(back.exponents, basis.exponents)
    np.testing.assert_array_equal(back.coeffs, basis.coeffs)
    assert back.scheme is Scheme.SINGLE
    np.testing.assert_allclose(coefficients_at(back, 0.3), coefficients_at(basis, 0.3),
                               rtol=1e-10, atol=1e-14)
