import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fcsheom.model import (BathModel, SpectralDensity, SystemModel, ValidationError,
                           build_two_level_model, model_from_config, spectral_value,
                           validate)

HOT = [dict(family="ohmic", lam=0.1, omega_c=3.0, T=10.0, counted=True),
       dict(family="ohmic", lam=0.1, omega_c=3.0, T=10.0)]


def test_two_level_unbiased():
    model, baths = build_two_level_model(1.0, 0.0, HOT)
    np.testing.assert_allclose(model.h_sys, [[0, 1], [1, 0]])
    np.testing.assert_allclose(model.rho0, [[0.5, 0.5], [0.5, 0.5]])
    for v in model.couplings:
        np.testing.assert_allclose(v, np.diag([1, -1]))
    assert [b.counted for b in baths] == [True, False]


def test_two_level_biased():
    model, _ = build_two_level_model(1.0, 1.0, HOT)
    np.testing.assert_allclose(model.h_sys, [[1, 1], [1, -1]])


@pytest.mark.parametrize("omega0", [0.0, -1.0])
def test_nonpositive_splitting_rejected(omega0):
    with pytest.raises(ValidationError):
        build_two_level_model(omega0, 0.0, HOT)


def test_nonpositive_temperature_rejected():
    bad = [dict(HOT[0], T=0.0), HOT[1]]
    with pytest.raises(ValidationError):
        build_two_level_model(1.0, 0.0, bad)


def test_spectral_values():
    sd = SpectralDensity("ohmic", 1.0, 3.0)
    assert spectral_value(sd, 0.0) == 0.0
    assert spectral_value(sd, 1.0) == pytest.approx(np.exp(-1 / 3) / 3, abs=1e-12)
    assert spectral_value(sd, 1.0) == pytest.approx(0.238844, abs=1e-6)
    with pytest.raises(ValueError):
        spectral_value(sd, -0.1)


@pytest.mark.parametrize("family,cut", [("ohmic", 3.0), ("drude", 0.7)])
def test_reorganization_energy(family, cut):
    sd = SpectralDensity(family, 0.8, cut)
    upper = 50 * cut if family == "ohmic" else np.inf
    val, _ = integrate.quad(lambda w: spectral_value(sd, w) / w, 0, upper,
                            epsabs=1e-13, epsrel=1e-12, limit=400)
    assert val == pytest.approx(0.8, abs=1e-8)


def test_ohmic_peak_at_cutoff():
    sd = SpectralDensity("ohmic", 1.0, 3.0)
    h = 1e-5
    slope = (spectral_value(sd, 3.0 + h) - spectral_value(sd, 3.0 - h)) / (2 * h)
    assert abs(slope) < 1e-9


def _valid():
    return build_two_level_model(1.0, 0.0, HOT)


def test_validate_pass():
    assert validate(*_valid()).ok


def test_validate_trace():
    model, baths = _valid()
    bad = SystemModel(model.h_sys, model.couplings, 0.9 * model.rho0)
    rep = validate(bad, baths)
    assert not rep.ok and rep.failed == "trace"


def test_validate_hermiticity():
    model, baths = _valid()
    v = np.array([[0, 1], [0, 0]], complex)
    rep = validate(SystemModel(model.h_sys, (v, model.couplings[1]), model.rho0), baths)
    assert not rep.ok and rep.failed == "hermiticity"


def test_validate_positivity():
    model, baths = _valid()
    rho = np.diag([1.5, -0.5]).astype(complex)
    rep = validate(SystemModel(model.h_sys, model.couplings, rho), baths)
    assert not rep.ok and rep.failed == "positivity"


def test_validate_single_counted_bath():
    model, baths = _valid()
    both = [b for b in baths]
    both[1] = BathModel(both[1].beta, both[1].spectral, counted=True)
    assert validate(model, both).failed == "counted"


def test_validate_discrete_frequency():
    model, baths = _valid()
    disc = [BathModel(1.0, modes=((-1.0, 0.1),), counted=True), baths[1]]
    assert validate(model, disc).failed == "frequency"


def test_config_matrix_form():
    sec = {"h_sys": [[1, 0.5], [0.5, -1]], "rho0": [[1, 0], [0, 0]],
           "couplings": [[[0, [0, -1]], [[0, 1], 0]]],
           "baths": [{"beta": 2.0, "modes": [[1.0, 0.1]]}]}
    model, baths = model_from_config(sec)
    assert model.dim == 2 and baths[0].counted
    np.testing.assert_allclose(model.couplings[0], [[0, -1j], [1j, 0]])


def test_scaled_bath():
    b = BathModel(1.0, modes=((1.0, 0.2),), counted=True)
    assert b.scaled(4.0).modes[0][1] == pytest.approx(0.4)
    c = BathModel(1.0, SpectralDensity("ohmic", 0.1, 3.0))
    assert c.scaled(2.0).spectral.lam == pytest.approx(0.2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(0.0, 1.0))
def test_random_states_validate(entries, p):
    a, b, c, d = entries
    h = np.array([[a, b + 1j * c], [b - 1j * c, d]])
    rho = np.diag([p, 1 - p]).astype(complex)
    model = SystemModel(h, (np.diag([1.0, -1.0]),), rho)
    assert validate(model, [BathModel(1.0, modes=((1.0, 0.1),), counted=True)]).ok
