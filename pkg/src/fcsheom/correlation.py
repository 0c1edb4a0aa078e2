"""
Bath correlation functions, their exponential decomposition and the
counting-field dependence of the decomposition coefficients.

Conventions.  ``C(t) = <B(t) B(0)>`` for a thermal bath at inverse
temperature ``beta``.  For the bath-energy counting field the four
side-resolved correlation functions are

    C^00(chi, t) =  C(t)            C^11(chi, t) =  C(-t)
    C^10(chi, t) = -C(t - chi)      C^01(chi, t) = -C(-t - chi)

(j is the side of the later operator, k of the earlier; 0 = left,
1 = right).  With ``C(t) = sum_r a_r exp(g_r t)`` and
``C(-t) = sum_r b_r exp(g_r t)`` the shifts are absorbed in the
coefficients, ``c^10_r(chi) = -a_r exp(-g_r chi)`` and
``c^01_r(chi) = -b_r exp(g_r chi)``.  In the single-measurement scheme the
counted bath is additionally prepared at the complex inverse temperature
``beta - i chi``, i.e. ``a_r`` and ``b_r`` become functions of chi.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, optimize

from .model import BathModel, Scheme, SpectralDensity, spectral_value


class IntegrationError(RuntimeError):
    """Quadrature did not converge; ``residual`` carries the error estimate."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (error estimate {residual:.3g})")
        self.residual = residual


class FitError(RuntimeError):
    """Exponential fit missed the requested tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (achieved residual {residual:.3g})")
        self.residual = residual


class UnsupportedObservable(ValueError):
    pass


def bose(beta, omega):
    """Occupation ``1/(exp(beta w) - 1)``; ``beta`` may be complex."""
    return 1.0 / np.expm1(np.multiply(beta, omega))


_BOSE_POLYS = [Polynomial([0, 1])]


def bose_derivative_poly(p: int) -> Polynomial:
    """Polynomial ``P_p`` with ``(-d/dbeta)^p n(beta w) = w^p P_p(n)``."""
    while len(_BOSE_POLYS) <= p:
        prev = _BOSE_POLYS[-1]
        _BOSE_POLYS.append(prev.deriv() * Polynomial([0, 1, 1]))
    return _BOSE_POLYS[p]


def thermal_weights(spectral_weight, omega, beta, p: int = 0):
    """Weights ``(A, B)`` of ``exp(-i w t)`` and ``exp(+i w t)`` in C(t).

    ``p > 0`` returns the ``(-d/dbeta)^p`` derivative; the ``+1`` of the
    emission weight drops out so both weights coincide.
    """
    n = bose(beta, omega)
    if p == 0:
        return spectral_weight * (n + 1), spectral_weight * n
    w = spectral_weight * omega**p * bose_derivative_poly(p)(n)
    return w, w


# --------------------------------------------------------------------------
# direct evaluation of C(t)


def bare_correlation(bath: BathModel, t):
    """Thermal correlation ``C(t)`` of one bath at its inverse temperature.

    Continuum baths use adaptive quadrature (Fourier-weighted for t != 0);
    discrete baths sum their modes exactly.
    """
    t_arr = np.asarray(t, dtype=float)
    if bath.modes is not None:
        w = np.array([m[0] for m in bath.modes])
        g2 = np.array([m[1] for m in bath.modes]) ** 2
        a, b = thermal_weights(g2, w, bath.beta)
        ph = np.exp(-1j * np.multiply.outer(t_arr, w))
        out = ph @ a + ph.conj() @ b
        return complex(out) if out.ndim == 0 else out
    vals = np.array([_continuum_correlation(bath.spectral, bath.beta, float(x))
                     for x in t_arr.ravel()]).reshape(t_arr.shape)
    return complex(vals) if vals.ndim == 0 else vals


def _continuum_correlation(sd: SpectralDensity, beta: float, t: float) -> complex:
    if sd.lam == 0:
        return 0j

    def sym(w):
        # J coth(beta w / 2) with the w -> 0 limit
        if w == 0.0:
            return 2 * sd.lam / (beta * (sd.cutoff if sd.family == "ohmic"
                                         else np.pi * sd.cutoff / 2))
        return spectral_value(sd, w) / np.tanh(beta * w / 2)

    def jw(w):
        return spectral_value(sd, w)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if t == 0.0:
                re, err_re = integrate.quad(sym, 0, np.inf, limit=400)
                im, err_im = 0.0, 0.0
            else:
                re, err_re = integrate.quad(sym, 0, np.inf, weight="cos",
                                            wvar=abs(t), limlst=200)
                im, err_im = integrate.quad(jw, 0, np.inf, weight="sin",
                                            wvar=abs(t), limlst=200)
                im = -np.sign(t) * im
        except integrate.IntegrationWarning as exc:
            raise IntegrationError(f"correlation quadrature failed at t={t}: {exc}",
                                   float("nan")) from None
    if err_re + err_im > 1e-6 * max(1.0, abs(re)):
        raise IntegrationError(f"correlation quadrature inaccurate at t={t}",
                               err_re + err_im)
    return complex(re, im)


# --------------------------------------------------------------------------
# spectral measures


@dataclass
class SpectralMeasure:
    """Nodes and weights with ``int J(w) f(w) dw ~ sum_i weight_i f(w_i)``."""

    omega: np.ndarray
    weight: np.ndarray
    exact: bool = False

    @classmethod
    def from_bath(cls, bath: BathModel, t_max: float = 10.0):
        if bath.modes is not None:
            w = np.array([m[0] for m in bath.modes], dtype=float)
            g = np.array([m[1] for m in bath.modes], dtype=float)
            return cls(w, g**2, exact=True)
        return cls.gauss_legendre(bath.spectral, bath.beta, t_max)

    @classmethod
    def gauss_legendre(cls, sd: SpectralDensity, beta: float, t_max: float,
                       order: int = 16):
        if sd.family == "ohmic":
            w_max = 60.0 * sd.cutoff
        else:
            w_max = min(60.0 / beta + 30 * sd.cutoff, 400.0 * sd.cutoff + 60.0 / beta)
        # resolve both the integrand scale and the oscillation exp(i w t_max)
        width = min(sd.cutoff / 4, np.pi / (2 * max(t_max, 1e-3)), 1.0 / beta)
        n_panels = int(np.ceil(w_max / width))
        x, wx = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(0.0, w_max, n_panels + 1)
        half = np.diff(edges)[:, None] / 2
        mid = (edges[:-1] + edges[1:])[:, None] / 2
        nodes = (mid + half * x).ravel()
        weights = (half * wx).ravel()
        return cls(nodes, weights * spectral_value(sd, nodes))


def measure_targets(measure: SpectralMeasure, beta, tau, q_max: int, p: int = 0,
                    side: int = 0):
    """Target functions for the coefficient projection.

    Returns an array ``(q_max + 1, len(tau))`` whose row ``q`` is
    ``(i d/dt)^q C(t)`` (``side=0``) or ``(-i d/dt)^q C(-t)`` (``side=1``),
    both after ``p`` applications of ``-d/dbeta``.
    """
    A, B = thermal_weights(measure.weight, measure.omega, beta, p)
    w = measure.omega
    out = np.empty((q_max + 1, len(tau)), dtype=complex)
    chunk = max(1, int(4e6 // max(len(tau), 1)))
    for q in range(q_max + 1):
        acc = np.zeros(len(tau), dtype=complex)
        for s in range(0, len(w), chunk):
            ws = w[s:s + chunk]
            ph = np.exp(-1j * np.multiply.outer(ws, tau))
            fa = A[s:s + chunk] * ws**q
            fb = B[s:s + chunk] * (-ws) ** q
            if side == 0:
                acc += fa @ ph + fb @ ph.conj()
            else:
                acc += fa @ ph.conj() + fb @ ph
        out[q] = acc
    return out


# --------------------------------------------------------------------------
# basis


@dataclass
class ExpansionBasis:
    """Exponential basis ``phi_r(t) = exp(g_r t)`` for one bath.

    ``thermal[p, 0]`` and ``thermal[p, 1]`` hold the coefficients of
    ``(-d/dbeta)^p C(t)`` and ``(-d/dbeta)^p C(-t)`` at ``beta``.
    ``coeffs[r, j, k, q]`` is the q-th derivative in ``i chi`` at chi = 0 of
    the side-resolved coefficient for ``scheme`` (set by
    :func:`counting_coefficients`).
    """

    exponents: np.ndarray
    beta: float
    thermal: np.ndarray
    source: dict
    scheme: Scheme = Scheme.TWO_POINT
    coeffs: np.ndarray | None = None
    counted: bool = False
    fit_residual: float = 0.0
    fit_tolerance: float = 0.0
    t_fit: float = 10.0
    thermal_fn: Callable | None = field(default=None, repr=False, compare=False)

    @property
    def n_terms(self) -> int:
        return len(self.exponents)

    @property
    def eta(self) -> np.ndarray:
        return np.diag(self.exponents)

    @property
    def phi0(self) -> np.ndarray:
        return np.ones(self.n_terms, dtype=complex)

    @property
    def q_max(self) -> int:
        return -1 if self.coeffs is None else self.coeffs.shape[-1] - 1

    def thermal_at(self, beta):
        """Coefficients ``(a, b)`` of C(t), C(-t) at a (complex) inverse temperature."""
        if beta == self.beta:
            return self.thermal[0, 0].copy(), self.thermal[0, 1].copy()
        if self.thermal_fn is None:
            raise RuntimeError("basis has no thermal evaluator; rebuild it from the bath")
        return self.thermal_fn(beta)

    def phi(self, t):
        return np.exp(np.multiply.outer(np.asarray(t, dtype=float), self.exponents))

    def reconstruct(self, t, j=0, k=0, q=0):
        """``sum_r c[r, j, k, q] phi_r(t)``."""
        return self.phi(t) @ self.coeffs[:, j, k, q]


def _bath_source(bath: BathModel) -> dict:
    if bath.modes is not None:
        return {"kind": "discrete", "modes": [list(m) for m in bath.modes]}
    sd = bath.spectral
    return {"kind": "continuum", "family": sd.family, "lam": sd.lam,
            "cutoff": sd.cutoff}


def _bath_from_source(source: dict, beta: float) -> BathModel:
    if source["kind"] == "discrete":
        return BathModel(beta, modes=tuple(tuple(m) for m in source["modes"]))
    return BathModel(beta, spectral=SpectralDensity(source["family"], source["lam"],
                                                    source["cutoff"]))


def _design(g, tau, q_max, side):
    sign = 1j if side == 0 else -1j
    e = np.exp(np.multiply.outer(tau, g))
    return np.stack([e * (sign * g) ** q for q in range(q_max + 1)])


class _Projector:
    """Weighted linear least squares onto a fixed exponential basis.

    The target is stacked over derivative orders q so that the analytic
    derivatives ``(+-i g)^q`` of the basis reproduce the derivative targets.
    Linear in the target, hence analytic in beta.
    """

    def __init__(self, g, tau, q_fit, row_weights):
        self.g = np.asarray(g)
        self.tau = tau
        self.q_fit = q_fit
        self.row_weights = np.asarray(row_weights)
        self._pinv = []
        for side in (0, 1):
            D = _design(self.g, tau, q_fit, side) * self.row_weights[:, None, None]
            D = D.reshape(-1, len(self.g))
            self._pinv.append(np.linalg.pinv(D, rcond=1e-13))

    def __call__(self, targets, side):
        y = (targets * self.row_weights[:, None]).ravel()
        return self._pinv[side] @ y


def _row_weights(ref_targets):
    scale = np.max(np.abs(ref_targets), axis=1)
    scale[scale == 0] = 1.0
    return 1.0 / scale


def _discrete_basis(bath: BathModel, p_max: int, t_fit: float):
    w = np.array([m[0] for m in bath.modes], dtype=float)
    g2 = np.array([m[1] for m in bath.modes], dtype=float) ** 2
    g = np.concatenate([-1j * w, 1j * w])

    def thermal_fn(beta, p=0):
        A, B = thermal_weights(g2, w, beta, p)
        a = np.concatenate([A, B])
        b = np.concatenate([B, A])
        return a, b

    thermal = np.array([thermal_fn(bath.beta, p) for p in range(p_max + 1)])
    return ExpansionBasis(g, bath.beta, thermal, _bath_source(bath),
                          counted=bath.counted, t_fit=t_fit,
                          thermal_fn=lambda beta: thermal_fn(beta, 0))


def _drude_matsubara(sd: SpectralDensity, beta: float, n_matsubara: int):
    lam, gam = sd.lam, sd.cutoff
    nu = 2 * np.pi * np.arange(1, n_matsubara + 1) / beta
    g = np.concatenate([[-gam], -nu]).astype(complex)
    cot = 1.0 / np.tan(beta * gam / 2)
    ck = 4 * lam * gam * nu / (beta * (nu**2 - gam**2))
    a = np.concatenate([[lam * gam * (cot - 1j)], ck]).astype(complex)
    b = np.concatenate([[lam * gam * (cot + 1j)], ck]).astype(complex)
    return g, a, b


def matrix_pencil(samples, dt, n_terms):
    """Exponents ``g`` with ``samples[k] ~ sum_r c_r exp(g_r k dt)``."""
    y = np.asarray(samples, dtype=complex)
    n = len(y)
    L = n // 2
    Y = np.array([y[i:i + L + 1] for i in range(n - L)])
    _, _, vh = np.linalg.svd(Y, full_matrices=False)
    v = vh[:n_terms].conj().T
    v1, v2 = v[:-1], v[1:]
    z = np.linalg.eigvals(np.linalg.pinv(v1) @ v2)
    return np.log(z.astype(complex)) / dt


def fit_exponents(target_sets, tau, n_terms, q_fit, decay_bounds, guess=None):
    """Least-squares exponents shared by every target set.

    ``target_sets`` is a list of ``(targets_side0, targets_side1)`` arrays of
    shape ``(q_fit + 1, len(tau))``; the linear coefficients are eliminated
    (variable projection) and the decay rates are kept in ``decay_bounds``.
    """
    lo, hi = decay_bounds
    weights = _row_weights(target_sets[0][0])
    if guess is None:
        guess = matrix_pencil(target_sets[0][0][0], tau[1] - tau[0], n_terms)
    guess = np.asarray(guess, dtype=complex)
    kap = np.clip(-guess.real, lo * 1.01, hi * 0.99)
    x0 = np.concatenate([np.log(kap), guess.imag])
    ys = []
    for s0, s1 in target_sets:
        for side, tg in ((0, s0), (1, s1)):
            ys.append((side, (tg * weights[:, None]).ravel()))

    def unpack(x):
        return -np.exp(x[:n_terms]) + 1j * x[n_terms:]

    def resid(x):
        g = unpack(x)
        out = []
        for side in (0, 1):
            D = (_design(g, tau, q_fit, side) * weights[:, None, None]).reshape(-1, n_terms)
            Y = np.stack([y for s, y in ys if s == side], axis=1)
            coef, *_ = np.linalg.lstsq(D, Y, rcond=None)
            r = (D @ coef - Y).ravel()
            out.append(r.real)
            out.append(r.imag)
        return np.concatenate(out)

    lb = np.concatenate([np.full(n_terms, np.log(lo)), np.full(n_terms, -np.inf)])
    ub = np.concatenate([np.full(n_terms, np.log(hi)), np.full(n_terms, np.inf)])
    sol = optimize.least_squares(resid, x0, bounds=(lb, ub), x_scale="jac",
                                 max_nfev=400 * len(x0))
    return unpack(sol.x)


def _continuum_basis(bath: BathModel, p_max: int, q_fit: int, t_fit: float,
                     n_samples: int, exponents=None, n_terms=6, n_matsubara=None,
                     measure=None):
    sd = bath.spectral
    tau = np.linspace(0.0, t_fit, n_samples)
    if measure is None:
        measure = SpectralMeasure.gauss_legendre(sd, bath.beta, t_fit)
    analytic = None
    if sd.family == "drude" and exponents is None:
        if n_matsubara is None:
            n_matsubara = 4
        g, a0, b0 = _drude_matsubara(sd, bath.beta, n_matsubara)
        analytic = (a0, b0)
        exponents = g
    ref0 = measure_targets(measure, bath.beta, tau, q_fit, 0, 0)
    if exponents is None:
        targets = [(ref0, measure_targets(measure, bath.beta, tau, q_fit, 0, 1))]
        decay = (0.02 * sd.cutoff, 12.0 * sd.cutoff)
        exponents = fit_exponents(targets, tau, n_terms, q_fit, decay)
    exponents = np.asarray(exponents, dtype=complex)
    if sd.family == "drude":
        # the Drude C(t) is singular at t = 0; weight only the smooth
        # thermal-derivative targets
        ref_w = measure_targets(measure, bath.beta, tau, q_fit, 1, 0)
    else:
        ref_w = ref0
    proj = _Projector(exponents, tau, q_fit, _row_weights(ref_w))
    beta_ref = bath.beta

    def project(beta, p):
        t0 = measure_targets(measure, beta, tau, q_fit, p, 0)
        t1 = measure_targets(measure, beta, tau, q_fit, p, 1)
        return proj(t0, 0), proj(t1, 1)

    if analytic is not None:
        a_ref, b_ref = analytic

        def thermal_fn(beta):
            if beta == beta_ref:
                return a_ref.copy(), b_ref.copy()
            # project only the (smooth, exponentially decaying) change
            A1, B1 = thermal_weights(measure.weight, measure.omega, beta, 0)
            A0, B0 = thermal_weights(measure.weight, measure.omega, beta_ref, 0)
            diff = SpectralMeasure(measure.omega, np.ones_like(measure.omega))
            t0 = _targets_from_weights(diff, A1 - A0, B1 - B0, tau, q_fit, 0)
            t1 = _targets_from_weights(diff, A1 - A0, B1 - B0, tau, q_fit, 1)
            return a_ref + proj(t0, 0), b_ref + proj(t1, 1)
        thermal = [analytic]
    else:
        def thermal_fn(beta):
            return project(beta, 0)
        thermal = [project(beta_ref, 0)]
    for p in range(1, p_max + 1):
        thermal.append(project(beta_ref, p))
    thermal = np.array(thermal)
    basis = ExpansionBasis(exponents, bath.beta, thermal, _bath_source(bath),
                           counted=bath.counted, t_fit=t_fit, thermal_fn=thermal_fn)
    exact = np.array([bare_correlation(bath, x) for x in
                      np.linspace(0 if sd.family == "ohmic" else t_fit / 20,
                                  t_fit, 41)])
    grid = np.linspace(0 if sd.family == "ohmic" else t_fit / 20, t_fit, 41)
    approx = np.exp(np.multiply.outer(grid, exponents)) @ thermal[0, 0]
    basis.fit_residual = float(np.max(np.abs(exact - approx)))
    return basis


def _targets_from_weights(measure, A, B, tau, q_max, side):
    w = measure.omega
    out = np.empty((q_max + 1, len(tau)), dtype=complex)
    ph = np.exp(-1j * np.multiply.outer(w, tau))
    for q in range(q_max + 1):
        fa = A * w**q
        fb = B * (-w) ** q
        out[q] = fa @ ph + fb @ ph.conj() if side == 0 else fa @ ph.conj() + fb @ ph
    return out


def decompose(bath: BathModel, scheme=None, n_matsubara: int | None = None, *,
              n_terms: int = 8, q_max: int = 5, t_fit: float = 10.0,
              n_samples: int = 400, tol: float | None = None, rtol: float = 1e-4,
              exponents=None, strict: bool = True) -> ExpansionBasis:
    """Exponential decomposition of ``C(t)`` with counting tables attached.

    Discrete baths use the exact basis ``exp(-+ i w_k t)``.  Drude-Lorentz
    baths use ``n_matsubara`` Matsubara terms.  Ohmic baths are fitted with
    ``n_terms`` complex exponentials on ``[0, t_fit]``.  ``tol`` is the
    absolute reconstruction tolerance (default ``rtol |C(0)|``); ``strict``
    turns a miss into :class:`FitError`.
    """
    scheme = Scheme.parse(scheme if scheme is not None else bath.scheme)
    if bath.modes is not None:
        basis = _discrete_basis(bath, q_max, t_fit)
    else:
        if bath.spectral.lam == 0:
            g = np.array([-bath.spectral.cutoff], dtype=complex)
            z = np.zeros((q_max + 1, 2, 1), dtype=complex)
            basis = ExpansionBasis(g, bath.beta, z, _bath_source(bath),
                                   counted=bath.counted, t_fit=t_fit,
                                   thermal_fn=lambda beta: (z[0, 0], z[0, 1]))
        else:
            basis = _continuum_basis(bath, q_max, 0, t_fit, n_samples,
                                     exponents=exponents, n_terms=n_terms,
                                     n_matsubara=n_matsubara)
            c0 = abs(bare_correlation(bath, 0.0)) if bath.spectral.family == "ohmic" \
                else abs(bare_correlation(bath, t_fit / 20))
            basis.fit_tolerance = tol if tol is not None else rtol * c0
            if basis.fit_residual > basis.fit_tolerance:
                if strict:
                    raise FitError("exponential decomposition above tolerance",
                                   basis.fit_residual)
                warnings.warn(f"decomposition residual {basis.fit_residual:.3g} "
                              f"exceeds {basis.fit_tolerance:.3g}")
            if bath.spectral.family == "drude":
                nu_next = 2 * np.pi * ((n_matsubara or 4) + 1) / bath.beta
                if nu_next < 5 * bath.spectral.cutoff:
                    warnings.warn("low temperature: the Matsubara expansion needs "
                                  "many terms for this bath")
    if bath.counted:
        counting_coefficients(basis, bath, scheme, q_max)
    else:
        _uncounted_coefficients(basis, q_max)
    basis.scheme = scheme
    return basis


def decompose_shared(baths: Sequence[BathModel], *, n_terms: int = 8, q_max: int = 5,
                     t_fit: float = 10.0, n_samples: int = 400, tol=None,
                     rtol: float = 1e-4, strict: bool = True, exponents=None):
    """Decompose several baths on one common set of exponents.

    Continuum baths sharing family and cutoff are fitted jointly (their
    hierarchy slots can then be merged); discrete baths keep their exact
    bases.  Returns the list of bases in input order.
    """
    bases = [None] * len(baths)
    groups: dict[tuple, list[int]] = {}
    for i, b in enumerate(baths):
        if b.modes is None and b.spectral.lam > 0 and b.spectral.family == "ohmic":
            groups.setdefault((b.spectral.family, b.spectral.cutoff), []).append(i)
        else:
            bases[i] = decompose(b, n_terms=n_terms, q_max=q_max, t_fit=t_fit,
                                 n_samples=n_samples, tol=tol, rtol=rtol, strict=strict)
    tau = np.linspace(0.0, t_fit, n_samples)
    for idx in groups.values():
        g = exponents
        if g is None:
            sets = []
            for i in idx:
                m = SpectralMeasure.gauss_legendre(baths[i].spectral, baths[i].beta, t_fit)
                sets.append((measure_targets(m, baths[i].beta, tau, 0, 0, 0),
                             measure_targets(m, baths[i].beta, tau, 0, 0, 1)))
            cut = baths[idx[0]].spectral.cutoff
            g = fit_exponents(sets, tau, n_terms, 0, (0.02 * cut, 12.0 * cut))
        for i in idx:
            bases[i] = decompose(baths[i], n_terms=n_terms, q_max=q_max, t_fit=t_fit,
                                 n_samples=n_samples, tol=tol, rtol=rtol, strict=strict,
                                 exponents=g)
    return bases


def _uncounted_coefficients(basis: ExpansionBasis, q_max: int):
    a, b = basis.thermal[0]
    c = np.zeros((basis.n_terms, 2, 2, q_max + 1), dtype=complex)
    c[:, 0, 0, 0] = a
    c[:, 1, 1, 0] = b
    c[:, 1, 0, 0] = -a
    c[:, 0, 1, 0] = -b
    basis.coeffs = c
    return basis


def counting_coefficients(basis: ExpansionBasis, bath: BathModel, scheme,
                          q_max: int = 5) -> ExpansionBasis:
    """Fill ``basis.coeffs[r, j, k, q]`` for energy counting on ``bath``.

    TwoPoint: only the time shifts depend on chi, giving factors
    ``(+-i g_r)^q``.  Single: the thermal weights at ``beta - i chi``
    contribute ``(-d/dbeta)^p`` derivatives combined by Leibniz' rule.
    """
    if bath.observable != "energy":
        raise UnsupportedObservable(f"counting observable {bath.observable!r} "
                                    "is not supported (bath energy only)")
    scheme = Scheme.parse(scheme)
    if basis.thermal.shape[0] <= q_max and scheme is Scheme.SINGLE:
        raise ValueError("basis lacks thermal derivative tables up to q_max")
    g = basis.exponents
    R = len(g)
    a_p = np.zeros((q_max + 1, R), dtype=complex)
    b_p = np.zeros((q_max + 1, R), dtype=complex)
    a_p[0], b_p[0] = basis.thermal[0]
    if scheme is Scheme.SINGLE:
        a_p[1:] = basis.thermal[1:q_max + 1, 0]
        b_p[1:] = basis.thermal[1:q_max + 1, 1]
    c = np.zeros((R, 2, 2, q_max + 1), dtype=complex)
    for q in range(q_max + 1):
        c[:, 0, 0, q] = a_p[q]
        c[:, 1, 1, q] = b_p[q]
        s10 = sum(comb(q, p) * a_p[p] * (1j * g) ** (q - p) for p in range(q + 1))
        s01 = sum(comb(q, p) * b_p[p] * (-1j * g) ** (q - p) for p in range(q + 1))
        c[:, 1, 0, q] = -s10
        c[:, 0, 1, q] = -s01
    basis.coeffs = c
    basis.scheme = scheme
    basis.counted = True
    return basis


def coefficients_at(basis: ExpansionBasis, chi: float, scheme=None, beta=None):
    """Side-resolved coefficients ``c[r, j, k]`` at a finite counting field.

    ``beta`` overrides the thermal inverse temperature (it may be complex,
    which is how ``G(chi, beta - i chi, t)`` is evaluated directly).
    """
    scheme = Scheme.parse(scheme if scheme is not None else basis.scheme)
    if not basis.counted:
        chi = 0.0
    b_eff = basis.beta if beta is None else beta
    if basis.counted and scheme is Scheme.SINGLE:
        b_eff = b_eff - 1j * chi
    a, b = basis.thermal_at(b_eff)
    g = basis.exponents
    c = np.zeros((len(g), 2, 2), dtype=complex)
    c[:, 0, 0] = a
    c[:, 1, 1] = b
    c[:, 1, 0] = -a * np.exp(-g * chi)
    c[:, 0, 1] = -b * np.exp(g * chi)
    return c


def dressed_correlation(bath: BathModel, chi: float, t, j: int, k: int, scheme=None):
    """Exact ``C^{jk}(chi, t)`` of a discrete bath from the dressed mode sum."""
    if bath.modes is None:
        raise ValueError("exact dressed correlation needs a discrete bath")
    scheme = Scheme.parse(scheme if scheme is not None else bath.scheme)
    beta = bath.beta - 1j * chi if scheme is Scheme.SINGLE else bath.beta
    w = np.array([m[0] for m in bath.modes])
    g2 = np.array([m[1] for m in bath.modes]) ** 2
    A, B = thermal_weights(g2, w, beta)
    t = np.asarray(t, dtype=float)

    def corr(x):
        ph = np.exp(-1j * np.multiply.outer(x, w))
        return ph @ A + ph.conj() @ B

    if (j, k) == (0, 0):
        return corr(t)
    if (j, k) == (1, 1):
        return corr(-t)
    if (j, k) == (1, 0):
        return -corr(t - chi)
    return -corr(-t - chi)


def dump_basis(basis: ExpansionBasis, path):
    """Write the basis as JSON (complex numbers as ``[re, im]`` pairs)."""
    def cx(a):
        a = np.asarray(a)
        return np.stack([a.real, a.imag], axis=-1).tolist()
    doc = {
        "format": "fcsheom-basis/1",
        "beta": basis.beta,
        "scheme": basis.scheme.value,
        "counted": basis.counted,
        "t_fit": basis.t_fit,
        "fit_residual": basis.fit_residual,
        "fit_tolerance": basis.fit_tolerance,
        "source": basis.source,
        "exponents": cx(basis.exponents),
        "eta": cx(basis.eta),
        "phi0": cx(basis.phi0),
        "thermal": cx(basis.thermal),
        "coeffs": cx(basis.coeffs) if basis.coeffs is not None else None,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_basis(path) -> ExpansionBasis:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "fcsheom-basis/1":
        raise ValueError(f"{path}: not a basis dump")

    def cx(a):
        a = np.asarray(a, dtype=float)
        return a[..., 0] + 1j * a[..., 1]
    g = cx(doc["exponents"])
    basis = ExpansionBasis(g, doc["beta"], cx(doc["thermal"]), doc["source"],
                           scheme=Scheme.parse(doc["scheme"]),
                           coeffs=cx(doc["coeffs"]) if doc["coeffs"] is not None else None,
                           counted=doc["counted"], fit_residual=doc["fit_residual"],
                           fit_tolerance=doc["fit_tolerance"], t_fit=doc["t_fit"])
    if not np.allclose(cx(doc["eta"]), np.diag(g)):
        raise ValueError(f"{path}: eta is not the diagonal of the exponents")
    # re-attach the evaluator at complex temperature
    bath = _bath_from_source(doc["source"], doc["beta"])
    if bath.modes is not None:
        basis.thermal_fn = _discrete_basis(bath, 0, basis.t_fit).thermal_fn
    elif bath.spectral.lam > 0:
        if bath.spectral.family == "drude":
            rebuilt = _continuum_basis(bath, 0, 0, basis.t_fit, 400,
                                       n_matsubara=len(g) - 1)
        else:
            rebuilt = _continuum_basis(bath, 0, 0, basis.t_fit, 400, exponents=g)
        basis.thermal_fn = rebuilt.thermal_fn
    return basis
