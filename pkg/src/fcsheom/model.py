"""
Physical setup: system Hamiltonian, couplings, baths and their validation.

Units are hbar = k_B = 1 with energies in units of the bare splitting
``omega0`` and times in ``1/omega0``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)


class ValidationError(ValueError):
    """Raised when a model or bath violates one of its invariants."""


class Scheme(str, enum.Enum):
    TWO_POINT = "TwoPoint"
    SINGLE = "Single"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).replace("_", "").replace("-", "").lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown measurement scheme {value!r}")


@dataclass(frozen=True)
class SpectralDensity:
    """Continuous spectral density ``J(omega)``.

    ``family`` is ``"ohmic"`` (exponential cutoff, ``cutoff`` is omega_c)
    or ``"drude"`` (Drude-Lorentz, ``cutoff`` is the width gamma).  In both
    cases ``lam`` is the reorganization energy, ``int_0^inf J(w)/w dw``.
    """

    family: str
    lam: float
    cutoff: float

    def __post_init__(self):
        fam = self.family.lower().replace("-", "").replace("_", "")
        aliases = {"ohmic": "ohmic", "ohmicexpcutoff": "ohmic",
                   "drude": "drude", "drudelorentz": "drude"}
        if fam not in aliases:
            raise ValidationError(f"unknown spectral family {self.family!r}")
        object.__setattr__(self, "family", aliases[fam])
        if not self.lam >= 0:
            raise ValidationError("reorganization energy must be non-negative")
        if not self.cutoff > 0:
            raise ValidationError("cutoff frequency must be positive")

    def __call__(self, omega):
        return spectral_value(self, omega)


@dataclass(frozen=True)
class BathModel:
    """One bosonic bath coupled through ``V_nu (x) sum_k g_k (a_k + a_k^+)``.

    Exactly one of ``spectral`` (continuum) or ``modes`` (a finite list of
    ``(omega_k, gamma_k)``) is set.  ``counted`` marks the bath whose energy
    is the counting observable; ``scheme`` selects two-point or
    single-measurement statistics for it.
    """

    beta: float
    spectral: SpectralDensity | None = None
    modes: tuple[tuple[float, float], ...] | None = None
    counted: bool = False
    scheme: Scheme = Scheme.TWO_POINT
    observable: str = "energy"

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if self.modes is not None:
            modes = tuple((float(w), float(g)) for w, g in self.modes)
            object.__setattr__(self, "modes", modes)

    @property
    def kind(self) -> str:
        return "discrete" if self.modes is not None else "continuum"

    @property
    def temperature(self) -> float:
        return 1.0 / self.beta

    def with_beta(self, beta) -> "BathModel":
        return BathModel(beta=beta, spectral=self.spectral, modes=self.modes,
                         counted=self.counted, scheme=self.scheme,
                         observable=self.observable)

    def with_scheme(self, scheme) -> "BathModel":
        return BathModel(beta=self.beta, spectral=self.spectral,
                         modes=self.modes, counted=self.counted,
                         scheme=Scheme.parse(scheme),
                         observable=self.observable)

    def scaled(self, factor: float) -> "BathModel":
        """Bath with the coupling strength (J or gamma_k^2) multiplied."""
        if self.modes is not None:
            modes = tuple((w, g * np.sqrt(factor)) for w, g in self.modes)
            return BathModel(self.beta, None, modes, self.counted,
                             self.scheme, self.observable)
        sd = SpectralDensity(self.spectral.family, self.spectral.lam * factor,
                             self.spectral.cutoff)
        return BathModel(self.beta, sd, None, self.counted, self.scheme,
                         self.observable)


@dataclass(frozen=True)
class SystemModel:
    h_sys: np.ndarray
    couplings: tuple[np.ndarray, ...]
    rho0: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        h = np.asarray(self.h_sys, dtype=complex)
        object.__setattr__(self, "h_sys", h)
        object.__setattr__(self, "couplings",
                           tuple(np.asarray(v, dtype=complex) for v in self.couplings))
        object.__setattr__(self, "rho0", np.asarray(self.rho0, dtype=complex))
        object.__setattr__(self, "dim", h.shape[0])


@dataclass
class ValidationReport:
    ok: bool
    failed: str | None = None
    message: str = ""

    def __bool__(self):
        return self.ok

    def raise_if_failed(self):
        if not self.ok:
            raise ValidationError(f"{self.failed}: {self.message}")


def spectral_value(sd: SpectralDensity, omega):
    """Evaluate ``J(omega)`` for ``omega >= 0``."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("spectral density is defined for omega >= 0")
    if sd.family == "ohmic":
        val = sd.lam / sd.cutoff * w * np.exp(-w / sd.cutoff)
    else:
        # normalised so that int J/w = lam
        val = 2 * sd.lam / np.pi * sd.cutoff * w / (w**2 + sd.cutoff**2)
    return val if val.ndim else float(val)


def _is_hermitian(a, tol=HERMITIAN_TOL):
    return np.max(np.abs(a - a.conj().T), initial=0.0) <= tol


def validate(model: SystemModel, baths: Sequence[BathModel]) -> ValidationReport:
    """Check every invariant; report the first violated one by name."""
    h = model.h_sys
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 1:
        return ValidationReport(False, "dimension", "h_sys must be square")
    d = model.dim
    mats = [("h_sys", h), ("rho0", model.rho0)]
    mats += [(f"coupling[{i}]", v) for i, v in enumerate(model.couplings)]
    for name, m in mats:
        if m.shape != (d, d):
            return ValidationReport(False, "dimension", f"{name} has shape {m.shape}")
    for name, m in mats:
        if not _is_hermitian(m):
            return ValidationReport(False, "hermiticity", f"{name} is not Hermitian")
    tr = np.trace(model.rho0)
    if abs(tr - 1) > HERMITIAN_TOL:
        return ValidationReport(False, "trace", f"tr rho0 = {tr.real:.12g}")
    if np.linalg.eigvalsh(model.rho0).min() < -HERMITIAN_TOL:
        return ValidationReport(False, "positivity", "rho0 has a negative eigenvalue")
    if len(baths) != len(model.couplings):
        return ValidationReport(False, "baths",
                                f"{len(baths)} baths for {len(model.couplings)} couplings")
    for i, b in enumerate(baths):
        if np.iscomplexobj(b.beta) or not b.beta > 0:
            return ValidationReport(False, "beta", f"bath {i} has beta={b.beta}")
        if (b.spectral is None) == (b.modes is None):
            return ValidationReport(False, "kind",
                                    f"bath {i} needs exactly one of spectral/modes")
        if b.modes is not None and any(w <= 0 for w, _ in b.modes):
            return ValidationReport(False, "frequency",
                                    f"bath {i} has a non-positive mode frequency")
    n_counted = sum(b.counted for b in baths)
    if n_counted != 1:
        return ValidationReport(False, "counted",
                                f"{n_counted} counted baths (exactly one required)")
    return ValidationReport(True)


def build_two_level_model(omega0: float, tunneling: float,
                          bath_params: Sequence[dict]):
    """Two-level system ``omega0 sx + J sz`` with ``sz`` coupling to each bath.

    Each entry of ``bath_params`` accepts ``family`` (``ohmic``/``drude``),
    ``lam``, ``omega_c`` (or ``gamma``), ``T`` or ``beta``, optionally
    ``modes`` instead of a spectral family, ``counted`` and ``scheme``.  When
    no bath is flagged the first one is counted.
    """
    if not omega0 > 0:
        raise ValidationError("omega0 must be positive")
    h = omega0 * SIGMA_X + tunneling * SIGMA_Z
    rho0 = (SIGMA_X + IDENTITY2) / 2
    baths = []
    any_counted = any(p.get("counted", False) for p in bath_params)
    for i, p in enumerate(bath_params):
        baths.append(bath_from_params(p, counted_default=(i == 0 and not any_counted)))
    model = SystemModel(h, tuple(SIGMA_Z.copy() for _ in baths), rho0)
    validate(model, baths).raise_if_failed()
    return model, baths


def bath_from_params(p: dict, counted_default=False) -> BathModel:
    if "beta" in p:
        beta = float(p["beta"])
    elif "T" in p:
        T = float(p["T"])
        if not T > 0:
            raise ValidationError("temperature must be positive")
        beta = 1.0 / T
    else:
        raise ValidationError("bath needs a temperature T or beta")
    if not beta > 0:
        raise ValidationError("beta must be positive")
    counted = bool(p.get("counted", counted_default))
    scheme = Scheme.parse(p.get("scheme", "TwoPoint"))
    if "modes" in p:
        modes = tuple((float(w), float(g)) for w, g in p["modes"])
        return BathModel(beta, modes=modes, counted=counted, scheme=scheme)
    family = p.get("family", "ohmic")
    cutoff = p.get("omega_c", p.get("gamma", p.get("cutoff")))
    if cutoff is None:
        raise ValidationError("continuum bath needs omega_c (or gamma)")
    sd = SpectralDensity(family, float(p.get("lam", 0.0)), float(cutoff))
    return BathModel(beta, spectral=sd, counted=counted, scheme=scheme,
                     observable=p.get("observable", "energy"))


def model_from_config(section: dict):
    """Build ``(SystemModel, baths)`` from a parsed configuration section.

    Either ``two_level: {omega0, J}`` or explicit ``h_sys``/``couplings``/
    ``rho0`` matrices (nested lists; complex entries as ``[re, im]`` pairs
    or strings accepted by ``complex``).
    """
    baths_cfg = section.get("baths")
    if not baths_cfg:
        raise ValidationError("model section needs a non-empty 'baths' list")
    if "two_level" in section:
        tl = section["two_level"]
        return build_two_level_model(float(tl.get("omega0", 1.0)),
                                     float(tl.get("J", 0.0)), baths_cfg)
    try:
        h = _matrix(section["h_sys"])
        rho0 = _matrix(section["rho0"])
        couplings = tuple(_matrix(v) for v in section["couplings"])
    except KeyError as exc:
        raise ValidationError(f"model section lacks {exc.args[0]!r}") from None
    any_counted = any(p.get("counted", False) for p in baths_cfg)
    baths = [bath_from_params(p, counted_default=(i == 0 and not any_counted))
             for i, p in enumerate(baths_cfg)]
    model = SystemModel(h, couplings, rho0)
    validate(model, baths).raise_if_failed()
    return model, baths


def _matrix(rows):
    def entry(x):
        if isinstance(x, (list, tuple)):
            return complex(float(x[0]), float(x[1]))
        return complex(x)
    return np.array([[entry(x) for x in row] for row in rows], dtype=complex)
