"""
Exact references: finite bosonic modes with direct two-point statistics,
and a weak-coupling counting-field master equation.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import linalg

from .model import BathModel, Scheme, SystemModel, spectral_value
from .statistics import write_table_csv

MAX_DIM = 4096


class OracleTooLarge(ValueError):
    pass


def _destroy(n):
    return np.diag(np.sqrt(np.arange(1, n)), 1).astype(complex)


def _embed(op, pos, dims):
    out = np.array([[1.0 + 0j]])
    for i, dd in enumerate(dims):
        out = np.kron(out, op if i == pos else np.eye(dd))
    return out


@dataclass
class FiniteModeSystem:
    """System plus truncated harmonic modes, treated as one closed system.

    ``modes[nu]`` lists ``(omega_k, gamma_k)`` for bath ``nu``; every mode
    uses ``fock_cutoff`` levels.  The counted bath's energy is the
    observable ``O``.
    """

    model: SystemModel
    betas: Sequence[float]
    modes: Sequence[Sequence[tuple]]
    fock_cutoff: int = 5
    counted: int = 0
    leak_tol: float = 1e-6
    flags: dict = field(default_factory=dict)

    @classmethod
    def from_baths(cls, model: SystemModel, baths: Sequence[BathModel], fock_cutoff=5):
        counted = [i for i, b in enumerate(baths) if b.counted]
        if any(b.modes is None for b in baths):
            raise ValueError("the finite-mode oracle needs discrete baths")
        return cls(model, [b.beta for b in baths], [b.modes for b in baths],
                   fock_cutoff, counted[0] if counted else 0)

    def __post_init__(self):
        n_modes = sum(len(m) for m in self.modes)
        self.dim = self.model.dim * self.fock_cutoff ** n_modes
        if self.dim > MAX_DIM:
            raise OracleTooLarge(f"oracle dimension {self.dim} exceeds {MAX_DIM}")

    @cached_property
    def _ops(self):
        d = self.model.dim
        nc = self.fock_cutoff
        mode_list = [(nu, w, g) for nu, ms in enumerate(self.modes) for (w, g) in ms]
        dims = [d] + [nc] * len(mode_list)
        a = _destroy(nc)
        num = np.diag(np.arange(nc)).astype(complex)
        H = _embed(self.model.h_sys, 0, dims)
        O = np.zeros(self.dim)
        hb_diag = [np.zeros(self.dim) for _ in self.modes]
        for i, (nu, w, g) in enumerate(mode_list):
            n_i = np.real(np.diag(_embed(num, i + 1, dims)))
            hb_diag[nu] += w * n_i
            x = _embed(a + a.conj().T, i + 1, dims)
            H = H + g * _embed(self.model.couplings[nu], 0, dims) @ x
            if nu == self.counted:
                O += w * n_i
        for hb in hb_diag:
            H = H + np.diag(hb)
        top = np.zeros(self.dim, bool)
        for i in range(len(mode_list)):
            top |= np.real(np.diag(_embed(num, i + 1, dims))) == nc - 1
        return {"H": H, "O": O, "hb": hb_diag, "top": top}

    @property
    def hamiltonian(self):
        return self._ops["H"]

    @property
    def observable(self):
        return self._ops["O"]

    def bath_hamiltonian(self, nu):
        return np.diag(self._ops["hb"][nu])

    @cached_property
    def _eig(self):
        lam, Q = linalg.eigh(self.hamiltonian)
        return lam, Q

    def initial_state(self, beta_counted=None):
        """``rho0 (x) exp(-beta_nu H_nu) / Z`` (the counted beta may be complex)."""
        w = np.zeros(self.dim, dtype=complex)
        for nu, hb in enumerate(self._ops["hb"]):
            b = self.betas[nu]
            if nu == self.counted and beta_counted is not None:
                b = beta_counted
            w = w - b * hb
        d = self.model.dim
        bath_w = np.exp(w.reshape(d, -1)[0] - w.reshape(d, -1)[0].real.min())
        bath_w = bath_w / bath_w.sum()
        return np.kron(self.model.rho0, np.diag(bath_w))

    def evolve(self, rho, t):
        lam, Q = self._eig
        x = Q.conj().T @ rho @ Q
        ph = np.exp(-1j * lam * t)
        x = ph[:, None] * x * ph.conj()[None, :]
        return Q @ x @ Q.conj().T

    def leakage(self, times):
        """Largest population on any mode's top Fock level along ``times``."""
        rho = self.initial_state()
        lam, Q = self._eig
        x = Q.conj().T @ rho @ Q
        top = self._ops["top"]
        Qt = Q[top]
        worst = 0.0
        for t in np.atleast_1d(times):
            ph = np.exp(-1j * lam * t)
            xt = ph[:, None] * x * ph.conj()[None, :]
            pop = np.sum((Qt @ xt) * Qt.conj()).real
            worst = max(worst, pop)
        return worst

    def _phase_sum(self, P, times):
        lam = self._eig[0]
        out = np.empty(len(times), dtype=complex)
        for i, t in enumerate(times):
            ph = np.exp(-1j * lam * t)
            out[i] = np.einsum("ab,a,b->", P, ph, ph.conj())
        return out


def exact_cgf(fm: FiniteModeSystem, chi, times, scheme=Scheme.TWO_POINT, beta=None,
              check_leakage=True):
    """Exact ``G(chi, t)`` on a time grid (complex, phase-unwrapped in t).

    TwoPoint: ``ln tr[e^{i chi O} U e^{-i chi O} pi U^+]``.  Single:
    ``ln tr[e^{i chi O} U pi U^+] - ln tr[e^{i chi O} pi]``.  ``beta``
    overrides the counted bath's inverse temperature and may be complex.
    """
    scheme = Scheme.parse(scheme)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    lam, Q = fm._eig
    O = fm.observable
    pi = fm.initial_state(beta)
    eo = np.exp(1j * chi * O)
    Oe = Q.conj().T @ (eo[:, None] * Q)                   # <a|e^{i chi O}|b>
    if scheme is Scheme.TWO_POINT:
        X = Q.conj().T @ ((eo.conj()[:, None] * pi) @ Q)
        norm = 0.0
    else:
        X = Q.conj().T @ pi @ Q
        norm = np.log(np.sum(eo * np.diag(pi)))
    P = Oe.T * X
    tr = fm._phase_sum(P, times)
    if check_leakage:
        leak = fm.leakage(times[:: max(1, len(times) // 10)])
        fm.flags["leakage"] = leak
        if leak > fm.leak_tol:
            fm.flags["unreliable"] = True
            warnings.warn(f"Fock leakage {leak:.2e} above {fm.leak_tol:.0e}; "
                          "oracle result unreliable")
    G = np.log(np.abs(tr)) + 1j * np.unwrap(np.angle(tr))
    return G - norm


def identity_check_eq5(fm: FiniteModeSystem, chis, times, check_leakage=False) -> float:
    """``max |G_S(chi, beta, t) - G(chi, beta - i chi, t)|`` over the grids."""
    worst = 0.0
    beta = fm.betas[fm.counted]
    for chi in np.atleast_1d(chis):
        gs = exact_cgf(fm, chi, times, Scheme.SINGLE, check_leakage=check_leakage)
        gt = exact_cgf(fm, chi, times, Scheme.TWO_POINT, beta=beta - 1j * chi,
                       check_leakage=False)
        worst = max(worst, float(np.max(np.abs(gs - gt))))
    return worst


def projective_moments(fm: FiniteModeSystem, t: float, order: int = 2):
    """Moments of ``Delta o`` from the two-point outcome distribution.

    Enumerates the eigenvalues of ``O`` (diagonal in the Fock basis), forms
    ``p(i -> f) = tr[P_f U P_i pi P_i U^+]`` and sums ``(o_f - o_i)^k p``.
    """
    O = fm.observable
    vals = np.unique(np.round(O, 12))
    pi = fm.initial_state()
    lam, Q = fm._eig
    ph = np.exp(-1j * lam * t)
    U = (Q * ph) @ Q.conj().T
    masks = [np.abs(O - v) < 1e-9 for v in vals]
    mom = np.zeros(order + 1)
    total = 0.0
    for vi, mi in zip(vals, masks):
        sub = pi[np.ix_(mi, mi)]
        if np.max(np.abs(sub)) == 0:
            continue
        Ui = U[:, mi]
        pop = np.einsum("ia,ab,ib->i", Ui, sub, Ui.conj()).real
        for vf, mf in zip(vals, masks):
            p = pop[mf].sum()
            total += p
            for k in range(order + 1):
                mom[k] += (vf - vi) ** k * p
    return mom


# --------------------------------------------------------------------------
# weak coupling


def _secular_rates(model: SystemModel, baths, chi_counted=0.0):
    """Counting-dressed secular Born-Markov generator on eigenstate populations.

    A jump ``a -> b`` of the system releases ``E_a - E_b`` into bath nu at
    rate ``2 pi J(w) (n+1) |V_ba|^2`` (w > 0) or absorbs at
    ``2 pi J(|w|) n |V_ba|^2`` (w < 0); the counted bath's energy change
    ``w`` is tagged with ``exp(i chi w)``.
    """
    E, P = np.linalg.eigh(model.h_sys)
    d = len(E)
    W = np.zeros((d, d), dtype=complex)
    for nu, (V, bath) in enumerate(zip(model.couplings, baths)):
        Vt = P.conj().T @ V @ P
        for a in range(d):
            for b in range(d):
                if a == b:
                    continue
                w = E[a] - E[b]
                if abs(w) < 1e-12:
                    continue
                jw = _bath_spectrum(bath, abs(w))
                n = 1.0 / np.expm1(bath.beta * abs(w))
                rate = 2 * np.pi * jw * abs(Vt[b, a]) ** 2 * ((n + 1) if w > 0 else n)
                tag = np.exp(1j * chi_counted * w) if bath.counted else 1.0
                W[b, a] += rate * tag
                W[a, a] -= rate
    return W


def _bath_spectrum(bath, w):
    if bath.spectral is not None:
        return spectral_value(bath.spectral, w)
    # discrete baths have no smooth density; not meaningful at weak coupling
    raise ValueError("weak-coupling reference needs a continuum bath")


def weak_coupling_current(model: SystemModel, baths, order=1, h=1e-3):
    """Steady-state counting cumulants of the counted bath per unit time.

    Returns ``d^k F / d(i chi)^k`` for ``k = 1..order`` where ``F`` is the
    dominant eigenvalue of the dressed rate matrix.
    """
    def F(chi):
        ev = np.linalg.eigvals(_secular_rates(model, baths, chi))
        return ev[np.argmax(ev.real)]
    # F is analytic; use a symmetric stencil in chi
    f1 = (F(h) - F(-h)) / (2 * h) / 1j
    if order == 1:
        return np.array([f1.real])
    f2 = (F(h) - 2 * F(0.0) + F(-h)) / h**2 / (1j) ** 2
    return np.array([f1.real, f2.real])


def weak_coupling_reference(model: SystemModel, baths, rel_step=1e-3) -> float:
    """Weak-coupling energetic conductance ``beta_R^2 d I_R / d beta_R``.

    ``I_R`` is the steady mean energy current into the counted bath from
    the secular Born-Markov counting generator.
    """
    ib = [i for i, b in enumerate(baths) if b.counted][0]
    beta = baths[ib].beta
    db = rel_step * beta

    def current(bv):
        bs = list(baths)
        bs[ib] = baths[ib].with_beta(bv)
        return weak_coupling_current(model, bs)[0]
    dI = (current(beta + db) - current(beta - db)) / (2 * db)
    return float(beta**2 * dI)


# --------------------------------------------------------------------------
# reference datasets


def recurrence_time(fm: FiniteModeSystem) -> float:
    """``pi / (smallest spacing)`` of the mode frequencies (inf for a single mode)."""
    w = np.unique(np.round([m[0] for ms in fm.modes for m in ms], 12))
    if len(w) < 2:
        return float("inf")
    return float(np.pi / np.min(np.diff(w)))


def write_reference_dataset(fm: FiniteModeSystem, chis, times, path, schemes=("TwoPoint",)):
    """Tabulate exact ``G(chi, t)`` as CSV with a parameter sidecar."""
    rows = {"scheme": [], "chi": [], "time": [], "re_G": [], "im_G": []}
    times = np.asarray(times, dtype=float)
    for sch in schemes:
        for chi in chis:
            G = exact_cgf(fm, float(chi), times, sch)
            rows["scheme"] += [Scheme.parse(sch).value] * len(times)
            rows["chi"] += [float(chi)] * len(times)
            rows["time"] += list(times)
            rows["re_G"] += list(G.real)
            rows["im_G"] += list(G.imag)
    meta = {"betas": list(fm.betas),
            "modes": [list(map(list, m)) for m in fm.modes], "fock_cutoff": fm.fock_cutoff,
            "counted": fm.counted, "leakage": fm.flags.get("leakage"),
            "unreliable": bool(fm.flags.get("unreliable", False)),
            "recurrence_time": recurrence_time(fm),
            "h_sys": [[str(complex(x)) for x in row] for row in np.asarray(fm.model.h_sys)]}
    write_table_csv(path, rows, meta)
    return path
