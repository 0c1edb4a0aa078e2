"""
Moments, cumulants and transport coefficients from hierarchy trajectories,
and the exact relations they must satisfy.

Index convention: ``J[(n, m)]`` is the ``n``-th derivative in ``i chi``
and ``m``-th derivative in the counted bath's inverse temperature of the
CGF, as a time series.
"""
from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from math import comb, factorial

import numpy as np

from .hierarchy import partition_coefficient, partition_weight
from .propagator import MomentCascade, Trajectory


@lru_cache(maxsize=None)
def stirling2(n: int, k: int) -> int:
    """Stirling numbers of the second kind."""
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * stirling2(n - 1, k) + stirling2(n - 1, k - 1)


def moments_from_fields(traj: Trajectory, order: int) -> np.ndarray:
    """``<Delta o^M>(t)`` for ``M = 0..order`` from the partition fields.

    Returns the real part; the imaginary part is integration noise (checked
    against ``1e-6`` relative to the largest moment).
    """
    if not isinstance(traj.mode, MomentCascade):
        raise ValueError("moments need a moment-cascade trajectory")
    if order > traj.mode.m_max:
        raise ValueError(f"requested order {order} exceeds m_max={traj.mode.m_max}")
    out = np.zeros((order + 1, len(traj.times)), dtype=complex)
    for pi, mv in enumerate(traj.partitions):
        w = partition_weight(mv)
        if w <= order:
            out[w] += partition_coefficient(mv) * np.einsum("tii->t", traj.top[:, pi])
    scale = np.max(np.abs(out), axis=1, keepdims=True)
    scale[scale == 0] = 1.0
    if np.max(np.abs(out.imag) / scale) > 1e-6:
        warnings.warn("moments carry a sizeable imaginary part")
    return out.real


def cumulants_from_moments(moments) -> np.ndarray:
    """Cumulants from raw moments; row ``k`` of the input is ``<A^k>`` (row 0 = 1)."""
    mu = np.asarray(moments, dtype=float)
    kap = np.zeros_like(mu)
    for n in range(1, len(mu)):
        acc = mu[n].copy()
        for m in range(1, n):
            acc -= comb(n - 1, m - 1) * kap[m] * mu[n - m]
        kap[n] = acc
    return kap


def moments_from_cumulants(cumulants) -> np.ndarray:
    kap = np.asarray(cumulants, dtype=float)
    mu = np.zeros_like(kap)
    mu[0] = 1.0
    for n in range(1, len(kap)):
        acc = kap[n].copy()
        for m in range(1, n):
            acc += comb(n - 1, m - 1) * kap[m] * mu[n - m]
        mu[n] = acc
    return mu


def factorial_cumulants(cumulants) -> np.ndarray:
    """Factorial cumulants; row ``k`` of the input is the k-th cumulant (row 0 ignored)."""
    kap = np.asarray(cumulants, dtype=float)
    out = np.zeros_like(kap)
    for n in range(1, len(kap)):
        acc = kap[n].copy()
        for m in range(1, n):
            acc -= stirling2(n, m) * out[m]
        out[n] = acc
    return out


def cumulants_from_factorial(fcum) -> np.ndarray:
    f = np.asarray(fcum, dtype=float)
    out = np.zeros_like(f)
    for n in range(1, len(f)):
        out[n] = sum(stirling2(n, m) * f[m] for m in range(1, n + 1))
    return out


@dataclass
class CumulantSeries:
    times: np.ndarray
    moments: np.ndarray
    cumulants: np.ndarray
    factorial_cumulants: np.ndarray
    scheme: str
    bath: int = 0
    beta: float = float("nan")

    def __post_init__(self):
        if self.cumulants.shape[0] > 1:
            assert np.allclose(self.cumulants[1], self.moments[1], rtol=0, atol=1e-12)
        if self.cumulants.shape[0] > 2:
            assert np.allclose(self.cumulants[2], self.moments[2] - self.moments[1] ** 2,
                               rtol=1e-9, atol=1e-12 * max(1.0, np.max(np.abs(self.moments[2]))))

    @classmethod
    def from_moments(cls, times, moments, scheme, bath=0, beta=float("nan")):
        kap = cumulants_from_moments(moments)
        return cls(np.asarray(times), np.asarray(moments), kap, factorial_cumulants(kap),
                   str(scheme), bath, beta)

    @classmethod
    def from_trajectory(cls, traj: Trajectory, order: int, scheme, bath=0,
                        beta=float("nan")):
        return cls.from_moments(traj.times, moments_from_fields(traj, order),
                                getattr(scheme, "value", scheme), bath, beta)

    @property
    def order(self) -> int:
        return self.cumulants.shape[0] - 1

    def rates(self) -> np.ndarray:
        """Centered time derivatives of the cumulants."""
        return time_derivative(self.cumulants, self.times)


def time_derivative(y, times):
    """Second-order centered differences along the last axis (one-sided at ends)."""
    return np.gradient(np.asarray(y), np.asarray(times), axis=-1, edge_order=2)


# --------------------------------------------------------------------------
# derivatives in the inverse temperature


def fd_weights(offsets, order):
    """Finite-difference weights for derivative ``order`` on integer ``offsets``."""
    x = np.asarray(offsets, dtype=float)
    n = len(x)
    if order >= n:
        raise ValueError("stencil too small for the requested derivative")
    V = np.vander(x, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = factorial(order)
    return np.linalg.solve(V, rhs)


def stencil_derivative(samples: dict, h: float, order: int, roundoff=1e-12):
    """Derivative of ``order`` from samples on symmetric integer offsets.

    ``samples`` maps offset ``k`` to arrays ``f(x0 + k h)``.  The estimate
    uses the widest symmetric stencil available; the error estimate is the
    difference to the next narrower stencil plus a roundoff term.
    """
    if order == 0:
        return np.asarray(samples[0], float), np.zeros_like(np.asarray(samples[0], float))
    K = max(k for k in samples if -k in samples)
    widths = [w for w in range(1, K + 1) if all(k in samples for k in range(-w, w + 1))]
    usable = [w for w in widths if 2 * w + 1 > order]
    if not usable:
        raise ValueError(f"need at least {order + 1} symmetric samples for order {order}")

    def est(w):
        ks = list(range(-w, w + 1))
        c = fd_weights(ks, order) / h**order
        val = sum(ci * np.asarray(samples[k], float) for ci, k in zip(c, ks))
        noise = roundoff * sum(abs(ci) * np.abs(np.asarray(samples[k], float))
                               for ci, k in zip(c, ks))
        return val, noise

    best, noise = est(usable[-1])
    if len(usable) > 1:
        prev, _ = est(usable[-2])
        err = np.abs(best - prev) + noise
    else:
        err = noise
    return best, err


def j_coefficients(series_by_offset: dict, dbeta: float, orders, tol=None,
                   roundoff=1e-10):
    """``J[(n, m)](t)`` with finite-difference errors.

    ``series_by_offset`` maps integer offsets ``k`` to :class:`CumulantSeries`
    computed at ``beta + k dbeta``; ``orders`` lists the ``(n, m)`` pairs.
    Returns ``(J, err)`` dictionaries.  ``J[(n, 0)]`` is the n-th cumulant
    and ``J[(0, m)] = 0`` since ``G(0, t) = 0``.
    """
    J, E = {}, {}
    base = series_by_offset[0]
    for n, m in orders:
        if n == 0:
            J[(n, m)] = np.zeros_like(base.times, dtype=float)
            E[(n, m)] = np.zeros_like(J[(n, m)])
            continue
        samples = {k: s.cumulants[n] for k, s in series_by_offset.items()}
        val, err = stencil_derivative(samples, dbeta, m, roundoff)
        J[(n, m)] = val
        E[(n, m)] = err
        if tol is not None and m > 0:
            scale = max(np.max(np.abs(val)), 1e-300)
            if np.max(err) > tol * scale:
                warnings.warn(f"J[{n},{m}]: finite-difference error {np.max(err):.3g} "
                              f"exceeds tolerance; reduce dbeta")
    return J, E


def kappa_finite_bias(series_by_offset: dict, dbeta: float, beta_r: float):
    """``kappa_R(t) = beta_R^2 d/dt J_1^1`` from runs at shifted ``beta_R``.

    ``series_by_offset`` maps integer offsets to two-point series at
    ``beta_R + k dbeta`` (other baths fixed).  Returns ``(kappa, err)``.
    """
    J, E = j_coefficients(series_by_offset, dbeta, [(1, 1)])
    times = series_by_offset[0].times
    k = beta_r**2 * time_derivative(J[(1, 1)], times)
    err = beta_r**2 * time_derivative(E[(1, 1)], times)
    jerk = np.abs(np.diff(k, 2))
    if len(jerk) and np.max(jerk) > 0.5 * np.max(np.abs(k)):
        warnings.warn("kappa series is not smooth on the output grid")
    return k, np.abs(err)


def kappa_from_fluctuations(two_point: CumulantSeries, single: CumulantSeries, beta_r: float):
    """``kappa_R(t) = beta_R^2 / 2 d/dt [J_0^2 - J_S 0^2]`` at equal temperatures."""
    if two_point is None or single is None:
        raise ValueError("both two-point and single-measurement series are required")
    if two_point.order < 2 or single.order < 2:
        raise ValueError("second cumulants are required in both schemes")
    if not np.allclose(two_point.times, single.times):
        raise ValueError("time grids differ")
    return beta_r**2 / 2 * time_derivative(two_point.cumulants[2] - single.cumulants[2],
                                           two_point.times)


def sutran_residual(J: dict, JS: dict, n: int, m: int, J_err=None, JS_err=None):
    """``JS_m^n - sum_j C(n, j) (-1)^j J_{m+j}^{n-j}`` and its error budget.

    Keys are ``(chi order, beta order)``. The budget carries a round-off
    floor proportional to the summed term magnitudes.
    """
    res = np.array(JS[(n, m)], dtype=float, copy=True)
    budget = np.zeros_like(res) if JS_err is None else np.abs(JS_err[(n, m)]).copy()
    size = np.abs(res)
    for j in range(n + 1):
        key = (n - j, m + j)
        if key[0] == 0:
            continue  # G(0, t) = 0
        term = comb(n, j) * (-1) ** j * J[key]
        res -= term
        size = size + np.abs(term)
        if J_err is not None:
            budget += comb(n, j) * np.abs(J_err[key])
    return res, budget + 64 * np.finfo(float).eps * size


def saito_utsumi_residual(L: dict, n: int, m: int):
    """``L_m^n - sum_j C(m, j) (-1)^(n+j) L_{m-j}^{n+j}`` (steady state)."""
    acc = L.get((n, m), 0.0)
    for j in range(m + 1):
        acc = acc - comb(m, j) * (-1) ** (n + j) * L.get((n + j, m - j), 0.0)
    return acc


@dataclass
class SteadyStateReport:
    converged: bool
    t_start: float
    drift: float
    L: dict = field(default_factory=dict)
    saito_utsumi: dict = field(default_factory=dict)
    ft_residual: list = field(default_factory=list)
    status: str = "ok"


def detect_steady_state(times, rates, window: float = 2.0, rtol: float = 1e-4):
    """Return ``(ok, drift)`` over the trailing ``window``.

    ``rates`` has shape ``(k, T)``; the drift of row 0 (cumulant-1 rate) is
    measured relative to the largest rate magnitude in the window.
    """
    times = np.asarray(times)
    rates = np.atleast_2d(rates)
    sel = times >= times[-1] - window - 1e-12
    if times[-1] - times[0] < window or sel.sum() < 3:
        return False, float("inf")
    r = rates[:, sel]
    scale = max(np.max(np.abs(r)), 1e-300)
    drift = float((r[0].max() - r[0].min()) / scale)
    return drift <= rtol, drift


def steady_state_checks(J: dict, times, window: float = 2.0, rtol: float = 1e-4,
                        cgf_rate=None, chis=(), affinity: float = 0.0) -> SteadyStateReport:
    """Steady-state transport coefficients and the exact steady relations.

    ``J`` holds ``J[(n, m)]`` series.  ``L[(n, m)]`` is the window average of
    ``d/dt J[(n, m)]``.  ``cgf_rate(chi)``, if given, is the steady CGF rate
    used for the symmetry residual ``|F(chi) - F(-chi + i affinity)|``.
    """
    times = np.asarray(times)
    keys = sorted(J)
    rates = {k: time_derivative(J[k], times) for k in keys}
    first = [rates[k] for k in keys if k == (1, 0)] or [rates[keys[0]]]
    others = [rates[k] for k in keys if k[1] == 0 and k[0] > 0]
    ok, drift = detect_steady_state(times, np.vstack(first + others), window, rtol)
    sel = times >= times[-1] - window - 1e-12
    rep = SteadyStateReport(ok, float(times[-1] - window), drift)
    rep.L = {k: float(np.mean(rates[k][sel])) for k in keys}
    for n in range(0, 4):
        for m in range(0, 4 - n):
            needed = [(n + j, m - j) for j in range(m + 1)] + [(n, m)]
            if n + m >= 1 and all(k in rep.L or k[0] == 0 for k in needed):
                rep.saito_utsumi[(n, m)] = saito_utsumi_residual(rep.L, n, m)
    if cgf_rate is not None:
        for chi in chis:
            rep.ft_residual.append(abs(cgf_rate(chi) - cgf_rate(-chi + 1j * affinity)))
    if not ok:
        rep.status = "not-converged"
    return rep


@dataclass
class TransportReport:
    times: np.ndarray
    J: dict = field(default_factory=dict)
    JS: dict = field(default_factory=dict)
    kappa: np.ndarray | None = None
    kappa_bias: np.ndarray | None = None
    L: dict = field(default_factory=dict)
    deviations: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_text(self) -> str:
        def ser(x):
            if isinstance(x, np.ndarray):
                return x.tolist()
            if isinstance(x, dict):
                return {f"{k[0]},{k[1]}" if isinstance(k, tuple) else str(k): ser(v)
                        for k, v in x.items()}
            if isinstance(x, (np.floating, np.integer)):
                return x.item()
            return x
        doc = {k: ser(v) for k, v in asdict(self).items()}
        return json.dumps(doc, indent=1, sort_keys=True)


# --------------------------------------------------------------------------
# output


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]


def write_series_csv(path, series: CumulantSeries, meta: dict):
    """CSV with time, moments, cumulants and cumulant rates plus ``<path>.meta.json``."""
    order = series.order
    rates = series.rates()
    header = (["time"] + [f"moment_{k}" for k in range(1, order + 1)]
              + [f"cumulant_{k}" for k in range(1, order + 1)]
              + [f"dcumulant_dt_{k}" for k in range(1, order + 1)] + ["scheme"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, t in enumerate(series.times):
            row = [repr(float(t))]
            row += [repr(float(series.moments[k, i])) for k in range(1, order + 1)]
            row += [repr(float(series.cumulants[k, i])) for k in range(1, order + 1)]
            row += [repr(float(rates[k, i])) for k in range(1, order + 1)]
            row.append(series.scheme)
            w.writerow(row)
    write_sidecar(path, meta)


def write_table_csv(path, columns: dict, meta: dict):
    names = list(columns)
    n = len(next(iter(columns.values())))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for i in range(n):
            w.writerow([_fmt(columns[c][i]) for c in names])
    write_sidecar(path, meta)


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (complex, np.complexfloating)):
        return repr(complex(x))
    return str(x)


def write_sidecar(path, meta: dict):
    with open(f"{path}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True, default=str)


def read_table_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in body]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            try:
                cols[name] = np.array([complex(v) for v in vals])
            except ValueError:
                cols[name] = np.array(vals)
    return cols
