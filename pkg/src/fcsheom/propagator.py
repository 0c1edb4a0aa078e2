"""
Right-hand side and time integration of the counting-field hierarchy.

Two modes are supported:

* moment cascade: the fields ``sigma_m^n`` carry counting derivatives of
  the reduced state, coupled to lower partitions through the derivative
  tables ``c_q``;
* chi-resolved: a single value of the counting field, with the bath
  coefficients evaluated at that chi; ``ln tr rho(chi, t)`` is the CGF.

Hierarchy slots.  Terms of all baths that share a coupling operator and an
exponent are merged into one group.  The group's side-resolved coefficient
matrix ``C[j, k]`` enters only through ``sum_jk C[j, k] V^j (x) V^k``, so any
factorisation ``C = U M`` with a fixed invertible lowering basis ``M``
gives an equivalent hierarchy.  At chi = 0 ``C`` has rank one, so a group
needs one slot (``A``) plus, if it carries the counted bath, one slot
(``B``) that is only fed by the counting dependence.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from .correlation import ExpansionBasis, coefficients_at
from .hierarchy import DEFAULT_FIELD_CAP, IndexSpace
from .model import Scheme, SystemModel


class NumericalAbort(RuntimeError):
    """Integration produced non-finite values or failed to control its error."""

    def __init__(self, message, index=None, time=None):
        super().__init__(message)
        self.index = index
        self.time = time


class ConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class MomentCascade:
    m_max: int


@dataclass(frozen=True)
class ChiResolved:
    chi: float
    scheme: Scheme = Scheme.TWO_POINT
    beta: complex | None = None  # override of the counted bath's inverse temperature

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))


def left(a):
    return sparse.kron(sparse.csr_matrix(a), sparse.identity(a.shape[0]), format="csr")


def right(a):
    return sparse.kron(sparse.identity(a.shape[0]), sparse.csr_matrix(a.T), format="csr")


def commutator(a):
    return (left(a) - right(a)).tocsr()


@dataclass
class Slot:
    group: int
    coupling: int          # index into CouplingTables.operators
    exponent: complex
    lower: np.ndarray      # (2,) weights of V^0, V^1
    raise_: np.ndarray     # (2,) weights at chi (base)
    cascade: np.ndarray    # (q_max + 1, 2) raise weights of the q-th derivative
    kind: str = "A"
    scale: float = 1.0


@dataclass
class CouplingTables:
    """Slot coefficients and system superoperators for one run."""

    h_sys: np.ndarray
    operators: list
    slots: list
    mode: object
    natural: dict = field(default_factory=dict)

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    @property
    def dim(self) -> int:
        return self.h_sys.shape[0]

    @property
    def bounded(self) -> np.ndarray:
        return np.array([s.kind == "B" for s in self.slots], dtype=bool)

    def group_matrix(self, g: int, q: int = 0) -> np.ndarray:
        """Reassembled ``C[j, k]`` (q-th derivative for q > 0) of a group."""
        out = np.zeros((2, 2), dtype=complex)
        for s in self.slots:
            if s.group == g:
                u = s.raise_ if q == 0 else s.cascade[q]
                out += np.outer(u, s.lower)
        return out


def _unique_ops(couplings):
    ops, index = [], []
    for v in couplings:
        for i, o in enumerate(ops):
            if o.shape == v.shape and np.allclose(o, v, atol=1e-14, rtol=0):
                index.append(i)
                break
        else:
            ops.append(v)
            index.append(len(ops) - 1)
    return ops, index


def build_tables(model: SystemModel, bases: Sequence[ExpansionBasis], mode,
                 q_max: int | None = None, exponent_tol: float = 1e-10,
                 rescale: bool = True) -> CouplingTables:
    """Group, compact and scale the hierarchy slots.

    ``mode`` is :class:`MomentCascade` or :class:`ChiResolved`.  Natural
    ``(bath, term, side)`` coefficients are kept in ``tables.natural`` for
    cross-checks.
    """
    if len(bases) != len(model.couplings):
        raise ValueError("one expansion basis per coupling operator is required")
    ops, op_index = _unique_ops(model.couplings)
    cascade = isinstance(mode, MomentCascade)
    if cascade:
        q_max = mode.m_max if q_max is None else q_max
    else:
        q_max = 0
    groups: dict[tuple, dict] = {}
    natural = {}
    for nu, basis in enumerate(bases):
        if cascade:
            c_nat = basis.coeffs
            if c_nat is None or c_nat.shape[-1] <= q_max:
                raise ValueError(f"bath {nu}: coefficient tables below order {q_max}")
            c_nat = c_nat[..., :q_max + 1].copy()
            if not basis.counted:
                c_nat[..., 1:] = 0
        else:
            chi = mode.chi if basis.counted else 0.0
            beta = mode.beta if (basis.counted and mode.beta is not None) else None
            c_nat = coefficients_at(basis, chi, mode.scheme, beta=beta)[..., None]
        natural[nu] = c_nat
        base = c_nat[..., 0]
        for r, g in enumerate(basis.exponents):
            key = None
            for (oi, g0) in groups:
                if oi == op_index[nu] and abs(g0 - g) <= exponent_tol * max(1.0, abs(g)):
                    key = (oi, g0)
                    break
            if key is None:
                key = (op_index[nu], complex(g))
                groups[key] = {"C": np.zeros((q_max + 1, 2, 2), complex),
                               "base": np.zeros(2, complex), "counted": False}
            grp = groups[key]
            grp["C"] += np.moveaxis(c_nat[r], -1, 0)
            # lowering weights of the rank-one chi = 0 part: [a, -b]
            grp["base"] += np.array([base[r, 0, 0], base[r, 0, 1]]) if cascade \
                else _rank_one_lower(basis, r)
            grp["counted"] |= bool(basis.counted)
    slots = []
    for gi, ((oi, g), grp) in enumerate(groups.items()):
        C = grp["C"]
        if np.max(np.abs(C)) == 0.0:
            continue
        w = grp["base"]
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # pure counting group; any basis works
            w = np.array([1.0, 0.0], complex)
            nw = 1.0
        w = w / nw
        lb = np.array([0.0, 1.0] if abs(w[0]) >= abs(w[1]) else [1.0, 0.0], complex)
        M = np.array([w, lb])
        Minv = np.linalg.inv(M)
        U = C @ Minv                      # (q, j, i): raise weights for lowering row i
        need_b = grp["counted"] or np.max(np.abs(U[:, :, 1])) > 1e-14 * np.max(np.abs(U))
        slots.append(Slot(gi, oi, g, w, U[0, :, 0], U[:, :, 0], "A"))
        if need_b:
            slots.append(Slot(gi, oi, g, lb, U[0, :, 1], U[:, :, 1], "B" if cascade else "A2"))
    if rescale:
        for s in slots:
            r = np.max(np.abs(s.cascade)) if s.kind == "B" else np.linalg.norm(s.raise_)
            lnorm = np.linalg.norm(s.lower) * np.linalg.norm(ops[s.coupling], 2)
            rnorm = r * np.linalg.norm(ops[s.coupling], 2)
            s.scale = math.sqrt(lnorm / rnorm) if rnorm > 0 and lnorm > 0 else 1.0
    return CouplingTables(np.asarray(model.h_sys, complex), ops, slots, mode, natural)


def _rank_one_lower(basis, r):
    a, b = basis.thermal[0, 0, r], basis.thermal[0, 1, r]
    return np.array([a, -b])


def build_space(tables: CouplingTables, n_max: int, cap=DEFAULT_FIELD_CAP) -> IndexSpace:
    m_max = tables.mode.m_max if isinstance(tables.mode, MomentCascade) else 0
    labels = [(s.group, s.kind) for s in tables.slots]
    return IndexSpace(tables.n_slots, n_max, m_max, bounded=tables.bounded,
                      slot_labels=labels, cap=cap)


# --------------------------------------------------------------------------
# generator


def _superop(op, weights):
    return (weights[0] * left(op) + weights[1] * right(op)).tocsr()


def _block_entries(S):
    S = S.tocoo()
    return S.row, S.col, S.data


def _add_blocks(rows, cols, vals, S, src, dst, coef, d2):
    """Blocks ``coef[i] * S`` at (src[i], dst[i]) of the field-level matrix."""
    keep = dst >= 0
    if not np.any(keep) or S.nnz == 0:
        return
    src, dst, coef = src[keep], dst[keep], coef[keep]
    nz = coef != 0
    src, dst, coef = src[nz], dst[nz], coef[nz]
    a, b, v = _block_entries(S)
    rows.append((src[:, None] * d2 + a[None, :]).ravel())
    cols.append((dst[:, None] * d2 + b[None, :]).ravel())
    vals.append((coef[:, None] * v[None, :]).ravel())


def assemble_generator(space: IndexSpace, tables: CouplingTables) -> sparse.csr_matrix:
    """Sparse generator ``L`` with ``d vec(fields)/dt = L vec(fields)``.

    Per field: ``-i[H, .] + sum_s n_s g_s``, minus raise couplings, plus
    lowering couplings, minus the cascade couplings ``m_q`` times the q-th
    raise derivative.  Fields are stored row-major, ``vec[f*d*d + i*d + j]``.
    """
    d = tables.dim
    d2 = d * d
    F = len(space)
    rows, cols, vals = [], [], []
    L0 = (-1j * commutator(tables.h_sys)).tocsr()
    allf = np.arange(F)
    _add_blocks(rows, cols, vals, L0, allf, allf, np.ones(F, complex), d2)
    decay = np.zeros(F, complex)
    for si, s in enumerate(tables.slots):
        decay += space.n[:, si] * s.exponent
    _add_blocks(rows, cols, vals, sparse.identity(d2, format="csr"), allf, allf, decay, d2)
    cascade = isinstance(tables.mode, MomentCascade)
    for si, s in enumerate(tables.slots):
        op = tables.operators[s.coupling]
        n_s = space.n[:, si].astype(float)
        up = space.raise_n(si)
        if np.any(s.raise_ != 0):
            R = _superop(op, s.raise_)
            _add_blocks(rows, cols, vals, R, allf, up,
                        -s.scale * np.sqrt(n_s + 1).astype(complex), d2)
        down = space.lower_n(si)
        L = _superop(op, s.lower)
        _add_blocks(rows, cols, vals, L, allf, down,
                    (np.sqrt(n_s) / s.scale).astype(complex), d2)
        if cascade:
            for q in range(1, tables.mode.m_max + 1):
                if not np.any(s.cascade[q] != 0):
                    continue
                mq = space.m[:, q - 1].astype(float)
                if not np.any(mq):
                    continue
                tgt = space.raise_lower_m(si, q)
                Rq = _superop(op, s.cascade[q])
                _add_blocks(rows, cols, vals, Rq, allf, tgt,
                            (-mq * s.scale * np.sqrt(n_s + 1)).astype(complex), d2)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    A = sparse.coo_matrix((vals, (rows, cols)), shape=(F * d2, F * d2)).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    return A


# --------------------------------------------------------------------------
# state and integration


@dataclass
class AuxiliaryState:
    """All hierarchy fields at one time, shape ``(n_fields, d, d)``."""

    t: float
    fields: np.ndarray
    mode: object
    signature: str = ""

    @classmethod
    def initial(cls, space: IndexSpace, rho0, mode) -> "AuxiliaryState":
        d = rho0.shape[0]
        f = np.zeros((len(space), d, d), dtype=complex)
        f[space.zero_index()] = rho0
        return cls(0.0, f, mode, space.signature())

    @property
    def rho(self):
        return self.fields[0]

    def vector(self):
        return self.fields.reshape(-1)


@dataclass
class Propagator:
    """Generator plus bookkeeping for one (model, baths, mode, n_max)."""

    space: IndexSpace
    tables: CouplingTables
    generator: sparse.csr_matrix

    @classmethod
    def build(cls, model: SystemModel, bases, mode, n_max: int, cap=DEFAULT_FIELD_CAP,
              rescale: bool = True):
        tables = build_tables(model, bases, mode, rescale=rescale)
        space = build_space(tables, n_max, cap=cap)
        return cls(space, tables, assemble_generator(space, tables))

    def initial_state(self, rho0) -> AuxiliaryState:
        return AuxiliaryState.initial(self.space, np.asarray(rho0, complex), self.tables.mode)

    def rhs(self, state: AuxiliaryState) -> np.ndarray:
        d = self.tables.dim
        out = self.generator @ state.vector()
        return out.reshape(-1, d, d)

    @property
    def top_offsets(self):
        return self.space.top_offsets()


def rhs(state: AuxiliaryState, space: IndexSpace, tables: CouplingTables) -> np.ndarray:
    """Field-by-field evaluation of the hierarchy equation (reference path)."""
    d = tables.dim
    f = state.fields
    out = np.empty_like(f)
    h = tables.h_sys
    cascade = isinstance(tables.mode, MomentCascade)
    for i in range(len(space)):
        s_i = f[i]
        acc = -1j * (h @ s_i - s_i @ h)
        n_i = space.n[i]
        acc = acc + sum(n_i[k] * s.exponent for k, s in enumerate(tables.slots)) * s_i
        for k, s in enumerate(tables.slots):
            V = tables.operators[s.coupling]

            def sup(w, x):
                return w[0] * (V @ x) + w[1] * (x @ V)
            j = space.raise_n(k)[i]
            if j >= 0:
                acc = acc - s.scale * math.sqrt(n_i[k] + 1) * sup(s.raise_, f[j])
            j = space.lower_n(k)[i]
            if j >= 0:
                acc = acc + math.sqrt(n_i[k]) / s.scale * sup(s.lower, f[j])
            if cascade:
                for q in range(1, tables.mode.m_max + 1):
                    mq = space.m[i, q - 1]
                    if mq == 0:
                        continue
                    j = space.raise_lower_m(k, q)[i]
                    if j >= 0:
                        acc = acc - mq * s.scale * math.sqrt(n_i[k] + 1) * sup(s.cascade[q], f[j])
        out[i] = acc
    return out


@dataclass
class Trajectory:
    """Snapshots of the ``n = 0`` fields, one per partition."""

    times: np.ndarray
    top: np.ndarray          # (n_times, n_partitions, d, d)
    partitions: tuple
    mode: object
    n_max: int
    dt: float
    info: dict = field(default_factory=dict)

    def rho(self, m_vec=None):
        idx = 0 if m_vec is None else self.partitions.index(tuple(m_vec))
        return self.top[:, idx]

    def trace(self, m_vec=None):
        return np.einsum("tii->t", self.rho(m_vec))


def _rk4_step(A, y, h):
    # classical RK4 for a linear time-independent generator, in Horner form
    k = A @ y
    k = y + (h / 4) * k
    k = y + (h / 3) * (A @ k)
    k = y + (h / 2) * (A @ k)
    return y + h * (A @ k)


def _check_finite(y, d, t):
    if not np.all(np.isfinite(y)):
        bad = np.flatnonzero(~np.isfinite(y))[0] // (d * d)
        raise NumericalAbort(f"non-finite field at index {bad}, t={t:.6g}", index=int(bad), time=t)


def integrate(prop: Propagator, state: AuxiliaryState, t_end: float, dt: float = 0.002,
              method: str = "rk4", stride: float | None = None, tol: float = 1e-8,
              check_every: int = 20) -> Trajectory:
    """Integrate to ``t_end`` and return snapshots every ``stride``.

    ``method`` is ``"rk4"`` (fixed step) or ``"rk4-halving"`` (step size
    controlled by comparing one step against two half steps; ``tol`` is
    the tolerated max-norm difference per step).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    A = prop.generator
    d = prop.tables.dim
    stride = dt if stride is None else stride
    n_out = int(round((t_end - state.t) / stride))
    if n_out < 0 or abs(state.t + n_out * stride - t_end) > 1e-9 * max(1, t_end):
        raise ValueError("t_end - t must be a multiple of the output stride")
    steps_per_out = max(1, int(round(stride / dt)))
    h = stride / steps_per_out
    if method == "rk4" and abs(h - dt) > 1e-12 * dt:
        raise ValueError("stride must be a multiple of dt")
    top_idx = prop.top_offsets
    y = state.vector().copy()
    shape = (len(prop.space), d, d)
    times = [state.t]
    tops = [y.reshape(shape)[top_idx].copy()]
    t = state.t
    n_steps = 0
    halvings = 0
    for _ in range(n_out):
        if method == "rk4":
            for _ in range(steps_per_out):
                y = _rk4_step(A, y, h)
                n_steps += 1
                if n_steps % check_every == 0:
                    _check_finite(y, d, t)
            t = t + stride
        elif method == "rk4-halving":
            y, h, nh = _advance_halving(A, y, stride, h, tol, t)
            halvings += nh
            t = t + stride
        else:
            raise ValueError(f"unknown integration method {method!r}")
        _check_finite(y, d, t)
        times.append(t)
        tops.append(y.reshape(shape)[top_idx].copy())
    state.t = t
    state.fields = y.reshape(shape)
    return Trajectory(np.array(times), np.array(tops), prop.space.partitions,
                      prop.tables.mode, prop.space.n_max, dt,
                      {"method": method, "halvings": halvings,
                       "n_fields": len(prop.space)})


def _advance_halving(A, y, span, h, tol, t0, max_halvings=30):
    """Cover ``span`` with RK4 steps, halving ``h`` while the error is too large."""
    done = 0.0
    nh = 0
    prev_err = np.inf
    while done < span * (1 - 1e-12):
        h = min(h, span - done)
        full = _rk4_step(A, y, h)
        half = _rk4_step(A, _rk4_step(A, y, h / 2), h / 2)
        err = np.max(np.abs(full - half)) / 15
        if err <= tol:
            y = half
            done += h
            prev_err = np.inf
            continue
        if err >= prev_err:
            raise NumericalAbort(f"step halving does not reduce the error ({err:.3g}) "
                                 f"at t={t0 + done:.6g}, h={h:.3g}", time=t0 + done)
        prev_err = err
        h /= 2
        nh += 1
        if nh > max_halvings:
            raise NumericalAbort("too many step halvings", time=t0 + done)
    return y, h, nh


def cgf_sample(traj: Trajectory) -> np.ndarray:
    """``G(chi, t) = ln tr rho(chi, t)`` along a chi-resolved trajectory.

    The phase is unwrapped along time so the branch is continuous.
    """
    if not isinstance(traj.mode, ChiResolved):
        raise ValueError("cgf_sample needs a chi-resolved trajectory")
    tr = traj.trace()
    mag = np.abs(tr)
    if np.any(mag < 1e-300):
        raise FloatingPointError("trace underflow while taking ln tr rho")
    return np.log(mag) + 1j * np.unwrap(np.angle(tr))


# --------------------------------------------------------------------------
# checkpoints

CHECKPOINT_FORMAT = "fcsheom-state/1"


def save_checkpoint(state: AuxiliaryState, path, space: IndexSpace):
    """``.npz`` with arrays ``fields`` (F, d, d) complex128, ``t``, ``signature``
    (index-space hash) and ``format``."""
    np.savez(path, fields=state.fields, t=state.t, signature=space.signature(),
             format=CHECKPOINT_FORMAT, mode=repr(state.mode))


def load_checkpoint(path, space: IndexSpace, mode) -> AuxiliaryState:
    with np.load(path, allow_pickle=False) as z:
        if str(z["format"]) != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a state checkpoint")
        sig = str(z["signature"])
        if sig != space.signature():
            raise ValueError(f"{path}: index-space hash {sig} does not match "
                             f"{space.signature()}")
        return AuxiliaryState(float(z["t"]), z["fields"].copy(), mode, sig)


# --------------------------------------------------------------------------
# convergence in hierarchy depth


@dataclass
class ConvergenceResult:
    value: object
    n_max: int
    converged: bool
    history: list


def converge_depth(run, n_max0: int, step: int = 2, n_cap: int = 16, tol: float = 1e-3,
                   observe=None, raise_on_fail: bool = False) -> ConvergenceResult:
    """Raise ``n_max`` by ``step`` until the observables change by less than ``tol``.

    ``run(n_max)`` returns a result; ``observe(result)`` maps it to an array
    of observables (default: the result itself).  The relative change is
    ``max|x_new - x_old| / max|x_new|``.
    """
    observe = observe or (lambda r: r)
    history = []
    n = n_max0
    prev = run(n)
    prev_obs = np.asarray(observe(prev))
    while n + step <= n_cap:
        cur = run(n + step)
        obs = np.asarray(observe(cur))
        scale = np.max(np.abs(obs))
        change = np.max(np.abs(obs - prev_obs)) / scale if scale > 0 else 0.0
        history.append((n, n + step, float(change)))
        n += step
        if change < tol:
            return ConvergenceResult(cur, n, True, history)
        prev, prev_obs = cur, obs
    if raise_on_fail:
        raise ConvergenceError(f"no convergence up to n_max={n}", history)
    return ConvergenceResult(prev, n, False, history)


def layout_hash(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]
