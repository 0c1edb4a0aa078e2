"""
Multi-indices of the auxiliary fields and their neighbour tables.

A field is labelled by an occupation vector ``n`` over hierarchy slots and
a partition vector ``m = (m_1, ..., m_mmax)`` recording how many counting
derivatives of each order have been absorbed.  The natural slot set is
(bath, basis term, side) but any list of slots is accepted; the propagator
uses a compacted slot basis.
"""
from __future__ import annotations

import itertools
from functools import lru_cache
from math import comb, factorial, prod

import numpy as np

DEFAULT_FIELD_CAP = 2_000_000


class HierarchyTooLarge(RuntimeError):
    def __init__(self, count, cap):
        super().__init__(f"hierarchy has {count} fields, above the cap of {cap}")
        self.count = count
        self.cap = cap


# --------------------------------------------------------------------------
# partitions and their multiplicities


@lru_cache(maxsize=None)
def partitions(m_max: int) -> tuple[tuple[int, ...], ...]:
    """All vectors ``(m_1..m_mmax)`` with ``sum q m_q <= m_max``.

    Ordered by weight, then lexicographically; the empty partition first.
    """
    out = []
    for vec in itertools.product(*[range(m_max // q + 1) for q in range(1, m_max + 1)]):
        w = sum((q + 1) * c for q, c in zip(range(m_max), vec))
        if w <= m_max:
            out.append((w, vec))
    out.sort()
    return tuple(v for _, v in out)


def partition_weight(m_vec) -> int:
    return sum((q + 1) * int(c) for q, c in zip(range(len(m_vec)), m_vec))


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


@lru_cache(maxsize=None)
def _block_type_counts(m: int) -> dict:
    counts: dict[tuple, int] = {}
    for part in _set_partitions(list(range(m))):
        sizes = [len(b) for b in part]
        key = tuple(sizes.count(q) for q in range(1, m + 1))
        counts[key] = counts.get(key, 0) + 1
    return counts


def partition_coefficient(m_vec) -> int:
    """Multiplicity ``a_m`` of a partition in the moment of order ``sum q m_q``.

    Counted by enumerating set partitions of ``{1..M}`` and tallying block
    sizes, so the value is the number of ways to distribute M labelled
    derivatives into unlabelled blocks with ``m_q`` blocks of size ``q``.
    """
    m_vec = tuple(int(c) for c in m_vec)
    if any(c < 0 for c in m_vec):
        raise ValueError("partition entries must be non-negative")
    M = partition_weight(m_vec)
    if M == 0:
        return 1
    # trailing orders above M are necessarily zero
    key = tuple(m_vec[:M]) + (0,) * max(0, M - len(m_vec))
    return _block_type_counts(M).get(key, 0)


def partition_coefficient_closed(m_vec) -> int:
    """``M! / prod_q (m_q! q!^m_q)``; used to cross-check the enumeration."""
    M = partition_weight(m_vec)
    den = prod(factorial(c) * factorial(q + 1) ** c for q, c in zip(range(len(m_vec)), m_vec))
    return factorial(M) // den


# --------------------------------------------------------------------------
# index space


def occupation_vectors(n_slots: int, max_level: int) -> np.ndarray:
    """All non-negative integer vectors of length ``n_slots`` with sum <= max_level."""
    rows = np.zeros((1, 0), dtype=np.int16)
    for _ in range(n_slots):
        lvl = rows.sum(axis=1)
        blocks = []
        for v in range(max_level + 1):
            keep = rows[lvl + v <= max_level]
            if len(keep) == 0:
                break
            blocks.append(np.hstack([keep, np.full((len(keep), 1), v, np.int16)]))
        rows = np.vstack(blocks)
    return rows


class IndexSpace:
    """Ordered set of admissible ``(n, m)`` pairs with neighbour lookup.

    Parameters
    ----------
    n_slots : number of hierarchy slots.
    n_max : cap on ``sum(n)``.
    m_max : cap on the partition weight.
    bounded : optional boolean mask of slots whose occupation plus the
        partition weight may not exceed ``m_max`` (slots only reachable
        through cascade couplings).
    slot_labels : optional descriptors, e.g. ``(bath, term, side)``.
    cap : hard limit on the number of fields.
    """

    def __init__(self, n_slots, n_max, m_max, bounded=None, slot_labels=None,
                 cap=DEFAULT_FIELD_CAP):
        if min(n_slots, n_max, m_max) < 0:
            raise ValueError("n_slots, n_max and m_max must be non-negative")
        self.n_slots = int(n_slots)
        self.n_max = int(n_max)
        self.m_max = int(m_max)
        self.bounded = (np.zeros(n_slots, bool) if bounded is None
                        else np.asarray(bounded, bool))
        self.slot_labels = list(slot_labels) if slot_labels is not None \
            else [(s,) for s in range(n_slots)]
        self.cap = cap
        parts = partitions(m_max)
        self.partitions = parts
        est = self._count_estimate(parts)
        if est > cap:
            raise HierarchyTooLarge(est, cap)
        free = np.flatnonzero(~self.bounded)
        bnd = np.flatnonzero(self.bounded)
        vf = occupation_vectors(len(free), self.n_max)
        vb = occupation_vectors(len(bnd), min(self.m_max, self.n_max))
        lf = vf.sum(axis=1)
        lb = vb.sum(axis=1)
        rows_n, rows_m = [], []
        for mv in parts:
            room = self.m_max - partition_weight(mv)
            for ib in np.flatnonzero(lb <= room):
                sel = np.flatnonzero(lf + lb[ib] <= self.n_max)
                block = np.zeros((len(sel), self.n_slots), dtype=np.int16)
                block[:, free] = vf[sel]
                block[:, bnd] = vb[ib]
                rows_n.append(block)
                rows_m.append(np.repeat(np.array(mv, np.int16)[None], len(sel), axis=0))
        bn = np.concatenate(rows_n)
        bm = np.concatenate(rows_m).reshape(len(bn), -1)
        # canonical order: level, then n entries, then m entries
        keys = [bm[:, j] for j in range(bm.shape[1] - 1, -1, -1)]
        keys += [bn[:, j] for j in range(self.n_slots - 1, -1, -1)]
        keys.append(bn.sum(axis=1))
        order = np.lexsort(keys)
        rows_n, rows_m = [bn[order]], [bm[order]]
        self.n = np.concatenate(rows_n)
        self.m = np.concatenate(rows_m)
        if len(self.n) > cap:
            raise HierarchyTooLarge(len(self.n), cap)
        self.level = self.n.sum(axis=1).astype(np.int64)
        self.weight = (self.m * np.arange(1, self.m.shape[1] + 1)).sum(axis=1) \
            if self.m.shape[1] else np.zeros(len(self.n), np.int64)
        rng = np.random.default_rng(20240611)
        width = self.n_slots + self.m.shape[1]
        self._hw = rng.integers(1, 2**62, size=width, dtype=np.int64).astype(np.uint64)
        self._keys = self._hash(self.n, self.m)
        self._order = np.argsort(self._keys, kind="stable")
        sk = self._keys[self._order]
        if np.any(sk[1:] == sk[:-1]):
            raise RuntimeError("index hash collision; change the hash seed")
        self._sorted_keys = sk
        self._cache = {}

    def _count_estimate(self, parts):
        total = 0
        nb = int(self.bounded.sum())
        nf = self.n_slots - nb
        for mv in parts:
            room = self.m_max - partition_weight(mv)
            for kb in range(0, min(room, self.n_max) + 1):
                cb = comb(nb + kb - 1, kb) if nb else (1 if kb == 0 else 0)
                rest = self.n_max - kb
                total += cb * comb(nf + rest, rest) if nf else cb
        return total

    def _hash(self, n, m):
        full = np.concatenate([n, m], axis=1).astype(np.uint64)
        with np.errstate(over="ignore"):
            return (full * self._hw).sum(axis=1, dtype=np.uint64)

    def __len__(self):
        return len(self.n)

    @property
    def n_fields(self) -> int:
        return len(self.n)

    def signature(self) -> str:
        """Stable hash of the layout, used to guard checkpoint restores."""
        import hashlib
        h = hashlib.sha256()
        h.update(np.array([self.n_slots, self.n_max, self.m_max], np.int64).tobytes())
        h.update(self.bounded.tobytes())
        h.update(np.ascontiguousarray(self.n).tobytes())
        h.update(np.ascontiguousarray(self.m).tobytes())
        return h.hexdigest()[:16]

    def find(self, n, m):
        """Offsets of the rows ``(n, m)``; -1 where the index is absent."""
        n = np.atleast_2d(np.asarray(n, dtype=np.int64))
        m = np.atleast_2d(np.asarray(m, dtype=np.int64))
        if m.shape[1] != self.m.shape[1]:
            m = m[:, :self.m.shape[1]]
        ok = np.all(n >= 0, axis=1) & np.all(m >= 0, axis=1)
        key = self._hash(np.where(n < 0, 0, n), np.where(m < 0, 0, m))
        pos = np.searchsorted(self._sorted_keys, key)
        pos = np.minimum(pos, len(self._sorted_keys) - 1)
        cand = self._order[pos]
        hit = ok & (self._sorted_keys[pos] == key)
        hit &= np.all(self.n[cand] == n, axis=1) & np.all(self.m[cand] == m, axis=1)
        return np.where(hit, cand, -1)

    def offset(self, n, m=None) -> int:
        if m is None:
            m = np.zeros(self.m.shape[1], dtype=int)
        return int(self.find(n, m)[0])

    # neighbour tables; -1 marks an index outside the space

    def raise_n(self, s: int) -> np.ndarray:
        key = ("raise", s)
        if key not in self._cache:
            n = self.n.astype(np.int64)
            n[:, s] += 1
            self._cache[key] = self.find(n, self.m)
        return self._cache[key]

    def lower_n(self, s: int) -> np.ndarray:
        key = ("lower", s)
        if key not in self._cache:
            n = self.n.astype(np.int64)
            n[:, s] -= 1
            self._cache[key] = self.find(n, self.m)
        return self._cache[key]

    def swap_n(self, s_from: int, s_to: int) -> np.ndarray:
        """``n - e_from + e_to``."""
        key = ("swap", s_from, s_to)
        if key not in self._cache:
            n = self.n.astype(np.int64)
            n[:, s_from] -= 1
            n[:, s_to] += 1
            self._cache[key] = self.find(n, self.m)
        return self._cache[key]

    def lower_m(self, q: int) -> np.ndarray:
        """``m - e_q`` (q counted from 1)."""
        key = ("lower_m", q)
        if key not in self._cache:
            m = self.m.astype(np.int64)
            m[:, q - 1] -= 1
            self._cache[key] = self.find(self.n, m)
        return self._cache[key]

    def raise_lower_m(self, s: int, q: int) -> np.ndarray:
        """``(n + e_s, m - e_q)``: target of the cascade coupling."""
        n = self.n.astype(np.int64)
        n[:, s] += 1
        m = self.m.astype(np.int64)
        m[:, q - 1] -= 1
        return self.find(n, m)

    def zero_index(self, m_vec=None) -> int:
        n0 = np.zeros(self.n_slots, dtype=int)
        m0 = np.zeros(self.m.shape[1], dtype=int) if m_vec is None else m_vec
        return self.offset(n0, m0)

    def top_offsets(self):
        """Offsets of the ``n = 0`` fields, one per partition (in partition order)."""
        out = []
        for mv in self.partitions:
            out.append(self.zero_index(np.array(mv, dtype=int)))
        return np.array(out)


def enumerate_space(n_baths, n_terms, n_max, m_max, cap=DEFAULT_FIELD_CAP) -> IndexSpace:
    """Index space over the natural slots ``(bath, term, side)``."""
    labels = [(b, r, k) for b in range(n_baths) for r in range(n_terms) for k in (0, 1)]
    return IndexSpace(len(labels), n_max, m_max, slot_labels=labels, cap=cap)


def count_fields(n_slots, n_max, m_max) -> int:
    """Stars-and-bars count times the number of partitions (no bounded slots)."""
    return comb(n_slots + n_max, n_max) * len(partitions(m_max))
