"""Vietoris-Rips filtrations over a distance matrix.

A simplex enters at its diameter.  Simplices are ordered by
``(value, dim, vertices)`` with vertices compared lexicographically; this total
order is the one :func:`persistome.persistence.reduce_standard` reduces.

Cliques are enumerated by neighbour expansion in the threshold graph, so
the cost is proportional to the number of simplices actually present.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Union

import numpy as np
from numba import njit

from .pointcloud import DistanceMatrix

DEFAULT_SIMPLEX_CAP = 50_000_000
CAP_ENV = "PERSISTOME_SIMPLEX_CAP"


class SimplexOverflowError(RuntimeError):
    """The filtration would hold more simplices than the configured cap."""

    def __init__(self, dim: int, count: int, cap: int):
        self.dim, self.count, self.cap = dim, count, cap
        super().__init__(
            f"simplex cap exceeded in dimension {dim}: more than {cap} simplices "
            f"(counted {count} before stopping); raise {CAP_ENV} or lower the threshold")


def simplex_cap(cap: Optional[int] = None) -> int:
    if cap is not None:
        return int(cap)
    env = os.environ.get(CAP_ENV)
    return int(env) if env else DEFAULT_SIMPLEX_CAP


class Simplex(NamedTuple):
    vertices: tuple
    dim: int
    value: float


def _as_matrix(d) -> np.ndarray:
    m = d.entries if isinstance(d, DistanceMatrix) else np.asarray(d, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("distance matrix must be square")
    return np.ascontiguousarray(m, dtype=np.float64)


def enclosing_radius(d) -> float:
    """``min_i max_j d(i, j)``; beyond it the Rips complex is a cone."""
    m = _as_matrix(d)
    if m.shape[0] == 0:
        raise ValueError("empty distance matrix")
    return float(m.max(axis=1).min())


# -- clique enumeration ------------------------------------------------------

@njit(cache=True)
def _upper_neighbours(adj):
    n = adj.shape[0]
    counts = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        c = 0
        for j in range(i + 1, n):
            if adj[i, j]:
                c += 1
        counts[i + 1] = counts[i] + c
    nbrs = np.empty(counts[n], dtype=np.int64)
    for i in range(n):
        p = counts[i]
        for j in range(i + 1, n):
            if adj[i, j]:
                nbrs[p] = j
                p += 1
    return counts, nbrs


@njit(cache=True)
def _clique_walk(adj, dist, dim, limit, fill, verts, vals):
    """Count (fill=False) or emit (fill=True) the dim-simplices in lex order.

    Counting stops once ``limit`` is exceeded; the returned count is then
    ``limit + 1``.
    """
    n = adj.shape[0]
    offs, nb = _upper_neighbours(adj)
    c = 0
    if dim == 0:
        for i in range(n):
            if fill:
                verts[c, 0] = i
                vals[c] = 0.0
            c += 1
        return c
    for i in range(n):
        for a in range(offs[i], offs[i + 1]):
            j = nb[a]
            dij = dist[i, j]
            if dim == 1:
                if fill:
                    verts[c, 0] = i
                    verts[c, 1] = j
                    vals[c] = dij
                c += 1
                if not fill and c > limit:
                    return c
                continue
            for b in range(offs[j], offs[j + 1]):
                k = nb[b]
                if not adj[i, k]:
                    continue
                dijk = max(dij, dist[i, k], dist[j, k])
                if dim == 2:
                    if fill:
                        verts[c, 0] = i
                        verts[c, 1] = j
                        verts[c, 2] = k
                        vals[c] = dijk
                    c += 1
                    if not fill and c > limit:
                        return c
                    continue
                for e in range(offs[k], offs[k + 1]):
                    l = nb[e]
                    if not (adj[i, l] and adj[j, l]):
                        continue
                    if fill:
                        verts[c, 0] = i
                        verts[c, 1] = j
                        verts[c, 2] = k
                        verts[c, 3] = l
                        vals[c] = max(dijk, dist[i, l], dist[j, l], dist[k, l])
                    c += 1
                    if not fill and c > limit:
                        return c
    return c


def count_simplices(dist: np.ndarray, threshold: float, dim: int, limit: int) -> int:
    adj = dist <= threshold
    dummy_v = np.empty((0, dim + 1), dtype=np.int64)
    dummy_x = np.empty(0)
    return int(_clique_walk(adj, dist, dim, limit, False, dummy_v, dummy_x))


def list_simplices(dist: np.ndarray, threshold: float, dim: int, count: int):
    adj = dist <= threshold
    verts = np.empty((count, dim + 1), dtype=np.int64)
    vals = np.empty(count)
    got = _clique_walk(adj, dist, dim, count, True, verts, vals)
    assert got == count
    return verts, vals


# -- filtration --------------------------------------------------------------

@dataclass
class Filtration:
    """Rips filtration up to ``max_dim`` at a fixed ``threshold``.

    The simplex arrays are materialized on first access.  The implicit engine
    in :mod:`persistome.persistence` only needs ``distances`` and
    ``threshold``, so large filtrations can be reduced without ever listing
    their top-dimensional simplices.
    """

    distances: np.ndarray
    threshold: float
    max_dim: int
    cap: int = DEFAULT_SIMPLEX_CAP
    counts: Optional[list] = None
    _by_dim: Optional[list] = field(default=None, repr=False)
    _order: Optional[tuple] = field(default=None, repr=False)

    @property
    def n_points(self) -> int:
        return self.distances.shape[0]

    def _materialize(self):
        if self._by_dim is None:
            if self.counts is None:
                self.counts = _checked_counts(self.distances, self.threshold,
                                              range(self.max_dim + 1), self.cap)
            self._by_dim = [list_simplices(self.distances, self.threshold, k, c)
                            for k, c in enumerate(self.counts)]
        return self._by_dim

    def simplices_of_dim(self, dim: int):
        """``(vertices, values)`` for one dimension, vertices in lex order."""
        return self._materialize()[dim]

    def arrays(self):
        """Filtration order as ``(dims, values, vertices)``; vertices padded with -1."""
        if self._order is None:
            by_dim = self._materialize()
            width = self.max_dim + 1
            dims, vals, verts = [], [], []
            for k, (v, x) in enumerate(by_dim):
                dims.append(np.full(len(x), k, dtype=np.int64))
                vals.append(x)
                pad = np.full((len(x), width), -1, dtype=np.int64)
                pad[:, :k + 1] = v
                verts.append(pad)
            dims = np.concatenate(dims)
            vals = np.concatenate(vals)
            verts = np.concatenate(verts)
            # blocks are already (dim, lex) ordered, a stable sort on value finishes the job
            order = np.argsort(vals, kind="stable")
            self._order = (dims[order], vals[order], verts[order])
        return self._order

    def __len__(self) -> int:
        return len(self.arrays()[0])

    def __iter__(self) -> Iterator[Simplex]:
        dims, vals, verts = self.arrays()
        for k, x, v in zip(dims.tolist(), vals.tolist(), verts.tolist()):
            yield Simplex(tuple(v[:k + 1]), k, x)

    @property
    def simplices(self) -> list:
        return list(self)

    def dump(self, fh) -> None:
        """Write ``value dim v0 v1 ...`` lines in filtration order."""
        for s in self:
            fh.write(f"{s.value!r} {s.dim} {' '.join(map(str, s.vertices))}\n")


def _checked_counts(dist, threshold, dims, cap):
    counts, total = [], 0
    for k in dims:
        c = count_simplices(dist, threshold, k, cap - total)
        total += c
        if total > cap:
            raise SimplexOverflowError(k, total, cap)
        counts.append(c)
    return counts


def build_filtration(d: Union[DistanceMatrix, np.ndarray], max_dim: int = 3,
                     threshold: Union[float, str, None] = "auto",
                     cap: Optional[int] = None, materialize: bool = True) -> Filtration:
    """Rips filtration with simplices up to ``max_dim``.

    ``threshold="auto"`` (or None) uses the enclosing radius, so no H1/H2
    class survives to the end.  With ``materialize=False`` only the
    dimensions below ``max_dim`` are counted against the cap; those are the
    ones the implicit reduction stores.  Counting stops early once the cap
    is crossed, raising :class:`SimplexOverflowError`.
    """
    if max_dim not in (0, 1, 2, 3):
        raise ValueError(f"max_dim must be in 0..3, got {max_dim}")
    dist = _as_matrix(d)
    if threshold is None or threshold == "auto":
        thr = enclosing_radius(dist)
    else:
        thr = float(threshold)
        if thr < 0 or not np.isfinite(thr):
            raise ValueError(f"threshold must be finite and nonnegative, got {threshold}")
    cap = simplex_cap(cap)
    f = Filtration(dist, thr, max_dim, cap=cap)
    if materialize:
        f.counts = _checked_counts(dist, thr, range(max_dim + 1), cap)
    else:
        _checked_counts(dist, thr, range(max(max_dim, 1)), cap)
    return f
