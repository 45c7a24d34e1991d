"""Persistence diagrams of Rips filtrations over Z/2.

Two reductions are provided:

* :func:`reduce_standard` is the textbook left-to-right column reduction of
  the explicit boundary matrix.  Columns are Python ints used as bit sets,
  so adding two columns is a single XOR.  It is slow and exists as an oracle.
* :func:`reduce_fast` computes persistent cohomology dimension by dimension
  with clearing, implicit coboundaries in the combinatorial number system and
  the emergent-pair shortcut.  Top-dimensional simplices are never stored.

Both drop zero-persistence pairs, so they produce identical multisets even
though they break ties between equal filtration values differently.
Classes alive at the threshold are reported with ``death = threshold`` and
flagged in ``PersistenceDiagram.essential``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np
from numba import njit
from numba import types as nbtypes
from numba.typed import Dict as NumbaDict

from .pointcloud import PointCloud, distance_matrix
from .rips import Filtration, build_filtration, list_simplices, count_simplices


class PersistencePair(NamedTuple):
    birth: float
    death: float
    dim: int

    @property
    def persistence(self) -> float:
        return self.death - self.birth


@dataclass
class PersistenceDiagram:
    """Multiset of ``(birth, death)`` pairs in one homology dimension."""

    dim: int
    pairs: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    source_id: Optional[str] = None
    essential: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.asarray(self.pairs, dtype=np.float64)
        if p.size == 0:
            p = p.reshape(0, 2)
        if p.ndim != 2 or p.shape[1] != 2:
            raise ValueError(f"pairs must have shape (m, 2), got {p.shape}")
        self.pairs = p
        if self.essential is None:
            self.essential = np.zeros(len(p), dtype=bool)
        else:
            self.essential = np.asarray(self.essential, dtype=bool)

    def __len__(self) -> int:
        return self.pairs.shape[0]

    def __iter__(self):
        for b, d in self.pairs.tolist():
            yield PersistencePair(b, d, self.dim)

    @property
    def births(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def deaths(self) -> np.ndarray:
        return self.pairs[:, 1]

    @property
    def persistence(self) -> np.ndarray:
        return self.pairs[:, 1] - self.pairs[:, 0]

    def subset(self, mask_or_index) -> "PersistenceDiagram":
        return PersistenceDiagram(self.dim, self.pairs[mask_or_index], self.source_id,
                                  self.essential[mask_or_index])

    def sorted_pairs(self) -> list:
        """Canonical multiset form, for exact comparisons."""
        return sorted(map(tuple, self.pairs.tolist()))

    def same_multiset(self, other: "PersistenceDiagram") -> bool:
        return self.dim == other.dim and self.sorted_pairs() == other.sorted_pairs()


def _make_diagram(dim, births, deaths, essential, source_id=None):
    births = np.asarray(births, dtype=np.float64)
    deaths = np.asarray(deaths, dtype=np.float64)
    essential = np.asarray(essential, dtype=bool)
    keep = deaths > births
    pairs = np.column_stack([births[keep], deaths[keep]]) if keep.any() else np.empty((0, 2))
    return PersistenceDiagram(dim, pairs, source_id, essential[keep])


# -- standard reduction (oracle) --------------------------------------------

def _binomials(n: int, k: int) -> np.ndarray:
    """``table[j, v] == C(v, j)`` for ``j <= k``, ``v <= n``."""
    table = np.zeros((k + 1, n + 1), dtype=np.int64)
    table[0, :] = 1
    for v in range(1, n + 1):
        for j in range(1, k + 1):
            table[j, v] = table[j - 1, v - 1] + table[j, v - 1]
    return table


def _colex_index(verts: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Combinatorial-number-system index of ascending vertex rows."""
    idx = np.zeros(len(verts), dtype=np.int64)
    for t in range(verts.shape[1]):
        idx += table[t + 1, verts[:, t]]
    return idx


def reduce_standard(f: Filtration, max_hom_dim: int = 2) -> list:
    """Diagrams for dimensions ``0..max_hom_dim`` by plain column reduction."""
    if not 0 <= max_hom_dim <= 2:
        raise ValueError("max_hom_dim must be in 0..2")
    dims, vals, verts = f.arrays()
    top = min(max_hom_dim + 1, f.max_dim)
    table = _binomials(f.n_points, top + 1)

    # per-dimension filtration order and lookup by colex index
    order_in_dim, value_in_dim, lookup = [], [], []
    for k in range(top + 1):
        sel = np.flatnonzero(dims == k)
        v = verts[sel, :k + 1]
        cidx = _colex_index(v, table)
        srt = np.argsort(cidx)
        order_in_dim.append(v)
        value_in_dim.append(vals[sel])
        lookup.append((cidx[srt], srt))

    births = [[] for _ in range(max_hom_dim + 1)]
    deaths = [[] for _ in range(max_hom_dim + 1)]
    killed = [set() for _ in range(top + 1)]   # rows that became a pivot
    zero_cols = [None] * (top + 1)             # simplices whose column reduced to 0
    zero_cols[0] = set(range(len(value_in_dim[0])))

    for k in range(1, top + 1):
        v = order_in_dim[k]
        faces = np.empty((len(v), k + 1), dtype=np.int64)
        sorted_cidx, perm = lookup[k - 1]
        for drop in range(k + 1):
            fv = np.delete(v, drop, axis=1)
            pos = np.searchsorted(sorted_cidx, _colex_index(fv, table))
            faces[:, drop] = perm[pos]
        pivots = {}
        stored = {}
        zeros = set()
        for j, rows in enumerate(faces.tolist()):
            col = 0
            for r in rows:
                col ^= 1 << r
            while col:
                low = col.bit_length() - 1
                other = pivots.get(low)
                if other is None:
                    pivots[low] = j
                    stored[j] = col
                    break
                col ^= stored[other]
            if not col:
                zeros.add(j)
            elif k - 1 <= max_hom_dim:
                births[k - 1].append(value_in_dim[k - 1][low])
                deaths[k - 1].append(value_in_dim[k][j])
        killed[k - 1] = set(pivots)
        zero_cols[k] = zeros

    ess = [[] for _ in range(max_hom_dim + 1)]
    for k in range(min(max_hom_dim, top) + 1):
        for i in sorted(zero_cols[k] - killed[k]):
            ess[k].append(value_in_dim[k][i])
    out = []
    for k in range(max_hom_dim + 1):
        b = births[k] + ess[k]
        d = deaths[k] + [f.threshold] * len(ess[k])
        e = [False] * len(births[k]) + [True] * len(ess[k])
        out.append(_make_diagram(k, b, d, e))
    return out


# -- fast cohomology engine --------------------------------------------------

@njit(cache=True, inline="always")
def _before(d1, i1, d2, i2):
    # coface order: smaller diameter first, larger index breaks ties
    return d1 < d2 or (d1 == d2 and i1 > i2)


@njit(cache=True)
def _heap_push(hd, hi, size, d, i):
    if size == hd.shape[0]:
        nd = np.empty(2 * size + 16)
        ni = np.empty(2 * size + 16, dtype=np.int64)
        nd[:size] = hd[:size]
        ni[:size] = hi[:size]
        hd, hi = nd, ni
    c = size
    hd[c] = d
    hi[c] = i
    while c > 0:
        p = (c - 1) >> 1
        if _before(hd[c], hi[c], hd[p], hi[p]):
            hd[c], hd[p] = hd[p], hd[c]
            hi[c], hi[p] = hi[p], hi[c]
            c = p
        else:
            break
    return hd, hi, size + 1


@njit(cache=True)
def _heap_pop(hd, hi, size):
    size -= 1
    hd[0] = hd[size]
    hi[0] = hi[size]
    c = 0
    while True:
        l = 2 * c + 1
        if l >= size:
            break
        r = l + 1
        m = l
        if r < size and _before(hd[r], hi[r], hd[l], hi[l]):
            m = r
        if _before(hd[m], hi[m], hd[c], hi[c]):
            hd[c], hd[m] = hd[m], hd[c]
            hi[c], hi[m] = hi[m], hi[c]
            c = m
        else:
            break
    return size


@njit(cache=True)
def _heap_pivot(hd, hi, size):
    """Pop cancelling duplicates until the top has odd multiplicity."""
    while size > 0:
        td = hd[0]
        ti = hi[0]
        size = _heap_pop(hd, hi, size)
        count = 1
        while size > 0 and hi[0] == ti:
            size = _heap_pop(hd, hi, size)
            count += 1
        if count & 1:
            hd, hi, size = _heap_push(hd, hi, size, td, ti)
            return hd, hi, size, True, td, ti
    return hd, hi, size, False, 0.0, -1


@njit(cache=True)
def _vertices(idx, dim, n, B, out):
    top = n - 1
    for pos in range(dim, -1, -1):
        k = pos + 1
        lo = pos
        hi = top
        # largest v in [lo, hi] with C(v, k) <= idx
        while lo < hi:
            mid = (lo + hi + 1) >> 1
            if B[k, mid] <= idx:
                lo = mid
            else:
                hi = mid - 1
        out[pos] = lo
        idx -= B[k, lo]
        top = lo - 1


@njit(cache=True)
def _simplex_diameter(verts, dim, dist):
    d = 0.0
    for a in range(dim + 1):
        for b in range(a + 1, dim + 1):
            x = dist[verts[a], verts[b]]
            if x > d:
                d = x
    return d


@njit(cache=True)
def _reduce_dimension(dist, thr, B, dim, col_idx, col_diam, can_cobound, pivot_of):
    """Cohomology reduction of the ``dim``-simplex columns, in the given order.

    Columns arrive sorted by decreasing filtration order.  Returns per-column
    status (0 zero-persistence or cleared pivot, 1 finite pair, 2 essential)
    and death values; ``pivot_of`` maps each pivot coface to its column.
    """
    n = dist.shape[0]
    m = col_idx.shape[0]
    status = np.zeros(m, dtype=np.int8)
    death = np.zeros(m)
    if not can_cobound:
        for j in range(m):
            status[j] = 2
        return status, death

    verts = np.empty(dim + 1, dtype=np.int64)
    hd = np.empty(256)
    hi = np.empty(256, dtype=np.int64)
    v_start = np.full(m, -1, dtype=np.int64)
    v_len = np.zeros(m, dtype=np.int64)
    v_flat = np.empty(1024, dtype=np.int64)
    v_used = 0
    work = np.empty(64, dtype=np.int64)

    for j in range(m):
        sigma = col_idx[j]
        sdiam = col_diam[j]
        size = 0
        wn = 0
        work[wn] = sigma
        wn += 1

        # coboundary of sigma, cofaces in decreasing index order
        _vertices(sigma, dim, n, B, verts)
        emergent = True
        found_emergent = False
        idx_below = sigma
        idx_above = 0
        k = dim + 1
        t = dim
        for v in range(n - 1, -1, -1):
            if t >= 0 and v == verts[t]:
                idx_below -= B[k, v]
                idx_above += B[k + 1, v]
                k -= 1
                t -= 1
                continue
            cd = sdiam
            ok = True
            for a in range(dim + 1):
                x = dist[v, verts[a]]
                if x > thr:
                    ok = False
                    break
                if x > cd:
                    cd = x
            if not ok:
                continue
            cidx = idx_above + B[k + 1, v] + idx_below
            if emergent and cd == sdiam:
                if cidx not in pivot_of:
                    pivot_of[cidx] = j
                    found_emergent = True
                    break
                emergent = False
            hd, hi, size = _heap_push(hd, hi, size, cd, cidx)
        if found_emergent:
            continue

        hd, hi, size, found, pd, pidx = _heap_pivot(hd, hi, size)
        while found:
            if pidx not in pivot_of:
                break
            other = pivot_of[pidx]
            # add the reduced column of `other`: coboundaries of its V entries
            if v_start[other] < 0:
                cnt = 1
            else:
                cnt = v_len[other]
            for q in range(cnt):
                if v_start[other] < 0:
                    s = col_idx[other]
                else:
                    s = v_flat[v_start[other] + q]
                if wn == work.shape[0]:
                    nw = np.empty(2 * wn, dtype=np.int64)
                    nw[:wn] = work[:wn]
                    work = nw
                work[wn] = s
                wn += 1
                _vertices(s, dim, n, B, verts)
                s_diam = _simplex_diameter(verts, dim, dist)
                idx_below = s
                idx_above = 0
                k = dim + 1
                t = dim
                for v in range(n - 1, -1, -1):
                    if t >= 0 and v == verts[t]:
                        idx_below -= B[k, v]
                        idx_above += B[k + 1, v]
                        k -= 1
                        t -= 1
                        continue
                    cd = s_diam
                    ok = True
                    for a in range(dim + 1):
                        x = dist[v, verts[a]]
                        if x > thr:
                            ok = False
                            break
                        if x > cd:
                            cd = x
                    if ok:
                        hd, hi, size = _heap_push(hd, hi, size, cd, idx_above + B[k + 1, v] + idx_below)
            hd, hi, size, found, pd, pidx = _heap_pivot(hd, hi, size)

        if not found:
            status[j] = 2
            continue
        pivot_of[pidx] = j
        if pd > sdiam:
            status[j] = 1
            death[j] = pd
        if wn > 1:
            # store V_j reduced mod 2
            w = np.sort(work[:wn])
            if v_used + wn > v_flat.shape[0]:
                nf = np.empty(2 * (v_used + wn), dtype=np.int64)
                nf[:v_used] = v_flat[:v_used]
                v_flat = nf
            v_start[j] = v_used
            c = 0
            q = 0
            while q < wn:
                r = q
                while r < wn and w[r] == w[q]:
                    r += 1
                if (r - q) & 1:
                    v_flat[v_used + c] = w[q]
                    c += 1
                q = r
            v_len[j] = c
            v_used += c
    return status, death


@njit(cache=True)
def _union_find_h0(n, eu, ev, ediam):
    """Kruskal over edges in filtration order; returns the death-edge mask."""
    parent = np.arange(n)
    dead = np.zeros(eu.shape[0], dtype=np.bool_)
    for e in range(eu.shape[0]):
        a = eu[e]
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        b = ev[e]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if a != b:
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
            dead[e] = True
    return dead


def _new_pivot_map():
    return NumbaDict.empty(key_type=nbtypes.int64, value_type=nbtypes.int64)


def reduce_fast(f: Filtration, max_hom_dim: int = 2) -> list:
    """Same contract as :func:`reduce_standard`, via the implicit cohomology engine."""
    if not 0 <= max_hom_dim <= 2:
        raise ValueError("max_hom_dim must be in 0..2")
    dist, thr = f.distances, f.threshold
    n = f.n_points
    B = _binomials(n, max_hom_dim + 2)
    out = []

    # H0
    if f.max_dim >= 1:
        n_edges = count_simplices(dist, thr, 1, np.iinfo(np.int64).max - 1)
        ev, evals = list_simplices(dist, thr, 1, n_edges)
    else:
        ev, evals = np.empty((0, 2), dtype=np.int64), np.empty(0)
    eidx = _colex_index(ev, B)
    asc = np.lexsort((-eidx, evals))
    dead = _union_find_h0(n, ev[asc, 0], ev[asc, 1], evals[asc])
    n_ess = n - int(dead.sum())
    out.append(_make_diagram(
        0,
        np.zeros(int(dead.sum()) + n_ess),
        np.concatenate([evals[asc][dead], np.full(n_ess, thr)]),
        np.concatenate([np.zeros(int(dead.sum()), bool), np.ones(n_ess, bool)])))
    if max_hom_dim == 0:
        return out

    # dimension-1 columns: edges that did not kill a component (clearing)
    desc = asc[::-1]
    keep = ~dead[::-1]
    cols_idx = eidx[desc][keep]
    cols_diam = evals[desc][keep]
    for dim in range(1, max_hom_dim + 1):
        if dim > f.max_dim:
            out.append(PersistenceDiagram(dim))
            continue
        pivot_of = _new_pivot_map()
        status, death = _reduce_dimension(dist, thr, B, dim, cols_idx, cols_diam,
                                          dim + 1 <= f.max_dim, pivot_of)
        fin = status == 1
        ess = status == 2
        out.append(_make_diagram(
            dim,
            np.concatenate([cols_diam[fin], cols_diam[ess]]),
            np.concatenate([death[fin], np.full(int(ess.sum()), thr)]),
            np.concatenate([np.zeros(int(fin.sum()), bool), np.ones(int(ess.sum()), bool)])))
        if dim == max_hom_dim:
            break
        # next dimension's columns, minus the cofaces already used as pivots
        count = f.counts[dim + 1] if f.counts else count_simplices(
            dist, thr, dim + 1, np.iinfo(np.int64).max - 1)
        nv, nvals = list_simplices(dist, thr, dim + 1, count)
        nidx = _colex_index(nv, B)
        del nv
        if len(pivot_of):
            cleared = np.fromiter(pivot_of.keys(), dtype=np.int64, count=len(pivot_of))
            mask = ~np.isin(nidx, cleared)
            nidx, nvals = nidx[mask], nvals[mask]
        order = np.lexsort((nidx, -nvals))
        cols_idx, cols_diam = nidx[order], nvals[order]
    return out


# -- convenience -------------------------------------------------------------

def compute_pd(pc: PointCloud, max_hom_dim: int = 2,
               threshold: Union[float, str, None] = "auto",
               cap: Optional[int] = None) -> dict:
    """H1 (and H2 when ``max_hom_dim == 2``) diagrams of a point cloud."""
    if max_hom_dim not in (1, 2):
        raise ValueError("max_hom_dim must be 1 or 2")
    if len(pc) < 2:
        raise ValueError("compute_pd needs at least two points")
    f = build_filtration(distance_matrix(pc), max_dim=max_hom_dim + 1,
                         threshold=threshold, cap=cap, materialize=False)
    dgms = reduce_fast(f, max_hom_dim)
    result = {}
    for k in range(1, max_hom_dim + 1):
        dgms[k].source_id = pc.id
        result[k] = dgms[k]
    return result


# -- CSV ---------------------------------------------------------------------

def diagrams_to_csv(diagrams) -> str:
    buf = io.StringIO()
    buf.write("dim,birth,death\n")
    for dgm in diagrams:
        for b, d in dgm.pairs.tolist():
            buf.write(f"{dgm.dim},{b:.17g},{d:.17g}\n")
    return buf.getvalue()


def write_diagram_csv(path, diagrams) -> None:
    if isinstance(diagrams, PersistenceDiagram):
        diagrams = [diagrams]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(diagrams_to_csv(diagrams))


def parse_diagram_csv(text: str) -> dict:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["dim", "birth", "death"]:
        raise ValueError("diagram CSV must start with header 'dim,birth,death'")
    by_dim: dict = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 3:
            raise ValueError(f"line {lineno}: expected 3 fields")
        try:
            k, b, d = int(row[0]), float(row[1]), float(row[2])
        except ValueError:
            raise ValueError(f"line {lineno}: malformed row {row!r}") from None
        if not (np.isfinite(b) and np.isfinite(d)):
            raise ValueError(f"line {lineno}: non-finite value")
        by_dim.setdefault(k, []).append((b, d))
    return {k: PersistenceDiagram(k, np.array(v)) for k, v in sorted(by_dim.items())}


def read_diagram_csv(path, dim: Optional[int] = None):
    """All diagrams in a CSV keyed by dimension, or one if ``dim`` is given."""
    with open(path, "r", encoding="utf-8") as fh:
        dgms = parse_diagram_csv(fh.read())
    if dim is None:
        return dgms
    return dgms.get(dim, PersistenceDiagram(dim))
