"""Bottleneck and Wasserstein distances between persistence diagrams.

A pair may be matched to the diagonal; under the L-infinity ground metric
that costs half its persistence.  Both distances are exact: the bottleneck
distance binary-searches the finite set of candidate costs with a
Hopcroft-Karp perfect-matching test, and the Wasserstein distance solves the
diagonal-augmented assignment problem.  ``*_naive`` enumerate every matching
and serve as test oracles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .persistence import PersistenceDiagram

DIAGONAL = -1
NAIVE_LIMIT = 8


@dataclass
class Matching:
    """Index pairs ``(i, j)``; ``DIAGONAL`` (-1) marks a projection."""

    pairs: list = field(default_factory=list)
    cost: float = 0.0


def _pairs(d) -> np.ndarray:
    p = d.pairs if isinstance(d, PersistenceDiagram) else np.asarray(d, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(p)):
        raise ValueError("diagram distances need finite birth/death values")
    return p


def _ground(a: np.ndarray, b: np.ndarray, inner: str) -> np.ndarray:
    diff = np.abs(a[:, None, :] - b[None, :, :])
    if inner == "linf":
        return diff.max(axis=2)
    if inner == "l2":
        return np.sqrt((diff ** 2).sum(axis=2))
    raise ValueError(f"inner norm must be 'linf' or 'l2', got {inner!r}")


def _diag(p: np.ndarray, inner: str) -> np.ndarray:
    pers = np.abs(p[:, 1] - p[:, 0])
    return pers / 2.0 if inner == "linf" else pers / math.sqrt(2.0)


def _norm_inner(inner: str) -> str:
    inner = inner.lower()
    inner = {"l_inf": "linf", "inf": "linf", "euclidean": "l2"}.get(inner, inner)
    if inner not in ("linf", "l2"):
        raise ValueError(f"inner norm must be 'linf' or 'l2', got {inner!r}")
    return inner


def _pairs_from_assignment(rows, cols, m, n):
    out = []
    for r, c in zip(rows.tolist(), cols.tolist()):
        if r < m and c < n:
            out.append((r, c))
        elif r < m:
            out.append((r, DIAGONAL))
        elif c < n:
            out.append((DIAGONAL, c))
    return sorted(out, key=lambda t: (t[0] == DIAGONAL, t[0], t[1]))


def _matching_costs(matching_pairs, a, b, inner="linf"):
    ground = _ground(a, b, inner) if len(a) and len(b) else None
    da, db = _diag(a, inner), _diag(b, inner)
    costs = []
    for i, j in matching_pairs:
        if i != DIAGONAL and j != DIAGONAL:
            costs.append(ground[i, j])
        elif i != DIAGONAL:
            costs.append(da[i])
        else:
            costs.append(db[j])
    return np.array(costs)


# -- bottleneck --------------------------------------------------------------

def _perfect_matching(cost_ab, da, db, eps):
    """Row->column assignment of the augmented graph, or None if not perfect.

    Rows: points of A, then diagonal slots for B.  Columns: points of B,
    then diagonal slots for A.
    """
    m, n = cost_ab.shape
    size = m + n
    dense = np.zeros((size, size), dtype=bool)
    dense[:m, :n] = cost_ab <= eps
    dense[np.arange(m), n + np.arange(m)] = da <= eps
    dense[m + np.arange(n), np.arange(n)] = db <= eps
    dense[m:, n:] = True
    match = maximum_bipartite_matching(csr_matrix(dense), perm_type="column")
    if np.any(match < 0):
        return None
    return match


def bottleneck(a, b, return_matching: bool = False):
    """Exact bottleneck distance; optionally the optimal matching as well."""
    A, B = _pairs(a), _pairs(b)
    m, n = len(A), len(B)
    if m + n == 0:
        return (0.0, Matching()) if return_matching else 0.0
    cost_ab = _ground(A, B, "linf") if m and n else np.zeros((m, n))
    da, db = _diag(A, "linf"), _diag(B, "linf")
    candidates = np.unique(np.concatenate([cost_ab.ravel(), da, db, [0.0]]))
    lo, hi = 0, len(candidates) - 1
    best = _perfect_matching(cost_ab, da, db, candidates[hi])
    while lo < hi:
        mid = (lo + hi) // 2
        match = _perfect_matching(cost_ab, da, db, candidates[mid])
        if match is None:
            lo = mid + 1
        else:
            hi, best = mid, match
    value = float(candidates[hi])
    if not return_matching:
        return value
    pairs = _pairs_from_assignment(np.arange(m + n), best, m, n)
    costs = _matching_costs(pairs, A, B)
    return value, Matching(pairs, float(costs.max()) if len(costs) else 0.0)


# -- wasserstein -------------------------------------------------------------

def wasserstein(a, b, order_q: float = 1.0, inner_norm: str = "linf",
                return_matching: bool = False):
    """Order-q Wasserstein distance with the given ground norm."""
    if not order_q >= 1:
        raise ValueError(f"order_q must be >= 1, got {order_q}")
    inner = _norm_inner(inner_norm)
    A, B = _pairs(a), _pairs(b)
    m, n = len(A), len(B)
    if m + n == 0:
        return (0.0, Matching()) if return_matching else 0.0
    q = float(order_q)
    da, db = _diag(A, inner) ** q, _diag(B, inner) ** q
    cost = np.zeros((m + n, n + m))
    if m and n:
        cost[:m, :n] = _ground(A, B, inner) ** q
    cost[:m, n:] = da[:, None]
    cost[m:, :n] = db[None, :]
    rows, cols = linear_sum_assignment(cost)
    value = float(cost[rows, cols].sum() ** (1.0 / q))
    if not return_matching:
        return value
    return value, Matching(_pairs_from_assignment(rows, cols, m, n), value)


# -- exhaustive oracles ------------------------------------------------------

def _all_matchings(m, n):
    """Every partial injection A -> B; unmatched points go to the diagonal."""
    def rec(i, used):
        if i == m:
            yield []
            return
        for rest in rec(i + 1, used):
            yield [(i, DIAGONAL)] + rest
        for j in range(n):
            if not used & (1 << j):
                for rest in rec(i + 1, used | (1 << j)):
                    yield [(i, j)] + rest
    for partial in rec(0, 0):
        hit = {j for _, j in partial if j != DIAGONAL}
        yield partial + [(DIAGONAL, j) for j in range(n) if j not in hit]


def _check_naive(A, B):
    if len(A) + len(B) > NAIVE_LIMIT:
        raise ValueError(f"naive distances are limited to {NAIVE_LIMIT} points in total")


def bottleneck_naive(a, b) -> float:
    A, B = _pairs(a), _pairs(b)
    _check_naive(A, B)
    best = math.inf
    for mt in _all_matchings(len(A), len(B)):
        c = _matching_costs(mt, A, B)
        best = min(best, float(c.max()) if len(c) else 0.0)
    return best


def wasserstein_naive(a, b, order_q: float = 1.0, inner_norm: str = "linf") -> float:
    if not order_q >= 1:
        raise ValueError(f"order_q must be >= 1, got {order_q}")
    inner = _norm_inner(inner_norm)
    A, B = _pairs(a), _pairs(b)
    _check_naive(A, B)
    best = math.inf
    for mt in _all_matchings(len(A), len(B)):
        c = _matching_costs(mt, A, B, inner)
        best = min(best, float((c ** order_q).sum()))
    return best ** (1.0 / order_q)
