"""Diagram-level algebra: entropy, significance bands, top-k and padding."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .persistence import PersistenceDiagram

BAND_METHODS = ("manual", "method1", "method2", "method3")


@dataclass
class SignificanceBand:
    """Diagonal band of width ``delta``: a pair is significant iff d - b > delta."""

    delta: float
    method: str = "manual"
    alpha: Optional[float] = None

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.method not in BAND_METHODS:
            raise ValueError(f"unknown band method {self.method!r}")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass
class PaddedDiagram:
    base: PersistenceDiagram
    target_size: int
    pad_count: int
    diagram: PersistenceDiagram
    sentinel: bool = False       # padded with (0, 0) because base was empty

    @property
    def padded_from(self) -> int:
        return len(self.base)


def lifetime_entropy(lifetimes) -> float:
    """Shannon entropy (natural log) of lifetimes normalised to sum 1."""
    ell = np.asarray(lifetimes, dtype=np.float64)
    total = ell.sum()
    if ell.size == 0 or total <= 0:
        return 0.0
    p = ell[ell > 0] / total
    return max(0.0, float(-(p * np.log(p)).sum()))


def persistent_entropy(pd: PersistenceDiagram) -> float:
    return lifetime_entropy(pd.persistence)


def entropy_difference(a: PersistenceDiagram, b: PersistenceDiagram) -> float:
    return abs(persistent_entropy(a) - persistent_entropy(b))


def delta_band_select(pd: PersistenceDiagram, band) -> PersistenceDiagram:
    """Pairs strictly outside the band (persistence > delta), order preserved."""
    delta = band.delta if isinstance(band, SignificanceBand) else float(band)
    return pd.subset(pd.persistence > delta)


def topk_order(pd: PersistenceDiagram) -> np.ndarray:
    """Indices by decreasing persistence; ties by ascending birth, then death."""
    return np.lexsort((pd.deaths, pd.births, -pd.persistence))


def topk_select(pd: PersistenceDiagram, k: int) -> PersistenceDiagram:
    if k < 0:
        raise ValueError("k must be >= 0")
    return pd.subset(np.sort(topk_order(pd)[:k]))


def min_persistence_index(pd: PersistenceDiagram) -> int:
    return int(np.lexsort((pd.deaths, pd.births, pd.persistence))[0])


def pad_to(pd: PersistenceDiagram, target: int) -> PaddedDiagram:
    """Append copies of the least persistent pair until ``target`` pairs.

    An empty diagram is padded with ``(0, 0)`` sentinels and flagged.
    """
    size = len(pd)
    if target < size:
        raise ValueError(f"target {target} is smaller than diagram size {size}")
    pad = target - size
    if pad == 0:
        return PaddedDiagram(pd, target, 0, pd)
    if size == 0:
        filler = np.zeros((pad, 2))
        sentinel = True
    else:
        filler = np.repeat(pd.pairs[min_persistence_index(pd)][None, :], pad, axis=0)
        sentinel = False
    out = PersistenceDiagram(pd.dim, np.vstack([pd.pairs, filler]), pd.source_id,
                             np.concatenate([pd.essential, np.zeros(pad, bool)]))
    return PaddedDiagram(pd, target, pad, out, sentinel)


def dataset_pad(diagrams: Sequence[PersistenceDiagram]) -> list:
    """Pad every diagram to the largest size found in its own homology dimension."""
    if not diagrams:
        raise ValueError("dataset_pad needs at least one diagram")
    target = {}
    for d in diagrams:
        target[d.dim] = max(target.get(d.dim, 0), len(d))
    return [pad_to(d, target[d.dim]) for d in diagrams]
