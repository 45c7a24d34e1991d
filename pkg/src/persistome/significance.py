"""Significant-feature selection.

Two families live here:

* statistical confidence bands computed from the point cloud (subsampling,
  concentration of measure, method of shells), each returning one
  :class:`~persistome.diagram.SignificanceBand` per cloud;
* a sigmoid soft mask over persistence whose threshold ``lam`` and sharpness
  ``eta`` are fitted per diagram by minimising the TopoLoss
  ``alpha * W1(pd, reduced) + beta * entropy(reduced) + gamma * mean(mask)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.special import expit, softmax

from .diagram import SignificanceBand, lifetime_entropy
from .distances import wasserstein
from .persistence import PersistenceDiagram
from .pointcloud import PointCloud, hausdorff, make_rng, random_sample

log = logging.getLogger(__name__)

ETA_BOUNDS = (1e-2, 1e6)


@dataclass
class SelectionParams:
    lam: float
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")


@dataclass
class TopoLossWeights:
    """Simplex weights ``(alpha, beta, gamma) = softmax(logits)``."""

    logits: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64).reshape(3)

    @classmethod
    def from_weights(cls, alpha, beta, gamma) -> "TopoLossWeights":
        w = np.array([alpha, beta, gamma], dtype=np.float64)
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        return cls(np.log(w / w.sum()))

    @property
    def weights(self) -> np.ndarray:
        return softmax(self.logits)


@dataclass
class LossBreakdown:
    wd: float
    pe: float
    reduction: float
    total: float


@dataclass
class SelectionResult:
    params: SelectionParams
    mask: np.ndarray
    reduced: PersistenceDiagram
    hard_selected: PersistenceDiagram
    loss: LossBreakdown
    initial_loss: Optional[float] = None


@dataclass
class SelectionConfig:
    steps: int = 150
    learning_rate: float = 0.05
    restarts: int = 3
    seed: int = 0
    init: Optional[SelectionParams] = None
    gradient: str = "fd"           # "fd" or "analytic"
    fd_step: float = 1e-4
    entropy_mode: str = "soft"     # "soft" or "hard"


# -- soft filtering ----------------------------------------------------------

def soft_mask(pd: PersistenceDiagram, params: SelectionParams) -> np.ndarray:
    return expit(params.eta * (pd.persistence - params.lam))


def reduce_soft(pd: PersistenceDiagram, mask) -> PersistenceDiagram:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (len(pd),):
        raise ValueError(f"mask length {mask.shape} does not match diagram size {len(pd)}")
    if np.any(mask < 0) or np.any(mask > 1):
        raise ValueError("mask values must lie in [0, 1]")
    return PersistenceDiagram(pd.dim, pd.pairs * mask[:, None], pd.source_id, pd.essential)


def hard_select(pd: PersistenceDiagram, lam: float) -> PersistenceDiagram:
    return pd.subset(pd.persistence > lam)


def topo_loss(pd: PersistenceDiagram, params: SelectionParams,
              weights: Optional[TopoLossWeights] = None,
              entropy_mode: str = "soft") -> LossBreakdown:
    if len(pd) == 0:
        return LossBreakdown(0.0, 0.0, 0.0, 0.0)
    w = (weights or TopoLossWeights()).weights
    mask = soft_mask(pd, params)
    reduced = reduce_soft(pd, mask)
    wd = wasserstein(pd, reduced, 1.0, "linf")
    if entropy_mode == "soft":
        pe = lifetime_entropy(mask * pd.persistence)
    elif entropy_mode == "hard":
        pe = lifetime_entropy(hard_select(pd, params.lam).persistence)
    else:
        raise ValueError(f"unknown entropy mode {entropy_mode!r}")
    red = float(mask.mean())
    return LossBreakdown(wd, pe, red, float(w[0] * wd + w[1] * pe + w[2] * red))


# -- gradients ---------------------------------------------------------------

def _assignment(pd, mask):
    """Optimal W1/L-inf assignment between pd and its soft reduction.

    Returns ``(rows, cols, branch)`` where ``branch`` records which
    coordinate attains each off-diagonal L-inf cost (0 birth, 1 death).
    """
    P = pd.pairs
    R = P * mask[:, None]
    n = len(P)
    diff = np.abs(P[:, None, :] - R[None, :, :])
    cost = np.zeros((2 * n, 2 * n))
    cost[:n, :n] = diff.max(axis=2)
    cost[:n, n:] = (pd.persistence / 2.0)[:, None]
    cost[n:, :n] = (mask * pd.persistence / 2.0)[None, :]
    rows, cols = linear_sum_assignment(cost)
    branch = np.full(len(rows), -1)
    inner = (rows < n) & (cols < n)
    branch[inner] = diff[rows[inner], cols[inner]].argmax(axis=1)
    return rows, cols, branch


def matching_signature(pd: PersistenceDiagram, params: SelectionParams) -> tuple:
    """Hashable description of the optimal matching and its active branches."""
    n = len(pd)
    rows, cols, branch = _assignment(pd, soft_mask(pd, params))
    # diagonal slots are interchangeable, so only their existence matters
    return tuple(sorted((r if r < n else -1, c if c < n else -1, br)
                        for r, c, br in zip(rows.tolist(), cols.tolist(), branch.tolist())
                        if r < n or c < n))


def _analytic_grad(pd, params, weights, entropy_mode):
    """d(total)/d(lam, log eta) with the Wasserstein matching held fixed."""
    w = weights.weights
    P = pd.pairs
    n = len(P)
    p = pd.persistence
    m = soft_mask(pd, params)
    rows, cols, branch = _assignment(pd, m)

    dwd_dm = np.zeros(n)
    for r, c, br in zip(rows, cols, branch):
        if r < n and c < n:
            orig = P[r, br]
            red = m[c] * P[c, br]
            # cost = |orig - m_c * P[c, br]|
            dwd_dm[c] += -np.sign(orig - red) * P[c, br]
        elif c < n:
            dwd_dm[c] += p[c] / 2.0

    dpe_dm = np.zeros(n)
    if entropy_mode == "soft":
        ell = m * p
        L = ell.sum()
        if L > 0:
            E = lifetime_entropy(ell)
            pos = ell > 0
            dpe_dl = np.zeros(n)
            dpe_dl[pos] = -(np.log(ell[pos] / L) + E) / L
            dpe_dm = dpe_dl * p

    dtotal_dm = w[0] * dwd_dm + w[1] * dpe_dm + w[2] / n
    s = m * (1.0 - m)
    dm_dlam = -params.eta * s
    dm_dlogeta = params.eta * (p - params.lam) * s
    return np.array([dtotal_dm @ dm_dlam, dtotal_dm @ dm_dlogeta])


def _fd_grad(pd, params, weights, entropy_mode, step):
    lam, leta = params.lam, math.log(params.eta)
    g = np.zeros(2)
    for k in range(2):
        hi = [lam, leta]
        lo = [lam, leta]
        hi[k] += step
        lo[k] -= step
        f_hi = topo_loss(pd, SelectionParams(hi[0], math.exp(hi[1])), weights, entropy_mode).total
        f_lo = topo_loss(pd, SelectionParams(lo[0], math.exp(lo[1])), weights, entropy_mode).total
        g[k] = (f_hi - f_lo) / (2.0 * step)
    return g


def topo_loss_gradient(pd: PersistenceDiagram, params: SelectionParams,
                       weights: Optional[TopoLossWeights] = None, method: str = "fd",
                       step: float = 1e-6, entropy_mode: str = "soft") -> np.ndarray:
    """Gradient of the total loss with respect to ``(lam, log eta)``."""
    weights = weights or TopoLossWeights()
    if method == "fd":
        return _fd_grad(pd, params, weights, entropy_mode, step)
    if method == "analytic":
        return _analytic_grad(pd, params, weights, entropy_mode)
    raise ValueError(f"unknown gradient method {method!r}")


# -- optimisation ------------------------------------------------------------

def _result(pd, params, weights, entropy_mode, initial_loss=None):
    mask = soft_mask(pd, params)
    return SelectionResult(params, mask, reduce_soft(pd, mask), hard_select(pd, params.lam),
                           topo_loss(pd, params, weights, entropy_mode), initial_loss)


def optimize_selection(pd: PersistenceDiagram, weights: Optional[TopoLossWeights] = None,
                       config: Optional[SelectionConfig] = None) -> SelectionResult:
    """Fit ``(lam, eta)`` to one diagram by Adam descent on the TopoLoss.

    ``lam`` is optimised in units of the largest persistence and ``eta`` in
    log space, clipped to ``ETA_BOUNDS``.  Each restart starts from a random
    point (the first one from ``config.init`` when given); the best loss
    seen anywhere, initial points included, is returned, so the result is
    never worse than the starting point.
    """
    if len(pd) == 0:
        raise ValueError("optimize_selection needs a nonempty diagram")
    cfg = config or SelectionConfig()
    if cfg.steps < 1:
        raise ValueError("steps must be >= 1")
    weights = weights or TopoLossWeights()
    pers = pd.persistence
    scale = float(pers.max()) if pers.max() > 0 else 1.0
    rng = make_rng(cfg.seed)
    lo_eta, hi_eta = math.log(ETA_BOUNDS[0]), math.log(ETA_BOUNDS[1])

    def loss_at(theta):
        prm = SelectionParams(theta[0] * scale, math.exp(theta[1]))
        return topo_loss(pd, prm, weights, cfg.entropy_mode).total

    def grad_at(theta):
        prm = SelectionParams(theta[0] * scale, math.exp(theta[1]))
        if cfg.gradient == "analytic":
            g = _analytic_grad(pd, prm, weights, cfg.entropy_mode)
        else:
            g = _fd_grad(pd, prm, weights, cfg.entropy_mode, cfg.fd_step * scale)
        return np.array([g[0] * scale, g[1]])

    best_theta, best_loss, first_loss = None, math.inf, None
    for restart in range(max(1, cfg.restarts)):
        if restart == 0 and cfg.init is not None:
            theta = np.array([cfg.init.lam / scale, math.log(cfg.init.eta)])
        else:
            theta = np.array([rng.uniform(0.0, 1.0),
                              math.log(rng.uniform(2.0, 50.0) / scale)])
        theta[1] = min(max(theta[1], lo_eta), hi_eta)
        f = loss_at(theta)
        if first_loss is None:
            first_loss = f
        if not math.isfinite(f):
            log.warning("restart %d: non-finite initial loss, skipped", restart)
            continue
        if f < best_loss:
            best_theta, best_loss = theta.copy(), f
        m1 = np.zeros(2)
        m2 = np.zeros(2)
        for t in range(1, cfg.steps + 1):
            g = grad_at(theta)
            if not np.all(np.isfinite(g)):
                log.warning("restart %d: non-finite gradient at step %d", restart, t)
                break
            m1 = 0.9 * m1 + 0.1 * g
            m2 = 0.999 * m2 + 0.001 * g * g
            step = cfg.learning_rate * (m1 / (1 - 0.9 ** t)) / (np.sqrt(m2 / (1 - 0.999 ** t)) + 1e-12)
            theta = theta - step
            theta[0] = min(max(theta[0], 0.0), 1.0)
            theta[1] = min(max(theta[1], lo_eta), hi_eta)
            f = loss_at(theta)
            if not math.isfinite(f):
                log.warning("restart %d: non-finite loss at step %d", restart, t)
                break
            if f < best_loss:
                best_theta, best_loss = theta.copy(), f
    if best_theta is None:
        raise FloatingPointError("no restart produced a finite loss")
    params = SelectionParams(best_theta[0] * scale, math.exp(best_theta[1]))
    return _result(pd, params, weights, cfg.entropy_mode, first_loss)


# -- statistical bands -------------------------------------------------------

def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def method1_subsampling(pc: PointCloud, n_subsamples: int = 100,
                        subsample_size: Optional[int] = None, alpha: float = 0.05,
                        seed: int = 0) -> SignificanceBand:
    """Band from the (1 - alpha) quantile of Hausdorff distances of subsamples.

    Subsamples default to ``ceil(n / ln n)`` points; the band width is twice
    the upper empirical quantile.
    """
    _check_alpha(alpha)
    n = len(pc)
    if n_subsamples < 30:
        raise ValueError("need at least 30 subsamples")
    b = subsample_size if subsample_size is not None else math.ceil(n / math.log(n))
    if not 1 <= b < n:
        raise ValueError(f"subsample size must be in [1, {n - 1}], got {b}")
    if np.ptp(pc.points, axis=0).max() == 0:
        return SignificanceBand(0.0, "method1", alpha)
    seeds = np.random.SeedSequence(seed).generate_state(n_subsamples, dtype=np.uint64)
    stats = np.array([hausdorff(random_sample(pc, b, int(s)), pc) for s in seeds])
    q = float(np.quantile(stats, 1.0 - alpha, method="higher"))
    return SignificanceBand(2.0 * q, "method1", alpha)


def knn_radii(pc: PointCloud, k: Optional[int] = None) -> np.ndarray:
    """Distance from each point to its k-th nearest other point, k = ceil(ln n)."""
    n = len(pc)
    k = k or max(1, math.ceil(math.log(n)))
    k = min(k, n - 1)
    dist, _ = cKDTree(pc.points).query(pc.points, k=k + 1)
    return dist[:, k]


def _density_constants(pc, dim, k):
    """Local lower-bound constants a_i with P(B(x_i, r)) ~ a_i r^dim."""
    n = len(pc)
    r = knn_radii(pc, k)
    kk = min(k or max(1, math.ceil(math.log(n))), n - 1)
    with np.errstate(divide="ignore"):
        a = (kk / n) / r ** dim
    return r, a


def _coverage_bound(t, n, dim, fractions, constants):
    """Union bound on P(H(sample, support) > t) over covering balls.

    A region of mass share f whose density constant is a needs at most
    ``f * 4^d / (a t^d)`` balls of radius t/2; each is missed with
    probability at most ``exp(-n a t^d / 2^d)``.
    """
    td = t ** dim
    return float(np.sum(fractions * (4.0 ** dim) / (constants * td)
                        * np.exp(-n * constants * td / 2.0 ** dim)))


def _solve_bound(n, dim, fractions, constants, alpha, what):
    lo, hi = 1e-12, 1.0
    while _coverage_bound(hi, n, dim, fractions, constants) > alpha:
        hi *= 2.0
        if hi > 1e12:
            raise ArithmeticError(f"{what}: bound never drops below alpha={alpha}")
    # bisection in log space; the bound is decreasing in t
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if _coverage_bound(mid, n, dim, fractions, constants) > alpha:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-13:
            return hi
    raise ArithmeticError(f"{what}: bisection did not converge (bracket [{lo}, {hi}])")


def method2_concentration(pc: PointCloud, alpha: float = 0.05, dim: int = 2,
                          k: Optional[int] = None) -> SignificanceBand:
    """Concentration-of-measure band.

    The density lower-bound constant is the smallest k-NN estimate
    ``(k/n) / r_k^dim`` over the cloud; the Hausdorff quantile t solves
    ``coverage_bound(t) = alpha`` and the band width is 2t.
    """
    _check_alpha(alpha)
    n = len(pc)
    if n < 10:
        raise ValueError("method 2 needs at least 10 points")
    _, a = _density_constants(pc, dim, k)
    if not np.isfinite(a.min()):
        raise ValueError("duplicate points make the k-NN density estimate infinite")
    t = _solve_bound(n, dim, np.ones(1), np.array([a.min()]), alpha, "method2")
    return SignificanceBand(2.0 * t, "method2", alpha)


def shell_partition(radii: np.ndarray, n_shells: int) -> list:
    """Group points into equal-width shells of k-NN radius; empty shells merge upward."""
    lo, hi = radii.min(), radii.max()
    if n_shells == 1 or hi == lo:
        return [np.arange(len(radii))]
    edges = np.linspace(lo, hi, n_shells + 1)
    which = np.clip(np.searchsorted(edges, radii, side="right") - 1, 0, n_shells - 1)
    shells, pending = [], np.empty(0, dtype=np.int64)
    for j in range(n_shells):
        members = np.concatenate([pending, np.flatnonzero(which == j)])
        if len(members) == 0:
            log.warning("shell %d is empty, merged with its neighbour", j)
            pending = members
            continue
        shells.append(members)
        pending = np.empty(0, dtype=np.int64)
    return shells


def method3_shells(pc: PointCloud, alpha: float = 0.05, n_shells: int = 5,
                   dim: int = 2, k: Optional[int] = None) -> SignificanceBand:
    """Method of shells: the concentration bound stratified by local density.

    Each shell contributes its own covering term with its own density
    constant, weighted by its share of the points.  With one shell this is
    exactly :func:`method2_concentration`.
    """
    _check_alpha(alpha)
    n = len(pc)
    if n < 10:
        raise ValueError("method 3 needs at least 10 points")
    if n_shells < 1:
        raise ValueError("n_shells must be >= 1")
    r, a = _density_constants(pc, dim, k)
    if not np.isfinite(a.min()):
        raise ValueError("duplicate points make the k-NN density estimate infinite")
    shells = shell_partition(r, n_shells)
    fractions = np.array([len(s) / n for s in shells])
    constants = np.array([a[s].min() for s in shells])
    t = _solve_bound(n, dim, fractions, constants, alpha, "method3")
    return SignificanceBand(2.0 * t, "method3", alpha)
