import logging
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_diagram, signal_noise_diagram
from persistome.diagram import delta_band_select
from persistome.distances import bottleneck
from persistome.persistence import PersistenceDiagram, compute_pd
from persistome.pointcloud import PointCloud, generate_shape
from persistome.significance import (SelectionConfig, SelectionParams, TopoLossWeights,
                                     hard_select, matching_signature, method1_subsampling,
                                     method2_concentration, method3_shells, optimize_selection,
                                     reduce_soft, shell_partition, soft_mask, topo_loss,
                                     topo_loss_gradient)


def pd(*pairs):
    return PersistenceDiagram(1, np.array(pairs, dtype=float).reshape(-1, 2))


# -- soft mask ---------------------------------------------------------------

def test_soft_mask_values():
    d = pd((0.0, 1.0), (0.0, 0.5), (0.0, 2.0))
    m = soft_mask(d, SelectionParams(0.5, 10.0))
    assert m[0] == pytest.approx(1 / (1 + math.exp(-5)), abs=1e-15)
    assert m[0] == pytest.approx(0.9933, abs=1e-4)
    assert m[1] == 0.5
    assert soft_mask(d, SelectionParams(0.5, 1e6))[2] == 1.0


def test_params_validation():
    with pytest.raises(ValueError):
        SelectionParams(0.1, 0.0)


def test_reduce_soft_examples():
    d = pd((2.0, 5.0), (1.0, 3.0))
    assert np.array_equal(reduce_soft(d, [1.0, 1.0]).pairs, d.pairs)
    assert reduce_soft(d, [0.0, 0.0]).pairs.tolist() == [[0, 0], [0, 0]]
    assert reduce_soft(d, [0.5, 1.0]).pairs[0].tolist() == [1.0, 2.5]
    with pytest.raises(ValueError):
        reduce_soft(d, [1.0])
    with pytest.raises(ValueError):
        reduce_soft(d, [1.2, 0.0])


# -- loss --------------------------------------------------------------------

def test_weights_are_softmax():
    w = TopoLossWeights()
    assert w.weights == pytest.approx([1 / 3] * 3)
    w2 = TopoLossWeights.from_weights(2, 1, 1)
    assert w2.weights == pytest.approx([0.5, 0.25, 0.25])
    assert w2.weights.sum() == pytest.approx(1.0)


def test_loss_identity_reduction():
    d = pd((0.0, 1.0), (0.2, 0.5), (1.0, 3.0))
    loss = topo_loss(d, SelectionParams(-10.0, 100.0))
    assert loss.wd == 0.0
    assert loss.reduction == 1.0
    assert loss.total == pytest.approx((loss.wd + loss.pe + loss.reduction) / 3)


def test_loss_full_removal():
    d = pd((0.0, 1.0), (0.2, 0.5), (1.0, 3.0))
    loss = topo_loss(d, SelectionParams(100.0, 10.0))
    assert loss.wd == pytest.approx(d.persistence.sum() / 2, abs=1e-9)
    assert loss.reduction == pytest.approx(0.0, abs=1e-9)
    assert loss.pe == pytest.approx(0.0, abs=1e-6)


def test_loss_single_pair_has_zero_entropy():
    for lam, eta in [(0.0, 1.0), (0.7, 30.0), (5.0, 0.1)]:
        assert topo_loss(pd((0.1, 1.1)), SelectionParams(lam, eta)).pe == 0.0


def test_loss_empty_diagram():
    assert topo_loss(pd(), SelectionParams(0.1, 1.0)).total == 0.0


def test_hard_entropy_mode():
    d = pd((0.0, 1.0), (0.0, 0.05), (0.0, 2.0))
    loss = topo_loss(d, SelectionParams(0.5, 10.0), entropy_mode="hard")
    expected = -(1 / 3 * math.log(1 / 3) + 2 / 3 * math.log(2 / 3))
    assert loss.pe == pytest.approx(expected)


@given(st.integers(0, 10_000))
def test_hard_soft_consistency_at_large_eta(seed):
    rng = np.random.default_rng(seed)
    d = random_diagram(rng, 12)
    lam = float(rng.uniform(0, d.persistence.max()))
    keep = np.abs(d.persistence - lam) > 1e-6
    d = d.subset(keep)
    params = SelectionParams(lam, 1e6)
    soft = reduce_soft(d, soft_mask(d, params))
    hard = hard_select(d, lam)
    removed = len(d) - len(hard)
    target = PersistenceDiagram(1, np.vstack([hard.pairs, np.zeros((removed, 2))]))
    assert bottleneck(soft, target) <= 1e-6


@given(st.integers(0, 10_000))
def test_gradient_check(seed):
    rng = np.random.default_rng(seed)
    d = random_diagram(rng, int(rng.integers(3, 10)))
    params = SelectionParams(float(rng.uniform(0, d.persistence.max())),
                             math.exp(rng.uniform(0.0, 3.5)))
    h = 1e-6
    sig = matching_signature(d, params)
    for dl, de in ((h, 0), (-h, 0), (0, h), (0, -h)):
        if matching_signature(d, SelectionParams(params.lam + dl, params.eta * math.exp(de))) != sig:
            return
    ga = topo_loss_gradient(d, params, method="analytic")
    gf = topo_loss_gradient(d, params, method="fd", step=h)
    # absolute floor covers central-difference cancellation (~eps * loss / h) on saturated masks
    assert np.linalg.norm(ga - gf) <= 1e-4 * np.linalg.norm(ga) + 1e-9


# -- optimisation ------------------------------------------------------------

def test_signal_noise_selection():
    res = optimize_selection(signal_noise_diagram(0), config=SelectionConfig(seed=0))
    assert np.sort(res.hard_selected.persistence) == pytest.approx([1.8, 2.0, 2.2])
    assert 0.1 < res.params.lam < 1.8
    assert res.loss.total <= res.initial_loss
    assert len(res.mask) == 53
    assert np.array_equal(res.mask, soft_mask(signal_noise_diagram(0), res.params))


def test_analytic_gradient_option_also_selects_signal():
    cfg = SelectionConfig(seed=1, gradient="analytic")
    res = optimize_selection(signal_noise_diagram(1), config=cfg)
    assert len(res.hard_selected) == 3


def test_optimize_is_deterministic():
    d = signal_noise_diagram(4)
    cfg = SelectionConfig(seed=7, steps=40)
    a, b = optimize_selection(d, config=cfg), optimize_selection(d, config=cfg)
    assert a.params == b.params
    assert a.loss == b.loss


def test_equal_persistence_is_all_or_nothing():
    d = pd(*[(0.1 * i, 0.1 * i + 1.0) for i in range(6)])
    res = optimize_selection(d, config=SelectionConfig(seed=0, steps=40))
    assert len(res.hard_selected) in (0, 6)


def test_descent_from_given_init():
    d = signal_noise_diagram(9)
    init = SelectionParams(0.05, 3.0)
    res = optimize_selection(d, config=SelectionConfig(seed=0, steps=30, restarts=1, init=init))
    assert res.initial_loss == pytest.approx(topo_loss(d, init).total)
    assert res.loss.total <= res.initial_loss
    assert res.params.lam >= 0


def test_optimize_rejects_bad_input():
    with pytest.raises(ValueError):
        optimize_selection(pd())
    with pytest.raises(ValueError):
        optimize_selection(pd((0, 1)), config=SelectionConfig(steps=0))


# -- statistical bands -------------------------------------------------------

def random_circle(n, seed, noise=0.0):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, 2 * np.pi, n)
    pts = np.column_stack([np.cos(theta), np.sin(theta), np.zeros(n)])
    return PointCloud(pts + rng.normal(scale=noise, size=pts.shape) if noise else pts)


def test_method1_alpha_monotone_and_deterministic():
    pc = generate_shape("sphere", 120, noise=0.02, seed=1)
    loose = method1_subsampling(pc, alpha=0.5, seed=3).delta
    strict = method1_subsampling(pc, alpha=0.001, seed=3).delta
    assert strict >= loose > 0
    assert method1_subsampling(pc, alpha=0.5, seed=3).delta == loose


def test_method1_dense_below_sparse():
    dense = method1_subsampling(generate_shape("circle", 500), seed=0).delta
    sparse = method1_subsampling(generate_shape("circle", 30), seed=0).delta
    assert dense < sparse


def test_method1_degenerate_and_errors():
    same = PointCloud(np.ones((20, 3)))
    assert method1_subsampling(same).delta == 0.0
    pc = generate_shape("circle", 40)
    with pytest.raises(ValueError):
        method1_subsampling(pc, n_subsamples=10)
    with pytest.raises(ValueError):
        method1_subsampling(pc, subsample_size=40)
    with pytest.raises(ValueError):
        method1_subsampling(pc, alpha=1.5)


def test_method2_decreases_with_n():
    deltas = [method2_concentration(random_circle(n, seed=n)).delta for n in (50, 100, 200)]
    assert deltas[0] > deltas[1] > deltas[2] > 0


def test_method2_deterministic_and_errors():
    pc = generate_shape("torus", 80, noise=0.01, seed=2)
    assert method2_concentration(pc).delta == method2_concentration(pc).delta
    with pytest.raises(ValueError):
        method2_concentration(generate_shape("circle", 8))
    with pytest.raises(ValueError):
        method2_concentration(PointCloud(np.ones((20, 3))))


@pytest.mark.parametrize("kind", ["circle", "torus", "sphere", "eyeglass"])
def test_method3_one_shell_is_method2_and_never_larger(kind):
    pc = generate_shape(kind, 120, noise=0.02, seed=5)
    m2 = method2_concentration(pc).delta
    assert method3_shells(pc, n_shells=1).delta == pytest.approx(m2, abs=1e-9)
    assert method3_shells(pc).delta <= m2


def test_shell_partition_merges_empty_shells(caplog):
    radii = np.array([0.0, 0.01, 0.02, 1.0])
    with caplog.at_level(logging.WARNING):
        shells = shell_partition(radii, 5)
    assert sorted(np.concatenate(shells).tolist()) == [0, 1, 2, 3]
    assert all(len(s) for s in shells)
    assert "empty" in caplog.text


def test_eyeglass_band_keeps_two_loops():
    pc = generate_shape("eyeglass", 200)
    h1 = compute_pd(pc, 1)[1]
    for method in (method2_concentration, method3_shells):
        assert len(delta_band_select(h1, method(pc))) == 2
