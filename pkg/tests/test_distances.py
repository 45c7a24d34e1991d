import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_diagram
from persistome.distances import (DIAGONAL, bottleneck, bottleneck_naive, wasserstein,
                                  wasserstein_naive)
from persistome.persistence import PersistenceDiagram


def pd(*pairs):
    return PersistenceDiagram(1, np.array(pairs, dtype=float).reshape(-1, 2))


def test_frozen_values():
    assert bottleneck(pd((0, 2), (0, 10)), pd((0.5, 2), (0, 10))) == pytest.approx(0.5)
    assert bottleneck(pd((1, 3)), pd()) == pytest.approx(1.0)
    assert wasserstein(pd((1, 3)), pd()) == pytest.approx(1.0)
    assert wasserstein(pd((0, 2)), pd((0, 4))) == pytest.approx(2.0)
    # two features, q = 2: sqrt(0.5^2 + 1^2)
    assert wasserstein(pd((0, 2), (0, 5)), pd((0.5, 2), (0, 4)), 2.0) == pytest.approx(math.sqrt(1.25))
    # l2 ground norm: diagonal projection costs persistence / sqrt(2)
    assert wasserstein(pd((0, 2)), pd(), 1.0, "l2") == pytest.approx(math.sqrt(2))


def test_diagonal_matching_preferred_when_cheaper():
    a, b = pd((0, 1)), pd((5, 6))
    value, matching = bottleneck(a, b, return_matching=True)
    assert value == pytest.approx(0.5)
    assert sorted(matching.pairs) == [(DIAGONAL, 0), (0, DIAGONAL)]


def test_empty_diagrams():
    assert bottleneck(pd(), pd()) == 0.0
    assert wasserstein(pd(), pd()) == 0.0


def test_invalid_arguments():
    with pytest.raises(ValueError):
        wasserstein(pd((0, 1)), pd(), 0.5)
    with pytest.raises(ValueError):
        wasserstein(pd((0, 1)), pd(), 1.0, "l3")
    with pytest.raises(ValueError):
        bottleneck(np.array([[0.0, np.inf]]), pd())
    with pytest.raises(ValueError):
        bottleneck_naive(pd(*[(0, 1)] * 5), pd(*[(0, 1)] * 4))


@given(st.integers(0, 100_000), st.integers(0, 4), st.integers(0, 4),
       st.sampled_from([1.0, 2.0, 3.0]), st.sampled_from(["linf", "l2"]))
def test_fast_matches_exhaustive(seed, m, n, q, inner):
    rng = np.random.default_rng(seed)
    a, b = random_diagram(rng, m), random_diagram(rng, n)
    assert bottleneck(a, b) == pytest.approx(bottleneck_naive(a, b), abs=1e-9)
    assert wasserstein(a, b, q, inner) == pytest.approx(wasserstein_naive(a, b, q, inner), abs=1e-9)


@given(st.integers(0, 100_000))
def test_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    x, y, z = (random_diagram(rng, int(rng.integers(0, 10))) for _ in range(3))
    for dist in (bottleneck, wasserstein, lambda u, v: wasserstein(u, v, 2.0, "l2")):
        assert dist(x, x) == pytest.approx(0.0, abs=1e-12)
        assert dist(x, y) == pytest.approx(dist(y, x), abs=1e-9)
        assert dist(x, z) <= dist(x, y) + dist(y, z) + 1e-9


@given(st.integers(0, 100_000))
def test_bottleneck_below_wasserstein(seed):
    rng = np.random.default_rng(seed)
    a, b = random_diagram(rng, 6), random_diagram(rng, 5)
    assert bottleneck(a, b) <= wasserstein(a, b, 1.0) + 1e-12
    assert bottleneck(a, b) <= wasserstein(a, b, 4.0) + 1e-12


@given(st.integers(0, 100_000))
def test_returned_matching_achieves_value(seed):
    rng = np.random.default_rng(seed)
    a, b = random_diagram(rng, 7), random_diagram(rng, 4)
    value, matching = bottleneck(a, b, return_matching=True)
    assert matching.cost == pytest.approx(value, abs=1e-12)
    used_a = [i for i, _ in matching.pairs if i != DIAGONAL]
    used_b = [j for _, j in matching.pairs if j != DIAGONAL]
    assert sorted(used_a) == list(range(7)) and sorted(used_b) == list(range(4))
    w, wm = wasserstein(a, b, 2.0, return_matching=True)
    assert wm.cost == w
