import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ultracantor.contfrac import QuadraticIrrational
from ultracantor.embedding import (
    EmbedParams,
    FiniteMetric,
    check_embeddable,
    choose_L,
    depth_stability,
    distortion_report,
    embed_point,
    schoenberg_test,
)
from ultracantor.errors import InsufficientDepthError, InvalidMetricError, NotReducedError
from ultracantor.hausdorff import kraft_weight
from ultracantor.sturmian import tree_of_words
from ultracantor.tree import from_children, regular_tree


@pytest.mark.parametrize("M,c,theta,L", [(2, 1, 0.5, 2), (2, 1, 0.9, 11), (3, 1, 1 / 3, 2)])
def test_choose_L_examples(M, c, theta, L):
    assert choose_L(M, c, theta) == L


@given(st.integers(2, 6), st.floats(1, 5), st.floats(0.05, 0.95))
def test_choose_L_is_minimal_and_monotone(M, c, theta):
    L = choose_L(M, c, theta)
    target = 1 / (M * c + 1)
    assert theta**L < target
    assert L == 1 or theta ** (L - 1) >= target
    assert choose_L(M, c, min(0.99, theta + 0.02)) >= L


def test_choose_L_rejects_no_decay():
    with pytest.raises(ValueError):
        choose_L(2, 1, 1.0)


def test_geometric_binary_is_embeddable():
    v = check_embeddable(regular_tree(2, 10, 0.5))
    assert v.satisfied and v.witness_pairs == ()
    assert (v.fit.M, v.fit.theta, v.L) == (2, 0.5, 2)
    assert v.fit.c == pytest.approx(1.0)


def test_kraft_ternary_is_embeddable():
    v = check_embeddable(kraft_weight(regular_tree(3, 7, 0.9)))
    assert v.satisfied
    assert v.fit.theta == pytest.approx(1 / 3, abs=1e-12)
    assert v.fit.c == pytest.approx(1.0, abs=1e-12)


def test_unreduced_tree_is_refused():
    t = from_children([[1], [2, 3], [], []], [1.0, 0.5, 0.25, 0.25], max_depth=2)
    with pytest.raises(NotReducedError, match="reduce"):
        check_embeddable(t)


def test_large_quotient_yields_witness_pairs():
    # partial quotient 100 after [0; 1, ...]: a long run of one block shape
    alpha = QuadraticIrrational.from_periodic([0, 1, 100], [1])
    v = check_embeddable(tree_of_words(alpha, 120))
    assert not v.satisfied
    assert v.c_growth > 2
    assert v.witness_pairs
    worst = v.witness_pairs[0]
    # weight falls off like 1/gap along the pair, far slower than any theta**gap
    assert worst["gap"] >= 10
    assert worst["ratio"] * worst["gap"] > 1
    assert worst["c_needed"] > 10


def test_depth_stability_on_geometric_family():
    trees = [regular_tree(2, d, 0.5) for d in (6, 8, 10)]
    ds = depth_stability(trees)
    assert ds.stable and ds.theta == 0.5 and ds.growth == pytest.approx(1.0)
    assert ds.depths == (6, 8, 10)


def test_leftmost_point_coordinates():
    t = regular_tree(2, 20, 0.5)
    params = EmbedParams(2, 1.0, 0.5, 2, 20)
    e = embed_point(t, params, t.point([0] * 20))
    assert e.partial[0] <= 4 / 3 <= e.partial[0] + e.tail
    assert e.partial[1] <= 2 / 3 <= e.partial[1] + e.tail
    assert e.tail < 1e-5


def test_identical_points_identical_vectors():
    t = regular_tree(2, 8, 0.5)
    params = EmbedParams(2, 1.0, 0.5, 2, 8)
    x = t.point([1, 0, 1, 1, 0, 0, 1, 0])
    assert np.array_equal(embed_point(t, params, x).partial, embed_point(t, params, x).partial)


def test_root_split_gap():
    t = regular_tree(2, 16, 0.5)
    params = EmbedParams(2, 1.0, 0.5, 2, 16)
    a = embed_point(t, params, t.point([0] * 16)).partial
    b = embed_point(t, params, t.point([1] + [0] * 15)).partial
    assert abs(a[0] - b[0]) >= params.lower - 1e-12


def test_embed_needs_one_block():
    t = regular_tree(2, 2, 0.5)
    with pytest.raises(InsufficientDepthError):
        embed_point(t, EmbedParams(2, 1.0, 0.9, 11, 2), t.point([0, 0]))


def test_box_for_binary():
    p = EmbedParams(2, 1.0, 0.5, 2, 12)
    assert p.lower == pytest.approx(1 / 3)
    assert p.upper == pytest.approx(math.sqrt(2) * 2 / 0.75)
    assert p.sufficient


@pytest.mark.parametrize("tree", [regular_tree(2, 12, 0.5), kraft_weight(regular_tree(3, 8, 0.5))])
def test_distortion_within_box(tree):
    v = check_embeddable(tree)
    rep = distortion_report(tree, v.params(tree, L=2), 2000, seed=3)
    assert rep.contained and rep.coordinate_ok
    assert rep.pairs + rep.skipped == 2000


def test_star_metric_is_not_euclidean():
    d = np.array([[0, 1, 1, 1], [1, 0, 2, 2], [1, 2, 0, 2], [1, 2, 2, 0]], dtype=float)
    res = schoenberg_test(FiniteMetric(tuple("0123"), d))
    assert not res.embeddable
    assert res.min_eigenvalue == pytest.approx(-1.0)
    assert res.witness_value is not None and res.witness_value < 0


def test_two_points_and_triangle():
    two = schoenberg_test(FiniteMetric(("a", "b"), np.array([[0.0, 1.0], [1.0, 0.0]])))
    assert two.embeddable and two.rank == 1
    tri = schoenberg_test(FiniteMetric(tuple("abc"), 1 - np.eye(3)))
    assert tri.embeddable and tri.rank == 2


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_point_clouds_embed_in_their_dimension(seed, k):
    pts = np.random.default_rng(seed).normal(size=(12, k))
    res = schoenberg_test(FiniteMetric.from_points(pts))
    assert res.embeddable and res.rank <= k


def test_base_point_does_not_change_verdict():
    pts = np.random.default_rng(5).normal(size=(8, 3))
    m = FiniteMetric.from_points(pts)
    assert {schoenberg_test(m, base=b).rank for b in range(8)} == {3}


@pytest.mark.parametrize(
    "d",
    [
        [[0, 1], [2, 0]],
        [[1, 1], [1, 0]],
        [[0, 1, 5], [1, 0, 1], [5, 1, 0]],
        [[0, 0], [0, 0]],
    ],
)
def test_bad_metrics(d):
    with pytest.raises(InvalidMetricError):
        FiniteMetric(tuple(str(i) for i in range(len(d))), np.array(d, dtype=float))


def test_metric_from_csv():
    m = FiniteMetric.from_csv("a,b,c\n0,1,1\n1,0,1\n1,1,0\n")
    assert m.labels == ("a", "b", "c")
    with pytest.raises(InvalidMetricError):
        FiniteMetric.from_csv("a,b\n0,x\nx,0\n")
