import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import mixed_tree
from ultracantor.errors import InsufficientDepthError, InvalidAntichainError
from ultracantor.hausdorff import (
    FullSubtree,
    count_full_cuts,
    default_ladder,
    dimension_upper_bound,
    estimate_dimension,
    h_s_delta,
    h_s_delta_bruteforce,
    h_s_delta_many,
    kraft_sum,
    kraft_weight,
    random_full_cut,
)
from ultracantor.tree import build_by_levels, random_tree, reduce, regular_tree


def test_kraft_weights_of_regular_trees():
    for b in (2, 3):
        t = kraft_weight(regular_tree(b, 5, 0.7))
        assert np.allclose(t.weights, float(b) ** -t.depth)


def test_kraft_weight_on_mixed_tree():
    k = kraft_weight(mixed_tree())
    leftmost = k.point([0, 0]).end
    assert k.weights[leftmost] == pytest.approx(1 / 6)
    assert k.weights[k.root] == 1.0


def test_uniform_and_lopsided_cuts():
    t = regular_tree(2, 3, 0.5)
    depth2 = FullSubtree(tuple(t.ids[v] for v in t.levels[2]))
    assert kraft_sum(t, depth2) == 1.0
    left, right = t.children[t.root]
    lopsided = FullSubtree((t.ids[right], *(t.ids[c] for c in t.children[left])))
    assert kraft_sum(t, lopsided) == 1.0


def test_invalid_antichains():
    t = regular_tree(2, 3, 0.5)
    left, right = t.children[t.root]
    with pytest.raises(InvalidAntichainError, match="ancestor"):
        kraft_sum(t, FullSubtree((t.ids[left], t.ids[right], t.ids[t.children[left][0]])))
    with pytest.raises(InvalidAntichainError, match="meets no member"):
        kraft_sum(t, FullSubtree((t.ids[left],)))
    with pytest.raises(InvalidAntichainError):
        kraft_sum(t, FullSubtree((999,)))


@given(st.integers(0, 2**32 - 1))
def test_random_cuts_satisfy_kraft(seed):
    rng = np.random.default_rng(seed)
    t = reduce(random_tree(rng, 6, max_branching=4))
    assert abs(kraft_sum(t, random_full_cut(t, rng)) - 1) < 1e-12


@given(st.integers(0, 2**32 - 1), st.floats(0, 3))
def test_dp_matches_exhaustive_search(seed, s):
    rng = np.random.default_rng(seed)
    t = random_tree(rng, 4, max_branching=3)
    leaf_max = float(t.weights[t.n_children == 0].max())
    delta = leaf_max * 1.5
    if count_full_cuts(t, delta) > 20000:
        return
    assert h_s_delta(t, s, delta) == pytest.approx(h_s_delta_bruteforce(t, s, delta), rel=1e-12)


def test_linear_exponent_gives_one():
    t = regular_tree(2, 6, 0.5)
    assert h_s_delta(t, 1.0, 2.0**-3) == pytest.approx(1.0)
    assert h_s_delta_bruteforce(regular_tree(2, 5, 0.5), 1.0, 2.0**-3) == pytest.approx(1.0)


@pytest.mark.parametrize("D,k", [(6, 3), (8, 3), (4, 3)])
def test_quadratic_exponent_uses_deepest_cut(D, k):
    # the finest available cut wins for s above the dimension, so the value
    # depends on the truncation depth D rather than on delta
    t = regular_tree(2, D, 0.5)
    h = h_s_delta(t, 2.0, 2.0**-k)
    assert h == pytest.approx(2.0**-D)
    assert (h == pytest.approx(2.0 ** -(k + 1))) == (D == k + 1)


def test_zero_exponent_counts_coarsest_cut():
    t = regular_tree(2, 7, 0.5)
    assert h_s_delta(t, 0.0, 2.0**-3) == 16
    assert h_s_delta(t, 0.0, 0.3) == 4


def test_shallow_tree_and_bad_arguments():
    t = regular_tree(2, 3, 0.5)
    with pytest.raises(InsufficientDepthError, match="deeper"):
        h_s_delta(t, 1.0, 0.1)
    with pytest.raises(ValueError):
        h_s_delta(t, -1.0, 0.5)
    with pytest.raises(ValueError):
        h_s_delta(t, 1.0, 0.0)


@given(st.integers(0, 2**32 - 1), st.floats(0, 2.5))
def test_monotone_in_delta_and_s(seed, s):
    t = random_tree(np.random.default_rng(seed), 8)
    leaf_max = float(t.weights[t.n_children == 0].max())
    deltas = np.geomspace(0.9, leaf_max * 1.01, 6)
    h = h_s_delta_many(t, s, deltas)
    assert np.all(np.diff(h) >= -1e-12 * h.max())
    assert np.all(h_s_delta_many(t, s + 0.3, deltas) <= h + 1e-12)


@pytest.mark.parametrize("M,theta,bound", [(2, 0.5, 1.0), (3, 0.5, math.log2(3)), (2, 0.25, 0.5)])
def test_upper_bound_examples(M, theta, bound):
    assert dimension_upper_bound((M, theta)) == pytest.approx(bound)


def test_upper_bound_without_decay_warns():
    with pytest.warns(UserWarning):
        assert dimension_upper_bound((2, 1.0)) == math.inf


def test_ladder_refuses_shallow_tree():
    with pytest.raises(InsufficientDepthError):
        default_ladder(regular_tree(2, 6, 0.5))


@pytest.mark.parametrize(
    "tree,expected",
    [
        (lambda: regular_tree(2, 16, 0.5), 1.0),
        (lambda: kraft_weight(regular_tree(3, 10, 0.5)), 1.0),
        (lambda: regular_tree(3, 11, 0.5), math.log2(3)),
    ],
    ids=["binary", "kraft-ternary", "ternary"],
)
def test_dimension_estimates(tree, expected):
    rep = estimate_dimension(tree())
    assert rep.s_estimate == pytest.approx(expected, abs=0.05)
    assert rep.s_estimate <= rep.upper_bound + 0.05
    assert len(rep.deltas) >= 4 and set(rep.table) == set(rep.slopes)


def test_kraft_dimension_on_irregular_tree():
    t = build_by_levels(lambda p: 2 + (sum(p) % 2), lambda p, w: 0.6 ** len(p), 11)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = estimate_dimension(kraft_weight(t))
    assert rep.s_estimate == pytest.approx(1.0, abs=0.05)


def test_report_csv_shape():
    rep = estimate_dimension(regular_tree(2, 14, 0.5))
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("s,") and len(lines) == len(rep.table) + 1
    assert all(len(line.split(",")) == len(rep.deltas) + 1 for line in lines)
