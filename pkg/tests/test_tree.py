import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ultracantor.errors import DegenerateError, InsufficientDepthError, InvalidTreeError
from ultracantor.tree import (
    WeightedTree,
    build_by_levels,
    d_kappa,
    fit_decay,
    from_children,
    is_reduced,
    lca,
    polynomial_tree,
    random_tree,
    reduce,
    regular_tree,
    telescope,
    telescoped_distance,
    validate,
)


def test_geometric_binary_tree_is_valid(binary):
    assert validate(binary) == []


def test_heavier_child_is_reported():
    t = from_children([[1, 2], [], []], [1.0, 1.5, 0.5], max_depth=1)
    problems = validate(t)
    assert len(problems) == 1
    assert problems[0].startswith("monotonicity") and "vertex 1" in problems[0]


def test_second_root_is_reported():
    t = WeightedTree([0, 1, 2, 3], [None, 0, None, 2], [[1], [], [3], []], [1, 0.5, 1, 0.5], root=0)
    problems = validate(t)
    assert any(p.startswith("root") for p in problems)
    assert any(p.startswith("reachability") for p in problems)


def test_meet_and_distance(binary):
    x = binary.point([0] * 8)
    assert lca(binary, x, x) == binary.ids[x.end]
    assert d_kappa(binary, x, x) == 0.0
    y = binary.point([1] + [0] * 7)
    assert lca(binary, x, y) == binary.ids[binary.root]
    assert d_kappa(binary, x, y) == 1.0
    a = binary.point([0, 1, 0] + [0] * 5)
    b = binary.point([0, 1, 1] + [0] * 5)
    assert lca(binary, a, b) == binary.ids[binary.point([0, 1] + [0] * 6).vertices[2]]
    assert d_kappa(binary, a, b) == 0.25


def test_points_from_another_tree_are_rejected(binary):
    other = regular_tree(2, 8, 0.5)
    with pytest.raises(InvalidTreeError):
        d_kappa(binary, binary.point([0] * 8), other.point([0] * 8))


@given(st.integers(0, 2**32 - 1))
def test_ultrametric_inequality(seed):
    rng = np.random.default_rng(seed)
    t = random_tree(rng, 6)
    x, y, z = (t.sample_point(rng) for _ in range(3))
    assert d_kappa(t, x, z) <= max(d_kappa(t, x, y), d_kappa(t, y, z))
    assert d_kappa(t, x, y) == d_kappa(t, y, x)


def test_reduce_keeps_reduced_tree(binary):
    assert binary.same_shape(reduce(binary))


def test_reduce_contracts_unary_chain():
    # root -> a -> b -> c -> {d, e}: the chain of three edges becomes one
    children = [[1], [2], [3], [4, 5], [], []]
    weights = [1.0, 0.9, 0.8, 0.7, 0.3, 0.2]
    red = reduce(from_children(children, weights, max_depth=4))
    assert len(red) == 3
    assert red.ids[red.root] == 3
    assert [red.ids[c] for c in red.children[red.root]] == [4, 5]
    assert red.weights[red.root] == 0.7


def test_reduce_single_path_is_degenerate():
    with pytest.raises(DegenerateError, match="single point"):
        reduce(from_children([[1], [2], []], [1.0, 0.5, 0.25], max_depth=2))


def test_reduce_preserves_distances(rng):
    t = build_by_levels(lambda p: 1 if len(p) % 2 else 2, lambda p, w: 0.8 ** len(p), 6)
    red = reduce(t)
    assert is_reduced(red)
    for _ in range(200):
        x, y = t.sample_point(rng), t.sample_point(rng)
        rx = red.point_to(red.index(t.ids[x.end]))
        ry = red.point_to(red.index(t.ids[y.end]))
        assert d_kappa(t, x, y) == d_kappa(red, rx, ry)


@given(st.integers(0, 2**32 - 1))
def test_reduce_is_idempotent(seed):
    t = random_tree(np.random.default_rng(seed), 5, max_branching=3, min_branching=1)
    try:
        once = reduce(t)
    except DegenerateError:
        return
    assert once.same_shape(reduce(once))


def test_fit_on_geometric_tree():
    fit = fit_decay(regular_tree(2, 10, 0.5))
    assert (fit.M, fit.theta) == (2, 0.5)
    assert fit.c == pytest.approx(1.0, abs=1e-12)


def test_fit_on_polynomial_tree_needs_growing_constant():
    fit = fit_decay(polynomial_tree(2, 12))
    rows = {r.depth: r for r in fit.depth_table}
    assert fit.theta > 0.8
    # at the shallow theta, the constant demanded by the full tree keeps growing
    from ultracantor.tree import c_for_theta

    theta6 = rows[6].theta
    needs = [c_for_theta(fit_decay(polynomial_tree(2, D)).gap_ratios, theta6) for D in (6, 9, 12)]
    assert needs[0] < needs[1] < needs[2]


@given(st.integers(0, 2**32 - 1))
def test_fit_certificate_holds_on_every_pair(seed):
    t = random_tree(np.random.default_rng(seed), 7)
    assert fit_decay(t).holds(t)


def test_fit_needs_a_pair():
    with pytest.raises(InsufficientDepthError):
        fit_decay(from_children([[]], [1.0], max_depth=0))


def test_telescope_quarter_gives_four_ary_tree():
    t = regular_tree(2, 8, 0.5)
    coarse = telescope(t, 0.25)
    assert set(coarse.n_children[coarse.n_children > 0].tolist()) == {4}
    for level, verts in enumerate(coarse.levels):
        assert np.all(coarse.weights[verts] == 4.0**-level)


def test_telescope_half_is_identity():
    t = regular_tree(2, 6, 0.5)
    assert telescope(t, 0.5).same_shape(t)


def test_telescope_rejects_bad_delta_and_shallow_tree():
    t = regular_tree(2, 2, 0.5)
    for d in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            telescope(t, d)
    with pytest.raises(InsufficientDepthError):
        telescope(t, 0.01)


@pytest.mark.parametrize("delta", [0.5, 0.3, 0.1])
def test_telescope_sandwich(delta, rng):
    t = random_tree(rng, 10)
    coarse = telescope(t, delta)
    for _ in range(1000):
        x, y = t.sample_point(rng), t.sample_point(rng)
        d = d_kappa(t, x, y)
        if d == 0:
            continue
        ratio = d / telescoped_distance(t, coarse, x, y)
        assert delta <= ratio <= 1.0


def test_json_round_trip_is_byte_stable(rng):
    t = random_tree(rng, 5, stop_prob=0.2)
    text = t.dumps()
    again = WeightedTree.loads(text)
    assert again.dumps() == text
    assert again.same_shape(t)


def test_malformed_json():
    with pytest.raises(InvalidTreeError):
        WeightedTree.loads("{not json")
    with pytest.raises(InvalidTreeError):
        WeightedTree.loads('{"root": 0}')


def test_boundary_point_must_reach_a_leaf(binary):
    with pytest.raises(InvalidTreeError):
        binary.point([0, 0])
    with pytest.raises(InvalidTreeError):
        binary.point([2] + [0] * 7)


def test_sampled_points_have_full_length(binary, rng):
    p = binary.sample_point(rng)
    assert len(p) == 8 and math.isclose(binary.weights[p.end], 2.0**-8)
