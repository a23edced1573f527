import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ultracantor.embedding import check_embeddable
from ultracantor.errors import AmbiguousDecompositionError, SAdicError, WindowTooShortError
from ultracantor.sadic import (
    SAdicSystem,
    Substitution,
    build_bratteli,
    check_primitive,
    check_proper,
    compose,
    constant_system,
    desubstitute,
    diagram_to_tree,
    durand_ratio,
    path_to_word,
    random_path,
    sandwich_check,
    weight_decay,
    word_to_path,
)
from ultracantor.words import Window

SHIFT0 = {"0": "0", "1": "10"}
FIB = {"0": "01", "1": "0"}
ALTERNATING = {
    "substitutions": [
        {"name": "a", "map": {"0": "001", "1": "011"}},
        {"name": "b", "map": {"0": "01", "1": "0011"}},
    ],
    "schedule": {"type": "periodic", "period": ["a", "b"]},
    "s0": 2,
}


@pytest.fixture
def alternating():
    return SAdicSystem.from_dict(ALTERNATING)


def test_compose_examples():
    assert compose(constant_system(SHIFT0), 0, 2)["1"] == "100"
    assert compose(constant_system(FIB), 0, 2)["0"] == "010"
    sys = constant_system(FIB)
    assert compose(sys, 3, 4) == sys.sigma(3)


def test_composition_is_associative(alternating):
    for n, m, k in [(0, 1, 3), (0, 2, 5), (1, 3, 4)]:
        assert compose(alternating, n, m).after(compose(alternating, m, k)) == compose(alternating, n, k)


def test_compose_range():
    with pytest.raises(SAdicError):
        compose(constant_system(FIB), 2, 2)
    finite = SAdicSystem({"f": Substitution(FIB, "f")}, ("f", "f"), periodic=False)
    with pytest.raises(SAdicError, match="truncation"):
        compose(finite, 0, 3)


def test_properness():
    assert check_proper(constant_system(FIB)) == (False, None, None)
    assert check_proper(constant_system({"0": "010", "1": "0110"})) == (True, "0", "0")


def test_primitivity():
    assert check_primitive(constant_system(FIB), 2)
    assert not check_primitive(constant_system({"0": "01", "1": "11"}), 3)
    # letter 2 is never produced from 0 or 1
    assert not check_primitive(constant_system({"0": "01", "1": "10", "2": "012"}), 2)


def test_edge_labels_are_positions():
    single = SAdicSystem({"s": Substitution({"b": "labcar"}, "s")}, ("s",), periodic=False)
    edges = build_bratteli(single, 2).edges[0]
    assert sorted(l for a, l, b in edges if a == "a" and b == "b") == [1, 4]
    sh = build_bratteli(constant_system(SHIFT0), 2).edges[0]
    assert sorted(e for e in sh if e[2] == "1") == [("0", 1, "1"), ("1", 0, "1")]
    assert [e for e in sh if e[2] == "0"] == [("0", 0, "0")]


def test_weights_decay_within_primitivity_window(alternating):
    rows = weight_decay(alternating, 2, 6)
    assert all(r["ok"] for r in rows)
    w = alternating.weights(14)
    assert all(a >= b for a, b in zip(w, w[1:]))


def test_edge_count_identity(alternating):
    d = build_bratteli(alternating, 7)
    for n in range(6):
        assert len(d.edges[n]) == sum(len(v) for v in alternating.sigma(n).images.values())


def test_tree_branching_bounded_by_edges_per_level():
    sys = constant_system(FIB)
    E = len(sys.sigma(0).edges())
    t = diagram_to_tree(build_bratteli(sys, 10), reduced=False)
    assert t.n_children.max() <= E


def test_depth_one_diagram_is_a_star():
    t = diagram_to_tree(build_bratteli(constant_system(FIB), 1))
    assert len(t) == 3 and t.n_children[t.root] == 2


def test_fibonacci_tree_is_embeddable():
    t = diagram_to_tree(build_bratteli(constant_system(FIB), 22))
    v = check_embeddable(t)
    assert v.satisfied and v.fit.theta < 1


def test_path_words_nest(alternating):
    rng = np.random.default_rng(4)
    for _ in range(20):
        path = random_path(alternating, 6, rng)
        for n in range(1, 6):
            small, big = path_to_word(alternating, path, n), path_to_word(alternating, path, n + 1)
            lo = big.origin - small.origin
            assert lo >= 0 and big.letters[lo : lo + len(small)] == small.letters


def test_length_one_path_shape(alternating):
    path = random_path(alternating, 3, np.random.default_rng(0))
    w = path_to_word(alternating, path, 1)
    _, l, r = check_proper(alternating)
    assert w.letters == r + alternating.sigma(0)[path[0][2]] + l
    assert w.letters[w.origin] == path[0][0]


@given(st.integers(0, 2**32 - 1))
def test_word_to_path_inverts_path_to_word(seed):
    sys = SAdicSystem.from_dict(ALTERNATING)
    path = random_path(sys, 7, np.random.default_rng(seed))
    assert word_to_path(sys, path_to_word(sys, path, 7), 7) == path


def test_improper_system_has_no_words():
    sys = constant_system(FIB)
    with pytest.raises(SAdicError, match="proper"):
        path_to_word(sys, random_path(sys, 3, np.random.default_rng(0)), 2)


def test_short_and_ambiguous_words(alternating):
    with pytest.raises(WindowTooShortError):
        word_to_path(alternating, Window("0101", 1), 3)
    with pytest.raises(AmbiguousDecompositionError, match="unique decomposition"):
        desubstitute(Window("0" * 20, 7), Substitution({"0": "00"}))


def test_config_round_trip(tmp_path, alternating):
    p = tmp_path / "sys.json"
    p.write_text(json.dumps(alternating.to_dict()))
    again = SAdicSystem.load(p)
    assert again == alternating


def test_bad_configs():
    with pytest.raises(SAdicError, match="unknown substitution"):
        SAdicSystem.from_dict({"substitutions": [], "schedule": {"type": "periodic", "period": ["x"]}})
    with pytest.raises(SAdicError, match="produces letters"):
        SAdicSystem.from_dict(
            {
                "substitutions": [{"name": "a", "map": {"0": "01", "1": "0"}}, {"name": "b", "map": {"x": "0"}}],
                "schedule": {"type": "periodic", "period": ["a", "b"]},
            }
        )
    with pytest.raises(SAdicError):
        Substitution({"0": ""})


def test_durand_ratio_does_not_grow():
    rep = durand_ratio(constant_system(FIB), 2, 12)
    ks = list(rep["by_window"].values())
    assert max(ks[len(ks) // 2 :]) <= max(ks[: len(ks) // 2]) + 1e-9


def test_distance_sandwich(alternating):
    rep = sandwich_check(alternating, 8, 200, seed=0)
    assert rep.holds and rep.pairs > 150
