import hashlib
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ultracantor.errors import DistributionError
from ultracantor.gw import (
    GWConfig,
    OffspringDist,
    WeightDist,
    martingale_trace,
    max_offspring,
    mc_dimension,
    mc_measure,
    mellin_h,
    parse_offspring,
    parse_weights,
    pgf_iterate,
    sample_gw,
    sample_tree,
    simulate_w,
    solve_s_m,
    solve_t_m,
    step_variance,
    suggest_depth,
    variance_w,
    variance_y,
    variance_y_limit,
    variance_y_stated,
)
from ultracantor.hausdorff import kraft_sum, random_full_cut
from ultracantor.tree import regular_tree

D2, D3, U23 = OffspringDist.dirac(2), OffspringDist.dirac(3), OffspringDist.uniform(2, 3)
HALF, UNIF = WeightDist.dirac(0.5), WeightDist.uniform(0.0)


def test_parsing():
    assert parse_offspring("dirac:3") == D3
    assert parse_offspring("uniform:2,3") == U23
    assert parse_offspring("table:2=0.25,4=0.75").mean == 3.5
    assert parse_weights("dirac:0.5") == HALF
    assert parse_weights("uniform:0,1") == UNIF
    for bad in ("dirac:1", "uniform:3", "poisson:2", "table:2=0.5"):
        with pytest.raises(DistributionError):
            parse_offspring(bad)
    for bad in ("dirac:1.5", "dirac:1", "uniform:0,2", "beta:1,1"):
        with pytest.raises(DistributionError):
            parse_weights(bad)


def test_geometric_tail_is_truncated():
    p = OffspringDist.geometric(0.5)
    assert p.truncation_error < 1e-8
    assert p.mean == pytest.approx(3.0, abs=1e-6)


def test_deterministic_cases():
    t = sample_tree(GWConfig(D2, HALF, depth=6))
    assert t.same_shape(regular_tree(2, 6, 0.5))
    assert np.array_equal(t.weights, regular_tree(2, 6, 0.5).weights)
    assert sample_gw(GWConfig(D3, UNIF, depth=5)).sizes() == [3**n for n in range(6)]


def test_same_seed_same_tree():
    cfg = GWConfig(U23, UNIF, depth=5, seed=7)
    t = sample_tree(cfg)
    # regression fingerprint generated by this implementation
    assert sample_gw(cfg).sizes() == [1, 2, 6, 16, 40, 98]
    assert hashlib.sha256(t.dumps().encode()).hexdigest() == (
        "f404dadeebcaaad9f2c8ad6c9e0b6deb1716d09157bf450acdfe57bbe870bfb3"
    )
    assert sample_tree(GWConfig(U23, UNIF, depth=5, seed=8)).dumps() != t.dumps()


def test_vertex_cap():
    with pytest.raises(DistributionError, match="tree too large"):
        sample_gw(GWConfig(D3, HALF, depth=12, cap=10_000))
    assert suggest_depth(D3, 10**7) == 14


def test_mellin_transform():
    assert mellin_h(HALF, 2) == 0.25
    assert mellin_h(UNIF, 1) == pytest.approx(0.5)
    assert mellin_h(UNIF, 0) == 1.0
    assert mellin_h(WeightDist.uniform(0.5), 1) == pytest.approx(0.75)


@given(st.floats(0, 0.9), st.floats(0, 10))
def test_cauchy_schwarz(a, s):
    rho = WeightDist.uniform(a)
    assert rho.h(s) ** 2 <= rho.h(2 * s) * (1 + 1e-12)


def test_h_is_decreasing_and_log_convex():
    for rho in (UNIF, WeightDist.uniform(0.3), WeightDist("table", (0.2, 0.7), (0.4, 0.6))):
        grid = np.linspace(0, 6, 61)
        logh = np.log([rho.h(s) for s in grid])
        assert np.all(np.diff(logh) < 0)
        assert np.all(logh[:-2] + logh[2:] - 2 * logh[1:-1] >= -1e-12)


@pytest.mark.parametrize(
    "p,rho,s", [(D3, HALF, math.log2(3)), (D3, UNIF, 2.0), (D2, HALF, 1.0), (U23, HALF, math.log2(2.5))]
)
def test_dimension_equation(p, rho, s):
    assert solve_s_m(p, rho) == pytest.approx(s, abs=1e-9)


def test_dimension_equation_hypothesis():
    with pytest.raises(DistributionError, match="hypothesis violated"):
        solve_s_m(D2, WeightDist("table", (1.0, 0.5), (0.6, 0.4)))


def test_variance_threshold():
    t = solve_t_m(D3, UNIF)
    assert t.value == pytest.approx(2 + math.sqrt(6), abs=1e-9)
    assert solve_s_m(D3, UNIF) < t.value
    none = solve_t_m(D3, HALF)
    assert none.value is None and "h(2s) = h(s)^2" in none.reason


def test_variance_at_threshold():
    t = solve_t_m(D3, UNIF).value
    assert step_variance(D3, UNIF, t) == pytest.approx(2 / 3, abs=1e-9)
    assert variance_y_limit(D3, UNIF, t) == math.inf


def test_product_form_agrees_only_after_one_generation():
    s = solve_s_m(D3, UNIF)
    assert variance_y_stated(D3, UNIF, s, 1) == pytest.approx(variance_y(D3, UNIF, s, 1))
    for n in (2, 4, 8):
        assert variance_y_stated(D3, UNIF, s, n) < variance_y(D3, UNIF, s, n)


def test_variance_grows_with_depth_below_threshold():
    s = solve_s_m(D3, UNIF)
    v = [variance_y(D3, UNIF, s, n) for n in range(1, 12)]
    assert all(a < b for a, b in zip(v, v[1:]))
    assert v[-1] < variance_y_limit(D3, UNIF, s)


def test_bookkeeping_and_trivial_martingale():
    tr = martingale_trace(GWConfig(D3, HALF, depth=5, trials=3), [1.0])
    assert np.all(tr.W == 1.0)
    assert np.allclose(tr.Y(1.0), 1.0)


def test_martingales_have_mean_one():
    cfg = GWConfig(U23, UNIF, depth=5, trials=2000, seed=11)
    s = solve_s_m(U23, UNIF)
    tr = martingale_trace(cfg, [s, 1.0])
    for series in (tr.W, tr.Y(s), tr.Y(1.0)):
        mean = series.mean(axis=0)
        se = series.std(axis=0, ddof=1) / math.sqrt(cfg.trials)
        assert np.all(np.abs(mean - 1) <= 3 * se + 1e-12)


def test_w_variance_matches_closed_form():
    cfg = GWConfig(U23, HALF, depth=8, trials=4000, seed=5)
    w = simulate_w(cfg)
    var = w.var(ddof=1)
    se = math.sqrt(((w - w.mean()) ** 4).mean() - var**2) / math.sqrt(len(w))
    assert abs(var - variance_w(U23, 8)) <= 3 * se
    assert variance_w(U23) == pytest.approx(1 / 15)
    assert variance_w(D3) == 0.0


@pytest.mark.parametrize("n", [1, 3, 5])
def test_y_variance_matches_exact_form(n):
    s = solve_s_m(D3, UNIF)
    tr = martingale_trace(GWConfig(D3, UNIF, depth=n, trials=4000, seed=2), [s])
    y = tr.Y(s)[:, n]
    var = y.var(ddof=1)
    se = math.sqrt(((y - y.mean()) ** 4).mean() - var**2) / math.sqrt(len(y))
    assert abs(var - variance_y(D3, UNIF, s, n)) <= 3 * se


def test_pgf_iteration():
    assert pgf_iterate(D3, 0.5, 2) == pytest.approx(0.5**9)
    assert pgf_iterate(U23, 1.0, 5) == pytest.approx(1.0)
    # derivative at 1 is m^n
    h = 1e-6
    assert (pgf_iterate(U23, 1.0, 3) - pgf_iterate(U23, 1 - h, 3)) / h == pytest.approx(2.5**3, rel=1e-4)


def test_kraft_identity_on_sampled_trees():
    rng = np.random.default_rng(0)
    for seed in range(5):
        t = sample_tree(GWConfig(U23, UNIF, depth=5, seed=seed))
        for _ in range(10):
            assert abs(kraft_sum(t, random_full_cut(t, rng)) - 1) < 1e-12


def test_measure_is_additive_and_exact_for_binary():
    m = mc_measure(GWConfig(U23, UNIF, depth=6, trials=5), generation=2)
    assert m.additive
    b = mc_measure(GWConfig(D2, HALF, depth=6), generation=3)
    assert b.s_m == pytest.approx(1.0)
    assert b.masses[0] == pytest.approx([2.0**-3] * 8, abs=1e-9)


def test_measure_mean_tracks_cylinder_weight():
    # given the first generation, the mass below u has expectation kappa(u)**s_m
    cfg = GWConfig(U23, UNIF, depth=6, trials=1000, seed=3)
    m = mc_measure(cfg, generation=1)
    diff = np.array([mass[0] - ks[0] for mass, ks in zip(m.masses, m.kappa_s)])
    assert abs(diff.mean()) <= 3 * diff.std(ddof=1) / math.sqrt(cfg.trials)
    total = np.array(m.total)
    assert abs(total.mean() - 1) <= 3 * total.std(ddof=1) / math.sqrt(cfg.trials)


def test_max_offspring_grows_with_support():
    means = [np.mean(max_offspring(GWConfig(OffspringDist.uniform(2, k), HALF, depth=4, trials=20))) for k in (3, 6, 12)]
    assert means[0] <= means[1] <= means[2]


@pytest.mark.parametrize("p,expected", [(D2, 1.0), (D3, math.log2(3))])
def test_mc_dimension_deterministic_cases(p, expected):
    depth = 16 if p is D2 else 11
    res = mc_dimension(GWConfig(p, HALF, depth=depth, trials=2))
    assert res.mean == pytest.approx(expected, abs=0.1)
    assert res.s_m == pytest.approx(expected)
