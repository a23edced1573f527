"""Hausdorff measures and dimension of tree boundaries.

``H^s_δ`` is the minimum of ``Σ κ(v)^s`` over full cuts whose pieces all
have weight below ``δ``. On a finite truncation the minimum is found by one
bottom-up pass. Dimension is then located where ``H^s_δ`` stops growing
as ``δ`` goes to zero.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientDepthError, InvalidAntichainError
from .tree import DecayFit, WeightedTree, fit_decay


# -- Kraft weights and full cuts -------------------------------------------


def kraft_weight(tree: WeightedTree) -> WeightedTree:
    """Same tree, reweighted by the product of ``1/M(u)`` over strict ancestors."""
    w = np.ones(len(tree))
    for level in tree.levels[1:]:
        par = tree.parent[level]
        w[level] = w[par] / tree.n_children[par]
    return WeightedTree(
        tree.ids,
        [None if p < 0 else tree.ids[p] for p in tree.parent.tolist()],
        [[tree.ids[c] for c in ch] for ch in tree.children],
        w,
        tree.ids[tree.root],
        tree.max_depth,
        tree.frontier,
    )


@dataclass(frozen=True)
class FullSubtree:
    """A full cut, stored as its boundary antichain (vertex ids)."""

    members: tuple[int, ...]

    def validate(self, tree: WeightedTree) -> None:
        """Raise unless every maximal path meets exactly one member."""
        idx = []
        for m in self.members:
            try:
                idx.append(tree.index(m))
            except KeyError:
                raise InvalidAntichainError(f"vertex {m} is not in the tree") from None
        if len(set(idx)) != len(idx):
            raise InvalidAntichainError("duplicate member")
        owner = np.full(len(tree), -1, dtype=np.int64)
        for i in idx:
            owner[i] = i
        for level in tree.levels[1:]:
            for v in level.tolist():
                above = owner[tree.parent[v]]
                if above >= 0:
                    if owner[v] >= 0 and owner[v] != above:
                        raise InvalidAntichainError(
                            f"{tree.ids[above]} is an ancestor of {tree.ids[owner[v]]}"
                        )
                    owner[v] = above
        for leaf in tree.leaves():
            if owner[leaf] < 0:
                raise InvalidAntichainError(f"the path to leaf {tree.ids[leaf]} meets no member")

    def interior(self, tree: WeightedTree) -> set[int]:
        out: set[int] = set()
        for m in self.members:
            out.update(tree.ids[a] for a in tree.ancestors(tree.index(m))[:-1])
        return out


def kraft_sum(tree: WeightedTree, gamma: FullSubtree) -> float:
    """``Σ 1/M(γ)`` over the members, where ``M(γ)`` multiplies the branchings above."""
    gamma.validate(tree)
    terms = []
    for m in gamma.members:
        path = tree.ancestors(tree.index(m))[:-1]
        terms.append(1.0 / math.prod(int(tree.n_children[a]) for a in path))
    return math.fsum(terms)


def random_full_cut(tree: WeightedTree, rng: np.random.Generator, stop_prob: float = 0.3) -> FullSubtree:
    """Descend from the root, stopping at each vertex with probability ``stop_prob``."""
    members = []
    stack = [tree.root]
    while stack:
        v = stack.pop()
        if not tree.children[v] or (v != tree.root and rng.random() < stop_prob):
            members.append(tree.ids[v])
        else:
            stack.extend(reversed(tree.children[v]))
    return FullSubtree(tuple(members))


# -- H^s_delta -------------------------------------------------------------


def _check_feasible(tree: WeightedTree, deltas: np.ndarray) -> None:
    leaves = np.flatnonzero(tree.n_children == 0)
    worst = float(tree.weights[leaves].max())
    if worst >= deltas.min():
        raise InsufficientDepthError(
            f"a leaf has weight {worst:.6g} >= delta {deltas.min():.6g}; truncate deeper"
        )


def h_s_delta_many(tree: WeightedTree, s: float, deltas: Sequence[float]) -> np.ndarray:
    """``H^s_δ`` for several ``δ`` at once; one bottom-up sweep over the levels."""
    if s < 0:
        raise ValueError(f"s must be non-negative, got {s}")
    d = np.asarray(deltas, dtype=float)
    if np.any(d <= 0):
        raise ValueError("delta must be positive")
    _check_feasible(tree, d)
    w = tree.weights
    ks = w**s
    F = np.zeros((len(tree), len(d)))
    below = np.zeros((len(tree), len(d)))
    leafy = tree.n_children == 0
    for level in reversed(tree.levels):
        own = ks[level][:, None]
        S = below[level]
        cut_ok = w[level][:, None] < d[None, :]
        val = np.where(cut_ok, np.minimum(own, S), S)
        F[level] = np.where(leafy[level][:, None], own, val)
        if level[0] != tree.root:
            np.add.at(below, tree.parent[level], F[level])
    return F[tree.root]


def h_s_delta(tree: WeightedTree, s: float, delta: float) -> float:
    """Exact ``H^s_δ`` of the boundary, requiring every leaf weight below ``δ``."""
    return float(h_s_delta_many(tree, s, [delta])[0])


def enumerate_full_cuts(tree: WeightedTree, delta: float, limit: int = 10**6) -> Iterable[tuple[int, ...]]:
    """Every full cut whose members have weight below ``δ`` (vertex indices).

    Exhaustive; raises if there are more than ``limit``.
    """
    if count_full_cuts(tree, delta) > limit:
        raise ValueError("too many full cuts to enumerate")

    def options(v: int) -> list[tuple[int, ...]]:
        out = []
        if tree.weights[v] < delta or not tree.children[v]:
            out.append((v,))
        if tree.children[v]:
            for combo in itertools.product(*(options(c) for c in tree.children[v])):
                out.append(tuple(x for part in combo for x in part))
        return out

    return options(tree.root)


def count_full_cuts(tree: WeightedTree, delta: float) -> int:
    n = np.zeros(len(tree), dtype=object)
    for level in reversed(tree.levels):
        for v in level.tolist():
            ch = tree.children[v]
            sub = math.prod(n[c] for c in ch) if ch else 0
            n[v] = sub + (1 if tree.weights[v] < delta or not ch else 0)
    return int(n[tree.root])


def cut_cost(tree: WeightedTree, members: Sequence[int], s: float) -> float:
    """``Σ κ^s`` over a cut, accumulated child by child from the bottom up."""
    inside = set(members)
    ks = tree.weights**s  # same vectorized power as the DP, so equal cuts cost the same bits
    total = np.zeros(len(tree))
    for level in reversed(tree.levels):
        for v in level.tolist():
            if v in inside:
                total[v] = ks[v]
            elif tree.children[v]:
                acc = 0.0
                for c in tree.children[v]:
                    acc += total[c]
                total[v] = acc
    return float(total[tree.root])


def h_s_delta_bruteforce(tree: WeightedTree, s: float, delta: float) -> float:
    _check_feasible(tree, np.array([delta]))
    return min(cut_cost(tree, cut, s) for cut in enumerate_full_cuts(tree, delta))


# -- dimension ---------------------------------------------------------------


def dimension_upper_bound(fit: DecayFit | tuple[int, float]) -> float:
    """``ln M / |ln θ|``; infinite (with a warning) when there is no decay."""
    M, theta = (fit.M, fit.theta) if isinstance(fit, DecayFit) else fit
    if theta >= 1:
        warnings.warn("theta = 1: no geometric decay, dimension bound is infinite", stacklevel=2)
        return math.inf
    return math.log(M) / abs(math.log(theta))


def default_ladder(tree: WeightedTree, n: int = 8, top: float = 0.1, margin: float = 8.0) -> np.ndarray:
    """Geometric ladder from ``top`` down to ``margin`` times the largest leaf weight.

    Close to the truncation the minimization runs out of finer cuts, which
    inflates ``H^s_δ`` for ``s`` above the dimension; the margin keeps a few
    generations of room below the finest ``δ``.
    """
    leaves = np.flatnonzero(tree.n_children == 0)
    floor = float(tree.weights[leaves].max()) * margin
    if floor * 4 > top:
        raise InsufficientDepthError(
            f"leaf weights reach {floor / margin:.4g}; a ladder below {top} needs leaves under {top / (4 * margin):.4g}"
        )
    return np.geomspace(top, floor, n)


@dataclass
class DimensionReport:
    s_estimate: float
    deltas: list[float]
    table: dict[float, list[float]]  # s -> H^s_δ over the ladder
    slopes: dict[float, float]
    upper_bound: float
    bracket: tuple[float, float]
    tol: float
    band: float
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        s_sorted = sorted(self.table)
        return {
            "s_estimate": self.s_estimate,
            "deltas": self.deltas,
            "upper_bound": None if math.isinf(self.upper_bound) else self.upper_bound,
            "bracket": list(self.bracket),
            "tol": self.tol,
            "dead_band": self.band,
            "table": [{"s": s, "slope": self.slopes[s], "h": self.table[s]} for s in s_sorted],
            "warnings": self.warnings,
        }

    def to_csv(self) -> str:
        head = "s," + ",".join(repr(d) for d in self.deltas)
        rows = [f"{s!r}," + ",".join(repr(h) for h in self.table[s]) for s in sorted(self.table)]
        return "\n".join([head, *rows]) + "\n"


def _loglog_slope(deltas: np.ndarray, h: np.ndarray) -> float:
    if np.any(h <= 0):
        return -math.inf
    return float(np.polyfit(np.log(1 / deltas), np.log(h), 1)[0])


def estimate_dimension(
    tree: WeightedTree,
    deltas: Sequence[float] | None = None,
    bracket: tuple[float, float] | None = None,
    tol: float = 0.01,
    band: float = 0.02,
) -> DimensionReport:
    """Bisect on ``s`` using the sign of the log-log slope of ``H^s_δ`` against ``1/δ``.

    ``s`` counts as below the dimension when the slope exceeds ``band``. The
    estimate therefore sits slightly low: where the slope equals ``band``.
    """
    d = np.sort(np.asarray(default_ladder(tree) if deltas is None else deltas, dtype=float))[::-1]
    if len(d) < 4:
        raise ValueError("need at least 4 deltas")
    _check_feasible(tree, d)
    try:
        upper = dimension_upper_bound(fit_decay(tree))
    except InsufficientDepthError:
        upper = math.inf
    notes: list[str] = []
    if bracket is None:
        hi_default = upper + 0.5 if math.isfinite(upper) else 8.0
        if not math.isfinite(upper):
            notes.append("no finite dimension bound; bracket top set to 8")
        bracket = (0.0, hi_default)
    lo, hi = bracket
    table: dict[float, list[float]] = {}
    slopes: dict[float, float] = {}

    def slope_at(s: float) -> float:
        if s not in slopes:
            h = h_s_delta_many(tree, s, d)
            table[s] = [float(x) for x in h]
            slopes[s] = _loglog_slope(d, h)
        return slopes[s]

    if slope_at(lo) <= band:
        notes.append("bracket bottom already above the dimension")
    if slope_at(hi) > band:
        notes.append("bracket top still below the dimension")
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if slope_at(mid) > band:
            lo = mid
        else:
            hi = mid
    ss = sorted(slopes)
    if any(slopes[a] < slopes[b] - 1e-9 for a, b in zip(ss, ss[1:])):
        notes.append("slope is not monotone in s; truncation may be too shallow")
    est = (lo + hi) / 2
    if math.isfinite(upper) and est > upper + tol:
        notes.append("estimate exceeds the decay bound")
    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    return DimensionReport(
        s_estimate=est,
        deltas=[float(x) for x in d],
        table=table,
        slopes=slopes,
        upper_bound=upper,
        bracket=(float(bracket[0]), float(bracket[1])),
        tol=tol,
        band=band,
        warnings=notes,
    )
