"""Finite-depth weighted rooted trees and the ultrametric they carry on their boundary.

A :class:`WeightedTree` is a truncation of an infinite weighted tree. Every
childless vertex is flagged either as a *frontier* vertex (the truncation cut
it off; its subtree is unknown) or as a *dangling* leaf (genuinely has no
descendants, so it contributes no boundary point of its own).

Vertices carry external integer ids (those of the JSON interchange format) but
every algorithm works on dense indices ``0..n-1``; ``tree.index(id)`` and
``tree.ids[i]`` translate between the two.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateError, InsufficientDepthError, InvalidTreeError


class WeightedTree:
    """Immutable rooted tree with ordered children and positive vertex weights.

    The constructor does not validate: malformed input (cycles, several roots,
    non-monotone weights) is representable so that :func:`validate` can report
    it. Use :func:`checked` to build and validate in one step.
    """

    def __init__(
        self,
        ids: Sequence[int],
        parents: Sequence[int | None],
        children: Sequence[Sequence[int]],
        weights: Sequence[float],
        root: int,
        max_depth: int | None = None,
        frontier: Sequence[bool] | None = None,
    ):
        self.ids: tuple[int, ...] = tuple(int(i) for i in ids)
        n = len(self.ids)
        if not (len(parents) == len(children) == len(weights) == n):
            raise InvalidTreeError("ids, parents, children and weights must have equal length")
        self._index = {v: i for i, v in enumerate(self.ids)}
        if len(self._index) != n:
            raise InvalidTreeError("duplicate vertex ids")
        if root not in self._index:
            raise InvalidTreeError(f"root id {root} is not a vertex")

        def idx(v):
            if v is None:
                return -1
            if v not in self._index:
                raise InvalidTreeError(f"reference to unknown vertex id {v}")
            return self._index[v]

        self.root: int = self._index[root]
        self.parent = np.array([idx(p) for p in parents], dtype=np.int64)
        self.children: tuple[tuple[int, ...], ...] = tuple(
            tuple(idx(c) for c in ch) for ch in children
        )
        w = np.array(weights, dtype=np.float64)
        w.setflags(write=False)
        self.weights = w
        self.parent.setflags(write=False)

        # depth by BFS from the root along child links; unreachable -> -1
        depth = np.full(n, -1, dtype=np.int64)
        depth[self.root] = 0
        queue = deque([self.root])
        while queue:
            u = queue.popleft()
            for c in self.children[u]:
                if depth[c] == -1:
                    depth[c] = depth[u] + 1
                    queue.append(c)
        depth.setflags(write=False)
        self.depth = depth
        reach = depth[depth >= 0]
        self.max_depth: int = int(max_depth) if max_depth is not None else int(reach.max())

        if frontier is None:
            fr = np.array(
                [len(self.children[i]) == 0 and depth[i] == self.max_depth for i in range(n)],
                dtype=bool,
            )
        else:
            fr = np.array(frontier, dtype=bool)
        fr.setflags(write=False)
        self.frontier = fr

    # -- basic accessors -------------------------------------------------

    def __len__(self) -> int:
        return len(self.ids)

    def __repr__(self) -> str:
        return f"WeightedTree(n={len(self)}, max_depth={self.max_depth})"

    def index(self, vertex_id: int) -> int:
        return self._index[vertex_id]

    def is_leaf(self, i: int) -> bool:
        return not self.children[i]

    def weight(self, i: int) -> float:
        return float(self.weights[i])

    @cached_property
    def n_children(self) -> np.ndarray:
        return np.array([len(c) for c in self.children], dtype=np.int64)

    @cached_property
    def levels(self) -> list[np.ndarray]:
        """Vertex indices grouped by depth, each level in BFS (left to right) order."""
        out: list[list[int]] = [[self.root]]
        while True:
            nxt = [c for u in out[-1] for c in self.children[u]]
            if not nxt:
                break
            out.append(nxt)
        return [np.array(level, dtype=np.int64) for level in out]

    def bfs_order(self) -> np.ndarray:
        return np.concatenate(self.levels)

    def leaves(self) -> list[int]:
        return [i for i in self.bfs_order().tolist() if not self.children[i]]

    def ancestors(self, i: int) -> list[int]:
        """Path from the root down to ``i`` (inclusive)."""
        path = [i]
        while self.parent[path[-1]] >= 0:
            path.append(int(self.parent[path[-1]]))
        return path[::-1]

    def same_shape(self, other: "WeightedTree") -> bool:
        """Ordered-tree isomorphism including weights and frontier flags."""
        stack = [(self.root, other.root)]
        while stack:
            a, b = stack.pop()
            if self.weights[a] != other.weights[b] or self.frontier[a] != other.frontier[b]:
                return False
            if len(self.children[a]) != len(other.children[b]):
                return False
            stack.extend(zip(self.children[a], other.children[b]))
        return True

    # -- boundary points -------------------------------------------------

    def point(self, indices: Iterable[int]) -> "BoundaryPoint":
        """Walk child indices from the root; the walk must end at a leaf."""
        idx = tuple(int(k) for k in indices)
        verts = [self.root]
        for k in idx:
            ch = self.children[verts[-1]]
            if not 0 <= k < len(ch):
                raise InvalidTreeError(f"child index {k} invalid at vertex {self.ids[verts[-1]]}")
            verts.append(ch[k])
        if self.children[verts[-1]]:
            raise InvalidTreeError("boundary point must end at a leaf")
        return BoundaryPoint(idx, tuple(verts), id(self))

    def point_to(self, i: int) -> "BoundaryPoint":
        """Boundary point ending at leaf ``i``."""
        path = self.ancestors(i)
        idx = [self.children[p].index(c) for p, c in zip(path, path[1:])]
        return self.point(idx)

    def sample_point(self, rng: np.random.Generator) -> "BoundaryPoint":
        """Uniform random descent: every child equally likely at each step."""
        idx = []
        v = self.root
        while self.children[v]:
            k = int(rng.integers(len(self.children[v])))
            idx.append(k)
            v = self.children[v][k]
        return self.point(idx)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        vertices = []
        for i, vid in enumerate(self.ids):
            p = int(self.parent[i])
            rec = {
                "id": vid,
                "parent": None if p < 0 else self.ids[p],
                "weight": float(self.weights[i]),
                "children": [self.ids[c] for c in self.children[i]],
            }
            if not self.children[i]:
                rec["frontier"] = bool(self.frontier[i])
            vertices.append(rec)
        return {"root": self.ids[self.root], "max_depth": self.max_depth, "vertices": vertices}

    @classmethod
    def from_dict(cls, data: dict) -> "WeightedTree":
        try:
            verts = data["vertices"]
            ids = [v["id"] for v in verts]
            parents = [v.get("parent") for v in verts]
            children = [list(v.get("children", [])) for v in verts]
            weights = [float(v["weight"]) for v in verts]
            root = data["root"]
        except (KeyError, TypeError) as exc:
            raise InvalidTreeError(f"malformed tree document: {exc}") from exc
        flags = None
        if any("frontier" in v for v in verts):
            tmp = cls(ids, parents, children, weights, root, data.get("max_depth"))
            flags = [
                bool(v["frontier"]) if "frontier" in v else bool(tmp.frontier[i])
                for i, v in enumerate(verts)
            ]
        return cls(ids, parents, children, weights, root, data.get("max_depth"), flags)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "WeightedTree":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidTreeError(f"not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "WeightedTree":
        return cls.loads(Path(path).read_text())


@dataclass(frozen=True)
class BoundaryPoint:
    """A maximal path of a truncated tree, as child indices and visited vertices."""

    indices: tuple[int, ...]
    vertices: tuple[int, ...]
    tree_key: int = field(default=0, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def end(self) -> int:
        return self.vertices[-1]


# -- construction helpers ------------------------------------------------


def from_children(
    children: Sequence[Sequence[int]],
    weights: Sequence[float],
    root: int = 0,
    max_depth: int | None = None,
    frontier: Sequence[bool] | None = None,
) -> WeightedTree:
    """Build a tree whose vertex ids are ``0..n-1`` from child lists alone."""
    n = len(children)
    parents: list[int | None] = [None] * n
    for u, ch in enumerate(children):
        for c in ch:
            parents[c] = u
    return WeightedTree(range(n), parents, children, weights, root, max_depth, frontier)


def build_by_levels(branching, weight_of, depth: int) -> WeightedTree:
    """Grow a tree breadth-first to ``depth``.

    ``branching(path)`` gives the child count of the vertex at ``path`` (a tuple
    of child indices) and ``weight_of(path, parent_weight)`` its weight.
    """
    children: list[list[int]] = [[]]
    weights = [weight_of((), None)]
    paths = [()]
    frontier_level = [0]
    for d in range(depth):
        nxt = []
        for u in frontier_level:
            k = branching(paths[u])
            for j in range(k):
                p = paths[u] + (j,)
                paths.append(p)
                children.append([])
                weights.append(weight_of(p, weights[u]))
                v = len(paths) - 1
                children[u].append(v)
                nxt.append(v)
        frontier_level = nxt
    return from_children(children, weights, max_depth=depth)


def regular_tree(branching: int, depth: int, ratio: float | None = None) -> WeightedTree:
    """Complete ``branching``-ary tree with weight ``ratio**depth`` (default 1/branching)."""
    r = 1.0 / branching if ratio is None else ratio
    return build_by_levels(lambda p: branching, lambda p, w: 1.0 if w is None else w * r, depth)


def polynomial_tree(branching: int, depth: int) -> WeightedTree:
    """Complete tree with weight ``1/(depth+1)``: decays too slowly for a geometric bound."""
    return build_by_levels(lambda p: branching, lambda p, w: 1.0 / (len(p) + 1), depth)


def random_tree(
    rng: np.random.Generator,
    depth: int,
    max_branching: int = 3,
    min_branching: int = 2,
    stop_prob: float = 0.0,
) -> WeightedTree:
    """Random reduced tree with strictly decreasing random weights.

    Each vertex stops growing (becomes a frontier-flagged leaf) with probability
    ``stop_prob``, otherwise it gets between ``min_branching`` and
    ``max_branching`` children.
    """
    children: list[list[int]] = [[]]
    weights = [1.0]
    depths = [0]
    frontier = [False]
    queue = deque([0])
    while queue:
        u = queue.popleft()
        if depths[u] == depth or (u != 0 and rng.random() < stop_prob):
            frontier[u] = True
            continue
        for _ in range(int(rng.integers(min_branching, max_branching + 1))):
            children.append([])
            weights.append(weights[u] * float(rng.uniform(0.2, 0.8)))
            depths.append(depths[u] + 1)
            frontier.append(False)
            children[u].append(len(children) - 1)
            queue.append(len(children) - 1)
    return from_children(children, weights, max_depth=depth, frontier=frontier)


# -- validation ----------------------------------------------------------


def validate(tree: WeightedTree) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems: list[str] = []
    ids = tree.ids
    roots = [ids[i] for i in range(len(tree)) if tree.parent[i] < 0]
    if roots != [ids[tree.root]]:
        problems.append(f"root: expected exactly one parentless vertex ({ids[tree.root]}), found {roots}")
    seen_as_child: dict[int, int] = {}
    for u, ch in enumerate(tree.children):
        for c in ch:
            if c in seen_as_child:
                problems.append(f"structure: vertex {ids[c]} listed as child of {ids[seen_as_child[c]]} and {ids[u]}")
            seen_as_child[c] = u
            if tree.parent[c] != u:
                p = tree.parent[c]
                problems.append(
                    f"structure: vertex {ids[c]} is a child of {ids[u]} but records parent "
                    f"{None if p < 0 else ids[p]}"
                )
    for i in range(len(tree)):
        if tree.depth[i] < 0:
            problems.append(f"reachability: vertex {ids[i]} is not reachable from root {ids[tree.root]}")
    for i in range(len(tree)):
        w = tree.weights[i]
        if not (w > 0 and math.isfinite(w)):
            problems.append(f"weight: vertex {ids[i]} has non-positive or non-finite weight {w}")
        p = tree.parent[i]
        if p >= 0 and tree.depth[i] >= 0:
            if w > tree.weights[p]:
                problems.append(
                    f"monotonicity: vertex {ids[i]} weight {w} exceeds parent {ids[p]} weight {tree.weights[p]}"
                )
            if tree.depth[p] >= 0 and tree.depth[i] != tree.depth[p] + 1:
                problems.append(f"depth: vertex {ids[i]} is not one level below its parent")
        if tree.depth[i] > tree.max_depth:
            problems.append(f"depth: vertex {ids[i]} lies below max_depth {tree.max_depth}")
        if tree.frontier[i] and tree.children[i]:
            problems.append(f"frontier: vertex {ids[i]} is flagged frontier but has children")
    return problems


def checked(tree: WeightedTree) -> WeightedTree:
    problems = validate(tree)
    if problems:
        raise InvalidTreeError("; ".join(problems))
    return tree


# -- metric --------------------------------------------------------------


def _same_tree(tree: WeightedTree, *points: BoundaryPoint) -> None:
    for p in points:
        if p.tree_key and p.tree_key != id(tree):
            raise InvalidTreeError("boundary point belongs to a different tree")
        if p.vertices[0] != tree.root:
            raise InvalidTreeError("boundary point does not start at this tree's root")


def _meet_index(x: BoundaryPoint, y: BoundaryPoint) -> int:
    k = 0
    for a, b in zip(x.indices, y.indices):
        if a != b:
            break
        k += 1
    return k


def lca(tree: WeightedTree, x: BoundaryPoint, y: BoundaryPoint) -> int:
    """Id of the deepest vertex shared by both paths."""
    _same_tree(tree, x, y)
    return tree.ids[x.vertices[_meet_index(x, y)]]


def d_kappa(tree: WeightedTree, x: BoundaryPoint, y: BoundaryPoint) -> float:
    """Ultrametric distance: the weight of the meet, or 0 for equal points."""
    _same_tree(tree, x, y)
    if x.indices == y.indices:
        return 0.0
    return float(tree.weights[x.vertices[_meet_index(x, y)]])


# -- reduction -----------------------------------------------------------


def reduce(tree: WeightedTree) -> WeightedTree:
    """Contract unary chains and drop branches that end in dangling leaves.

    A vertex survives when at least two of its children lead to boundary
    material (a frontier leaf); frontier leaves survive as leaves. Ids, weights,
    child order and frontier flags are carried over.
    """
    n = len(tree)
    head = [-1] * n  # surviving vertex representing the subtree, or -1 if empty
    order = tree.bfs_order()
    for u in order[::-1].tolist():
        ch = tree.children[u]
        if not ch:
            head[u] = u if tree.frontier[u] else -1
            continue
        live = [head[c] for c in ch if head[c] >= 0]
        if len(live) >= 2:
            head[u] = u
        elif len(live) == 1:
            head[u] = live[0]
    new_root = head[tree.root]
    if new_root < 0 or not tree.children[new_root]:
        raise DegenerateError("degenerate: boundary is a single point")

    keep: list[int] = []
    kids: dict[int, list[int]] = {}
    stack = [new_root]
    while stack:
        u = stack.pop()
        keep.append(u)
        kids[u] = [head[c] for c in tree.children[u] if head[c] >= 0]
        stack.extend(reversed(kids[u]))
    keep.sort(key=lambda i: (tree.depth[i], i))
    parents: dict[int, int | None] = {new_root: None}
    for u in keep:
        for c in kids[u]:
            parents[c] = u
    ids = tree.ids
    return WeightedTree(
        [ids[u] for u in keep],
        [None if parents[u] is None else ids[parents[u]] for u in keep],
        [[ids[c] for c in kids[u]] for u in keep],
        [tree.weights[u] for u in keep],
        ids[new_root],
        max_depth=None,
        frontier=[bool(tree.frontier[u]) for u in keep],
    )


def is_reduced(tree: WeightedTree) -> bool:
    return all(len(c) != 1 for c in tree.children)


# -- decay fit -----------------------------------------------------------


@dataclass(frozen=True)
class DepthFitRow:
    depth: int
    theta: float
    c: float
    M: int


@dataclass(frozen=True)
class DecayFit:
    """Geometric decay certificate ``κ(w)/κ(v) <= c * theta**gap``.

    ``gap_ratios[g-1]`` is the worst ratio over all ancestor/descendant pairs
    ``g`` generations apart; ``depth_table`` repeats the fit on the truncations
    at every depth so that drift of ``c`` or ``theta`` is visible.
    """

    M: int
    theta: float
    c: float
    gap_ratios: tuple[float, ...]
    depth_table: tuple[DepthFitRow, ...]
    worst_pair: tuple[int, int] | None = None  # (ancestor id, descendant id) that fixes c

    def bound(self, gap: int) -> float:
        return self.c * self.theta**gap

    def holds(self, tree: WeightedTree) -> bool:
        """Exhaustively check the certificate on every ancestor/descendant pair."""
        for i in range(len(tree)):
            a = int(tree.parent[i])
            g = 1
            while a >= 0:
                if tree.weights[i] / tree.weights[a] > self.bound(g):
                    return False
                a = int(tree.parent[a])
                g += 1
        return True


def _gap_ratio_matrix(tree: WeightedTree):
    """R[d][g] = max of κ(w)/κ(v) over w at depth d and its ancestor v at depth d-g.

    Also returns the (ancestor, descendant) index pair attaining each entry.
    """
    D = len(tree.levels) - 1
    R = np.zeros((D + 1, D + 1))
    arg = {}
    w = tree.weights
    parent = np.asarray(tree.parent)
    for d in range(1, D + 1):
        level = tree.levels[d]
        anc = level
        for g in range(1, d + 1):
            anc = parent[anc]
            ratio = w[level] / w[anc]
            k = int(np.argmax(ratio))
            R[d, g] = ratio[k]
            arg[(d, g)] = (int(anc[k]), int(level[k]))
    return R, arg


def c_for_theta(gap_ratios: Sequence[float], theta: float) -> float:
    """Smallest ``c >= 1`` with ``gap_ratios[g-1] <= c * theta**g`` for every gap."""
    r = np.asarray(gap_ratios, dtype=float)
    g = np.arange(1, len(r) + 1, dtype=float)
    c = max(1.0, float(np.max(r / theta**g)))
    # absorb rounding in theta**g so the certificate holds when re-checked
    return c * (1 + 8 * np.finfo(float).eps)


def _fit_from_ratios(r: np.ndarray) -> tuple[float, float]:
    """``theta = min_g r_g**(1/g)``, then the minimal ``c`` for it.

    The worst-ratio envelope is submultiplicative (a pair ``g + h`` apart
    factors through the vertex in between), so ``r_g**(1/g)`` converges to
    its infimum; the smallest observed root is the finite-depth estimate.
    """
    g = np.arange(1, len(r) + 1, dtype=float)
    theta = min(1.0, float(np.min(r ** (1.0 / g))))
    return theta, c_for_theta(r, theta)


def fit_decay(tree: WeightedTree) -> DecayFit:
    """Fit ``(M, theta, c)`` such that every pair obeys the geometric decay bound.

    ``theta`` is the geometric rate of the per-gap worst-ratio envelope and
    ``c`` the smallest constant valid for that ``theta``. A rate that does not
    decay yields ``theta = 1``.
    """
    if len(tree) < 2 or len(tree.levels) < 2:
        raise InsufficientDepthError("decay fit needs at least one parent/child pair")
    R, arg = _gap_ratio_matrix(tree)
    D = R.shape[0] - 1
    M = int(tree.n_children.max())
    rows = []
    running = np.zeros(D + 1)
    for T in range(1, D + 1):
        running = np.maximum(running, R[T])
        theta_t, c_t = _fit_from_ratios(running[1 : T + 1])
        m_t = int(max(tree.n_children[tree.levels[d]].max() for d in range(T)))
        rows.append(DepthFitRow(T, float(theta_t), float(c_t), m_t))
    env = R[:, 1:].max(axis=0)
    theta, c = rows[-1].theta, rows[-1].c
    g = np.arange(1, D + 1)
    scaled = R[:, 1:] / theta**g
    d_star, g_star = np.unravel_index(int(np.argmax(scaled)), scaled.shape)
    a, b = arg[(int(d_star), int(g_star) + 1)]
    return DecayFit(
        M=M,
        theta=theta,
        c=c,
        gap_ratios=tuple(float(x) for x in env),
        depth_table=tuple(rows),
        worst_pair=(tree.ids[a], tree.ids[b]),
    )


# -- telescoping -----------------------------------------------------------


def telescope(tree: WeightedTree, delta: float) -> WeightedTree:
    """Coarsen the tree so that weights drop by a factor of at most ``delta`` per edge.

    The children of an output vertex ``v`` are the first descendants ``w`` with
    ``κ(w) <= delta·κ(v)``. A branch that hits a leaf before the threshold keeps
    that leaf as a frontier-flagged output leaf.
    """
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    w = tree.weights
    out_children: dict[int, list[int]] = {}
    flags: dict[int, bool] = {tree.root: bool(tree.frontier[tree.root])}
    parents: dict[int, int | None] = {tree.root: None}
    order = [tree.root]
    stack = [tree.root]
    while stack:
        v = stack.pop()
        if not tree.children[v]:
            out_children[v] = []
            continue
        threshold = delta * w[v]
        picked: list[int] = []
        scan = list(reversed(tree.children[v]))
        complete = False
        while scan:
            u = scan.pop()
            if w[u] <= threshold:
                picked.append(u)
                flags[u] = bool(tree.frontier[u])
                complete = True
            elif not tree.children[u]:
                picked.append(u)
                flags[u] = True  # cut off before the threshold
            else:
                scan.extend(reversed(tree.children[u]))
        if v == tree.root and not complete:
            raise InsufficientDepthError(
                "insufficient depth: no branch below the root reaches the telescoping threshold"
            )
        out_children[v] = picked
        for u in picked:
            parents[u] = v
            order.append(u)
        stack.extend(reversed([u for u in picked if w[u] <= threshold]))
        for u in picked:
            if w[u] > threshold:
                out_children[u] = []
    depth_of: dict[int, int] = {tree.root: 0}
    for u in order[1:]:
        depth_of[u] = depth_of[parents[u]] + 1
    order.sort(key=lambda i: (depth_of[i], i))
    ids = tree.ids
    return WeightedTree(
        [ids[u] for u in order],
        [None if parents[u] is None else ids[parents[u]] for u in order],
        [[ids[c] for c in out_children[u]] for u in order],
        [w[u] for u in order],
        ids[tree.root],
        frontier=[flags[u] for u in order],
    )


def telescoped_distance(tree: WeightedTree, coarse: WeightedTree, x: BoundaryPoint, y: BoundaryPoint) -> float:
    """Distance between two boundary points of ``tree`` measured in ``coarse``.

    ``coarse`` must share vertex ids with ``tree`` (as produced by
    :func:`telescope`): the distance is the weight of the deepest retained
    ancestor of the meet.
    """
    if x.indices == y.indices:
        return 0.0
    k = _meet_index(x, y)
    for v in reversed(x.vertices[: k + 1]):
        vid = tree.ids[v]
        if vid in coarse._index:
            return float(coarse.weights[coarse.index(vid)])
    raise InvalidTreeError("coarse tree does not contain the root")
