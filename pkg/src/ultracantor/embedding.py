"""Bi-Lipschitz embeddings of tree boundaries into Euclidean space.

Three tools live here:

* :func:`check_embeddable` tests whether a reduced tree has bounded branching
  and geometrically decaying weights, which is what an embedding into some
  ``R^L`` requires.
* :func:`embed_point` is the explicit map: coordinate ``r`` sums
  ``g(v_n) * κ(v_{n-1})`` over the generations ``n ≡ r (mod L)`` of the path,
  where ``g`` is the 1-based child index.
* :func:`schoenberg_test` decides isometric embeddability of a finite metric
  space from the Gram-type matrix ``A(x)`` via a pivoted Cholesky factorization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InsufficientDepthError, InvalidMetricError, NotReducedError
from .tree import (
    BoundaryPoint,
    DecayFit,
    WeightedTree,
    _gap_ratio_matrix,
    c_for_theta,
    d_kappa,
    fit_decay,
    is_reduced,
)


@dataclass(frozen=True)
class StabilityPolicy:
    """How much ``c`` may grow across depths before the decay bound is declared broken.

    The fit at half the depth fixes ``theta``; ``c`` needed at full depth for
    that same ``theta`` must stay within ``c_growth`` times the half-depth ``c``.
    """

    c_growth: float = 2.0


@dataclass(frozen=True)
class EmbedParams:
    M: int
    c: float
    theta: float
    L: int
    truncation_depth: int

    @property
    def sufficient(self) -> bool:
        """Whether ``theta**L < 1/(M*c + 1)``, the condition that makes the map bi-Lipschitz."""
        return self.theta**self.L < 1.0 / (self.M * self.c + 1)

    @property
    def lower(self) -> float:
        q = self.theta**self.L
        return 1.0 - self.M * self.c * q / (1.0 - q)

    @property
    def coordinate_bound(self) -> float:
        return self.M * self.c / (1.0 - self.theta**self.L)

    @property
    def upper(self) -> float:
        return math.sqrt(self.L) * self.coordinate_bound

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "c": self.c,
            "theta": self.theta,
            "L": self.L,
            "truncation_depth": self.truncation_depth,
            "sufficient": self.sufficient,
        }


@dataclass(frozen=True)
class EmbedVerdict:
    satisfied: bool
    fit: DecayFit
    L: int | None
    c_growth: float
    reference_theta: float
    reasons: tuple[str, ...] = ()
    witness_pairs: tuple[dict, ...] = ()

    def params(self, tree: WeightedTree, L: int | None = None) -> EmbedParams:
        chosen = L if L is not None else self.L
        if chosen is None:
            chosen = choose_L(self.fit.M, self.fit.c, self.fit.theta)
        return EmbedParams(self.fit.M, self.fit.c, self.fit.theta, chosen, tree.max_depth)

    def to_dict(self) -> dict:
        f = self.fit
        return {
            "satisfied": self.satisfied,
            "M": f.M,
            "c": f.c,
            "theta": f.theta,
            "L": self.L,
            "c_growth": self.c_growth,
            "reference_theta": self.reference_theta,
            "depth_table": [
                {"depth": r.depth, "theta": r.theta, "c": r.c, "M": r.M} for r in f.depth_table
            ],
            "gap_ratios": list(f.gap_ratios),
            "reasons": list(self.reasons),
            "witness_pairs": list(self.witness_pairs),
        }


def worst_pairs(tree: WeightedTree, theta: float, k: int = 3) -> list[dict]:
    """Ancestor/descendant pairs that need the largest ``c`` for the given ``theta``."""
    R, arg = _gap_ratio_matrix(tree)
    cells = []
    for (d, g), (a, b) in arg.items():
        cells.append((R[d, g] / theta**g, g, a, b, R[d, g]))
    cells.sort(key=lambda t: (-t[0], t[1]))
    return [
        {"ancestor": tree.ids[a], "descendant": tree.ids[b], "gap": int(g), "ratio": float(r), "c_needed": float(s)}
        for s, g, a, b, r in cells[:k]
    ]


def check_embeddable(tree: WeightedTree, policy: StabilityPolicy = StabilityPolicy()) -> EmbedVerdict:
    """Test bounded branching and geometric weight decay on a reduced tree."""
    if not is_reduced(tree):
        raise NotReducedError("tree has unary vertices; call tree.reduce() first")
    fit = fit_decay(tree)
    rows = fit.depth_table
    ref = rows[math.ceil(len(rows) / 2) - 1]
    reasons = []
    if ref.theta < 1:
        growth = c_for_theta(fit.gap_ratios, ref.theta) / ref.c
    else:
        growth = math.inf
    if fit.theta >= 1 or ref.theta >= 1:
        reasons.append("weights do not decay geometrically (theta = 1)")
    if growth > policy.c_growth:
        reasons.append(
            f"c needed at full depth is {growth:.3g} times the half-depth value (limit {policy.c_growth})"
        )
    satisfied = not reasons
    L = choose_L(fit.M, fit.c, fit.theta) if satisfied else None
    witnesses = () if satisfied else tuple(worst_pairs(tree, min(ref.theta, 1.0)))
    return EmbedVerdict(satisfied, fit, L, float(growth), ref.theta, tuple(reasons), witnesses)


@dataclass(frozen=True)
class DepthStability:
    """``c`` needed by deeper truncations at the ``theta`` fitted on the shallowest one."""

    depths: tuple[int, ...]
    theta: float
    c: tuple[float, ...]  # one per depth, all at the same theta
    M: tuple[int, ...]
    growth: float
    stable: bool

    def to_dict(self) -> dict:
        return {
            "depths": list(self.depths),
            "theta": self.theta,
            "c": list(self.c),
            "M": list(self.M),
            "growth": self.growth,
            "stable": self.stable,
        }


def depth_stability(
    trees: Sequence[WeightedTree], depths: Sequence[int] | None = None, policy: StabilityPolicy = StabilityPolicy()
) -> DepthStability:
    """Same idea as the within-tree check, applied across a family of truncations.

    Trees must be ordered from shallow to deep.
    """
    if not trees:
        raise ValueError("need at least one tree")
    fits = [fit_decay(t) for t in trees]
    theta = fits[0].theta
    if theta >= 1:
        cs = tuple(math.inf for _ in fits)
    else:
        cs = tuple(float(c_for_theta(f.gap_ratios, theta)) for f in fits)
    growth = max(cs) / cs[0] if math.isfinite(cs[0]) else math.inf
    return DepthStability(
        depths=tuple(depths) if depths is not None else tuple(t.max_depth for t in trees),
        theta=theta,
        c=cs,
        M=tuple(f.M for f in fits),
        growth=float(growth),
        stable=bool(theta < 1 and growth <= policy.c_growth),
    )


def choose_L(M: int, c: float, theta: float) -> int:
    """Smallest ``L`` with ``theta**L < 1/(M*c + 1)``."""
    if not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    target = 1.0 / (M * c + 1)
    L = max(1, math.ceil(math.log(target) / math.log(theta)))
    while theta**L >= target:
        L += 1
    while L > 1 and theta ** (L - 1) < target:
        L -= 1
    return L


# -- the explicit map ------------------------------------------------------


@dataclass(frozen=True)
class Embedded:
    partial: np.ndarray  # truncated coordinate sums
    tail: float  # each true coordinate lies in [partial, partial + tail]

    @property
    def midpoint(self) -> np.ndarray:
        return self.partial + self.tail / 2


def _tail(tree: WeightedTree, params: EmbedParams, length: int, leaf: int) -> float:
    if not tree.frontier[leaf]:
        return 0.0
    scale = min(tree.weights[tree.root] * params.theta**length, tree.weights[leaf])
    return params.M * params.c * scale / (1.0 - params.theta**params.L)


def embed_point(tree: WeightedTree, params: EmbedParams, x: BoundaryPoint) -> Embedded:
    """Coordinates of ``x`` truncated at its last vertex, with a bound on the missing tail."""
    if params.truncation_depth < params.L:
        raise InsufficientDepthError(
            f"truncation depth {params.truncation_depth} is shorter than one block of length {params.L}"
        )
    L = params.L
    vec = np.zeros(L)
    w = tree.weights
    for n in range(1, len(x) + 1):
        vec[(n - 1) % L] += (x.indices[n - 1] + 1) * w[x.vertices[n - 1]]
    return Embedded(vec, _tail(tree, params, len(x), x.end))


def embed_leaves(tree: WeightedTree, params: EmbedParams) -> tuple[np.ndarray, np.ndarray]:
    """Partial coordinates and tails for every leaf, indexed by vertex index."""
    L = params.L
    coords = np.zeros((len(tree), L))
    tails = np.zeros(len(tree))
    w = tree.weights
    for d, level in enumerate(tree.levels):
        for u in level.tolist():
            for k, v in enumerate(tree.children[u]):
                coords[v] = coords[u]
                coords[v, d % L] += (k + 1) * w[u]
    for i in range(len(tree)):
        if not tree.children[i]:
            tails[i] = _tail(tree, params, int(tree.depth[i]), i)
    return coords, tails


@dataclass(frozen=True)
class DistortionReport:
    pairs: int
    skipped: int
    min_ratio: float
    max_ratio: float
    box: tuple[float, float]
    contained: bool
    violations: int
    coordinate_ok: bool
    max_inflation: float
    params: EmbedParams
    worst: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pairs": self.pairs,
            "skipped": self.skipped,
            "min_ratio": self.min_ratio,
            "max_ratio": self.max_ratio,
            "box": list(self.box),
            "contained": self.contained,
            "violations": self.violations,
            "coordinate_bound_ok": self.coordinate_ok,
            "max_inflation": self.max_inflation,
            "params": self.params.to_dict(),
        }


def distortion_report(tree: WeightedTree, params: EmbedParams, n_samples: int, seed: int) -> DistortionReport:
    """Sample boundary pairs and compare ``|φ(x) - φ(y)| / d(x, y)`` with the theoretical box.

    Ratios use coordinate midpoints; each pair's box is widened by the
    truncation tails of its two points.
    """
    rng = np.random.default_rng(seed)
    coords, tails = embed_leaves(tree, params)
    lo, hi = params.lower, params.upper
    cb = params.coordinate_bound
    sqrtL = math.sqrt(params.L)
    ratios = []
    skipped = violations = 0
    coord_ok = True
    max_infl = 0.0
    for _ in range(n_samples):
        x = tree.sample_point(rng)
        y = tree.sample_point(rng)
        d = d_kappa(tree, x, y)
        if d == 0:
            skipped += 1
            continue
        a, b = x.end, y.end
        diff = (coords[a] + tails[a] / 2) - (coords[b] + tails[b] / 2)
        slack = (tails[a] + tails[b]) / 2
        ratio = float(np.linalg.norm(diff)) / d
        infl = sqrtL * slack / d
        max_infl = max(max_infl, infl)
        if not (lo - infl <= ratio <= hi + infl):
            violations += 1
        if np.any(np.abs(diff) > cb * d + slack):
            coord_ok = False
        ratios.append(ratio)
    return DistortionReport(
        pairs=len(ratios),
        skipped=skipped,
        min_ratio=min(ratios) if ratios else math.nan,
        max_ratio=max(ratios) if ratios else math.nan,
        box=(lo, hi),
        contained=violations == 0,
        violations=violations,
        coordinate_ok=coord_ok,
        max_inflation=float(max_infl),
        params=params,
    )


# -- finite metric spaces ----------------------------------------------------


@dataclass(frozen=True)
class FiniteMetric:
    labels: tuple[str, ...]
    matrix: np.ndarray
    triangle_tol: float = 1e-12

    def __post_init__(self):
        d = np.asarray(self.matrix, dtype=float)
        n = len(self.labels)
        if d.shape != (n, n):
            raise InvalidMetricError(f"distance matrix must be {n}x{n}, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InvalidMetricError("distances must be finite")
        if not np.array_equal(d, d.T):
            raise InvalidMetricError("distance matrix is not symmetric")
        if np.any(np.diag(d) != 0):
            raise InvalidMetricError("diagonal must be zero")
        off = d[~np.eye(n, dtype=bool)]
        if np.any(off <= 0):
            raise InvalidMetricError("distinct points must be at positive distance")
        scale = d.max() if n > 1 else 1.0
        # d[i,k] <= d[i,j] + d[j,k] for all triples
        via = d[:, :, None] + d[None, :, :]  # via[i, j, k] = d[i,j] + d[j,k]
        if np.any(d[:, None, :] > via + self.triangle_tol * scale):
            raise InvalidMetricError("triangle inequality violated")
        d.setflags(write=False)
        object.__setattr__(self, "matrix", d)

    @classmethod
    def from_points(cls, points: np.ndarray) -> "FiniteMetric":
        pts = np.asarray(points, dtype=float)
        diff = pts[:, None, :] - pts[None, :, :]
        d = np.sqrt((diff**2).sum(axis=-1))
        d = (d + d.T) / 2
        np.fill_diagonal(d, 0.0)
        return cls(tuple(str(i) for i in range(len(pts))), d)

    @classmethod
    def from_csv(cls, text: str) -> "FiniteMetric":
        import csv
        import io

        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if not rows:
            raise InvalidMetricError("empty metric file")
        labels = tuple(s.strip() for s in rows[0])
        try:
            mat = np.array([[float(v) for v in r] for r in rows[1:]])
        except ValueError as exc:
            raise InvalidMetricError(f"non-numeric distance: {exc}") from exc
        return cls(labels, mat)


def gram_matrix(metric: FiniteMetric, base: int) -> np.ndarray:
    """``A_{yz} = (d(x,y)^2 + d(x,z)^2 - d(y,z)^2) / 2`` over the points other than ``x``."""
    d2 = metric.matrix**2
    others = [i for i in range(len(metric.labels)) if i != base]
    dx = d2[base, others]
    return (dx[:, None] + dx[None, :] - d2[np.ix_(others, others)]) / 2


def pivoted_cholesky(A: np.ndarray, tol: float):
    """Diagonal-pivoted Cholesky; stops when no remaining pivot exceeds ``tol``.

    Returns ``(rank, perm, L, S)`` with ``S`` the untouched Schur complement of
    the last ``n - rank`` permuted coordinates.
    """
    S = np.array(A, dtype=float)
    n = len(S)
    perm = np.arange(n)
    Lf = np.zeros((n, n))
    rank = 0
    for k in range(n):
        j = k + int(np.argmax(np.diag(S)[k:]))
        if S[j, j] <= tol:
            break
        if j != k:
            S[[k, j]] = S[[j, k]]
            S[:, [k, j]] = S[:, [j, k]]
            Lf[[k, j]] = Lf[[j, k]]
            perm[[k, j]] = perm[[j, k]]
        piv = math.sqrt(S[k, k])
        Lf[k:, k] = S[k:, k] / piv
        S[k + 1 :, k + 1 :] -= np.outer(Lf[k + 1 :, k], Lf[k + 1 :, k])
        S[k, k:] = S[k:, k] = 0.0
        rank += 1
    return rank, perm, Lf, S[rank:, rank:]


@dataclass(frozen=True)
class SchoenbergResult:
    embeddable: bool
    rank: int
    base: str
    witness: tuple[float, ...] | None  # vector with negative quadratic form
    witness_value: float | None  # its Rayleigh quotient
    min_eigenvalue: float

    def to_dict(self) -> dict:
        return {
            "embeddable": self.embeddable,
            "rank": self.rank,
            "base": self.base,
            "witness": None if self.witness is None else list(self.witness),
            "witness_value": self.witness_value,
            "min_eigenvalue": self.min_eigenvalue,
        }


def schoenberg_test(metric: FiniteMetric, base: int | str = 0, rel_tol: float = 1e-10) -> SchoenbergResult:
    """Decide isometric embeddability in Euclidean space and the minimal dimension."""
    n = len(metric.labels)
    if n < 2:
        raise InvalidMetricError("need at least two points")
    b = metric.labels.index(base) if isinstance(base, str) else int(base)
    A = gram_matrix(metric, b)
    tol = rel_tol * float(np.linalg.norm(A))
    rank, perm, Lf, S = pivoted_cholesky(A, tol)
    min_eig = float(np.linalg.eigvalsh(A)[0])
    m = len(S)
    z = None
    if m:
        diag = np.diag(S)
        if diag.min() < -tol:
            z = np.eye(m)[int(np.argmin(diag))]
        else:
            off = np.abs(S - np.diag(diag))
            i, j = np.unravel_index(int(np.argmax(off)), off.shape)
            if off[i, j] > tol:
                z = np.zeros(m)
                z[i] = 1.0
                z[j] = -np.sign(S[i, j])
    if z is None:
        return SchoenbergResult(True, rank, metric.labels[b], None, None, min_eig)
    # lift z from the Schur complement: v = [-A11^{-1} A12 z ; z] has v'Av = z'Sz
    Ap = A[np.ix_(perm, perm)]
    top = -np.linalg.solve(Ap[:rank, :rank], Ap[:rank, rank:] @ z) if rank else np.zeros(0)
    vp = np.concatenate([top, z])
    v = np.zeros(len(A))
    v[perm] = vp
    value = float(v @ A @ v / (v @ v))
    return SchoenbergResult(False, rank, metric.labels[b], tuple(float(t) for t in v), value, min_eig)
