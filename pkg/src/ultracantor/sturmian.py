"""Sturmian words, their recoding, and the bilateral tree of words.

A Sturmian word of slope ``alpha`` and intercept ``x`` is the mechanical
sequence ``u_n = floor(x - n*alpha) - floor(x - (n+1)*alpha)``. Its centered
factors of radius ``n`` (length ``2n+1``) partition the subshift into
cylinders; nesting them by radius and weighting radius ``n`` by ``1/(n+1)``
gives a weighted tree whose boundary is the subshift with the combinatorial
metric. That tree decays geometrically exactly when ``alpha`` has bounded
partial quotients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .contfrac import (
    FloatSource,
    QuadraticIrrational,
    Source,
    bounded_type_verdict,
    cf_expand,
    rational_approximation,
    source_name,
)
from .embedding import DepthStability, depth_stability
from .errors import DomainError, NoWitnessError, WindowTooShortError
from .tree import WeightedTree, from_children, reduce
from .words import Window

__all__ = [
    "SturmianWord",
    "Window",
    "mechanical_word",
    "complexity",
    "recode",
    "recode_types",
    "streaks",
    "MultiplicativeCoding",
    "multiplicative_coding",
    "WordTree",
    "build_word_tree",
    "tree_of_words",
    "Witness",
    "witness_chains",
    "nonembed_witness",
    "bounded_type_verdict",
    "SturmianVerdict",
    "witness_scan",
    "witness_correlation",
    "sturmian_verdict",
]


@dataclass(frozen=True)
class SturmianWord:
    alpha: Source
    x: Fraction
    letters: str
    origin: int

    @property
    def window(self) -> Window:
        return Window(self.letters, self.origin)

    def frequency(self) -> float:
        return self.letters.count("1") / len(self.letters)


# -- word generation -------------------------------------------------------


def _floors_quadratic(alpha: QuadraticIrrational, x: Fraction, ns: range) -> list[int]:
    xa, xb = x.numerator, x.denominator
    P, Q, D, R = alpha.p, alpha.q, alpha.d, alpha.r
    out = []
    for n in ns:
        # x - n*alpha = (xa R - n P xb - n Q xb √D) / (xb R)
        q = -n * Q * xb
        root = math.isqrt(q * q * D)
        t = root if q >= 0 else -root - 1  # floor(q√D); q√D is irrational for n != 0
        out.append((xa * R - n * P * xb + t) // (xb * R))
    return out


def _floors_rational(p: int, q: int, err: Fraction, x: Fraction, ns: range) -> list[int] | None:
    """Floors of ``x - n*p/q``; None if some value lies too close to an integer."""
    xa, xb = x.numerator, x.denominator
    den = xb * q
    en, ed = err.numerator, err.denominator
    out = []
    for n in ns:
        num = xa * q - n * p * xb
        f, r = divmod(num, den)
        slack = abs(n) * en * den  # compare r/den with |n|*err, scaled by den*ed
        if r * ed <= slack or (den - r) * ed <= slack:
            return None
        out.append(f)
    return out


def mechanical_word(alpha: Source, x: Fraction | float = Fraction(1, 2), N: int = 1000) -> SturmianWord:
    """Letters ``u_{-N} .. u_N`` of the mechanical word, computed exactly.

    Quadratic slopes use integer square roots; other slopes use a convergent
    whose error is checked against the distance of every value to the nearest
    integer, so a letter is never guessed.
    """
    x = Fraction(x)
    if not 0 < x <= 1:
        raise DomainError("intercept must lie in (0, 1]")
    ns = range(-N, N + 2)
    if isinstance(alpha, QuadraticIrrational):
        fl = _floors_quadratic(alpha, x, ns)
    else:
        min_q = 16 * (N + 2)
        while True:
            p, q, err = rational_approximation(alpha, min_q)
            fl = _floors_rational(p, q, err, x, ns)
            if fl is not None:
                break
            if isinstance(alpha, FloatSource):
                raise DomainError("precision exhausted: float slope cannot resolve this window")
            min_q *= 16
    letters = "".join("1" if a - b else "0" for a, b in zip(fl, fl[1:]))
    return SturmianWord(alpha, x, letters, N)


def complexity(word: SturmianWord | Window | str, n_max: int) -> list[int]:
    """Number of distinct factors of each length ``1..n_max``."""
    s = word if isinstance(word, str) else word.letters
    if len(s) < 4 * n_max:
        raise WindowTooShortError(f"window too short: need {4 * n_max} letters, have {len(s)}")
    return [len({s[i : i + n] for i in range(len(s) - n + 1)}) for n in range(1, n_max + 1)]


# -- recoding ---------------------------------------------------------------

SIGMA = {0: {"0": "0", "1": "10"}, 1: {"0": "01", "1": "1"}}


def apply_substitution(kind: int, letters: str) -> str:
    return "".join(SIGMA[kind][a] for a in letters)


@dataclass(frozen=True)
class Recoded:
    window: Window
    kind: int  # which substitution was removed
    shift: int  # 1 when index 0 sits on the second letter of its block
    start: int  # index in the input where the first complete block begins


def recode(word: SturmianWord | Window) -> Recoded:
    """Remove one substitution layer: the Sturmian recoding map.

    A window without ``11`` is a concatenation of blocks ``0`` and ``10``; a
    window without ``00`` one of ``1`` and ``01``. Incomplete blocks at either
    end are dropped.
    """
    w = word.window if isinstance(word, SturmianWord) else word
    s, o = w.letters, w.origin
    has00, has11 = "00" in s, "11" in s
    if has00 and has11:
        raise DomainError("not Sturmian at this window: both 00 and 11 occur")
    if not has00 and not has11:
        raise WindowTooShortError("window too short to decide the recoding type")
    kind = 0 if not has11 else 1
    n = len(s)
    if kind == 0:
        start = next(i for i in range(n) if s[i] == "1" or (i >= 1 and s[i - 1] == "0"))
    else:
        start = next(i for i in range(1, n) if s[i - 1] == "1")
    out = []
    j = start
    new_origin = None
    shift = 0
    while j < n:
        if kind == 0:
            size, letter = (2, "1") if s[j] == "1" else (1, "0")
        else:
            size, letter = (2, "0") if s[j] == "0" else (1, "1")
        if j + size > n:
            break
        if j <= o < j + size:
            new_origin = len(out)
            shift = o - j
        out.append(letter)
        j += size
    if new_origin is None:
        raise WindowTooShortError("window too short: index 0 lies in an incomplete block")
    return Recoded(Window("".join(out), new_origin), kind, shift, start)


def recode_types(word: SturmianWord | Window, min_length: int = 64) -> list[int]:
    """Sequence of substitution types removed by repeated recoding."""
    w = word.window if isinstance(word, SturmianWord) else word
    kinds = []
    while len(w) >= min_length:
        try:
            r = recode(w)
        except WindowTooShortError:
            break
        kinds.append(r.kind)
        w = r.window
    return kinds


def streaks(kinds: list[int]) -> list[int]:
    """Run lengths of the type sequence, starting with the run of type 0 (possibly empty).

    The last run is dropped because the window may have ended inside it.
    """
    if not kinds:
        return []
    runs = [] if kinds[0] == 0 else [0]
    count = 1
    for a, b in zip(kinds, kinds[1:]):
        if a == b:
            count += 1
        else:
            runs.append(count)
            count = 1
    return runs


# -- multiplicative coding -------------------------------------------------


@dataclass(frozen=True)
class MultiplicativeCoding:
    """Exponents ``b_0, b_1, ...`` of ``σ0^b0 ∘ σ1^b1 ∘ σ0^b2 ∘ ...``."""

    terms: tuple[int, ...]

    def __getitem__(self, n: int) -> int:
        return self.terms[n]

    def __len__(self) -> int:
        return len(self.terms)

    def block_lengths(self, n: int) -> tuple[int, int]:
        """Lengths of the images of 0 and 1 under the first ``n`` blocks composed."""
        # incidence matrices: column a counts letters of σ(a)
        mats = {0: np.array([[1, 1], [0, 1]], dtype=object), 1: np.array([[1, 0], [1, 1]], dtype=object)}
        acc = np.array([[1, 0], [0, 1]], dtype=object)
        for j in range(n):
            for _ in range(self.terms[j]):
                acc = acc.dot(mats[j % 2])
        lengths = np.array([1, 1], dtype=object).dot(acc)
        return int(lengths[0]), int(lengths[1])


def multiplicative_coding(alpha: Source, depth: int) -> MultiplicativeCoding:
    """``b_0 = a_1 - 1`` and ``b_n = a_{n+1}``: the expansion of ``(1-alpha)/alpha``."""
    cf = cf_expand(alpha, depth + 1)
    if cf.a0 != 0:
        raise DomainError("slope must lie in (0, 1)")
    q = cf.quotients
    return MultiplicativeCoding((q[0] - 1,) + tuple(q[1 : depth + 1]))


# -- tree of words -----------------------------------------------------------


@dataclass(frozen=True)
class WordTree:
    """Unreduced tree of bilateral cylinders plus the word behind every vertex."""

    tree: WeightedTree
    radius: tuple[int, ...]  # by vertex id; -1 for the root
    words: tuple[str, ...]  # centered factor for each vertex id ("" for the root)
    counts: tuple[int, ...]  # number of cylinders at each radius

    def reduced(self) -> WeightedTree:
        return reduce(self.tree)


def _cylinder_levels(letters: np.ndarray, depth: int):
    """Refine positions by growing centered windows one letter on each side."""
    L = len(letters)
    pos = np.arange(0, L)
    cls = letters.astype(np.int64)
    uniq, inv = np.unique(cls, return_inverse=True)
    levels = [(pos, inv, uniq)]
    parent_of = [np.full(len(uniq), -1)]
    for n in range(1, depth + 1):
        prev_pos, prev_inv, _ = levels[-1]
        keep = (prev_pos >= n) & (prev_pos <= L - 1 - n)
        p = prev_pos[keep]
        key = prev_inv[keep] * 4 + letters[p - n] * 2 + letters[p + n]
        uniq, inv = np.unique(key, return_inverse=True)
        levels.append((p, inv, uniq))
        parent_of.append(uniq // 4)
    return levels, parent_of


def build_word_tree(alpha: Source, depth: int, window: int | None = None, x=Fraction(1, 2)) -> WordTree:
    """Tree of centered cylinders of radius ``0..depth``.

    The root (weight 1) is the whole subshift; radius ``n`` cylinders have
    weight ``1/(n+1)``. Completeness of the factor list extracted from the
    window is certified by the count ``2n+2`` at every radius.
    """
    N = window if window is not None else max(500, 60 * (depth + 1))
    word = mechanical_word(alpha, x, N)
    letters = np.frombuffer(word.letters.encode(), dtype=np.uint8) - ord("0")
    letters = letters.astype(np.int64)
    levels, parent_of = _cylinder_levels(letters, depth)
    counts = tuple(len(u) for _, _, u in levels)
    for n, cnt in enumerate(counts):
        if cnt != 2 * n + 2:
            raise WindowTooShortError(
                f"window too short: {cnt} cylinders of radius {n}, expected {2 * n + 2}"
            )
    children: list[list[int]] = [[]]
    weights = [1.0]
    radius = [-1]
    words = [""]
    offset_prev = None
    for n, (pos, inv, uniq) in enumerate(levels):
        base = len(weights)
        first = np.full(len(uniq), -1)
        first[inv[::-1]] = pos[::-1]  # a representative position per class
        for k in range(len(uniq)):
            children.append([])
            weights.append(1.0 / (n + 1))
            radius.append(n)
            i = int(first[k])
            words.append(word.letters[i - n : i + n + 1])
            par = 0 if n == 0 else offset_prev + int(parent_of[n][k])
            children[par].append(base + k)
        offset_prev = base
    tree = from_children(children, weights, max_depth=depth + 1)
    return WordTree(tree, tuple(radius), tuple(words), counts)


def tree_of_words(alpha: Source, depth: int, reduced: bool = True, window: int | None = None) -> WeightedTree:
    wt = build_word_tree(alpha, depth, window)
    return wt.reduced() if reduced else wt.tree


# -- non-embeddability witness ---------------------------------------------


@dataclass(frozen=True)
class Witness:
    """Two retained vertices whose weight ratio grows linearly with their distance."""

    u: int
    v: int
    radii: tuple[int, ...]  # radii of the whole arithmetic chain from u to v
    step: int
    ratio: float
    distance: int
    expected: int | None = None
    pairs: tuple[tuple[int, float], ...] = field(default=(), compare=False)  # (distance, ratio) from u

    def to_dict(self) -> dict:
        return {
            "u": self.u,
            "v": self.v,
            "radii": list(self.radii),
            "step": self.step,
            "ratio": self.ratio,
            "distance": self.distance,
            "expected": self.expected,
        }


def witness_chains(tree: WeightedTree, step: int, min_terms: int = 3) -> list[Witness]:
    """Arithmetic chains of retained radii along root-to-leaf paths of a reduced tree of words.

    A chain is a run of retained vertices on one path whose radii are
    ``a, a+step, a+2*step, ...``. It is anchored at its first term whose
    reciprocal weight ``radius+1`` is at least ``step``, so that weights along
    the chain shrink like ``1/k``. Chains with fewer than ``min_terms`` anchored
    terms are discarded.
    """
    w = tree.weights
    rad = np.rint(1.0 / w).astype(np.int64) - 1
    found: dict[tuple[int, ...], Witness] = {}
    for leaf in tree.leaves():
        path = tree.ancestors(leaf)[1:]  # skip the root
        by_radius = {int(rad[v]): v for v in path}
        for v in path:
            a = int(rad[v])
            if a - step in by_radius:
                continue  # not the start of a maximal chain
            chain = [v]
            r = a + step
            while r in by_radius:
                chain.append(by_radius[r])
                r += step
            anchored = [u for u in chain if rad[u] + 1 >= step]
            if len(anchored) < min_terms:
                continue
            key = tuple(anchored)
            if key in found:
                continue
            u0 = anchored[0]
            pairs = tuple(
                (int(tree.depth[u] - tree.depth[u0]), float(w[u0] / w[u])) for u in anchored[1:]
            )
            found[key] = Witness(
                u=tree.ids[u0],
                v=tree.ids[anchored[-1]],
                radii=tuple(int(rad[u]) for u in anchored),
                step=step,
                ratio=float(w[u0] / w[anchored[-1]]),
                distance=int(tree.depth[anchored[-1]] - tree.depth[u0]),
                pairs=pairs,
            )
    return sorted(found.values(), key=lambda c: (-len(c.radii), c.radii))


def nonembed_witness(alpha: Source, n: int, depth: int, window: int | None = None) -> Witness:
    """Witness of linear (not geometric) weight decay driven by the quotient ``b_n``.

    ``b_n`` consecutive copies of one substitution block produce retained
    cylinders whose radii form an arithmetic progression with step equal to
    the block length; along such a chain the weight ratio equals roughly the
    number of steps, which no geometric bound can absorb as ``b_n`` grows.
    """
    coding = multiplicative_coding(alpha, n + 1)
    expected = coding[n] // 2 - 1
    if expected < 1:
        raise NoWitnessError(f"no witness at this depth: b_{n} = {coding[n]} is too small")
    step = coding.block_lengths(n)[n % 2]
    tree = tree_of_words(alpha, depth, window=window)
    chains = witness_chains(tree, step)
    if not chains:
        raise NoWitnessError(
            f"no witness at this depth: no chain of step {step} within radius {depth}"
        )
    best = chains[0]
    return Witness(best.u, best.v, best.radii, step, best.ratio, best.distance, expected, best.pairs)


# -- combined verdict --------------------------------------------------------


@dataclass(frozen=True)
class SturmianVerdict:
    """Continued-fraction verdict plus what the trees of words show."""

    alpha: str
    bounded: bool | str
    max_quotient: int
    definitive: bool
    embeddable: bool | None
    complexity_ok: bool
    stability: DepthStability
    witnesses: tuple[Witness, ...]
    correlation: float | None
    consistent: bool

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "bounded": self.bounded,
            "max_quotient": self.max_quotient,
            "definitive": self.definitive,
            "embeddable": self.embeddable,
            "complexity_ok": self.complexity_ok,
            "stability": self.stability.to_dict(),
            "witnesses": [w.to_dict() for w in self.witnesses],
            "correlation": self.correlation,
            "consistent": self.consistent,
        }


def witness_scan(alpha: Source, radius: int, n_max: int = 16, window: int | None = None) -> list[Witness]:
    """All arithmetic chains driven by quotients ``b_n >= 4`` that fit inside ``radius``."""
    coding = multiplicative_coding(alpha, n_max)
    usable = len(coding)
    if isinstance(alpha, FloatSource):
        usable = min(usable, (cf_expand(alpha, n_max + 1).reliable or 1) - 1)
    tree = None
    found: list[Witness] = []
    for n in range(usable):
        expected = coding[n] // 2 - 1
        if expected < 1:
            continue
        step = coding.block_lengths(n)[n % 2]
        if 3 * step > radius:
            break
        if tree is None:
            tree = tree_of_words(alpha, radius, window=window)
        for c in witness_chains(tree, step):
            found.append(Witness(c.u, c.v, c.radii, step, c.ratio, c.distance, expected, c.pairs))
    return found


def witness_correlation(witnesses: list[Witness]) -> float | None:
    """Pearson correlation of weight ratio against tree distance, pooled over chains."""
    pts = [p for w in witnesses for p in w.pairs]
    if len(pts) < 3:
        return None
    d, r = np.array(pts, dtype=float).T
    if d.std() == 0 or r.std() == 0:
        return None
    return float(np.corrcoef(d, r)[0, 1])


def sturmian_verdict(
    alpha: Source,
    depths: range | list[int] = range(8, 13),
    witness_radius: int = 250,
    min_correlation: float = 0.9,
) -> SturmianVerdict:
    """Decide embeddability from the partial quotients and cross-check on trees of words.

    The continued fraction settles the question whenever its verdict is
    definitive. The trees supply the evidence: bounded ``c`` growth across
    ``depths`` for bounded types, and arithmetic witness chains whose weight
    ratio tracks tree distance for unbounded ones.
    """
    cf = bounded_type_verdict(cf_expand(alpha, 40))
    word = mechanical_word(alpha, N=200)
    complexity_ok = complexity(word, 30) == list(range(2, 32))
    depths = list(depths)
    stab = depth_stability([tree_of_words(alpha, d) for d in depths], depths)
    wit = tuple(witness_scan(alpha, witness_radius))
    corr = witness_correlation(list(wit))
    linear = corr is not None and corr >= min_correlation
    if cf["definitive"]:
        embeddable = bool(cf["bounded"])
    else:
        # stability over a finite window proves nothing, while a linear witness does
        embeddable = False if linear else None
    consistent = (embeddable is True and stab.stable and not linear) or (embeddable is False and linear)
    return SturmianVerdict(
        alpha=source_name(alpha),
        bounded=cf["bounded"],
        max_quotient=int(cf["max_quotient"]),
        definitive=bool(cf["definitive"]),
        embeddable=embeddable,
        complexity_ok=complexity_ok,
        stability=stab,
        witnesses=wit,
        correlation=corr,
        consistent=consistent,
    )
