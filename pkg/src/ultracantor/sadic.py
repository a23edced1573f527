"""S-adic systems, their Bratteli diagrams, and the path/word correspondence.

Indexing is 0-based throughout: ``σ_n`` maps letters of ``A_{n+1}`` to words
over ``A_n`` and ``σ_{n,m} = σ_n ∘ ... ∘ σ_{m-1}`` (``σ_{n,n}`` is the
identity). A Bratteli edge ``(a, l, b)`` on level ``n`` records that ``a``
sits at position ``l`` of ``σ_n(b)``. A path of length ``n`` is a chain of
edges ``e_0 ... e_{n-1}`` climbing from ``A_0`` to ``A_n``; its weight is
``w_n = 1 / min_a |σ_{0,n}(a)|``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import AmbiguousDecompositionError, SAdicError, WindowTooShortError
from .tree import WeightedTree, from_children, reduce
from .words import Window

Edge = tuple[str, int, str]  # (source letter, position label, range letter)


@dataclass(frozen=True)
class Substitution:
    """A morphism ``letter -> nonempty word``; letters are single characters."""

    images: Mapping[str, str]
    name: str = ""

    def __post_init__(self):
        if not self.images:
            raise SAdicError("substitution has an empty domain")
        for a, w in self.images.items():
            if len(a) != 1:
                raise SAdicError(f"letters must be single characters, got {a!r}")
            if not w:
                raise SAdicError(f"image of {a!r} is empty")
        object.__setattr__(self, "images", dict(sorted(self.images.items())))

    def __getitem__(self, a: str) -> str:
        return self.images[a]

    @property
    def domain(self) -> tuple[str, ...]:
        return tuple(self.images)

    @property
    def target(self) -> tuple[str, ...]:
        return tuple(sorted({c for w in self.images.values() for c in w}))

    def apply(self, word: str) -> str:
        try:
            return "".join(self.images[c] for c in word)
        except KeyError as exc:
            raise SAdicError(f"letter {exc.args[0]!r} is outside the domain of {self.name or 'σ'}") from None

    def after(self, inner: "Substitution") -> "Substitution":
        """``self ∘ inner``."""
        return Substitution({a: self.apply(w) for a, w in inner.images.items()})

    def edges(self) -> list[Edge]:
        return [(c, pos, b) for b, w in self.images.items() for pos, c in enumerate(w)]

    def incidence(self, rows: Sequence[str]) -> np.ndarray:
        """``M[i, j]`` = occurrences of ``rows[i]`` in the image of the ``j``-th domain letter."""
        M = np.zeros((len(rows), len(self.images)), dtype=object)
        idx = {a: i for i, a in enumerate(rows)}
        for j, w in enumerate(self.images.values()):
            for c in w:
                M[idx[c], j] += 1
        return M


@dataclass(frozen=True)
class SAdicSystem:
    """A schedule of substitutions, either periodic (infinite) or explicit (finite)."""

    substitutions: Mapping[str, Substitution]
    schedule: tuple[str, ...]
    periodic: bool = True
    proper: tuple[str, str] | None = None  # claimed (l, r)
    s0: int | None = None  # claimed primitivity window

    def __post_init__(self):
        if not self.schedule:
            raise SAdicError("empty schedule")
        for name in self.schedule:
            if name not in self.substitutions:
                raise SAdicError(f"schedule refers to unknown substitution {name!r}")
        span = len(self.schedule) + (1 if self.periodic else 0)
        for n in range(span - 1):
            inner, outer = self.sigma(n + 1), self.sigma(n)
            if set(inner.target) != set(outer.domain):
                raise SAdicError(
                    f"σ_{n + 1} produces letters {inner.target} but σ_{n} is defined on {outer.domain}"
                )

    @property
    def truncation(self) -> int | None:
        return None if self.periodic else len(self.schedule)

    def sigma(self, n: int) -> Substitution:
        if n < 0:
            raise SAdicError("negative level")
        if self.periodic:
            return self.substitutions[self.schedule[n % len(self.schedule)]]
        if n >= len(self.schedule):
            raise SAdicError(f"level {n} is beyond the truncation {len(self.schedule)}")
        return self.substitutions[self.schedule[n]]

    def alphabet(self, n: int) -> tuple[str, ...]:
        """``A_n``: the target alphabet of ``σ_n`` (or the domain of ``σ_{n-1}`` past the end)."""
        if self.truncation is not None and n == self.truncation:
            return self.sigma(n - 1).domain
        return self.sigma(n).target

    def used(self) -> list[Substitution]:
        return [self.substitutions[k] for k in dict.fromkeys(self.schedule)]

    def lengths(self, n: int) -> dict[str, int]:
        """``|σ_{0,n}(a)|`` for every ``a`` in ``A_n``."""
        cur = {a: 1 for a in self.alphabet(0)}
        for k in range(n):
            s = self.sigma(k)
            cur = {b: sum(cur[c] for c in w) for b, w in s.images.items()}
        return cur

    def weights(self, depth: int) -> list[float]:
        """``w_0, ..., w_{depth-1}``."""
        out = []
        cur = {a: 1 for a in self.alphabet(0)}
        for k in range(depth):
            out.append(1.0 / min(cur.values()))
            if k == depth - 1:
                break
            s = self.sigma(k)
            cur = {b: sum(cur[c] for c in w) for b, w in s.images.items()}
        return out

    # -- config ----------------------------------------------------------

    @classmethod
    def from_dict(cls, cfg: dict) -> "SAdicSystem":
        subs = {}
        for item in cfg.get("substitutions", []):
            name = item["name"]
            subs[name] = Substitution({str(k): str(v) for k, v in item["map"].items()}, name)
        sched = cfg.get("schedule", {"type": "periodic", "period": list(subs)})
        kind = sched.get("type", "periodic")
        if kind == "periodic":
            seq, periodic = tuple(sched["period"]), True
        elif kind == "explicit":
            seq, periodic = tuple(sched["sequence"]), False
        else:
            raise SAdicError(f"unknown schedule type {kind!r}")
        alph = cfg.get("alphabets")
        if alph:
            letters = {c for part in alph for c in part}
            for sub in subs.values():
                if not set(sub.domain) | set(sub.target) <= letters:
                    raise SAdicError(f"substitution {sub.name!r} uses letters outside {sorted(letters)}")
        proper = tuple(cfg["proper"]) if cfg.get("proper") else None
        return cls(subs, seq, periodic, proper, cfg.get("s0"))

    def to_dict(self) -> dict:
        sched = (
            {"type": "periodic", "period": list(self.schedule)}
            if self.periodic
            else {"type": "explicit", "sequence": list(self.schedule)}
        )
        out = {
            "substitutions": [{"name": k, "map": dict(v.images)} for k, v in self.substitutions.items()],
            "schedule": sched,
        }
        if self.proper:
            out["proper"] = list(self.proper)
        if self.s0 is not None:
            out["s0"] = self.s0
        return out

    @classmethod
    def load(cls, path: str | Path) -> "SAdicSystem":
        return cls.from_dict(json.loads(Path(path).read_text()))


def constant_system(images: Mapping[str, str], name: str = "sigma", **kw) -> SAdicSystem:
    return SAdicSystem({name: Substitution(images, name)}, (name,), True, **kw)


def compose(system: SAdicSystem, n: int, m: int) -> Substitution:
    """``σ_{n,m} = σ_n ∘ ... ∘ σ_{m-1}`` for ``n < m``."""
    if not 0 <= n < m:
        raise SAdicError(f"need 0 <= n < m, got n={n}, m={m}")
    if system.truncation is not None and m > system.truncation:
        raise SAdicError(f"m={m} is beyond the truncation {system.truncation}")
    out = system.sigma(m - 1)
    for k in range(m - 2, n - 1, -1):
        out = system.sigma(k).after(out)
    return out


def check_proper(system: SAdicSystem) -> tuple[bool, str | None, str | None]:
    """Common first letter ``l`` and last letter ``r`` of every image, if any."""
    firsts = {w[0] for s in system.used() for w in s.images.values()}
    lasts = {w[-1] for s in system.used() for w in s.images.values()}
    if len(firsts) == 1 and len(lasts) == 1:
        return True, firsts.pop(), lasts.pop()
    return False, None, None


def _window_incidence(system: SAdicSystem, r: int, m: int) -> np.ndarray:
    """Incidence matrix of ``σ_{r,m}``: rows ``A_r``, columns ``A_m``."""
    M = None
    for k in range(r, m):
        Mk = system.sigma(k).incidence(system.alphabet(k))
        M = Mk if M is None else M.dot(Mk)
    return M


def check_primitive(system: SAdicSystem, s0: int, depth: int | None = None) -> bool:
    """Every letter of ``A_r`` occurs in every ``σ_{r,r+s0}(a)`` for all tested ``r``."""
    if s0 < 1:
        raise SAdicError("s0 must be positive")
    if depth is None:
        depth = system.truncation if system.truncation is not None else len(system.schedule) + s0
    if depth < s0:
        raise SAdicError(f"truncation {depth} is shorter than the window {s0}")
    for r in range(depth - s0 + 1):
        if np.any(_window_incidence(system, r, r + s0) == 0):
            return False
    return True


def durand_ratio(system: SAdicSystem, s0: int, depth: int) -> dict:
    """Largest ``|σ_{r,s+1}(b)| / |σ_{r,s+1}(c)|`` over windows with ``s - r >= s0``.

    Reported per window length so that growth with the window would show.
    """
    by_len: dict[int, float] = {}
    for r in range(depth):
        for m in range(r + s0 + 1, depth + 1):
            col = _window_incidence(system, r, m).sum(axis=0)
            ratio = max(col) / min(col)
            by_len[m - r] = max(by_len.get(m - r, 0.0), float(ratio))
    return {"K": max(by_len.values()) if by_len else 1.0, "by_window": dict(sorted(by_len.items()))}


def prefix_spread(system: SAdicSystem, depth: int) -> float:
    """Largest ``max_b |σ_{0,n}(b)| / min_c |σ_{0,n}(c)|`` for ``n <= depth``."""
    out = 1.0
    for n in range(depth + 1):
        L = system.lengths(n).values()
        out = max(out, max(L) / min(L))
    return out


def weight_decay(system: SAdicSystem, s0: int, k_max: int) -> list[dict]:
    """``w_{k*s0}`` against ``2^-k`` for ``k = 0..k_max``."""
    w = system.weights(k_max * s0 + 1)
    return [
        {"k": k, "level": k * s0, "weight": w[k * s0], "bound": 2.0**-k, "ok": w[k * s0] <= 2.0**-k}
        for k in range(k_max + 1)
    ]


# -- Bratteli diagrams -----------------------------------------------------


@dataclass(frozen=True)
class BratteliDiagram:
    levels: tuple[tuple[str, ...], ...]  # A_0 ... A_{depth-1}
    edges: tuple[tuple[Edge, ...], ...]  # edges[n] joins level n to level n+1
    weights: tuple[float, ...]  # w_0 ... w_{depth-1}

    @property
    def depth(self) -> int:
        return len(self.levels)

    def out_edges(self, n: int, a: str) -> list[Edge]:
        return [e for e in self.edges[n] if e[0] == a]


def build_bratteli(system: SAdicSystem, depth: int) -> BratteliDiagram:
    """Diagram with ``depth`` vertex levels (``depth - 1`` edge levels)."""
    if depth < 1:
        raise SAdicError("depth must be at least 1")
    if system.truncation is not None and depth > system.truncation + 1:
        raise SAdicError(f"depth {depth} exceeds the truncation {system.truncation}")
    levels = tuple(system.alphabet(n) for n in range(depth))
    edges = tuple(tuple(system.sigma(n).edges()) for n in range(depth - 1))
    return BratteliDiagram(levels, edges, tuple(system.weights(depth)))


def diagram_to_tree(diagram: BratteliDiagram, reduced: bool = True) -> WeightedTree:
    """Tree of finite paths: an artificial root, one vertex per letter of ``A_0``,
    then every path extended one edge at a time. A path ending on level ``n``
    has weight ``w_n``.
    """
    children: list[list[int]] = [[]]
    weights = [1.0]
    frontier = []
    for a in diagram.levels[0]:
        children.append([])
        weights.append(diagram.weights[0])
        children[0].append(len(children) - 1)
        frontier.append((len(children) - 1, a))
    for n in range(diagram.depth - 1):
        out_by_source: dict[str, list[Edge]] = {}
        for e in sorted(diagram.edges[n], key=lambda e: (e[2], e[1])):
            out_by_source.setdefault(e[0], []).append(e)
        nxt = []
        for u, a in frontier:
            for e in out_by_source.get(a, []):
                children.append([])
                weights.append(diagram.weights[n + 1])
                children[u].append(len(children) - 1)
                nxt.append((len(children) - 1, e[2]))
        frontier = nxt
    tree = from_children(children, weights, max_depth=diagram.depth)
    return reduce(tree) if reduced else tree


# -- paths and words -------------------------------------------------------


def _check_path(system: SAdicSystem, path: Sequence[Edge]) -> None:
    for k, (a, l, b) in enumerate(path):
        img = system.sigma(k)[b] if b in system.sigma(k).images else None
        if img is None or not 0 <= l < len(img) or img[l] != a:
            raise SAdicError(f"edge {k} = {(a, l, b)} is not an edge of level {k}")
        if k and path[k - 1][2] != a:
            raise SAdicError(f"edges {k - 1} and {k} do not connect")


def random_path(system: SAdicSystem, length: int, rng: np.random.Generator, start: str | None = None) -> tuple[Edge, ...]:
    """Climb ``length`` levels choosing each outgoing edge uniformly."""
    a = start if start is not None else system.alphabet(0)[int(rng.integers(len(system.alphabet(0))))]
    path = []
    for k in range(length):
        options = [e for e in system.sigma(k).edges() if e[0] == a]
        e = options[int(rng.integers(len(options)))]
        path.append(e)
        a = e[2]
    return tuple(path)


def path_to_word(system: SAdicSystem, path: Sequence[Edge], n: int) -> Window:
    """The window ``σ_{0,n-1}(r) σ_{0,n}(a_n) σ_{0,n-1}(l)`` determined by the first ``n`` edges."""
    ok, l, r = check_proper(system)
    if not ok:
        raise SAdicError("path_to_word needs a proper system")
    if not 1 <= n <= len(path):
        raise SAdicError(f"need 1 <= n <= path length {len(path)}, got {n}")
    _check_path(system, path[:n])
    lengths = {a: 1 for a in system.alphabet(0)}
    pos = 0
    for k in range(n):
        a, lab, b = path[k]
        img = system.sigma(k)[b]
        pos += sum(lengths[c] for c in img[:lab])
        if k < n - 1:
            lengths = {c: sum(lengths[x] for x in w) for c, w in system.sigma(k).images.items()}
    a_n = path[n - 1][2]
    left = compose(system, 0, n - 1)[r] if n > 1 else r
    right = compose(system, 0, n - 1)[l] if n > 1 else l
    middle = compose(system, 0, n)[a_n]
    return Window(left + middle + right, len(left) + pos)


def _count_parses(x: str, sub: Substitution):
    """Parse counts of ``x`` as (proper suffix)(images ...)(proper prefix).

    Either end piece may be empty. ``fwd[p]`` counts ways to reach a block
    boundary at ``p``, ``bwd[p]`` ways to finish from there.
    """
    N = len(x)
    images = list(sub.images.values())
    suffixes = {w[i:] for w in images for i in range(1, len(w))} | {""}
    prefixes = {w[:i] for w in images for i in range(1, len(w))} | {""}
    bwd = [0] * (N + 1)
    for p in range(N, -1, -1):
        tot = 1 if x[p:] in prefixes else 0
        for w in images:
            if x.startswith(w, p):
                tot += bwd[p + len(w)]
        bwd[p] = tot
    fwd = [0] * (N + 1)
    for s in suffixes:
        if x.startswith(s):
            fwd[len(s)] += 1
    total = sum(fwd[p] * bwd[p] for p in range(N + 1))
    for p in range(N + 1):
        if fwd[p]:
            for w in images:
                if x.startswith(w, p):
                    fwd[p + len(w)] += fwd[p]
    return fwd, bwd, total


def desubstitute(word: Window, sub: Substitution) -> tuple[Edge, Window]:
    """One de-substitution step: the block around index 0 and the coarser window.

    Only blocks shared by every parse of the window are kept.
    """
    x = word.letters
    fwd, bwd, total = _count_parses(x, sub)
    if total == 0:
        raise SAdicError("window admits no decomposition into images")
    blocks = []  # (start, letter, image) present in every parse
    for p in range(len(x)):
        if not fwd[p]:
            continue
        for b, w in sub.images.items():
            q = p + len(w)
            if x.startswith(w, p) and fwd[p] * bwd[q] == total:
                blocks.append((p, b, w))
    hit = [blk for blk in blocks if blk[0] <= word.origin < blk[0] + len(blk[2])]
    if not hit:
        covered = any(
            fwd[p] and x.startswith(w, p) and bwd[p + len(w)]
            for p in range(max(0, word.origin - len(x)), word.origin + 1)
            for w in sub.images.values()
            if p + len(w) > word.origin
        )
        if not covered:
            raise WindowTooShortError("index 0 falls in a partial block at the window edge")
        raise AmbiguousDecompositionError(f"unique decomposition violated: {total} parses disagree around index 0")
    p0, b0, w0 = hit[0]
    run = [hit[0]]
    by_start = {p: (p, b, w) for p, b, w in blocks}
    q = p0 + len(w0)
    while q in by_start:
        run.append(by_start[q])
        q += len(by_start[q][2])
    ends = {p + len(w): (p, b, w) for p, b, w in blocks}
    head = []
    p = p0
    while p in ends:
        head.append(ends[p])
        p = ends[p][0]
    run = head[::-1] + run
    letters = "".join(b for _, b, _ in run)
    origin = next(i for i, blk in enumerate(run) if blk[0] == p0)
    edge = (x[word.origin], word.origin - p0, b0)
    return edge, Window(letters, origin)


def word_to_path(system: SAdicSystem, word: Window, n: int) -> tuple[Edge, ...]:
    """Recover the first ``n`` edges by repeated de-substitution."""
    if not 0 <= word.origin < len(word):
        raise WindowTooShortError("index 0 lies outside the window")
    path = []
    cur = word
    for k in range(n):
        edge, cur = desubstitute(cur, system.sigma(k))
        path.append(edge)
    return tuple(path)


# -- distance comparison ---------------------------------------------------


@dataclass
class SandwichReport:
    pairs: int
    C: int
    K: float
    max_word_over_w: float
    max_w_over_word: float
    bound_upper: float  # d_word <= bound_upper * d_w
    bound_lower: float  # d_w <= bound_lower * d_word
    holds: bool
    skipped: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def sandwich_check(system: SAdicSystem, depth: int, n_pairs: int, seed: int) -> SandwichReport:
    """Compare the path metric with the combinatorial metric of the reconstructed words.

    Pairs share their first ``n`` edges and then split; ``d_w = w_n``.
    ``K`` is the larger of the empirical Durand ratio and the spread of
    ``|σ_{0,n}|`` on the truncation.
    """
    rng = np.random.default_rng(seed)
    s0 = system.s0 or 1
    K = max(durand_ratio(system, s0, depth)["K"], prefix_spread(system, depth))
    C = max(len(w) for s in system.used() for w in s.images.values())
    w = system.weights(depth + 1)
    up = lo = 0.0
    skipped = done = 0
    for _ in range(n_pairs):
        n = int(rng.integers(0, depth - 1))
        g1 = random_path(system, depth, rng)
        base = g1[:n]
        a = g1[n][0]
        alts = [e for e in system.sigma(n).edges() if e[0] == a and e != g1[n]]
        if not alts:
            skipped += 1
            continue
        e = alts[int(rng.integers(len(alts)))]
        g2 = base + (e,)
        top = e[2]
        for k in range(n + 1, depth):
            opts = [x for x in system.sigma(k).edges() if x[0] == top]
            x = opts[int(rng.integers(len(opts)))]
            g2 += (x,)
            top = x[2]
        rad = path_to_word(system, g1, depth).agreement_radius(path_to_word(system, g2, depth))
        if rad is None:
            skipped += 1
            continue
        d_word = 1.0 / (rad + 1) if rad >= 0 else 1.0
        d_w = w[n]
        up = max(up, d_word / d_w)
        lo = max(lo, d_w / d_word)
        done += 1
    bu, bl = C * K, C * K * (K + 1)
    return SandwichReport(done, C, K, up, lo, bu, bl, up <= bu and lo <= bl, skipped)
