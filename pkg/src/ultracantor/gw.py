"""Galton-Watson random trees with multiplicative random weights.

Every vertex independently gets ``ξ ~ p`` children (``p`` lives on
``{2, 3, ...}``, so there is no extinction and no unary vertex) and each child
``v`` of ``u`` gets ``κ(v) = λ_v κ(u)`` with ``λ_v ~ ρ`` on ``(0, 1]``.

Randomness is drawn from Philox streams keyed by ``(seed, trial, generation,
purpose)`` and converted to floats with integer arithmetic only, so a tree
depends on nothing but its key.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import DistributionError
from .hausdorff import estimate_dimension
from .tree import WeightedTree, from_children

DEFAULT_CAP = 10_000_000
_TWO53 = 2.0**-53


# -- distributions -----------------------------------------------------------


@dataclass(frozen=True)
class OffspringDist:
    values: tuple[int, ...]
    probs: tuple[float, ...]
    truncation_error: float = 0.0  # mass dropped by truncating an infinite tail

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise DistributionError("offspring values and probabilities must match")
        if min(self.values) < 2:
            raise DistributionError("offspring counts must be at least 2")
        if any(p < 0 for p in self.probs) or abs(math.fsum(self.probs) - 1) > 1e-12:
            raise DistributionError("offspring probabilities must be non-negative and sum to 1")

    @classmethod
    def dirac(cls, k: int) -> "OffspringDist":
        return cls((k,), (1.0,))

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "OffspringDist":
        n = hi - lo + 1
        if n < 1:
            raise DistributionError(f"empty range {lo}..{hi}")
        return cls(tuple(range(lo, hi + 1)), (1.0 / n,) * n)

    @classmethod
    def geometric(cls, q: float, quantile: float = 1 - 1e-9) -> "OffspringDist":
        """``p_k ∝ q^(k-2)`` on ``k >= 2``, cut at ``quantile`` and renormalized."""
        if not 0 <= q < 1:
            raise DistributionError("geometric parameter must lie in [0, 1)")
        vals, probs, acc = [], [], 0.0
        k = 2
        while acc < quantile:
            pk = (1 - q) * q ** (k - 2)
            vals.append(k)
            probs.append(pk)
            acc += pk
            k += 1
        total = math.fsum(probs)
        return cls(tuple(vals), tuple(p / total for p in probs), truncation_error=1 - total)

    @property
    def mean(self) -> float:
        return math.fsum(k * p for k, p in zip(self.values, self.probs))

    @property
    def variance(self) -> float:
        m = self.mean
        return math.fsum(p * (k - m) ** 2 for k, p in zip(self.values, self.probs))

    def pgf(self, x: float) -> float:
        """``P(x) = Σ p_k x^k``."""
        return math.fsum(p * x**k for k, p in zip(self.values, self.probs))

    def sample(self, uniforms: np.ndarray) -> np.ndarray:
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, uniforms, side="right")
        return np.asarray(self.values, dtype=np.int64)[idx]

    def label(self) -> str:
        return "table:" + ",".join(f"{k}={p!r}" for k, p in zip(self.values, self.probs))


@dataclass(frozen=True)
class WeightDist:
    """``dirac`` (one value), ``uniform`` on ``(a, 1]``, or a finite ``table``."""

    kind: str
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    low: float = 0.0

    def __post_init__(self):
        if self.kind == "uniform":
            if not 0 <= self.low < 1:
                raise DistributionError("uniform weights need 0 <= a < 1")
        elif self.kind in ("dirac", "table"):
            if not self.values or len(self.values) != len(self.probs):
                raise DistributionError("weight table is empty or mismatched")
            if any(not 0 < v <= 1 for v in self.values):
                raise DistributionError("weights must lie in (0, 1]")
            if abs(math.fsum(self.probs) - 1) > 1e-12:
                raise DistributionError("weight probabilities must sum to 1")
            if self.atom_at_one >= 1:
                raise DistributionError("weights equal to 1 almost surely")
        else:
            raise DistributionError(f"unknown weight distribution {self.kind!r}")

    @classmethod
    def dirac(cls, lam: float) -> "WeightDist":
        return cls("dirac", (lam,), (1.0,))

    @classmethod
    def uniform(cls, a: float = 0.0) -> "WeightDist":
        return cls("uniform", low=a)

    @property
    def atom_at_one(self) -> float:
        if self.kind == "uniform":
            return 0.0
        return math.fsum(p for v, p in zip(self.values, self.probs) if v == 1)

    @property
    def degenerate(self) -> bool:
        return self.kind != "uniform" and len({v for v, p in zip(self.values, self.probs) if p > 0}) == 1

    def h(self, s: float) -> float:
        """Mellin transform ``E[λ^s]``."""
        if s < 0:
            raise ValueError("s must be non-negative")
        if self.kind == "uniform":
            a = self.low
            return (1 - a ** (s + 1)) / ((1 - a) * (s + 1))
        return math.fsum(p * v**s for v, p in zip(self.values, self.probs))

    def sample(self, uniforms: np.ndarray) -> np.ndarray:
        if self.kind == "uniform":
            return 1.0 - (1.0 - self.low) * uniforms
        if self.kind == "dirac":
            return np.full(len(uniforms), self.values[0])
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        return np.asarray(self.values)[np.searchsorted(cdf, uniforms, side="right")]

    def label(self) -> str:
        if self.kind == "uniform":
            return f"uniform:{self.low!r},1"
        if self.kind == "dirac":
            return f"dirac:{self.values[0]!r}"
        return "table:" + ",".join(f"{v!r}={p!r}" for v, p in zip(self.values, self.probs))


def _pairs(body: str) -> tuple[list[float], list[float]]:
    keys, vals = [], []
    for item in body.split(","):
        k, _, v = item.partition("=")
        keys.append(float(k))
        vals.append(float(v))
    return keys, vals


def parse_offspring(spec: str) -> OffspringDist:
    """``dirac:3``, ``uniform:2,3``, ``table:2=0.5,3=0.5`` or ``geometric:0.4``."""
    kind, _, body = spec.partition(":")
    try:
        if kind == "dirac":
            return OffspringDist.dirac(int(body))
        if kind == "uniform":
            lo, hi = (int(x) for x in body.split(","))
            return OffspringDist.uniform(lo, hi)
        if kind == "table":
            ks, ps = _pairs(body)
            return OffspringDist(tuple(int(k) for k in ks), tuple(ps))
        if kind == "geometric":
            return OffspringDist.geometric(float(body))
    except ValueError as exc:
        if isinstance(exc, DistributionError):
            raise
        raise DistributionError(f"cannot parse offspring spec {spec!r}: {exc}") from None
    raise DistributionError(f"unknown offspring spec {spec!r}")


def parse_weights(spec: str) -> WeightDist:
    """``dirac:0.5``, ``uniform:a,1`` or ``table:0.5=0.3,0.25=0.7``."""
    kind, _, body = spec.partition(":")
    try:
        if kind == "dirac":
            return WeightDist.dirac(float(body))
        if kind == "uniform":
            a, b = (float(x) for x in body.split(","))
            if b != 1:
                raise DistributionError("uniform weights must have upper end 1")
            return WeightDist.uniform(a)
        if kind == "table":
            vs, ps = _pairs(body)
            return WeightDist("table", tuple(vs), tuple(ps))
    except ValueError as exc:
        if isinstance(exc, DistributionError):
            raise
        raise DistributionError(f"cannot parse weight spec {spec!r}: {exc}") from None
    raise DistributionError(f"unknown weight spec {spec!r}")


# -- closed forms ------------------------------------------------------------


def mellin_h(dist: WeightDist, s: float) -> float:
    return dist.h(s)


def _bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    flo = f(lo)
    for _ in range(400):
        if hi - lo <= tol:
            break
        mid = (lo + hi) / 2
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return (lo + hi) / 2


def solve_s_m(p: OffspringDist, rho: WeightDist) -> float:
    """Root of ``m h(s) = 1``."""
    m = p.mean
    if rho.atom_at_one >= 1 / m:
        raise DistributionError(
            f"hypothesis violated: m h(s) stays above m ρ{{1}} = {m * rho.atom_at_one:.6g} >= 1"
        )
    f = lambda s: m * rho.h(s) - 1
    hi = 1.0
    while f(hi) > 0:
        hi *= 2
        if hi > 1e6:
            raise DistributionError("no root of m h(s) = 1 found")
    return _bisect(f, 0.0, hi)


@dataclass(frozen=True)
class Threshold:
    value: float | None
    reason: str = ""


def second_moment_ratio(rho: WeightDist, s: float) -> float:
    """``h(2s) / h(s)^2``, at least 1 by Cauchy-Schwarz."""
    return rho.h(2 * s) / rho.h(s) ** 2


def solve_t_m(p: OffspringDist, rho: WeightDist) -> Threshold:
    """Root of ``h(2s) = m h(s)^2``, or no value when it does not exist."""
    m = p.mean
    if rho.degenerate:
        return Threshold(None, "single-valued weights make h(2s) = h(s)^2 for every s")
    sup = math.inf if rho.atom_at_one == 0 else 1 / rho.atom_at_one
    if sup <= m:
        return Threshold(None, f"h(2s)/h(s)^2 stays below its supremum {sup:.6g} <= m")
    f = lambda s: second_moment_ratio(rho, s) - m
    hi = 1.0
    while f(hi) < 0:
        hi *= 2
        if hi > 1e6:
            return Threshold(None, "h(2s)/h(s)^2 did not reach m")
    t = _bisect(f, 0.0, hi)
    return Threshold(t)


def step_variance(p: OffspringDist, rho: WeightDist, s: float) -> float:
    """Variance of one generation's factor ``Σ_children λ^s / (m h(s))``.

    Equals ``(g - 1)/m + σ²/m²`` with ``g = h(2s)/h(s)^2``; at ``g = m`` this is
    ``1 - 1/m + σ²/m²``.
    """
    m = p.mean
    return (second_moment_ratio(rho, s) - 1) / m + p.variance / m**2


def variance_y(p: OffspringDist, rho: WeightDist, s: float, n: int) -> float:
    """Exact ``Var(Y_n(s))``: ``step_variance * Σ_{k<n} (g/m)^k``.

    By total variance, ``Var(Y_{n+1}) = Var(Y_n) + step_variance * (g/m)^n``.
    """
    q = second_moment_ratio(rho, s) / p.mean
    v = step_variance(p, rho, s)
    if abs(q - 1) < 1e-15:
        return v * n
    return v * (1 - q**n) / (1 - q)


def variance_y_stated(p: OffspringDist, rho: WeightDist, s: float, n: int) -> float:
    """``(g/m)^n (1 - (1 - σ²/m)/g)``, the product form usually quoted for ``Var(Y_n(s))``.

    It drops the variance carried over from earlier generations, so it agrees
    with :func:`variance_y` only at ``n = 1``. Kept for comparison.
    """
    g = second_moment_ratio(rho, s)
    m = p.mean
    return (g / m) ** n * (1 - (1 - p.variance / m) / g)


def variance_y_limit(p: OffspringDist, rho: WeightDist, s: float) -> float:
    q = second_moment_ratio(rho, s) / p.mean
    if q >= 1:
        return math.inf
    return step_variance(p, rho, s) / (1 - q)


def variance_w(p: OffspringDist, n: int | None = None) -> float:
    """``Var(W_n)``; ``n=None`` gives the limit ``σ²/(m² - m)``."""
    m, v = p.mean, p.variance
    lim = v / (m * m - m)
    return lim if n is None else lim * (1 - m ** (-n))


def pgf_iterate(p: OffspringDist, x: float, n: int) -> float:
    """``E[x^{Z_n}]`` as the ``n``-fold composition of the generating function."""
    for _ in range(n):
        x = p.pgf(x)
    return x


# -- sampling ----------------------------------------------------------------


@dataclass(frozen=True)
class GWConfig:
    offspring: OffspringDist
    weights: WeightDist
    depth: int
    seed: int = 0
    trials: int = 1
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.depth < 1:
            raise DistributionError("depth must be at least 1")
        if self.trials < 1:
            raise DistributionError("trials must be at least 1")

    def to_dict(self) -> dict:
        return {
            "offspring": self.offspring.label(),
            "weights": self.weights.label(),
            "depth": self.depth,
            "seed": self.seed,
            "trials": self.trials,
            "cap": self.cap,
        }


def suggest_depth(p: OffspringDist, cap: int = DEFAULT_CAP) -> int:
    return int(math.floor(math.log(cap) / math.log(p.mean)))


def _uniforms(seed: int, trial: int, generation: int, purpose: int, n: int) -> np.ndarray:
    """``n`` floats in ``[0, 1)`` from the Philox stream for this key, via 53-bit integers."""
    ss = np.random.SeedSequence([seed, trial, generation, purpose])
    raw = np.random.Philox(ss).random_raw(n)
    return (raw >> np.uint64(11)).astype(np.float64) * _TWO53


@dataclass
class GWSample:
    """One sampled tree stored generation by generation.

    ``offspring[n][i]`` is the child count of the ``i``-th vertex of generation
    ``n``; its children are consecutive in generation ``n + 1``.
    """

    kappa: list[np.ndarray]
    offspring: list[np.ndarray]

    @property
    def depth(self) -> int:
        return len(self.kappa) - 1

    def sizes(self) -> list[int]:
        return [len(k) for k in self.kappa]

    def to_tree(self) -> WeightedTree:
        children: list[list[int]] = []
        weights: list[float] = []
        start = 0
        for n, kap in enumerate(self.kappa):
            nxt = start + len(kap)
            if n < self.depth:
                off = np.concatenate([[0], np.cumsum(self.offspring[n])]) + nxt
                children.extend(list(range(int(off[i]), int(off[i + 1]))) for i in range(len(kap)))
            else:
                children.extend([] for _ in range(len(kap)))
            weights.extend(kap.tolist())
            start = nxt
        return from_children(children, weights, max_depth=self.depth)

    def descendant_ranges(self, generation: int) -> np.ndarray:
        """``[lo, hi)`` in the last generation below each vertex of ``generation``."""
        lo = np.arange(len(self.kappa[generation]) + 1)
        for n in range(generation, self.depth):
            cum = np.concatenate([[0], np.cumsum(self.offspring[n])])
            lo = cum[lo]
        return np.stack([lo[:-1], lo[1:]], axis=1)


def sample_gw(config: GWConfig, trial: int = 0) -> GWSample:
    kappa = [np.ones(1)]
    offspring = []
    total = 1
    for n in range(config.depth):
        xi = config.offspring.sample(_uniforms(config.seed, trial, n, 0, len(kappa[-1])))
        size = int(xi.sum())
        total += size
        if total > config.cap:
            raise DistributionError(f"tree too large: more than {config.cap} vertices by generation {n + 1}")
        lam = config.weights.sample(_uniforms(config.seed, trial, n, 1, size))
        offspring.append(xi)
        kappa.append(np.repeat(kappa[-1], xi) * lam)
    return GWSample(kappa, offspring)


def sample_tree(config: GWConfig, trial: int = 0) -> WeightedTree:
    return sample_gw(config, trial).to_tree()


# -- martingales -------------------------------------------------------------


def _moments(x: np.ndarray) -> dict:
    """Mean, variance and their standard errors over the first axis."""
    T = x.shape[0]
    mean = x.mean(axis=0)
    dev = x - mean
    var = (dev**2).sum(axis=0) / (T - 1)
    m4 = (dev**4).mean(axis=0)
    se_var = np.sqrt(np.maximum(m4 - var**2, 0) / T)
    return {
        "mean": mean.tolist(),
        "se_mean": np.sqrt(var / T).tolist(),
        "var": var.tolist(),
        "se_var": se_var.tolist(),
    }


@dataclass
class MartingaleTrace:
    config: GWConfig
    s_values: tuple[float, ...]
    Z: np.ndarray  # trials x (depth + 1)
    H: dict[float, np.ndarray]
    m: float
    h: dict[float, float]

    @property
    def W(self) -> np.ndarray:
        return self.Z / self.m ** np.arange(self.Z.shape[1])

    def Y(self, s: float) -> np.ndarray:
        return self.H[s] / (self.m * self.h[s]) ** np.arange(self.Z.shape[1])

    def summary(self) -> dict:
        out = {"W": _moments(self.W)}
        for s in self.s_values:
            out[f"Y({s!r})"] = _moments(self.Y(s))
        return out


def martingale_trace(config: GWConfig, s_values: Sequence[float] = ()) -> MartingaleTrace:
    """``Z_n`` and ``H_n^s`` for every generation of ``config.trials`` sampled trees."""
    s_values = tuple(float(s) for s in s_values)
    D, T = config.depth, config.trials
    Z = np.zeros((T, D + 1), dtype=np.int64)
    H = {s: np.zeros((T, D + 1)) for s in s_values}
    for t in range(T):
        smp = sample_gw(config, t)
        for n, kap in enumerate(smp.kappa):
            Z[t, n] = len(kap)
            if n < D and int(smp.offspring[n].sum()) != len(smp.kappa[n + 1]):
                raise AssertionError("generation size does not match the offspring total")
            for s in s_values:
                H[s][t, n] = math.fsum((kap**s).tolist())
    hs = {s: config.weights.h(s) for s in s_values}
    return MartingaleTrace(config, s_values, Z, H, config.offspring.mean, hs)


def simulate_w(config: GWConfig) -> np.ndarray:
    """``W_depth`` for each trial, drawing only child counts."""
    out = np.empty(config.trials)
    m = config.offspring.mean
    for t in range(config.trials):
        z = 1
        for n in range(config.depth):
            z = int(config.offspring.sample(_uniforms(config.seed, t, n, 0, z)).sum())
        out[t] = z / m**config.depth
    return out


# -- Monte Carlo dimension and measure --------------------------------------


@dataclass
class MCDimension:
    estimates: list[float]
    mean: float
    ci95: float
    s_m: float
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def mc_dimension(config: GWConfig, trials: int | None = None, tol: float = 0.01) -> MCDimension:
    n = config.trials if trials is None else trials
    ests, notes = [], []
    for t in range(n):
        tree = sample_tree(config, t)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = estimate_dimension(tree, tol=tol)
        ests.append(rep.s_estimate)
        notes.extend(f"trial {t}: {w}" for w in rep.warnings)
    arr = np.asarray(ests)
    ci = 1.96 * arr.std(ddof=1) / math.sqrt(n) if n > 1 else math.inf
    return MCDimension(ests, float(arr.mean()), float(ci), solve_s_m(config.offspring, config.weights), notes)


@dataclass
class MeasureEstimate:
    generation: int
    s_m: float
    total: list[float]  # μ̂ of the whole boundary, per trial
    masses: list[list[float]]  # μ̂([u]) for u in the chosen generation, per trial
    kappa_s: list[list[float]]  # κ(u)^{s_m} for the same vertices
    additive: bool  # Σ_u μ̂([u]) == μ̂(boundary) exactly in every trial

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def mc_measure(config: GWConfig, generation: int = 1, trials: int | None = None) -> MeasureEstimate:
    """Cylinder masses ``Σ κ(w)^{s_m}`` over the deepest generation below each vertex of ``generation``.

    Masses are summed as exact rationals, so additivity over the cut is checked exactly.
    """
    if not 0 <= generation <= config.depth:
        raise DistributionError("generation outside the sampled depth")
    s = solve_s_m(config.offspring, config.weights)
    n = config.trials if trials is None else trials
    totals, masses, ks = [], [], []
    additive = True
    for t in range(n):
        smp = sample_gw(config, t)
        leaf = [Fraction(x) for x in (smp.kappa[-1] ** s).tolist()]
        exact = [sum(leaf[a:b], Fraction(0)) for a, b in smp.descendant_ranges(generation).tolist()]
        whole = sum(leaf, Fraction(0))
        additive &= sum(exact, Fraction(0)) == whole
        tot = float(whole)
        parts = [float(x) for x in exact]
        totals.append(tot)
        masses.append(parts)
        ks.append((smp.kappa[generation] ** s).tolist())
    return MeasureEstimate(generation, s, totals, masses, ks, bool(additive))


def max_offspring(config: GWConfig, trials: int | None = None) -> list[int]:
    """Largest child count seen in each sampled tree."""
    n = config.trials if trials is None else trials
    return [int(max(x.max() for x in sample_gw(config, t).offspring)) for t in range(n)]
