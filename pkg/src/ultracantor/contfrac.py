"""Continued fractions for three kinds of number sources.

* :class:`QuadraticIrrational` -- ``(p + q*sqrt(d)) / r`` with exact integer
  arithmetic; its expansion is computed by the Gauss map and is eventually
  periodic.
* :class:`EulerFraction` -- ``e - 2``, whose quotients follow a known pattern.
* :class:`FloatSource` -- an arbitrary float, expanded with a short
  reliability horizon.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence, Union

from .errors import DomainError, RationalInputError


def _floor_sqrt_multiple(q: int, d: int) -> int:
    """floor(q * sqrt(d)) for non-square d > 0."""
    s = math.isqrt(q * q * d)
    if q >= 0:
        return s
    return -s - 1  # q*sqrt(d) is irrational, so it is never an integer


@dataclass(frozen=True)
class QuadraticIrrational:
    """The number ``(p + q*sqrt(d)) / r`` stored in lowest terms with ``r > 0``."""

    p: int
    q: int
    d: int
    r: int

    def __post_init__(self):
        if self.d <= 1 or math.isqrt(self.d) ** 2 == self.d:
            raise RationalInputError(f"rational input: sqrt({self.d}) is rational")
        if self.q == 0:
            raise RationalInputError("rational input: zero irrational part")
        if self.r == 0:
            raise ZeroDivisionError("zero denominator")

    @classmethod
    def make(cls, p: int, q: int, d: int, r: int) -> "QuadraticIrrational":
        if r < 0:
            p, q, r = -p, -q, -r
        g = math.gcd(math.gcd(p, q), r)
        return cls(p // g, q // g, d, r // g)

    def floor(self) -> int:
        return (self.p + _floor_sqrt_multiple(self.q, self.d)) // self.r

    def __float__(self) -> float:
        return (self.p + self.q * math.sqrt(self.d)) / self.r

    def add_int(self, k: int) -> "QuadraticIrrational":
        return QuadraticIrrational.make(self.p + k * self.r, self.q, self.d, self.r)

    def reciprocal(self) -> "QuadraticIrrational":
        # r / (p + q√d) = r (p - q√d) / (p² - q² d)
        den = self.p * self.p - self.q * self.q * self.d
        return QuadraticIrrational.make(self.r * self.p, -self.r * self.q, self.d, den)

    def negate(self) -> "QuadraticIrrational":
        return QuadraticIrrational.make(-self.p, -self.q, self.d, self.r)

    def mobius(self, a: int, b: int, c: int, e: int) -> "QuadraticIrrational":
        """(a*x + b) / (c*x + e) for integers a, b, c, e."""
        # numerator (a p + b r + a q √d)/r, denominator (c p + e r + c q √d)/r
        n0, n1 = a * self.p + b * self.r, a * self.q
        m0, m1 = c * self.p + e * self.r, c * self.q
        # (n0 + n1√d)/(m0 + m1√d) = (n0 + n1√d)(m0 - m1√d)/(m0² - m1² d)
        den = m0 * m0 - m1 * m1 * self.d
        if den == 0:
            raise ZeroDivisionError("degenerate Mobius transform")
        p = n0 * m0 - n1 * m1 * self.d
        q = n1 * m0 - n0 * m1
        return QuadraticIrrational.make(p, q, self.d, den)

    def sign_of_shift(self, num: int, den: int) -> int:
        """Sign of ``num/den - self`` decided with integers only (den > 0)."""
        # num/den - (p + q√d)/r  ~  num*r - den*p - den*q√d   (r, den > 0)
        a = num * self.r - den * self.p
        b = -den * self.q
        # sign of a + b√d
        if a >= 0 and b >= 0:
            return 1 if (a or b) else 0
        if a <= 0 and b <= 0:
            return -1
        lhs, rhs = a * a, b * b * self.d
        if a > 0:
            return 1 if lhs > rhs else -1
        return 1 if rhs > lhs else -1

    @classmethod
    def from_periodic(cls, prefix: Sequence[int], period: Sequence[int]) -> "QuadraticIrrational":
        """Value of ``[prefix; (period) repeated]``; ``prefix[0]`` is the integer part."""
        if not period:
            raise RationalInputError("rational input: empty period")
        # y = [period; y]: Möbius fixed point
        P, Pm, Q, Qm = 1, 0, 0, 1
        for a in period:
            P, Pm = a * P + Pm, P
            Q, Qm = a * Q + Qm, Q
        # y = (P y + Pm)/(Q y + Qm)  ->  Q y² + (Qm - P) y - Pm = 0
        A, B, C = Q, Qm - P, -Pm
        disc = B * B - 4 * A * C
        s = math.isqrt(disc)
        if s * s == disc:
            raise RationalInputError("rational input: periodic part is rational")
        y = cls.make(-B, 1, disc, 2 * A)  # positive root
        # x = a0 + 1/(a1 + ... + 1/(ak + 1/y))
        x = y
        for a in reversed(prefix[1:]):
            x = x.reciprocal().add_int(a)
        x = x.reciprocal().add_int(prefix[0]) if prefix else x
        return x


@dataclass(frozen=True)
class EulerFraction:
    """The fractional part ``e - 2``: quotients 1, 2, 1, 1, 4, 1, 1, 6, ..."""

    def quotient(self, n: int) -> int:
        if n == 0:
            return 0
        return 2 * (n + 1) // 3 if n % 3 == 2 else 1

    def __float__(self) -> float:
        return math.e - 2


@dataclass(frozen=True)
class FloatSource:
    value: float
    horizon: int = 15

    def __float__(self) -> float:
        return self.value


Source = Union[QuadraticIrrational, EulerFraction, FloatSource]


GOLDEN = QuadraticIrrational.make(-1, 1, 5, 2)  # (√5 - 1)/2
SQRT2 = QuadraticIrrational.make(-1, 1, 2, 1)  # √2 - 1
EULER = EulerFraction()

_NAMED = {"golden": GOLDEN, "sqrt2": SQRT2, "e": EULER}
_QUAD_RE = re.compile(
    r"^\(?\s*([+-]?\d+)?\s*([+-])?\s*(\d+)?\s*\*?\s*(?:√|sqrt)\s*\(?(\d+)\)?\s*\)?\s*(?:/\s*(\d+))?$"
)


def parse_source(text: str) -> Source:
    """Parse ``golden``, ``sqrt2``, ``e``, ``(p+q√d)/r`` or a float literal."""
    key = text.strip().lower()
    if key in _NAMED:
        return _NAMED[key]
    m = _QUAD_RE.match(text.strip())
    if m and ("√" in text or "sqrt" in key):
        p_txt, sign, q_txt, d_txt, r_txt = m.groups()
        p = int(p_txt) if p_txt else 0
        q = int(q_txt) if q_txt else 1
        if sign == "-":
            q = -q
        r = int(r_txt) if r_txt else 1
        return QuadraticIrrational.make(p, q, int(d_txt), r)
    try:
        return FloatSource(float(text))
    except ValueError as exc:
        raise DomainError(f"cannot parse number source {text!r}") from exc


def source_name(src: Source) -> str:
    if isinstance(src, QuadraticIrrational):
        return f"({src.p}+{src.q}*sqrt({src.d}))/{src.r}"
    if isinstance(src, EulerFraction):
        return "e-2"
    return repr(src.value)


@dataclass(frozen=True)
class ContinuedFraction:
    """``a0 + 1/(a1 + 1/(a2 + ...))`` truncated to ``len(quotients)`` terms.

    ``period`` is ``(start, length)`` for eventually periodic quadratic
    expansions (quotient ``a_n`` for ``n >= start`` repeats with that length);
    ``reliable`` is the number of trustworthy terms for float sources.
    """

    a0: int
    quotients: tuple[int, ...]
    kind: str
    period: tuple[int, int] | None = None
    reliable: int | None = None

    def term(self, n: int) -> int:
        return self.a0 if n == 0 else self.quotients[n - 1]

    def convergents(self) -> list[tuple[int, int]]:
        out = []
        p, pm, q, qm = self.a0, 1, 1, 0
        out.append((p, q))
        for a in self.quotients:
            p, pm = a * p + pm, p
            q, qm = a * q + qm, q
            out.append((p, q))
        return out

    def value(self) -> Fraction:
        p, q = self.convergents()[-1]
        return Fraction(p, q)


def _gauss_quadratic(x: QuadraticIrrational) -> Iterator[tuple[int, QuadraticIrrational]]:
    while True:
        a = x.floor()
        frac = x.add_int(-a)
        yield a, x
        x = frac.reciprocal()


def cf_expand(source: Source, depth: int) -> ContinuedFraction:
    """Expand ``source`` to ``depth`` partial quotients after ``a0``."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if isinstance(source, QuadraticIrrational):
        quotients: list[int] = []
        seen: dict[QuadraticIrrational, int] = {}
        period = None
        gen = _gauss_quadratic(source)
        a0, _ = next(gen)
        for n in range(1, depth + 1):
            a, state = next(gen)
            if period is None:
                if state in seen:
                    period = (seen[state], n - seen[state])
                else:
                    seen[state] = n
            quotients.append(a)
        if period is None:
            # keep iterating states (without storing quotients) until the cycle shows
            n = depth + 1
            while period is None:
                a, state = next(gen)
                if state in seen:
                    period = (seen[state], n - seen[state])
                seen[state] = n
                n += 1
        return ContinuedFraction(a0, tuple(quotients), "quadratic", period=period)
    if isinstance(source, EulerFraction):
        return ContinuedFraction(0, tuple(source.quotient(n) for n in range(1, depth + 1)), "pattern")
    if isinstance(source, FloatSource):
        x = Fraction(source.value)
        a0 = math.floor(x)
        x -= a0
        quotients = []
        for n in range(1, depth + 1):
            if x == 0:
                if n <= source.horizon:
                    raise RationalInputError("rational input: Gauss map reached 0")
                break
            x = 1 / x
            a = math.floor(x)
            quotients.append(a)
            x -= a
        return ContinuedFraction(a0, tuple(quotients), "float", reliable=min(source.horizon, len(quotients)))
    raise TypeError(f"unsupported source {source!r}")


def rational_approximation(source: Source, min_denominator: int) -> tuple[int, int, Fraction]:
    """A convergent ``p/q`` with ``q >= min_denominator`` and a bound on ``|alpha - p/q|``.

    The bound is ``1/(q*q_next)`` for exact sources; for floats it is the
    representation error of the float itself.
    """
    if isinstance(source, FloatSource):
        fr = Fraction(source.value)
        return fr.numerator, fr.denominator, Fraction(abs(source.value)) * Fraction(1, 2**52)
    depth = 8
    while True:
        cf = cf_expand(source, depth)
        conv = cf.convergents()
        for k in range(len(conv) - 1):
            p, q = conv[k]
            if q >= min_denominator:
                return p, q, Fraction(1, q * conv[k + 1][1])
        depth *= 2


def bounded_type_verdict(cf: ContinuedFraction, bound_window: int | None = None) -> dict:
    """Decide whether the partial quotients are bounded.

    Quadratic sources are periodic, hence bounded (definitive). The pattern of
    ``e`` grows without bound (definitive). Float sources only support an
    observation up to their horizon.
    """
    window = len(cf.quotients) if bound_window is None else min(bound_window, len(cf.quotients))
    seen = cf.quotients[:window]
    max_seen = max(seen) if seen else cf.a0
    if cf.kind == "quadratic":
        return {"bounded": True, "max_quotient": max_seen, "verdict": "embeddable", "definitive": True}
    if cf.kind == "pattern":
        return {"bounded": False, "max_quotient": max_seen, "verdict": "not embeddable", "definitive": True}
    reliable = cf.reliable if cf.reliable is not None else window
    max_rel = max(cf.quotients[: min(window, reliable)], default=cf.a0)
    return {"bounded": "unknown", "max_quotient": max_rel, "verdict": "unknown", "definitive": False}
