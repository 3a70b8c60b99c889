"""Continued fractions in the ``1/(r0 + 1/(r1 + ...))`` convention.

Rotation numbers live in [0, 1], so there is no integer part: the
expansion ``[r0, r1, r2, ...]`` stands for ``1/(r0 + 1/(r1 + ...))``.
Convergents follow the usual recurrence with seeds
``(p_-1, q_-1) = (1, 0)`` and ``(p_0, q_0) = (0, 1)``, so that
``p_m/q_m = [r0, ..., r_{m-1}]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence


class ContinuedFractionError(ValueError):
    pass


class InvalidTermError(ContinuedFractionError):
    pass


class InsufficientTermsError(ContinuedFractionError):
    pass


class DomainError(ContinuedFractionError):
    pass


@dataclass(frozen=True)
class ContinuedFraction:
    """Finite expansion, or a truncated prefix of an infinite one.

    ``exhausted=True`` means the listed terms are the whole expansion and
    the value is the rational they spell out. ``exhausted=False`` means
    more terms exist but are unknown.
    """

    terms: tuple[int, ...]
    exhausted: bool = True

    def __post_init__(self):
        terms = tuple(self.terms)
        for t in terms:
            if isinstance(t, bool) or int(t) != t or t < 1:
                raise InvalidTermError(f"continued fraction terms must be integers >= 1, got {t!r}")
        object.__setattr__(self, "terms", tuple(int(t) for t in terms))

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def is_rational(self) -> bool:
        return self.exhausted

    def fraction(self, depth: int | None = None) -> Fraction:
        return fraction(self, depth)

    def value(self, depth: int | None = None) -> float:
        return value(self, depth)

    def to_json(self) -> dict:
        return {"terms": list(self.terms), "exhausted": self.exhausted}

    @classmethod
    def from_json(cls, data: dict) -> "ContinuedFraction":
        return cls(tuple(data["terms"]), bool(data["exhausted"]))

    def __str__(self) -> str:
        body = ",".join(str(t) for t in self.terms)
        return f"[{body}]" if self.exhausted else f"[{body},...]"


@dataclass(frozen=True)
class Convergent:
    p: int
    q: int
    index: int

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.p, self.q)


def from_terms(terms: Iterable[int]) -> ContinuedFraction:
    return ContinuedFraction(tuple(terms), exhausted=True)


def truncated(terms: Iterable[int]) -> ContinuedFraction:
    """Prefix of an infinite expansion (``exhausted=False``)."""
    return ContinuedFraction(tuple(terms), exhausted=False)


def periodic(block: Sequence[int], count: int) -> ContinuedFraction:
    """First ``count`` terms of the periodic expansion ``[block, block, ...]``."""
    if not block:
        raise InvalidTermError("empty period")
    terms = [block[i % len(block)] for i in range(count)]
    return truncated(terms)


def golden(count: int = 64) -> ContinuedFraction:
    return periodic((1,), count)


def silver(count: int = 48) -> ContinuedFraction:
    return periodic((2,), count)


GOLDEN_MEAN = (math.sqrt(5.0) - 1.0) / 2.0
SILVER_MEAN = math.sqrt(2.0) - 1.0


def _check_depth(cf: ContinuedFraction, depth: int | None) -> int:
    if depth is None:
        return len(cf.terms)
    if depth < 0 or depth > len(cf.terms):
        raise InsufficientTermsError(f"depth {depth} exceeds the {len(cf.terms)} available terms")
    return depth


def fraction(cf: ContinuedFraction, depth: int | None = None) -> Fraction:
    """Exact value of the first ``depth`` terms."""
    depth = _check_depth(cf, depth)
    x = Fraction(0)
    for r in reversed(cf.terms[:depth]):
        x = 1 / (r + x)
    return x


def value(cf: ContinuedFraction, depth: int | None = None) -> float:
    return float(fraction(cf, depth))


def convergent_pairs(terms: Iterable[int]) -> Iterator[tuple[int, int]]:
    """Yield ``(p_k, q_k)`` for k = 0, 1, 2, ...; one more pair than terms."""
    p_prev, q_prev = 1, 0
    p, q = 0, 1
    yield p, q
    for r in terms:
        p, p_prev = r * p + p_prev, p
        q, q_prev = r * q + q_prev, q
        yield p, q


def convergents(cf: ContinuedFraction, m: int) -> list[Convergent]:
    """Convergents ``p_k/q_k`` for ``k = 1..m``."""
    if m < 0 or m > len(cf.terms):
        raise InsufficientTermsError(f"need {m} terms, have {len(cf.terms)}")
    out = []
    for k, (p, q) in enumerate(convergent_pairs(cf.terms[:m])):
        if k:
            out.append(Convergent(p, q, k))
    return out


def gauss_shift(cf: ContinuedFraction) -> ContinuedFraction:
    if not cf.terms:
        raise DomainError("the Gauss map is undefined on an empty expansion")
    return ContinuedFraction(cf.terms[1:], cf.exhausted)


def gauss_map(x: float) -> float:
    """``{1/x}`` for x in (0, 1]."""
    if not 0.0 < x <= 1.0:
        raise DomainError(f"Gauss map needs 0 < x <= 1, got {x}")
    y = 1.0 / x
    return y - math.floor(y)


def cf_of_fraction(x: Fraction) -> ContinuedFraction:
    """Exact (finite) expansion of a rational in [0, 1]."""
    if not 0 <= x <= 1:
        raise DomainError(f"rational {x} outside [0, 1]")
    terms = []
    while x:
        y = 1 / x
        r = math.floor(y)
        terms.append(r)
        x = y - r
    return from_terms(terms)


def cf_of_real(x: float, max_terms: int = 64, floor_eps: float = 1e-12) -> ContinuedFraction:
    """Expansion of a binary64 number by iterating ``x -> {1/x}``.

    The iteration runs in exact rational arithmetic on the float's value,
    so rounding never corrupts a term. It stops, marking the result
    exhausted, once the residual drops below ``floor_eps``: terms past that
    point only describe the representation error of ``x``.
    """
    if not 0.0 < x < 1.0:
        raise DomainError(f"cf_of_real needs 0 < x < 1, got {x}")
    residual = Fraction(x)
    terms: list[int] = []
    while len(terms) < max_terms:
        y = 1 / residual
        r = math.floor(y)
        terms.append(r)
        residual = y - r
        if residual < floor_eps:
            return from_terms(terms)
    return truncated(terms)


def common_prefix(a: ContinuedFraction, b: ContinuedFraction) -> tuple[int, ...]:
    out = []
    for x, y in zip(a.terms, b.terms):
        if x != y:
            break
        out.append(x)
    return tuple(out)


def parse_target(text: str) -> ContinuedFraction:
    """Parse a target rotation number given on the command line.

    Accepts ``golden``, ``silver``, ``periodic:1,2`` (repeating block),
    an explicit list like ``1,2,2`` (a rational, exhausted) or the same list
    ending in ``...`` (a truncated irrational prefix).
    """
    text = text.strip()
    if text == "golden":
        return golden()
    if text == "silver":
        return silver()
    if text.startswith("periodic:"):
        block = [int(t) for t in text[len("periodic:"):].split(",") if t.strip()]
        return periodic(block, 64)
    body = text.strip("[]")
    parts = [t.strip() for t in body.split(",") if t.strip()]
    if parts and parts[-1] == "...":
        return truncated(int(t) for t in parts[:-1])
    try:
        return from_terms(int(t) for t in parts)
    except ValueError as exc:
        if isinstance(exc, ContinuedFractionError):
            raise
        raise InvalidTermError(f"cannot parse target {text!r}") from exc
