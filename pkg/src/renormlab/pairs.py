"""Critical commuting pairs and their renormalization.

Pair maps are expression trees over base lifts rather than closures, so
iterate counts and integer translations stay exact and can be audited
after any number of renormalizations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .circlemap import (
    EPS,
    PRECISION_FLOOR,
    CircleMapLift,
    analyze_rotation,
)
from .contfrac import ContinuedFraction, from_terms, truncated

INFINITE_HEIGHT = math.inf


class PairError(ValueError):
    pass


class NotRenormalizableError(PairError):
    pass


class UndeterminedHeightError(PairError):
    pass


class CertificationError(PairError):
    def __init__(self, message: str, deepest: int | None = None):
        super().__init__(message)
        self.deepest = deepest


# -- expression trees ---------------------------------------------------------


class Expr:
    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    @property
    def iterates(self) -> int:
        """Total number of base-lift applications."""
        raise NotImplementedError

    @property
    def translation(self) -> int:
        """Total integer translation subtracted along the way."""
        raise NotImplementedError


@dataclass(frozen=True)
class Iterate(Expr):
    """``x -> F^count(x) - shift``."""

    base: CircleMapLift
    count: int
    shift: int = 0

    def __call__(self, x):
        return self.base.iterate(x, self.count, self.shift)

    def derivative(self, x):
        return self.base.iterate_derivative(x, self.count)

    @property
    def iterates(self):
        return self.count

    @property
    def translation(self):
        return self.shift


@dataclass(frozen=True)
class Affine(Expr):
    """``x -> slope*x + offset``; used for closed-form oracle pairs."""

    slope: float
    offset: float

    def __call__(self, x):
        return self.slope * x + self.offset

    def derivative(self, x):
        return self.slope * np.ones_like(x, dtype=float) if np.ndim(x) else self.slope

    @property
    def iterates(self):
        return 0

    @property
    def translation(self):
        return 0


@dataclass(frozen=True)
class Compose(Expr):
    """``outer(inner(x))``."""

    outer: Expr
    inner: Expr

    def __call__(self, x):
        return self.outer(self.inner(x))

    def derivative(self, x):
        return self.outer.derivative(self.inner(x)) * self.inner.derivative(x)

    @property
    def iterates(self):
        return self.outer.iterates + self.inner.iterates

    @property
    def translation(self):
        return self.outer.translation + self.inner.translation


@dataclass(frozen=True)
class Power(Expr):
    inner: Expr
    times: int

    def __call__(self, x):
        for _ in range(self.times):
            x = self.inner(x)
        return x

    def derivative(self, x):
        d = 1.0
        for _ in range(self.times):
            d = d * self.inner.derivative(x)
            x = self.inner(x)
        return d

    @property
    def iterates(self):
        return self.times * self.inner.iterates

    @property
    def translation(self):
        return self.times * self.inner.translation


@dataclass(frozen=True)
class Rescale(Expr):
    """Conjugation by ``x -> scale*x``: ``x -> scale * inner(x/scale)``."""

    inner: Expr
    scale: float

    def __call__(self, x):
        return self.scale * self.inner(x / self.scale)

    def derivative(self, x):
        return self.inner.derivative(x / self.scale)

    @property
    def iterates(self):
        return self.inner.iterates

    @property
    def translation(self):
        return self.inner.translation


def rescale(expr: Expr, scale: float) -> Expr:
    if isinstance(expr, Rescale):
        return Rescale(expr.inner, expr.scale * scale)
    return Rescale(expr, scale)


def compose(outer: Expr, inner: Expr) -> Expr:
    """``outer o inner``, merging iterates of one base lift and common
    rescalings so the tree stays shallow."""
    if isinstance(outer, Rescale) and isinstance(inner, Rescale) and outer.scale == inner.scale:
        return Rescale(compose(outer.inner, inner.inner), outer.scale)
    if isinstance(outer, Iterate) and isinstance(inner, Iterate) and outer.base is inner.base:
        return Iterate(outer.base, outer.count + inner.count, outer.shift + inner.shift)
    return Compose(outer, inner)


def power(expr: Expr, times: int) -> Expr:
    if times == 1:
        return expr
    if isinstance(expr, Rescale):
        return Rescale(power(expr.inner, times), expr.scale)
    if isinstance(expr, Iterate):
        return Iterate(expr.base, times * expr.count, times * expr.shift)
    return Power(expr, times)


@dataclass(frozen=True)
class IntervalMap:
    expr: Expr
    domain: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.domain
        object.__setattr__(self, "domain", (min(lo, hi), max(lo, hi)))

    def __call__(self, x):
        return self.expr(x)

    def derivative(self, x):
        return self.expr.derivative(x)

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    def samples(self, count: int) -> np.ndarray:
        return np.linspace(self.domain[0], self.domain[1], count)


# -- pairs ----------------------------------------------------------------------


@dataclass(frozen=True)
class CommutingPair:
    """``(eta, xi)`` with ``eta`` on ``[0, xi(0)]`` and ``xi`` on ``[eta(0), 0]``.

    ``scale`` converts the pair's coordinate back to the coordinate it was
    first built in, so interval lengths along a renormalization orbit stay
    comparable. ``exponent`` is ``None`` for noncritical oracle pairs.
    """

    eta: IntervalMap
    xi: IntervalMap
    exponent: int | None
    provenance: dict = field(default_factory=dict, compare=False)
    scale: float = 1.0

    @cached_property
    def xi0(self) -> float:
        return float(self.xi(0.0))

    @cached_property
    def eta0(self) -> float:
        return float(self.eta(0.0))

    @property
    def ratio(self) -> float:
        return abs(self.eta0 / self.xi0)


def make_pair(eta: Expr, xi: Expr, exponent: int | None, provenance: dict | None = None, scale: float = 1.0) -> CommutingPair:
    """Assemble a pair, deriving both domains from ``xi(0)`` and ``eta(0)``."""
    xi0 = float(xi(0.0))
    eta0 = float(eta(0.0))
    return CommutingPair(
        IntervalMap(eta, (0.0, xi0)),
        IntervalMap(xi, (eta0, 0.0)),
        exponent,
        dict(provenance or {}),
        scale,
    )


def from_circle_map(
    fmap: CircleMapLift, level: int, max_orbit: int = 10**6, analysis=None
) -> CommutingPair:
    """The pair ``(F^{q_{m+1}} - p_{m+1}, F^{q_m} - p_m)`` on ``(I_m, I_{m+1})``."""
    if level < 0:
        raise PairError("level must be >= 0")
    an = analysis or analyze_rotation(fmap, max_orbit=max_orbit, levels=level + 2)
    rets = {r.level: r for r in an.returns}
    deepest = _deepest_certified(an)
    if level + 1 not in rets or level + 1 > deepest:
        raise CertificationError(
            f"level {level} needs closest returns through level {level + 1}; "
            f"certified only through {deepest}",
            deepest=max(deepest - 1, -1),
        )
    cur, nxt = rets[level], rets[level + 1]
    eta = Iterate(fmap, nxt.q, nxt.p)
    xi = Iterate(fmap, cur.q, cur.p)
    return make_pair(eta, xi, fmap.exponent, {"level": level, "depth": 0, "map": fmap.spec})


def _deepest_certified(an) -> int:
    deepest = -1
    for r in an.returns:
        if abs(r.distance) <= PRECISION_FLOOR:
            break
        deepest = r.level
    return deepest


def rigid_pair(rho: float, level: int = 0) -> CommutingPair:
    """Closed-form oracle: the pair of a rigid rotation as affine maps."""
    from .circlemap import RigidRotation

    an = analyze_rotation(RigidRotation(rho), levels=level + 2)
    rets = {r.level: r for r in an.returns}
    cur, nxt = rets[level], rets[level + 1]
    eta = Affine(1.0, nxt.q * rho - nxt.p)
    xi = Affine(1.0, cur.q * rho - cur.p)
    return make_pair(eta, xi, None, {"level": level, "depth": 0, "map": {"family": "rigid", "rho": rho}})


def normalize(pair: CommutingPair) -> CommutingPair:
    """Rescale so that ``xi(0) = 1``."""
    lam = 1.0 / pair.xi0
    return make_pair(
        rescale(pair.eta.expr, lam),
        rescale(pair.xi.expr, lam),
        pair.exponent,
        pair.provenance,
        pair.scale / lam,
    )


# -- height and renormalization -------------------------------------------------


def _tie_tolerance(pair: CommutingPair) -> float:
    return 1e3 * EPS * max(abs(pair.xi0), abs(pair.eta0))


def _fixed_point(pair: CommutingPair) -> float | None:
    """A fixed point of ``eta`` on ``I_eta`` found by bisection, if the sign
    of ``eta(x) - x`` changes there."""
    lo, hi = pair.eta.domain
    g_lo = pair.eta(lo) - lo
    g_hi = pair.eta(hi) - hi
    if g_lo == 0:
        return lo
    if g_hi == 0:
        return hi
    if (g_lo > 0) == (g_hi > 0):
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        g = pair.eta(mid) - mid
        if (g > 0) == (g_lo > 0):
            lo, g_lo = mid, g
        else:
            hi = mid
    return 0.5 * (lo + hi)


def height(pair: CommutingPair, cap: int = 10_000) -> int | float:
    """Smallest ``r >= 1`` with ``0`` between ``eta^r(xi(0))`` and
    ``eta^{r+1}(xi(0))``; :data:`INFINITE_HEIGHT` when ``eta`` has a fixed
    point that blocks the crossing."""
    tie = _tie_tolerance(pair)
    y = pair.eta(pair.xi0)
    for r in range(1, cap + 1):
        y_next = pair.eta(y)
        if abs(y) <= tie or abs(y_next) <= tie:
            raise UndeterminedHeightError(f"eta^{r}(xi(0)) lands within {tie:.1e} of 0")
        if (y > 0) != (y_next > 0):
            return r
        if abs(y_next) >= abs(y):
            break
        y = y_next
    if _fixed_point(pair) is not None:
        return INFINITE_HEIGHT
    raise UndeterminedHeightError(f"no crossing within {cap} iterates and no fixed point of eta")


def prerenormalize(pair: CommutingPair) -> CommutingPair:
    """``(eta^r o xi | I_xi, eta | [0, eta^r(xi(0))])`` with ``r`` the height."""
    r = height(pair)
    if r == INFINITE_HEIGHT:
        raise NotRenormalizableError("height is infinite")
    new_eta = compose(power(pair.eta.expr, r), pair.xi.expr)
    new_xi = pair.eta.expr
    prov = dict(pair.provenance, depth=pair.provenance.get("depth", 0) + 1, height=r)
    return CommutingPair(
        IntervalMap(new_eta, pair.xi.domain),
        IntervalMap(new_xi, (0.0, power(pair.eta.expr, r)(pair.xi0))),
        pair.exponent,
        prov,
        pair.scale,
    )


def renormalize(pair: CommutingPair) -> CommutingPair:
    """Pre-renormalization rescaled so the new pair has ``xi(0) = 1``.

    The factor is ``1/eta(0)`` of the old pair, i.e. one over the new
    ``xi(0)``; it is negative whenever the old pair was normalised, so the
    conjugation flips orientation and the result again has
    ``xi(0) > 0 > eta(0)``.
    """
    pre = prerenormalize(pair)
    lam = 1.0 / pre.xi0
    if not math.isfinite(lam) or abs(lam) * PRECISION_FLOOR > 1.0:
        raise CertificationError(f"rescaling factor {lam:.3e} beyond the precision floor")
    out = make_pair(
        rescale(pre.eta.expr, lam),
        rescale(pre.xi.expr, lam),
        pair.exponent,
        pre.provenance,
        pair.scale / lam,
    )
    if not out.xi0 > 0.0 > out.eta0:
        raise PairError(f"renormalized pair violates orientation: xi(0)={out.xi0}, eta(0)={out.eta0}")
    return out


def rotation_number_pair(pair: CommutingPair, depth: int) -> ContinuedFraction:
    """``[chi(pair), chi(R pair), ...]``, up to ``depth`` terms.

    An infinite height ends the expansion (``1/inf = 0``), giving an
    exhausted fraction. If a height cannot be certified the prefix found so
    far is returned as a truncated fraction.
    """
    terms = []
    cur = pair
    for _ in range(depth):
        try:
            r = height(cur)
        except UndeterminedHeightError:
            return truncated(terms)
        if r == INFINITE_HEIGHT:
            return from_terms(terms)
        terms.append(r)
        if len(terms) == depth:
            break
        try:
            cur = renormalize(cur)
        except CertificationError:
            return truncated(terms)
    return truncated(terms)


# -- metric and checks ------------------------------------------------------


def normalized_coordinates(pair: CommutingPair, samples: int = 1024):
    """``(eta(xi(0) x)/xi(0), xi(eta(0) x)/eta(0), |eta(0)/xi(0)|)`` on a
    uniform grid ``x`` in [0, 1]."""
    x = np.linspace(0.0, 1.0, samples)
    xi0, eta0 = pair.xi0, pair.eta0
    u = np.asarray(pair.eta(xi0 * x)) / xi0
    v = np.asarray(pair.xi(eta0 * x)) / eta0
    return u, v, abs(eta0 / xi0)


def c0_distance(a: CommutingPair, b: CommutingPair, samples: int = 1024) -> float:
    """Sampled C0 distance; a lower bound for the sup metric."""
    ua, va, ra = normalized_coordinates(a, samples)
    ub, vb, rb = normalized_coordinates(b, samples)
    return float(max(np.max(np.abs(ua - ub)), np.max(np.abs(va - vb))) + abs(ra - rb))


def sup_difference(a: CommutingPair, b: CommutingPair, samples: int = 64) -> float:
    """Largest pointwise gap between the two pairs' maps on ``a``'s domains."""
    xe = a.eta.samples(samples)
    xx = a.xi.samples(samples)
    return float(max(np.max(np.abs(a.eta(xe) - b.eta(xe))), np.max(np.abs(a.xi(xx) - b.xi(xx)))))


def commutation_residual(pair: CommutingPair, samples: int = 64, fraction: float = 0.25) -> float:
    """``max |eta(xi(x)) - xi(eta(x))|`` over points near 0 on both sides.

    Both maps extend analytically a little past 0, so the common domain is
    a neighbourhood of 0 of size ``fraction`` times the shorter interval.
    """
    radius = fraction * min(pair.eta.length, pair.xi.length)
    x = np.linspace(-radius, radius, samples)
    return float(np.max(np.abs(pair.eta(pair.xi(x)) - pair.xi(pair.eta(x)))))


@dataclass
class PairDiagnostics:
    intervals_ok: bool
    commutation_residual: float
    commutes: bool
    image_ok: bool
    min_derivative: float
    monotone: bool
    fitted_exponent: float | None
    exponent_ok: bool

    @property
    def passes(self) -> bool:
        return self.intervals_ok and self.commutes and self.image_ok and self.monotone and self.exponent_ok


def check_pair(pair: CommutingPair, samples: int = 64) -> PairDiagnostics:
    """Numerical checks of the commuting-pair axioms.

    The interval condition is orientation-agnostic: ``xi(0)`` and
    ``eta(0)`` must sit on opposite sides of 0, which covers both the
    normalised orientation and the raw pairs of odd levels. Derivatives
    come from the chain rule, so they stay accurate right up to the
    critical point and the exponent fit works for any order.
    """
    xi0, eta0 = pair.xi0, pair.eta0
    scale = max(abs(xi0), abs(eta0))
    intervals_ok = (xi0 > 0.0 > eta0) or (xi0 < 0.0 < eta0)
    resid = commutation_residual(pair, samples)
    commutes = resid < 1e-10 * max(1.0, scale) if pair.exponent is not None else resid < 1e-12 * max(1.0, scale)
    lo, hi = pair.eta.domain
    img = float(pair.xi(eta0))
    image_ok = lo - 1e-12 * scale <= img <= hi + 1e-12 * scale

    xe = pair.eta.samples(samples)
    xx = pair.xi.samples(samples)
    xe = xe[xe != 0.0]
    xx = xx[xx != 0.0]
    derivs = np.concatenate([np.atleast_1d(pair.eta.derivative(xe)), np.atleast_1d(pair.xi.derivative(xx))])
    min_d = float(np.min(derivs))

    fitted = None
    exponent_ok = True
    if pair.exponent is not None:
        xs = np.array([sg * abs(xi0) * s for s in (1e-2, 1e-3, 1e-4) for sg in (1.0, -1.0)])
        ds = np.abs(np.asarray(pair.eta.derivative(xs)))
        fitted = float(np.polyfit(np.log(np.abs(xs)), np.log(ds), 1)[0]) + 1.0
        exponent_ok = abs(fitted - pair.exponent) < 0.1
    return PairDiagnostics(intervals_ok, resid, commutes, image_ok, min_d, min_d > 0.0, fitted, exponent_ok)


# -- renormalization orbits -----------------------------------------------------


@dataclass
class RenormRecord:
    level: int
    height: int | float
    xi0: float
    len_eta: float
    len_xi: float
    ratio: float
    c0_distance: float | None = None

    CSV_COLUMNS = ("level", "height", "len_eta", "len_xi", "ratio", "xi0", "c0_distance")

    def csv_row(self) -> list:
        h = "inf" if self.height == INFINITE_HEIGHT else self.height
        d = "" if self.c0_distance is None else repr(self.c0_distance)
        return [self.level, h, repr(self.len_eta), repr(self.len_xi), repr(self.ratio), repr(self.xi0), d]


@dataclass
class RenormOrbit:
    records: list[RenormRecord]
    pairs: list[CommutingPair]
    truncated: bool
    reason: str = ""


def renorm_orbit(pair: CommutingPair, depth: int, start_level: int = 0) -> RenormOrbit:
    """Follow ``R`` for ``depth`` steps, logging one record per pair visited.

    Interval lengths are reported in the coordinate of the starting pair.
    """
    records, pairs = [], []
    cur = pair
    for k in range(depth):
        try:
            r = height(cur)
        except UndeterminedHeightError as exc:
            return RenormOrbit(records, pairs, True, str(exc))
        records.append(
            RenormRecord(
                level=start_level + k,
                height=r,
                xi0=cur.xi0 * cur.scale,
                len_eta=cur.eta.length * abs(cur.scale),
                len_xi=cur.xi.length * abs(cur.scale),
                ratio=cur.ratio,
            )
        )
        pairs.append(cur)
        if r == INFINITE_HEIGHT:
            return RenormOrbit(records, pairs, False, "infinite height")
        if k == depth - 1:
            break
        try:
            cur = renormalize(cur)
        except (CertificationError, UndeterminedHeightError) as exc:
            return RenormOrbit(records, pairs, True, str(exc))
    return RenormOrbit(records, pairs, False)
