"""Lifts of circle maps, critical orbits and rotation numbers.

A lift is evaluated through its *fundamental piece* ``lift(s)`` on
``s in [-1/2, 1/2]``; periodicity ``F(x + 1) = F(x) + 1`` is then exact by
construction. Orbits are stored split into an integer winding part and a
fractional part near zero, so closest returns keep full absolute precision
no matter how many turns the orbit has made.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .contfrac import (
    ContinuedFraction,
    DomainError,
    cf_of_fraction,
    convergent_pairs,
    from_terms,
    truncated,
)

EPS = float(np.finfo(float).eps)
#: Orbit distances below this are indistinguishable from an exact return.
PRECISION_FLOOR = 1e3 * EPS
TWO_PI = 2.0 * math.pi

_FD_STEP = EPS ** (1.0 / 3.0)


class CircleMapLift:
    """Base class for lifts of orientation preserving circle maps.

    Subclasses implement :meth:`lift` (scalar) and may override
    :meth:`lift_array` with a vectorised version. ``exponent`` is the odd
    order of the critical point at 0, or ``None`` for a diffeomorphism.
    """

    family = "abstract"
    exponent: int | None = None

    def lift(self, s: float) -> float:
        raise NotImplementedError

    def lift_array(self, s: np.ndarray) -> np.ndarray:
        return np.fromiter((self.lift(float(v)) for v in np.ravel(s)), float).reshape(np.shape(s))

    @property
    def params(self) -> dict:
        return {}

    @property
    def spec(self) -> dict:
        return {"family": self.family, **self.params}

    def __call__(self, x):
        if np.ndim(x) == 0:
            k = round(x)
            return k + self.lift(x - k)
        x = np.asarray(x, dtype=float)
        k = np.round(x)
        return k + self.lift_array(x - k)

    def orbit_segment(self, w: int, s: float, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Next ``count`` orbit points after ``w + s`` as (windings, fractions)."""
        ws = np.empty(count, dtype=np.int64)
        ss = np.empty(count, dtype=float)
        lift = self.lift
        for i in range(count):
            v = lift(s)
            r = round(v)
            w += r
            s = v - r
            ws[i] = w
            ss[i] = s
        return ws, ss

    def iterate(self, x, count: int, shift: int = 0):
        """``F^count(x) - shift``, accumulating windings as exact integers."""
        if np.ndim(x) == 0:
            w = round(x)
            s = x - w
            lift = self.lift
            for _ in range(count):
                v = lift(s)
                r = round(v)
                w += r
                s = v - r
            return (w - shift) + s
        x = np.asarray(x, dtype=float)
        w = np.round(x)
        s = x - w
        lift = self.lift_array
        for _ in range(count):
            v = lift(s)
            r = np.round(v)
            w = w + r
            s = v - r
        return (w - shift) + s

    def iterate_derivative(self, x, count: int):
        """``(F^count)'(x)`` by the chain rule along the orbit."""
        x = np.asarray(x, dtype=float)
        w = np.round(x)
        s = x - w
        d = np.ones_like(s)
        for _ in range(count):
            d = d * self.derivative(s)
            v = self.lift_array(s) if s.ndim else self.lift(float(s))
            s = v - np.round(v)
        return d if d.ndim else float(d)

    def derivative(self, x):
        h = _FD_STEP * np.maximum(1.0, np.abs(x))
        return (self(x + h) - self(x - h)) / (2.0 * h)

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"


class RigidRotation(CircleMapLift):
    family = "rigid"
    exponent = None

    def __init__(self, rho: float):
        self.rho = float(rho) % 1.0

    def lift(self, s):
        return s + self.rho

    def lift_array(self, s):
        return s + self.rho

    def derivative(self, x):
        return np.ones_like(x, dtype=float) if np.ndim(x) else 1.0

    @property
    def params(self):
        return {"rho": self.rho}


class SineCircleMap(CircleMapLift):
    """``x + omega + amplitude*sin(2 pi x)``; a diffeomorphism while
    ``2 pi |amplitude| < 1``."""

    family = "sine"
    exponent = None

    def __init__(self, omega: float, amplitude: float):
        self.omega = float(omega) % 1.0
        self.amplitude = float(amplitude)

    def lift(self, s):
        return s + self.omega + self.amplitude * math.sin(TWO_PI * s)

    def lift_array(self, s):
        return s + self.omega + self.amplitude * np.sin(TWO_PI * s)

    def derivative(self, x):
        return 1.0 + TWO_PI * self.amplitude * np.cos(TWO_PI * np.asarray(x, dtype=float))

    @property
    def params(self):
        return {"omega": self.omega, "amplitude": self.amplitude}


class ArnoldCircleMap(CircleMapLift):
    """Critical member of the Arnold family, ``x + omega - sin(2 pi x)/(2 pi)``.

    Cubic critical point at 0.
    """

    family = "arnold"
    exponent = 3

    def __init__(self, omega: float):
        self.omega = float(omega) % 1.0

    def lift(self, s):
        return s + self.omega - math.sin(TWO_PI * s) / TWO_PI

    def lift_array(self, s):
        return s + self.omega - np.sin(TWO_PI * s) / TWO_PI

    def derivative(self, x):
        # 1 - cos(2 pi x) without cancellation near 0
        return 2.0 * np.sin(np.pi * np.asarray(x, dtype=float)) ** 2

    def with_omega(self, omega: float) -> "ArnoldCircleMap":
        return ArnoldCircleMap(omega)

    @property
    def params(self):
        return {"omega": self.omega}


# -- family registry ---------------------------------------------------------

_FAMILIES: dict[str, Callable[..., CircleMapLift]] = {}


def register_family(name: str, factory: Callable[..., CircleMapLift]) -> None:
    _FAMILIES[name] = factory


def family_names() -> list[str]:
    return sorted(_FAMILIES)


def make_family(name: str, **params) -> CircleMapLift:
    try:
        factory = _FAMILIES[name]
    except KeyError:
        raise DomainError(f"unknown family {name!r}; known: {', '.join(family_names())}") from None
    return factory(**params)


def parse_family_spec(text: str) -> tuple[str, dict]:
    """``"blaschke:n=3,theta=0.61"`` -> ``("blaschke", {"n": 3, "theta": 0.61})``."""
    name, _, rest = text.partition(":")
    params: dict = {}
    for item in filter(None, (t.strip() for t in rest.split(","))):
        key, sep, val = item.partition("=")
        if not sep:
            raise DomainError(f"bad family parameter {item!r}")
        try:
            params[key.strip()] = int(val)
        except ValueError:
            params[key.strip()] = float(val)
    return name.strip(), params


register_family("rigid", lambda rho: RigidRotation(rho))
register_family("sine", lambda omega, amplitude: SineCircleMap(omega, amplitude))
register_family("arnold", lambda omega: ArnoldCircleMap(omega))


# -- orbits -------------------------------------------------------------------


class Orbit:
    """Lazily extended orbit ``x_k = F^k(x_0)``, stored as winding + fraction."""

    #: Largest number of points computed past the one requested.
    lookahead = 1 << 15

    def __init__(self, fmap: CircleMapLift, start: float = 0.0):
        self.map = fmap
        w = round(start)
        self._w = np.empty(1024, dtype=np.int64)
        self._s = np.empty(1024, dtype=float)
        self._w[0] = w
        self._s[0] = start - w
        self._n = 1

    def __len__(self) -> int:
        return self._n

    def extend(self, k: int) -> None:
        n = self._n
        if k < n:
            return
        target = k + 1 + min(n, self.lookahead)
        if target > self._w.size:
            cap = max(target, 2 * self._w.size)
            self._w = np.resize(self._w, cap)
            self._s = np.resize(self._s, cap)
        ws, ss = self.map.orbit_segment(int(self._w[n - 1]), float(self._s[n - 1]), target - n)
        self._w[n:target] = ws
        self._s[n:target] = ss
        self._n = target

    def distance(self, k: int, p: int) -> float:
        """Signed ``x_k - p``, exact in the integer part."""
        self.extend(k)
        return float(int(self._w[k]) - p) + float(self._s[k])

    def value(self, k: int) -> float:
        self.extend(k)
        return int(self._w[k]) + float(self._s[k])

    def nearest(self, k: int) -> tuple[int, float]:
        """Nearest integer to ``x_k`` and the signed offset from it."""
        self.extend(k)
        return int(self._w[k]), float(self._s[k])


@dataclass
class OrbitResult:
    points: list[float]
    truncated: bool = False


def orbit_of_zero(fmap: CircleMapLift, length: int) -> OrbitResult:
    """``F^k(0)`` for ``k = 1..length``.

    Stops early, flagged, if the orbit comes back to within the precision
    floor of an integer without landing on it exactly: past that point the
    positions no longer resolve the dynamics.
    """
    if length < 1:
        raise DomainError("orbit length must be >= 1")
    orbit = Orbit(fmap)
    points = []
    for k in range(1, length + 1):
        w, s = orbit.nearest(k)
        if 0.0 < abs(s) < PRECISION_FLOOR:
            return OrbitResult(points, truncated=True)
        points.append(w + s)
    return OrbitResult(points)


# -- diagnostics --------------------------------------------------------------


@dataclass
class MapDiagnostics:
    periodicity_residual: float
    min_derivative: float
    derivative_at_zero: float
    critical: bool
    fitted_exponent: float | None
    declared_exponent: int | None
    normalized: bool
    passes: bool
    notes: list[str] = field(default_factory=list)


def fit_critical_exponent(fmap: CircleMapLift, scales=(1e-2, 1e-3, 1e-4)) -> float:
    """One plus the least-squares slope of ``log|F'(x)|`` against ``log|x|``.

    Working with the derivative rather than ``F(x) - F(0)`` avoids the
    cancellation that makes high-order critical points invisible in binary64.
    """
    xs = np.array([sign * s for s in scales for sign in (1.0, -1.0)])
    ds = np.array([abs(float(fmap.derivative(float(x)))) for x in xs])
    slope, _ = np.polyfit(np.log(np.abs(xs)), np.log(ds), 1)
    return float(slope) + 1.0


def nearest_odd(x: float) -> int:
    return 2 * int(math.floor((x - 1.0) / 2.0 + 0.5)) + 1


def validate(fmap: CircleMapLift, grid: int = 1024, exclusion: float = 1e-3) -> MapDiagnostics:
    if grid < 64:
        raise DomainError("validation grid must have at least 64 points")
    notes = []
    xs = np.linspace(-1.0, 1.0, 2 * grid, endpoint=False)
    fx = np.array([fmap(float(x)) for x in xs])
    fx1 = np.array([fmap(float(x) + 1.0) for x in xs])
    periodicity = float(np.max(np.abs(fx1 - fx - 1.0) / np.maximum(1.0, np.abs(fx))))

    ts = np.linspace(0.0, 1.0, grid, endpoint=False)
    away = ts[(ts > exclusion) & (ts < 1.0 - exclusion)]
    deriv = np.array([fmap.derivative(float(t)) for t in away])
    min_deriv = float(deriv.min())
    d0 = float(fmap.derivative(0.0))
    critical = abs(d0) < 1e-6

    fitted = None
    exponent_ok = True
    if critical:
        fitted = fit_critical_exponent(fmap)
        if fmap.exponent is None:
            exponent_ok = False
            notes.append("map declared noncritical but F'(0) vanishes")
        else:
            exponent_ok = abs(fitted - fmap.exponent) < 0.1
            if not exponent_ok:
                notes.append(f"fitted exponent {fitted:.3f} != declared {fmap.exponent}")
    else:
        if fmap.exponent is not None:
            exponent_ok = False
            notes.append("map declared critical but F'(0) does not vanish")
        else:
            notes.append("noncritical")

    f0 = fmap(0.0)
    normalized = 0.0 < f0 < 1.0
    if not normalized:
        notes.append(f"F(0) = {f0!r} is not in (0, 1)")
    periodic_ok = periodicity <= 1e-12
    monotone_ok = min_deriv > 0.0
    if not monotone_ok:
        notes.append("derivative vanishes or changes sign away from 0")
    return MapDiagnostics(
        periodicity_residual=periodicity,
        min_derivative=min_deriv,
        derivative_at_zero=d0,
        critical=critical,
        fitted_exponent=fitted,
        declared_exponent=fmap.exponent,
        normalized=normalized,
        passes=periodic_ok and monotone_ok and exponent_ok,
        notes=notes,
    )


# -- rotation numbers ---------------------------------------------------------


@dataclass(frozen=True)
class ClosestReturn:
    level: int
    q: int
    p: int
    distance: float


@dataclass
class RotationAnalysis:
    """Combinatorics of the critical orbit read off a Stern-Brocot descent.

    For a circle homeomorphism ``rho > p/q`` iff ``F^q(0) > p`` (absent a
    periodic orbit), so every mediant comparison is a sign test on the
    orbit. ``terms`` holds only the continued-fraction terms the orbit has
    fully determined.
    """

    terms: tuple[int, ...]
    lock: Fraction | None
    lower: Fraction
    upper: Fraction
    returns: list[ClosestReturn]
    orbit_length: int
    budget_exhausted: bool

    @property
    def cf(self) -> ContinuedFraction:
        if self.lock is not None:
            return from_terms(self.terms)
        return truncated(self.terms)

    @property
    def width(self) -> Fraction:
        return self.upper - self.lower


def analyze_rotation(
    fmap: CircleMapLift,
    max_orbit: int = 10**6,
    tol: float | None = None,
    levels: int | None = None,
    orbit: Orbit | None = None,
) -> RotationAnalysis:
    """Walk the Stern-Brocot tree guided by the orbit of 0.

    Stops once the bracket is narrower than ``tol``, once ``levels`` terms
    are determined, or when the next mediant denominator exceeds
    ``max_orbit``. An orbit landing within the precision floor of an integer
    is a rational lock-in.
    """
    orbit = orbit or Orbit(fmap)
    a, b, c, d = 0, 1, 1, 1
    lock = None
    budget = False
    runs = [0]
    if abs(orbit.distance(1, 0)) <= PRECISION_FLOOR:
        lock = Fraction(0)
    while lock is None:
        if tol is not None and b * d * tol > 1.0:
            break
        if levels is not None and len(runs) - 1 >= levels:
            break
        p, q = a + c, b + d
        if q > max_orbit:
            budget = True
            break
        dist = orbit.distance(q, p)
        if abs(dist) <= PRECISION_FLOOR:
            lock = Fraction(p, q)
            break
        right = dist > 0
        if right == (len(runs) % 2 == 0):
            runs[-1] += 1
        else:
            runs.append(1)
        if right:
            a, b = p, q
        else:
            c, d = p, q

    if lock is not None:
        terms = cf_of_fraction(lock).terms
        lower = upper = lock
    else:
        terms = tuple(r + (1 if i == 0 else 0) for i, r in enumerate(runs[:-1]))
        lower, upper = Fraction(a, b), Fraction(c, d)

    returns = []
    for m, (p, q) in enumerate(convergent_pairs(terms)):
        if q > len(orbit) - 1:
            break
        returns.append(ClosestReturn(m, q, p, orbit.distance(q, p)))
    return RotationAnalysis(terms, lock, lower, upper, returns, len(orbit) - 1, budget)


@dataclass
class ClosestReturns:
    returns: list[ClosestReturn]
    partial: bool
    rational: Fraction | None = None


def closest_returns(fmap: CircleMapLift, levels: int, max_orbit: int = 10**6) -> ClosestReturns:
    """Closest-return times ``q_m``, wrap counts ``p_m`` and signed offsets
    ``F^{q_m}(0) - p_m`` for ``m = 1..levels``."""
    if levels < 1:
        raise DomainError("levels must be >= 1")
    an = analyze_rotation(fmap, max_orbit=max_orbit, levels=levels)
    rets = [r for r in an.returns if 1 <= r.level <= levels]
    partial = len(rets) < levels and an.lock is None
    return ClosestReturns(rets, partial, an.lock)


@dataclass
class RotationEstimate:
    rho: float
    error_bound: float
    cf_prefix: ContinuedFraction
    orbit_length: int
    method: str = "closest-returns"
    converged: bool = True

    def to_json(self) -> dict:
        return {
            "rho": self.rho,
            "error_bound": self.error_bound,
            "cf_prefix": self.cf_prefix.to_json(),
            "orbit_length": self.orbit_length,
            "method": self.method,
            "converged": self.converged,
        }


def rotation_number(fmap: CircleMapLift, tol: float = 1e-10, max_orbit: int = 10**6) -> RotationEstimate:
    orbit = Orbit(fmap)
    an = analyze_rotation(fmap, max_orbit=max_orbit, tol=tol, orbit=orbit)
    if an.lock is not None:
        return RotationEstimate(float(an.lock), 0.0, an.cf, an.orbit_length)
    deep = an.lower if an.lower.denominator > an.upper.denominator else an.upper
    rho, err, method = float(deep), float(an.width), "closest-returns"
    if an.budget_exhausted:
        n = max_orbit
        birkhoff_err = 1.0 / n
        if birkhoff_err < err:
            rho, err, method = orbit.value(n) / n, birkhoff_err, "birkhoff"
    return RotationEstimate(rho, err, an.cf, len(orbit) - 1, method, converged=err <= tol)
