"""The rigid Blaschke models ``B_n`` and their rotated family.

``B_n = P/Q`` with ``P(z) = sum_{k<=m} (-1)^k C(n,k) z^(n-k)`` and
``Q(z) = z^n P(1/z)``, ``n = 2m + 1``. The alternating signs are what make
``P - Q = (z - 1)^n`` hold; the identity is checked in exact integer
arithmetic every time a model is built.

Coefficient lists are stored in descending order of degree.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import comb

import numpy as np
from numba import njit

from .circlemap import (
    PRECISION_FLOOR,
    TWO_PI,
    CircleMapLift,
    Orbit,
    RotationEstimate,
    register_family,
    rotation_number,
)
from .contfrac import ContinuedFraction, DomainError, convergent_pairs

SCHEMA_VERSION = 1


class PoleError(ZeroDivisionError):
    pass


class ConstructionError(AssertionError):
    pass


class BracketError(ValueError):
    pass


class PrecisionFloorError(ValueError):
    pass


# -- exact polynomial arithmetic (descending coefficient lists) ---------------


def _trim(a):
    a = list(a)
    while len(a) > 1 and a[0] == 0:
        a.pop(0)
    return a


def poly_add(a, b):
    n = max(len(a), len(b))
    a = [0] * (n - len(a)) + list(a)
    b = [0] * (n - len(b)) + list(b)
    return _trim(x + y for x, y in zip(a, b))


def poly_sub(a, b):
    return poly_add(a, [-x for x in b])


def poly_mul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return _trim(out)


def poly_deriv(a):
    deg = len(a) - 1
    if deg == 0:
        return [0]
    return _trim(c * (deg - i) for i, c in enumerate(a[:-1]))


def poly_eval(a, z):
    acc = 0
    for c in a:
        acc = acc * z + c
    return acc


def binomial_power(n: int) -> list[int]:
    """Coefficients of ``(z - 1)^n``."""
    return [(-1) ** k * comb(n, k) for k in range(n + 1)]


def monomial(deg: int) -> list[int]:
    return [1] + [0] * deg


# -- the model ----------------------------------------------------------------


@dataclass(frozen=True)
class BlaschkeFraction:
    """``z -> exp(2 pi i theta) * P(z)/Q(z)``."""

    n: int
    P: tuple[int, ...]
    Q: tuple[int, ...]
    theta: float = 0.0

    @property
    def m(self) -> int:
        return (self.n - 1) // 2

    def rotated(self, theta: float) -> "BlaschkeFraction":
        return replace(self, theta=float(theta))

    @property
    def rotation(self) -> complex:
        if self.theta == 0.0:
            return 1.0 + 0.0j
        return cmath.exp(1j * TWO_PI * self.theta)

    def derivative_numerator(self) -> list[int]:
        """``P'Q - PQ'``, the numerator of the derivative of ``P/Q``."""
        return poly_sub(poly_mul(poly_deriv(self.P), self.Q), poly_mul(self.P, poly_deriv(self.Q)))

    def __call__(self, z):
        return evaluate(self, z)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "order": "descending",
            "n": self.n,
            "P": list(self.P),
            "Q": list(self.Q),
            "theta": self.theta,
        }

    @classmethod
    def from_json(cls, data: dict) -> "BlaschkeFraction":
        B = cls(int(data["n"]), tuple(data["P"]), tuple(data["Q"]), float(data.get("theta", 0.0)))
        failed = [k for k, ok in exact_invariants(B).items() if not ok]
        if failed:
            raise ConstructionError(f"model fails invariants: {', '.join(failed)}")
        return B


def exact_invariants(B: BlaschkeFraction) -> dict[str, bool]:
    n, m = B.n, B.m
    P, Q = list(B.P), list(B.Q)
    reflected = _trim(list(reversed(P)))
    num = B.derivative_numerator()
    target = poly_mul(monomial(m), binomial_power(n - 1))
    c = num[0] // target[0] if target[0] and num[0] % target[0] == 0 else 0
    return {
        "difference_is_binomial": poly_sub(P, Q) == binomial_power(n),
        "reciprocal": reflected == Q,
        "Q_at_1_nonzero": poly_eval(Q, 1) != 0,
        "derivative_numerator": c != 0 and num == [c * t for t in target],
    }


def build(n: int) -> BlaschkeFraction:
    if isinstance(n, bool) or int(n) != n or n < 3 or n % 2 == 0:
        raise DomainError(f"n must be odd and >= 3, got {n!r}")
    n = int(n)
    m = (n - 1) // 2
    P = [(-1) ** k * comb(n, k) for k in range(m + 1)] + [0] * (n - m)
    Q = _trim(list(reversed(P)))
    B = BlaschkeFraction(n, tuple(P), tuple(Q))
    failed = [k for k, ok in exact_invariants(B).items() if not ok]
    if failed:
        raise ConstructionError(f"B_{n} fails {', '.join(failed)}")
    return B


def derivative_constant(B: BlaschkeFraction) -> int:
    """The integer ``c`` in ``P'Q - PQ' = c z^m (z - 1)^(n-1)``."""
    target = poly_mul(monomial(B.m), binomial_power(B.n - 1))
    return B.derivative_numerator()[0] // target[0]


def evaluate(B: BlaschkeFraction, z: complex) -> complex:
    """``B(z)``, computed as ``1 + (z - 1)^n / Q(z)`` before rotating.

    That form is algebraically the same as ``P/Q`` and keeps full relative
    accuracy in ``B(z) - 1`` near the critical point ``z = 1``.
    """
    q = poly_eval(B.Q, z)
    if q == 0:
        raise PoleError(f"{z!r} is a pole of B_{B.n}")
    return B.rotation * (1 + (z - 1) ** B.n / q)


def evaluate_array(B: BlaschkeFraction, z: np.ndarray) -> np.ndarray:
    """Vectorised :func:`evaluate`; poles come out as ``inf``."""
    z = np.asarray(z, dtype=complex)
    q = np.zeros_like(z)
    for c in B.Q:
        q = q * z + c
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        w = B.rotation * (1 + (z - 1) ** B.n / q)
    return np.where(q == 0, np.inf + 0j, w)


def circle_symmetry_residual(B: BlaschkeFraction, samples: int = 1000, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    z = np.exp(1j * TWO_PI * rng.random(samples))
    return float(np.max(np.abs(np.abs(evaluate_array(B, z)) - 1.0)))


# -- lift of the circle restriction -------------------------------------------


@njit(cache=True, nogil=True)
def _turns_kernel(n, Q, a, s):
    ang = TWO_PI * s
    c = math.cos(ang)
    sn = math.sin(ang)
    sp = math.sin(math.pi * s)
    z = complex(c, sn)
    zm1 = complex(-2.0 * sp * sp, sn)
    if a != 0.0:
        den = 1.0 + a * z
        w = (z + a) / den
        wm1 = (1.0 - a) * zm1 / den
    else:
        w = z
        wm1 = zm1
    q = 0j
    for k in range(Q.size):
        q = q * w + Q[k]
    pw = 1.0 + 0j
    for _ in range(n):
        pw = pw * wm1
    dev = pw / q
    return math.atan2(dev.imag, 1.0 + dev.real) / TWO_PI


@njit(cache=True, nogil=True)
def _turns_array_kernel(n, Q, a, s, out):
    for i in range(s.size):
        out[i] = _turns_kernel(n, Q, a, s[i])


@njit(cache=True, nogil=True)
def _lift_kernel(n, Q, a, theta, xs, gs, s):
    u = _turns_kernel(n, Q, a, s)
    i = np.searchsorted(xs, s, side="right") - 1
    if i < 0:
        i = 0
    elif i > xs.size - 2:
        i = xs.size - 2
    g = gs[i] + (gs[i + 1] - gs[i]) * (s - xs[i]) / (xs[i + 1] - xs[i])
    return theta + u + np.round(g - u)


@njit(cache=True, nogil=True)
def _lift_array_kernel(n, Q, a, theta, xs, gs, s, out):
    for i in range(s.size):
        out[i] = _lift_kernel(n, Q, a, theta, xs, gs, s[i])


@njit(cache=True, nogil=True)
def _orbit_kernel(n, Q, a, theta, xs, gs, w, s, ws, ss):
    for k in range(ws.size):
        v = _lift_kernel(n, Q, a, theta, xs, gs, s)
        r = np.round(v)
        w += np.int64(r)
        s = v - r
        ws[k] = w
        ss[k] = s


@njit(cache=True, nogil=True)
def _iterate_kernel(n, Q, a, theta, xs, gs, x, count, shift, out):
    for i in range(x.size):
        w = np.round(x[i])
        s = x[i] - w
        for _ in range(count):
            v = _lift_kernel(n, Q, a, theta, xs, gs, s)
            r = np.round(v)
            w += r
            s = v - r
        out[i] = (w - shift) + s


@njit(cache=True, nogil=True)
def _derivative_kernel(n, Q, c, a, s):
    """``F'(s) = w B'(w)/B(w) * z h_a'(z)/h_a(z)`` with ``w = h_a(z)``, using
    ``B'/B = c w^m (w - 1)^(n-1) / (P(w) Q(w))`` so no cancellation occurs
    near the critical point."""
    ang = TWO_PI * s
    sn = math.sin(ang)
    sp = math.sin(math.pi * s)
    z = complex(math.cos(ang), sn)
    zm1 = complex(-2.0 * sp * sp, sn)
    factor = 1.0 + 0j
    if a != 0.0:
        den = 1.0 + a * z
        w = (z + a) / den
        wm1 = (1.0 - a) * zm1 / den
        factor = z * (1.0 - a * a) / (den * (z + a))
    else:
        w = z
        wm1 = zm1
    q = 0j
    for k in range(Q.size):
        q = q * w + Q[k]
    pw = 1.0 + 0j
    for _ in range(n - 1):
        pw = pw * wm1
    p = q + pw * wm1
    wm = 1.0 + 0j
    for _ in range((n - 1) // 2 + 1):
        wm = wm * w
    return (c * wm * pw / (p * q) * factor).real + 0.0


@njit(cache=True, nogil=True)
def _iterate_derivative_kernel(n, Q, c, a, theta, xs, gs, x, count, out):
    for i in range(x.size):
        s = x[i] - np.round(x[i])
        d = 1.0
        for _ in range(count):
            d *= _derivative_kernel(n, Q, c, a, s)
            v = _lift_kernel(n, Q, a, theta, xs, gs, s)
            s = v - np.round(v)
        out[i] = d


def _principal_turns(n: int, Q: tuple[int, ...], a: float, s: float) -> float:
    """Principal ``arg(B(h_a(e^{2 pi i s})))/2pi`` for the unrotated model."""
    return _turns_kernel(n, np.asarray(Q, dtype=float), float(a), float(s))


def _principal_turns_array(n: int, Q: tuple[int, ...], a: float, s: np.ndarray) -> np.ndarray:
    s = np.ascontiguousarray(s, dtype=float)
    out = np.empty_like(s)
    _turns_array_kernel(n, np.asarray(Q, dtype=float), float(a), s.ravel(), out.ravel())
    return out


class LiftError(RuntimeError):
    pass


@lru_cache(maxsize=64)
def _branch_table(n: int, Q: tuple[int, ...], a: float, base: int = 4096, max_depth: int = 40):
    """Continuous argument of the unrotated model on ``[-1/2, 1/2]``.

    Unwrapped outward from ``s = 0`` (where the model fixes 1), with cells
    bisected wherever the sampled argument jumps by more than 1/8 turn.
    """

    Qf = np.asarray(Q, dtype=float)

    def turns(s):
        return _turns_kernel(n, Qf, a, s)

    def wrap(d):
        return d - round(d)

    xs = [-0.5 + i / base for i in range(base + 1)]
    us = _principal_turns_array(n, Q, a, np.array(xs)).tolist()
    fx, fu = [xs[0]], [us[0]]
    for i in range(base):
        stack = [(xs[i], us[i], xs[i + 1], us[i + 1], 0)]
        seg = []
        while stack:
            x0, u0, x1, u1, depth = stack.pop()
            if abs(wrap(u1 - u0)) > 0.125:
                if depth >= max_depth:
                    raise LiftError(f"argument unwrapping failed near s={x0}")
                xm = 0.5 * (x0 + x1)
                um = turns(xm)
                stack.append((xm, um, x1, u1, depth + 1))
                stack.append((x0, u0, xm, um, depth + 1))
            else:
                seg.append((x1, u1))
        for x1, u1 in seg:
            fx.append(x1)
            fu.append(u1)
    zero = fx.index(0.0)
    g = [0.0] * len(fx)
    g[zero] = fu[zero]
    for i in range(zero + 1, len(fx)):
        g[i] = g[i - 1] + wrap(fu[i] - fu[i - 1])
    for i in range(zero - 1, -1, -1):
        g[i] = g[i + 1] - wrap(fu[i + 1] - fu[i])
    xs_arr, gs_arr = np.array(fx), np.array(g)
    xs_arr.flags.writeable = False
    gs_arr.flags.writeable = False
    return xs_arr, gs_arr


class BlaschkeCircleMap(CircleMapLift):
    """Lift of ``t -> arg(e^{2 pi i theta} B(h_a(e^{2 pi i t})))/2pi``.

    ``h_a(z) = (z + a)/(1 + a z)`` is a real Moebius automorphism of the
    disk fixing 1, so the critical point stays at ``t = 0`` with the same
    order; ``a = 0`` gives the bare model. The lift is normalised by
    ``F(0) = theta``. ``bracket`` optionally records a parameter interval
    known to contain the exact tuned ``theta``.
    """

    def __init__(self, B: BlaschkeFraction, a: float = 0.0, bracket: tuple[float, float] | None = None):
        if not -1.0 < a < 1.0:
            raise DomainError(f"precomposition parameter must lie in (-1, 1), got {a}")
        theta = float(B.theta)
        if not 0.0 <= theta <= 1.0:
            theta %= 1.0
        self.B = B.rotated(theta)
        self.a = float(a)
        self.theta = theta
        self.exponent = B.n
        self.bracket = bracket
        self.family = "blaschke-precomposed" if self.a else "blaschke"
        self._xs, self._gs = _branch_table(B.n, tuple(B.Q), self.a)
        self._Q = np.asarray(B.Q, dtype=float)
        self._c = float(derivative_constant(B))

    @property
    def params(self):
        out = {"n": self.B.n, "theta": self.theta}
        if self.a:
            out["a"] = self.a
        return out

    def with_theta(self, theta: float, bracket=None) -> "BlaschkeCircleMap":
        return BlaschkeCircleMap(self.B.rotated(theta), self.a, bracket)

    def bracket_maps(self) -> tuple["BlaschkeCircleMap", "BlaschkeCircleMap"] | None:
        if self.bracket is None:
            return None
        return self.with_theta(self.bracket[0]), self.with_theta(self.bracket[1])

    def _args(self):
        return self.B.n, self._Q, self.a, self.theta, self._xs, self._gs

    def lift(self, s):
        return _lift_kernel(*self._args(), float(s))

    def lift_array(self, s):
        s = np.ascontiguousarray(s, dtype=float)
        out = np.empty_like(s)
        _lift_array_kernel(*self._args(), s.ravel(), out.ravel())
        return out

    def derivative(self, x):
        if np.ndim(x) == 0:
            return _derivative_kernel(self.B.n, self._Q, self._c, self.a, float(x - round(x)))
        x = np.asarray(x, dtype=float)
        s = (x - np.round(x)).ravel()
        out = np.array([_derivative_kernel(self.B.n, self._Q, self._c, self.a, v) for v in s])
        return out.reshape(x.shape)

    def iterate_derivative(self, x, count: int):
        scalar = np.ndim(x) == 0
        x = np.ascontiguousarray(x, dtype=float)
        out = np.empty_like(x)
        _iterate_derivative_kernel(
            self.B.n, self._Q, self._c, self.a, self.theta, self._xs, self._gs, x.ravel(), int(count), out.ravel()
        )
        return out.item() if scalar else out

    def orbit_segment(self, w, s, count):
        ws = np.empty(count, dtype=np.int64)
        ss = np.empty(count, dtype=float)
        _orbit_kernel(*self._args(), np.int64(w), float(s), ws, ss)
        return ws, ss

    def iterate(self, x, count: int, shift: int = 0):
        if np.ndim(x) == 0:
            w = round(x)
            if count == 0:
                return (w - shift) + (x - w)
            ws, ss = self.orbit_segment(w, x - w, count)
            return (int(ws[-1]) - shift) + float(ss[-1])
        x = np.ascontiguousarray(x, dtype=float)
        out = np.empty_like(x)
        _iterate_kernel(*self._args(), x.ravel(), int(count), float(shift), out.ravel())
        return out


def circle_lift(B: BlaschkeFraction, a: float = 0.0) -> BlaschkeCircleMap:
    return BlaschkeCircleMap(B, a)


def blaschke_family(n: int, theta: float = 0.0, a: float = 0.0) -> BlaschkeCircleMap:
    return BlaschkeCircleMap(build(n).rotated(theta), a)


register_family("blaschke", lambda n, theta=0.0: blaschke_family(n, theta))
register_family("blaschke-precomposed", lambda n, a, theta=0.0: blaschke_family(n, theta, a))


# -- parameter tuning ---------------------------------------------------------

_LEFT, _RIGHT = False, True


def stern_brocot_path(terms) -> list[tuple[bool, int]]:
    """Turns of the Stern-Brocot descent from 1/2 toward ``[terms...]``,
    each tagged with the index of the term it belongs to."""
    path = []
    for i, r in enumerate(terms):
        turn = _LEFT if i % 2 == 0 else _RIGHT
        count = r - 1 if i == 0 else r
        path.extend((turn, i) for _ in range(count))
    return path


def compare_rotation(fmap: CircleMapLift, path, max_orbit: int) -> tuple[int, int]:
    """Order ``rho(fmap)`` against the number whose descent is ``path``.

    Returns ``(sign, level)``: sign is -1 or +1 once the orbit leaves the
    path (at term index ``level``), 0 if it follows the whole path or the
    orbit budget runs out first.
    """
    orbit = Orbit(fmap)
    a, b, c, d = 0, 1, 1, 1
    level = 0
    for turn, level in path:
        p, q = a + c, b + d
        if q > max_orbit:
            return 0, level
        dist = orbit.distance(q, p)
        if abs(dist) <= PRECISION_FLOOR:
            return (-1 if turn is _RIGHT else 1), level
        side = dist > 0
        if side is not turn:
            return (1 if side else -1), level
        if turn:
            a, b = p, q
        else:
            c, d = p, q
    return 0, level


@dataclass
class TuneResult:
    theta: float
    lower: float
    upper: float
    achieved: RotationEstimate
    depth_used: int
    certified: bool
    status: str
    map: BlaschkeCircleMap = field(repr=False)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_json(self) -> dict:
        return {
            "theta": self.theta,
            "bracket": [self.lower, self.upper],
            "depth_used": self.depth_used,
            "certified": self.certified,
            "status": self.status,
            "achieved": self.achieved.to_json(),
            "map": self.map.spec,
        }


def tune_theta(
    n: int,
    target: ContinuedFraction,
    tol_theta: float = 1e-12,
    depth: int | None = None,
    a: float = 0.0,
    max_orbit: int = 2 * 10**6,
    verify_tol: float = 1e-10,
) -> TuneResult:
    """Find the rotation ``theta`` giving ``e^{2 pi i theta} B_n`` (optionally
    precomposed with ``h_a``) the rotation number ``target``.

    Bisection on theta; each candidate is ordered against the target by
    following the target's Stern-Brocot descent on the candidate's critical
    orbit. ``depth`` caps how many target terms are consulted; by default
    all of them are, subject to ``max_orbit``.
    """
    if target.exhausted:
        raise DomainError(f"target {target} is rational; the rotation parameter is not unique")
    terms = target.terms if depth is None else target.terms[:depth]
    if not terms:
        raise DomainError("target has no terms")
    path = stern_brocot_path(terms)
    base = blaschke_family(n, 0.0, a)
    lo, hi = 0.0, 1.0
    deepest = 0
    status = "converged"
    theta = None
    while hi - lo > tol_theta:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            status = "float-resolution"
            break
        sign, level = compare_rotation(base.with_theta(mid), path, max_orbit)
        deepest = max(deepest, level)
        if sign > 0:
            hi = mid
        elif sign < 0:
            lo = mid
        else:
            status = "depth-exhausted"
            theta = mid
            break
    if theta is None:
        theta = 0.5 * (lo + hi)
    tuned = base.with_theta(theta, bracket=(lo, hi))
    achieved = rotation_number(tuned, tol=verify_tol, max_orbit=max_orbit)
    return TuneResult(theta, lo, hi, achieved, deepest + 1, hi - lo <= tol_theta, status, tuned)


def _convergent(target: ContinuedFraction, m: int) -> tuple[int, int]:
    if m > len(target.terms):
        raise PrecisionFloorError(f"level {m} needs {m} target terms, only {len(target.terms)} given")
    for k, (p, q) in enumerate(convergent_pairs(target.terms[:m])):
        if k == m:
            return p, q
    raise AssertionError("unreachable")


def periodic_residual(n: int, theta: float, m_or_pq, target: ContinuedFraction | None = None, a: float = 0.0) -> float:
    p, q = m_or_pq if target is None else _convergent(target, m_or_pq)
    return blaschke_family(n, 0.0, a).with_theta(theta).iterate(0.0, q, p)


def solve_theta_periodic(
    n: int, target: ContinuedFraction, m: int, a: float = 0.0, max_orbit: int = 10**6
) -> float:
    """Parameter ``theta_m`` where ``F_theta^{q_m}(0) = p_m``: the critical
    point is periodic with the ``m``-th convergent's combinatorics.

    ``F_theta^q(0)`` increases with theta, so plain bisection on [0, 1]
    runs down to adjacent floats.
    """
    if m < 1:
        raise DomainError("level must be >= 1")
    p, q = _convergent(target, m)
    if q > max_orbit:
        raise PrecisionFloorError(f"q_{m} = {q} exceeds the orbit budget {max_orbit}")
    base = blaschke_family(n, 0.0, a)

    def resid(theta):
        return base.with_theta(theta).iterate(0.0, q, p)

    lo, hi = 0.0, 1.0
    r_lo, r_hi = resid(lo), resid(hi)
    if r_lo > 0 or r_hi < 0:
        raise BracketError(f"no sign change for q={q}, p={p} on [0, 1]")
    if r_lo == 0:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        r = resid(mid)
        if r == 0:
            return mid
        if r > 0:
            hi, r_hi = mid, r
        else:
            lo, r_lo = mid, r
    return lo if abs(r_lo) <= abs(r_hi) else hi
