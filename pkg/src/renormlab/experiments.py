"""Desk-scale experiments: scaling ratios, universality, convergence of
renormalization, the parameter-scaling probe and basin rasters.

Every report carries a certified depth. A closest-return level counts as
certified when its offset is above the precision floor and, for a tuned
map that records a parameter bracket, when the maps at both ends of the
bracket agree on it to ``cert_tol`` relative error. Past that depth the
numbers describe the mistuning of the parameter rather than the map at
the target rotation number.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import pairs as P
from .blaschke import (
    BlaschkeFraction,
    BracketError,
    PrecisionFloorError,
    solve_theta_periodic,
    tune_theta,
)
from .circlemap import (
    PRECISION_FLOOR,
    CircleMapLift,
    ClosestReturn,
    RotationAnalysis,
    analyze_rotation,
)
from .contfrac import ContinuedFraction, DomainError

#: Default relative agreement required between the bracket-end maps.
CERT_TOL = 1e-6

UNDECIDED, BASIN_ZERO, BASIN_INF = 0, 1, 2


def default_threads() -> int:
    env = os.environ.get("RENORMLAB_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise DomainError(f"RENORMLAB_THREADS must be an integer, got {env!r}") from None
        if value < 1:
            raise DomainError("RENORMLAB_THREADS must be >= 1")
        return value
    return os.cpu_count() or 1


def _map_parallel(fn, items, threads):
    items = list(items)
    threads = threads or default_threads()
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


# -- certification ------------------------------------------------------------


@dataclass
class CertifiedReturns:
    """Closest returns of a map and the deepest level that can be trusted."""

    returns: list[ClosestReturn]
    depth: int
    reason: str
    analysis: RotationAnalysis = field(repr=False)

    @property
    def certified(self) -> list[ClosestReturn]:
        return [r for r in self.returns if r.level <= self.depth]


def certify_returns(
    fmap: CircleMapLift, max_level: int = 40, cert_tol: float = CERT_TOL, max_orbit: int = 2 * 10**6
) -> CertifiedReturns:
    """Closest returns for levels ``0..max_level`` with a certified depth.

    For a tuned map the bracket-end maps must share each level's ``(q, p)``
    and agree on its offset to relative ``cert_tol``; ``cert_tol=inf``
    certifies the combinatorics alone, which is all heights depend on.
    """
    an = analyze_rotation(fmap, max_orbit=max_orbit, levels=max_level + 1)
    returns = [r for r in an.returns if r.level <= max_level]
    ends = getattr(fmap, "bracket_maps", lambda: None)()
    end_returns = None
    if ends is not None:
        end_returns = [
            {r.level: r for r in analyze_rotation(g, max_orbit=max_orbit, levels=max_level + 1).returns}
            for g in ends
        ]
    depth, reason = -1, ""
    for r in returns:
        if abs(r.distance) <= PRECISION_FLOOR:
            reason = f"level {r.level} offset {r.distance:.2e} at the precision floor"
            break
        if end_returns is not None:
            others = [e.get(r.level) for e in end_returns]
            if any(o is None or (o.q, o.p) != (r.q, r.p) for o in others):
                reason = f"bracket ends disagree on the combinatorics of level {r.level}"
                break
            spread = abs(others[0].distance - others[1].distance) / abs(r.distance)
            if spread > cert_tol:
                reason = f"level {r.level} varies by {spread:.1e} across the parameter bracket"
                break
        depth = r.level
    else:
        if depth < max_level:
            if an.lock is not None:
                reason = f"rotation number locked at {an.lock}"
            else:
                reason = f"orbit budget {max_orbit} exhausted at level {depth}"
    return CertifiedReturns(returns, depth, reason, an)


# -- scaling ratios -------------------------------------------------------------


@dataclass
class ScalingRatios:
    """``s_m = |I_{m+1}|/|I_m|`` for ``m = 1..len(ratios)``."""

    ratios: list[float]
    certified_depth: int
    truncated: bool
    reason: str = ""

    def by_level(self) -> dict[int, float]:
        return {m + 1: s for m, s in enumerate(self.ratios)}


def scaling_ratios(
    fmap: CircleMapLift,
    depth: int,
    cert_tol: float = CERT_TOL,
    max_orbit: int = 2 * 10**6,
    certified: CertifiedReturns | None = None,
) -> ScalingRatios:
    if depth < 1:
        raise DomainError("depth must be >= 1")
    cert = certified or certify_returns(fmap, depth + 1, cert_tol, max_orbit)
    by_level = {r.level: r.distance for r in cert.certified}
    ratios = []
    for m in range(1, depth + 1):
        if m + 1 not in by_level:
            break
        ratios.append(abs(by_level[m + 1]) / abs(by_level[m]))
    truncated = len(ratios) < depth
    return ScalingRatios(ratios, cert.depth, truncated, cert.reason if truncated else "")


# -- universality -------------------------------------------------------------


@dataclass
class UniversalityReport:
    exponent: int | None
    target: ContinuedFraction | None
    families: list[dict]
    ratios: list[list[float]]
    discrepancy: list[float]
    c0_distances: list[float]
    certified_depth: int
    truncated: bool
    reason: str = ""

    @property
    def final_discrepancy(self) -> float | None:
        return self.discrepancy[-1] if self.discrepancy else None

    def to_json(self) -> dict:
        return {
            "exponent": self.exponent,
            "target": None if self.target is None else self.target.to_json(),
            "families": self.families,
            "ratios": self.ratios,
            "discrepancy": self.discrepancy,
            "c0_distances": self.c0_distances,
            "certified_depth": self.certified_depth,
            "truncated": self.truncated,
            "reason": self.reason,
        }


def _check_exponents(maps, allow_mixed: bool):
    exps = {m.exponent for m in maps}
    if len(exps) > 1 and not allow_mixed:
        raise DomainError(f"critical exponents differ: {sorted(exps, key=str)}")
    return exps.pop() if len(exps) == 1 else None


def _common_combinatorics(certs) -> int:
    """Deepest level certified for every map, after checking that all maps
    share closest-return times up to it."""
    depth = min(c.depth for c in certs)
    for level in range(depth + 1):
        qs = {(c.returns[level].q, c.returns[level].p) for c in certs}
        if len(qs) > 1:
            raise DomainError(f"maps have different rotation numbers (level {level} returns {sorted(qs)})")
    return depth


def _pair_distances(maps, depth: int) -> list[float]:
    """``c0_distance`` between the first map's ``R^k`` pair and every other
    map's, maximised over maps, for ``k = 0..depth``."""
    if depth < 0:
        return []
    orbits = [P.renorm_orbit(P.from_circle_map(f, 0), depth + 1) for f in maps]
    count = min(len(o.pairs) for o in orbits)
    out = []
    for k in range(count):
        ref = orbits[0].pairs[k]
        out.append(max((P.c0_distance(ref, o.pairs[k]) for o in orbits[1:]), default=0.0))
    return out


def universality_compare(
    families: list[CircleMapLift],
    depth: int,
    cert_tol: float = CERT_TOL,
    max_orbit: int = 2 * 10**6,
    allow_mixed: bool = False,
    target: ContinuedFraction | None = None,
    threads: int | None = None,
) -> UniversalityReport:
    """Scaling ratios of several maps with the same rotation number.

    ``allow_mixed`` admits maps of different critical exponents, which is
    only meaningful as a negative control.
    """
    if len(families) < 2:
        raise DomainError("need at least two families to compare")
    if depth < 1:
        raise DomainError("depth must be >= 1")
    exponent = _check_exponents(families, allow_mixed)
    certs = _map_parallel(lambda f: certify_returns(f, depth + 1, cert_tol, max_orbit), families, threads)
    common = _common_combinatorics(certs)
    per_family = [scaling_ratios(f, depth, certified=c) for f, c in zip(families, certs)]
    levels = min(len(s.ratios) for s in per_family)
    discrepancy = []
    for m in range(levels):
        vals = [s.ratios[m] for s in per_family]
        discrepancy.append((max(vals) - min(vals)) / min(vals))
    pair_depth = min(common - 1, depth)
    distances = _pair_distances(families, pair_depth)
    truncated = levels < depth
    reason = next((c.reason for c in certs if c.depth == common), "") if truncated else ""
    return UniversalityReport(
        exponent=exponent,
        target=target,
        families=[f.spec for f in families],
        ratios=[s.ratios for s in per_family],
        discrepancy=discrepancy,
        c0_distances=distances,
        certified_depth=common,
        truncated=truncated,
        reason=reason,
    )


# -- convergence of renormalizations ------------------------------------------


@dataclass
class ConvergenceReport:
    distances: list[float]
    certified_depth: int
    truncated: bool
    reason: str = ""

    def decreasing_from(self, start: int) -> bool:
        d = self.distances[start:]
        return all(b < a for a, b in zip(d, d[1:]))

    def to_json(self) -> dict:
        return {
            "distances": self.distances,
            "certified_depth": self.certified_depth,
            "truncated": self.truncated,
            "reason": self.reason,
        }


def renorm_convergence(
    a: CircleMapLift,
    b: CircleMapLift,
    depth: int,
    cert_tol: float = CERT_TOL,
    max_orbit: int = 2 * 10**6,
    threads: int | None = None,
) -> ConvergenceReport:
    """``c0_distance(R^m zeta_a, R^m zeta_b)`` for ``m = 0..depth`` within the
    certified range; ``zeta`` is the level-0 pair of each map."""
    if depth < 0:
        raise DomainError("depth must be >= 0")
    _check_exponents([a, b], False)
    certs = _map_parallel(lambda f: certify_returns(f, depth + 1, cert_tol, max_orbit), [a, b], threads)
    common = _common_combinatorics(certs)
    pair_depth = min(common - 1, depth)
    distances = _pair_distances([a, b], pair_depth)
    truncated = len(distances) < depth + 1
    reason = next((c.reason for c in certs if c.depth == common), "") if truncated else ""
    return ConvergenceReport(distances, pair_depth, truncated, reason)


# -- parameter scaling ----------------------------------------------------------


@dataclass
class DeltaReport:
    thetas: list[float]
    ratios: dict[int, float]
    theta_star: float | None
    stabilized_at: int | None
    alternates: bool
    approaches: bool
    certified_depth: int
    truncated: bool
    reason: str = ""

    def to_json(self) -> dict:
        return {
            "thetas": self.thetas,
            "ratios": {str(k): v for k, v in self.ratios.items()},
            "theta_star": self.theta_star,
            "stabilized_at": self.stabilized_at,
            "alternates": self.alternates,
            "approaches": self.approaches,
            "certified_depth": self.certified_depth,
            "truncated": self.truncated,
            "reason": self.reason,
        }


def delta_estimate(
    n: int,
    target: ContinuedFraction,
    depth: int,
    a: float = 0.0,
    max_orbit: int = 10**6,
    stabilization: float = 0.01,
    theta_star: float | None = None,
    threads: int | None = None,
) -> DeltaReport:
    """Superstable-style parameters ``theta_m`` (critical point periodic with
    the ``m``-th convergent's combinatorics) and their ratios
    ``d_m = (theta_m - theta_{m-1})/(theta_{m+1} - theta_m)``.

    ``theta_star`` defaults to a fresh tuning of the same family.
    """
    if depth < 3:
        raise DomainError("depth must be >= 3 to form a ratio")
    if len(target.terms) < depth:
        raise DomainError(f"target needs {depth} terms, has {len(target.terms)}")

    def solve(m):
        try:
            return solve_theta_periodic(n, target, m, a, max_orbit)
        except (PrecisionFloorError, BracketError) as exc:
            return exc

    results = _map_parallel(solve, range(1, depth + 1), threads)
    thetas: list[float] = []
    reason = ""
    for m, res in enumerate(results, start=1):
        if isinstance(res, Exception):
            reason = f"level {m}: {res}"
            break
        thetas.append(res)

    ratios: dict[int, float] = {}
    for m in range(2, len(thetas)):
        d_prev = thetas[m - 1] - thetas[m - 2]
        d_next = thetas[m] - thetas[m - 1]
        if min(abs(d_prev), abs(d_next)) <= PRECISION_FLOOR * max(1.0, abs(thetas[m - 1])):
            reason = reason or f"parameter spacing at level {m + 1} below the precision floor"
            break
        ratios[m] = d_prev / d_next

    stabilized_at = None
    keys = sorted(ratios)
    for prev, cur in zip(keys, keys[1:]):
        if abs(ratios[cur] - ratios[prev]) / abs(ratios[cur]) < stabilization:
            stabilized_at = cur
            break

    steps = np.diff(thetas)
    alternates = bool(len(steps) >= 2 and np.all(np.sign(steps[1:]) == -np.sign(steps[:-1])))
    if theta_star is None:
        theta_star = tune_theta(n, target, a=a).theta
    # theta_1 = 1 is the trivial rotation; the comparison starts at m = 2.
    errs = [t - theta_star for t in thetas[1:]]
    certified = [e for e in errs if abs(e) > PRECISION_FLOOR]
    approaches = bool(
        len(certified) >= 2
        and all(abs(y) < abs(x) for x, y in zip(certified, certified[1:]))
        and all((x > 0) != (y > 0) for x, y in zip(certified, certified[1:]))
    )
    certified_depth = max(ratios) + 1 if ratios else 0
    truncated = certified_depth < depth - 1
    return DeltaReport(
        thetas,
        ratios,
        theta_star,
        stabilized_at,
        alternates,
        approaches,
        certified_depth,
        truncated,
        reason if truncated else "",
    )


# -- basin rasters --------------------------------------------------------------


@njit(cache=True, nogil=True)
def _classify_kernel(Q, n, rot, z0, max_iter, r_in, r_out, cls, its):
    for k in range(z0.size):
        z = z0[k]
        c = 0
        i = 0
        while True:
            az = abs(z)
            if not az == az or az > r_out:
                c = 2
                break
            if az < r_in:
                c = 1
                break
            if i >= max_iter:
                break
            q = 0j
            for j in range(Q.size):
                q = q * z + Q[j]
            if q == 0:
                c = 2
                i += 1
                break
            zm1 = z - 1.0
            pw = 1.0 + 0j
            for _ in range(n):
                pw = pw * zm1
            z = rot * (1.0 + pw / q)
            i += 1
        cls[k] = c
        its[k] = i


def classify_points(
    B: BlaschkeFraction, z, max_iter: int = 1000, r_in: float = 1e-6, r_out: float = 1e6
) -> tuple[np.ndarray, np.ndarray]:
    """Per point: class (0 undecided, 1 basin of 0, 2 basin of infinity)
    and the number of iterations taken."""
    if not 0.0 < r_in < 1.0 < r_out:
        raise DomainError("need 0 < r_in < 1 < r_out")
    if max_iter < 0:
        raise DomainError("max_iter must be >= 0")
    z = np.ascontiguousarray(z, dtype=complex)
    flat = z.ravel()
    cls = np.empty(flat.size, dtype=np.uint8)
    its = np.empty(flat.size, dtype=np.int32)
    _classify_kernel(np.asarray(B.Q, dtype=float), B.n, complex(B.rotation), flat, int(max_iter), float(r_in), float(r_out), cls, its)
    return cls.reshape(z.shape), its.reshape(z.shape)


@dataclass
class RasterImage:
    window: tuple[float, float, float, float]
    resolution: tuple[int, int]
    classes: np.ndarray
    iterations: np.ndarray
    params: dict

    @property
    def classified_fraction(self) -> float:
        return float(np.count_nonzero(self.classes != UNDECIDED)) / self.classes.size

    def sidecar(self) -> dict:
        counts = {name: int(np.count_nonzero(self.classes == code)) for name, code in
                  (("undecided", UNDECIDED), ("basin_zero", BASIN_ZERO), ("basin_infinity", BASIN_INF))}
        return {
            "window": list(self.window),
            "resolution": list(self.resolution),
            "params": self.params,
            "counts": counts,
            "classified_fraction": self.classified_fraction,
            "pixel_center_convention": "row 0 is the top edge (largest imaginary part)",
        }

    def to_rgb(self) -> np.ndarray:
        """Basin of 0 in blue, basin of infinity in orange, shaded by
        iteration count; undecided pixels black."""
        its = self.iterations.astype(float)
        shade = 1.0 - np.minimum(np.log1p(its) / np.log1p(64.0), 1.0) * 0.75
        rgb = np.zeros(self.classes.shape + (3,), dtype=np.uint8)
        zero = self.classes == BASIN_ZERO
        inf = self.classes == BASIN_INF
        for ch, (cz, ci) in enumerate(((40, 255), (90, 150), (255, 30))):
            rgb[..., ch][zero] = np.round(cz * shade[zero]).astype(np.uint8)
            rgb[..., ch][inf] = np.round(ci * shade[inf]).astype(np.uint8)
        return rgb


def pixel_grid(window, resolution) -> np.ndarray:
    xmin, xmax, ymin, ymax = window
    width, height = resolution
    xs = xmin + (np.arange(width) + 0.5) * ((xmax - xmin) / width)
    ys = ymax - (np.arange(height) + 0.5) * ((ymax - ymin) / height)
    return xs[None, :] + 1j * ys[:, None]


def julia_raster(
    B: BlaschkeFraction,
    window=(-2.0, 2.0, -2.0, 2.0),
    resolution=(800, 800),
    max_iter: int = 1000,
    r_in: float = 1e-6,
    r_out: float = 1e6,
    threads: int | None = None,
) -> RasterImage:
    """Escape-time classification of the pixel centres of ``window``.

    Rows are split into chunks handled on separate threads; every pixel is
    computed independently, so the result does not depend on ``threads``.
    """
    xmin, xmax, ymin, ymax = (float(v) for v in window)
    width, height = (int(v) for v in resolution)
    if not (xmin < xmax and ymin < ymax):
        raise DomainError(f"empty window {window}")
    if width < 1 or height < 1:
        raise DomainError(f"bad resolution {resolution}")
    grid = pixel_grid((xmin, xmax, ymin, ymax), (width, height))
    classes = np.empty((height, width), dtype=np.uint8)
    iters = np.empty((height, width), dtype=np.int32)
    threads = threads or default_threads()
    bounds = np.linspace(0, height, min(height, 4 * threads) + 1).astype(int)

    def work(k):
        lo, hi = bounds[k], bounds[k + 1]
        c, i = classify_points(B, grid[lo:hi], max_iter, r_in, r_out)
        classes[lo:hi] = c
        iters[lo:hi] = i

    _map_parallel(work, range(len(bounds) - 1), threads)
    params = {
        "model": B.to_json(),
        "max_iter": max_iter,
        "r_in": r_in,
        "r_out": r_out,
    }
    return RasterImage((xmin, xmax, ymin, ymax), (width, height), classes, iters, params)
