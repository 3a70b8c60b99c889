from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from renormlab import circlemap as cm
from renormlab import contfrac as cf


def record_times(fmap, length):
    """Brute force: k is a closest-return time when F^k(0) is nearer to an
    integer than every earlier orbit point."""
    orbit = cm.Orbit(fmap)
    best = np.inf
    out = []
    for k in range(1, length + 1):
        _, s = orbit.nearest(k)
        if abs(s) < best:
            best = abs(s)
            out.append(k)
    return out


def test_rigid_lift_and_call():
    f = cm.RigidRotation(0.25)
    assert f(0.0) == 0.25
    assert f(3.5) == pytest.approx(3.75)
    assert np.allclose(f(np.array([0.0, 1.0, -2.25])), [0.25, 1.25, -2.0])


@given(st.floats(-50, 50), st.integers(-5, 5))
def test_lift_periodicity(x, k):
    f = cm.ArnoldCircleMap(0.3)
    assert f(x + k) == pytest.approx(f(x) + k, abs=1e-12)


@given(st.floats(0.0, 1.0), st.floats(-0.1, 0.1))
def test_sine_map_monotone_for_small_amplitude(omega, amp):
    f = cm.SineCircleMap(omega, amp)
    xs = np.linspace(-1, 1, 201)
    assert np.all(np.diff(f(xs)) > 0)


def test_iterate_keeps_windings_exact():
    f = cm.RigidRotation(0.5)
    assert f.iterate(0.0, 1000) == 500.0
    assert f.iterate(0.0, 1000, 500) == 0.0
    xs = np.array([0.0, 0.25])
    assert np.allclose(f.iterate(xs, 4, 2), xs)


def test_orbit_distance_matches_iterate():
    f = cm.ArnoldCircleMap(0.61)
    orbit = cm.Orbit(f)
    for k, p in ((1, 1), (5, 3), (40, 24), (300, 181)):
        assert orbit.distance(k, p) == pytest.approx(f.iterate(0.0, k, p), abs=1e-12)
    assert len(orbit) > 300


def test_rational_lock():
    an = cm.analyze_rotation(cm.RigidRotation(0.4))
    assert an.lock == Fraction(2, 5)
    assert an.cf.terms == (2, 2) and an.cf.exhausted
    assert cm.rotation_number(cm.RigidRotation(0.4)).rho == 0.4


def test_zero_rotation_lock():
    an = cm.analyze_rotation(cm.RigidRotation(0.0))
    assert an.lock == 0


@given(st.lists(st.integers(1, 6), min_size=12, max_size=12))
def test_rigid_terms_recovered(terms):
    rho = cf.truncated(terms).value()
    an = cm.analyze_rotation(cm.RigidRotation(rho), levels=6)
    assert an.terms[:6] == tuple(terms[:6])


@given(st.lists(st.integers(1, 4), min_size=14, max_size=14))
def test_closest_return_times_match_brute_force(terms):
    f = cm.RigidRotation(cf.truncated(terms).value())
    cr = cm.closest_returns(f, 8)
    qs = [r.q for r in cr.returns]
    assert [q for q in record_times(f, qs[-1]) if q >= qs[0]] == sorted(set(qs))


def test_closest_returns_critical_map_brute_force():
    f = cm.ArnoldCircleMap(0.6066610634702)
    cr = cm.closest_returns(f, 8)
    qs = sorted({r.q for r in cr.returns})
    assert record_times(f, qs[-1]) == qs
    signs = [np.sign(r.distance) for r in cr.returns]
    assert all(a != b for a, b in zip(signs, signs[1:]))


def test_closest_returns_golden_rigid():
    cr = cm.closest_returns(cm.RigidRotation(cf.GOLDEN_MEAN), 10)
    assert [r.q for r in cr.returns] == [1, 2, 3, 5, 8, 13, 21, 34, 55, 89]
    assert not cr.partial
    g = cf.GOLDEN_MEAN
    for r in cr.returns:
        assert r.distance == pytest.approx(r.q * g - r.p, abs=1e-13)


def test_closest_returns_partial_on_budget():
    cr = cm.closest_returns(cm.RigidRotation(cf.GOLDEN_MEAN), 30, max_orbit=100)
    assert cr.partial
    assert len(cr.returns) < 30


def test_closest_returns_validates_levels():
    with pytest.raises(cf.DomainError):
        cm.closest_returns(cm.RigidRotation(0.3), 0)


@given(st.floats(0.01, 0.99))
def test_rotation_number_error_bound_is_honest(rho):
    est = cm.rotation_number(cm.RigidRotation(rho), tol=1e-9)
    assert abs(est.rho - rho) <= est.error_bound + 1e-12


def test_birkhoff_fallback_when_budget_is_tiny():
    est = cm.rotation_number(cm.RigidRotation(cf.GOLDEN_MEAN), tol=1e-12, max_orbit=1000)
    assert not est.converged
    assert abs(est.rho - cf.GOLDEN_MEAN) <= est.error_bound


def test_rotation_estimate_json():
    est = cm.rotation_number(cm.RigidRotation(cf.SILVER_MEAN))
    data = est.to_json()
    assert data["method"] == "closest-returns"
    assert data["cf_prefix"]["terms"][:5] == [2, 2, 2, 2, 2]


def test_validate_families():
    d = cm.validate(cm.ArnoldCircleMap(0.3))
    assert d.passes and d.critical
    assert d.fitted_exponent == pytest.approx(3, abs=0.1)
    d = cm.validate(cm.SineCircleMap(0.3, 0.1))
    assert d.passes and not d.critical and d.fitted_exponent is None
    d = cm.validate(cm.SineCircleMap(0.3, 0.3))
    assert not d.passes
    assert cm.validate(cm.RigidRotation(0.2)).passes


def test_validate_flags_unnormalised():
    d = cm.validate(cm.ArnoldCircleMap(0.0))
    assert not d.normalized


def test_validate_grid_check():
    with pytest.raises(cf.DomainError):
        cm.validate(cm.RigidRotation(0.1), grid=8)


def test_nearest_odd():
    assert [cm.nearest_odd(x) for x in (2.9, 3.2, 4.9, 5.1, 1.0)] == [3, 3, 5, 5, 1]


def test_orbit_of_zero():
    res = cm.orbit_of_zero(cm.RigidRotation(0.25), 8)
    assert res.points == [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]
    assert not res.truncated
    with pytest.raises(cf.DomainError):
        cm.orbit_of_zero(cm.RigidRotation(0.25), 0)


def test_orbit_of_zero_truncates_near_floor():
    class Nudged(cm.CircleMapLift):
        def lift(self, s):
            return s + 0.5 + 1e-15

    res = cm.orbit_of_zero(Nudged(), 10)
    assert res.truncated and len(res.points) == 1


def test_family_registry():
    assert {"rigid", "sine", "arnold", "blaschke", "blaschke-precomposed"} <= set(cm.family_names())
    name, params = cm.parse_family_spec("blaschke:n=3,theta=0.61")
    assert name == "blaschke" and params == {"n": 3, "theta": 0.61}
    f = cm.make_family(name, **params)
    assert f.spec == {"family": "blaschke", "n": 3, "theta": 0.61}
    with pytest.raises(cf.DomainError):
        cm.make_family("nope")
    with pytest.raises(cf.DomainError):
        cm.parse_family_spec("rigid:rho")


def test_register_user_family():
    cm.register_family("shifted-rigid", lambda rho: cm.RigidRotation(rho + 0.5))
    assert cm.make_family("shifted-rigid", rho=0.1).rho == pytest.approx(0.6)
