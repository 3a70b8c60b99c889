import numpy as np
import pytest

from renormlab import blaschke as bl
from renormlab import circlemap as cm
from renormlab import contfrac as cf
from renormlab import experiments as E


def test_rigid_scaling_ratio_is_golden_mean():
    # |q_m g - p_m| = g^(m+1), so successive ratios are g itself
    r = E.scaling_ratios(cm.RigidRotation(cf.GOLDEN_MEAN), 15)
    assert not r.truncated
    assert np.allclose(r.ratios, cf.GOLDEN_MEAN, atol=1e-8)


def test_rigid_scaling_closed_form():
    g = cf.GOLDEN_MEAN
    cr = cm.closest_returns(cm.RigidRotation(g), 12)
    for r in cr.returns:
        assert abs(r.distance) == pytest.approx(g ** (r.level + 1), rel=1e-9)


def test_depth_one_ratio_is_direct(tuned):
    f = tuned(3).map
    r = E.scaling_ratios(f, 1)
    assert len(r.ratios) == 1
    i1 = abs(f.iterate(0.0, 1, 1))
    i2 = abs(f.iterate(0.0, 2, 1))
    assert r.ratios[0] == pytest.approx(i2 / i1, rel=1e-14)
    with pytest.raises(cf.DomainError):
        E.scaling_ratios(f, 0)


def test_tuned_ratios_differ_from_rigid(tuned):
    r = E.scaling_ratios(tuned(3).map, 12)
    assert all(0 < s < 1 for s in r.ratios)
    assert abs(r.ratios[-1] - cf.GOLDEN_MEAN) > 0.1


def test_certified_depth_stops_at_mistuning(tuned):
    f = tuned(3).map
    cert = E.certify_returns(f, 30)
    assert 8 <= cert.depth < 30
    assert "bracket" in cert.reason
    loose = E.certify_returns(f, 30, cert_tol=1e-3)
    assert loose.depth > cert.depth


def test_certified_depth_without_bracket():
    cert = E.certify_returns(cm.RigidRotation(cf.GOLDEN_MEAN), 10)
    assert cert.depth == 10 and cert.reason == ""
    cert = E.certify_returns(cm.RigidRotation(0.4), 10)
    assert cert.depth < 10 and cert.reason


def test_universality_same_family_twice(tuned):
    f = tuned(3).map
    rep = E.universality_compare([f, f], 6, threads=2)
    assert rep.discrepancy == [0.0] * 6
    assert rep.c0_distances == [0.0] * len(rep.c0_distances)
    assert rep.exponent == 3


def test_universality_rejects_mixed_exponents(tuned):
    with pytest.raises(cf.DomainError):
        E.universality_compare([tuned(3).map, tuned(5, tol=1e-10).map], 4)
    with pytest.raises(cf.DomainError):
        E.universality_compare([tuned(3).map], 4)


def test_universality_rejects_different_rotation_numbers(tuned):
    with pytest.raises(cf.DomainError):
        E.universality_compare([tuned(3).map, tuned(3, "silver").map], 4)


def test_universality_negative_control(tuned):
    rep = E.universality_compare(
        [tuned(3).map, cm.RigidRotation(cf.GOLDEN_MEAN)], 12, allow_mixed=True
    )
    assert rep.exponent is None
    assert min(rep.discrepancy[-4:]) > 0.1


def test_universality_report_json(tuned):
    rep = E.universality_compare([tuned(3).map, tuned(3, a=0.3).map], 5, target=cf.golden())
    data = rep.to_json()
    assert data["target"]["terms"][:3] == [1, 1, 1]
    assert len(data["ratios"]) == 2 and len(data["discrepancy"]) == 5


def test_convergence_identical_maps(tuned):
    rep = E.renorm_convergence(tuned(3).map, tuned(3).map, 6)
    assert rep.distances == [0.0] * 7
    assert not rep.truncated


def test_convergence_decreases(tuned):
    rep = E.renorm_convergence(tuned(3).map, tuned(3, a=0.3).map, 30)
    assert rep.truncated and rep.reason
    assert rep.decreasing_from(2)
    assert rep.distances[-1] < rep.distances[2]


def test_convergence_n5(tuned):
    rep = E.renorm_convergence(tuned(5).map, tuned(5, a=0.3).map, 30)
    assert rep.decreasing_from(2)


def test_delta_report(tuned):
    rep = E.delta_estimate(3, cf.golden(), 14, theta_star=tuned(3).theta)
    assert rep.alternates and rep.approaches
    assert rep.stabilized_at is not None
    assert -3.0 < rep.ratios[13] < -2.7
    assert rep.to_json()["ratios"]["13"] == rep.ratios[13]
    with pytest.raises(cf.DomainError):
        E.delta_estimate(3, cf.golden(), 2)


def test_delta_flags_budget():
    rep = E.delta_estimate(3, cf.golden(), 12, max_orbit=50, theta_star=0.6136486388963931)
    assert rep.truncated and "exceeds" in rep.reason


def test_classify_special_points():
    B = bl.build(3)
    cls, its = E.classify_points(B, np.array([0.0, 3.0, 1 / 3, 100.0, 1e7]))
    assert list(cls) == [E.BASIN_ZERO, E.BASIN_ZERO, E.BASIN_INF, E.BASIN_INF, E.BASIN_INF]
    assert list(its[:2]) == [0, 1]
    assert its[4] == 0


def test_unit_circle_is_undecided(tuned):
    B = tuned(3).map.B
    z = np.exp(2j * np.pi * np.linspace(0, 1, 2001))
    cls, its = E.classify_points(B, z, max_iter=1000)
    assert np.all(cls == E.UNDECIDED)
    assert np.all(its == 1000)


def test_classify_validates_radii():
    with pytest.raises(cf.DomainError):
        E.classify_points(bl.build(3), [0.5], r_in=2.0)


def test_basin_symmetry(tuned):
    B = tuned(3).map.B
    rng = np.random.default_rng(7)
    z = rng.uniform(0.05, 3.0, 3000) * np.exp(2j * np.pi * rng.random(3000))
    c1, i1 = E.classify_points(B, z)
    c2, i2 = E.classify_points(B, 1 / np.conj(z))
    swapped = np.array([E.UNDECIDED, E.BASIN_INF, E.BASIN_ZERO])[c2]
    # long orbits shadow the Julia set and amplify rounding
    fast = (i1 < 200) & (i2 < 200) & (c1 != E.UNDECIDED)
    assert fast.mean() > 0.7
    assert np.array_equal(c1[fast], swapped[fast])
    assert np.mean(c1 == swapped) >= 0.99


def test_raster_determinism_across_threads(tuned):
    B = tuned(3).map.B
    a = E.julia_raster(B, resolution=(96, 64), threads=1)
    b = E.julia_raster(B, resolution=(96, 64), threads=4)
    assert np.array_equal(a.classes, b.classes)
    assert np.array_equal(a.iterations, b.iterations)
    assert a.classes.shape == (64, 96)
    assert a.sidecar()["counts"]["undecided"] == int(np.count_nonzero(a.classes == 0))
    rgb = a.to_rgb()
    assert rgb.shape == (64, 96, 3) and rgb.dtype == np.uint8


def test_pixel_grid_orientation():
    grid = E.pixel_grid((-1, 1, -1, 1), (4, 2))
    assert grid[0, 0] == complex(-0.75, 0.5)
    assert grid[1, 3] == complex(0.75, -0.5)


def test_raster_rejects_bad_window():
    with pytest.raises(cf.DomainError):
        E.julia_raster(bl.build(3), window=(1, -1, 0, 1), resolution=(4, 4))
    with pytest.raises(cf.DomainError):
        E.julia_raster(bl.build(3), resolution=(0, 4))


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("RENORMLAB_THREADS", "3")
    assert E.default_threads() == 3
    monkeypatch.setenv("RENORMLAB_THREADS", "zero")
    with pytest.raises(cf.DomainError):
        E.default_threads()
    monkeypatch.delenv("RENORMLAB_THREADS")
    assert E.default_threads() >= 1
