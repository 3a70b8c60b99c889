import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from renormlab import circlemap as cm
from renormlab import contfrac as cf
from renormlab import pairs as P


def test_expression_bookkeeping():
    f = cm.RigidRotation(0.3)
    e = P.Compose(P.Power(P.Iterate(f, 2, 1), 3), P.Iterate(f, 1, 0))
    assert e.iterates == 7
    assert e.translation == 3
    assert e(0.0) == pytest.approx(7 * 0.3 - 3)
    r = P.rescale(P.rescale(e, 2.0), -0.5)
    assert isinstance(r.inner, P.Compose) and r.scale == -1.0
    assert r(0.1) == pytest.approx(-e(-0.1))


def test_compose_merges_iterates_and_rescalings():
    f = cm.ArnoldCircleMap(0.6)
    a, b = P.Iterate(f, 3, 2), P.Iterate(f, 5, 3)
    merged = P.compose(P.rescale(a, 0.7), P.rescale(b, 0.7))
    assert merged == P.Rescale(P.Iterate(f, 8, 5), 0.7)
    plain = P.Compose(P.Rescale(a, 0.7), P.Rescale(b, 0.7))
    xs = np.linspace(-0.1, 0.1, 11)
    assert np.allclose(merged(xs), plain(xs), atol=1e-13)
    assert P.power(P.Iterate(f, 2, 1), 3) == P.Iterate(f, 6, 3)
    assert P.power(a, 1) is a
    assert isinstance(P.compose(P.Affine(1, 0), a), P.Compose)


def test_interval_map_sorts_domain():
    m = P.IntervalMap(P.Affine(1.0, 0.0), (0.5, -0.5))
    assert m.domain == (-0.5, 0.5)
    assert m.length == 1.0


def test_rigid_pair_geometry():
    g = cf.GOLDEN_MEAN
    pair = P.rigid_pair(g, 0)
    assert pair.xi0 == pytest.approx(g)
    assert pair.eta0 == pytest.approx(g - 1)
    assert pair.ratio == pytest.approx(g)
    assert pair.exponent is None


@given(st.lists(st.integers(1, 5), min_size=16, max_size=16))
def test_rigid_heights_are_the_terms(terms):
    rho = cf.truncated(terms).value()
    pair = P.normalize(P.rigid_pair(rho, 0))
    got = P.rotation_number_pair(pair, 8)
    assert got.terms == tuple(terms[1:9])


def test_rigid_renormalization_is_self_similar():
    pair = P.normalize(P.rigid_pair(cf.GOLDEN_MEAN, 0))
    orbit = P.renorm_orbit(pair, 12)
    assert not orbit.truncated
    assert all(r.height == 1 for r in orbit.records)
    for r in orbit.records:
        assert r.ratio == pytest.approx(cf.GOLDEN_MEAN, abs=1e-9)
    for p in orbit.pairs:
        assert p.xi0 == pytest.approx(1.0) and p.eta0 < 0


def test_infinite_height_for_fixed_point():
    pair = P.make_pair(P.Affine(0.5, 0.1), P.Affine(1.0, 1.0), None)
    assert pair.eta.domain == (0.0, 1.0)
    assert P.height(pair) == P.INFINITE_HEIGHT
    with pytest.raises(P.NotRenormalizableError):
        P.renormalize(pair)
    assert P.rotation_number_pair(pair, 4).exhausted


def test_height_undetermined_on_exact_hit():
    pair = P.make_pair(P.Affine(1.0, -0.5), P.Affine(1.0, 1.0), None)
    with pytest.raises(P.UndeterminedHeightError):
        P.height(pair)


def test_from_circle_map_rejects_uncertifiable_levels():
    with pytest.raises(P.CertificationError) as info:
        P.from_circle_map(cm.RigidRotation(0.4), 3)
    assert info.value.deepest is not None
    with pytest.raises(P.PairError):
        P.from_circle_map(cm.RigidRotation(0.4), -1)


def test_tuned_pair_axioms(tuned):
    f = tuned(3).map
    for m in (0, 3, 8):
        raw = P.from_circle_map(f, m)
        d = P.check_pair(raw)
        assert d.passes, d
        d = P.check_pair(P.normalize(raw))
        assert d.passes, d
        assert d.fitted_exponent == pytest.approx(3, abs=0.05)


@pytest.mark.parametrize("n", [5, 7])
def test_higher_order_pairs(tuned, n):
    f = tuned(n, tol=1e-10).map
    d = P.check_pair(P.normalize(P.from_circle_map(f, 4)))
    assert d.passes
    assert d.fitted_exponent == pytest.approx(n, abs=0.05)


def test_renormalization_is_the_next_return_pair(tuned):
    f = tuned(3).map
    for m in range(0, 8):
        r = P.renormalize(P.normalize(P.from_circle_map(f, m)))
        nxt = P.normalize(P.from_circle_map(f, m + 1))
        assert r.eta.expr.inner == nxt.eta.expr.inner
        assert r.xi.expr.inner == nxt.xi.expr.inner
        assert P.sup_difference(r, nxt) < 1e-12
        assert r.provenance["height"] == 1


def test_renormalize_orientation_and_scale(tuned):
    pair = P.normalize(P.from_circle_map(tuned(3).map, 2))
    r = P.renormalize(pair)
    assert r.xi0 == pytest.approx(1.0)
    assert r.eta0 < 0
    assert abs(r.scale) < abs(pair.scale)


def test_c0_distance_properties(tuned):
    f, g = tuned(3).map, tuned(3, a=0.3).map
    a, b = P.from_circle_map(f, 3), P.from_circle_map(g, 3)
    assert P.c0_distance(a, a) == 0.0
    assert P.c0_distance(a, b) == pytest.approx(P.c0_distance(b, a))
    assert P.c0_distance(a, P.normalize(a)) == pytest.approx(0.0, abs=1e-12)


def test_renorm_records_and_csv(tuned):
    orbit = P.renorm_orbit(P.from_circle_map(tuned(3).map, 0), 6)
    assert [r.level for r in orbit.records] == list(range(6))
    lens = [r.len_xi for r in orbit.records]
    assert all(b < a for a, b in zip(lens, lens[1:]))
    row = orbit.records[0].csv_row()
    assert len(row) == len(P.RenormRecord.CSV_COLUMNS)
    assert row[1] == 1 and row[-1] == ""


def test_csv_row_infinite_height():
    rec = P.RenormRecord(0, P.INFINITE_HEIGHT, 1.0, 1.0, 0.5, 0.5, 0.1)
    assert rec.csv_row()[1] == "inf"


def test_renorm_orbit_stops_on_infinite_height():
    pair = P.make_pair(P.Affine(0.5, 0.1), P.Affine(1.0, 1.0), None)
    orbit = P.renorm_orbit(pair, 5)
    assert len(orbit.records) == 1 and math.isinf(orbit.records[0].height)
    assert not orbit.truncated
