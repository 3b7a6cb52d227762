import math

import numpy as np
import pytest

from roadpoly.errors import InvalidInputError
from roadpoly.geo import EARTH_RADIUS_M, GeoPoint, PlanarPoint, to_geodetic, to_planar


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Independent great-circle distance for the fidelity check."""
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dp = p2 - p1
    dl = math.radians(b.lon - a.lon)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


def test_identity_at_origin():
    o = GeoPoint(44.0, 26.0)
    p = to_planar(o, o)
    assert p.x == 0.0 and p.y == 0.0


def test_one_meter_north():
    o = GeoPoint(44.0, 26.0)
    g = GeoPoint(44.0 + math.degrees(1.0 / EARTH_RADIUS_M), 26.0)
    p = to_planar(g, o)
    assert abs(p.x) < 1e-6
    assert abs(p.y - 1.0) < 1e-6


def test_matches_independent_formula_evaluation():
    # frozen from a separate evaluation of
    # x = R*cos(rad(44.4268))*rad(0.0075), y = R*rad(0.0032)
    p = to_planar(GeoPoint(44.4300, 26.1100), GeoPoint(44.4268, 26.1025))
    assert p.x == pytest.approx(595.5708588362486, abs=1e-9)
    assert p.y == pytest.approx(355.82425674726613, abs=1e-9)


def test_round_trip_zero():
    o = GeoPoint(51.5, -0.1)
    g = to_geodetic(PlanarPoint(0.0, 0.0), o)
    assert g == o


def test_round_trip_fuzz():
    rng = np.random.default_rng(42)
    o = GeoPoint(44.4268, 26.1025)
    for _ in range(200):
        dx, dy = rng.uniform(-50_000, 50_000, 2)
        g = to_geodetic(PlanarPoint(dx, dy), o)
        back = to_planar(g, o)
        g2 = to_geodetic(back, o)
        assert abs(g2.lat - g.lat) < 1e-9
        assert abs(g2.lon - g.lon) < 1e-9


def test_locally_distance_faithful():
    # fixed cos(origin.lat) scaling drifts with latitude, so the 0.1%
    # budget holds near the origin: a city map around its centroid
    rng = np.random.default_rng(7)
    o = GeoPoint(44.4268, 26.1025)
    for _ in range(100):
        base = PlanarPoint(*rng.uniform(-5_000, 5_000, 2))
        offset = rng.uniform(-500, 500, 2)
        other = PlanarPoint(base.x + offset[0], base.y + offset[1])
        ga, gb = to_geodetic(base, o), to_geodetic(other, o)
        planar = base.distance_to(other)
        great_circle = haversine_m(ga, gb)
        if great_circle > 1.0:
            assert abs(planar - great_circle) / great_circle < 1e-3


def test_out_of_range_rejected():
    with pytest.raises(InvalidInputError):
        GeoPoint(91.0, 0.0)
    with pytest.raises(InvalidInputError):
        GeoPoint(0.0, -181.0)
    with pytest.raises(InvalidInputError):
        to_planar(GeoPoint(46.0, 26.0), GeoPoint(44.0, 26.0))
    with pytest.raises(InvalidInputError):
        to_geodetic(PlanarPoint(150_000.0, 0.0), GeoPoint(44.0, 26.0))
    with pytest.raises(InvalidInputError):
        PlanarPoint(math.nan, 0.0)
