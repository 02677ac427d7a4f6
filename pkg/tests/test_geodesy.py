import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lakemesh import geodesy
from lakemesh.errors import DomainError, OutOfBandError
from lakemesh.geodesy import GeoCoord, UtmCoord

pyproj = pytest.importorskip("pyproj")


def pyproj_utm(lat, lon, zone, south=False):
    crs = pyproj.CRS.from_dict({"proj": "utm", "zone": zone, "south": south, "ellps": "WGS84"})
    t = pyproj.Transformer.from_crs("EPSG:4326", crs, always_xy=True)
    return t.transform(lon, lat)


# frozen from pyproj 3.7.1 (PROJ etmerc) for the College Station example
COLLEGE_STATION_E = 754985.5010
COLLEGE_STATION_N = 3390505.7529


def test_zone_for_longitude():
    assert geodesy.zone_for_longitude(-180.0) == 1
    assert geodesy.zone_for_longitude(0.0) == 31
    assert geodesy.zone_for_longitude(-96.34) == 14
    assert geodesy.zone_for_longitude(179.999) == 60
    with pytest.raises(DomainError):
        geodesy.zone_for_longitude(180.0)
    with pytest.raises(DomainError):
        geodesy.zone_for_longitude(-181.0)


def test_central_meridian_point():
    u = geodesy.wgs84_to_utm(GeoCoord(0.0, 3.0), forced_zone=31)
    assert u.easting == pytest.approx(500000.0, abs=1e-6)
    assert u.northing == pytest.approx(0.0, abs=1e-6)
    g = geodesy.utm_to_wgs84(UtmCoord(500000.0, 0.0, 31, "N"))
    assert (g.lat, g.lon) == pytest.approx((0.0, 3.0), abs=1e-12)


def test_east_of_meridian_increases_easting():
    u = geodesy.wgs84_to_utm(GeoCoord(0.0, 3.000001))
    assert u.easting > 500000.0
    assert abs(u.northing) < 1e-6


def test_college_station_against_oracle():
    u = geodesy.wgs84_to_utm(GeoCoord(30.62, -96.34))
    assert (u.zone, u.hemisphere) == (14, "N")
    e, n = pyproj_utm(30.62, -96.34, 14)
    assert abs(u.easting - e) < 1e-3 and abs(u.northing - n) < 1e-3
    assert u.easting == pytest.approx(COLLEGE_STATION_E, abs=1e-3)
    assert u.northing == pytest.approx(COLLEGE_STATION_N, abs=1e-3)
    g = geodesy.utm_to_wgs84(u)
    assert g.lat == pytest.approx(30.62, abs=1e-8)
    assert g.lon == pytest.approx(-96.34, abs=1e-8)


def test_random_points_match_pyproj():
    rng = np.random.default_rng(3)
    lat = rng.uniform(-80, 84, 500)
    zone = rng.integers(1, 61, 500)
    dlon = rng.uniform(-3, 3, 500)
    for la, z, d in zip(lat, zone, dlon):
        lon = float(geodesy.normalize_lon(geodesy.central_meridian(int(z)) + d))
        hemi = "N" if la >= 0 else "S"
        e, n = geodesy.project(la, lon, int(z), hemi)
        pe, pn = pyproj_utm(la, lon, int(z), south=hemi == "S")
        assert abs(e - pe) < 1e-3 and abs(n - pn) < 1e-3


def test_forced_zone_across_boundary_matches_pyproj():
    # 7 degrees off the central meridian: a survey straddling into the next zone
    for lat in (-45.0, 0.5, 30.0, 60.0):
        lon = geodesy.central_meridian(14) + 7.0
        hemi = "N" if lat >= 0 else "S"
        e, n = geodesy.project(lat, lon, 14, hemi)
        pe, pn = pyproj_utm(lat, lon, 14, south=hemi == "S")
        assert abs(e - pe) < 1e-3 and abs(n - pn) < 1e-3
        la, lo = geodesy.unproject(e, n, 14, hemi)
        assert abs(la - lat) < 1e-9 and abs(lo - lon) < 1e-9


def test_forced_zone_too_far_rejected():
    with pytest.raises(DomainError):
        geodesy.wgs84_to_utm(GeoCoord(10.0, geodesy.central_meridian(14) + 9.5), forced_zone=14)


def test_out_of_band_latitude():
    with pytest.raises(OutOfBandError):
        GeoCoord(85.0, 0.0)
    with pytest.raises(OutOfBandError):
        geodesy.project(-81.0, 3.0, 31)


def test_utm_window_errors():
    with pytest.raises(OutOfBandError):
        geodesy.unproject(500000.0, -1.0, 31, "N")
    with pytest.raises(OutOfBandError):
        geodesy.unproject(float("nan"), 0.0, 31, "N")
    with pytest.raises(DomainError):
        UtmCoord(500000.0, 0.0, 61, "N")
    with pytest.raises(DomainError):
        UtmCoord(500000.0, 0.0, 31, "X")


def test_southern_hemisphere_false_northing():
    u = geodesy.wgs84_to_utm(GeoCoord(-0.000001, 3.0))
    assert u.hemisphere == "S"
    assert u.northing == pytest.approx(10000000.0, abs=0.2)


def test_metric_sanity():
    _, n0 = geodesy.project(30.0, -99.0, 14)
    _, n1 = geodesy.project(30.001, -99.0, 14)
    assert (n1 - n0) == pytest.approx(110.6, rel=0.01)


def test_monotonicity_in_zone():
    lat = np.linspace(-79.9, 83.9, 400)
    _, n_north = geodesy.project(lat[lat >= 0], 3.0, 31, "N")
    _, n_south = geodesy.project(lat[lat < 0], 3.0, 31, "S")
    assert np.all(np.diff(n_north) > 0) and np.all(np.diff(n_south) > 0)
    lon = np.linspace(0.01, 5.99, 400)
    e, _ = geodesy.project(45.0, lon, 31, "N")
    assert np.all(np.diff(e) > 0)


def test_vectorised_round_trip():
    rng = np.random.default_rng(11)
    lat = rng.uniform(0, 84, 1000)
    lon = rng.uniform(-6, 0, 1000)  # zone 30
    e, n = geodesy.project(lat, lon, 30, "N")
    la, lo = geodesy.unproject(e, n, 30, "N")
    assert np.max(np.abs(la - lat)) < 1e-9
    assert np.max(np.abs(lo - lon)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(
    lat=st.floats(-80, 84, allow_nan=False),
    lon=st.floats(-180, 179.999999, allow_nan=False),
)
def test_round_trip_property(lat, lon):
    u = geodesy.wgs84_to_utm(GeoCoord(lat, lon))
    g = geodesy.utm_to_wgs84(u)
    assert abs(g.lat - lat) < 1e-9
    dlon = (g.lon - lon + 180) % 360 - 180
    assert abs(dlon) < 1e-9


@settings(max_examples=200, deadline=None)
@given(
    e=st.floats(200000, 800000, allow_nan=False),
    n=st.floats(0, 7_000_000, allow_nan=False),
    zone=st.integers(1, 60),
)
def test_inverse_round_trip_property(e, n, zone):
    lat, lon = geodesy.unproject(e, n, zone, "N")
    e2, n2 = geodesy.project(lat, lon, zone, "N")
    assert abs(e2 - e) < 1e-3 and abs(n2 - n) < 1e-3
