"""WGS84 <-> UTM conversion.

Transverse Mercator via the Krueger series carried to sixth order in the third
flattening ``n`` (Karney 2011), which is accurate to a few nanometres inside a
zone and stays sub-millimetre out to ~9 degrees from the central meridian, so
a survey that straddles a zone boundary can be projected into one forced zone.

All array functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, OutOfBandError

# WGS84
A_AXIS = 6378137.0
FLATTENING = 1 / 298.257223563
K0 = 0.9996
FALSE_EASTING = 500000.0
FALSE_NORTHING_SOUTH = 10000000.0

LAT_MIN, LAT_MAX = -80.0, 84.0
# Forced zones may reach 9 degrees past the central meridian (~1003 km at the
# equator), so the accepted easting window is wider than the nominal
# 100-900 km band of a native zone.
EASTING_MIN, EASTING_MAX = -600000.0, 1600000.0
NORTHING_MIN, NORTHING_MAX = 0.0, 10000000.0
MAX_FORCED_OFFSET_DEG = 9.0

_N = FLATTENING / (2 - FLATTENING)
_E2 = FLATTENING * (2 - FLATTENING)
_E = math.sqrt(_E2)


def _krueger_coefficients(n: float):
    n2, n3, n4, n5, n6 = n**2, n**3, n**4, n**5, n**6
    rect = A_AXIS / (1 + n) * (1 + n2 / 4 + n4 / 64 + n6 / 256)
    alpha = (
        n / 2 - 2 * n2 / 3 + 5 * n3 / 16 + 41 * n4 / 180 - 127 * n5 / 288 + 7891 * n6 / 37800,
        13 * n2 / 48 - 3 * n3 / 5 + 557 * n4 / 1440 + 281 * n5 / 630 - 1983433 * n6 / 1935360,
        61 * n3 / 240 - 103 * n4 / 140 + 15061 * n5 / 26880 + 167603 * n6 / 181440,
        49561 * n4 / 161280 - 179 * n5 / 168 + 6601661 * n6 / 7257600,
        34729 * n5 / 80640 - 3418889 * n6 / 1995840,
        212378941 * n6 / 319334400,
    )
    beta = (
        n / 2 - 2 * n2 / 3 + 37 * n3 / 96 - n4 / 360 - 81 * n5 / 512 + 96199 * n6 / 604800,
        n2 / 48 + n3 / 15 - 437 * n4 / 1440 + 46 * n5 / 105 - 1118711 * n6 / 3870720,
        17 * n3 / 480 - 37 * n4 / 840 - 209 * n5 / 4480 + 5569 * n6 / 90720,
        4397 * n4 / 161280 - 11 * n5 / 504 - 830251 * n6 / 7257600,
        4583 * n5 / 161280 - 108847 * n6 / 3991680,
        20648693 * n6 / 638668800,
    )
    return rect, alpha, beta


_RECT, _ALPHA, _BETA = _krueger_coefficients(_N)


@dataclass(frozen=True)
class GeoCoord:
    lat: float
    lon: float

    def __post_init__(self):
        if not LAT_MIN <= self.lat <= LAT_MAX:
            raise OutOfBandError(f"latitude {self.lat} outside UTM band [{LAT_MIN}, {LAT_MAX}]")
        if not -180.0 <= self.lon < 180.0:
            raise DomainError(f"longitude {self.lon} not normalized to [-180, 180)")


@dataclass(frozen=True)
class UtmCoord:
    easting: float
    northing: float
    zone: int
    hemisphere: str  # "N" or "S"

    def __post_init__(self):
        if not 1 <= self.zone <= 60:
            raise DomainError(f"UTM zone {self.zone} not in 1..60")
        if self.hemisphere not in ("N", "S"):
            raise DomainError(f"hemisphere must be 'N' or 'S', got {self.hemisphere!r}")
        _check_utm_window(np.asarray(self.easting), np.asarray(self.northing))


def normalize_lon(lon):
    """Wrap longitude into [-180, 180)."""
    return (np.asarray(lon, dtype=float) + 180.0) % 360.0 - 180.0


def zone_for_longitude(lon: float) -> int:
    if not -180.0 <= lon < 180.0:
        raise DomainError(f"longitude {lon} not in [-180, 180)")
    return int(min(max(math.floor((lon + 180.0) / 6.0) + 1, 1), 60))


def central_meridian(zone: int) -> float:
    return 6.0 * zone - 183.0


def _check_utm_window(easting, northing):
    if np.any(~np.isfinite(easting)) or np.any(~np.isfinite(northing)):
        raise OutOfBandError("non-finite UTM coordinate")
    if np.any(easting <= EASTING_MIN) or np.any(easting >= EASTING_MAX):
        raise OutOfBandError(f"easting outside validity window ({EASTING_MIN}, {EASTING_MAX})")
    if np.any(northing < NORTHING_MIN) or np.any(northing >= NORTHING_MAX):
        raise OutOfBandError(f"northing outside validity window [{NORTHING_MIN}, {NORTHING_MAX})")


def project(lat, lon, zone: int, hemisphere: str | None = None):
    """Project geodetic degrees into ``zone``; returns ``(easting, northing)``.

    ``hemisphere`` defaults to the sign of the (first) latitude; when given it
    selects the false northing for every point.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if np.any(~np.isfinite(lat)) or np.any(lat < LAT_MIN) or np.any(lat > LAT_MAX):
        raise OutOfBandError(f"latitude outside UTM band [{LAT_MIN}, {LAT_MAX}]")
    if not 1 <= zone <= 60:
        raise DomainError(f"UTM zone {zone} not in 1..60")
    dlon = normalize_lon(lon - central_meridian(zone))
    if np.any(np.abs(dlon) >= MAX_FORCED_OFFSET_DEG):
        raise DomainError(f"longitude more than {MAX_FORCED_OFFSET_DEG} degrees from zone {zone} meridian")
    if hemisphere is None:
        hemisphere = "N" if float(np.ravel(lat)[0]) >= 0 else "S"

    phi = np.radians(lat)
    lam = np.radians(dlon)
    sphi = np.sin(phi)
    # conformal latitude through its tangent
    tau = np.tan(phi)
    sig = np.sinh(_E * np.arctanh(_E * sphi))
    taup = tau * np.sqrt(1 + sig**2) - sig * np.sqrt(1 + tau**2)
    xip = np.arctan2(taup, np.cos(lam))
    etap = np.arcsinh(np.sin(lam) / np.hypot(taup, np.cos(lam)))

    xi = xip.copy()
    eta = etap.copy()
    for j, a in enumerate(_ALPHA, start=1):
        xi = xi + a * np.sin(2 * j * xip) * np.cosh(2 * j * etap)
        eta = eta + a * np.cos(2 * j * xip) * np.sinh(2 * j * etap)

    easting = FALSE_EASTING + K0 * _RECT * eta
    northing = K0 * _RECT * xi
    if hemisphere == "S":
        # a latitude a hair south of the equator would otherwise round onto the open bound
        northing = np.minimum(northing + FALSE_NORTHING_SOUTH, np.nextafter(FALSE_NORTHING_SOUTH, 0.0))
    return easting, northing


def _tau_from_taup(taup):
    tau = taup / (1 - _E2)
    for _ in range(8):
        tau1 = np.sqrt(1 + tau**2)
        sig = np.sinh(_E * np.arctanh(_E * tau / tau1))
        taupa = np.sqrt(1 + sig**2) * tau - sig * tau1
        dtau = (taup - taupa) / np.sqrt(1 + taupa**2) * (1 + (1 - _E2) * tau**2) / ((1 - _E2) * tau1)
        tau = tau + dtau
        if np.all(np.abs(dtau) <= 1e-15 * np.maximum(1.0, np.abs(tau))):
            break
    return tau


def unproject(easting, northing, zone: int, hemisphere: str):
    """Inverse of :func:`project`; returns ``(lat, lon)`` in degrees."""
    easting = np.asarray(easting, dtype=float)
    northing = np.asarray(northing, dtype=float)
    _check_utm_window(easting, northing)
    if not 1 <= zone <= 60:
        raise DomainError(f"UTM zone {zone} not in 1..60")
    y = northing - (FALSE_NORTHING_SOUTH if hemisphere == "S" else 0.0)
    xi = y / (K0 * _RECT)
    eta = (easting - FALSE_EASTING) / (K0 * _RECT)

    xip = xi.copy()
    etap = eta.copy()
    for j, b in enumerate(_BETA, start=1):
        xip = xip - b * np.sin(2 * j * xi) * np.cosh(2 * j * eta)
        etap = etap - b * np.cos(2 * j * xi) * np.sinh(2 * j * eta)

    taup = np.sin(xip) / np.hypot(np.sinh(etap), np.cos(xip))
    lam = np.arctan2(np.sinh(etap), np.cos(xip))
    tau = _tau_from_taup(taup)
    lat = np.degrees(np.arctan(tau))
    lon = normalize_lon(np.degrees(lam) + central_meridian(zone))
    if np.any(lat < LAT_MIN - 1e-9) or np.any(lat > LAT_MAX + 1e-9):
        raise OutOfBandError("UTM coordinate maps outside the UTM latitude band")
    return np.clip(lat, LAT_MIN, LAT_MAX), lon


def wgs84_to_utm(geo: GeoCoord, forced_zone: int | None = None) -> UtmCoord:
    zone = zone_for_longitude(geo.lon) if forced_zone is None else forced_zone
    hemi = "N" if geo.lat >= 0 else "S"
    e, n = project(geo.lat, geo.lon, zone, hemi)
    return UtmCoord(float(e), float(n), zone, hemi)


def utm_to_wgs84(utm: UtmCoord) -> GeoCoord:
    lat, lon = unproject(utm.easting, utm.northing, utm.zone, utm.hemisphere)
    return GeoCoord(float(lat), float(lon))
