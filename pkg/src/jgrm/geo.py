"""Spherical distances and the local tangent plane used for all geometry."""

import math

import numpy as np

EARTH_RADIUS_M = 6371008.8
ORIGIN_LAT = 30.66
ORIGIN_LNG = 104.06

_COS_LAT0 = math.cos(math.radians(ORIGIN_LAT))


def haversine(lat1, lng1, lat2, lng2):
    """Great-circle distance in meters. Accepts scalars or numpy arrays."""
    lat1, lng1, lat2, lng2 = map(np.radians, (lat1, lng1, lat2, lng2))
    a = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lng2 - lng1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def polyline_length(points) -> float:
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(haversine(pts[:-1, 0], pts[:-1, 1], pts[1:, 0], pts[1:, 1])))


def plane_to_latlng(x, y):
    """Map east/north offsets in meters from the origin to (lat, lng) degrees.

    The map is affine, so straight lines in the plane stay straight in degrees.
    """
    lat = ORIGIN_LAT + np.degrees(np.asarray(y, dtype=np.float64) / EARTH_RADIUS_M)
    lng = ORIGIN_LNG + np.degrees(np.asarray(x, dtype=np.float64) / (EARTH_RADIUS_M * _COS_LAT0))
    return lat, lng


def latlng_to_plane(lat, lng):
    x = np.radians(np.asarray(lng, dtype=np.float64) - ORIGIN_LNG) * EARTH_RADIUS_M * _COS_LAT0
    y = np.radians(np.asarray(lat, dtype=np.float64) - ORIGIN_LAT) * EARTH_RADIUS_M
    return x, y


def bearing_deg(dx, dy):
    """Compass bearing of a planar displacement, degrees clockwise from north."""
    return np.degrees(np.arctan2(dx, dy))


def wrap_angle(deg):
    """Wrap degrees into (-180, 180]."""
    out = np.mod(np.asarray(deg, dtype=np.float64) + 180.0, 360.0) - 180.0
    return np.where(out == -180.0, 180.0, out)


def shoelace_area(xy) -> float:
    """Absolute polygon area for an (n, 2) vertex array; the ring is closed implicitly."""
    pts = np.asarray(xy, dtype=np.float64)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))
