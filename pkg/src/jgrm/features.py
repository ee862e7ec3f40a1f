"""Kinematic GPS features, route features, and sub-trajectory grouping."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .corpus import TrajectoryPair, local_minute_weekday
from .errors import CorruptAssignmentError, InvalidArgumentError
from .geo import bearing_deg, haversine, latlng_to_plane, wrap_angle

GPS_FEATURES = ("longitude", "latitude", "speed", "acceleration", "angle_delta", "time_delta", "distance")
ROUTE_FEATURES = ("road_id", "time_delta", "minute_index", "weekday_index")
TIME_EPS = 1e-6


def kinematic_features(points: np.ndarray) -> np.ndarray:
    """Seven per-point features for an (n, 3) array of (lat, lng, t).

    Row 0 carries only its position; every derived column is zero there. The
    first heading change (row 1) is also zero since no earlier heading exists.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    out = np.zeros((n, 7), dtype=np.float64)
    if n == 0:
        return out
    out[:, 0] = pts[:, 1]
    out[:, 1] = pts[:, 0]
    if n == 1:
        return out
    lat, lng, t = pts[:, 0], pts[:, 1], pts[:, 2]
    dist = haversine(lat[:-1], lng[:-1], lat[1:], lng[1:])
    dt = t[1:] - t[:-1]
    speed = dist / np.maximum(dt, TIME_EPS)
    out[1:, 6] = dist
    out[1:, 5] = dt
    out[1:, 2] = speed
    out[1:, 3] = np.diff(out[:, 2]) / np.maximum(dt, TIME_EPS)
    x, y = latlng_to_plane(lat, lng)
    heading = bearing_deg(np.diff(x), np.diff(y))
    if n > 2:
        out[2:, 4] = wrap_angle(np.diff(heading))
    return out


def extract_gps_features(pair: TrajectoryPair) -> np.ndarray:
    """The n x 7 GPS feature matrix of a trajectory pair."""
    if len(pair.gps) < 2:
        raise InvalidArgumentError("GPS trajectory needs at least 2 points")
    return kinematic_features(pair.gps.points)


def route_feature_matrix(route, end_time: float) -> np.ndarray:
    """The m x 4 route feature matrix: road id, travel time, start minute, start weekday.

    The last segment's travel time runs until ``end_time``.
    """
    entries = np.asarray(route.entry_times, dtype=np.float64)
    m = len(entries)
    out = np.zeros((m, 4), dtype=np.float64)
    out[:, 0] = route.road_ids
    ends = np.append(entries[1:], end_time)
    out[:, 1] = np.maximum(ends - entries, 0.0)
    minute, weekday = local_minute_weekday(entries[0])
    out[:, 2] = minute
    out[:, 3] = weekday
    return out


def extract_route_features(pair: TrajectoryPair) -> np.ndarray:
    return route_feature_matrix(pair.route, pair.gps.points[-1, 2])


def group_subtrajectories(features: np.ndarray, assignment) -> list[tuple[int, np.ndarray]]:
    """Split the GPS feature matrix into one block of rows per route segment."""
    n = len(features)
    groups = []
    for start, end, road_id in assignment.rows():
        if not (0 <= start <= end < n):
            raise CorruptAssignmentError(f"range [{start}, {end}] outside [0, {n})")
        groups.append((int(road_id), features[start : end + 1]))
    return groups


def masked_gps_groups(pair: TrajectoryPair, masked: Iterable[int]) -> list[np.ndarray | None]:
    """Per-segment feature blocks with masked segments removed from the input.

    Masked segments become ``None``. Kinematics are recomputed independently on
    each maximal run of unmasked segments, so no derived column of a visible point
    depends on a point that belongs to a masked segment.
    """
    masked = set(int(j) for j in masked)
    m = len(pair.assignment)
    if not masked:
        return [block for _, block in group_subtrajectories(extract_gps_features(pair), pair.assignment)]
    starts, ends = pair.assignment.starts, pair.assignment.ends
    out: list[np.ndarray | None] = [None] * m
    j = 0
    while j < m:
        if j in masked:
            j += 1
            continue
        k = j
        while k + 1 < m and (k + 1) not in masked:
            k += 1
        lo, hi = starts[j], ends[k]
        feats = kinematic_features(pair.gps.points[lo : hi + 1])
        for s in range(j, k + 1):
            out[s] = feats[starts[s] - lo : ends[s] - lo + 1]
        j = k + 1
    return out


def segment_speeds(pair: TrajectoryPair, lengths: np.ndarray) -> list[tuple[int, float]]:
    """Realised traversal speed of every fully traversed segment (all but the last)."""
    entries = pair.route.entry_times
    out = []
    for j in range(len(entries) - 1):
        dt = entries[j + 1] - entries[j]
        if dt > 0:
            rid = pair.route.road_ids[j]
            out.append((rid, float(lengths[rid] / dt)))
    return out
