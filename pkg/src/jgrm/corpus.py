"""Paired GPS/route trajectories with ground-truth GPS-to-segment assignment."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Iterable, Sequence

import numpy as np

from .errors import GenerationFailureError, InvalidArgumentError, ParseError
from .geo import latlng_to_plane, plane_to_latlng
from .road_network import RoadNetwork, reverse_segment

LOCAL_TZ = timezone(timedelta(hours=8))
CORPUS_EPOCH = int(datetime(2018, 11, 1, tzinfo=LOCAL_TZ).timestamp())
CORPUS_DAYS = 15
SECONDS_PER_DAY = 86400

MORNING_PEAK_MIN = 510
EVENING_PEAK_MIN = 1080
PEAK_WIDTH_MIN = 60.0


@dataclass(frozen=True)
class GpsTrajectory:
    points: np.ndarray  # (n, 3): lat, lng, t

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidArgumentError("GPS points must be an (n, 3) array")
        if len(pts) < 2:
            raise InvalidArgumentError("GPS trajectory needs at least 2 points")
        if np.any(np.diff(pts[:, 2]) <= 0):
            raise InvalidArgumentError("GPS timestamps must be strictly increasing")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other):
        return isinstance(other, GpsTrajectory) and np.array_equal(self.points, other.points)


@dataclass(frozen=True)
class RouteTrajectory:
    road_ids: tuple[int, ...]
    entry_times: tuple[float, ...]

    def __post_init__(self):
        if len(self.road_ids) != len(self.entry_times):
            raise InvalidArgumentError("road_ids and entry_times differ in length")
        if any(b < a for a, b in zip(self.entry_times, self.entry_times[1:])):
            raise InvalidArgumentError("route timestamps must be non-decreasing")

    def __len__(self) -> int:
        return len(self.road_ids)

    def is_valid_path(self, net: RoadNetwork) -> bool:
        return all(net.is_adjacent(a, b) for a, b in zip(self.road_ids, self.road_ids[1:]))


@dataclass(frozen=True)
class AssignmentMatrix:
    """Row j maps GPS indices ``[starts[j], ends[j]]`` (inclusive) to ``road_ids[j]``."""

    starts: tuple[int, ...]
    ends: tuple[int, ...]
    road_ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.road_ids)

    def rows(self):
        return list(zip(self.starts, self.ends, self.road_ids))

    def covers(self, n: int) -> bool:
        """True if the rows partition ``0..n-1`` into contiguous ordered runs."""
        expected = 0
        for s, e in zip(self.starts, self.ends):
            if s != expected or e < s:
                return False
            expected = e + 1
        return expected == n

    def sizes(self) -> np.ndarray:
        return np.asarray(self.ends) - np.asarray(self.starts) + 1


@dataclass(frozen=True)
class TrajectoryPair:
    traj_id: int
    gps: GpsTrajectory
    route: RouteTrajectory
    assignment: AssignmentMatrix

    def validate(self, net: RoadNetwork | None = None) -> None:
        if len(self.assignment) != len(self.route):
            raise InvalidArgumentError(f"traj {self.traj_id}: assignment rows != route length")
        if tuple(self.assignment.road_ids) != tuple(self.route.road_ids):
            raise InvalidArgumentError(f"traj {self.traj_id}: assignment road ids disagree with route")
        if not self.assignment.covers(len(self.gps)):
            raise InvalidArgumentError(f"traj {self.traj_id}: assignment does not cover GPS points")
        if net is not None:
            if any(not 0 <= r < net.num_segments for r in self.route.road_ids):
                raise InvalidArgumentError(f"traj {self.traj_id}: unknown road id")
            if not self.route.is_valid_path(net):
                raise InvalidArgumentError(f"traj {self.traj_id}: route is not a network path")

    @property
    def start_time(self) -> float:
        return float(self.gps.points[0, 2])

    @property
    def duration(self) -> float:
        return float(self.gps.points[-1, 2] - self.gps.points[0, 2])

    def to_json(self) -> dict:
        return {
            "traj_id": self.traj_id,
            "gps": self.gps.points.tolist(),
            "route": [[r, t] for r, t in zip(self.route.road_ids, self.route.entry_times)],
            "assignment": [[s, e, r] for s, e, r in self.assignment.rows()],
        }

    @classmethod
    def from_json(cls, data: dict) -> "TrajectoryPair":
        route = data["route"]
        assignment = data["assignment"]
        return cls(
            traj_id=int(data["traj_id"]),
            gps=GpsTrajectory(np.asarray(data["gps"], dtype=np.float64)),
            route=RouteTrajectory(
                tuple(int(r[0]) for r in route), tuple(float(r[1]) for r in route)
            ),
            assignment=AssignmentMatrix(
                tuple(int(a[0]) for a in assignment),
                tuple(int(a[1]) for a in assignment),
                tuple(int(a[2]) for a in assignment),
            ),
        )


def congestion(minute_index: float) -> float:
    """Fixed daily speed multiplier in [0.5, 1.0] with rush-hour dips."""
    bump = max(
        math.exp(-0.5 * ((minute_index - peak) / PEAK_WIDTH_MIN) ** 2)
        for peak in (MORNING_PEAK_MIN, EVENING_PEAK_MIN)
    )
    return 1.0 - 0.5 * bump


def local_minute_weekday(timestamp: float) -> tuple[int, int]:
    """Minute of day (0-1439) and weekday (0=Monday) in the fixed UTC+8 calendar."""
    dt = datetime.fromtimestamp(timestamp, tz=LOCAL_TZ)
    return dt.hour * 60 + dt.minute, dt.weekday()


def _random_walk(net: RoadNetwork, length: int, rng: np.random.Generator, start: int | None,
                 continuation_bias: float) -> list[int] | None:
    cur = int(rng.integers(net.num_segments)) if start is None else start
    walk = [cur]
    while len(walk) < length:
        options = net.neighbors(cur)
        if not options:
            return None
        back = reverse_segment(net, cur)
        forward = [o for o in options if o != back] or options
        heading = net.segments[cur].heading_deg()
        turns = [abs((net.segments[o].heading_deg() - heading + 180.0) % 360.0 - 180.0) for o in forward]
        straight = forward[int(np.argmin(turns))]
        others = [o for o in forward if o != straight]
        if not others or rng.random() < continuation_bias:
            cur = straight
        else:
            cur = others[int(rng.integers(len(others)))]
        walk.append(cur)
    return walk


def generate_pair(
    net: RoadNetwork,
    start_time: float,
    min_segments: int = 10,
    max_segments: int = 20,
    sample_period_s: float = 5.0,
    gps_noise_m: float = 5.0,
    seed: int = 0,
    traj_id: int = 0,
    speed_noise_sigma: float = 0.15,
    continuation_bias: float = 0.6,
    start_segment: int | None = None,
) -> TrajectoryPair:
    """Simulate one trip as a random walk and observe it from both views.

    Segments whose traversal falls between two sampling instants receive one extra
    fix at their mid-time so every route record owns at least one GPS point.
    """
    if min_segments < 10:
        raise InvalidArgumentError("routes shorter than 10 segments are filtered from the corpus")
    if max_segments < min_segments:
        raise InvalidArgumentError("max_segments < min_segments")
    if not sample_period_s > 0:
        raise InvalidArgumentError("sample_period_s must be positive")
    rng = np.random.default_rng(seed)
    length = int(rng.integers(min_segments, max_segments + 1))
    walk = None
    for _ in range(20):
        walk = _random_walk(net, length, rng, start_segment, continuation_bias)
        if walk is not None:
            break
    if walk is None:
        raise GenerationFailureError(f"random walk trapped before {min_segments} segments")

    minute, _ = local_minute_weekday(start_time)
    factor = congestion(minute)
    durations = []
    for rid in walk:
        seg = net.segments[rid]
        speed = seg.free_speed_mps * factor
        if speed_noise_sigma > 0:
            speed *= float(rng.lognormal(0.0, speed_noise_sigma))
        durations.append(seg.length_m / speed)
    entries = start_time + np.concatenate([[0.0], np.cumsum(durations)])

    times = []
    owners = []
    k = 0
    for j, rid in enumerate(walk):
        lo, hi = entries[j], entries[j + 1]
        seg_times = []
        while True:
            t = start_time + k * sample_period_s
            last = j == len(walk) - 1
            if t < hi or (last and t <= hi):
                if t >= lo:
                    seg_times.append(t)
                k += 1
            else:
                break
        if not seg_times:
            seg_times.append(0.5 * (lo + hi))
        times.extend(seg_times)
        owners.extend([j] * len(seg_times))

    lat = np.empty(len(times))
    lng = np.empty(len(times))
    for idx, (t, j) in enumerate(zip(times, owners)):
        seg = net.segments[walk[j]]
        frac = (t - entries[j]) / (entries[j + 1] - entries[j])
        (la0, ln0), (la1, ln1) = seg.geometry[0], seg.geometry[-1]
        lat[idx] = la0 + frac * (la1 - la0)
        lng[idx] = ln0 + frac * (ln1 - ln0)
    if gps_noise_m > 0:
        x, y = latlng_to_plane(lat, lng)
        x = x + rng.normal(0.0, gps_noise_m, len(x))
        y = y + rng.normal(0.0, gps_noise_m, len(y))
        lat, lng = plane_to_latlng(x, y)

    owners_arr = np.asarray(owners)
    starts = tuple(int(np.argmax(owners_arr == j)) for j in range(len(walk)))
    ends = tuple(int(len(owners_arr) - 1 - np.argmax(owners_arr[::-1] == j)) for j in range(len(walk)))
    pair = TrajectoryPair(
        traj_id=traj_id,
        gps=GpsTrajectory(np.stack([lat, lng, np.asarray(times)], axis=1)),
        route=RouteTrajectory(tuple(walk), tuple(float(t) for t in entries[:-1])),
        assignment=AssignmentMatrix(starts, ends, tuple(walk)),
    )
    pair.validate(net)
    return pair


def generate_corpus(
    net: RoadNetwork,
    count: int,
    seed: int = 0,
    ensure_coverage: bool = True,
    days: int = CORPUS_DAYS,
    **pair_kwargs,
) -> list[TrajectoryPair]:
    """Generate ``count`` pairs with start times spread over ``days`` local days.

    Trajectory ``i`` draws from a generator seeded with ``seed ^ i``. When
    ``ensure_coverage`` is set, extra pairs starting on uncovered segments are
    appended until every segment is visited at least once.
    """
    if count < 0:
        raise InvalidArgumentError("count must be non-negative")

    def make(traj_id, start_segment=None):
        rng = np.random.default_rng(seed ^ traj_id)
        day = int(rng.integers(days))
        start = CORPUS_EPOCH + day * SECONDS_PER_DAY + float(rng.integers(SECONDS_PER_DAY))
        return generate_pair(
            net, start, seed=int(rng.integers(2**31)), traj_id=traj_id,
            start_segment=start_segment, **pair_kwargs,
        )

    corpus = [make(i) for i in range(count)]
    if ensure_coverage:
        covered = {r for p in corpus for r in p.route.road_ids}
        next_id = count
        for rid in range(net.num_segments):
            if rid in covered:
                continue
            pair = make(next_id, start_segment=rid)
            corpus.append(pair)
            covered.update(pair.route.road_ids)
            next_id += 1
    return corpus


def start_day(pair: TrajectoryPair) -> int:
    return int((pair.start_time - CORPUS_EPOCH) // SECONDS_PER_DAY)


def split_by_day(corpus: Sequence[TrajectoryPair], train_days: int = 13, val_days: int = 1):
    """Chronological split: first ``train_days`` days, then validation, then test."""
    train, val, test = [], [], []
    for pair in corpus:
        d = start_day(pair)
        if d < train_days:
            train.append(pair)
        elif d < train_days + val_days:
            val.append(pair)
        else:
            test.append(pair)
    return train, val, test


def save_corpus(corpus: Iterable[TrajectoryPair], path) -> None:
    with open(path, "w") as fh:
        for pair in corpus:
            fh.write(json.dumps(pair.to_json()))
            fh.write("\n")


def load_corpus(path) -> list[TrajectoryPair]:
    corpus = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                corpus.append(TrajectoryPair.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, IndexError, ValueError) as exc:
                raise ParseError(str(exc), line=lineno) from exc
    return corpus


def coverage(corpus: Iterable[TrajectoryPair], num_segments: int) -> np.ndarray:
    counts = np.zeros(num_segments, dtype=np.int64)
    for pair in corpus:
        np.add.at(counts, np.asarray(pair.route.road_ids), 1)
    return counts

