"""Directed road-segment graph and the synthetic grid generator.

Each vertex of the graph is a directed road segment; an edge ``(i, j)`` means a
vehicle leaving segment ``i`` can enter segment ``j`` at the shared intersection.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, NotFoundError, ParseError
from .geo import latlng_to_plane, plane_to_latlng, polyline_length

ROAD_CLASSES = ("primary", "secondary", "tertiary", "residential")

BASE_SPEED_MPS = {"primary": 16.0, "secondary": 13.0, "tertiary": 10.0, "residential": 7.0}


@dataclass(frozen=True)
class RoadSegment:
    road_id: int
    geometry: tuple[tuple[float, float], ...]  # (lat, lng) degrees
    length_m: float
    road_class: str
    free_speed_mps: float

    def __post_init__(self):
        if self.road_class not in ROAD_CLASSES:
            raise InvalidArgumentError(f"unknown road class {self.road_class!r}")
        if not self.length_m > 0:
            raise InvalidArgumentError(f"segment {self.road_id} has non-positive length")

    @property
    def class_index(self) -> int:
        return ROAD_CLASSES.index(self.road_class)

    def plane_coords(self) -> np.ndarray:
        """Geometry as an (k, 2) array of east/north meters."""
        pts = np.asarray(self.geometry, dtype=np.float64)
        x, y = latlng_to_plane(pts[:, 0], pts[:, 1])
        return np.stack([x, y], axis=1)

    def midpoint_plane(self) -> np.ndarray:
        xy = self.plane_coords()
        return 0.5 * (xy[0] + xy[-1])

    def heading_deg(self) -> float:
        xy = self.plane_coords()
        d = xy[-1] - xy[0]
        return float(np.degrees(np.arctan2(d[0], d[1])))


@dataclass(frozen=True)
class RoadNetwork:
    segments: tuple[RoadSegment, ...]
    edges: frozenset[tuple[int, int]]
    adjacency: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        n = len(self.segments)
        for idx, seg in enumerate(self.segments):
            if seg.road_id != idx:
                raise InvalidArgumentError("segments must be indexed by road_id 0..|V|-1")
        for i, j in self.edges:
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidArgumentError(f"edge ({i}, {j}) references a missing segment")
            if i == j:
                raise InvalidArgumentError(f"self-loop edge on segment {i}")
        self.adjacency.setflags(write=False)
        out: list[list[int]] = [[] for _ in range(n)]
        for i, j in sorted(self.edges):
            out[i].append(j)
        object.__setattr__(self, "_out", tuple(tuple(x) for x in out))
        lengths = np.array([s.length_m for s in self.segments], dtype=np.float64)
        mids = np.stack([s.midpoint_plane() for s in self.segments]) if n else np.zeros((0, 2))
        lengths.setflags(write=False)
        mids.setflags(write=False)
        object.__setattr__(self, "_lengths", lengths)
        object.__setattr__(self, "_midpoints", mids)

    @classmethod
    def from_parts(cls, segments, edges) -> "RoadNetwork":
        segments = tuple(segments)
        edges = frozenset((int(i), int(j)) for i, j in edges)
        adj = np.zeros((len(segments), len(segments)), dtype=np.uint8)
        for i, j in edges:
            if 0 <= i < len(segments) and 0 <= j < len(segments):
                adj[i, j] = 1
        return cls(segments, edges, adj)

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def neighbors(self, road_id: int) -> list[int]:
        """Out-neighbors of ``road_id`` in ascending order."""
        if not 0 <= road_id < len(self.segments):
            raise NotFoundError(f"road_id {road_id} not in network")
        return list(self._out[road_id])

    def is_adjacent(self, i: int, j: int) -> bool:
        return bool(self.adjacency[i, j])

    def reachable_from(self, road_id: int) -> set[int]:
        seen = {road_id}
        queue = deque([road_id])
        while queue:
            u = queue.popleft()
            for v in self._out[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen

    def is_strongly_connected(self) -> bool:
        n = len(self.segments)
        if n == 0:
            return True
        if len(self.reachable_from(0)) != n:
            return False
        reverse = RoadNetwork.from_parts(self.segments, {(j, i) for i, j in self.edges})
        return len(reverse.reachable_from(0)) == n

    def class_labels(self) -> np.ndarray:
        return np.array([s.class_index for s in self.segments], dtype=np.int64)

    def lengths(self) -> np.ndarray:
        return self._lengths

    def midpoints(self) -> np.ndarray:
        """(|V|, 2) segment midpoints in tangent-plane meters."""
        return self._midpoints

    def to_json(self) -> dict:
        return {
            "segments": [
                {
                    "road_id": s.road_id,
                    "geometry": [list(p) for p in s.geometry],
                    "length_m": s.length_m,
                    "road_class": s.road_class,
                    "free_speed_mps": s.free_speed_mps,
                }
                for s in self.segments
            ],
            "edges": [[i, j] for i, j in sorted(self.edges)],
        }

    @classmethod
    def from_json(cls, data: dict) -> "RoadNetwork":
        try:
            segments = [
                RoadSegment(
                    road_id=int(s["road_id"]),
                    geometry=tuple((float(p[0]), float(p[1])) for p in s["geometry"]),
                    length_m=float(s["length_m"]),
                    road_class=str(s["road_class"]),
                    free_speed_mps=float(s["free_speed_mps"]),
                )
                for s in sorted(data["segments"], key=lambda s: s["road_id"])
            ]
            edges = [(int(e[0]), int(e[1])) for e in data["edges"]]
        except (KeyError, TypeError, IndexError) as exc:
            raise ParseError(f"malformed network file: {exc}") from exc
        return cls.from_parts(segments, edges)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "RoadNetwork":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"network file is not valid JSON: {exc}") from exc
        return cls.from_json(data)


def line_class(index: int, count: int) -> str:
    """Road class of the ``index``-th grid line out of ``count`` parallel lines."""
    if index == 0 or index == count - 1:
        return "primary"
    if index % 4 == 0:
        return "secondary"
    if index % 2 == 0:
        return "tertiary"
    return "residential"


def expected_segment_count(rows: int, cols: int) -> int:
    return 2 * (rows * (cols - 1) + cols * (rows - 1))


def build_grid_network(rows: int, cols: int, cell_m: float = 200.0, seed: int = 0) -> RoadNetwork:
    """Build a ``rows`` x ``cols`` grid of intersections joined by two-way streets.

    Every undirected street yields two directed segments. Horizontal streets take
    their class from their row line, vertical streets from their column line.
    Free speed is the class base speed plus seeded uniform noise in [-1, 1].
    Turning back onto the reverse segment is a legal (but discouraged) edge, so
    the graph stays strongly connected even on a 2x2 grid.
    """
    if rows < 2 or cols < 2:
        raise InvalidArgumentError(f"grid needs rows, cols >= 2, got {rows}x{cols}")
    if not cell_m > 0:
        raise InvalidArgumentError("cell_m must be positive")
    rng = np.random.default_rng(seed)

    streets = []  # (node_a, node_b, class)
    for r in range(rows):
        for c in range(cols - 1):
            streets.append(((r, c), (r, c + 1), line_class(r, rows)))
    for c in range(cols):
        for r in range(rows - 1):
            streets.append(((r, c), (r + 1, c), line_class(c, cols)))

    def node_latlng(node):
        r, c = node
        lat, lng = plane_to_latlng(c * cell_m, r * cell_m)
        return (float(lat), float(lng))

    segments = []
    endpoints = []
    for a, b, cls_name in streets:
        for u, v in ((a, b), (b, a)):
            geometry = (node_latlng(u), node_latlng(v))
            speed = BASE_SPEED_MPS[cls_name] + float(rng.uniform(-1.0, 1.0))
            segments.append(
                RoadSegment(
                    road_id=len(segments),
                    geometry=geometry,
                    length_m=polyline_length(geometry),
                    road_class=cls_name,
                    free_speed_mps=speed,
                )
            )
            endpoints.append((u, v))

    starts_at: dict[tuple[int, int], list[int]] = {}
    for sid, (u, _) in enumerate(endpoints):
        starts_at.setdefault(u, []).append(sid)
    edges = set()
    for sid, (_, v) in enumerate(endpoints):
        for nxt in starts_at.get(v, []):
            if nxt != sid:
                edges.add((sid, nxt))
    return RoadNetwork.from_parts(segments, edges)


def reverse_segment(net: RoadNetwork, road_id: int) -> int | None:
    """The segment running the opposite way along the same street, if any."""
    seg = net.segments[road_id]
    start, end = seg.geometry[0], seg.geometry[-1]
    for nxt in net.neighbors(road_id):
        cand = net.segments[nxt].geometry
        if cand[0] == end and cand[-1] == start:
            return nxt
    return None
