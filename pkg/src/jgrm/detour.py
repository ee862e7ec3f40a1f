"""Detour augmentation: rewrite a sub-path between fixed endpoints to build a
near-duplicate key trajectory for similarity search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import RouteTrajectory, congestion, local_minute_weekday
from .errors import DetourFailureError, InvalidArgumentError
from .geo import shoelace_area
from .road_network import RoadNetwork


@dataclass(frozen=True)
class DetourConfig:
    subpath_rate: float = 0.41  # ~17.6% of segments replaced on 10-segment routes
    area_threshold: float = 10000.0  # square meters
    max_length_ratio: float = 4.0 / 3.0
    max_attempts: int = 20
    search_budget: int = 2000  # node expansions per search

    def __post_init__(self):
        if not 0.0 < self.subpath_rate < 1.0:
            raise InvalidArgumentError("subpath_rate must lie in (0, 1)")
        if not self.area_threshold > 0:
            raise InvalidArgumentError("area_threshold must be positive")


@dataclass(frozen=True)
class DetourResult:
    route: RouteTrajectory
    end_time: float
    replaced: int  # original segments no longer on the route
    area: float

    @property
    def detour_rate(self) -> float:
        return self.replaced / len(self.route)


def enclosed_area(net: RoadNetwork, old_sub: Sequence[int], new_sub: Sequence[int]) -> float:
    """Area between two sub-paths sharing first and last segment (segment midpoints)."""
    mids = net.midpoints()
    ring = [mids[s] for s in old_sub] + [mids[s] for s in reversed(new_sub[1:-1])]
    return shoelace_area(np.asarray(ring))


def route_length(net: RoadNetwork, road_ids: Sequence[int]) -> float:
    lengths = net.lengths()
    return float(sum(lengths[r] for r in road_ids))


def _search(net, origin, target, banned, budget_m, rng, max_expansions):
    """Randomised depth-first search for a path origin -> target under a length budget."""
    lengths = net.lengths()
    stack = [(origin, [origin], 0.0)]
    expansions = 0
    while stack and expansions < max_expansions:
        node, path, dist = stack.pop()
        expansions += 1
        options = net.neighbors(node)
        order = rng.permutation(len(options))
        for k in order:
            nxt = options[k]
            if nxt == target:
                if len(path) >= 2:
                    return path + [nxt]
                continue
            if nxt in banned or nxt in path:
                continue
            d = dist + lengths[nxt]
            if d + lengths[target] > budget_m:
                continue
            stack.append((nxt, path + [nxt], d))
    return None


def detour_augment(net: RoadNetwork, route: RouteTrajectory, cfg: DetourConfig = DetourConfig(),
                   seed=0, end_time: float | None = None) -> DetourResult:
    """Replace the interior of a random sub-path while keeping its end segments.

    The sub-path spans ``r * m`` segments in expectation (at least 3).

    Accepts a candidate when the ring between old and new sub-paths encloses more
    than ``area_threshold``, the whole route grows by at most ``max_length_ratio``,
    and at least two new segments appear. New segments are timed at free speed
    times the start-time congestion factor.
    """
    ids = list(route.road_ids)
    m = len(ids)
    if m < 10:
        raise InvalidArgumentError("detours need routes of at least 10 segments")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    total = route_length(net, ids)
    target = cfg.subpath_rate * m
    entries = list(route.entry_times)
    if end_time is None:
        end_time = entries[-1]
    minute, _ = local_minute_weekday(entries[0])
    factor = congestion(minute)

    for _ in range(cfg.max_attempts):
        # stochastic rounding keeps the expected span at r * m for short routes
        span = int(np.floor(target)) + int(rng.random() < target - np.floor(target))
        span = min(m, max(3, span))
        a = int(rng.integers(0, m - span + 1))
        b = a + span - 1
        old_sub = ids[a : b + 1]
        banned = set(ids) - {ids[a], ids[b]}
        # length allowed for the new path after the origin segment
        budget = route_length(net, old_sub[1:]) + (cfg.max_length_ratio - 1.0) * total
        path = _search(net, ids[a], ids[b], banned, budget, rng, cfg.search_budget)
        if path is None:
            continue
        new_ids = ids[:a] + path + ids[b + 1 :]
        if route_length(net, new_ids) > cfg.max_length_ratio * total + 1e-9:
            continue
        if len(set(new_ids) - set(ids)) < 2:
            continue
        area = enclosed_area(net, old_sub, path)
        if area <= cfg.area_threshold:
            continue
        new_entries = entries[: a + 1]
        t = entries[a + 1]
        for seg in path[1:-1]:
            new_entries.append(t)
            s = net.segments[seg]
            t += s.length_m / (s.free_speed_mps * factor)
        shift = t - entries[b]
        new_entries.extend(e + shift for e in entries[b:])
        replaced = sum(1 for r in set(ids) if r not in set(new_ids))
        return DetourResult(
            route=RouteTrajectory(tuple(new_ids), tuple(new_entries)),
            end_time=end_time + shift,
            replaced=replaced,
            area=area,
        )
    raise DetourFailureError(f"no acceptable detour after {cfg.max_attempts} attempts")
