"""Padding and packing of trajectory pairs into model-ready tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .corpus import TrajectoryPair
from .features import extract_route_features, masked_gps_groups


@dataclass
class GpsInput:
    """Visible GPS sub-trajectories of a batch.

    ``sub_x`` is (S, L, 7) zero-padded, ``sub_len`` (S,) and ``sub_pos`` (S, 2) the
    (trajectory, segment position) each block belongs to. Masked segments have no
    block at all.
    """

    sub_x: torch.Tensor
    sub_len: torch.Tensor
    sub_pos: torch.Tensor

    def visible(self, batch_size: int, max_len: int) -> torch.Tensor:
        out = torch.zeros(batch_size, max_len, dtype=torch.bool)
        if len(self.sub_pos):
            out[self.sub_pos[:, 0], self.sub_pos[:, 1]] = True
        return out


@dataclass
class Batch:
    traj_ids: list[int]
    road_ids: torch.Tensor  # (B, M) long, padding = 0
    valid: torch.Tensor  # (B, M) bool
    masked: torch.Tensor  # (B, M) bool, shared by both views
    intervals: torch.Tensor  # (B, M) seconds
    minute: torch.Tensor  # (B,)
    weekday: torch.Tensor  # (B,)
    gps: GpsInput
    masks: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.road_ids.shape[0]

    @property
    def max_len(self) -> int:
        return self.road_ids.shape[1]

    def gps_masked(self) -> torch.Tensor:
        """Positions hidden from the GPS view, reconstructed from the packed blocks."""
        return self.valid & ~self.gps.visible(self.size, self.max_len)


def collate_gps(blocks: Sequence[Sequence[np.ndarray | None]], dtype=torch.float32) -> GpsInput:
    subs, pos = [], []
    for b, traj_blocks in enumerate(blocks):
        for j, block in enumerate(traj_blocks):
            if block is not None:
                subs.append(block)
                pos.append((b, j))
    if not subs:
        return GpsInput(torch.zeros(0, 1, 7, dtype=dtype), torch.zeros(0, dtype=torch.long),
                        torch.zeros(0, 2, dtype=torch.long))
    L = max(len(s) for s in subs)
    x = np.zeros((len(subs), L, 7), dtype=np.float64)
    for i, s in enumerate(subs):
        x[i, : len(s)] = s
    return GpsInput(
        torch.as_tensor(x, dtype=dtype),
        torch.as_tensor([len(s) for s in subs], dtype=torch.long),
        torch.as_tensor(pos, dtype=torch.long),
    )


def collate_route(route_features: Sequence[np.ndarray], masked_positions: Sequence[Sequence[int]],
                  dtype=torch.float32):
    B = len(route_features)
    M = max(len(f) for f in route_features)
    road_ids = torch.zeros(B, M, dtype=torch.long)
    valid = torch.zeros(B, M, dtype=torch.bool)
    masked = torch.zeros(B, M, dtype=torch.bool)
    intervals = torch.zeros(B, M, dtype=dtype)
    minute = torch.zeros(B, dtype=torch.long)
    weekday = torch.zeros(B, dtype=torch.long)
    for b, (feat, mpos) in enumerate(zip(route_features, masked_positions)):
        m = len(feat)
        road_ids[b, :m] = torch.as_tensor(feat[:, 0].astype(np.int64))
        valid[b, :m] = True
        intervals[b, :m] = torch.as_tensor(feat[:, 1], dtype=dtype)
        minute[b] = int(feat[0, 2])
        weekday[b] = int(feat[0, 3])
        if len(mpos):
            masked[b, list(mpos)] = True
    return road_ids, valid, masked, intervals, minute, weekday


def make_batch(pairs: Sequence[TrajectoryPair], masks: Sequence | None = None,
               dtype=torch.float32, route_features: Sequence[np.ndarray] | None = None) -> Batch:
    """Collate pairs; ``masks`` holds one MaskSpec (or None) per pair.

    The same masked positions feed the GPS packing and the route mask tensor.
    """
    if masks is None:
        masks = [None] * len(pairs)
    positions = [tuple(m.masked_positions) if m is not None else () for m in masks]
    if route_features is None:
        route_features = [extract_route_features(p) for p in pairs]
    road_ids, valid, masked, intervals, minute, weekday = collate_route(route_features, positions, dtype)
    gps = collate_gps([masked_gps_groups(p, pos) for p, pos in zip(pairs, positions)], dtype)
    return Batch(
        traj_ids=[p.traj_id for p in pairs],
        road_ids=road_ids,
        valid=valid,
        masked=masked,
        intervals=intervals,
        minute=minute,
        weekday=weekday,
        gps=gps,
        masks=list(masks),
    )
