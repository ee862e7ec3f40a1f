"""Containers for per-view and fused representations of a single trajectory."""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class ViewRepresentations:
    segment_reps: torch.Tensor  # (m, d)
    trajectory_rep: torch.Tensor  # (d,)
    view_tag: str  # "gps" or "route"

    @classmethod
    def from_batch(cls, Z: torch.Tensor, z: torch.Tensor, valid: torch.Tensor, view_tag: str, index: int = 0):
        m = int(valid[index].sum())
        return cls(Z[index, :m], z[index], view_tag)


@dataclass
class FusedRepresentations:
    fused_segment_reps: torch.Tensor  # (m, d)
    fused_trajectory_rep: torch.Tensor  # (d,)
    gps_trajectory: torch.Tensor
    gps_segments: torch.Tensor
    route_trajectory: torch.Tensor
    route_segments: torch.Tensor


def masked_mean(Z: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    """Row mean of (B, M, d) over positions where ``valid`` (B, M) is True."""
    w = valid.to(Z.dtype).unsqueeze(-1)
    return (Z * w).sum(dim=1) / w.sum(dim=1).clamp_min(1.0)
