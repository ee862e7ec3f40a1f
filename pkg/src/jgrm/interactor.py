"""Shared transformer that lets the GPS and route token sequences attend to each other."""

from __future__ import annotations

import torch
import torch.nn as nn

from .errors import InvalidArgumentError
from .layers import TransformerEncoder
from .views import FusedRepresentations, ViewRepresentations

GPS_MODE, ROUTE_MODE = 0, 1


class ModalInteractor(nn.Module):
    """Input layout per trajectory: [gps traj, gps segs, route traj, route segs].

    Position indices restart in each view block (trajectory token = 0, segment
    j = j + 1) so aligned segments of the two views share a position embedding.
    """

    def __init__(self, d_model: int, num_layers: int = 2, heads: int = 4, max_len: int = 256):
        super().__init__()
        self.max_len = max_len
        self.mode_embedding = nn.Embedding(2, d_model)
        self.position_embedding = nn.Embedding(max_len, d_model)
        self.input_ffn = nn.Linear(d_model, d_model)
        self.transformer = TransformerEncoder(d_model, num_layers, heads)
        self.use_mode_embedding = True

    def _block(self, z, Z, mode: int):
        block = torch.cat([z.unsqueeze(1), Z], dim=1)
        pos = torch.arange(block.shape[1], device=block.device)
        block = block + self.position_embedding(pos)
        if self.use_mode_embedding:
            block = block + self.mode_embedding.weight[mode]
        return block

    def forward(self, zG, ZG, zR, ZR, valid):
        """Returns the four post-interaction blocks (zG', ZG', zR', ZR')."""
        B, M, _ = ZG.shape
        if ZR.shape[:2] != (B, M):
            raise InvalidArgumentError("GPS and route views differ in segment count")
        if M + 1 > self.max_len:
            raise InvalidArgumentError(f"route of {M} segments exceeds max_len {self.max_len}")
        seq = torch.cat([self._block(zG, ZG, GPS_MODE), self._block(zR, ZR, ROUTE_MODE)], dim=1)
        keep = torch.ones(B, 1, dtype=torch.bool, device=valid.device)
        pad = ~torch.cat([keep, valid, keep, valid], dim=1)
        out = self.transformer(self.input_ffn(seq), key_padding_mask=pad)
        return out[:, 0], out[:, 1 : M + 1], out[:, M + 1], out[:, M + 2 :]

    def interact(self, gps_view: ViewRepresentations, route_view: ViewRepresentations) -> FusedRepresentations:
        if gps_view.segment_reps.shape != route_view.segment_reps.shape:
            raise InvalidArgumentError("views must share segment count and width")
        m = gps_view.segment_reps.shape[0]
        valid = torch.ones(1, m, dtype=torch.bool)
        zg, Zg, zr, Zr = self(
            gps_view.trajectory_rep[None], gps_view.segment_reps[None],
            route_view.trajectory_rep[None], route_view.segment_reps[None], valid,
        )
        return fuse(zg[0], Zg[0], zr[0], Zr[0])


def fuse(zg, Zg, zr, Zr) -> FusedRepresentations:
    """Per-token average of the two views."""
    return FusedRepresentations(
        fused_segment_reps=(Zg + Zr) / 2,
        fused_trajectory_rep=(zg + zr) / 2,
        gps_trajectory=zg,
        gps_segments=Zg,
        route_trajectory=zr,
        route_segments=Zr,
    )
