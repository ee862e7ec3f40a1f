"""Hierarchical GRU encoder for the GPS view.

An intra-road GRU compresses the points matched to each segment into one vector;
an inter-road bidirectional GRU then refines those vectors along the route.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .batch import GpsInput, collate_gps
from .errors import InvalidArgumentError, InvalidInputError
from .views import ViewRepresentations, masked_mean

NUM_GPS_FEATURES = 7


class GpsEncoder(nn.Module):
    def __init__(self, d_intra: int, d_inter: int, intra_concat_directions: bool = False):
        super().__init__()
        self.d_intra = d_intra
        self.d_inter = d_inter
        self.intra_concat_directions = intra_concat_directions
        # Only the forward terminal state is consumed unless both directions are
        # concatenated, so the backward pass is built only when it is used.
        self.intra = nn.GRU(NUM_GPS_FEATURES, d_intra, batch_first=True,
                            bidirectional=intra_concat_directions)
        in_width = 2 * d_intra if intra_concat_directions else d_intra
        self.inter = nn.GRU(in_width, d_inter, batch_first=True, bidirectional=True)
        bound = 1.0 / math.sqrt(in_width)
        self.mask_vector = nn.Parameter(torch.empty(in_width).uniform_(-bound, bound))
        self.register_buffer("feature_mean", torch.zeros(NUM_GPS_FEATURES))
        self.register_buffer("feature_std", torch.ones(NUM_GPS_FEATURES))
        self.inter_bypass = False  # test hook: skip the inter-road GRU

    @property
    def out_width(self) -> int:
        return 2 * self.d_inter

    def set_normalization(self, mean, std) -> None:
        std = np.where(np.asarray(std) > 1e-8, std, 1.0)
        self.feature_mean.copy_(torch.as_tensor(mean, dtype=self.feature_mean.dtype))
        self.feature_std.copy_(torch.as_tensor(std, dtype=self.feature_std.dtype))

    def _intra(self, sub_x: torch.Tensor, sub_len: torch.Tensor) -> torch.Tensor:
        x = (sub_x - self.feature_mean) / self.feature_std
        packed = pack_padded_sequence(x, sub_len.cpu(), batch_first=True, enforce_sorted=False)
        _, h_n = self.intra(packed)
        if self.intra_concat_directions:
            return torch.cat([h_n[0], h_n[1]], dim=-1)
        return h_n[0]

    def encode_subtrajectory(self, x) -> torch.Tensor:
        """Forward terminal state of the intra-road GRU for one (l, 7) block."""
        x = torch.as_tensor(x, dtype=self.mask_vector.dtype)
        if x.ndim != 2 or x.shape[0] < 1:
            raise InvalidArgumentError("sub-trajectory must be a non-empty (l, 7) matrix")
        if not torch.isfinite(x).all():
            raise InvalidInputError("sub-trajectory contains non-finite values")
        out = self._intra(x[None], torch.tensor([x.shape[0]]))[0]
        return out[: self.d_intra]

    def forward(self, gps: GpsInput, valid: torch.Tensor, masked: torch.Tensor):
        """Returns segment reps (B, M, 2*d_inter) and trajectory reps (B, 2*d_inter).

        Masked positions skip the intra GRU and carry ``mask_vector`` instead.
        """
        B, M = valid.shape
        width = self.mask_vector.shape[0]
        token_mask = (masked & valid).to(self.mask_vector.dtype).unsqueeze(-1)
        tokens = token_mask * self.mask_vector
        if len(gps.sub_len):
            if not torch.isfinite(gps.sub_x).all():
                raise InvalidInputError("GPS features contain non-finite values")
            seg = self._intra(gps.sub_x, gps.sub_len)
            tokens = tokens.index_put((gps.sub_pos[:, 0], gps.sub_pos[:, 1]), seg)
        if self.inter_bypass:
            Z = tokens
        else:
            lengths = valid.sum(dim=1)
            packed = pack_padded_sequence(tokens, lengths.cpu(), batch_first=True, enforce_sorted=False)
            out, _ = self.inter(packed)
            Z, _ = pad_packed_sequence(out, batch_first=True, total_length=M)
        Z = Z * valid.unsqueeze(-1).to(Z.dtype)
        return Z, masked_mean(Z, valid)

    def encode_gps(self, groups: Sequence[tuple[int, np.ndarray]], mask=None) -> ViewRepresentations:
        """Encode one trajectory given its per-segment feature blocks."""
        if not groups:
            raise InvalidArgumentError("no sub-trajectories to encode")
        hidden = set(mask.masked_positions) if mask is not None else set()
        blocks = [None if j in hidden else np.asarray(b) for j, (_, b) in enumerate(groups)]
        m = len(groups)
        valid = torch.ones(1, m, dtype=torch.bool)
        masked = torch.zeros(1, m, dtype=torch.bool)
        if hidden:
            masked[0, sorted(hidden)] = True
        Z, z = self(collate_gps([blocks], dtype=self.mask_vector.dtype), valid, masked)
        return ViewRepresentations.from_batch(Z, z, valid, "gps")
