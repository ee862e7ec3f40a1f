"""Spatio-temporal encoder for the route view.

Road embeddings are refreshed by one graph-attention pass over the network, then
summed with start-time and travel-time embeddings and refined by a transformer
that receives no positional encoding.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .errors import InvalidInputError, UnknownSegmentError
from .layers import GraphAttentionLayer, TransformerEncoder
from .views import ViewRepresentations, masked_mean

NUM_BUCKETS = 100
INTERVAL_SCALE_S = 600.0
MINUTES_PER_DAY = 1440
DAYS_PER_WEEK = 7


class RouteEncoder(nn.Module):
    def __init__(self, num_segments: int, adjacency, d_emb: int = 64, d_rep: int = 64,
                 num_layers: int = 2, heads: int = 4, interval_hidden: int = 100):
        super().__init__()
        self.num_segments = num_segments
        self.mask_token = num_segments
        self.road_embedding = nn.Embedding(num_segments + 1, d_emb)
        self.gat = GraphAttentionLayer(d_emb, d_emb)
        self.minute_embedding = nn.Embedding(MINUTES_PER_DAY, d_emb)
        self.weekday_embedding = nn.Embedding(DAYS_PER_WEEK, d_emb)
        self.interval_net = nn.Sequential(
            nn.Linear(1, interval_hidden), nn.GELU(), nn.Linear(interval_hidden, NUM_BUCKETS)
        )
        self.interval_buckets = nn.Parameter(torch.randn(NUM_BUCKETS, d_emb))
        self.pre_ffn = nn.Linear(d_emb, d_rep)
        self.transformer = TransformerEncoder(d_rep, num_layers, heads)
        adj = torch.tensor(np.array(adjacency), dtype=torch.float32)
        if adj.shape != (num_segments, num_segments):
            raise ValueError("adjacency shape does not match the segment count")
        self.register_buffer("adjacency", adj)
        self.use_gat = True

    def gat_update(self) -> torch.Tensor:
        """Road embedding table after message passing; the mask-token row is untouched."""
        table = self.road_embedding.weight
        if not self.use_gat:
            return table
        roads = self.gat(table[: self.num_segments], self.adjacency)
        return torch.cat([roads, table[self.num_segments :]], dim=0)

    def bucket_weights(self, dt: torch.Tensor) -> torch.Tensor:
        logits = self.interval_net((dt / INTERVAL_SCALE_S).unsqueeze(-1))
        return torch.softmax(logits, dim=-1)

    def embed_interval(self, dt) -> torch.Tensor:
        """Soft-binned travel-time embedding; a convex combination of bucket rows."""
        dt = torch.as_tensor(dt, dtype=self.interval_buckets.dtype)
        if not torch.isfinite(dt).all() or (dt < 0).any():
            raise InvalidInputError("travel time must be finite and nonnegative")
        return self.bucket_weights(dt) @ self.interval_buckets

    def token_inputs(self, road_ids, valid, masked, intervals, minute, weekday,
                     time_info: bool = True, re_prime: torch.Tensor | None = None) -> torch.Tensor:
        """The summed per-segment inputs (B, M, d_emb) before the feed-forward map."""
        if ((road_ids < 0) | (road_ids >= self.num_segments))[valid].any():
            raise UnknownSegmentError("road id outside [0, |V|)")
        live = valid & ~masked
        if re_prime is None:
            re_prime = self.gat_update()
        ids = torch.where(live, road_ids, torch.full_like(road_ids, self.mask_token))
        h = re_prime[ids]
        if time_info:
            h = h + (self.minute_embedding(minute) + self.weekday_embedding(weekday)).unsqueeze(1)
            safe = torch.where(live, intervals, torch.zeros_like(intervals))
            ie = self.embed_interval(safe)
            h = h + ie * live.unsqueeze(-1).to(ie.dtype)
        return h

    def forward(self, road_ids, valid, masked, intervals, minute, weekday,
                time_info: bool = True, re_prime: torch.Tensor | None = None):
        """Returns segment reps (B, M, d_rep) and trajectory reps (B, d_rep).

        Masked rows get the mask token plus start-time context; their travel time
        never enters the computation.
        """
        h = self.token_inputs(road_ids, valid, masked, intervals, minute, weekday, time_info, re_prime)
        Z = self.transformer(self.pre_ffn(h), key_padding_mask=~valid)
        Z = Z * valid.unsqueeze(-1).to(Z.dtype)
        return Z, masked_mean(Z, valid)

    def encode_route(self, features, mask=None, re_prime=None, time_info: bool = True) -> ViewRepresentations:
        """Encode one trajectory from its (m, 4) route feature matrix."""
        feats = np.asarray(features, dtype=np.float64)
        m = len(feats)
        road_ids = torch.as_tensor(feats[:, 0].astype(np.int64))[None]
        valid = torch.ones(1, m, dtype=torch.bool)
        masked = torch.zeros(1, m, dtype=torch.bool)
        if mask is not None and len(mask.masked_positions):
            masked[0, list(mask.masked_positions)] = True
        dtype = self.interval_buckets.dtype
        Z, z = self(
            road_ids, valid, masked,
            torch.as_tensor(feats[:, 1], dtype=dtype)[None],
            torch.tensor([int(feats[0, 2])]), torch.tensor([int(feats[0, 3])]),
            time_info=time_info, re_prime=re_prime,
        )
        return ViewRepresentations.from_batch(Z, z, valid, "route")
