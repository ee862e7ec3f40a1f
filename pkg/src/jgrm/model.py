"""The joint GPS/route model: both encoders, the interactor, and the SSL heads."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .batch import Batch
from .config import TrainingConfig
from .gps_encoder import GpsEncoder
from .interactor import ModalInteractor
from .objectives import (
    SslHeads,
    match_loss_from_logits,
    match_scores,
    mlm_loss_flat,
)
from .route_encoder import RouteEncoder


@dataclass
class Encoded:
    valid: torch.Tensor
    gps_segments: torch.Tensor | None = None
    gps_trajectory: torch.Tensor | None = None
    route_segments: torch.Tensor | None = None
    route_trajectory: torch.Tensor | None = None
    gps_tokens: torch.Tensor | None = None  # post-interaction GPS segment tokens
    route_tokens: torch.Tensor | None = None
    gps_traj_token: torch.Tensor | None = None
    route_traj_token: torch.Tensor | None = None

    @property
    def fused_segments(self) -> torch.Tensor:
        parts = [t for t in (self.gps_tokens, self.route_tokens) if t is not None]
        return sum(parts) / len(parts)

    @property
    def fused_trajectory(self) -> torch.Tensor:
        parts = [t for t in (self.gps_traj_token, self.route_traj_token) if t is not None]
        return sum(parts) / len(parts)


@dataclass
class StepOutput:
    gmlm: torch.Tensor
    rmlm: torch.Tensor
    match: torch.Tensor
    total: torch.Tensor
    encoded: Encoded
    gps_logits: torch.Tensor | None = None  # (N_masked, V)
    route_logits: torch.Tensor | None = None
    scores: object | None = None

    def values(self) -> dict[str, float]:
        return {k: float(getattr(self, k).detach()) for k in ("gmlm", "rmlm", "match", "total")}


class JGRM(nn.Module):
    def __init__(self, config: TrainingConfig, num_segments: int, adjacency):
        super().__init__()
        self.config = config
        self.num_segments = num_segments
        self.gps_encoder = GpsEncoder(config.d_intra, config.d_inter, config.intra_concat_directions)
        self.route_encoder = RouteEncoder(
            num_segments, adjacency, config.d_emb, config.d_rep, config.L1, config.heads,
            config.interval_hidden,
        )
        self.interactor = ModalInteractor(config.d_model, config.L2, config.heads, config.max_len)
        self.heads = SslHeads(config.d_model, num_segments, config.d_proj, config.pair_features)
        self.apply_flags(config)

    def apply_flags(self, config: TrainingConfig) -> None:
        """Switch ablation flags without touching parameter shapes."""
        self.config = config
        self.route_encoder.use_gat = config.use_gat
        self.interactor.use_mode_embedding = config.use_mode_embedding

    def encode(self, batch: Batch, time_info: bool | None = None, interact: bool = True) -> Encoded:
        cfg = self.config
        if time_info is None:
            time_info = cfg.use_time_info
        out = Encoded(valid=batch.valid)
        if cfg.use_gps_branch:
            out.gps_segments, out.gps_trajectory = self.gps_encoder(batch.gps, batch.valid, batch.masked)
        if cfg.use_route_branch:
            out.route_segments, out.route_trajectory = self.route_encoder(
                batch.road_ids, batch.valid, batch.masked, batch.intervals, batch.minute,
                batch.weekday, time_info=time_info,
            )
        if interact and cfg.use_interactor and cfg.both_branches:
            (out.gps_traj_token, out.gps_tokens,
             out.route_traj_token, out.route_tokens) = self.interactor(
                out.gps_trajectory, out.gps_segments, out.route_trajectory, out.route_segments,
                batch.valid,
            )
        else:
            out.gps_tokens, out.gps_traj_token = out.gps_segments, out.gps_trajectory
            out.route_tokens, out.route_traj_token = out.route_segments, out.route_trajectory
        return out

    def trajectory_allowed(self, batch: Batch) -> torch.Tensor:
        allowed = torch.zeros(batch.size, self.num_segments, dtype=torch.bool)
        rows = torch.arange(batch.size).unsqueeze(1).expand_as(batch.road_ids)
        allowed[rows[batch.valid], batch.road_ids[batch.valid]] = True
        return allowed

    def step(self, batch: Batch) -> StepOutput:
        """Forward pass and all three losses for a masked batch."""
        cfg = self.config
        enc = self.encode(batch)
        zero = self.heads.pair_cls.bias.sum() * 0.0
        masked = batch.masked & batch.valid
        targets = batch.road_ids[masked]
        allowed = self.trajectory_allowed(batch) if cfg.mlm_denominator == "trajectory" else None
        out = StepOutput(gmlm=zero, rmlm=zero, match=zero, total=zero, encoded=enc)
        if cfg.use_gps_branch:
            out.gps_logits = self.heads.gps_cls(enc.gps_tokens[masked])
            out.gmlm = mlm_loss_flat(out.gps_logits, targets, masked, allowed)
        if cfg.use_route_branch:
            out.route_logits = self.heads.route_cls(enc.route_tokens[masked])
            out.rmlm = mlm_loss_flat(out.route_logits, targets, masked, allowed)
        if cfg.both_branches:
            scores = match_scores(enc.gps_trajectory, enc.route_trajectory, self.heads)
            out.match = match_loss_from_logits(scores.positive, scores.route_negative, scores.gps_negative)
            out.scores = scores
        out.total = cfg.w1 * out.gmlm + cfg.w2 * out.rmlm + cfg.w3 * out.match
        return out

    def parameter_groups(self) -> dict[str, list[str]]:
        """Parameter names grouped by the component that owns them."""
        groups: dict[str, list[str]] = {}
        for name, _ in self.named_parameters():
            parts = name.split(".")
            if parts[0] == "route_encoder" and parts[1] in ("minute_embedding", "weekday_embedding",
                                                           "interval_net", "interval_buckets"):
                key = "route_time"
            elif parts[0] == "route_encoder" and parts[1] == "gat":
                key = "gat"
            elif parts[0] == "interactor" and parts[1] == "mode_embedding":
                key = "mode_embedding"
            elif parts[0] == "heads":
                key = {"gps_cls": "gps_cls", "route_cls": "route_cls"}.get(parts[1], "match_heads")
            else:
                key = parts[0]
            groups.setdefault(key, []).append(name)
        return groups

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, t in sorted(self.state_dict().items()):
            h.update(name.encode())
            h.update(t.detach().cpu().contiguous().numpy().tobytes())
        return h.hexdigest()


def build_model(config: TrainingConfig, net_or_adjacency, seed: int | None = None) -> JGRM:
    adjacency = getattr(net_or_adjacency, "adjacency", net_or_adjacency)
    adjacency = np.asarray(adjacency)
    torch.manual_seed(config.seed if seed is None else seed)
    return JGRM(config, adjacency.shape[0], adjacency)
