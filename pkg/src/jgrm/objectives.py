"""Self-supervised objectives: shared span masking, masked-segment recovery, and
cross-modal matching with hardest in-batch negatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class MaskSpec:
    masked_positions: tuple[int, ...]
    span_length: int
    span_rate: float
    length: int

    def as_bool(self) -> np.ndarray:
        out = np.zeros(self.length, dtype=bool)
        out[list(self.masked_positions)] = True
        return out


@dataclass(frozen=True)
class LossWeights:
    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0

    def __post_init__(self):
        if min(self.w1, self.w2, self.w3) < 0 or self.w1 == self.w2 == self.w3 == 0:
            raise InvalidArgumentError("loss weights must be nonnegative and not all zero")


def sample_shared_mask(m: int, l: int, p: float, rng, enforce: bool = True) -> MaskSpec:
    """Mask spans [j, j + l) for span starts j = 0, l, 2l, ... each with probability p.

    With ``enforce`` (training), at least one position stays visible and at least
    one is masked: if every span was drawn the final span is released, and if
    none was drawn one span chosen uniformly is forced.
    """
    if l < 2:
        raise InvalidArgumentError("span length must be >= 2")
    if m < 1:
        raise InvalidArgumentError("sequence length must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise InvalidArgumentError("span probability must lie in [0, 1]")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    starts = list(range(0, m, l))
    chosen = [bool(rng.random() < p) for _ in starts]
    if enforce:
        if m == 1:
            raise InvalidArgumentError("cannot both mask and keep a position of a length-1 route")
        if all(chosen):
            chosen[-1] = False
        if not any(chosen):
            chosen[int(rng.integers(len(starts)))] = True
    positions = []
    for s, c in zip(starts, chosen):
        if c:
            positions.extend(range(s, min(s + l, m)))
    if enforce and len(positions) == m:
        positions = positions[:-1]
    return MaskSpec(tuple(positions), l, p, m)


class SslHeads(nn.Module):
    """Recovery classifiers, projection heads, and the pair discriminator.

    ``pair_features="concat"`` feeds the discriminator only ``[g, r]``. Because a
    linear score over a concatenation splits into f(g) + h(r), it can never rank
    both (g_i, r_i) > (g_i, r_j) and (g_j, r_j) > (g_j, r_i) when i and j are each
    other's hardest negative, so the default also appends ``g * r``.
    """

    def __init__(self, d_model: int, num_segments: int, d_proj: int = 32,
                 pair_features: str = "concat_product"):
        super().__init__()
        self.gps_cls = nn.Linear(d_model, num_segments)
        self.route_cls = nn.Linear(d_model, num_segments)
        self.proj_gps = nn.Linear(d_model, d_proj)
        self.proj_route = nn.Linear(d_model, d_proj)
        self.pair_features = pair_features
        width = 2 * d_proj if pair_features == "concat" else 3 * d_proj
        self.pair_cls = nn.Linear(width, 1)

    def pair_logit(self, g: torch.Tensor, r: torch.Tensor) -> torch.Tensor:
        feats = [g, r] if self.pair_features == "concat" else [g, r, g * r]
        return self.pair_cls(torch.cat(feats, dim=-1)).squeeze(-1)


def mlm_loss(logits: torch.Tensor, targets: torch.Tensor, masked: torch.Tensor,
             allowed: torch.Tensor | None = None) -> torch.Tensor:
    """Cross-entropy at masked positions, averaged per trajectory then over trajectories.

    logits (B, M, V), targets (B, M), masked (B, M). ``allowed`` (B, V), if given,
    restricts each trajectory's softmax support to its own segments. Trajectories
    without masked positions are left out of the average.
    """
    counts = masked.sum(dim=1)
    if int(counts.sum()) == 0:
        raise InvalidArgumentError("no masked positions to recover")
    return mlm_loss_flat(logits[masked], targets[masked], masked, allowed)


def mlm_loss_flat(logits: torch.Tensor, targets: torch.Tensor, masked: torch.Tensor,
                  allowed: torch.Tensor | None = None) -> torch.Tensor:
    """As :func:`mlm_loss`, with logits already gathered at ``masked`` (row-major)."""
    counts = masked.sum(dim=1)
    if int(counts.sum()) == 0:
        raise InvalidArgumentError("no masked positions to recover")
    owner = torch.nonzero(masked)[:, 0]
    if allowed is not None:
        logits = logits.masked_fill(~allowed[owner], float("-inf"))
    nll = F.cross_entropy(logits, targets, reduction="none")
    per_traj = torch.zeros(masked.shape[0], dtype=nll.dtype, device=nll.device).index_add(0, owner, nll)
    has = counts > 0
    return (per_traj[has] / counts[has].to(nll.dtype)).mean()


@dataclass
class MatchScores:
    positive: torch.Tensor  # (B,) logits of (g_i, r_i)
    route_negative: torch.Tensor  # (B,) logits of (g_i, hardest r)
    gps_negative: torch.Tensor  # (B,) logits of (hardest g, r_i)
    route_negative_index: torch.Tensor
    gps_negative_index: torch.Tensor


def hardest_negatives(pg: torch.Tensor, pr: torch.Tensor):
    """Indices of the most cosine-similar other-view item, excluding the true partner.

    Returns (route index for each GPS query, GPS index for each route query).
    """
    with torch.no_grad():
        sim = F.normalize(pg, dim=-1) @ F.normalize(pr, dim=-1).T
        eye = torch.eye(sim.shape[0], dtype=torch.bool, device=sim.device)
        sim = sim.masked_fill(eye, float("-inf"))
        return sim.argmax(dim=1), sim.argmax(dim=0)


def match_scores(gps_reps: torch.Tensor, route_reps: torch.Tensor, heads: SslHeads) -> MatchScores:
    if gps_reps.shape[0] < 2:
        raise InvalidArgumentError("matching needs at least two trajectories in the batch")
    pg = heads.proj_gps(gps_reps)
    pr = heads.proj_route(route_reps)
    r_idx, g_idx = hardest_negatives(pg, pr)
    return MatchScores(
        positive=heads.pair_logit(pg, pr),
        route_negative=heads.pair_logit(pg, pr[r_idx]),
        gps_negative=heads.pair_logit(pg[g_idx], pr),
        route_negative_index=r_idx,
        gps_negative_index=g_idx,
    )


def match_loss_from_logits(pos: torch.Tensor, route_neg: torch.Tensor, gps_neg: torch.Tensor) -> torch.Tensor:
    bce = F.binary_cross_entropy_with_logits
    return (
        bce(pos, torch.ones_like(pos))
        + bce(route_neg, torch.zeros_like(route_neg))
        + bce(gps_neg, torch.zeros_like(gps_neg))
    ) / 3.0


def match_loss(gps_reps: torch.Tensor, route_reps: torch.Tensor, heads: SslHeads) -> torch.Tensor:
    """Three-term binary cross-entropy over the positive pair and two hardest negatives."""
    s = match_scores(gps_reps, route_reps, heads)
    return match_loss_from_logits(s.positive, s.route_negative, s.gps_negative)


def total_loss(gmlm, rmlm, match, weights: LossWeights):
    return weights.w1 * gmlm + weights.w2 * rmlm + weights.w3 * match
