"""Attention building blocks shared by the route encoder and the modal interactor."""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, d_model: int, heads: int):
        super().__init__()
        if d_model % heads:
            raise ValueError("d_model must be divisible by heads")
        self.heads = heads
        self.d_head = d_model // heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.out = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor, key_padding_mask: torch.Tensor | None = None) -> torch.Tensor:
        """x: (B, T, d). key_padding_mask: (B, T), True marks padding."""
        B, T, _ = x.shape
        q, k, v = self.qkv(x).view(B, T, 3, self.heads, self.d_head).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        if key_padding_mask is not None:
            scores = scores.masked_fill(key_padding_mask[:, None, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(B, T, -1)
        return self.out(ctx)


class EncoderLayer(nn.Module):
    """Pre-norm transformer block; no dropout so forward passes are exactly repeatable."""

    def __init__(self, d_model: int, heads: int, ff_mult: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = MultiHeadSelfAttention(d_model, heads)
        self.norm2 = nn.LayerNorm(d_model)
        self.ff = nn.Sequential(
            nn.Linear(d_model, ff_mult * d_model),
            nn.GELU(),
            nn.Linear(ff_mult * d_model, d_model),
        )

    def forward(self, x, key_padding_mask=None):
        x = x + self.attn(self.norm1(x), key_padding_mask)
        return x + self.ff(self.norm2(x))


class TransformerEncoder(nn.Module):
    """Stack of ``num_layers`` blocks. With zero layers it is the identity map.

    No positional information is added here; callers add it if they want it, so
    without it the stack is equivariant to permutations of the (unpadded) tokens.
    """

    def __init__(self, d_model: int, num_layers: int, heads: int):
        super().__init__()
        self.layers = nn.ModuleList([EncoderLayer(d_model, heads) for _ in range(num_layers)])
        self.norm = nn.LayerNorm(d_model) if num_layers > 0 else nn.Identity()

    def forward(self, x, key_padding_mask=None):
        for layer in self.layers:
            x = layer(x, key_padding_mask)
        return self.norm(x)


class GraphAttentionLayer(nn.Module):
    """Single-head graph attention over in-neighbors plus a self edge.

    Node ``i`` attends to every ``j`` with ``adjacency[j, i] = 1`` and to itself.
    Attention logits pass through LeakyReLU(0.2) before the softmax.
    """

    def __init__(self, d_in: int, d_out: int, negative_slope: float = 0.2):
        super().__init__()
        self.proj = nn.Linear(d_in, d_out, bias=False)
        self.att_src = nn.Parameter(torch.empty(d_out))
        self.att_dst = nn.Parameter(torch.empty(d_out))
        self.bias = nn.Parameter(torch.zeros(d_out))
        self.negative_slope = negative_slope
        bound = 1.0 / math.sqrt(d_out)
        nn.init.uniform_(self.att_src, -bound, bound)
        nn.init.uniform_(self.att_dst, -bound, bound)

    @staticmethod
    def neighborhood(adjacency: torch.Tensor) -> torch.Tensor:
        """Boolean (N, N) matrix; entry [i, j] is True when i attends to j."""
        n = adjacency.shape[0]
        eye = torch.eye(n, dtype=torch.bool, device=adjacency.device)
        return adjacency.bool().T | eye

    def attention(self, x: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        h = self.proj(x)
        logits = (h @ self.att_dst)[:, None] + (h @ self.att_src)[None, :]
        logits = F.leaky_relu(logits, self.negative_slope)
        logits = logits.masked_fill(~self.neighborhood(adjacency), float("-inf"))
        return torch.softmax(logits, dim=-1)

    def forward(self, x: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        return self.attention(x, adjacency) @ self.proj(x) + self.bias
