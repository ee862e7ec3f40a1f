import math

import numpy as np
import pytest
import torch

from jgrm.layers import GraphAttentionLayer, MultiHeadSelfAttention, TransformerEncoder


def reference_attention(mha, x, pad):
    """Loop-based multi-head attention written from the definition."""
    B, T, d = x.shape
    h, dh = mha.heads, mha.d_head
    W, b = mha.qkv.weight, mha.qkv.bias
    out = torch.zeros(B, T, d, dtype=x.dtype)
    for bi in range(B):
        qkv = x[bi] @ W.T + b
        q, k, v = qkv[:, :d], qkv[:, d : 2 * d], qkv[:, 2 * d :]
        heads = []
        for hi in range(h):
            sl = slice(hi * dh, (hi + 1) * dh)
            s = q[:, sl] @ k[:, sl].T / math.sqrt(dh)
            s[:, pad[bi]] = -float("inf")
            heads.append(torch.softmax(s, dim=-1) @ v[:, sl])
        out[bi] = torch.cat(heads, dim=-1) @ mha.out.weight.T + mha.out.bias
    return out


def test_attention_matches_loop_reference():
    torch.manual_seed(0)
    mha = MultiHeadSelfAttention(8, 2).double()
    x = torch.randn(3, 5, 8, dtype=torch.float64)
    pad = torch.tensor([[False] * 5, [False] * 3 + [True] * 2, [False] + [True] * 4])
    assert torch.allclose(mha(x, pad), reference_attention(mha, x, pad), atol=1e-12)


def test_padding_does_not_affect_real_tokens():
    torch.manual_seed(1)
    enc = TransformerEncoder(8, 2, 2).double()
    x = torch.randn(1, 6, 8, dtype=torch.float64)
    pad = torch.tensor([[False] * 4 + [True] * 2])
    y1 = enc(x, pad)
    x2 = x.clone()
    x2[0, 4:] = 1e3 * torch.randn(2, 8, dtype=torch.float64)
    assert torch.equal(enc(x2, pad)[0, :4], y1[0, :4])
    assert torch.allclose(y1[0, :4], enc(x[:, :4])[0], atol=1e-12)


def test_zero_layers_is_identity():
    enc = TransformerEncoder(8, 0, 2)
    x = torch.randn(2, 3, 8)
    assert torch.equal(enc(x), x)


def test_bad_head_count():
    with pytest.raises(ValueError):
        MultiHeadSelfAttention(6, 4)


def path_adjacency(n):
    adj = torch.zeros(n, n)
    for i in range(n - 1):
        adj[i, i + 1] = adj[i + 1, i] = 1
    return adj


def test_gat_rows_sum_to_one_and_respect_neighborhood():
    torch.manual_seed(0)
    gat = GraphAttentionLayer(6, 6)
    adj = (torch.rand(10, 10) < 0.3).float().fill_diagonal_(0)
    att = gat.attention(torch.randn(10, 6), adj)
    assert torch.allclose(att.sum(dim=1), torch.ones(10), atol=1e-6)
    allowed = adj.T.bool() | torch.eye(10, dtype=torch.bool)
    assert torch.all(att[~allowed] == 0)


def test_gat_in_neighbors_only():
    # directed 0 -> 1: node 1 attends to node 0, node 0 does not attend to node 1
    gat = GraphAttentionLayer(4, 4)
    adj = torch.tensor([[0.0, 1.0], [0.0, 0.0]])
    att = gat.attention(torch.randn(2, 4), adj)
    assert att[0, 1] == 0 and att[1, 0] > 0


def test_gat_isolated_node_sees_only_itself():
    torch.manual_seed(2)
    gat = GraphAttentionLayer(4, 5)
    x = torch.randn(3, 4)
    adj = torch.zeros(3, 3)
    out = gat(x, adj)
    assert torch.allclose(out, gat.proj(x) + gat.bias, atol=1e-7)


def test_gat_path_graph_perturbation():
    torch.manual_seed(3)
    gat = GraphAttentionLayer(4, 4)
    x = torch.randn(3, 4)
    adj = path_adjacency(3)
    base = gat(x, adj)
    for src in (0, 2):
        x2 = x.clone()
        x2[src] += 1.0
        assert not torch.allclose(gat(x2, adj)[1], base[1])
    x3 = x.clone()
    x3[2] += 1.0
    assert torch.equal(gat(x3, torch.tensor([[0.0, 1, 0], [1, 0, 0], [0, 0, 0]]))[0],
                       gat(x, torch.tensor([[0.0, 1, 0], [1, 0, 0], [0, 0, 0]]))[0])


def test_gat_matches_dense_reference():
    torch.manual_seed(4)
    gat = GraphAttentionLayer(3, 3).double()
    x = torch.randn(4, 3, dtype=torch.float64)
    adj = torch.tensor([[0, 1, 0, 0], [0, 0, 1, 1], [1, 0, 0, 0], [0, 0, 0, 0]], dtype=torch.float64)
    h = x @ gat.proj.weight.T
    ref = torch.zeros(4, 3, dtype=torch.float64)
    for i in range(4):
        nb = [j for j in range(4) if adj[j, i] or j == i]
        e = torch.stack([torch.nn.functional.leaky_relu(h[i] @ gat.att_dst + h[j] @ gat.att_src, 0.2) for j in nb])
        a = torch.softmax(e, dim=0)
        ref[i] = sum(a[k] * h[j] for k, j in enumerate(nb)) + gat.bias
    assert torch.allclose(gat(x, adj), ref, atol=1e-12)
