import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings, strategies as st

from jgrm.errors import InvalidArgumentError
from jgrm.objectives import (
    LossWeights,
    SslHeads,
    hardest_negatives,
    match_loss,
    match_loss_from_logits,
    match_scores,
    mlm_loss,
    sample_shared_mask,
    total_loss,
)


@settings(max_examples=200, deadline=None)
@given(m=st.integers(2, 60), l=st.integers(2, 6), p=st.floats(0, 1), seed=st.integers(0, 2**32 - 1))
def test_mask_structure(m, l, p, seed):
    mask = sample_shared_mask(m, l, p, seed)
    pos = set(mask.masked_positions)
    assert 1 <= len(pos) <= m - 1
    assert mask.as_bool().sum() == len(pos)
    # masked positions are unions of whole spans [j, j + l) with j on the span grid
    for start in range(0, m, l):
        span = set(range(start, min(start + l, m)))
        inter = span & pos
        assert inter == set() or inter == span or (start + l >= m and len(pos) == m - 1)


def test_mask_rate_monte_carlo():
    m, l, p, n = 40, 2, 0.4, 20000
    rng = np.random.default_rng(0)
    frac = np.array([len(sample_shared_mask(m, l, p, rng, enforce=False).masked_positions) / m for _ in range(n)])
    # each of 20 spans is an independent Bernoulli(p): sd of the mean = sqrt(p(1-p)/20/n)
    sd = math.sqrt(p * (1 - p) / (m // l) / n)
    assert abs(frac.mean() - p) < 4 * sd


def test_mask_enforcement_edges():
    assert sample_shared_mask(6, 2, 1.0, 0).masked_positions == (0, 1, 2, 3)
    assert sample_shared_mask(10, 2, 1.0, 0).masked_positions == tuple(range(8))
    assert len(sample_shared_mask(6, 2, 0.0, 0).masked_positions) == 2
    assert sample_shared_mask(6, 2, 0.0, 0, enforce=False).masked_positions == ()
    assert sample_shared_mask(5, 2, 0.3, 7) == sample_shared_mask(5, 2, 0.3, 7)
    with pytest.raises(InvalidArgumentError):
        sample_shared_mask(5, 1, 0.3, 0)
    with pytest.raises(InvalidArgumentError):
        sample_shared_mask(5, 2, 1.5, 0)
    with pytest.raises(InvalidArgumentError):
        sample_shared_mask(1, 2, 0.5, 0)


@pytest.mark.parametrize("V", [2, 8, 120, 224])
def test_uniform_logits_give_log_vocab(V):
    logits = torch.zeros(3, 5, V, dtype=torch.float64)
    targets = torch.randint(V, (3, 5))
    masked = torch.rand(3, 5) < 0.5
    masked[0, 0] = True
    assert abs(mlm_loss(logits, targets, masked).item() - math.log(V)) < 1e-9


def test_mlm_matches_brute_force():
    torch.manual_seed(0)
    logits = torch.randn(3, 4, 6, dtype=torch.float64)
    targets = torch.randint(6, (3, 4))
    masked = torch.tensor([[1, 0, 1, 0], [0, 0, 0, 0], [1, 1, 1, 0]], dtype=torch.bool)
    per = []
    for b in range(3):
        terms = [-torch.log_softmax(logits[b, j], -1)[targets[b, j]] for j in range(4) if masked[b, j]]
        if terms:
            per.append(sum(terms) / len(terms))
    assert torch.allclose(mlm_loss(logits, targets, masked), sum(per) / len(per), atol=1e-12)


def test_trajectory_denominator():
    V = 10
    logits = torch.zeros(1, 3, V, dtype=torch.float64)
    targets = torch.tensor([[1, 2, 4]])
    masked = torch.tensor([[True, False, False]])
    allowed = torch.zeros(1, V, dtype=torch.bool)
    allowed[0, [1, 2, 4]] = True
    assert abs(mlm_loss(logits, targets, masked, allowed).item() - math.log(3)) < 1e-12


def test_mlm_needs_a_masked_position():
    with pytest.raises(InvalidArgumentError):
        mlm_loss(torch.zeros(1, 2, 3), torch.zeros(1, 2, dtype=torch.long), torch.zeros(1, 2, dtype=torch.bool))


def test_constant_half_match_loss_is_ln2():
    heads = SslHeads(8, 5, 4).double()
    with torch.no_grad():
        heads.pair_cls.weight.zero_()
        heads.pair_cls.bias.zero_()
    g, r = torch.randn(6, 8, dtype=torch.float64), torch.randn(6, 8, dtype=torch.float64)
    assert abs(match_loss(g, r, heads).item() - math.log(2)) < 1e-9
    zeros = torch.zeros(4, dtype=torch.float64)
    assert abs(match_loss_from_logits(zeros, zeros, zeros).item() - math.log(2)) < 1e-12


def test_match_loss_three_terms():
    pos, rn, gn = torch.tensor([2.0, -1.0]), torch.tensor([0.5, 0.1]), torch.tensor([-3.0, 1.0])
    expected = (-F.logsigmoid(pos).mean() - F.logsigmoid(-rn).mean() - F.logsigmoid(-gn).mean()) / 3
    assert torch.allclose(match_loss_from_logits(pos, rn, gn), expected, atol=1e-7)


@pytest.mark.parametrize("seed", range(5))
def test_hardest_negative_brute_force(seed):
    torch.manual_seed(seed)
    pg, pr = torch.randn(7, 4), torch.randn(7, 4)
    r_idx, g_idx = hardest_negatives(pg, pr)
    for i in range(7):
        cos_r = [F.cosine_similarity(pg[i], pr[j], dim=0).item() if j != i else -2 for j in range(7)]
        cos_g = [F.cosine_similarity(pg[j], pr[i], dim=0).item() if j != i else -2 for j in range(7)]
        assert r_idx[i] == int(np.argmax(cos_r)) and g_idx[i] == int(np.argmax(cos_g))
        assert r_idx[i] != i and g_idx[i] != i


def test_match_scores_use_the_named_negatives():
    torch.manual_seed(1)
    heads = SslHeads(8, 5, 4)
    g, r = torch.randn(5, 8), torch.randn(5, 8)
    s = match_scores(g, r, heads)
    pg, pr = heads.proj_gps(g), heads.proj_route(r)
    assert torch.allclose(s.route_negative, heads.pair_logit(pg, pr[s.route_negative_index]))
    assert torch.allclose(s.gps_negative, heads.pair_logit(pg[s.gps_negative_index], pr))
    with pytest.raises(InvalidArgumentError):
        match_scores(g[:1], r[:1], heads)


@pytest.mark.parametrize("seed", range(5))
def test_concat_pair_score_is_additively_separable(seed):
    # s(g_i, r_i) + s(g_j, r_j) == s(g_i, r_j) + s(g_j, r_i) for a linear score on [g, r]
    torch.manual_seed(seed)
    heads = SslHeads(8, 5, 4, pair_features="concat").double()
    g, r = torch.randn(2, 4, dtype=torch.float64), torch.randn(2, 4, dtype=torch.float64)
    s = lambda a, b: heads.pair_logit(g[a], r[b]).item()
    assert abs(s(0, 0) + s(1, 1) - s(0, 1) - s(1, 0)) < 1e-12
    prod = SslHeads(8, 5, 4, pair_features="concat_product").double()
    s2 = lambda a, b: prod.pair_logit(g[a], r[b]).item()
    assert abs(s2(0, 0) + s2(1, 1) - s2(0, 1) - s2(1, 0)) > 1e-6


def test_total_loss_and_weights():
    w = LossWeights(1.0, 0.5, 2.0)
    assert total_loss(1.0, 2.0, 3.0, w) == 1.0 + 1.0 + 6.0
    with pytest.raises(InvalidArgumentError):
        LossWeights(0, 0, 0)
    with pytest.raises(InvalidArgumentError):
        LossWeights(-1, 1, 1)


def test_saturated_logits_give_zero_mlm_loss():
    V = 8
    targets = torch.tensor([[3, 5, 1]])
    logits = torch.zeros(1, 3, V, dtype=torch.float64)
    logits[0, torch.arange(3), targets[0]] = 30.0
    assert mlm_loss(logits, targets, torch.ones(1, 3, dtype=torch.bool)).item() <= 1e-9


def test_perfect_discriminator_gives_zero_match_loss():
    big = torch.full((5,), 60.0, dtype=torch.float64)
    assert match_loss_from_logits(big, -big, -big).item() <= 1e-20


def test_match_loss_descends_on_fixed_batch():
    torch.manual_seed(0)
    heads = SslHeads(8, 5, 4)
    g = torch.randn(8, 8, requires_grad=True)
    r = torch.randn(8, 8, requires_grad=True)
    opt = torch.optim.Adam([g, r, *heads.parameters()], lr=1e-2)
    initial = match_loss(g, r, heads).item()
    for _ in range(200):
        opt.zero_grad()
        loss = match_loss(g, r, heads)
        loss.backward()
        opt.step()
    assert match_loss(g, r, heads).item() < 0.2 * initial
