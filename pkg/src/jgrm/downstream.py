"""Frozen-backbone downstream evaluation: road classification, speed inference,
travel-time estimation, and detour-based similarity search."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from scipy.stats import norm, rankdata
from sklearn.linear_model import LogisticRegression, RidgeCV
from sklearn.metrics import f1_score
from sklearn.model_selection import KFold, StratifiedKFold
from sklearn.neural_network import MLPRegressor
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .batch import collate_route, make_batch
from .corpus import TrajectoryPair
from .detour import DetourConfig, detour_augment
from .errors import DegenerateLabelsError, DetourFailureError, InvalidArgumentError
from .features import extract_route_features, route_feature_matrix, segment_speeds
from .road_network import RoadNetwork

log = logging.getLogger(__name__)

TOP_RESULTS = 1000


# ---------------------------------------------------------------------------
# Representation extraction


@dataclass
class SegmentOccurrences:
    """Fused per-occurrence segment representations of a corpus."""

    traj_ids: np.ndarray  # (N,)
    positions: np.ndarray  # (N,)
    road_ids: np.ndarray  # (N,)
    reps: np.ndarray  # (N, d)


@dataclass
class StaticSegmentReps:
    road_ids: np.ndarray  # (K,) segments seen at least once
    reps: np.ndarray  # (K, d)
    support: np.ndarray  # (K,)

    def __post_init__(self):
        if len(self.support) and self.support.min() < 1:
            raise InvalidArgumentError("every static rep needs support >= 1")


def _batches(items, size):
    for i in range(0, len(items), size):
        yield items[i : i + size]


@torch.no_grad()
def encode_segments(model, corpus: Sequence[TrajectoryPair], batch_size: int = 64) -> SegmentOccurrences:
    """Unmasked fused segment representations for every segment occurrence."""
    model.eval()
    traj, pos, rids, reps = [], [], [], []
    for chunk in _batches(list(corpus), batch_size):
        batch = make_batch(chunk, dtype=next(model.parameters()).dtype)
        Z = model.encode(batch).fused_segments
        b, j = torch.nonzero(batch.valid, as_tuple=True)
        traj.append(np.asarray(batch.traj_ids)[b.numpy()])
        pos.append(j.numpy())
        rids.append(batch.road_ids[b, j].numpy())
        reps.append(Z[b, j].double().numpy())
    return SegmentOccurrences(
        np.concatenate(traj), np.concatenate(pos), np.concatenate(rids), np.concatenate(reps)
    )


def static_segment_reps(occ: SegmentOccurrences) -> StaticSegmentReps:
    """Average every segment's occurrence representations."""
    ids, inverse, counts = np.unique(occ.road_ids, return_inverse=True, return_counts=True)
    sums = np.zeros((len(ids), occ.reps.shape[1]))
    np.add.at(sums, inverse, occ.reps)
    return StaticSegmentReps(ids, sums / counts[:, None], counts)


@torch.no_grad()
def route_trajectory_reps(model, route_features: Sequence[np.ndarray], time_info: bool = True,
                          batch_size: int = 128) -> np.ndarray:
    """Raw route-encoder trajectory representations, no masking, no interactor."""
    model.eval()
    dtype = next(model.parameters()).dtype
    re_prime = model.route_encoder.gat_update()
    out = []
    for chunk in _batches(list(route_features), batch_size):
        road_ids, valid, masked, intervals, minute, weekday = collate_route(chunk, [()] * len(chunk), dtype)
        _, z = model.route_encoder(road_ids, valid, masked, intervals, minute, weekday,
                                   time_info=time_info, re_prime=re_prime)
        out.append(z.double().numpy())
    return np.concatenate(out)


def segment_mean_speeds(corpus: Sequence[TrajectoryPair], net: RoadNetwork) -> tuple[np.ndarray, np.ndarray]:
    """(road_ids, mean realised speed in m/s) for every segment with a full traversal."""
    lengths = net.lengths()
    sums = np.zeros(net.num_segments)
    counts = np.zeros(net.num_segments, dtype=np.int64)
    for pair in corpus:
        for rid, v in segment_speeds(pair, lengths):
            sums[rid] += v
            counts[rid] += 1
    ids = np.flatnonzero(counts)
    return ids, sums[ids] / counts[ids]


# ---------------------------------------------------------------------------
# Road classification


def eval_road_classification(reps: np.ndarray, labels: np.ndarray, folds: int = 5, seed: int = 0):
    """Stratified k-fold softmax regression; returns mean (micro F1, macro F1)."""
    reps = np.asarray(reps, dtype=np.float64)
    labels = np.asarray(labels)
    _, counts = np.unique(labels, return_counts=True)
    if len(counts) < 2:
        raise DegenerateLabelsError("road classification needs at least two classes")
    if counts.min() < folds:
        raise InvalidArgumentError(f"every class needs >= {folds} segments, smallest has {counts.min()}")
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    micro, macro = [], []
    for train, test in splitter.split(reps, labels):
        clf = make_pipeline(StandardScaler(), LogisticRegression(max_iter=2000))
        clf.fit(reps[train], labels[train])
        pred = clf.predict(reps[test])
        micro.append(f1_score(labels[test], pred, average="micro"))
        macro.append(f1_score(labels[test], pred, average="macro"))
    return float(np.mean(micro)), float(np.mean(macro))


def majority_baseline(labels: np.ndarray) -> float:
    """Micro F1 of always predicting the most frequent class."""
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    return float(counts.max() / counts.sum())


# ---------------------------------------------------------------------------
# Speed inference


class NormalScoreTransform:
    """Rank-based inverse normal transform with a piecewise-linear inverse.

    Tied values share the normal score of their average rank. Between training
    values both maps interpolate linearly; outside they clamp to the extremes.
    """

    def fit(self, y) -> "NormalScoreTransform":
        y = np.asarray(y, dtype=np.float64)
        if len(y) == 0:
            raise InvalidArgumentError("cannot fit a transform on no labels")
        scores = norm.ppf((rankdata(y) - 0.5) / len(y))
        self.values_, inverse = np.unique(y, return_inverse=True)
        self.scores_ = np.zeros(len(self.values_))
        self.scores_[inverse] = scores
        return self

    def transform(self, y) -> np.ndarray:
        return np.interp(np.asarray(y, dtype=np.float64), self.values_, self.scores_)

    def inverse_transform(self, z) -> np.ndarray:
        return np.interp(np.asarray(z, dtype=np.float64), self.scores_, self.values_)


def mean_baseline(y) -> tuple[float, float]:
    """MAE and RMSE of predicting the label mean."""
    y = np.asarray(y, dtype=np.float64)
    dev = y - y.mean()
    return float(np.abs(dev).mean()), float(np.sqrt((dev**2).mean()))


def _errors(y, pred):
    err = np.asarray(pred) - np.asarray(y)
    return float(np.abs(err).mean()), float(np.sqrt((err**2).mean()))


def eval_speed_inference(reps: np.ndarray, speeds: np.ndarray, folds: int = 5, seed: int = 0):
    """K-fold linear regression on normal scores; MAE and RMSE in the label's units.

    Constant labels are predicted exactly, so the sole failure is having fewer
    samples than folds.
    """
    reps = np.asarray(reps, dtype=np.float64)
    y = np.asarray(speeds, dtype=np.float64)
    if len(y) < folds:
        raise DegenerateLabelsError(f"need at least {folds} labelled segments, got {len(y)}")
    if np.ptp(y) == 0:
        return 0.0, 0.0
    pred = np.zeros_like(y)
    for train, test in KFold(n_splits=folds, shuffle=True, random_state=seed).split(reps):
        nst = NormalScoreTransform().fit(y[train])
        head = make_pipeline(StandardScaler(), RidgeCV(alphas=np.logspace(-6, 3, 10)))
        head.fit(reps[train], nst.transform(y[train]))
        pred[test] = nst.inverse_transform(head.predict(reps[test]))
    return _errors(y, pred)


# ---------------------------------------------------------------------------
# Travel time estimation


def travel_time_reps(model, corpus: Sequence[TrajectoryPair]) -> np.ndarray:
    """Route-encoder trajectory reps with every time embedding switched off."""
    return route_trajectory_reps(model, [extract_route_features(p) for p in corpus], time_info=False)


def eval_travel_time(model, corpus: Sequence[TrajectoryPair], seed: int = 0, folds: int = 5,
                     hidden: tuple[int, int] = (64, 64)):
    """K-fold two-hidden-layer ReLU regressor; MAE and RMSE in seconds.

    The target is normalised as a standardised log duration, which tames the
    long congestion tail, and inverted before scoring.
    """
    y = np.array([p.duration for p in corpus], dtype=np.float64)
    if len(y) < folds:
        raise InvalidArgumentError(f"need at least {folds} trajectories, got {len(y)}")
    if np.ptp(y) == 0:
        return 0.0, 0.0
    reps = travel_time_reps(model, corpus)
    target = np.log(y)
    pred = np.zeros_like(y)
    for train, test in KFold(n_splits=folds, shuffle=True, random_state=seed).split(reps):
        mu, sd = target[train].mean(), target[train].std()
        head = make_pipeline(
            StandardScaler(),
            MLPRegressor(hidden_layer_sizes=hidden, activation="relu", alpha=1e-2, max_iter=500,
                         early_stopping=len(train) >= 50, random_state=seed),
        )
        head.fit(reps[train], (target[train] - mu) / sd)
        pred[test] = np.exp(head.predict(reps[test]) * sd + mu)
    return _errors(y, pred)


# ---------------------------------------------------------------------------
# Similarity search


@dataclass(frozen=True)
class QueryMetrics:
    mean_rank: float  # over keys ranked within the top TOP_RESULTS; nan if none
    hr_at_10: float
    no_hit: int
    num_queries: int
    found: int  # keys within the top TOP_RESULTS


def key_ranks(query_reps: np.ndarray, db_reps: np.ndarray, key_index: np.ndarray) -> np.ndarray:
    """1-based rank of each query's key under cosine similarity (ties favour the key)."""
    if len(db_reps) == 0:
        raise InvalidArgumentError("similarity search needs a non-empty database")
    q = query_reps / np.linalg.norm(query_reps, axis=1, keepdims=True).clip(1e-12)
    d = db_reps / np.linalg.norm(db_reps, axis=1, keepdims=True).clip(1e-12)
    sims = q @ d.T
    key_sim = sims[np.arange(len(q)), key_index]
    return 1 + (sims > key_sim[:, None]).sum(axis=1)


def topk_metrics(ranks: np.ndarray, k: int = 10, top: int = TOP_RESULTS) -> QueryMetrics:
    ranks = np.asarray(ranks)
    if len(ranks) == 0:
        raise InvalidArgumentError("no queries to score")
    found = ranks[ranks <= top]
    hits = int((ranks <= k).sum())
    return QueryMetrics(
        mean_rank=float(found.mean()) if len(found) else float("nan"),
        hr_at_10=hits / len(ranks),
        no_hit=len(ranks) - hits,
        num_queries=len(ranks),
        found=len(found),
    )


@dataclass
class SimilaritySetup:
    queries: list[np.ndarray]  # route feature matrices
    database: list[np.ndarray]
    key_index: np.ndarray  # db position of each query's detoured key
    query_ids: list[int]
    detour_rate: float  # replaced segments / key segments, corpus level


def build_similarity_setup(net: RoadNetwork, corpus: Sequence[TrajectoryPair], num_queries: int,
                           cfg: DetourConfig = DetourConfig(), seed: int = 0) -> SimilaritySetup:
    """Pick queries, detour each into a key, and form db = other trajectories + keys.

    Queries whose detour fails are skipped and logged; further candidates are
    drawn until ``num_queries`` succeed or the corpus runs out.
    """
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(corpus))
    queries, keys, ids = [], [], []
    replaced = total = 0
    chosen = set()
    for idx in order:
        if len(queries) == num_queries:
            break
        pair = corpus[idx]
        if len(pair.route) < 10:
            continue
        try:
            res = detour_augment(net, pair.route, cfg, seed=rng, end_time=float(pair.gps.points[-1, 2]))
        except DetourFailureError:
            log.info("detour failed for trajectory %d; query skipped", pair.traj_id)
            continue
        chosen.add(int(idx))
        queries.append(extract_route_features(pair))
        keys.append(route_feature_matrix(res.route, res.end_time))
        ids.append(pair.traj_id)
        replaced += res.replaced
        total += len(res.route)
    if len(queries) < num_queries:
        log.warning("only %d of %d queries could be detoured", len(queries), num_queries)
    database = [extract_route_features(p) for i, p in enumerate(corpus) if i not in chosen]
    key_index = np.arange(len(database), len(database) + len(keys))
    return SimilaritySetup(queries, database + keys, key_index, ids, replaced / max(total, 1))


def eval_topk_query(model, setup: SimilaritySetup, k: int = 10, time_info: bool = True) -> QueryMetrics:
    """Rank the database by cosine similarity of raw route-encoder reps."""
    if not setup.database:
        raise InvalidArgumentError("similarity search needs a non-empty database")
    q = route_trajectory_reps(model, setup.queries, time_info=time_info)
    d = route_trajectory_reps(model, setup.database, time_info=time_info)
    return topk_metrics(key_ranks(q, d, setup.key_index), k=k)


# ---------------------------------------------------------------------------
# Export


@torch.no_grad()
def export_rows(model, corpus: Sequence[TrajectoryPair], batch_size: int = 64):
    """Yield (traj_id, road_id, view, vector) rows; road_id -1 marks trajectory reps."""
    model.eval()
    dtype = next(model.parameters()).dtype
    for chunk in _batches(list(corpus), batch_size):
        batch = make_batch(chunk, dtype=dtype)
        enc = model.encode(batch)
        views = {"fused": (enc.fused_trajectory, enc.fused_segments)}
        if enc.gps_trajectory is not None:
            views["gps"] = (enc.gps_trajectory, enc.gps_segments)
        if enc.route_trajectory is not None:
            views["route"] = (enc.route_trajectory, enc.route_segments)
        for b, tid in enumerate(batch.traj_ids):
            m = int(batch.valid[b].sum())
            for view, (z, Z) in views.items():
                yield tid, -1, view, z[b].double().numpy()
                for j in range(m):
                    yield tid, int(batch.road_ids[b, j]), view, Z[b, j].double().numpy()
