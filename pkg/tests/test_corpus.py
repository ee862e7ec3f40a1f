import json
from datetime import datetime

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from jgrm.corpus import (
    CORPUS_EPOCH,
    LOCAL_TZ,
    AssignmentMatrix,
    GpsTrajectory,
    RouteTrajectory,
    TrajectoryPair,
    congestion,
    coverage,
    generate_corpus,
    generate_pair,
    load_corpus,
    local_minute_weekday,
    save_corpus,
    split_by_day,
    start_day,
)
from jgrm.errors import InvalidArgumentError, ParseError
from jgrm.features import extract_gps_features
from jgrm.geo import haversine

NOON = CORPUS_EPOCH + 12 * 3600


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(seed=st.integers(0, 2**31 - 1))
def test_generated_pair_invariants(grid4, seed):
    pair = generate_pair(grid4, NOON, seed=seed)
    m = len(pair.route)
    assert 10 <= m <= 20
    assert pair.route.is_valid_path(grid4)
    assert pair.assignment.covers(len(pair.gps))
    assert tuple(pair.assignment.road_ids) == pair.route.road_ids
    assert all(s >= 1 for s in pair.assignment.sizes())
    entries = np.asarray(pair.route.entry_times)
    assert np.all(np.diff(entries) >= 0)
    # each GPS point lies inside its own segment's traversal window
    ends = np.append(entries[1:], np.inf)
    for s, e, j in zip(pair.assignment.starts, pair.assignment.ends, range(m)):
        t = pair.gps.points[s : e + 1, 2]
        assert np.all(t >= entries[j]) and np.all(t <= ends[j])


def test_no_immediate_u_turns(grid6):
    from jgrm.road_network import reverse_segment
    for seed in range(20):
        ids = generate_pair(grid6, NOON, seed=seed).route.road_ids
        assert all(reverse_segment(grid6, a) != b for a, b in zip(ids, ids[1:]))


def test_noise_free_speeds_match_traversal(grid4):
    pair = generate_pair(grid4, NOON, seed=5, gps_noise_m=0.0, speed_noise_sigma=0.0, sample_period_s=2.0)
    feats = extract_gps_features(pair)
    entries = np.append(pair.route.entry_times, np.inf)
    checked = 0
    for j, (s, e, rid) in enumerate(pair.assignment.rows()):
        if j == len(pair.route) - 1:
            break
        seg = grid4.segments[rid]
        expected = seg.length_m / (entries[j + 1] - entries[j])
        for i in range(s + 1, e + 1):
            assert abs(feats[i, 2] - expected) < 1e-6
            checked += 1
    assert checked > 20


def test_noise_free_speed_is_free_speed_times_congestion(grid4):
    pair = generate_pair(grid4, NOON, seed=2, gps_noise_m=0.0, speed_noise_sigma=0.0)
    factor = congestion(local_minute_weekday(NOON)[0])
    for j, rid in enumerate(pair.route.road_ids[:-1]):
        dt = pair.route.entry_times[j + 1] - pair.route.entry_times[j]
        seg = grid4.segments[rid]
        assert abs(seg.length_m / dt - seg.free_speed_mps * factor) < 1e-6  # unix-time float resolution


def test_same_seed_same_pair(grid4):
    a = generate_pair(grid4, NOON, seed=11)
    b = generate_pair(grid4, NOON, seed=11)
    assert a == b
    assert generate_pair(grid4, NOON, seed=12) != a


def test_generate_pair_rejects_short_routes(grid4):
    with pytest.raises(InvalidArgumentError):
        generate_pair(grid4, NOON, min_segments=5)
    with pytest.raises(InvalidArgumentError):
        generate_pair(grid4, NOON, min_segments=12, max_segments=11)


def test_congestion_profile():
    values = np.array([congestion(m) for m in range(1440)])
    assert values.min() >= 0.5 and values.max() <= 1.0
    assert congestion(510) == pytest.approx(0.5) and congestion(1080) == pytest.approx(0.5)
    assert congestion(180) > 0.99


def test_calendar_oracle():
    start = datetime(2018, 11, 1, 0, 0, tzinfo=LOCAL_TZ).timestamp()
    assert start == CORPUS_EPOCH
    assert local_minute_weekday(start) == (0, 3)  # Thursday
    assert local_minute_weekday(start + 23 * 3600 + 59 * 60) == (1439, 3)
    assert local_minute_weekday(start + 86400) == (0, 4)


def test_corpus_coverage_and_days(grid4):
    corpus = generate_corpus(grid4, 30, seed=1)
    assert coverage(corpus, grid4.num_segments).min() >= 1
    assert len(corpus) >= 30
    assert {p.traj_id for p in corpus} == set(range(len(corpus)))
    assert all(0 <= start_day(p) < 15 for p in corpus)
    train, val, test = split_by_day(corpus)
    assert len(train) + len(val) + len(test) == len(corpus)
    assert all(start_day(p) < 13 for p in train) and all(start_day(p) == 13 for p in val)
    assert all(start_day(p) == 14 for p in test)


def test_corpus_is_seeded_per_trajectory(grid4):
    a = generate_corpus(grid4, 6, seed=4, ensure_coverage=False)
    b = generate_corpus(grid4, 9, seed=4, ensure_coverage=False)
    assert a == b[:6]


def test_jsonl_round_trip(tmp_path, small_corpus):
    path = tmp_path / "corpus.jsonl"
    save_corpus(small_corpus, path)
    assert load_corpus(path) == small_corpus
    assert len(path.read_text().splitlines()) == len(small_corpus)
    record = json.loads(path.read_text().splitlines()[0])
    assert set(record) == {"traj_id", "gps", "route", "assignment"}


def test_empty_and_truncated_files(tmp_path, small_corpus):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert load_corpus(empty) == []
    path = tmp_path / "trunc.jsonl"
    save_corpus(small_corpus[:3], path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:2] + [lines[2][:40]]) + "\n")
    with pytest.raises(ParseError, match="line 3"):
        load_corpus(path)


def test_type_invariants():
    with pytest.raises(InvalidArgumentError):
        GpsTrajectory(np.array([[0.0, 0.0, 1.0]]))
    with pytest.raises(InvalidArgumentError):
        GpsTrajectory(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]))
    with pytest.raises(InvalidArgumentError):
        RouteTrajectory((1, 2), (5.0, 4.0))
    gps = GpsTrajectory(np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 2.0]]))
    route = RouteTrajectory((0, 1), (0.0, 1.0))
    with pytest.raises(InvalidArgumentError):
        TrajectoryPair(0, gps, route, AssignmentMatrix((0, 1), (0, 1), (0, 1))).validate()
    TrajectoryPair(0, gps, route, AssignmentMatrix((0, 1), (0, 2), (0, 1))).validate()


def test_haversine_distance_of_features_matches_points(small_corpus):
    pair = small_corpus[0]
    p = pair.gps.points
    feats = extract_gps_features(pair)
    assert np.allclose(feats[1:, 6], haversine(p[:-1, 0], p[:-1, 1], p[1:, 0], p[1:, 1]))
