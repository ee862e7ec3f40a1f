import csv
import json

import pytest

from jgrm.cli import main
from jgrm.config import TrainingConfig
from conftest import MICRO


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    net, corpus = d / "net.json", d / "corpus.jsonl"
    assert main(["gen-network", "--rows", "6", "--cols", "6", "--out", str(net)]) == 0
    assert main(["gen-trajectories", "--network", str(net), "--count", "60", "--seed", "1",
                 "--max-segments", "12", "--out", str(corpus)]) == 0
    cfg = d / "cfg.json"
    TrainingConfig(**MICRO, batch_size=8).to_json(cfg)
    ckpt, log = d / "m.ckpt", d / "loss.csv"
    assert main(["pretrain", "--config", str(cfg), "--corpus", str(corpus), "--network", str(net),
                 "--out", str(ckpt), "--log", str(log), "--steps", "4", "--deterministic"]) == 0
    return d, net, corpus, ckpt, log


def test_pretrain_outputs(workspace):
    d, net, corpus, ckpt, log = workspace
    rows = list(csv.reader(open(log)))
    assert rows[0] == ["step", "gmlm", "rmlm", "match", "total"] and len(rows) == 5
    assert ckpt.stat().st_size > 0
    assert len(json.loads(net.read_text())["segments"]) == 120


@pytest.mark.parametrize("task,metrics", [
    ("road-cls", {"micro_f1", "macro_f1", "majority_micro_f1"}),
    ("speed", {"mae", "rmse", "baseline_mae", "baseline_rmse"}),
    ("tte", {"mae", "rmse", "baseline_mae", "baseline_rmse"}),
    ("simquery", {"mean_rank", "hr_at_10", "no_hit", "queries", "detour_rate"}),
])
def test_eval_report(workspace, task, metrics):
    d, net, corpus, ckpt, _ = workspace
    report = d / f"{task}.csv"
    assert main(["eval", "--task", task, "--checkpoint", str(ckpt), "--corpus", str(corpus),
                 "--network", str(net), "--report", str(report), "--folds", "3"]) == 0
    rows = list(csv.DictReader(open(report)))
    assert list(rows[0]) == ["task", "metric", "value", "seed"]
    assert {r["metric"] for r in rows} == metrics
    assert all(r["task"] == task and r["seed"] == "0" for r in rows)


def test_export(workspace):
    d, _, corpus, ckpt, _ = workspace
    out = d / "emb.csv"
    assert main(["export-embeddings", "--checkpoint", str(ckpt), "--corpus", str(corpus), "--out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0][:3] == ["traj_id", "road_id", "view"] and len(rows[0]) == 3 + MICRO["d_model"]
    assert {r[2] for r in rows[1:]} == {"fused", "gps", "route"}


def test_errors_exit_nonzero(workspace, tmp_path, capsys):
    d, net, corpus, _, _ = workspace
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["eval", "--task", "tte", "--checkpoint", str(bad), "--corpus", str(corpus),
                 "--network", str(net), "--report", str(tmp_path / "r.csv")]) == 1
    assert "error:" in capsys.readouterr().err
    assert main(["gen-network", "--rows", "1", "--out", str(tmp_path / "n.json")]) == 1
