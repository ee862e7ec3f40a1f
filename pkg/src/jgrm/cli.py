"""Command-line entry point: ``jgrm <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from .config import TrainingConfig
from .corpus import generate_corpus, load_corpus, save_corpus
from .detour import DetourConfig
from .downstream import (
    build_similarity_setup,
    encode_segments,
    eval_road_classification,
    eval_speed_inference,
    eval_topk_query,
    eval_travel_time,
    export_rows,
    majority_baseline,
    mean_baseline,
    segment_mean_speeds,
    static_segment_reps,
)
from .errors import JGRMError
from .road_network import RoadNetwork, build_grid_network
from .training import load_checkpoint, pretrain

log = logging.getLogger("jgrm")

TASKS = ("road-cls", "speed", "tte", "simquery")


def _cmd_gen_network(args) -> None:
    net = build_grid_network(args.rows, args.cols, cell_m=args.cell_m, seed=args.seed)
    net.save(args.out)
    print(f"wrote {net.num_segments} segments, {len(net.edges)} edges to {args.out}")


def _cmd_gen_trajectories(args) -> None:
    net = RoadNetwork.load(args.network)
    corpus = generate_corpus(
        net, args.count, seed=args.seed, ensure_coverage=not args.no_coverage,
        min_segments=args.min_segments, max_segments=args.max_segments,
    )
    save_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} trajectory pairs to {args.out}")


def _cmd_pretrain(args) -> None:
    config = TrainingConfig.from_json(args.config) if args.config else TrainingConfig()
    overrides = {k: v for k, v in (("steps", args.steps), ("seed", args.seed)) if v is not None}
    if overrides:
        config = config.replace(**overrides)
    net = RoadNetwork.load(args.network)
    corpus = load_corpus(args.corpus)
    result = pretrain(config, net, corpus, log_path=args.log, checkpoint_path=args.out,
                      deterministic=args.deterministic)
    last = result.history[-1] if result.history else {}
    print(f"trained {result.step} steps; final losses {last}; checkpoint {args.out}")


def _evaluate(task, model, net, corpus, seed, folds):
    """Rows of (metric, value) for one task."""
    if task in ("road-cls", "speed"):
        static = static_segment_reps(encode_segments(model, corpus))
        if task == "road-cls":
            labels = net.class_labels()[static.road_ids]
            mi, ma = eval_road_classification(static.reps, labels, folds=folds, seed=seed)
            return [("micro_f1", mi), ("macro_f1", ma), ("majority_micro_f1", majority_baseline(labels))]
        ids, speeds = segment_mean_speeds(corpus, net)
        pos = {r: i for i, r in enumerate(static.road_ids)}
        mae, rmse = eval_speed_inference(static.reps[[pos[r] for r in ids]], speeds, folds=folds, seed=seed)
        bmae, brmse = mean_baseline(speeds)
        return [("mae", mae), ("rmse", rmse), ("baseline_mae", bmae), ("baseline_rmse", brmse)]
    if task == "tte":
        mae, rmse = eval_travel_time(model, corpus, seed=seed, folds=folds)
        bmae, brmse = mean_baseline([p.duration for p in corpus])
        return [("mae", mae), ("rmse", rmse), ("baseline_mae", bmae), ("baseline_rmse", brmse)]
    setup = build_similarity_setup(net, corpus, min(200, len(corpus) // 10 or 1), DetourConfig(), seed=seed)
    m = eval_topk_query(model, setup)
    return [("mean_rank", m.mean_rank), ("hr_at_10", m.hr_at_10), ("no_hit", m.no_hit),
            ("queries", m.num_queries), ("detour_rate", setup.detour_rate)]


def _cmd_eval(args) -> None:
    state = load_checkpoint(args.checkpoint)
    net = RoadNetwork.load(args.network)
    corpus = load_corpus(args.corpus)
    before = state.model.checksum()
    rows = _evaluate(args.task, state.model, net, corpus, args.seed, args.folds)
    if state.model.checksum() != before:
        raise AssertionError("evaluation modified backbone parameters")
    with open(args.report, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "metric", "value", "seed"])
        for metric, value in rows:
            writer.writerow([args.task, metric, repr(float(value)), args.seed])
    for metric, value in rows:
        print(f"{args.task} {metric} {float(value):.6g}")


def _cmd_export(args) -> None:
    state = load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.corpus)
    d = state.config.d_model
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["traj_id", "road_id", "view"] + [f"e{i}" for i in range(d)])
        for tid, rid, view, vec in export_rows(state.model, corpus):
            writer.writerow([tid, rid, view] + [repr(float(x)) for x in np.asarray(vec)])
    print(f"wrote embeddings to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jgrm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-network", help="build a synthetic grid road network")
    p.add_argument("--rows", type=int, default=8)
    p.add_argument("--cols", type=int, default=8)
    p.add_argument("--cell-m", type=float, default=200.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_network)

    p = sub.add_parser("gen-trajectories", help="simulate paired GPS/route trajectories")
    p.add_argument("--network", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-segments", type=int, default=10)
    p.add_argument("--max-segments", type=int, default=20)
    p.add_argument("--no-coverage", action="store_true", help="do not top up uncovered segments")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_trajectories)

    p = sub.add_parser("pretrain", help="self-supervised pretraining")
    p.add_argument("--config", help="JSON TrainingConfig; defaults when omitted")
    p.add_argument("--corpus", required=True)
    p.add_argument("--network", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="loss CSV path")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--deterministic", action="store_true", help="serial, repeatable execution")
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("eval", help="frozen-backbone downstream evaluation")
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--network", required=True)
    p.add_argument("--report", required=True, help="CSV report path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=5)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("export-embeddings", help="write per-trajectory and per-segment representations")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (JGRMError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
