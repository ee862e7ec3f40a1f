"""Pretraining loop, loss logging, and binary checkpoints."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .batch import make_batch
from .config import TrainingConfig
from .corpus import TrajectoryPair
from .errors import (
    ConfigMismatchError,
    CorruptFileError,
    InvalidArgumentError,
    NonFiniteLossError,
    VersionMismatchError,
)
from .features import extract_gps_features, extract_route_features
from .model import JGRM, build_model
from .objectives import sample_shared_mask

log = logging.getLogger(__name__)

MAGIC = b"JGRMCKPT"
FORMAT_VERSION = 1
LOSS_COLUMNS = ("step", "gmlm", "rmlm", "match", "total")


def set_deterministic(enabled: bool = True) -> None:
    """Serial, repeatable CPU execution."""
    if enabled:
        torch.set_num_threads(1)
    torch.use_deterministic_algorithms(enabled)


def feature_normalization(corpus: Sequence[TrajectoryPair]):
    feats = np.concatenate([extract_gps_features(p) for p in corpus])
    return feats.mean(axis=0), feats.std(axis=0)


class BatchSampler:
    """Epoch-wise shuffled batches with fresh shared masks every step."""

    def __init__(self, corpus: Sequence[TrajectoryPair], config: TrainingConfig):
        if not corpus:
            raise InvalidArgumentError("cannot pretrain on an empty corpus")
        self.corpus = list(corpus)
        self.config = config
        self.route_features = [extract_route_features(p) for p in self.corpus]
        self.order_rng = np.random.default_rng([config.seed, 0])
        self.mask_rng = np.random.default_rng([config.seed, 1])
        self._queue: list[int] = []

    def indices(self) -> list[int]:
        bs = min(self.config.batch_size, len(self.corpus))
        while len(self._queue) < bs:
            self._queue.extend(self.order_rng.permutation(len(self.corpus)).tolist())
        out, self._queue = self._queue[:bs], self._queue[bs:]
        return out

    def next(self, dtype=torch.float32):
        idx = self.indices()
        pairs = [self.corpus[i] for i in idx]
        masks = [
            sample_shared_mask(len(p.route), self.config.mask_length, self.config.mask_prob, self.mask_rng)
            for p in pairs
        ]
        return make_batch(pairs, masks, dtype=dtype, route_features=[self.route_features[i] for i in idx])


@dataclass
class PretrainResult:
    model: JGRM
    history: list[dict] = field(default_factory=list)
    grad_norms: dict[str, float] = field(default_factory=dict)

    @property
    def step(self) -> int:
        return len(self.history)


def _write_log(history, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOSS_COLUMNS)
        for row in history:
            writer.writerow([row["step"]] + [repr(row[k]) for k in LOSS_COLUMNS[1:]])


def _dump_batch(path, step, batch, values) -> None:
    Path(path).write_text(json.dumps({
        "step": step,
        "traj_ids": batch.traj_ids,
        "masked_positions": [list(m.masked_positions) for m in batch.masks],
        "losses": {k: repr(v) for k, v in values.items()},
    }, indent=2))


def pretrain(
    config: TrainingConfig,
    net,
    corpus: Sequence[TrajectoryPair],
    log_path=None,
    checkpoint_path=None,
    deterministic: bool = True,
    model: JGRM | None = None,
    on_step: Callable | None = None,
    dump_path=None,
) -> PretrainResult:
    """Optimise the weighted sum of both recovery losses and the match loss.

    Each step samples a batch, draws one shared mask per pair, and applies one
    Adam update with gradient-norm clipping. ``on_step(step, batch, out)`` is
    called after the loss is computed and before the update.
    """
    set_deterministic(deterministic)
    if not corpus:
        raise InvalidArgumentError("cannot pretrain on an empty corpus")
    if model is None:
        model = build_model(config, net)
        model.gps_encoder.set_normalization(*feature_normalization(corpus))
    model.train()
    sampler = BatchSampler(corpus, config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    result = PretrainResult(model=model, grad_norms={n: 0.0 for n, _ in model.named_parameters()})
    dtype = next(model.parameters()).dtype

    for step in range(1, config.steps + 1):
        batch = sampler.next(dtype)
        if not torch.equal(batch.gps_masked(), batch.masked & batch.valid):
            raise AssertionError("GPS and route views received different masks")
        out = model.step(batch)
        values = out.values()
        if not all(np.isfinite(v) for v in values.values()):
            dump = dump_path or (Path(log_path).with_suffix(".nonfinite.json") if log_path else "nonfinite_batch.json")
            _dump_batch(dump, step, batch, values)
            raise NonFiniteLossError(f"non-finite loss at step {step}: {values}", str(dump))
        if on_step is not None:
            on_step(step, batch, out)
        optimizer.zero_grad(set_to_none=True)
        out.total.backward()
        for name, p in model.named_parameters():
            if p.grad is not None:
                result.grad_norms[name] += float(p.grad.norm())
        torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
        optimizer.step()
        result.history.append({"step": step, **values})
        if step % 50 == 0:
            log.info("step %d %s", step, {k: round(v, 4) for k, v in values.items()})
        if checkpoint_path and config.checkpoint_every and step % config.checkpoint_every == 0:
            save_checkpoint(model, checkpoint_path, step)
    if log_path:
        _write_log(result.history, log_path)
    if checkpoint_path:
        save_checkpoint(model, checkpoint_path, len(result.history))
    model.eval()
    return result


def save_checkpoint(model: JGRM, path, step: int = 0) -> None:
    """Write parameters and buffers in a self-describing, byte-stable format."""
    tensors, chunks, offset = [], [], 0
    for name, t in model.state_dict().items():
        arr = np.ascontiguousarray(t.detach().cpu().numpy())
        raw = arr.tobytes()
        tensors.append({"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({
        "version": FORMAT_VERSION,
        "step": int(step),
        "num_segments": model.num_segments,
        "config": model.config.to_dict(),
        "tensors": tensors,
    }, sort_keys=True).encode()
    payload = b"".join(chunks)
    digest = hashlib.sha256(header + payload).digest()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
        fh.write(digest)


@dataclass
class ModelState:
    model: JGRM
    step: int
    config: TrainingConfig


def load_checkpoint(path, expected: TrainingConfig | None = None) -> ModelState:
    data = Path(path).read_bytes()
    prefix = len(MAGIC) + struct.calcsize("<IQ")
    if len(data) < prefix or not data.startswith(MAGIC):
        raise CorruptFileError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack("<IQ", data[len(MAGIC):prefix])
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    body = data[prefix:]
    if len(body) < header_len + 32:
        raise CorruptFileError(f"{path}: truncated")
    header_raw = body[:header_len]
    try:
        header = json.loads(header_raw)
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"{path}: unreadable header") from exc
    payload_len = sum(t["nbytes"] for t in header["tensors"])
    payload = body[header_len: header_len + payload_len]
    digest = body[header_len + payload_len:]
    if len(payload) != payload_len or len(digest) != 32:
        raise CorruptFileError(f"{path}: truncated")
    if hashlib.sha256(header_raw + payload).digest() != digest:
        raise CorruptFileError(f"{path}: checksum mismatch")

    config = TrainingConfig.from_dict(header["config"])
    if expected is not None and expected.architecture() != config.architecture():
        diff = {k: (v, config.architecture()[k]) for k, v in expected.architecture().items()
                if config.architecture()[k] != v}
        raise ConfigMismatchError(f"{path}: architecture differs (expected, found): {diff}")
    n = header["num_segments"]
    model = JGRM(config, n, np.zeros((n, n)))
    state = {}
    for t in header["tensors"]:
        buf = payload[t["offset"]: t["offset"] + t["nbytes"]]
        arr = np.frombuffer(buf, dtype=np.dtype(t["dtype"])).reshape(t["shape"]).copy()
        state[t["name"]] = torch.from_numpy(arr)
    model.load_state_dict(state)
    model.eval()
    return ModelState(model=model, step=header["step"], config=config)
