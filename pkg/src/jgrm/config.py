"""Training configuration and ablation presets."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidArgumentError

ABLATIONS = (
    "w/o MLM Loss",
    "w/o Match Loss",
    "w/o GPS Branch",
    "w/o Route Branch",
    "w/o Time Info",
    "w/o Mode Interactor",
    "w/o GAT",
    "w/o Mode Emb",
)


@dataclass(frozen=True)
class TrainingConfig:
    d_model: int = 64
    d_intra: int = 32
    d_inter: int = 32
    d_emb: int = 64
    d_rep: int = 64
    d_proj: int = 32
    L1: int = 2
    L2: int = 2
    heads: int = 4
    interval_hidden: int = 100
    max_len: int = 256

    mask_length: int = 2
    mask_prob: float = 0.4
    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0
    mlm_denominator: str = "vocab"
    intra_concat_directions: bool = False
    pair_features: str = "concat_product"

    batch_size: int = 16
    steps: int = 1000
    lr: float = 3e-3
    grad_clip: float = 5.0
    seed: int = 0
    checkpoint_every: int = 0

    use_gps_branch: bool = True
    use_route_branch: bool = True
    use_interactor: bool = True
    use_gat: bool = True
    use_mode_embedding: bool = True
    use_time_info: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (2 * self.d_inter == self.d_rep == self.d_model):
            raise InvalidArgumentError("widths must satisfy 2*d_inter == d_rep == d_model")
        if self.d_model % self.heads or self.d_rep % self.heads:
            raise InvalidArgumentError("d_model and d_rep must be divisible by heads")
        if self.mask_length < 2:
            raise InvalidArgumentError("mask_length must be >= 2")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise InvalidArgumentError("mask_prob must lie in [0, 1]")
        if min(self.w1, self.w2, self.w3) < 0 or (self.w1 == self.w2 == self.w3 == 0):
            raise InvalidArgumentError("loss weights must be nonnegative and not all zero")
        if self.mlm_denominator not in ("vocab", "trajectory"):
            raise InvalidArgumentError("mlm_denominator must be 'vocab' or 'trajectory'")
        if self.pair_features not in ("concat", "concat_product"):
            raise InvalidArgumentError("pair_features must be 'concat' or 'concat_product'")
        if not (self.use_gps_branch or self.use_route_branch):
            raise InvalidArgumentError("at least one branch must be enabled")
        if self.L1 < 0 or self.L2 < 0 or self.batch_size < 1 or self.steps < 0:
            raise InvalidArgumentError("layer counts, batch size and steps must be nonnegative")

    @property
    def both_branches(self) -> bool:
        return self.use_gps_branch and self.use_route_branch

    @property
    def mlm_active(self) -> bool:
        return self.w1 > 0 or self.w2 > 0

    def replace(self, **changes) -> "TrainingConfig":
        return dataclasses.replace(self, **changes)

    def ablation(self, name: str) -> "TrainingConfig":
        """Return the variant of this config matching an ablation row name."""
        presets = {
            "w/o MLM Loss": dict(w1=0.0, w2=0.0),
            "w/o Match Loss": dict(w3=0.0),
            "w/o GPS Branch": dict(use_gps_branch=False, use_interactor=False, w1=0.0, w3=0.0),
            "w/o Route Branch": dict(use_route_branch=False, use_interactor=False, w2=0.0, w3=0.0),
            "w/o Time Info": dict(use_time_info=False),
            "w/o Mode Interactor": dict(use_interactor=False),
            "w/o GAT": dict(use_gat=False),
            "w/o Mode Emb": dict(use_mode_embedding=False),
        }
        if name not in presets:
            raise InvalidArgumentError(f"unknown ablation {name!r}")
        return self.replace(**presets[name])

    def architecture(self) -> dict:
        """The fields that determine parameter shapes."""
        keys = ("d_model", "d_intra", "d_inter", "d_emb", "d_rep", "d_proj", "L1", "L2", "heads",
                "interval_hidden", "max_len", "intra_concat_directions", "pair_features")
        return {k: getattr(self, k) for k in keys}

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "TrainingConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
