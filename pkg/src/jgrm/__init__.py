"""Joint GPS and route trajectory representation learning."""

from .config import ABLATIONS, TrainingConfig
from .corpus import TrajectoryPair, generate_corpus, load_corpus, save_corpus
from .model import JGRM, build_model
from .road_network import RoadNetwork, build_grid_network
from .training import load_checkpoint, pretrain, save_checkpoint

__all__ = [
    "ABLATIONS",
    "JGRM",
    "RoadNetwork",
    "TrainingConfig",
    "TrajectoryPair",
    "build_grid_network",
    "build_model",
    "generate_corpus",
    "load_checkpoint",
    "load_corpus",
    "pretrain",
    "save_checkpoint",
    "save_corpus",
]
