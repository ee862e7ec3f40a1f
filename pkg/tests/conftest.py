import numpy as np
import pytest
import torch

from jgrm.config import TrainingConfig
from jgrm.corpus import generate_corpus
from jgrm.road_network import build_grid_network
from jgrm.training import set_deterministic

MICRO = dict(d_model=8, d_intra=4, d_inter=4, d_emb=8, d_rep=8, d_proj=4, L1=1, L2=1, heads=2,
             interval_hidden=8, max_len=64)


@pytest.fixture(autouse=True)
def _serial_torch():
    set_deterministic(True)
    yield


@pytest.fixture(scope="session")
def grid4():
    return build_grid_network(4, 4, seed=0)


@pytest.fixture(scope="session")
def grid6():
    return build_grid_network(6, 6, seed=0)


@pytest.fixture(scope="session")
def small_corpus(grid4):
    return generate_corpus(grid4, 12, seed=3, ensure_coverage=False, min_segments=10, max_segments=14)


@pytest.fixture
def micro_config():
    return TrainingConfig(**MICRO, batch_size=4, steps=5)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Collect one acceptance line; printed in the terminal summary."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
