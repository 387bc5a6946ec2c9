import numpy as np
import pytest

from alphagame.costs import CrowdCost
from alphagame.game import GameSpec, TimeGrid
from alphagame.kernels import Gaussian, Quadratic


def crowd_game(N=2, d=2, kernel=None, q=None, sigma=0.0, gamma=0.0, rate=0.0, control=0.1, terminal=1.0,
               targets=None, x0=None, cap=1.0):
    """Small crowd game with identity drift, own-block Brownian noise and one jump source per player."""
    kernel = kernel or Quadratic()
    q = np.ones((N, N)) - np.eye(N) if q is None else np.asarray(q, dtype=float)
    targets = np.full((N, d), 0.5) if targets is None else targets
    cost = CrowdCost(control, kernel, q, terminal, targets)
    diff = np.zeros((N, d, N * d))
    load = np.zeros((N, N, d))
    for i in range(N):
        diff[i, :, i * d:(i + 1) * d] = sigma * np.eye(d)
        load[i, i, :] = gamma
    drift = np.broadcast_to(np.eye(d), (N, d, d)).copy()
    x0 = np.zeros((N, d)) if x0 is None else x0
    return GameSpec(drift, diff, load, np.full(N, rate), x0, cost, cap)


@pytest.fixture
def grid():
    return TimeGrid(1.0, 50)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def noisy_game():
    return crowd_game(N=3, kernel=Gaussian(1.0, 2.0), sigma=0.2, gamma=0.3, rate=0.5,
                      q=[[0, 1, 2], [0.5, 0, 1], [1, 1, 0]])


@pytest.fixture(scope="session")
def lqr_trained():
    """The lqr-oracle preset trained with its shipped settings: ``(preset, params, log)``."""
    from alphagame.presets import get_preset
    from alphagame.train import train
    preset = get_preset("lqr-oracle")
    params, log = train(preset.game, preset.config)
    return preset, params, log


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
