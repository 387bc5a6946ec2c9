"""Shipped experiment presets (four-player crowd games and a one-player tracking oracle)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import CrowdCost
from .game import GameSpec
from .kernels import Gaussian, Quadratic
from .train import TrainConfig

N_PLAYERS = 4
DIM = 2
CONTROL_CAP = 5.0
IDIO_RATES = (0.3, 0.2, 0.2, 0.2)
COMMON_RATE = 0.25


class UnknownPreset(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class Preset:
    name: str
    game: GameSpec
    config: TrainConfig


def crowd_noise(sigma, gamma_idio, gamma_common, N=N_PLAYERS, d=DIM):
    """Noise coefficients shared by the crowd presets.

    Brownian dimension ``n = N*d`` with player ``i`` driven by its own block.
    Jump sources: ``d`` idiosyncratic sources per player (one per axis,
    intensity ``IDIO_RATES[i]``), then ``d`` common sources (intensity
    ``COMMON_RATE``) loading every player with ``gamma_common``.
    """
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (N,))
    gamma_idio = np.broadcast_to(np.asarray(gamma_idio, dtype=float), (N,))
    diff = np.zeros((N, d, N * d))
    for i in range(N):
        diff[i, :, i * d:(i + 1) * d] = sigma[i] * np.eye(d)
    m = N * d + d
    load = np.zeros((N, m, d))
    rates = np.zeros(m)
    for i in range(N):
        for c in range(d):
            load[i, i * d + c, c] = gamma_idio[i]
            rates[i * d + c] = IDIO_RATES[i]
    for c in range(d):
        rates[N * d + c] = COMMON_RATE
        load[:, N * d + c, c] = gamma_common
    return diff, load, rates


def _crowd_game(kernel, q, terminal_weight, targets, sigma, gamma_idio, gamma_common):
    cost = CrowdCost(0.1, kernel, q, terminal_weight, targets)
    diff, load, rates = crowd_noise(sigma, gamma_idio, gamma_common)
    drift = np.broadcast_to(np.eye(DIM), (N_PLAYERS, DIM, DIM)).copy()
    return GameSpec(drift, diff, load, rates, np.zeros((N_PLAYERS, DIM)), cost, CONTROL_CAP)


def _sigma():
    return 0.1 * np.arange(N_PLAYERS) / N_PLAYERS


# fresh noise makes the loss noisy; a longer patience keeps the rate from collapsing early
CROWD_TRAINING = TrainConfig(patience=50)

FLOCK_TARGETS = [(0.25, 0.0), (0.0, 0.5), (-0.5, 0.0), (0.0, -1.0)]


def aversion() -> Preset:
    q = np.ones((N_PLAYERS, N_PLAYERS)) - np.eye(N_PLAYERS)
    game = _crowd_game(Gaussian(100.0, 100.0), q, 1.0, np.full((N_PLAYERS, DIM), 0.5), _sigma(), 0.1, 0.0)
    return Preset("aversion", game, CROWD_TRAINING)


def flocking_uniform() -> Preset:
    q = np.ones((N_PLAYERS, N_PLAYERS)) - np.eye(N_PLAYERS)
    game = _crowd_game(Quadratic(), q, 40.0, FLOCK_TARGETS, _sigma(), 0.1, 0.0)
    return Preset("flocking-uniform", game, CROWD_TRAINING)


def flocking_groups() -> Preset:
    q = np.zeros((N_PLAYERS, N_PLAYERS))
    for a, b in ((1, 2), (0, 3)):  # players {2,3} and {1,4}
        q[a, b] = q[b, a] = 1.0
    game = _crowd_game(Quadratic(), q, 40.0, FLOCK_TARGETS, _sigma(), 0.1, 0.0)
    return Preset("flocking-groups", game, CROWD_TRAINING)


def flocking_common_jump() -> Preset:
    q = np.ones((N_PLAYERS, N_PLAYERS)) - np.eye(N_PLAYERS)
    game = _crowd_game(Quadratic(), q, 40.0, FLOCK_TARGETS, 0.0, 0.0, 0.1)
    return Preset("flocking-common-jump", game, CROWD_TRAINING)


def lqr_oracle() -> Preset:
    """Deterministic single-player tracking problem with a Riccati reference solution."""
    cost = CrowdCost(0.1, Quadratic(), np.zeros((1, 1)), 1.0, [(0.5, 0.5)])
    game = GameSpec(np.eye(DIM)[None], np.zeros((1, DIM, 1)), np.zeros((1, 0, DIM)), np.zeros(0),
                    np.zeros((1, DIM)), cost, CONTROL_CAP)
    return Preset("lqr-oracle", game, TrainConfig(batch=1, eval_batch=1, patience=50, resample="fixed"))


PRESETS = {
    "aversion": aversion,
    "flocking-uniform": flocking_uniform,
    "flocking-groups": flocking_groups,
    "flocking-common-jump": flocking_common_jump,
    "lqr-oracle": lqr_oracle,
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]()
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
