"""Approximate Nash equilibria of distributed jump-diffusion games via their alpha-potential.

The package simulates N-player games in which each player steers only its
own state, evaluates the potential functional along simulated paths, and
minimises it over residual-network feedback policies with a small
reverse-mode autodiff engine and Adam. It also bounds the potential's
defect ``alpha`` from cost derivatives and from interaction-graph decay.
"""

from .bounds import (AlphaReport, DerivativeBounds, Exponential, GraphSpec, Power, ZetaBound, alpha_bound_general,
                     crowd_alpha, game_alpha, rebalance_tree, zeta_asymptotic_bound, zeta_exact)
from .costs import CallbackCost, Cost, CrowdCost
from .game import GameSpec, TimeGrid
from .kernels import Gaussian, Kernel, KernelDomainError, Quadratic, SmoothedIndicator, kernel_eval
from .nn import AdamState, PolicyNetwork, PolicyParams, adam_step, load_checkpoint, policy_forward, save_checkpoint
from .potential import (PotentialValue, QuadratureRule, SymmetryError, empirical_potential, player_costs,
                        symmetric_potential)
from .presets import PRESETS, Preset, get_preset
from .sde import NoiseBundle, PathBatch, SimulationError, sample_noise, simulate, simulate_open_loop, zero_policy
from .train import TrainConfig, TrainingError, TrainLog, evaluate_potential, plateau_schedule, train
from .verify import (analytic_linear_derivative, exploitability, fd_linear_derivative, potential_inequality_audit,
                     riccati_tracking, second_derivative_check)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "AlphaReport", "CallbackCost", "Cost", "CrowdCost", "DerivativeBounds", "Exponential",
    "GameSpec", "Gaussian", "GraphSpec", "Kernel", "KernelDomainError", "NoiseBundle", "PRESETS", "PathBatch",
    "PolicyNetwork", "PolicyParams", "PotentialValue", "Power", "Preset", "QuadratureRule", "Quadratic",
    "SimulationError", "SmoothedIndicator", "SymmetryError", "TimeGrid", "TrainConfig", "TrainLog",
    "TrainingError", "ZetaBound", "adam_step", "alpha_bound_general", "analytic_linear_derivative",
    "crowd_alpha", "empirical_potential", "evaluate_potential", "exploitability", "fd_linear_derivative",
    "game_alpha", "get_preset", "kernel_eval", "load_checkpoint", "plateau_schedule", "player_costs",
    "policy_forward", "potential_inequality_audit", "rebalance_tree", "riccati_tracking", "sample_noise",
    "save_checkpoint", "second_derivative_check", "simulate", "simulate_open_loop", "symmetric_potential",
    "train", "zero_policy", "zeta_asymptotic_bound", "zeta_exact",
]
