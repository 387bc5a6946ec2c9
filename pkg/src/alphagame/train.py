"""Policy-gradient training of the potential: simulate, evaluate, backpropagate, Adam step."""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from . import autodiff as ad
from .game import GameSpec, TimeGrid
from .nn import AdamState, PolicyNetwork, PolicyParams, adam_step, save_checkpoint
from .potential import QuadratureRule, _summarise, path_potential
from .sde import NoiseBundle, rollout, sample_noise, simulate


class TrainingError(RuntimeError):
    """Raised when the loss becomes non-finite; carries the last finite parameters."""

    def __init__(self, message, params=None, log=None):
        super().__init__(message)
        self.params = params
        self.log = log


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 500
    batch: int = 500
    horizon: float = 1.0
    steps: int = 50
    lr: float = 1e-3
    patience: int = 10
    factor: float = 0.5
    threshold: float = 1e-4
    min_lr: float = 1e-5
    seed: int = 2025
    quadrature_nodes: int = 16
    resample: str = "fresh"  # or "fixed"
    clip_norm: float | None = None
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    blocks: int = 4
    extra_width: int = 10
    eval_batch: int = 500

    def __post_init__(self):
        if self.batch < 1 or self.steps < 1 or self.eval_batch < 1:
            raise ValueError("batch, steps and eval_batch must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 < self.factor < 1.0:
            raise ValueError("plateau factor must lie in (0, 1)")
        if self.resample not in ("fresh", "fixed"):
            raise ValueError("resample must be 'fresh' or 'fixed'")
        if self.quadrature_nodes < 1:
            raise ValueError("quadrature_nodes must be positive")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.horizon, self.steps)

    @property
    def rule(self) -> QuadratureRule:
        return QuadratureRule.gauss_legendre(self.quadrature_nodes)

    def network(self, game: GameSpec) -> PolicyNetwork:
        return PolicyNetwork(game.n_players, game.state_dim, game.action_dim, self.horizon,
                             self.blocks, self.extra_width)


# -- learning-rate schedule ---------------------------------------------------

@dataclass(frozen=True)
class PlateauState:
    lr: float
    best: float = math.inf
    num_bad: int = 0
    patience: int = 10
    factor: float = 0.5
    threshold: float = 1e-4
    min_lr: float = 1e-5


def plateau_schedule(loss: float, state: PlateauState) -> PlateauState:
    """Feed one loss value; the rate is cut by ``factor`` after ``patience`` non-improving values.

    A value counts as an improvement when it is below ``best - threshold*|best|``.
    """
    if not 0.0 < state.factor < 1.0:
        raise ValueError("factor must lie in (0, 1)")
    if math.isinf(state.best) or loss < state.best - state.threshold * abs(state.best):
        return replace(state, best=loss, num_bad=0)
    bad = state.num_bad + 1
    if bad >= state.patience:
        return replace(state, lr=max(state.lr * state.factor, state.min_lr), num_bad=0)
    return replace(state, num_bad=bad)


# -- log ----------------------------------------------------------------------

@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def append(self, **rec):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, k):
        return self.records[k]

    def column(self, key) -> np.ndarray:
        return np.array([r[key] for r in self.records])

    def comparable(self) -> list:
        """Records without wall-clock time (what reproducibility is judged on)."""
        return [{k: v for k, v in r.items() if k != "wall_time"} for r in self.records]

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "TrainLog":
        with open(path) as fh:
            return cls([json.loads(line) for line in fh if line.strip()])


# -- optimisation loop --------------------------------------------------------

def optimize(params: PolicyParams, config: TrainConfig, build_loss: Callable, noise_for: Callable,
             log_extra: Callable | None = None):
    """Generic Adam loop.

    ``build_loss(layers, noise)`` returns ``(per-trajectory running, terminal)``
    tensors built from parameter leaves ``layers``; the loss is their batch mean.
    ``noise_for(n)`` gives the noise of iteration ``n``.
    """
    log = TrainLog()
    theta = params.flat()
    net = params.network
    adam = AdamState.zeros(theta.size, lr=config.lr)
    sched = PlateauState(config.lr, patience=config.patience, factor=config.factor,
                         threshold=config.threshold, min_lr=config.min_lr)
    start = time.perf_counter()
    for n in range(config.iterations):
        current = PolicyParams.from_flat(net, theta)
        noise = noise_for(n)
        tape = ad.Tape()
        layers = current.on_tape(tape)
        running, terminal = build_loss(layers, noise)
        total = running + terminal
        if not isinstance(total, ad.Tensor):  # loss does not depend on the parameters
            grad = np.zeros_like(theta)
        else:
            loss = ad.mean(total)
            grad = np.concatenate([g.ravel() for g in ad.backward(tape, loss)]) if _any_leaf_used(tape) \
                else np.zeros_like(theta)
        pv = _summarise(ad.value_of(running) * np.ones(noise.M), ad.value_of(terminal) * np.ones(noise.M))
        gnorm = float(np.sqrt(np.sum(grad * grad)))
        if not (math.isfinite(pv.value) and math.isfinite(gnorm)):
            _abort_checkpoint(config, current, n)
            raise TrainingError(f"non-finite loss at iteration {n}", params=current, log=log)
        if config.checkpoint_every and config.checkpoint_dir and n % config.checkpoint_every == 0:
            save_checkpoint(os.path.join(config.checkpoint_dir, "checkpoint.bin"), current,
                            {"iteration": n, "phi": pv.value})
        rec = dict(iteration=n, phi=pv.value, running=pv.running, terminal=pv.terminal, stderr=pv.stderr,
                   grad_norm=gnorm, lr=adam.lr)
        if log_extra is not None:
            rec.update(log_extra(n, pv))
        rec["wall_time"] = time.perf_counter() - start
        log.append(**rec)
        sched = plateau_schedule(pv.value, sched)
        if config.clip_norm is not None and gnorm > config.clip_norm:
            grad = grad * (config.clip_norm / gnorm)
        theta, adam = adam_step(theta, grad, adam)
        adam = replace(adam, lr=sched.lr)
    final = PolicyParams.from_flat(net, theta)
    if not final.is_finite():
        raise TrainingError("parameters became non-finite", params=current, log=log)
    return final, log


def _any_leaf_used(tape) -> bool:
    used = set()
    for node in tape.nodes:
        used.update(node.parents)
    return any(k in used for k in tape.leaves)


def _abort_checkpoint(config, params, n):
    if config.checkpoint_dir:
        save_checkpoint(os.path.join(config.checkpoint_dir, "abort.bin"), params,
                        {"iteration": n, "aborted": True})


def noise_schedule(game: GameSpec, config: TrainConfig) -> Callable[[int], NoiseBundle]:
    grid = config.grid
    if config.resample == "fixed":
        fixed = sample_noise(game, grid, config.batch, config.seed, stream=0)
        return lambda n: fixed
    return lambda n: sample_noise(game, grid, config.batch, config.seed, stream=n)


def train(game: GameSpec, config: TrainConfig, params: PolicyParams | None = None,
          detach_states: bool = False):
    """Minimise the empirical potential over the policy parameters.

    Returns ``(params, log)``. With ``detach_states`` the policy inputs are cut
    from the tape (truncated backpropagation), which is only useful for tests.
    """
    game.check_coefficients(config.grid)
    net = config.network(game)
    if params is None:
        params = net.init(config.seed)
    rule = config.rule
    dt = config.grid.dt

    def build_loss(layers, noise):
        pol = lambda t, x, y: net.forward(layers, t, x, y)
        X, Y, A = rollout(game, pol, noise, detach_states=detach_states)
        return path_potential(game, X, Y, A, dt, rule)

    return optimize(params, config, build_loss, noise_schedule(game, config))


def potential_gradient(game: GameSpec, params: PolicyParams, noise: NoiseBundle,
                       rule: QuadratureRule | None = None, detach_states: bool = False):
    """``(Phi_M, flat gradient)`` on a fixed noise bundle."""
    rule = rule or QuadratureRule.gauss_legendre(16)
    net = params.network
    tape = ad.Tape()
    layers = params.on_tape(tape)
    X, Y, A = rollout(game, lambda t, x, y: net.forward(layers, t, x, y), noise, detach_states=detach_states)
    running, terminal = path_potential(game, X, Y, A, noise.grid.dt, rule)
    loss = ad.mean(running + terminal)
    grads = ad.backward(tape, loss)
    return float(loss.value), np.concatenate([g.ravel() for g in grads])


def evaluate_potential(game: GameSpec, params: PolicyParams, noise: NoiseBundle,
                       rule: QuadratureRule | None = None):
    from .potential import empirical_potential
    paths = simulate(game, params.policy(), noise)
    return empirical_potential(paths, game, rule or QuadratureRule.gauss_legendre(16))


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
