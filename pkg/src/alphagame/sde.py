"""Euler scheme for the joint state / sensitivity system with common random numbers.

Per step ``l`` (coefficients frozen at the left node ``t_l``)::

    X_{l+1} = X_l + b(t_l) a_l dt + sigma(t_l) dW_l + sum_j gamma_j(t_l) (dN_{j,l} - lambda_j dt)
    Y_{l+1} = Y_l + b(t_l) a_l dt

Noise is drawn from one counter-based Philox stream per trajectory, so any
subset of trajectories can be regenerated on its own and the result never
depends on how work is split across threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from . import autodiff as ad
from .game import GameSpec, TimeGrid

_NORMAL, _POISSON, _INITIAL = 0, 1, 2


class SimulationError(RuntimeError):
    """Raised when a policy produces non-finite actions."""


def _stream(seed: int, stream: int, traj: int, kind: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=(int(stream), int(traj), kind))
    return np.random.Generator(np.random.Philox(ss))


def _open_uniform(u):
    # map Generator.random output (multiples of 2^-53 in [0,1)) to the open interval
    return (np.floor(u * 2.0**53) + 0.5) / 2.0**53


@dataclass(frozen=True, eq=False)
class NoiseBundle:
    """Brownian increments ``dW [M, P, n]``, jump counts ``dN [M, P, m]`` and initial states ``x0 [M, N*d]``."""

    seed: int
    stream: int
    grid: TimeGrid
    dW: np.ndarray
    dN: np.ndarray
    x0: np.ndarray
    trajectories: np.ndarray

    @property
    def M(self) -> int:
        return self.dW.shape[0]

    def same_as(self, other: "NoiseBundle") -> bool:
        return (self.grid == other.grid and np.array_equal(self.dW, other.dW)
                and np.array_equal(self.dN, other.dN) and np.array_equal(self.x0, other.x0))

    def subset(self, idx) -> "NoiseBundle":
        idx = np.asarray(idx)
        return NoiseBundle(self.seed, self.stream, self.grid, self.dW[idx], self.dN[idx], self.x0[idx],
                           self.trajectories[idx])

    def increments(self, game: GameSpec) -> np.ndarray:
        """Noise part of each state increment, ``[M, P, N*d]``.

        Sums run over sources in a fixed order, elementwise, so players with
        identical loadings receive bit-identical displacements.
        """
        N, d = game.n_players, game.state_dim
        grid = self.grid
        lam = game.jump_intensities
        comp = self.dN - lam * grid.dt
        times = grid.nodes[:-1]
        if callable(game.diffusion):
            sig = np.stack([game.diffusion_at(t) for t in times])
        else:
            sig = np.broadcast_to(game.diffusion_at(0.0), (grid.steps,) + game.diffusion_at(0.0).shape)
        if callable(game.jump_loadings):
            gam = np.stack([game.loadings_at(t) for t in times])
        else:
            gam = np.broadcast_to(game.loadings_at(0.0), (grid.steps,) + game.loadings_at(0.0).shape)
        out = np.zeros((self.M, grid.steps, N * d))
        for i in range(N):
            for c in range(d):
                acc = np.zeros((self.M, grid.steps))
                for r in range(game.noise_dim):
                    coef = sig[:, i, c, r]
                    if np.any(coef):
                        acc = acc + coef * self.dW[:, :, r]
                for j in range(game.n_jumps):
                    coef = gam[:, i, j, c]
                    if np.any(coef):
                        acc = acc + coef * comp[:, :, j]
                out[:, :, i * d + c] = acc
        return out


def sample_noise(game: GameSpec, grid: TimeGrid, M: int, seed: int, stream: int = 0,
                 trajectories=None) -> NoiseBundle:
    """Draw (or regenerate) the noise of trajectories ``0..M-1`` (or the given indices).

    Each trajectory ``m`` owns independent Philox streams keyed on
    ``(seed, stream, m, kind)``; within a stream, step ``l`` and source ``j``
    occupy a fixed position, so draws are addressed by ``(m, l, j)``.
    """
    if trajectories is None:
        if int(M) < 1:
            raise ValueError("M must be at least 1")
        trajectories = np.arange(int(M))
    trajectories = np.asarray(trajectories, dtype=np.int64)
    if trajectories.size < 1:
        raise ValueError("M must be at least 1")
    P, n, m = grid.steps, game.noise_dim, game.n_jumps
    N, d = game.n_players, game.state_dim
    Mt = trajectories.size
    u_w = np.empty((Mt, P, n))
    u_n = np.empty((Mt, P, m))
    x0 = np.empty((Mt, N * d))
    for row, traj in enumerate(trajectories):
        if n:
            u_w[row] = _stream(seed, stream, traj, _NORMAL).random((P, n))
        if m:
            u_n[row] = _stream(seed, stream, traj, _POISSON).random((P, m))
        if callable(game.initial_state):
            x0[row] = np.asarray(game.initial_state(_stream(seed, stream, traj, _INITIAL)), dtype=float).ravel()
        else:
            x0[row] = game.initial_state.ravel()
    dW = special.ndtri(_open_uniform(u_w)) * np.sqrt(grid.dt)
    mu = game.jump_intensities * grid.dt
    dN = np.zeros((Mt, P, m))
    for j in range(m):
        if mu[j] > 0:
            dN[:, :, j] = stats.poisson.ppf(_open_uniform(u_n[:, :, j]), mu[j])
    for arr in (dW, dN, x0):
        arr.setflags(write=False)
    return NoiseBundle(int(seed), int(stream), grid, dW, dN, x0, trajectories)


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Simulated trajectories: ``X, Y [M, P+1, N*d]``, ``actions [M, P, N*k]``."""

    X: np.ndarray
    Y: np.ndarray
    actions: np.ndarray
    grid: TimeGrid
    noise: NoiseBundle | None = None

    @property
    def M(self) -> int:
        return self.X.shape[0]

    def to_csv(self, path, n_players: int | None = None):
        """One row per (trajectory, node); the last node carries empty action cells."""
        M, P1, nx = self.X.shape
        na = self.actions.shape[-1]
        head = (["trajectory", "step", "t"] + [f"X{c}" for c in range(nx)] + [f"Y{c}" for c in range(nx)]
                + [f"a{c}" for c in range(na)])
        t = self.grid.nodes
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for mm in range(M):
                for ll in range(P1):
                    acts = [repr(float(v)) for v in self.actions[mm, ll]] if ll < P1 - 1 else [""] * na
                    w.writerow([mm, ll, repr(float(t[ll]))] + [repr(float(v)) for v in self.X[mm, ll]]
                               + [repr(float(v)) for v in self.Y[mm, ll]] + acts)

    def save(self, path):
        np.savez(path, X=self.X, Y=self.Y, actions=self.actions,
                 grid=np.array([self.grid.horizon, self.grid.steps], dtype=float))

    @classmethod
    def load(cls, path) -> "PathBatch":
        with np.load(path) as z:
            T, P = z["grid"]
            return cls(z["X"].copy(), z["Y"].copy(), z["actions"].copy(), TimeGrid(float(T), int(P)))


def rollout(game: GameSpec, policy, noise: NoiseBundle, open_loop=None, detach_states: bool = False):
    """Run the recursion and return per-node lists ``(X, Y, actions)``.

    Works on plain arrays and on tape tensors alike: if ``policy`` returns
    tensors the whole recursion is recorded. ``open_loop`` (an ``[M, P, N*k]``
    array or a list of per-step action arrays/tensors) replaces the policy.
    With ``detach_states`` the policy sees state values cut off from the tape.
    """
    grid = noise.grid
    dt = grid.dt
    inc = noise.increments(game)
    X = [noise.x0]
    Y = [np.zeros_like(noise.x0)]
    acts = []
    const_B = None if callable(game.drift) else game.drift_matrix(0.0).T * dt
    for ll, t in enumerate(grid.nodes[:-1]):
        if open_loop is not None:
            a = open_loop[ll] if isinstance(open_loop, list) else open_loop[:, ll, :]
        elif detach_states:
            a = policy(t, ad.value_of(X[-1]), ad.value_of(Y[-1]))
        else:
            a = policy(t, X[-1], Y[-1])
        av = ad.value_of(a)
        if not np.all(np.isfinite(av)):
            bad = np.argwhere(~np.isfinite(av))[0]
            raise SimulationError(f"non-finite action at step {ll}, trajectory {int(bad[0])}")
        Bdt = const_B if const_B is not None else game.drift_matrix(t).T * dt
        move = a @ Bdt
        X.append(X[-1] + move + inc[:, ll, :])
        Y.append(Y[-1] + move)
        acts.append(a)
    return X, Y, acts


def _stack(game, noise, X, Y, acts):
    N, k = game.n_players, game.action_dim
    A = np.stack([np.broadcast_to(ad.value_of(a), (noise.M, N * k)) for a in acts], axis=1) if acts else \
        np.zeros((noise.M, 0, N * k))
    return PathBatch(np.stack([ad.value_of(x) for x in X], axis=1),
                     np.stack([ad.value_of(y) for y in Y], axis=1), A, noise.grid, noise)


def simulate(game: GameSpec, policy, noise: NoiseBundle) -> PathBatch:
    """Simulate under a feedback ``policy(t, X, Y) -> actions`` (batched over trajectories)."""
    game.check_coefficients(noise.grid)
    X, Y, acts = rollout(game, policy, noise)
    return _stack(game, noise, X, Y, acts)


def simulate_open_loop(game: GameSpec, controls, noise: NoiseBundle) -> PathBatch:
    """Simulate with externally supplied actions ``controls [M, P, N*k]``."""
    controls = np.asarray(controls, dtype=float)
    expected = (noise.M, noise.grid.steps, game.n_players * game.action_dim)
    if controls.shape != expected:
        raise ValueError(f"controls must have shape {expected}, got {controls.shape}")
    if not np.all(np.isfinite(controls)):
        raise ValueError("controls must be finite")
    X, Y, acts = rollout(game, None, noise, open_loop=controls)
    return _stack(game, noise, X, Y, acts)


def zero_policy(game: GameSpec):
    nk = game.n_players * game.action_dim
    return lambda t, x, y: np.zeros(np.shape(x)[:-1] + (nk,))
