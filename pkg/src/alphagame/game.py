"""Time grid and game specification for distributed jump-diffusion games.

Player ``i`` controls its own state

    dX_i = b_i(t) a_i dt + sigma_i(t) dW + sum_j gamma_ij(t) dÑ_j,

with compensated Poisson sources ``Ñ_j`` of intensity ``lambda_j`` and unit
point-mass jumps. Costs couple the players only through ``f_i`` and ``g_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import Cost


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_P = T``."""

    horizon: float = 1.0
    steps: int = 50

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ValueError("horizon must be positive and finite")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def index(self, t: float) -> int:
        """Nearest node index for time ``t``."""
        return int(round(t / self.dt))


def _coef(value, t):
    return np.asarray(value(t) if callable(value) else value, dtype=float)


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Coefficients of an N-player distributed game.

    Parameters
    ----------
    drift : (N, d, k) array or callable ``t -> (N, d, k)``
    diffusion : (N, d, n) array or callable ``t -> (N, d, n)``
    jump_loadings : (N, m, d) array or callable ``t -> (N, m, d)``
        Loading of source ``j`` on player ``i``'s state.
    jump_intensities : (m,) array of finite non-negative rates.
    initial_state : (N, d) array or callable ``rng -> (N, d)`` sampler.
    cost : a :class:`~alphagame.costs.Cost`.
    control_cap : declared bound ``U`` on control norms, used only in bounds.
    """

    drift: object
    diffusion: object
    jump_loadings: object
    jump_intensities: np.ndarray
    initial_state: object
    cost: Cost
    control_cap: float = 1.0
    n_players: int = field(init=False)
    state_dim: int = field(init=False)
    action_dim: int = field(init=False)
    noise_dim: int = field(init=False)
    n_jumps: int = field(init=False)

    def __post_init__(self):
        b = _coef(self.drift, 0.0)
        s = _coef(self.diffusion, 0.0)
        lam = np.array(self.jump_intensities, dtype=float).reshape(-1)
        g = _coef(self.jump_loadings, 0.0)
        if b.ndim != 3:
            raise ValueError("drift must be (N, d, k)")
        N, d, k = b.shape
        if s.ndim != 3 or s.shape[:2] != (N, d):
            raise ValueError(f"diffusion must be ({N}, {d}, n), got {s.shape}")
        m = lam.shape[0]
        if g.shape != (N, m, d):
            raise ValueError(f"jump loadings must be ({N}, {m}, {d}), got {g.shape}")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise ValueError("jump intensities must be finite and non-negative")
        if not callable(self.initial_state):
            x0 = np.array(self.initial_state, dtype=float)
            if x0.shape != (N, d):
                raise ValueError(f"initial state must be ({N}, {d})")
            x0.setflags(write=False)
            object.__setattr__(self, "initial_state", x0)
        cost = self.cost
        if (cost.n_players, cost.state_dim, cost.action_dim) != (N, d, k):
            raise ValueError("cost dimensions do not match the dynamics")
        if not (np.isfinite(self.control_cap) and self.control_cap > 0):
            raise ValueError("control cap U must be positive")
        lam.setflags(write=False)
        object.__setattr__(self, "jump_intensities", lam)
        for name, val in (("drift", self.drift), ("diffusion", self.diffusion),
                          ("jump_loadings", self.jump_loadings)):
            if not callable(val):
                arr = np.array(val, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        object.__setattr__(self, "control_cap", float(self.control_cap))
        object.__setattr__(self, "n_players", N)
        object.__setattr__(self, "state_dim", d)
        object.__setattr__(self, "action_dim", k)
        object.__setattr__(self, "noise_dim", s.shape[2])
        object.__setattr__(self, "n_jumps", m)

    def replace(self, **changes) -> "GameSpec":
        kw = dict(drift=self.drift, diffusion=self.diffusion, jump_loadings=self.jump_loadings,
                  jump_intensities=self.jump_intensities, initial_state=self.initial_state,
                  cost=self.cost, control_cap=self.control_cap)
        kw.update(changes)
        return GameSpec(**kw)

    # coefficient access
    def drift_at(self, t) -> np.ndarray:
        return _coef(self.drift, t)

    def diffusion_at(self, t) -> np.ndarray:
        return _coef(self.diffusion, t)

    def loadings_at(self, t) -> np.ndarray:
        return _coef(self.jump_loadings, t)

    def drift_matrix(self, t) -> np.ndarray:
        """Block-diagonal ``(N*d, N*k)`` matrix so that ``X += a @ B.T * dt``."""
        b = self.drift_at(t)
        N, d, k = b.shape
        B = np.zeros((N * d, N * k))
        for i in range(N):
            B[i * d:(i + 1) * d, i * k:(i + 1) * k] = b[i]
        return B

    @property
    def is_deterministic(self) -> bool:
        if callable(self.diffusion) or callable(self.jump_loadings) or callable(self.initial_state):
            return False
        return not np.any(self.diffusion) and not np.any(self.jump_loadings)

    def check_coefficients(self, grid: TimeGrid):
        """Reject coefficients whose sampled Riemann sums are not finite."""
        for t in grid.nodes:
            for name, arr in (("drift", self.drift_at(t)), ("diffusion", self.diffusion_at(t)),
                              ("jump loadings", self.loadings_at(t))):
                if not np.all(np.isfinite(arr)):
                    raise ValueError(f"{name} is not finite at t={t}")
        sq = sum(np.sum(self.drift_at(t) ** 2) + np.sum(self.diffusion_at(t) ** 2) for t in grid.nodes[:-1])
        if not np.isfinite(sq * grid.dt):
            raise ValueError("coefficients are not square integrable on the grid")

    def drift_norms(self, grid: TimeGrid) -> np.ndarray:
        """``B_i = ||b_i||_{L^2}`` by the trapezoid rule with spectral norms."""
        vals = np.array([[np.linalg.norm(bi, 2) ** 2 for bi in self.drift_at(t)] for t in grid.nodes])
        return np.sqrt(np.trapezoid(vals, dx=grid.dt, axis=0))
