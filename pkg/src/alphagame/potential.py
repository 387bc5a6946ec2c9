"""Alpha-potential integrands, the empirical potential and its symmetric variant.

The potential of a control profile ``u`` is evaluated on the Euler grid as

    Phi(u) = E[ sum_l F(t_l, X_l, Y_l, a_l) dt + G(X_P, Y_P) ],

with ``X`` the state and ``Y`` the sensitivity process driven by ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .costs import Cost
from .sde import PathBatch


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Legendre rule on ``[0, 1]``."""

    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss_legendre(cls, n: int = 16) -> "QuadratureRule":
        if n < 1:
            raise ValueError("need at least one node")
        x, w = np.polynomial.legendre.leggauss(n)
        return cls(0.5 * (x + 1.0), 0.5 * w)

    @property
    def size(self) -> int:
        return len(self.nodes)


DEFAULT_RULE = QuadratureRule.gauss_legendre(16)


@dataclass(frozen=True)
class PotentialValue:
    value: float
    running: float
    terminal: float
    stderr: float

    def as_dict(self) -> dict:
        return {"value": self.value, "running": self.running, "terminal": self.terminal, "stderr": self.stderr}


class SymmetryError(ValueError):
    def __init__(self, pair):
        super().__init__(f"cost cross derivatives are not symmetric for players {pair}")
        self.pair = pair


def _cost(game_or_cost) -> Cost:
    return game_or_cost if isinstance(game_or_cost, Cost) else game_or_cost.cost


def F_integrand(game, t, x, y, a, rule: QuadratureRule = DEFAULT_RULE):
    """Running integrand ``F(t, x, y, a)``; vectorised over leading axes."""
    return _cost(game).potential_running(t, np.asarray(x, float), np.asarray(y, float),
                                         np.asarray(a, float), rule)


def G_terminal(game, x, y, rule: QuadratureRule = DEFAULT_RULE):
    return _cost(game).potential_terminal(np.asarray(x, float), np.asarray(y, float), rule)


# -- tape operations ----------------------------------------------------------

def F_op(cost: Cost, t, x, y, a, rule):
    if not any(isinstance(v, ad.Tensor) for v in (x, y, a)):
        return cost.potential_running(t, x, y, a, rule)
    cache = {}

    def forward(xv, yv, av):
        # gradients are needed anyway on a tape; compute them in the same sweep
        value, *cache["grads"] = cost.potential_running_and_grad(t, xv, yv, av, rule)
        return value

    def vjp(g, out, xv, yv, av, needs):
        g = np.asarray(g)[..., None]
        return tuple(g * d for d in cache["grads"])

    return ad.apply("F", forward, vjp, x, y, a)


def G_op(cost: Cost, x, y, rule):
    def forward(xv, yv):
        return cost.potential_terminal(xv, yv, rule)

    def vjp(g, out, xv, yv, needs):
        return cost.potential_terminal_vjp(xv, yv, rule, g)

    return ad.apply("G", forward, vjp, x, y)


def running_cost_op(cost: Cost, t, x, a, i: int):
    """``f_i(t, x, a)`` per trajectory, with full gradient for backpropagation."""
    def forward(xv, av):
        return cost.running(t, xv, av)[..., i]

    def vjp(g, out, xv, av, needs):
        dx, da = cost.running_full_grad(t, xv, av, i)
        g = np.asarray(g)[..., None]
        return g * dx, g * da

    return ad.apply(f"f{i}", forward, vjp, x, a)


def terminal_cost_op(cost: Cost, x, i: int):
    def forward(xv):
        return cost.terminal(xv)[..., i]

    def vjp(g, out, xv, needs):
        return (np.asarray(g)[..., None] * cost.terminal_full_grad(xv, i),)

    return ad.apply(f"g{i}", forward, vjp, x)


def path_potential(game, X, Y, acts, dt, rule: QuadratureRule = DEFAULT_RULE):
    """Per-trajectory ``(running, terminal)`` parts from per-node lists (arrays or tensors)."""
    cost = _cost(game)
    running = None
    for ll, a in enumerate(acts):
        term = F_op(cost, ll * dt, X[ll], Y[ll], a, rule) * dt
        running = term if running is None else running + term
    terminal = G_op(cost, X[-1], Y[-1], rule)
    if running is None:
        running = np.zeros(np.shape(ad.value_of(terminal)))
    return running, terminal


def _summarise(running, terminal) -> PotentialValue:
    running = np.asarray(running, dtype=float)
    terminal = np.asarray(terminal, dtype=float)
    total = running + terminal
    M = total.shape[0]
    stderr = float(np.std(total, ddof=1) / np.sqrt(M)) if M > 1 else 0.0
    r, g = float(np.mean(running)), float(np.mean(terminal))
    return PotentialValue(r + g, r, g, stderr)


def _node_lists(paths: PathBatch):
    P = paths.grid.steps
    return ([paths.X[:, ll] for ll in range(P + 1)], [paths.Y[:, ll] for ll in range(P + 1)],
            [paths.actions[:, ll] for ll in range(P)])


def empirical_potential(paths: PathBatch, game, rule: QuadratureRule = DEFAULT_RULE) -> PotentialValue:
    """Monte-Carlo potential over the batch, using the stored per-step actions."""
    X, Y, A = _node_lists(paths)
    running, terminal = path_potential(game, X, Y, A, paths.grid.dt, rule)
    return _summarise(running, terminal)


def check_symmetric(game, paths: PathBatch | None = None, samples: int = 4):
    cost = _cost(game)
    if paths is None:
        pair = cost.symmetry_violation(0.0, np.zeros(cost.n_players * cost.state_dim),
                                       np.zeros(cost.n_players * cost.action_dim))
    else:
        steps = np.unique(np.linspace(0, paths.grid.steps - 1, samples).astype(int))
        pair = None
        for ll in steps:
            pair = cost.symmetry_violation(ll * paths.grid.dt, paths.X[0, ll], paths.actions[0, ll])
            if pair is not None:
                break
    if pair is not None:
        raise SymmetryError(pair)


def symmetric_potential(paths: PathBatch, game, rule: QuadratureRule = DEFAULT_RULE) -> PotentialValue:
    """Potential ``E[sum_l Fbar(t_l, X_l, a_l) dt + Gbar(X_P)]`` of a symmetric game."""
    check_symmetric(game, paths)
    cost = _cost(game)
    dt = paths.grid.dt
    running = np.zeros(paths.M)
    for ll in range(paths.grid.steps):
        running = running + cost.symmetric_running(ll * dt, paths.X[:, ll], paths.actions[:, ll], rule) * dt
    terminal = cost.symmetric_terminal(paths.X[:, -1], rule)
    return _summarise(running, terminal)


def player_costs(game, paths: PathBatch) -> np.ndarray:
    """Per-trajectory objectives ``[M, N]``: left-endpoint sum of ``f_i dt`` plus ``g_i(X_T)``."""
    cost = _cost(game)
    dt = paths.grid.dt
    total = np.zeros((paths.M, cost.n_players))
    for ll in range(paths.grid.steps):
        total = total + cost.running(ll * dt, paths.X[:, ll], paths.actions[:, ll]) * dt
    return total + cost.terminal(paths.X[:, -1])
