"""Numerical checks of linear derivatives, the potential inequality and equilibrium quality.

All comparisons use common random numbers: every quantity is evaluated on the
same :class:`~alphagame.sde.NoiseBundle`, and objectives are the grid-level
(left-endpoint) ones used everywhere else in the package.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .bounds import game_alpha
from .game import GameSpec, TimeGrid
from .nn import PolicyNetwork, PolicyParams
from .potential import (DEFAULT_RULE, QuadratureRule, path_potential, player_costs, running_cost_op,
                        symmetric_potential, terminal_cost_op, check_symmetric)
from .sde import NoiseBundle, PathBatch, rollout, sample_noise, simulate, simulate_open_loop
from .train import TrainConfig, optimize


def objectives(game: GameSpec, controls, noise: NoiseBundle) -> np.ndarray:
    """Monte-Carlo objectives ``J_i`` of an open-loop profile, shape ``(N,)``."""
    return player_costs(game, simulate_open_loop(game, controls, noise)).mean(axis=0)


def _player_slice(game, i):
    k = game.action_dim
    return slice(i * k, (i + 1) * k)


def _with_player(game, controls, i, values):
    out = np.array(controls, dtype=float, copy=True)
    out[:, :, _player_slice(game, i)] = values
    return out


def _sensitivity(game: GameSpec, i: int, direction, grid: TimeGrid) -> np.ndarray:
    """``Y'_{l+1} = Y'_l + b_i(t_l) u'_l dt`` with ``Y'_0 = 0``; shape ``[M, P+1, d]``."""
    direction = np.asarray(direction, dtype=float)
    M = direction.shape[0]
    Yp = np.zeros((M, grid.steps + 1, game.state_dim))
    for ll, t in enumerate(grid.nodes[:-1]):
        Yp[:, ll + 1] = Yp[:, ll] + direction[:, ll] @ game.drift_at(t)[i].T * grid.dt
    return Yp


def analytic_linear_derivative(game: GameSpec, controls, i: int, direction, noise: NoiseBundle) -> float:
    """Directional derivative of ``J_i`` in player ``i``'s control along ``direction [M, P, k]``."""
    grid = noise.grid
    paths = simulate_open_loop(game, controls, noise)
    Yp = _sensitivity(game, i, direction, grid)
    d = game.state_dim
    xs = slice(i * d, (i + 1) * d)
    cost = game.cost
    total = np.zeros(paths.M)
    for ll, t in enumerate(grid.nodes[:-1]):
        dx, da = cost.running_full_grad(t, paths.X[:, ll], paths.actions[:, ll], i)
        total = total + (np.sum(Yp[:, ll] * dx[:, xs], axis=-1)
                         + np.sum(direction[:, ll] * da[:, _player_slice(game, i)], axis=-1)) * grid.dt
    gT = cost.terminal_full_grad(paths.X[:, -1], i)
    total = total + np.sum(Yp[:, -1] * gT[:, xs], axis=-1)
    return float(np.mean(total))


def fd_linear_derivative(game: GameSpec, controls, i: int, direction, noise: NoiseBundle, eps: float = 1e-4) -> float:
    base = np.asarray(controls, dtype=float)
    sl = _player_slice(game, i)
    plus = _with_player(game, base, i, base[:, :, sl] + eps * direction)
    minus = _with_player(game, base, i, base[:, :, sl] - eps * direction)
    return float((objectives(game, plus, noise)[i] - objectives(game, minus, noise)[i]) / (2 * eps))


def second_derivative_check(game: GameSpec, controls, i: int, j: int, dir_i, dir_j, noise: NoiseBundle,
                            eps: float = 1e-3) -> tuple[float, float]:
    """Mixed second derivative of ``J_i`` along player ``i``'s and player ``j``'s directions.

    Returns ``(analytic, finite difference)``.
    """
    if i == j:
        raise ValueError("second_derivative_check needs i != j")
    grid = noise.grid
    paths = simulate_open_loop(game, controls, noise)
    N, d, k = game.n_players, game.state_dim, game.action_dim
    Yi = _sensitivity(game, i, dir_i, grid)
    Yj = _sensitivity(game, j, dir_j, grid)
    cost = game.cost
    rows = np.r_[i * d:(i + 1) * d, N * d + i * k:N * d + (i + 1) * k]
    cols = np.r_[j * d:(j + 1) * d, N * d + j * k:N * d + (j + 1) * k]
    total = np.zeros(paths.M)
    for ll, t in enumerate(grid.nodes[:-1]):
        H = cost.running_hessian(t, paths.X[:, ll], paths.actions[:, ll])[:, i][:, rows][:, :, cols]
        vi = np.concatenate([Yi[:, ll], dir_i[:, ll]], axis=-1)
        vj = np.concatenate([Yj[:, ll], dir_j[:, ll]], axis=-1)
        total = total + np.einsum("mr,mrc,mc->m", vi, H, vj) * grid.dt
    Hg = cost.terminal_hessian(paths.X[:, -1])[:, i][:, i * d:(i + 1) * d, j * d:(j + 1) * d]
    total = total + np.einsum("mr,mrc,mc->m", Yi[:, -1], Hg, Yj[:, -1])
    analytic = float(np.mean(total))

    base = np.asarray(controls, dtype=float)
    si, sj = _player_slice(game, i), _player_slice(game, j)

    def J(ei, ej):
        u = base.copy()
        u[:, :, si] += ei * dir_i
        u[:, :, sj] += ej * dir_j
        return objectives(game, u, noise)[i]

    fd = (J(eps, eps) - J(eps, -eps) - J(-eps, eps) + J(-eps, -eps)) / (4 * eps * eps)
    return analytic, float(fd)


# -- potential inequality ------------------------------------------------------

def control_norm(controls, dt: float) -> float:
    """``sqrt(E sum_l |u_l|^2 dt)`` for one player's controls ``[M, P, k]``."""
    c = np.asarray(controls, dtype=float)
    return float(np.sqrt(np.mean(np.sum(c * c, axis=(1, 2)) * dt)))


def random_deviation(rng, M: int, P: int, k: int, dt: float, cap: float, pieces=None) -> np.ndarray:
    """Piecewise-constant control with i.i.d. N(0,1) levels, rescaled to norm ``cap * s``, ``s ~ U(0,1]``."""
    n = int(pieces if pieces is not None else rng.choice([1, 2, 5, 10, P]))
    n = min(max(n, 1), P)
    levels = rng.standard_normal((M, n, k))
    owner = np.minimum((np.arange(P) * n) // P, n - 1)
    dev = levels[:, owner, :]
    norm = control_norm(dev, dt)
    scale = cap * (1.0 - rng.random()) / norm if norm > 0 else 0.0
    return dev * scale


@dataclass(frozen=True)
class AuditReport:
    bound: float
    max_gap: float
    stderr: float
    samples: int
    passed: bool
    violations: int = 0
    base_exceeds_cap: bool = False
    potential: str = "general"
    gaps: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("gaps")
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def _potential_per_path(game, paths: PathBatch, rule, kind):
    if kind == "symmetric":
        cost = game.cost
        dt = paths.grid.dt
        running = np.zeros(paths.M)
        for ll in range(paths.grid.steps):
            running = running + cost.symmetric_running(ll * dt, paths.X[:, ll], paths.actions[:, ll], rule) * dt
        return running + cost.symmetric_terminal(paths.X[:, -1], rule)
    P = paths.grid.steps
    running, terminal = path_potential(game, [paths.X[:, ll] for ll in range(P + 1)],
                                       [paths.Y[:, ll] for ll in range(P + 1)],
                                       [paths.actions[:, ll] for ll in range(P)], paths.grid.dt, rule)
    return np.asarray(running) + np.asarray(terminal)


def potential_inequality_audit(game: GameSpec, base, deviations: int, noise: NoiseBundle,
                               rule: QuadratureRule = DEFAULT_RULE, bound: float | None = None,
                               potential: str = "general", seed: int = 0, pieces=None,
                               zero_deviation: bool = False) -> AuditReport:
    """Compare unilateral objective changes with potential changes.

    ``base`` is an open-loop profile ``[M, P, N*k]`` or a feedback policy (its
    own rollout is then frozen). For each sample a random player switches to a
    random bounded control; the gap ``|Delta J_i - Delta Phi|`` is compared to
    ``bound`` (the crowd alpha bound by default). ``potential="symmetric"``
    uses the symmetric-game potential instead.
    """
    if deviations < 1:
        raise ValueError("need at least one deviation")
    if potential == "symmetric":
        check_symmetric(game)
    grid = noise.grid
    if callable(base):
        base = simulate(game, base, noise).actions
    base = np.asarray(base, dtype=float)
    if bound is None:
        bound = game_alpha(game, grid).bound
    U = game.control_cap
    base_paths = simulate_open_loop(game, base, noise)
    J0 = player_costs(game, base_paths)
    P0 = _potential_per_path(game, base_paths, rule, potential)
    exceeds = any(control_norm(base[:, :, _player_slice(game, i)], grid.dt) > U * (1 + 1e-12)
                  for i in range(game.n_players))
    rng = np.random.default_rng(seed)
    gaps, errs = [], []
    violations = 0
    for _ in range(deviations):
        i = int(rng.integers(game.n_players))
        if zero_deviation:
            dev = base[:, :, _player_slice(game, i)]
        else:
            dev = random_deviation(rng, noise.M, grid.steps, game.action_dim, grid.dt, U, pieces)
        paths = simulate_open_loop(game, _with_player(game, base, i, dev), noise)
        diff = (player_costs(game, paths)[:, i] - J0[:, i]) - (_potential_per_path(game, paths, rule, potential) - P0)
        gap = abs(float(np.mean(diff)))
        se = float(np.std(diff, ddof=1) / np.sqrt(len(diff))) if len(diff) > 1 else 0.0
        gaps.append(gap)
        errs.append(se)
        if gap > bound + 3.0 * se:
            violations += 1
    k = int(np.argmax(gaps))
    return AuditReport(float(bound), float(gaps[k]), float(errs[k]), int(deviations), violations == 0,
                       violations, bool(exceeds), potential, gaps)


# -- exploitability ----------------------------------------------------------------

@dataclass(frozen=True)
class ExploitabilityReport:
    epsilon: list
    max_epsilon: float
    joint_costs: list
    best_response_costs: list
    budget: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _selector(game, i):
    k, Nk = game.action_dim, game.n_players * game.action_dim
    E = np.zeros((k, Nk))
    E[:, i * k:(i + 1) * k] = np.eye(k)
    return E


def _deviation_rollout(game, joint_policy, corr_net, layers, i, noise):
    """Others replay their joint-rollout actions; player ``i`` adds a feedback correction."""
    joint = simulate(game, joint_policy, noise).actions
    E = _selector(game, i)

    def policy(t, x, y):
        ll = noise.grid.index(t)
        return joint[:, ll, :] + corr_net.forward(layers, t, x, y) @ E

    return rollout(game, policy, noise)


def _player_objective(game, X, acts, i, dt):
    cost = game.cost
    running = None
    for ll, a in enumerate(acts):
        term = running_cost_op(cost, ll * dt, X[ll], a, i) * dt
        running = term if running is None else running + term
    return running, terminal_cost_op(cost, X[-1], i)


def exploitability(game: GameSpec, params: PolicyParams, budget: int = 300, noise: NoiseBundle | None = None,
                   config: TrainConfig | None = None, players=None) -> ExploitabilityReport:
    """Per-player gain from a trained unilateral best response against the frozen joint profile.

    The best response starts exactly at the joint control (a residual network
    with zero output layer), is trained on fresh noise for ``budget``
    iterations and is scored on ``noise``. ``epsilon_i`` is a lower estimate of
    player ``i``'s true exploitability.
    """
    config = config or TrainConfig()
    config = replace(config, iterations=int(budget))
    grid = config.grid
    if noise is None:
        noise = sample_noise(game, grid, config.eval_batch, config.seed, stream=2**31)
    joint_policy = params.policy()
    J_joint = player_costs(game, simulate(game, joint_policy, noise)).mean(axis=0)
    players = range(game.n_players) if players is None else players
    eps, br = [0.0] * game.n_players, list(map(float, J_joint))
    for i in players:
        net = PolicyNetwork(game.n_players, game.state_dim, game.action_dim, grid.horizon, config.blocks,
                            config.extra_width, output_size=game.action_dim)
        start = net.init(config.seed + 1 + i)

        def build_loss(layers, nz, i=i, net=net):
            X, Y, A = _deviation_rollout(game, joint_policy, net, layers, i, nz)
            return _player_objective(game, X, A, i, grid.dt)

        def noise_for(n, i=i):
            if config.resample == "fixed":
                return sample_noise(game, grid, config.batch, config.seed, stream=2**30 + 7919 * i)
            return sample_noise(game, grid, config.batch, config.seed, stream=2**30 + 7919 * i + n + 1)

        trained, _ = optimize(start, config, build_loss, noise_for)
        X, _, A = _deviation_rollout(game, joint_policy, net, trained.arrays, i, noise)
        running, terminal = _player_objective(game, X, A, i, grid.dt)
        br[i] = float(np.mean(np.asarray(running) + np.asarray(terminal)))
        eps[i] = float(J_joint[i] - br[i])
    return ExploitabilityReport(eps, float(max(eps)), list(map(float, J_joint)), br, int(budget))


# -- reference solution ------------------------------------------------------------

@dataclass(frozen=True)
class LQRSolution:
    cost: float
    gains: np.ndarray
    riccati: np.ndarray
    controls: np.ndarray
    states: np.ndarray


def riccati_tracking(b, control_weight: float, terminal_weight: float, x0, target, grid: TimeGrid) -> LQRSolution:
    """Discrete-time optimum of ``sum_l (c_l/2)|a_l|^2 dt + c|x_P - z|^2`` for ``x_{l+1} = x_l + b a_l dt``.

    Backward recursion on the tracking error ``e = x - z``:
    ``K_l = (R + dt b^T S b)^{-1} b^T S``,
    ``S_l = dt K^T R K + (I - dt b K)^T S (I - dt b K)`` with ``R = c_l/2 I``.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    d, k = b.shape
    dt = grid.dt
    R = 0.5 * control_weight * np.eye(k)
    S = terminal_weight * np.eye(d)
    Ss, Ks = [S], []
    for _ in range(grid.steps):
        K = np.linalg.solve(R + dt * b.T @ S @ b, b.T @ S)
        A = np.eye(d) - dt * b @ K
        S = dt * K.T @ R @ K + A.T @ S @ A
        Ss.append(S)
        Ks.append(K)
    Ss, Ks = Ss[::-1], Ks[::-1]
    e = np.asarray(x0, dtype=float) - np.asarray(target, dtype=float)
    e0 = e.copy()
    xs, us = [np.asarray(x0, dtype=float)], []
    for ll in range(grid.steps):
        u = -Ks[ll] @ e
        e = e + dt * b @ u
        us.append(u)
        xs.append(e + target)
    return LQRSolution(float(e0 @ Ss[0] @ e0), np.array(Ks), np.array(Ss), np.array(us), np.array(xs))
