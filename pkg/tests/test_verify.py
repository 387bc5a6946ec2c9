import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alphagame.costs import CallbackCost
from alphagame.game import TimeGrid
from alphagame.kernels import Gaussian, Quadratic
from alphagame.sde import sample_noise, simulate_open_loop
from alphagame.train import TrainConfig
from alphagame.verify import (analytic_linear_derivative, control_norm, exploitability, fd_linear_derivative,
                              objectives, potential_inequality_audit, random_deviation, riccati_tracking,
                              second_derivative_check)
from conftest import crowd_game

GRID = TimeGrid(1.0, 20)


def controls_for(game, M, rng, scale=0.5):
    return scale * rng.standard_normal((M, GRID.steps, game.n_players * game.action_dim))


def test_zero_direction(noisy_game, rng):
    noise = sample_noise(noisy_game, GRID, 20, seed=1)
    u = controls_for(noisy_game, 20, rng)
    assert analytic_linear_derivative(noisy_game, u, 1, np.zeros((20, GRID.steps, 2)), noise) == 0.0


def test_closed_form_single_player():
    b = np.array([[1.0, 2.0], [0.5, -1.0]])
    c, T = 3.0, 1.0
    game = crowd_game(N=1, control=0.0, terminal=c, x0=np.array([[0.2, -0.1]]),
                      targets=np.array([[0.5, 0.5]])).replace(drift=b[None])
    noise = sample_noise(game, GRID, 1, seed=0)
    u, up = np.array([0.3, -0.2]), np.array([-1.0, 0.4])
    controls = np.broadcast_to(u, (1, GRID.steps, 2)).copy()
    direction = np.broadcast_to(up, (1, GRID.steps, 2)).copy()
    expected = 2 * c * (np.array([0.2, -0.1]) + b @ u * T - 0.5) @ (b @ up * T)
    got = analytic_linear_derivative(game, controls, 0, direction, noise)
    assert got == pytest.approx(expected, rel=1e-12)
    assert fd_linear_derivative(game, controls, 0, direction, noise) == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("kernel", [Quadratic(), Gaussian(2.0, 3.0)])
def test_deterministic_fd_agreement(kernel, rng):
    game = crowd_game(N=3, kernel=kernel, q=[[0, 2, 1], [0, 0, 1], [3, 0.5, 0]], x0=rng.uniform(-1, 1, (3, 2)))
    noise = sample_noise(game, GRID, 1, seed=0)
    u = controls_for(game, 1, rng)
    for i in range(3):
        direction = rng.standard_normal((1, GRID.steps, 2))
        a = analytic_linear_derivative(game, u, i, direction, noise)
        f = fd_linear_derivative(game, u, i, direction, noise)
        assert abs(a - f) <= 1e-6 * abs(f)


def test_noisy_fd_agreement(noisy_game, rng):
    noise = sample_noise(noisy_game, GRID, 200, seed=4)
    u = controls_for(noisy_game, 200, rng)
    direction = rng.standard_normal((200, GRID.steps, 2))
    a = analytic_linear_derivative(noisy_game, u, 2, direction, noise)
    f = fd_linear_derivative(noisy_game, u, 2, direction, noise)
    assert abs(a - f) <= 1e-3 * abs(f)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), s1=st.floats(-3, 3), s2=st.floats(-3, 3))
def test_linearity_in_direction(seed, s1, s2):
    rng = np.random.default_rng(seed)
    game = crowd_game(N=2, kernel=Gaussian(1.0, 2.0), sigma=0.2, gamma=0.2, rate=1.0, q=[[0, 1], [2, 0]])
    noise = sample_noise(game, GRID, 10, seed=seed)
    u = controls_for(game, 10, rng)
    d1, d2 = rng.standard_normal((2, 10, GRID.steps, 2))
    lin = lambda d: analytic_linear_derivative(game, u, 0, d, noise)
    lhs = lin(s1 * d1 + s2 * d2)
    rhs = s1 * lin(d1) + s2 * lin(d2)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(s1 * lin(d1)) + abs(s2 * lin(d2)), 1e-300)


def test_isolation(noisy_game, rng):
    noise = sample_noise(noisy_game, GRID, 5, seed=2)
    u = controls_for(noisy_game, 5, rng)
    v = u.copy()
    v[:, :, 2:4] += rng.standard_normal((5, GRID.steps, 2))  # move player 1 only
    a, b = simulate_open_loop(noisy_game, u, noise), simulate_open_loop(noisy_game, v, noise)
    for i in (0, 2):
        sl = slice(2 * i, 2 * i + 2)
        assert np.array_equal(a.X[:, :, sl], b.X[:, :, sl])
    assert not np.array_equal(a.X[:, :, 2:4], b.X[:, :, 2:4])


def test_second_derivative_zero_without_interaction(rng):
    game = crowd_game(N=2, kernel=Gaussian(1.0, 1.0), q=np.zeros((2, 2)))
    noise = sample_noise(game, GRID, 1, seed=0)
    u = controls_for(game, 1, rng)
    di, dj = rng.standard_normal((2, 1, GRID.steps, 2))
    analytic, fd = second_derivative_check(game, u, 0, 1, di, dj, noise)
    assert analytic == 0.0 and abs(fd) <= 1e-8


def test_second_derivative_quadratic_game(rng):
    game = crowd_game(N=2, q=[[0, 2.0], [0.5, 0]], x0=rng.uniform(-1, 1, (2, 2)))
    noise = sample_noise(game, GRID, 1, seed=0)
    u = controls_for(game, 1, rng)
    di = np.broadcast_to(rng.standard_normal(2), (1, GRID.steps, 2)).copy()
    dj = np.broadcast_to(rng.standard_normal(2), (1, GRID.steps, 2)).copy()
    analytic, fd = second_derivative_check(game, u, 0, 1, di, dj, noise)
    assert abs(analytic - fd) <= 1e-6 * max(abs(analytic), 1.0)
    assert abs(analytic) > 1e-3
    with pytest.raises(ValueError):
        second_derivative_check(game, u, 1, 1, di, dj, noise)


def test_second_derivative_symmetry(rng):
    game = crowd_game(N=3, kernel=Gaussian(1.0, 2.0), sigma=0.3, gamma=0.2, rate=1.0)
    noise = sample_noise(game, GRID, 50, seed=5)
    u = controls_for(game, 50, rng)
    di, dj = rng.standard_normal((2, 50, GRID.steps, 2))
    a_ij, _ = second_derivative_check(game, u, 0, 2, di, dj, noise)
    a_ji, _ = second_derivative_check(game, u, 2, 0, dj, di, noise)
    assert abs(a_ij - a_ji) <= 1e-8 * max(abs(a_ij), 1.0)
    assert abs(a_ij) > 1e-4


def test_random_deviation_respects_cap(rng):
    for _ in range(50):
        dev = random_deviation(rng, 7, 20, 2, 0.05, 2.5)
        assert dev.shape == (7, 20, 2)
        assert 0 < control_norm(dev, 0.05) <= 2.5 * (1 + 1e-12)
    const = random_deviation(rng, 3, 20, 2, 0.05, 1.0, pieces=1)
    assert np.all(const == const[:, :1])


def test_zero_deviation_gap(noisy_game, rng):
    noise = sample_noise(noisy_game, GRID, 10, seed=3)
    rep = potential_inequality_audit(noisy_game, controls_for(noisy_game, 10, rng), 5, noise, zero_deviation=True)
    assert rep.max_gap == 0.0 and rep.passed


def test_symmetric_audit_exact(rng):
    game = crowd_game(N=3, x0=rng.uniform(-1, 1, (3, 2)), cap=2.0)
    noise = sample_noise(game, GRID, 1, seed=0)
    rep = potential_inequality_audit(game, controls_for(game, 1, rng), 20, noise, potential="symmetric", bound=0.0)
    assert rep.max_gap <= 1e-6


def test_asymmetric_audit_within_bound(rng):
    q = np.zeros((3, 3))
    q[0, 1] = 2.0
    game = crowd_game(N=3, q=q, x0=rng.uniform(-1, 1, (3, 2)))
    noise = sample_noise(game, GRID, 1, seed=0)
    rep = potential_inequality_audit(game, np.zeros((1, GRID.steps, 6)), 30, noise, seed=1)
    assert rep.bound > 0 and rep.max_gap <= rep.bound and rep.passed
    d = json.loads(rep.to_json())
    assert set(d) >= {"bound", "max_gap", "stderr", "samples", "passed"}
    with pytest.raises(ValueError):
        potential_inequality_audit(game, np.zeros((1, GRID.steps, 6)), 0, noise)


def test_audit_accepts_policy(noisy_game):
    noise = sample_noise(noisy_game, GRID, 10, seed=3)
    pol = lambda t, x, y: -0.5 * x
    rep = potential_inequality_audit(noisy_game, pol, 3, noise)
    assert rep.samples == 3 and np.isfinite(rep.max_gap)


def test_objectives_match_fd_derivative_sign(rng):
    game = crowd_game(N=1, control=0.0, terminal=1.0)
    noise = sample_noise(game, GRID, 1, seed=0)
    J = objectives(game, np.zeros((1, GRID.steps, 2)), noise)
    assert J.shape == (1,) and J[0] == pytest.approx(0.5, rel=1e-14)


def test_exploitability_zero_cost():
    game = crowd_game(N=2, sigma=0.1).replace(cost=CallbackCost.zero(2, 2, 2))
    config = TrainConfig(batch=4, eval_batch=4, steps=5, blocks=1, extra_width=2)
    params = config.network(game).init(0, output_scale=0.2)
    rep = exploitability(game, params, budget=3, config=config)
    assert rep.epsilon == [0.0, 0.0] and rep.max_epsilon == 0.0 and rep.budget == 3


def test_exploitability_on_lqr(lqr_trained):
    preset, params, _ = lqr_trained
    rep = exploitability(preset.game, params, budget=300, config=preset.config)
    J = rep.joint_costs[0]
    assert rep.epsilon[0] <= 0.02 * abs(J)


def test_riccati_against_brute_force():
    # discrete problem is a quadratic in all P controls; solve the normal equations directly
    grid = TimeGrid(1.0, 8)
    b = np.array([[1.0, 0.5], [0.0, 2.0]])
    cl, c = 0.3, 2.0
    x0, z = np.array([0.1, -0.4]), np.array([0.5, 0.5])
    sol = riccati_tracking(b, cl, c, x0, z, grid)
    P, dt = grid.steps, grid.dt
    Amat = np.hstack([b * dt] * P)  # x_P = x0 + Amat @ u
    H = cl * dt * np.eye(2 * P) + 2 * c * Amat.T @ Amat
    rhs = -2 * c * Amat.T @ (x0 - z)
    u = np.linalg.solve(H, rhs)
    e = x0 + Amat @ u - z
    best = 0.5 * cl * dt * u @ u + c * e @ e
    assert sol.cost == pytest.approx(best, rel=1e-12)
    np.testing.assert_allclose(sol.controls.ravel(), u, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(sol.states[-1], x0 + Amat @ u, rtol=1e-12)
