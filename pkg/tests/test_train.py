import math
from dataclasses import replace

import numpy as np
import pytest

from alphagame.costs import CallbackCost
from alphagame.nn import load_checkpoint
from alphagame.presets import get_preset
from alphagame.sde import sample_noise
from alphagame.train import (PlateauState, TrainConfig, TrainingError, TrainLog, evaluate_potential,
                             plateau_schedule, train)
from alphagame.verify import riccati_tracking
from conftest import crowd_game



def replay(losses, **kw):
    st = PlateauState(1e-3, **kw)
    rates = []
    for loss in losses:
        st = plateau_schedule(loss, st)
        rates.append(st.lr)
    return rates


def test_plateau_strictly_decreasing():
    assert set(replay(np.linspace(10, 1, 100))) == {1e-3}


def test_plateau_constant_halves_once():
    rates = replay([5.0] * 11, patience=10)
    assert rates[-1] == 5e-4 and rates[:-1] == [1e-3] * 10


def test_plateau_two_plateaus():
    losses = [5.0] * 11 + [4.0] + [4.0] * 10
    rates = replay(losses, patience=10)
    assert rates[-1] == 2.5e-4
    assert len(set(rates)) == 3


def test_plateau_threshold_and_floor():
    # improvements smaller than the relative threshold do not count
    rates = replay([1.0 - 1e-6 * k for k in range(11)], patience=10)
    assert rates[-1] == 5e-4
    st = PlateauState(2e-5, best=1.0, patience=1)
    assert plateau_schedule(1.0, plateau_schedule(1.0, st)).lr == 1e-5
    # negative losses: improvement means moving down
    assert replay([-1.0, -2.0, -3.0, -4.0], patience=1) == [1e-3] * 4
    with pytest.raises(ValueError):
        plateau_schedule(1.0, PlateauState(1e-3, factor=1.0))


def test_config_validation():
    for bad in ({"batch": 0}, {"steps": 0}, {"lr": 0.0}, {"factor": 1.0}, {"resample": "never"}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_zero_cost_game_does_nothing():
    game = crowd_game(N=2, sigma=0.1).replace(cost=CallbackCost.zero(2, 2, 2))
    config = TrainConfig(iterations=4, batch=5, steps=5, blocks=1, extra_width=2)
    p0 = config.network(game).init(config.seed, output_scale=0.3)
    params, log = train(game, config, params=p0)
    assert np.all(log.column("phi") == 0.0) and np.all(log.column("grad_norm") == 0.0)
    assert np.array_equal(params.flat(), p0.flat())


def small_config(**kw):
    base = dict(iterations=6, batch=8, steps=5, blocks=1, extra_width=3, lr=1e-2)
    base.update(kw)
    return TrainConfig(**base)


def test_log_records_and_reproducibility(tmp_path):
    game = crowd_game(N=2, sigma=0.2, gamma=0.2, rate=1.0)
    config = small_config()
    _, log1 = train(game, config)
    _, log2 = train(game, config)
    assert len(log1) == config.iterations
    assert [r["iteration"] for r in log1.records] == list(range(config.iterations))
    assert set(log1[0]) == {"iteration", "phi", "running", "terminal", "stderr", "grad_norm", "lr", "wall_time"}
    assert log1.comparable() == log2.comparable()
    log1.to_jsonl(tmp_path / "log.jsonl")
    assert TrainLog.from_jsonl(tmp_path / "log.jsonl").records == log1.records
    _, log3 = train(game, small_config(seed=1))
    assert log3.comparable() != log1.comparable()


def test_fixed_noise_checkpoint_reproduces_logged_phi(tmp_path):
    game = crowd_game(N=2, sigma=0.2, gamma=0.2, rate=1.0, q=[[0, 2.0], [0, 0]])
    config = small_config(resample="fixed", checkpoint_every=5, checkpoint_dir=str(tmp_path))
    _, log = train(game, config)
    params, meta = load_checkpoint(tmp_path / "checkpoint.bin")
    assert meta["iteration"] == 5 and meta["phi"] == log[5]["phi"]
    noise = sample_noise(game, config.grid, config.batch, config.seed, stream=0)
    assert evaluate_potential(game, params, noise, config.rule).value == log[5]["phi"]


def test_fresh_noise_differs_from_fixed():
    game = crowd_game(N=2, sigma=0.2)
    p = small_config().network(game).init(0, output_scale=0.5)
    _, fresh = train(game, small_config(), params=p)
    _, fixed = train(game, small_config(resample="fixed"), params=p)
    assert fresh[0]["phi"] == fixed[0]["phi"]
    assert fresh[1]["phi"] != fixed[1]["phi"]


def test_non_finite_loss_aborts_with_checkpoint(tmp_path):
    zero = CallbackCost.zero(1, 1, 1)
    nan_grad = lambda t, x, a: np.full(np.shape(x)[:-1] + (1, 2), np.nan)
    nan_cost = CallbackCost(1, 1, 1, zero.f, nan_grad, zero.f_hess, zero.g, zero.g_grad, zero.g_hess)
    game = crowd_game(N=1, d=1).replace(cost=nan_cost)
    with pytest.raises(TrainingError) as info:
        train(game, small_config(checkpoint_dir=str(tmp_path)))
    assert info.value.params is not None and len(info.value.log) == 0
    assert (tmp_path / "abort.bin").exists()


def test_clip_norm_limits_first_step():
    game = crowd_game(N=1, terminal=50.0)
    config = small_config(iterations=2, clip_norm=1e-12, resample="fixed")
    p0 = config.network(game).init(0)
    p1, _ = train(game, config, params=p0)
    # Adam normalises the step, so clipping changes direction only; it must stay finite and move
    assert p1.is_finite() and not np.array_equal(p1.flat(), p0.flat())


def test_lqr_preset_near_riccati(lqr_trained):
    preset, params, log = lqr_trained
    cost = preset.game.cost
    sol = riccati_tracking(preset.game.drift[0], 0.1, 1.0, preset.game.initial_state[0], cost.targets[0],
                           preset.config.grid)
    phi_star = sol.cost - float(np.sum((preset.game.initial_state[0] - cost.targets[0]) ** 2))
    phi = log[-1]["phi"]
    assert math.isclose(phi_star, -0.47619047619047616, rel_tol=1e-9)
    assert abs(phi - phi_star) <= 0.02 * abs(phi_star)


def test_aversion_descent_200_iterations():
    preset = get_preset("aversion")
    _, log = train(preset.game, replace(preset.config, iterations=201))
    phi = log.column("phi")
    assert phi[200] < phi[0]
    running_min = np.minimum.accumulate(phi)
    assert np.all(np.diff(running_min) <= 0)
