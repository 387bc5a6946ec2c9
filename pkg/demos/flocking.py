"""Flocking with two groups, trained briefly and drawn as an SVG.

Players 2 and 3 attract each other, as do players 1 and 4; nobody is drawn
across groups. Mean paths are written to ``flocking.svg`` with markers at a
quarter, half and three quarters of the horizon. Pass an iteration count
(default 100) on the command line; the shipped preset uses 500.
"""

import sys
from dataclasses import replace

import numpy as np

from alphagame import get_preset, sample_noise, simulate, train
from alphagame.svg import mean_trajectories, write_svg

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 100
preset = get_preset("flocking-groups")
config = replace(preset.config, iterations=iterations)
params, log = train(preset.game, config)
print(f"Phi: {log[0]['phi']:.3f} -> {log[-1]['phi']:.3f} after {len(log)} iterations")

noise = sample_noise(preset.game, config.grid, config.eval_batch, config.seed, stream=10**9)
paths = simulate(preset.game, params.policy(), noise)
means = mean_trajectories(paths, 4)
mid = means[config.steps // 2]
dist = np.linalg.norm(mid[:, None] - mid[None], axis=-1)
print(f"t = 0.5: players 2-3 {dist[1, 2]:.3f}, players 1-4 {dist[0, 3]:.3f}, players 1-2 {dist[0, 1]:.3f}")
write_svg("flocking.svg", paths, 4, preset.game.cost.targets, title="flocking-groups")
print("wrote flocking.svg")
