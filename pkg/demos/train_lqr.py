"""Policy-gradient training on a problem with a known answer.

One player steers towards a target with a quadratic control cost. The
discrete Riccati recursion gives the optimal potential on the same grid; the
trained network should land within a fraction of a percent of it.
"""

import numpy as np

from alphagame import get_preset, riccati_tracking, train

preset = get_preset("lqr-oracle")
game, config = preset.game, preset.config
z = game.cost.targets[0]
sol = riccati_tracking(game.drift[0], 0.1, 1.0, game.initial_state[0], z, config.grid)
phi_star = sol.cost - np.sum((game.initial_state[0] - z) ** 2)

params, log = train(game, config)
phi = log.column("phi")
for n in (0, 10, 50, 100, 250, len(phi) - 1):
    print(f"iteration {n:4d}   Phi = {phi[n]:+.6f}   lr = {log[n]['lr']:.1e}")
print(f"Riccati optimum     {phi_star:+.6f}")
print(f"relative gap        {abs(phi[-1] - phi_star) / abs(phi_star):.2e}")
