"""Unilateral deviations against the potential in a small crowd game.

A symmetric game has an exact potential, so every change in a player's cost
is matched by the same change in the potential. Breaking the symmetry of the
interaction weights opens a gap, which stays below the computed alpha bound.
"""

import numpy as np

from alphagame import (CrowdCost, GameSpec, Quadratic, TimeGrid, game_alpha, potential_inequality_audit,
                       sample_noise)

N, d = 3, 2
grid = TimeGrid(1.0, 50)


def make_game(q):
    cost = CrowdCost(0.1, Quadratic(), q, 1.0, np.full((N, d), 0.5))
    drift = np.broadcast_to(np.eye(d), (N, d, d)).copy()
    x0 = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return GameSpec(drift, np.zeros((N, d, 0)), np.zeros((N, 0, d)), np.zeros(0), x0, cost, 1.0)


# deterministic game: a single "trajectory" is exact
symmetric = make_game(np.ones((N, N)) - np.eye(N))
noise = sample_noise(symmetric, grid, 1, seed=0)
base = np.zeros((1, grid.steps, N * d))

rep = potential_inequality_audit(symmetric, base, 50, noise, potential="symmetric", bound=0.0)
print(f"symmetric game:  max |dJ - dPhi| = {rep.max_gap:.2e}")

q = np.zeros((N, N))
q[0, 1] = 2.0
skewed = make_game(q)
alpha = game_alpha(skewed, grid)
rep = potential_inequality_audit(skewed, base, 200, noise)
print(f"skewed game:     max |dJ - dPhi| = {rep.max_gap:.4f}  (alpha bound {alpha.bound:.4f})")
for name, value in alpha.terms.items():
    print(f"    {name:>14s} = {value:.4f}")
