"""How fast interaction asymmetry fades on large trees.

Players sit on the vertices of a complete ternary tree and the asymmetry of
each pair decays with graph distance. The normalised asymmetry ``zeta_N``
falls like ``N**(ln rho / ln 3)`` for slow decay and like ``1/N`` for fast decay.
The finite-N bound packs shortest-path trees into a tree whose branching is
the maximum degree, which is 4 here (a parent plus three children), so its
regime boundary sits at rho = 1/4.
"""

import numpy as np

from alphagame import Exponential, GraphSpec, zeta_asymptotic_bound, zeta_exact
from alphagame.cli import complete_tree

for rho in (0.6, 1 / 3, 0.2):
    Ns, exact, bound = [], [], []
    for levels in range(2, 7):
        n, edges = complete_tree(3, levels)
        g = GraphSpec(n, edges, Exponential(rho))
        Ns.append(n)
        exact.append(zeta_exact(g.interaction_table(weights="exact")))
        bound.append(zeta_asymptotic_bound(g).bound)
    slope = np.polyfit(np.log(Ns), np.log(exact), 1)[0]
    zb = zeta_asymptotic_bound(g)
    target = max(np.log(rho) / np.log(3), -1.0)
    print(f"rho = {rho:.3f}: fitted slope {slope:+.3f} (tree exponent {target:+.3f}), "
          f"bound regime {zb.regime} with d_G = {zb.degree}")
    for n, z, b in zip(Ns, exact, bound):
        print(f"    N = {n:5d}   zeta = {z:.3e}   bound = {b:.3e}")
