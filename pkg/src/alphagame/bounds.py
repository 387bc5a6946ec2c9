"""Explicit alpha bounds for distributed games and interaction-asymmetry analysis on graphs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .costs import Cost, CrowdCost
from .kernels import kernel_curvature

_TERMS = ("xx_f", "xa_f", "ax_f", "aa_f", "xx_g")


@dataclass(frozen=True, eq=False)
class DerivativeBounds:
    """Sup-norms of mixed second derivatives of ``f_i - f_j`` and ``g_i - g_j``.

    Each field is an ``(N, N)`` table indexed by the ordered pair ``(i, j)``:
    ``xx_f[i, j] = sup ||d^2_{x_i x_j}(f_i - f_j)||`` and so on. Diagonals are ignored.
    """

    xx_f: np.ndarray
    xa_f: np.ndarray
    ax_f: np.ndarray
    aa_f: np.ndarray
    xx_g: np.ndarray
    method: str = "closed form"
    samples: int = 0

    def __post_init__(self):
        shape = None
        for name in _TERMS:
            arr = np.array(getattr(self, name), dtype=float)
            if shape is None:
                shape = arr.shape
            if arr.ndim != 2 or arr.shape != shape or shape[0] != shape[1]:
                raise ValueError("derivative bound tables must share one square shape")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} must be finite and non-negative")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_players(self) -> int:
        return self.xx_f.shape[0]

    @classmethod
    def zeros(cls, n: int) -> "DerivativeBounds":
        z = np.zeros((n, n))
        return cls(z, z, z, z, z)

    @classmethod
    def from_crowd(cls, cost: CrowdCost) -> "DerivativeBounds":
        """Only the kernel cross term survives: ``kappa |q_ij - q_ji| / (N-1)``."""
        W = cost.pair_weights
        z = np.zeros_like(W)
        return cls(kernel_curvature(cost.kernel) * np.abs(W - W.T), z, z, z, z)

    @classmethod
    def sampled(cls, cost: Cost, lower, upper, samples: int = 10_000, seed: int = 0,
                t_range=(0.0, 1.0)) -> "DerivativeBounds":
        """Estimate the sup-norms by the maximum over uniform samples in a box.

        ``lower``/``upper`` bound the flat ``(x, a)`` vector of length ``N*(d+k)``.
        The result is a sampled sup, not a certified bound.
        """
        N, d, k = cost.n_players, cost.state_dim, cost.action_dim
        lo = np.broadcast_to(np.asarray(lower, dtype=float), (N * (d + k),))
        hi = np.broadcast_to(np.asarray(upper, dtype=float), (N * (d + k),))
        rng = np.random.default_rng(seed)
        out = {name: np.zeros((N, N)) for name in _TERMS}
        chunk = 500
        for start in range(0, samples, chunk):
            m = min(chunk, samples - start)
            z = lo + (hi - lo) * rng.random((m, N * (d + k)))
            t = rng.uniform(*t_range)
            x, a = z[:, :N * d], z[:, N * d:]
            Hf = cost.running_hessian(t, x, a)
            Hg = cost.terminal_hessian(x)
            for i in range(N):
                xi = slice(i * d, (i + 1) * d)
                ai = slice(N * d + i * k, N * d + (i + 1) * k)
                for j in range(N):
                    if i == j:
                        continue
                    xj = slice(j * d, (j + 1) * d)
                    aj = slice(N * d + j * k, N * d + (j + 1) * k)
                    dF = Hf[:, i] - Hf[:, j]
                    dG = Hg[:, i] - Hg[:, j]
                    for name, block in (("xx_f", dF[:, xi, xj]), ("xa_f", dF[:, xi, aj]),
                                        ("ax_f", dF[:, ai, xj]), ("aa_f", dF[:, ai, aj]),
                                        ("xx_g", dG[:, xi, xj])):
                        out[name][i, j] = max(out[name][i, j], float(np.max(np.linalg.norm(block, 2, axis=(-2, -1)))))
        return cls(**out, method="sampled sup", samples=int(samples))


@dataclass(frozen=True)
class AlphaReport:
    bound: float
    terms: dict
    inputs: dict
    kind: str = "general"
    zeta: dict = field(default_factory=dict)

    def to_json(self, **kw) -> str:
        return json.dumps({"kind": self.kind, "bound": self.bound, "terms": self.terms,
                           "inputs": self.inputs, "zeta": self.zeta}, sort_keys=True, **kw)


def _check_nonneg(name, arr):
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"{name} must be finite and non-negative")
    return arr


def alpha_bound_general(bounds: DerivativeBounds, b_norms, u_norms, T: float) -> AlphaReport:
    """``1/2 max_i sum_{j != i} U_i U_j [T B_i B_j |xx| + sqrt(T) B_i |xa| + sqrt(T) B_j |ax| + |aa| + B_i B_j |g_xx|]``."""
    N = bounds.n_players
    B = np.broadcast_to(_check_nonneg("b_norms", b_norms), (N,))
    U = np.broadcast_to(_check_nonneg("u_norms", u_norms), (N,))
    T = float(_check_nonneg("T", T))
    off = 1.0 - np.eye(N)
    UU = np.outer(U, U) * off
    BB = np.outer(B, B)
    rows = {
        "xx_f": 0.5 * np.sum(UU * T * BB * bounds.xx_f, axis=1),
        "xa_f": 0.5 * np.sum(UU * math.sqrt(T) * B[:, None] * bounds.xa_f, axis=1),
        "ax_f": 0.5 * np.sum(UU * math.sqrt(T) * B[None, :] * bounds.ax_f, axis=1),
        "aa_f": 0.5 * np.sum(UU * bounds.aa_f, axis=1),
        "xx_g": 0.5 * np.sum(UU * BB * bounds.xx_g, axis=1),
    }
    per_player = sum(rows[name] for name in _TERMS)
    i = int(np.argmax(per_player)) if N else 0
    terms = {name: float(rows[name][i]) for name in _TERMS}
    bound = float(sum(terms[name] for name in _TERMS))
    return AlphaReport(bound, terms, {"T": T, "B": B.tolist(), "U": U.tolist(), "argmax_player": i,
                                      "derivative_bounds": bounds.method, "samples": bounds.samples})


def zeta_exact(q) -> float:
    """``1/(N-1) max_i sum_{j != i} |q_ji - q_ij|``."""
    q = np.asarray(q, dtype=float)
    N = q.shape[0]
    if q.shape != (N, N):
        raise ValueError("q must be square")
    if np.any(np.diag(q) != 0):
        raise ValueError("q must have a zero diagonal")
    if N < 2:
        return 0.0
    return float(np.max(np.sum(np.abs(q.T - q), axis=1)) / (N - 1))


def crowd_alpha(cost: CrowdCost, B: float, U: float, T: float) -> AlphaReport:
    """``alpha_N <= 1/2 T B^2 U^2 kappa zeta_N`` for crowd-motion costs."""
    for name, v in (("B", B), ("U", U), ("T", T)):
        _check_nonneg(name, v)
    kappa = kernel_curvature(cost.kernel)
    zeta = zeta_exact(cost.interaction)
    bound = 0.5 * T * B**2 * U**2 * kappa * zeta
    return AlphaReport(float(bound), {"half_T_B2_U2": 0.5 * T * B**2 * U**2, "kappa": kappa, "zeta": zeta},
                       {"T": float(T), "B": float(B), "U": float(U), "kappa": kappa, "zeta_N": zeta}, kind="crowd")


def game_alpha(game, grid) -> AlphaReport:
    """Crowd bound for a game with crowd costs, using ``B = max_i ||b_i||_{L^2}`` and ``U`` from the game."""
    B = float(np.max(game.drift_norms(grid)))
    if isinstance(game.cost, CrowdCost):
        rep = crowd_alpha(game.cost, B, game.control_cap, grid.horizon)
        return rep
    raise TypeError("game_alpha needs crowd costs; use alpha_bound_general with DerivativeBounds")


# -- graphs -------------------------------------------------------------------

@dataclass(frozen=True)
class Exponential:
    rho: float

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")

    def weight(self, c):
        c = np.asarray(c, dtype=float)
        return np.where(np.isfinite(c), self.rho ** np.where(np.isfinite(c), c, 0.0), 0.0)


@dataclass(frozen=True)
class Power:
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    def weight(self, c):
        c = np.asarray(c, dtype=float)
        ok = np.isfinite(c) & (c > 0)
        return np.where(ok, np.where(ok, c, 1.0) ** (-self.beta), 0.0)


@dataclass(frozen=True, eq=False)
class GraphSpec:
    """Undirected simple graph with an asymmetry decay law ``|q_ij - q_ji| <= w_ij decay(c(i,j))``."""

    n_vertices: int
    edges: tuple
    decay: Exponential | Power | None = None
    amplitude: float = 1.0
    degree: int | None = None  # branching factor used by the tree arguments (defaults to max degree)

    def __post_init__(self):
        N = int(self.n_vertices)
        seen = set()
        clean = []
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError("self loops are not allowed")
            if not (0 <= u < N and 0 <= v < N):
                raise ValueError(f"edge ({u}, {v}) out of range")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            clean.append(key)
        object.__setattr__(self, "edges", tuple(clean))
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")

    @property
    def max_degree(self) -> int:
        deg = np.zeros(self.n_vertices, dtype=int)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return int(deg.max()) if self.n_vertices else 0

    @property
    def branching(self) -> int:
        return int(self.degree) if self.degree is not None else self.max_degree

    def distances(self) -> np.ndarray:
        N = self.n_vertices
        if not self.edges:
            D = np.full((N, N), np.inf)
            np.fill_diagonal(D, 0.0)
            return D
        u, v = np.array(self.edges).T
        A = csr_matrix((np.ones(len(u)), (u, v)), shape=(N, N))
        return shortest_path(A, directed=False, unweighted=True)

    def interaction_table(self, seed: int = 0, weights: str = "random") -> np.ndarray:
        """A table ``q`` whose asymmetry meets the decay law with equality up to ``w_ij``.

        ``q_ij - q_ji = +/- w_ij decay(c(i,j))`` with ``w_ij`` uniform in
        ``(0, amplitude]`` (or equal to ``amplitude`` when ``weights="exact"``).
        """
        if self.decay is None:
            raise ValueError("graph has no decay law")
        rng = np.random.default_rng(seed)
        N = self.n_vertices
        base = self.decay.weight(self.distances())
        np.fill_diagonal(base, 0.0)
        if weights == "exact":
            w = np.full((N, N), self.amplitude)
            sign = np.ones((N, N))
        else:
            w = self.amplitude * (1.0 - rng.random((N, N)))
            sign = rng.choice([-1.0, 1.0], size=(N, N))
        asym = np.triu(w * base * sign, 1)
        q = np.where(asym > 0, asym, 0.0) + np.where(asym < 0, -asym, 0.0).T
        return q


def read_edge_list(path) -> tuple[int, list]:
    """Whitespace-separated ``u v`` lines; ``#`` starts a comment. Returns ``(n_vertices, edges)``."""
    edges = []
    n = 0
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"malformed edge line: {line!r}")
            u, v = int(parts[0]), int(parts[1])
            edges.append((u, v))
            n = max(n, u + 1, v + 1)
    return n, edges


def rebalance_tree(graph: GraphSpec, root: int) -> dict:
    """Depths of the reachable vertices after packing them level by level into a full ``d``-ary tree.

    Vertices are ordered by shortest-path distance from ``root`` (ties by
    index) and fill levels of capacity ``1, d, d^2, ...``. Unreachable
    vertices are left out. The result never exceeds the original distance.
    """
    d = graph.branching
    if d < 1:
        raise ValueError("graph has no edges")
    dist = graph.distances()[root]
    reach = [v for v in np.argsort(dist, kind="stable") if np.isfinite(dist[v])]
    depths = {}
    level, used, cap = 0, 0, 1
    cum_cap = 1
    for count, v in enumerate(reach, start=1):
        while used >= cap:
            level += 1
            used = 0
            cap = d ** level
            cum_cap += cap
        depths[int(v)] = level
        used += 1
        if count > cum_cap:
            raise ValueError("level capacity exceeded")
        if level > dist[v]:
            raise ValueError(f"branching factor {d} is too small for this graph")
    return depths


def branching_admissible(graph: GraphSpec) -> bool:
    """Whether every root's shortest-path tree packs into the ``d``-ary tree without deepening a vertex.

    True for ``d`` at least the maximum degree; smaller overrides only hold
    for some graphs (never for a complete ``d``-ary tree beyond two levels).
    """
    d = graph.branching
    N = graph.n_vertices
    if d < 1 or N < 2:
        return N < 2
    # greedy level of the p-th closest vertex: smallest l with 1 + d + ... + d^l > p
    need = np.empty(N)
    level, cum = 0, 1
    for p in range(N):
        while p >= cum:
            level += 1
            cum += d**level
        need[p] = level
    D = np.sort(graph.distances(), axis=1)
    return bool(np.all((D >= need) | ~np.isfinite(D)))


def tree_levels(N: int, d: int) -> int:
    """Smallest ``L`` with ``1 + d + ... + d^L >= N``."""
    L, total = 0, 1
    while total < N:
        L += 1
        total += d**L
    return L


@dataclass(frozen=True)
class ZetaBound:
    regime: str
    bound: float
    rate_exponent: float
    rate: str
    levels: int
    degree: int
    split: int | None = None

    def as_dict(self) -> dict:
        return dict(regime=self.regime, bound=self.bound, rate_exponent=self.rate_exponent, rate=self.rate,
                    levels=self.levels, degree=self.degree, split=self.split)


def zeta_asymptotic_bound(graph: GraphSpec) -> ZetaBound:
    """Finite-N bound on ``zeta_N`` under the graph's decay law, with the asymptotic regime.

    Exponential decay: ``wbar/(N-1) sum_{l=1}^L (rho d)^l``; regimes
    ``N^{ln rho/ln d}``, ``(ln N)/N`` and ``1/N``. Power decay: the sum
    ``sum_{l=1}^L d^l / l^beta`` split at ``L - M*`` with the tail bounded by
    ``M*`` times its largest term; rate ``(ln ln N)/(ln N)^beta``.
    """
    if graph.decay is None:
        raise ValueError("graph has no decay law")
    d = graph.branching
    if d < 2:
        raise ValueError("degree d_G must be at least 2")
    if graph.degree is not None and graph.degree < graph.max_degree and not branching_admissible(graph):
        raise ValueError(f"branching factor {d} is below the maximum degree {graph.max_degree} and the "
                         "rebalanced tree cannot hold some shortest-path tree; the bound would not hold")
    N = graph.n_vertices
    if N < 2:
        return ZetaBound("trivial", 0.0, 0.0, "0", 0, d)
    L = tree_levels(N, d)
    wbar = graph.amplitude
    if isinstance(graph.decay, Exponential):
        rho = graph.decay.rho
        s = sum((rho * d) ** ell for ell in range(1, L + 1))
        bound = wbar * s / (N - 1)
        if math.isclose(rho, 1.0 / d, rel_tol=1e-12):
            return ZetaBound("(ln N)/N", bound, -1.0, "(ln N)/N", L, d)
        if rho > 1.0 / d:
            expo = math.log(rho) / math.log(d)
            return ZetaBound("N^(ln rho/ln d_G)", bound, expo, f"N^{expo:.6g}", L, d)
        return ZetaBound("1/N", bound, -1.0, "N^-1", L, d)
    beta = graph.decay.beta
    if L >= 1:
        lnL = math.log(L) if L > 1 else 0.0
        M = math.floor(beta * lnL / math.log(d)) if beta > 1 else math.floor(lnL / math.log(d))
        M = min(max(M, 0), L)
    else:
        M = 0
    terms = [d**ell / ell**beta for ell in range(1, L + 1)]
    head = sum(terms[:L - M])
    tail = M * max(terms[L - M:]) if M > 0 else 0.0
    bound = wbar * (head + tail) / (N - 1)
    return ZetaBound("(ln ln N)/(ln N)^beta", bound, beta, f"(ln ln N)/(ln N)^{beta:g}", L, d, split=M)
