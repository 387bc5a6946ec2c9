"""Player cost descriptors.

All methods take flattened joint arrays: states ``x`` of shape ``(..., N*d)``
and actions ``a`` of shape ``(..., N*k)``; leading axes are batch axes.
``t`` is a scalar time.

Besides values and derivatives, a cost knows how to evaluate the integrands
of the alpha-potential,

    F(t,x,y,a) = sum_i int_0^1 (y_i, a_i) . (d_{x_i} f_i, d_{a_i} f_i)(t, x-(1-r)y, r a) dr
    G(x,y)     = sum_i int_0^1 y_i . d_{x_i} g_i(x-(1-r)y) dr

and their vector-Jacobian products (needed for backpropagation through a
rollout). The base class does this by quadrature over ``r``; ``CrowdCost``
overrides the pieces that have closed forms.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .kernels import Kernel


class Cost:
    n_players: int
    state_dim: int
    action_dim: int

    # -- required -----------------------------------------------------------
    def running(self, t, x, a):
        """Running costs ``f_i(t,x,a)`` for all players, shape ``(..., N)``."""
        raise NotImplementedError

    def terminal(self, x):
        raise NotImplementedError

    def running_hessian(self, t, x, a):
        """Full Hessians of each ``f_i`` w.r.t. ``(x, a)``: ``(..., N, D, D)``, ``D = N(d+k)``."""
        raise NotImplementedError

    def terminal_hessian(self, x):
        raise NotImplementedError

    def running_full_grad(self, t, x, a, i):
        """Gradient of ``f_i`` w.r.t. all of ``(x, a)``."""
        raise NotImplementedError

    def terminal_full_grad(self, x, i):
        raise NotImplementedError

    def running_grad(self, t, x, a):
        """Own partials ``(d_{x_i} f_i)_i`` and ``(d_{a_i} f_i)_i`` stacked flat."""
        gx = np.zeros(np.shape(x))
        ga = np.zeros(np.shape(a))
        d, k = self.state_dim, self.action_dim
        for i in range(self.n_players):
            dx, da = self.running_full_grad(t, x, a, i)
            gx[..., i * d:(i + 1) * d] = dx[..., i * d:(i + 1) * d]
            ga[..., i * k:(i + 1) * k] = da[..., i * k:(i + 1) * k]
        return gx, ga

    def terminal_grad(self, x):
        gx = np.zeros(np.shape(x))
        d = self.state_dim
        for i in range(self.n_players):
            gx[..., i * d:(i + 1) * d] = self.terminal_full_grad(x, i)[..., i * d:(i + 1) * d]
        return gx

    # -- derived ------------------------------------------------------------
    @property
    def _own_rows(self):
        N, d, k = self.n_players, self.state_dim, self.action_dim
        rows = []
        for i in range(N):
            rows.append(list(range(i * d, (i + 1) * d)) + list(range(N * d + i * k, N * d + (i + 1) * k)))
        return rows

    def running_vjp(self, t, x, a, vx, va):
        """``sum_i J_i^T (vx_i, va_i)`` with ``J_i`` the Jacobian of player i's own partials."""
        H = self.running_hessian(t, x, a)
        N, d, k = self.n_players, self.state_dim, self.action_dim
        out = np.zeros(np.shape(x)[:-1] + (N * (d + k),))
        for i, rows in enumerate(self._own_rows):
            v = np.concatenate([vx[..., i * d:(i + 1) * d], va[..., i * k:(i + 1) * k]], axis=-1)
            out = out + np.einsum("...rc,...r->...c", H[..., i, rows, :], v)
        return out[..., :N * d], out[..., N * d:]

    def terminal_vjp(self, x, vx):
        H = self.terminal_hessian(x)
        d = self.state_dim
        out = np.zeros(np.shape(x))
        for i in range(self.n_players):
            sl = slice(i * d, (i + 1) * d)
            out = out + np.einsum("...rc,...r->...c", H[..., i, sl, :], vx[..., sl])
        return out

    def potential_running(self, t, x, y, a, rule):
        total = 0.0
        for r, w in zip(rule.nodes, rule.weights):
            gx, ga = self.running_grad(t, x - (1.0 - r) * y, r * a)
            total = total + w * (np.sum(y * gx, axis=-1) + np.sum(a * ga, axis=-1))
        return total

    def potential_running_and_grad(self, t, x, y, a, rule):
        """Value of ``F`` together with its gradients w.r.t. ``x``, ``y``, ``a``."""
        value = self.potential_running(t, x, y, a, rule)
        dx, dy, da = self.potential_running_vjp(t, x, y, a, rule, np.ones(np.shape(value)))
        return value, dx, dy, da

    def potential_running_vjp(self, t, x, y, a, rule, g):
        dx = np.zeros(np.shape(x))
        dy = np.zeros(np.shape(y))
        da = np.zeros(np.shape(a))
        for r, w in zip(rule.nodes, rule.weights):
            zx, za = x - (1.0 - r) * y, r * a
            gx, ga = self.running_grad(t, zx, za)
            sx, sa = self.running_vjp(t, zx, za, y, a)
            dx += w * sx
            dy += w * (gx - (1.0 - r) * sx)
            da += w * (ga + r * sa)
        g = np.asarray(g)[..., None]
        return g * dx, g * dy, g * da

    def potential_terminal(self, x, y, rule):
        total = 0.0
        for r, w in zip(rule.nodes, rule.weights):
            total = total + w * np.sum(y * self.terminal_grad(x - (1.0 - r) * y), axis=-1)
        return total

    def potential_terminal_vjp(self, x, y, rule, g):
        dx = np.zeros(np.shape(x))
        dy = np.zeros(np.shape(y))
        for r, w in zip(rule.nodes, rule.weights):
            z = x - (1.0 - r) * y
            gx = self.terminal_grad(z)
            sx = self.terminal_vjp(z, y)
            dx += w * sx
            dy += w * (gx - (1.0 - r) * sx)
        g = np.asarray(g)[..., None]
        return g * dx, g * dy

    def symmetric_running(self, t, x, a, rule):
        total = 0.0
        for r, w in zip(rule.nodes, rule.weights):
            gx, ga = self.running_grad(t, r * x, r * a)
            total = total + w * (np.sum(x * gx, axis=-1) + np.sum(a * ga, axis=-1))
        return total

    def symmetric_terminal(self, x, rule):
        total = 0.0
        for r, w in zip(rule.nodes, rule.weights):
            total = total + w * np.sum(x * self.terminal_grad(r * x), axis=-1)
        return total

    def symmetry_violation(self, t, x, a, tol=1e-10):
        """First ``(i, j)`` breaking the cross-derivative symmetry condition at the given points."""
        N, d, k = self.n_players, self.state_dim, self.action_dim
        H = self.running_hessian(t, x, a)
        Hg = self.terminal_hessian(x)
        rows = self._own_rows
        for i in range(N):
            for j in range(N):
                if i == j:
                    continue
                if not np.allclose(H[..., i, rows[i], :][..., rows[j]], H[..., j, rows[i], :][..., rows[j]],
                                   atol=tol, rtol=0.0):
                    return i, j
                si, sj = slice(i * d, (i + 1) * d), slice(j * d, (j + 1) * d)
                if not np.allclose(Hg[..., i, si, sj], Hg[..., j, si, sj], atol=tol, rtol=0.0):
                    return i, j
        return None


class CrowdCost(Cost):
    """Crowd-motion costs

        f_i = (c^l_i / 2)|a_i|^2 + 1/(N-1) sum_{j != i} q_ij K(x_i - x_j),
        g_i = c_i |x_i - z_i|^2.
    """

    def __init__(self, control_weights, kernel: Kernel, interaction, terminal_weights, targets,
                 action_dim: int | None = None):
        self.targets = np.array(targets, dtype=float)
        if self.targets.ndim != 2:
            raise ValueError("targets must be an (N, d) array")
        N, d = self.targets.shape
        self.n_players, self.state_dim = N, d
        self.action_dim = d if action_dim is None else int(action_dim)
        if self.action_dim != d:
            raise ValueError("crowd costs need action_dim == state_dim")
        self.control_weights = _vector(control_weights, N, "control_weights")
        self.terminal_weights = _vector(terminal_weights, N, "terminal_weights")
        self.kernel = kernel
        q = np.array(interaction, dtype=float)
        if q.shape != (N, N):
            raise ValueError(f"interaction table must be {N}x{N}")
        if np.any(np.diag(q) != 0.0):
            raise ValueError("interaction table needs a zero diagonal")
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ValueError("interaction weights must be finite and non-negative")
        if np.any(self.control_weights < 0) or np.any(self.terminal_weights < 0):
            raise ValueError("cost weights must be non-negative")
        self.interaction = q
        self.pair_weights = q / (N - 1) if N > 1 else np.zeros_like(q)
        W = self.pair_weights
        I, J = [], []
        for i in range(N):
            for j in range(i + 1, N):
                if W[i, j] != 0.0 or W[j, i] != 0.0:
                    I.append(i)
                    J.append(j)
        self._pairs = (np.array(I, dtype=int), np.array(J, dtype=int))
        self._incidence = np.zeros((len(I), N))
        self._pair_weights = np.zeros((len(I), N))
        for p, (i, j) in enumerate(zip(I, J)):
            self._incidence[p, i], self._incidence[p, j] = 1.0, -1.0
            self._pair_weights[p, i], self._pair_weights[p, j] = W[i, j], -W[j, i]
        for arr in (self.targets, self.control_weights, self.terminal_weights, self.interaction):
            arr.setflags(write=False)

    def __repr__(self):
        return (f"CrowdCost(N={self.n_players}, d={self.state_dim}, kernel={self.kernel!r}, "
                f"control_weights={self.control_weights.tolist()}, terminal_weights={self.terminal_weights.tolist()})")

    @property
    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.interaction, self.interaction.T))

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        return x.reshape(x.shape[:-1] + (self.n_players, self.state_dim))

    def _diffs(self, x):
        X = self._split(x)
        return X[..., :, None, :] - X[..., None, :, :]

    def running(self, t, x, a):
        A = self._split(a)
        ctrl = 0.5 * self.control_weights * np.sum(A * A, axis=-1)
        K = self.kernel.value(self._diffs(x))
        return ctrl + np.sum(self.pair_weights * K, axis=-1)

    def terminal(self, x):
        e = self._split(x) - self.targets
        return self.terminal_weights * np.sum(e * e, axis=-1)

    def running_grad(self, t, x, a):
        gK = self.kernel.grad(self._diffs(x))
        gx = np.sum(self.pair_weights[..., None] * gK, axis=-2)
        ga = self.control_weights[:, None] * self._split(a)
        return _flat(gx), _flat(ga)

    def running_full_grad(self, t, x, a, i):
        N, d = self.n_players, self.state_dim
        gK = self.kernel.grad(self._diffs(x))[..., i, :, :]
        w = self.pair_weights[i][:, None]
        dx = -w * gK
        dx[..., i, :] = np.sum(w * gK, axis=-2)
        da = np.zeros(np.shape(a)[:-1] + (N, d))
        da[..., i, :] = self.control_weights[i] * self._split(a)[..., i, :]
        return _flat(dx), _flat(da)

    def terminal_grad(self, x):
        return _flat(2.0 * self.terminal_weights[:, None] * (self._split(x) - self.targets))

    def terminal_full_grad(self, x, i):
        out = np.zeros(np.shape(x)[:-1] + (self.n_players, self.state_dim))
        out[..., i, :] = 2.0 * self.terminal_weights[i] * (self._split(x)[..., i, :] - self.targets[i])
        return _flat(out)

    def _kernel_vjp(self, D, v):
        # P_ij = W_ij H(D_ij) v_i ; s_k = sum_j P_kj - sum_i P_ik
        V = np.broadcast_to(v[..., :, None, :], D.shape)
        P = self.pair_weights[..., None] * self.kernel.hvp(D, V)
        return np.sum(P, axis=-2) - np.sum(P, axis=-3)

    def running_vjp(self, t, x, a, vx, va):
        sx = self._kernel_vjp(self._diffs(x), self._split(vx))
        sa = self.control_weights[:, None] * self._split(va)
        return _flat(sx), _flat(sa)

    def terminal_vjp(self, x, vx):
        return _flat(2.0 * self.terminal_weights[:, None] * self._split(vx))

    def running_hessian(self, t, x, a):
        N, d = self.n_players, self.state_dim
        D_ = N * 2 * d
        batch = np.shape(x)[:-1]
        H = np.zeros(batch + (N, D_, D_))
        HK = self.kernel.hessian(self._diffs(x))
        for i in range(N):
            si = slice(i * d, (i + 1) * d)
            for j in range(N):
                if j == i or self.pair_weights[i, j] == 0.0:
                    continue
                sj = slice(j * d, (j + 1) * d)
                block = self.pair_weights[i, j] * HK[..., i, j, :, :]
                H[..., i, si, si] += block
                H[..., i, sj, sj] += block
                H[..., i, si, sj] -= block
                H[..., i, sj, si] -= block
            sa = slice(N * d + i * d, N * d + (i + 1) * d)
            H[..., i, sa, sa] += self.control_weights[i] * np.eye(d)
        return H

    def terminal_hessian(self, x):
        N, d = self.n_players, self.state_dim
        H = np.zeros(np.shape(x)[:-1] + (N, N * d, N * d))
        for i in range(N):
            si = slice(i * d, (i + 1) * d)
            H[..., i, si, si] = 2.0 * self.terminal_weights[i] * np.eye(d)
        return H

    # -- potential integrands ------------------------------------------------
    # The kernel part of F only involves unordered pairs p = (i, j), i < j.
    # With u_p = W_ij y_i - W_ji y_j and Z_p(r) = D_p - (1-r) E_p (D, E the
    # pair differences of x and y), oddness of grad K gives
    #     F_K = sum_p int_0^1 grad K(Z_p(r)) . u_p dr.

    def _pair_kernel(self, x, y, rule, want_grad):
        X, Y = self._split(x), self._split(y)
        I, J = self._pairs
        if len(I) == 0:
            zero = np.zeros(X.shape[:-2])
            return (zero, np.zeros(X.shape), np.zeros(X.shape)) if want_grad else zero
        D = X[..., I, :] - X[..., J, :]
        E = Y[..., I, :] - Y[..., J, :]
        u = np.einsum("pn,...nd->...pd", self._pair_weights, Y)
        if self.kernel.is_quadratic:
            Gbar = D - 0.5 * E
            S, S1 = u, 0.5 * u
        else:
            c = 1.0 - rule.nodes
            Z = D - c.reshape((-1,) + (1,) * D.ndim) * E
            Gbar = np.tensordot(rule.weights, self.kernel.grad(Z), axes=1)
        value = np.einsum("...pd,...pd->...", Gbar, u)
        if not want_grad:
            return value
        if not self.kernel.is_quadratic:
            Hu = self.kernel.hvp(Z, np.broadcast_to(u, Z.shape))
            S = np.tensordot(rule.weights, Hu, axes=1)
            S1 = np.tensordot(rule.weights * c, Hu, axes=1)
        dx = np.einsum("pn,...pd->...nd", self._incidence, S)
        dy = np.einsum("pn,...pd->...nd", self._pair_weights, Gbar) - np.einsum("pn,...pd->...nd", self._incidence, S1)
        return value, dx, dy

    def _control_part(self, a):
        A = self._split(a)
        return 0.5 * np.einsum("n,...n->...", self.control_weights, np.einsum("...nd,...nd->...n", A, A))

    def potential_running(self, t, x, y, a, rule):
        return self._control_part(a) + self._pair_kernel(x, y, rule, False)

    def potential_running_and_grad(self, t, x, y, a, rule):
        value, dx, dy = self._pair_kernel(x, y, rule, True)
        da = self.control_weights[:, None] * self._split(a)
        return self._control_part(a) + value, _flat(dx), _flat(dy), _flat(da)

    def potential_running_vjp(self, t, x, y, a, rule, g):
        _, dx, dy, da = self.potential_running_and_grad(t, x, y, a, rule)
        g = np.asarray(g)[..., None]
        return g * dx, g * dy, g * da

    def potential_terminal(self, x, y, rule=None):
        Y = self._split(y)
        e = self._split(x) - self.targets
        per = 2.0 * np.sum(Y * e, axis=-1) - np.sum(Y * Y, axis=-1)
        return np.sum(self.terminal_weights * per, axis=-1)

    def potential_terminal_vjp(self, x, y, rule, g):
        Y = self._split(y)
        e = self._split(x) - self.targets
        c = self.terminal_weights[:, None]
        g = np.asarray(g)[..., None, None]
        return _flat(g * 2.0 * c * Y), _flat(g * 2.0 * c * (e - Y))

    def symmetric_running(self, t, x, a, rule):
        X = self._split(x)
        I, J = self._pairs
        total = self._control_part(a)
        if len(I) == 0:
            return total
        D = X[..., I, :] - X[..., J, :]
        u = np.einsum("pn,...nd->...pd", self._pair_weights, X)
        if self.kernel.is_quadratic:
            Gbar = 0.5 * D
        else:
            Z = rule.nodes.reshape((-1,) + (1,) * D.ndim) * D
            Gbar = np.tensordot(rule.weights, self.kernel.grad(Z), axes=1)
        return total + np.einsum("...pd,...pd->...", Gbar, u)

    def symmetric_terminal(self, x, rule=None):
        X = self._split(x)
        per = np.sum(X * X, axis=-1) - 2.0 * np.sum(X * self.targets, axis=-1)
        return np.sum(self.terminal_weights * per, axis=-1)

    def symmetry_violation(self, t=None, x=None, a=None, tol=0.0):
        q = self.interaction
        bad = np.argwhere(np.abs(q - q.T) > tol)
        if len(bad):
            i, j = bad[0]
            return int(i), int(j)
        return None


class CallbackCost(Cost):
    """Costs supplied as vectorised callables.

    ``f(t, x, a) -> (..., N)``, ``f_grad -> (..., N, D)``, ``f_hess -> (..., N, D, D)``
    with ``D = N(d+k)`` ordered as ``(x_flat, a_flat)``; similarly ``g``,
    ``g_grad -> (..., N, N*d)``, ``g_hess -> (..., N, N*d, N*d)``.
    """

    def __init__(self, n_players: int, state_dim: int, action_dim: int,
                 f: Callable, f_grad: Callable, f_hess: Callable,
                 g: Callable, g_grad: Callable, g_hess: Callable):
        self.n_players, self.state_dim, self.action_dim = n_players, state_dim, action_dim
        self.f, self.f_grad, self.f_hess = f, f_grad, f_hess
        self.g, self.g_grad, self.g_hess = g, g_grad, g_hess

    @classmethod
    def zero(cls, n_players: int, state_dim: int, action_dim: int) -> "CallbackCost":
        N, d, k = n_players, state_dim, action_dim
        D = N * (d + k)

        def zeros(*shape):
            return lambda *args: np.zeros(np.shape(args[-1])[:-1] + shape)

        return cls(N, d, k, zeros(N), zeros(N, D), zeros(N, D, D),
                   zeros(N), zeros(N, N * d), zeros(N, N * d, N * d))

    def running(self, t, x, a):
        return np.asarray(self.f(t, x, a), dtype=float)

    def terminal(self, x):
        return np.asarray(self.g(x), dtype=float)

    def running_full_grad(self, t, x, a, i):
        G = np.asarray(self.f_grad(t, x, a), dtype=float)[..., i, :]
        n = self.n_players * self.state_dim
        return G[..., :n], G[..., n:]

    def terminal_full_grad(self, x, i):
        return np.asarray(self.g_grad(x), dtype=float)[..., i, :]

    def running_grad(self, t, x, a):
        G = np.asarray(self.f_grad(t, x, a), dtype=float)
        N, d, k = self.n_players, self.state_dim, self.action_dim
        gx = np.zeros(np.shape(x))
        ga = np.zeros(np.shape(a))
        for i in range(N):
            gx[..., i * d:(i + 1) * d] = G[..., i, i * d:(i + 1) * d]
            ga[..., i * k:(i + 1) * k] = G[..., i, N * d + i * k:N * d + (i + 1) * k]
        return gx, ga

    def terminal_grad(self, x):
        G = np.asarray(self.g_grad(x), dtype=float)
        d = self.state_dim
        gx = np.zeros(np.shape(x))
        for i in range(self.n_players):
            gx[..., i * d:(i + 1) * d] = G[..., i, i * d:(i + 1) * d]
        return gx

    def running_hessian(self, t, x, a):
        return np.asarray(self.f_hess(t, x, a), dtype=float)

    def terminal_hessian(self, x):
        return np.asarray(self.g_hess(x), dtype=float)


def crowd_running_cost(cost: CrowdCost, i: int, x, a):
    """Player ``i``'s running cost with its partials at one joint state.

    Returns ``(f_i, d_{x_i} f_i, d_{a_i} f_i, cross)`` where ``cross[j]`` is
    the ``d x d`` block ``d^2 f_i / dx_i dx_j`` (zero for ``j == i``).
    """
    N, d = cost.n_players, cost.state_dim
    if not 0 <= i < N:
        raise IndexError(f"player index {i} out of range for N={N}")
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    value = float(cost.running(0.0, x, a)[i])
    gx, ga = cost.running_grad(0.0, x, a)
    H = cost.running_hessian(0.0, x, a)[i]
    cross = np.zeros((N, d, d))
    for j in range(N):
        if j != i:
            cross[j] = H[i * d:(i + 1) * d, j * d:(j + 1) * d]
    return value, gx[i * d:(i + 1) * d], ga[i * d:(i + 1) * d], cross


def _vector(v, n, name):
    arr = np.array(v, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must have length {n}")
    return arr


def _flat(X):
    return X.reshape(X.shape[:-2] + (X.shape[-2] * X.shape[-1],))
