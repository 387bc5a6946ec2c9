"""Residual feedforward policy network, Adam, and parameter checkpoints."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad

_MAGIC = b"ALPHAGAME-PARAMS\x01"


@dataclass(frozen=True)
class PolicyNetwork:
    """Architecture of the policy ``(t, X, Y) -> joint action``.

    The input ``concat(t/T, X, Y)`` of size ``2*N*d + 1`` goes through an
    affine input layer to width ``2*N*d + 1 + extra_width``, then ``blocks``
    residual blocks ``h -> relu(L1(relu(L2 h))) + h`` and a final affine
    output layer of size ``N*k``.
    """

    n_players: int
    state_dim: int
    action_dim: int
    horizon: float = 1.0
    blocks: int = 4
    extra_width: int = 10
    output_size: int | None = None

    @property
    def input_dim(self) -> int:
        return 2 * self.n_players * self.state_dim + 1

    @property
    def width(self) -> int:
        return self.input_dim + self.extra_width

    @property
    def output_dim(self) -> int:
        return self.output_size if self.output_size is not None else self.n_players * self.action_dim

    def shapes(self) -> list[tuple[int, ...]]:
        w = self.width
        out = [(self.input_dim, w), (w,)]
        for _ in range(self.blocks):
            out += [(w, w), (w,), (w, w), (w,)]  # L2 then L1
        out += [(w, self.output_dim), (self.output_dim,)]
        return out

    @property
    def n_params(self) -> int:
        return int(sum(np.prod(s) for s in self.shapes()))

    def init(self, seed: int = 0, output_scale: float = 0.0) -> "PolicyParams":
        """He-uniform weights, zero biases; the output layer is zero unless ``output_scale > 0``."""
        rng = np.random.default_rng(seed)
        arrays = []
        shapes = self.shapes()
        for k, s in enumerate(shapes):
            if len(s) == 1:
                arrays.append(np.zeros(s))
                continue
            limit = np.sqrt(6.0 / s[0])
            if k == len(shapes) - 2:
                arrays.append(output_scale * rng.uniform(-limit, limit, size=s))
            else:
                arrays.append(rng.uniform(-limit, limit, size=s))
        return PolicyParams(self, arrays)

    def forward(self, layers, t: float, x, y):
        """Evaluate on a batch; ``layers`` may be arrays or tape tensors."""
        x_val = ad.value_of(x)
        batch = x_val.shape[:-1]
        tcol = np.full(batch + (1,), t / self.horizon)
        h = ad.concat([tcol, x, y], axis=-1)
        h = h @ layers[0] + layers[1]
        for b in range(self.blocks):
            W2, b2, W1, b1 = layers[2 + 4 * b: 6 + 4 * b]
            inner = ad.relu(h @ W2 + b2)
            h = ad.relu(inner @ W1 + b1) + h
        return h @ layers[-2] + layers[-1]


@dataclass
class PolicyParams:
    network: PolicyNetwork
    arrays: list = field(default_factory=list)

    def __post_init__(self):
        shapes = self.network.shapes()
        if len(self.arrays) != len(shapes):
            raise ValueError("parameter list does not match the architecture")
        self.arrays = [np.array(a, dtype=float).reshape(s) for a, s in zip(self.arrays, shapes)]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    @classmethod
    def from_flat(cls, network: PolicyNetwork, vec) -> "PolicyParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (network.n_params,):
            raise ValueError(f"expected {network.n_params} parameters, got {vec.shape}")
        arrays, pos = [], 0
        for s in network.shapes():
            n = int(np.prod(s))
            arrays.append(vec[pos:pos + n].reshape(s))
            pos += n
        return cls(network, arrays)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays)

    def policy(self):
        """Untracked callable ``(t, x, y) -> actions`` for simulation."""
        if not self.is_finite():
            raise FloatingPointError("policy parameters are not finite")
        net, arrays = self.network, self.arrays
        return lambda t, x, y: net.forward(arrays, t, x, y)

    def on_tape(self, tape: ad.Tape) -> list:
        if not self.is_finite():
            raise FloatingPointError("policy parameters are not finite")
        return [tape.leaf(a, name=f"theta{k}") for k, a in enumerate(self.arrays)]


def policy_forward(params: PolicyParams, t: float, x, y):
    if not params.is_finite():
        raise FloatingPointError("policy parameters are not finite")
    return params.network.forward(params.arrays, t, x, y)


# -- Adam --------------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, lr, **kw)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState):
    """One bias-corrected Adam update on flat vectors. Returns ``(params, state)``."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, step=step)


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(path, params: PolicyParams, meta: dict | None = None):
    net = params.network
    header = {
        "network": {"n_players": net.n_players, "state_dim": net.state_dim, "action_dim": net.action_dim,
                    "horizon": net.horizon, "blocks": net.blocks, "extra_width": net.extra_width,
                    "output_size": net.output_size},
        "n_params": net.n_params,
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(params.flat().astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[PolicyParams, dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(_MAGIC):
        raise ValueError(f"{path} is not a parameter checkpoint")
    pos = len(_MAGIC)
    (n,) = struct.unpack("<I", data[pos:pos + 4])
    header = json.loads(data[pos + 4:pos + 4 + n])
    net = PolicyNetwork(**header["network"])
    vec = np.frombuffer(data[pos + 4 + n:], dtype="<f8").astype(float)
    return PolicyParams.from_flat(net, vec), header["meta"]
