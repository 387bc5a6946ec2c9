"""Plain-text game configuration (INI style) for constant-coefficient crowd games.

Layout::

    [game]      players, state_dim, action_dim, noise_dim, jump_sources, control_cap
    [dynamics]  drift, diffusion, jump_loadings, jump_intensities, initial_state
    [cost]      control_weights, terminal_weights, targets, interaction
    [kernel]    type = quadratic | gaussian | smoothed_indicator, plus its parameters
    [train]     every TrainConfig field

Arrays are written row-major with ``|`` between players, ``;`` between rows
and spaces between entries; the separators are cosmetic on input, where the
shape comes from the ``[game]`` dimensions. Floats use ``repr`` so that
emit -> parse -> emit reproduces the same bytes.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import fields

import numpy as np

from .costs import CrowdCost
from .game import GameSpec
from .kernels import Gaussian, Kernel, Quadratic, SmoothedIndicator
from .train import TrainConfig


class ConfigError(ValueError):
    pass


def _num(x) -> str:
    x = float(x)
    return repr(0.0) if x == 0 else repr(x)


def _row(v) -> str:
    return " ".join(_num(x) for x in np.ravel(v))


def _matrix(a) -> str:
    a = np.atleast_2d(a)
    return " ; ".join(_row(r) for r in a)


def _blocks(a) -> str:
    return " | ".join(_matrix(b) if b.size else "" for b in np.asarray(a, dtype=float))


def _parse_array(text: str, shape, key: str) -> np.ndarray:
    tokens = text.replace("|", " ").replace(";", " ").split()
    try:
        vals = np.array([float(t) for t in tokens], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    if vals.size != int(np.prod(shape)):
        raise ConfigError(f"{key}: expected {int(np.prod(shape))} numbers for shape {tuple(shape)}, got {vals.size}")
    return vals.reshape(shape)


def _kernel_items(kernel: Kernel) -> dict:
    if isinstance(kernel, Quadratic):
        return {"type": "quadratic"}
    if isinstance(kernel, Gaussian):
        return {"type": "gaussian", "amplitude": _num(kernel.amplitude), "rate": _num(kernel.rate)}
    if isinstance(kernel, SmoothedIndicator):
        return {"type": "smoothed_indicator", "radius": _num(kernel.radius), "width": _num(kernel.width),
                "dim": str(kernel.dim), "table_size": str(kernel.table_size)}
    raise ConfigError(f"kernel {type(kernel).__name__} has no config form")


def _kernel_from(sec) -> Kernel:
    kind = sec.get("type", "").strip()
    try:
        if kind == "quadratic":
            return Quadratic()
        if kind == "gaussian":
            return Gaussian(float(sec["amplitude"]), float(sec["rate"]))
        if kind == "smoothed_indicator":
            return SmoothedIndicator(float(sec["radius"]), float(sec["width"]), int(sec.get("dim", "2")),
                                     int(sec.get("table_size", "401")))
    except KeyError as exc:
        raise ConfigError(f"kernel: missing key {exc}") from None
    raise ConfigError(f"kernel: unknown type {kind!r}")


def _train_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return _num(value)
    return str(value)


def emit_config(game: GameSpec, config: TrainConfig) -> str:
    """Serialise a constant-coefficient crowd game and its training settings."""
    cost = game.cost
    if not isinstance(cost, CrowdCost):
        raise ConfigError("only crowd costs can be written to a config file")
    coefs = (game.drift, game.diffusion, game.jump_loadings, game.initial_state)
    if any(callable(c) for c in coefs):
        raise ConfigError("time-dependent coefficients and initial samplers have no config form")
    cp = configparser.ConfigParser(interpolation=None)
    cp["game"] = {
        "players": str(game.n_players), "state_dim": str(game.state_dim), "action_dim": str(game.action_dim),
        "noise_dim": str(game.noise_dim), "jump_sources": str(game.n_jumps),
        "control_cap": _num(game.control_cap),
    }
    cp["dynamics"] = {
        "drift": _blocks(game.drift),
        "diffusion": _blocks(game.diffusion),
        "jump_loadings": _blocks(game.jump_loadings),
        "jump_intensities": _row(game.jump_intensities),
        "initial_state": _matrix(game.initial_state),
    }
    cp["cost"] = {
        "control_weights": _row(cost.control_weights),
        "terminal_weights": _row(cost.terminal_weights),
        "targets": _matrix(cost.targets),
        "interaction": _matrix(cost.interaction),
    }
    cp["kernel"] = _kernel_items(cost.kernel)
    cp["train"] = {f.name: _train_value(getattr(config, f.name)) for f in fields(TrainConfig)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _int(sec, key):
    try:
        return int(sec[key])
    except KeyError:
        raise ConfigError(f"missing key {sec.name}.{key}") from None
    except ValueError:
        raise ConfigError(f"{sec.name}.{key} must be an integer") from None


def _train_from(sec) -> TrainConfig:
    kw = {}
    known = {f.name: f for f in fields(TrainConfig)}
    defaults = TrainConfig()
    for key, raw in sec.items():
        if key not in known:
            raise ConfigError(f"train: unknown key {key!r}")
        default = getattr(defaults, key)
        raw = raw.strip()
        try:
            if raw == "none":
                kw[key] = None
            elif key == "clip_norm":
                kw[key] = float(raw)
            elif isinstance(default, bool):
                kw[key] = raw.lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                kw[key] = int(raw)
            elif isinstance(default, float):
                kw[key] = float(raw)
            else:
                kw[key] = raw
        except ValueError:
            raise ConfigError(f"train.{key}: cannot parse {raw!r}") from None
    try:
        return TrainConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train: {exc}") from None


def parse_config(text: str) -> tuple[GameSpec, TrainConfig]:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for name in ("game", "dynamics", "cost", "kernel"):
        if name not in cp:
            raise ConfigError(f"missing section [{name}]")
    g = cp["game"]
    N, d, k = _int(g, "players"), _int(g, "state_dim"), _int(g, "action_dim")
    n, m = _int(g, "noise_dim"), _int(g, "jump_sources")
    if min(N, d, k) < 1 or min(n, m) < 0:
        raise ConfigError("game dimensions must be positive")
    dyn, cost = cp["dynamics"], cp["cost"]

    def arr(sec, key, shape):
        if key not in sec:
            raise ConfigError(f"missing key {sec.name}.{key}")
        return _parse_array(sec[key], shape, f"{sec.name}.{key}")

    try:
        crowd = CrowdCost(arr(cost, "control_weights", (N,)), _kernel_from(cp["kernel"]),
                          arr(cost, "interaction", (N, N)), arr(cost, "terminal_weights", (N,)),
                          arr(cost, "targets", (N, d)), action_dim=k)
        game = GameSpec(arr(dyn, "drift", (N, d, k)), arr(dyn, "diffusion", (N, d, n)),
                        arr(dyn, "jump_loadings", (N, m, d)), arr(dyn, "jump_intensities", (m,)),
                        arr(dyn, "initial_state", (N, d)), crowd, float(g.get("control_cap", "1.0")))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    config = _train_from(cp["train"]) if "train" in cp else TrainConfig()
    return game, config


def read_config(path) -> tuple[GameSpec, TrainConfig]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text)
