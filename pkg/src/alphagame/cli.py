"""Command-line entry point: ``alphagame <command> [--preset NAME | --config FILE] --out DIR``.

Exit codes: 0 success, 2 usage error, 3 unknown preset, 4 malformed config,
5 unwritable output path, 6 training failure. ``ALPHAGAME_THREADS`` caps the
BLAS thread pool.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace


from .bounds import Exponential, GraphSpec, Power, game_alpha, read_edge_list, zeta_asymptotic_bound, zeta_exact
from .config import ConfigError, emit_config, read_config
from .nn import load_checkpoint, save_checkpoint
from .presets import PRESETS, UnknownPreset, get_preset
from .sde import SimulationError, sample_noise, simulate, zero_policy
from .svg import mean_trajectories, write_svg
from .train import TrainingError, config_dict, train
from .verify import exploitability, potential_inequality_audit

EXIT_OK = 0
EXIT_UNKNOWN_PRESET = 3
EXIT_BAD_CONFIG = 4
EXIT_UNWRITABLE = 5
EXIT_TRAINING = 6
EVAL_STREAM = 10**9
THREADS_ENV = "ALPHAGAME_THREADS"


class Unwritable(OSError):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alphagame", description="Potential-based solver for distributed games.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, game=True):
        if game:
            src = sp.add_mutually_exclusive_group(required=True)
            src.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
            src.add_argument("--config", help="game config file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--iterations", type=int)
        sp.add_argument("--eval-batch", type=int)
        sp.add_argument("--quadrature-nodes", type=int)
        sp.add_argument("--fixed-noise", action="store_true", help="reuse one noise batch for every iteration")
        sp.add_argument("--checkpoint", help="parameter checkpoint to start from / evaluate")

    common(sub.add_parser("train", help="train a policy; writes params.bin and trainlog.jsonl"))
    common(sub.add_parser("simulate", help="simulate a policy; writes paths.csv, mean_trajectory.csv, "
                                           "trajectories.svg"))
    sp = sub.add_parser("audit", help="potential inequality audit (and optional exploitability)")
    common(sp)
    sp.add_argument("--deviations", type=int, default=100)
    sp.add_argument("--exploitability", type=int, metavar="BUDGET", default=0,
                    help="also train best responses for BUDGET iterations")
    common(sub.add_parser("bounds", help="alpha bound report"))
    common(sub.add_parser("emit-config", help="write the game as a config file"))
    sp = sub.add_parser("zeta", help="interaction-asymmetry bound on a graph")
    common(sp, game=False)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--graph", help="edge list file")
    g.add_argument("--tree", metavar="D,L", help="complete D-ary tree with L levels below the root")
    sp.add_argument("--decay", required=True, help="exp:RHO or power:BETA")
    sp.add_argument("--amplitude", type=float, default=1.0)
    sp.add_argument("--degree", type=int, help="branching factor below the maximum degree (checked)")
    return p


def _load_game(args):
    if args.preset is not None:
        preset = get_preset(args.preset)
        game, config, name = preset.game, preset.config, preset.name
    else:
        game, config = read_config(args.config)
        name = os.path.splitext(os.path.basename(args.config))[0]
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.iterations is not None:
        kw["iterations"] = args.iterations
    if args.eval_batch is not None:
        kw["eval_batch"] = args.eval_batch
    if args.quadrature_nodes is not None:
        kw["quadrature_nodes"] = args.quadrature_nodes
    if args.fixed_noise:
        kw["resample"] = "fixed"
    try:
        config = replace(config, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return name, game, config


def _outdir(path) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise Unwritable(f"cannot create {path}: {exc}") from None
    probe = os.path.join(path, ".write-test")
    try:
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise Unwritable(f"cannot write to {path}: {exc}") from None
    return path


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _params(args, game, config):
    if args.checkpoint:
        try:
            params, _ = load_checkpoint(args.checkpoint)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load checkpoint: {exc}") from None
        if (params.network.n_players, params.network.state_dim) != (game.n_players, game.state_dim):
            raise ConfigError("checkpoint does not match the game dimensions")
        return params
    return None


def _cmd_train(args, name, game, config, out):
    params, log = train(game, config, params=_params(args, game, config))
    save_checkpoint(os.path.join(out, "params.bin"), params, {"preset": name, "iterations": config.iterations})
    log.to_jsonl(os.path.join(out, "trainlog.jsonl"))
    phi = log.column("phi")
    summary = {"name": name, "config": config_dict(config), "initial_phi": float(phi[0]) if len(phi) else None,
               "final_phi": float(phi[-1]) if len(phi) else None, "final_lr": float(log.column("lr")[-1])
               if len(phi) else None}
    _write_json(os.path.join(out, "summary.json"), summary)
    print(f"{name}: phi {summary['initial_phi']} -> {summary['final_phi']} after {len(phi)} iterations")


def _policy(args, game, config):
    params = _params(args, game, config)
    return params.policy() if params is not None else zero_policy(game)


def write_mean_csv(path, paths, n_players):
    means = mean_trajectories(paths, n_players)
    P1, N, d = means.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t"] + [f"x{i + 1}_{c + 1}" for i in range(N) for c in range(d)])
        for ll in range(P1):
            w.writerow([ll, repr(float(paths.grid.nodes[ll]))] + [repr(float(v)) for v in means[ll].ravel()])


def _cmd_simulate(args, name, game, config, out):
    noise = sample_noise(game, config.grid, config.eval_batch, config.seed, stream=EVAL_STREAM)
    paths = simulate(game, _policy(args, game, config), noise)
    paths.to_csv(os.path.join(out, "paths.csv"))
    write_mean_csv(os.path.join(out, "mean_trajectory.csv"), paths, game.n_players)
    targets = getattr(game.cost, "targets", None)
    write_svg(os.path.join(out, "trajectories.svg"), paths, game.n_players, targets, title=name)
    print(f"{name}: wrote {paths.M} paths to {out}")


def _cmd_audit(args, name, game, config, out):
    noise = sample_noise(game, config.grid, config.eval_batch, config.seed, stream=EVAL_STREAM)
    report = potential_inequality_audit(game, _policy(args, game, config), args.deviations, noise, config.rule,
                                        seed=config.seed)
    result = {"potential_audit": report.as_dict()}
    if args.exploitability > 0:
        params = _params(args, game, config)
        if params is None:
            params = config.network(game).init(config.seed)
        ex = exploitability(game, params, args.exploitability, noise=noise, config=config)
        result["exploitability"] = json.loads(ex.to_json())
    _write_json(os.path.join(out, "audit.json"), result)
    print(json.dumps(result["potential_audit"], sort_keys=True))


def _cmd_bounds(args, name, game, config, out):
    report = game_alpha(game, config.grid)
    with open(os.path.join(out, "alpha.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json(indent=2) + "\n")
    print(f"{name}: alpha bound {report.bound!r}")


def _cmd_emit(args, name, game, config, out):
    path = os.path.join(out, f"{name}.ini")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(emit_config(game, config))
    print(path)


def _decay(text):
    kind, _, val = text.partition(":")
    try:
        v = float(val)
        if kind == "exp":
            return Exponential(v)
        if kind == "power":
            return Power(v)
    except ValueError:
        pass
    raise ConfigError(f"--decay must be exp:RHO or power:BETA, got {text!r}")


def complete_tree(d: int, levels: int) -> tuple[int, list]:
    """Complete ``d``-ary tree in breadth-first numbering."""
    n = sum(d**ell for ell in range(levels + 1))
    return n, [((v - 1) // d, v) for v in range(1, n)]


def _cmd_zeta(args, out):
    degree = args.degree
    if args.graph:
        try:
            n, edges = read_edge_list(args.graph)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    else:
        try:
            d, L = (int(s) for s in args.tree.split(","))
        except ValueError:
            raise ConfigError("--tree must be D,L") from None
        n, edges = complete_tree(d, L)
    try:
        graph = GraphSpec(n, edges, _decay(args.decay), args.amplitude, degree)
        zb = zeta_asymptotic_bound(graph)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    q = graph.interaction_table(seed=args.seed or 0)
    result = {"n_vertices": n, "bound": zb.as_dict(), "zeta_exact_sample": zeta_exact(q)}
    _write_json(os.path.join(out, "zeta.json"), result)
    print(json.dumps(result, sort_keys=True))


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(raw))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    limiter = _thread_limit()
    try:
        out = _outdir(args.out)
        if args.command == "zeta":
            _cmd_zeta(args, out)
            return EXIT_OK
        name, game, config = _load_game(args)
        cmd = {"train": _cmd_train, "simulate": _cmd_simulate, "audit": _cmd_audit, "bounds": _cmd_bounds,
               "emit-config": _cmd_emit}[args.command]
        cmd(args, name, game, config, out)
        return EXIT_OK
    except UnknownPreset as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_UNKNOWN_PRESET
    except ConfigError as exc:
        print(f"error: malformed config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except Unwritable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNWRITABLE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNWRITABLE
    except (TrainingError, SimulationError, FloatingPointError) as exc:
        print(f"error: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
