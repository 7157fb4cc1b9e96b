"""Command-line entry point: reproducible experiments, CSV/SVG emission.

Subcommands: simulate (trajectory ensembles under a chosen controller),
train (soft actor-critic on the episodic environment), quantum
(quantum-jump episodes), serve (TCP environment server). Every command
honors --seed end to end. Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import ensemble, metrics, sac
from .control import wrap_phase
from .dynamics import BathParams, NumericalBlowupError
from .env import ConfigError, EpisodeConfig, OscillatorEnv
from .quantum import (CutoffTooSmallError, QuantumEpisodeConfig,
                      TimestepTooLargeError, quantum_episode)
from .rewards import RewardSpec
from .sac import SACHyper, TrainingDivergedError, save_checkpoint
from .server import EnvServer
from .topology import InvalidNetworkError, OscillatorNetwork, \
    decode_pruefer, load_network

log = logging.getLogger("domino")


def _setup_logging():
    level = os.environ.get("DOMINO_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s")


# ---------------------------------------------------------------------------
# config assembly


def add_config_flags(p):
    p.add_argument("--config", help="episode config JSON file")
    p.add_argument("--n", type=int, help="independent oscillators (no edges)")
    p.add_argument("--pruefer", help="comma-separated Pruefer sequence; "
                                     "pair with --n-nodes")
    p.add_argument("--n-nodes", type=int, help="node count for --pruefer")
    p.add_argument("--network", help="network description JSON file")
    p.add_argument("--coupling", type=float, help="edge coupling strength")
    p.add_argument("--eta", type=float, help="kick strength")
    p.add_argument("--gamma", type=float, help="damping rate")
    p.add_argument("--n-th", type=float, help="thermal occupancy")
    p.add_argument("--sigma-m", type=float, help="measurement noise std")
    p.add_argument("--base-freq", type=float, help="base frequency")
    p.add_argument("--freq-spread", type=float,
                   help="per-episode frequency sampling spread")
    p.add_argument("--kick-interval", type=float)
    p.add_argument("--horizon", type=int, help="kicks per episode")
    p.add_argument("--dt", type=float, help="integrator sub-step")
    p.add_argument("--reward-kind",
                   choices=("inverse", "gaussian", "difference"))
    p.add_argument("--mu", type=float, help="target exponent (occupancy 10^mu)")
    p.add_argument("--sigma-r", type=float, help="reward relaxation width")
    p.add_argument("--reward-scale", type=float)
    p.add_argument("--obs-normalization", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out", help="output directory")


def build_config(args) -> EpisodeConfig:
    if args.config:
        data = EpisodeConfig.load(args.config).to_dict()
    else:
        if args.network:
            net = load_network(args.network)
        elif args.pruefer is not None:
            if not args.n_nodes:
                raise ConfigError("--pruefer requires --n-nodes")
            seq = [int(s) for s in args.pruefer.split(",") if s.strip()]
            net = OscillatorNetwork(
                n_nodes=args.n_nodes,
                edges=tuple(decode_pruefer(seq, args.n_nodes)),
                coupling=args.coupling if args.coupling is not None else 0.5)
        else:
            net = OscillatorNetwork(n_nodes=args.n or 1)
        data = EpisodeConfig(network=net).to_dict()

    if args.coupling is not None and data["network"]["edges"]:
        data["network"]["coupling"] = args.coupling
    for flag, key in (("eta", "eta"), ("base_freq", "base_freq"),
                      ("freq_spread", "freq_spread"),
                      ("kick_interval", "kick_interval"),
                      ("horizon", "horizon"), ("dt", "dt"),
                      ("obs_normalization", "obs_normalization")):
        val = getattr(args, flag)
        if val is not None:
            data[key] = val
    for flag in ("gamma", "n_th", "sigma_m"):
        val = getattr(args, flag)
        if val is not None:
            data["bath"][flag] = val
    if args.reward_kind is not None:
        data["reward"]["kind"] = args.reward_kind
    if args.mu is not None:
        data["reward"]["mu"] = args.mu
    if args.sigma_r is not None:
        data["reward"]["sigma"] = args.sigma_r
    if args.reward_scale is not None:
        data["reward"]["scale"] = args.reward_scale
    return EpisodeConfig.from_dict(data)


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# CSV / SVG emission


def write_trajectory_csv(path, times, quads, energies):
    n = energies.shape[1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        header = ["t"]
        for j in range(1, n + 1):
            header += [f"q_{j}", f"p_{j}"]
        header += [f"n_{j}" for j in range(1, n + 1)]
        w.writerow(header)
        for k in range(times.size):
            row = [repr(float(times[k]))]
            row += [repr(float(x)) for x in quads[k]]
            row += [repr(float(x)) for x in energies[k]]
            w.writerow(row)


def read_trajectory_csv(path):
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        rows = np.array([[float(x) for x in row] for row in r])
    return header, rows


def svg_line_plot(path, x, series, title="", xlabel="", ylabel="",
                  logy=False, width=640, height=400):
    """Minimal SVG polyline plot; data inspection only, no styling depth."""
    margin = 56
    xs = np.asarray(x, dtype=float)
    all_y = np.concatenate([np.asarray(y, dtype=float) for y in
                            series.values()])
    if logy:
        all_y = all_y[all_y > 0]
        lo, hi = np.log10(all_y.min()), np.log10(all_y.max())
    else:
        lo, hi = all_y.min(), all_y.max()
    if hi - lo < 1e-300:
        hi = lo + 1.0
    x0, x1 = xs.min(), xs.max() if xs.max() > xs.min() else xs.min() + 1.0

    def sx(v):
        return margin + (v - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(v):
        if logy:
            v = np.log10(max(v, 10 ** lo))
        return height - margin - (v - lo) / (hi - lo) * (height - 2 * margin)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
              "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2}" y="20" text-anchor="middle" '
             f'font-size="14">{title}</text>',
             f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" '
             f'font-size="12">{xlabel}</text>',
             f'<text x="14" y="{height / 2}" text-anchor="middle" '
             f'font-size="12" transform="rotate(-90 14 {height / 2})">'
             f'{ylabel}</text>',
             f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" '
             f'height="{height - 2 * margin}" fill="none" stroke="#888"/>']
    for i, (label, y) in enumerate(series.items()):
        pts = " ".join(f"{sx(float(a)):.2f},{sy(float(b)):.2f}"
                       for a, b in zip(xs, y))
        c = colors[i % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{c}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{width - margin + 4}" '
                     f'y="{margin + 14 * (i + 1)}" font-size="11" '
                     f'fill="{c}">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    config = build_config(args)
    out = _outdir(args)
    kwargs = {}
    if args.controller == "trained":
        kwargs["checkpoint"] = args.checkpoint
    if args.controller == "fixed-phase":
        kwargs["phi"] = float(wrap_phase(args.phi))
    bundle = ensemble.run_trajectories_sharded(
        config, args.controller, args.trajectories, args.seed,
        workers=args.workers, controller_kwargs=kwargs,
        record_quadratures=True)

    for m in range(args.trajectories):
        write_trajectory_csv(out / f"traj_{m:04d}.csv", bundle.times,
                             bundle.quadratures[m], bundle.energies[m])

    probe_times = ([float(s) for s in args.probe_times.split(",")]
                   if args.probe_times else [float(bundle.times[-1])])
    rows = []
    n_nodes = config.network.n_nodes
    for pt in probe_times:
        k = int(np.argmin(np.abs(bundle.times - pt)))
        for j in range(n_nodes):
            rows.append((f"n@t={bundle.times[k]:.6g}", j + 1,
                         metrics.iqr(bundle.energies[:, k, j]),
                         args.trajectories))
    for j in range(n_nodes):
        crossings = []
        for m in range(args.trajectories):
            t = metrics.time_to_threshold(
                zip(bundle.times, bundle.energies[m, :, j]),
                threshold=args.threshold)
            if t is not None:
                crossings.append(t)
        if crossings:
            rows.append((f"time_to_n<={args.threshold:g}", j + 1,
                         metrics.iqr(crossings), len(crossings)))
    metrics.write_summary_csv(out / "summary.csv", rows)

    if args.plot:
        med = np.median(bundle.energies, axis=0)
        svg_line_plot(out / "energies.svg", bundle.times,
                      {f"n_{j + 1}": med[:, j] for j in range(n_nodes)},
                      title="median oscillator energies", xlabel="t",
                      ylabel="n", logy=True)
    print(f"wrote {args.trajectories} trajectories + summary.csv to {out}")
    return 0


def write_learning_curve_csv(path, returns, q_loss, pi_loss, block=100):
    blocks = metrics.block_mean_rewards(returns, block)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["episode", "return", "R_tilde_100", "q_loss", "pi_loss"])
        for ep in range(len(returns)):
            b = (ep + 1) // block
            rt = repr(float(blocks[b - 1])) \
                if (ep + 1) % block == 0 and b <= len(blocks) else ""
            w.writerow([ep + 1, repr(float(returns[ep])), rt,
                        repr(float(q_loss[ep])), repr(float(pi_loss[ep]))])


def read_learning_curve_csv(path):
    rows = []
    with open(path, newline="") as f:
        r = csv.reader(f)
        next(r)
        for ep, ret, rt, ql, pl in r:
            rows.append((int(ep), float(ret),
                         float(rt) if rt else np.nan, float(ql), float(pl)))
    return rows


def cmd_train(args):
    config = build_config(args)
    out = _outdir(args)
    env = OscillatorEnv(config, seed=args.seed)
    hyper = SACHyper.for_network(config.network.n_nodes)
    if args.learning_starts is not None:
        hyper.learning_starts = args.learning_starts
    env_desc = config.to_dict()
    try:
        result = sac.train(env, hyper, episodes=args.episodes,
                           seed=args.seed, eval_every=args.eval_every)
    except TrainingDivergedError as e:
        if e.trainer is not None:
            save_checkpoint(out / "checkpoint_diverged.npz", e.trainer,
                            extra={"env": env_desc, "error": str(e)})
            print(f"training diverged; state saved to "
                  f"{out / 'checkpoint_diverged.npz'}", file=sys.stderr)
        raise
    save_checkpoint(out / "checkpoint_final.npz", result.trainer,
                    extra={"env": env_desc})
    save_checkpoint(out / "checkpoint_best.npz",
                    result.history["best_policy"], hyper=hyper,
                    extra={"env": env_desc,
                           "best_eval": result.history["best_eval"]})
    write_learning_curve_csv(out / "learning_curve.csv",
                             result.curve.returns,
                             result.history["q_loss"],
                             result.history["pi_loss"])
    blocks = result.curve.block_means
    print(f"trained {args.episodes} episodes; R~ blocks: "
          f"{np.round(blocks, 4).tolist()}; outputs in {out}")
    return 0


def cmd_quantum(args):
    out = _outdir(args)
    qconf = QuantumEpisodeConfig(
        n0=args.n0, cutoff=args.cutoff, omega=args.base_freq or 1.0,
        gamma=args.gamma if args.gamma is not None else 1e-6,
        n_th=args.n_th if args.n_th is not None else 1e4,
        eta=(0.0 if args.controller == "none" else
             (args.eta if args.eta is not None else 0.5)),
        horizon=args.horizon or 50,
        dt=args.dt, kick_interval=args.kick_interval,
        mu=args.mu if args.mu is not None else -2.0,
        sigma=args.sigma_r if args.sigma_r is not None else 1.0)
    controller = None
    if args.controller not in (None, "none"):
        # quantum episodes expose second moments, not quadratures, so the
        # analytic controller is not offered here
        rng = np.random.default_rng([args.seed, 4])
        econf = EpisodeConfig.independent(
            1, eta=qconf.eta,
            bath=BathParams(gamma=qconf.gamma, n_th=qconf.n_th),
            obs_normalization=1.0, horizon=qconf.horizon)
        controller = ensemble.make_controller(
            args.controller, econf, rng, checkpoint=args.checkpoint,
            phi=args.phi)

    finals = []
    for m in range(args.trajectories):
        traj = quantum_episode(qconf, controller, seed=args.seed + m)
        finals.append(traj.n_expect[-1])
        with open(out / f"qtraj_{m:04d}.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "n_expect", "q2", "p2", "qp", "jumps_so_far"])
            for k in range(traj.times.size):
                w.writerow([repr(float(traj.times[k])),
                            repr(float(traj.n_expect[k])),
                            repr(float(traj.q2[k])),
                            repr(float(traj.p2[k])),
                            repr(float(traj.qp[k])),
                            int(traj.jumps[k])])
    metrics.write_summary_csv(
        out / "summary.csv",
        [("final_n_expect", 1, metrics.iqr(finals), len(finals))])
    print(f"wrote {args.trajectories} quantum trajectories to {out}; "
          f"final <n> median {np.median(finals):.4g}")
    return 0


def cmd_serve(args):
    config = build_config(args)
    server = EnvServer(config, host=args.host, port=args.port,
                       seed=args.seed)
    host, port = server.address
    print(f"serving environment on {host}:{port} "
          f"(obs_len={2 * config.network.n_nodes})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(
        prog="domino",
        description="Feedback cooling of oscillator tree networks")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="run trajectory ensembles")
    add_config_flags(ps)
    ps.add_argument("--controller", default="analytic",
                    choices=("analytic", "trained", "random", "fixed-phase"))
    ps.add_argument("--checkpoint", help="policy checkpoint for --controller "
                                         "trained")
    ps.add_argument("--phi", type=float, default=0.0,
                    help="phase for --controller fixed-phase")
    ps.add_argument("--trajectories", type=int, default=100)
    ps.add_argument("--workers", type=int, default=1)
    ps.add_argument("--probe-times", help="comma-separated IQR probe times "
                                          "(default: final time)")
    ps.add_argument("--threshold", type=float, default=10.0)
    ps.add_argument("--plot", action="store_true",
                    help="emit an SVG of the median energies")
    ps.set_defaults(func=cmd_simulate)

    pt = sub.add_parser("train", help="train the soft actor-critic agent")
    add_config_flags(pt)
    pt.add_argument("--episodes", type=int, default=300)
    pt.add_argument("--eval-every", type=int, default=50)
    pt.add_argument("--learning-starts", type=int, default=None)
    pt.set_defaults(func=cmd_train)

    pq = sub.add_parser("quantum", help="run quantum-jump episodes")
    add_config_flags(pq)
    pq.add_argument("--controller", default="none",
                    choices=("none", "random", "fixed-phase", "trained"))
    pq.add_argument("--checkpoint")
    pq.add_argument("--phi", type=float, default=0.0)
    pq.add_argument("--n0", type=int, default=12)
    pq.add_argument("--cutoff", type=int, default=32)
    pq.add_argument("--trajectories", type=int, default=8)
    pq.set_defaults(func=cmd_quantum)

    pv = sub.add_parser("serve", help="serve the environment over TCP")
    add_config_flags(pv)
    pv.add_argument("--host", default="127.0.0.1")
    pv.add_argument("--port", type=int, default=7777)
    pv.set_defaults(func=cmd_serve)
    return p


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidNetworkError, ValueError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except (NumericalBlowupError, TrainingDivergedError,
            CutoffTooSmallError, TimestepTooLargeError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"I/O failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
