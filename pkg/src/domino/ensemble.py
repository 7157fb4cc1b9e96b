"""Vectorized multi-trajectory cooling runs.

All trajectories in a shard are stepped together on (M, 2N) state arrays
with shared noise streams; that is statistically equivalent to independent
runs and orders of magnitude faster than looping scalar environments.
Results are deterministic for a fixed (seed, workers) pair; shards are
aggregated in index order regardless of completion order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dynamics
from .control import AnalyticController, FixedPhaseController, \
    RandomController
from .dynamics import FeedbackDrive
from .env import EpisodeConfig
from .topology import partition_leaves, sample_frequencies


@dataclass
class TrajectoryBundle:
    """Per-kick samples for a batch of trajectories.

    times:       (K+1,) sample instants, t_k = k * kick_interval
    energies:    (M, K+1, N) noiseless per-node energies
    quadratures: (M, K+1, 2N) true quadratures, or None if not recorded
    """

    times: np.ndarray
    energies: np.ndarray
    quadratures: np.ndarray = None

    def concat(self, other):
        return TrajectoryBundle(
            times=self.times,
            energies=np.concatenate([self.energies, other.energies]),
            quadratures=None if self.quadratures is None else
            np.concatenate([self.quadratures, other.quadratures]),
        )


def make_controller(name, config: EpisodeConfig, rng, checkpoint=None,
                    phi=0.0):
    """Resolve a controller by name for simulation harnesses."""
    if name == "analytic":
        return AnalyticController(config.network, config.eta)
    if name == "random":
        return RandomController(rng)
    if name == "fixed-phase":
        return FixedPhaseController(phi)
    if name == "trained":
        if checkpoint is None:
            raise ValueError("trained controller needs a checkpoint path")
        from .sac import PolicyController, load_checkpoint
        policy, _, _ = load_checkpoint(checkpoint)
        return PolicyController(policy, config.obs_normalization)
    raise ValueError(f"unknown controller {name!r}")


def run_trajectories(config: EpisodeConfig, controller, n_traj, seed,
                     record_quadratures=False):
    """Run n_traj episodes under one controller, vectorized.

    `seed` may be an int or a key sequence of ints. Stream layout mirrors
    the scalar environment's tags (dynamics, measurement, initial state,
    frequencies) but shares each stream across the whole batch.
    """
    key = [int(s) for s in np.atleast_1d(seed)]
    rng_dyn = np.random.default_rng(key + [0])
    rng_meas = np.random.default_rng(key + [1])
    rng_init = np.random.default_rng(key + [2])
    rng_freq = np.random.default_rng(key + [3])

    net = config.network
    n = net.n_nodes
    leaves = partition_leaves(net).leaves
    leaf_idx = np.asarray([j - 1 for j in leaves], dtype=np.intp)
    if config.freq_spread is not None:
        omega = np.stack([
            sample_frequencies(rng_freq, config.base_freq,
                               config.freq_spread, n)
            for _ in range(n_traj)])
    else:
        omega = None

    v = dynamics.thermal_state(net, config.bath.n_th, rng_init, batch=n_traj)
    k_steps = config.horizon
    times = config.kick_interval * np.arange(k_steps + 1)
    energies = np.empty((n_traj, k_steps + 1, n))
    energies[:, 0] = dynamics.energies(v)
    quads = None
    if record_quadratures:
        quads = np.empty((n_traj, k_steps + 1, 2 * n))
        quads[:, 0] = v

    controller.reset(len(leaves), omega=omega)
    sigma_m = config.bath.sigma_m
    t = 0.0
    for k in range(k_steps):
        measured = v + sigma_m * rng_meas.standard_normal(v.shape) \
            if sigma_m > 0 else v
        action = np.clip(np.asarray(controller(measured), dtype=float),
                         -1.0, 1.0)
        drive = FeedbackDrive(eta=config.eta, phases=np.pi * action,
                              base_freq=config.base_freq, t_origin=t)
        t_end = times[k + 1]
        dynamics.evolve_batch(v, t, net, config.bath, drive, t_end,
                              config.dt, rng_dyn, omega=omega)
        t = t_end
        energies[:, k + 1] = dynamics.energies(v)
        if quads is not None:
            quads[:, k + 1] = v
    return TrajectoryBundle(times=times, energies=energies,
                            quadratures=quads)


def _shard(args):
    config, name, kwargs, n_traj, shard_key, record_q = args
    rng = np.random.default_rng(list(shard_key) + [4])
    controller = make_controller(name, config, rng, **kwargs)
    return run_trajectories(config, controller, n_traj, shard_key,
                            record_quadratures=record_q)


def run_trajectories_sharded(config, controller_name, n_traj, seed,
                             workers=1, controller_kwargs=None,
                             record_quadratures=False):
    """Fan a trajectory ensemble out over a process pool.

    Each shard derives its own stream key from (seed, shard index); shard
    results are concatenated in index order, so the output is
    deterministic for a fixed (seed, workers).
    """
    controller_kwargs = controller_kwargs or {}
    workers = max(1, min(int(workers), n_traj))
    counts = [n_traj // workers + (1 if i < n_traj % workers else 0)
              for i in range(workers)]
    jobs = [(config, controller_name, controller_kwargs, c,
             (int(seed), i), record_quadratures)
            for i, c in enumerate(counts) if c > 0]
    if len(jobs) == 1:
        return _shard(jobs[0])
    with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
        bundles = list(pool.map(_shard, jobs))
    out = bundles[0]
    for b in bundles[1:]:
        out = out.concat(b)
    return out
