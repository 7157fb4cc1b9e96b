"""Episodic control environment around the quadrature dynamics.

reset() draws a fresh thermal state (and, in sampled mode, fresh
per-episode frequencies); step() applies one phase kick per leaf,
integrates one kick interval, and returns a noisy, normalized observation
plus the reward computed from measured energies. True (noiseless)
energies ride along in the step info and never touch the reward path.

Random streams: every episode owns four independent generators keyed by
(seed, episode index, tag) for dynamics noise, measurement noise, the
initial thermal draw, and frequency sampling. Adding or removing
measurements therefore never perturbs the dynamics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .dynamics import BathParams, FeedbackDrive, QuadratureState
from .rewards import RewardSpec
from .topology import OscillatorNetwork, decode_pruefer, partition_leaves, \
    sample_frequencies


class ConfigError(ValueError):
    pass


class EpisodeFinishedError(RuntimeError):
    """step() called after the horizon was reached."""


# rng stream tags (third component of the generator key)
_DYN, _MEAS, _INIT, _FREQ = 0, 1, 2, 3


def _stream(episode_key, tag):
    return np.random.default_rng(list(episode_key) + [tag])


@dataclass(frozen=True)
class EpisodeConfig:
    """Everything needed to run one episode.

    network holds the topology and coupling; its frequencies are used as
    given when freq_spread is None, otherwise every episode resamples
    frequencies from Normal(base_freq, freq_spread^2).

    Defaults: kicks every 0.1 tau, horizon 50 (so episodes end at 5 tau),
    integrator sub-step 1e-3 tau, observations divided by
    sqrt(2*(n_th + 1/2)) so network inputs are O(1).
    """

    network: OscillatorNetwork
    base_freq: float = 1.0
    freq_spread: float = None
    eta: float = 0.5
    bath: BathParams = field(default_factory=BathParams)
    kick_interval: float = None
    horizon: int = 50
    dt: float = None
    reward: RewardSpec = field(default_factory=RewardSpec)
    obs_normalization: float = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        tau = dynamics.tau(self.base_freq)
        if self.kick_interval is None:
            object.__setattr__(self, "kick_interval", 0.1 * tau)
        if self.dt is None:
            object.__setattr__(self, "dt", 1e-3 * tau)
        if self.kick_interval < self.dt:
            raise ConfigError("kick_interval must be >= dt")
        if self.obs_normalization is None:
            object.__setattr__(self, "obs_normalization",
                               float(np.sqrt(2.0 * (self.bath.n_th + 0.5))))
        if self.obs_normalization <= 0:
            raise ConfigError("obs_normalization must be > 0")
        if self.freq_spread is not None and self.freq_spread < 0:
            raise ConfigError("freq_spread must be >= 0")

    @classmethod
    def independent(cls, n, **kw):
        """n uncoupled oscillators; every node is actuated."""
        return cls(network=OscillatorNetwork(n_nodes=n), **kw)

    @classmethod
    def from_pruefer(cls, seq, n, coupling, **kw):
        return cls(network=OscillatorNetwork(
            n_nodes=n, edges=tuple(decode_pruefer(seq, n)),
            coupling=coupling), **kw)

    @property
    def n_leaves(self):
        return len(partition_leaves(self.network).leaves)

    def to_dict(self):
        net = self.network
        return {
            "network": {
                "n_nodes": net.n_nodes,
                "edges": [list(e) for e in net.edges],
                "frequencies": [float(f) for f in net.frequencies],
                "coupling": net.coupling,
            },
            "base_freq": self.base_freq,
            "freq_spread": self.freq_spread,
            "eta": self.eta,
            "bath": {"gamma": self.bath.gamma, "n_th": self.bath.n_th,
                     "sigma_m": self.bath.sigma_m},
            "kick_interval": self.kick_interval,
            "horizon": self.horizon,
            "dt": self.dt,
            "reward": self.reward.to_dict(),
            "obs_normalization": self.obs_normalization,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            netd = data["network"]
            net = OscillatorNetwork(
                n_nodes=netd["n_nodes"],
                edges=tuple(tuple(e) for e in netd.get("edges", [])),
                frequencies=netd.get("frequencies"),
                coupling=netd.get("coupling", 0.0),
            )
            bathd = data.get("bath", {})
            return cls(
                network=net,
                base_freq=data.get("base_freq", 1.0),
                freq_spread=data.get("freq_spread"),
                eta=data.get("eta", 0.5),
                bath=BathParams(gamma=bathd.get("gamma", 0.0),
                                n_th=bathd.get("n_th", 0.0),
                                sigma_m=bathd.get("sigma_m", 0.0)),
                kick_interval=data.get("kick_interval"),
                horizon=data.get("horizon", 50),
                dt=data.get("dt"),
                reward=RewardSpec.from_dict(data.get("reward", {})),
                obs_normalization=data.get("obs_normalization"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"bad episode config: {e}") from e

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    terminated: bool
    truncated: bool
    info: dict


class OscillatorEnv:
    """Single-episode environment; see module docstring for semantics."""

    def __init__(self, config: EpisodeConfig, seed=0):
        self.config = config
        self.base_seed = int(seed)
        self._auto_episode = 0
        self._net = None
        self._state = None
        self._done = True
        leaves = partition_leaves(config.network).leaves
        self.leaf_idx = np.asarray([j - 1 for j in leaves], dtype=np.intp)
        self.n_leaves = len(leaves)
        self.obs_len = 2 * config.network.n_nodes

    def reset(self, seed=None):
        """Start a fresh episode; returns the first measured observation.

        Without an explicit seed, episodes take consecutive keys
        (base_seed, 0), (base_seed, 1), ...; explicitly seeded resets do
        not advance that counter, so interleaved evaluation episodes
        cannot shift a training run's episode sequence.
        """
        cfg = self.config
        if seed is None:
            key = (self.base_seed, self._auto_episode)
            self._auto_episode += 1
        else:
            key = (self.base_seed, int(seed))
        self._rng_dyn = _stream(key, _DYN)
        self._rng_meas = _stream(key, _MEAS)
        rng_init = _stream(key, _INIT)
        if cfg.freq_spread is not None:
            freqs = sample_frequencies(
                _stream(key, _FREQ), cfg.base_freq, cfg.freq_spread,
                cfg.network.n_nodes)
            self._net = cfg.network.with_frequencies(freqs)
        else:
            self._net = cfg.network
        v0 = dynamics.thermal_state(self._net, cfg.bath.n_th, rng_init)
        self._state = QuadratureState(v0, 0.0)
        self._steps = 0
        self._done = False
        measured = dynamics.measure(self._state, cfg.bath, self._rng_meas)
        self._prev_measured_energies = dynamics.energies(measured)
        return measured / cfg.obs_normalization

    @property
    def frequencies(self):
        """Frequencies in effect for the current episode."""
        return self._net.frequencies

    def step(self, action):
        cfg = self.config
        if self._done:
            raise EpisodeFinishedError(
                "episode already truncated; call reset()")
        action = np.clip(np.asarray(action, dtype=float).reshape(-1), -1, 1)
        if action.size != self.n_leaves:
            raise ValueError(
                f"action length {action.size} != {self.n_leaves} leaves")
        drive = FeedbackDrive(eta=cfg.eta, phases=np.pi * action,
                              base_freq=cfg.base_freq,
                              t_origin=self._state.t)
        self._steps += 1
        t_end = self._steps * cfg.kick_interval
        self._state = dynamics.integrate_interval(
            self._state, self._net, cfg.bath, drive, t_end, cfg.dt,
            self._rng_dyn)
        measured = dynamics.measure(self._state, cfg.bath, self._rng_meas)
        n_meas = dynamics.energies(measured)
        reward = float(cfg.reward.step_reward(
            n_meas, self._prev_measured_energies))
        self._prev_measured_energies = n_meas
        truncated = self._steps >= cfg.horizon
        self._done = truncated
        info = {
            "energies": dynamics.energies(self._state),
            "quadratures": self._state.v.copy(),
            "time": self._state.t,
        }
        return StepResult(obs=measured / cfg.obs_normalization,
                          reward=reward, terminated=False,
                          truncated=truncated, info=info)


class BatchStepError(RuntimeError):
    """One or more batch members failed; siblings were still stepped."""

    def __init__(self, failures, results):
        super().__init__(
            f"batch step failed at indices {sorted(failures)}: "
            + "; ".join(f"[{i}] {e}" for i, e in sorted(failures.items())))
        self.failures = failures
        self.results = results


class BatchEnv:
    """M independent environments with element-wise scalar semantics.

    A batch of size 1 behaves bit-for-bit like a scalar OscillatorEnv
    constructed with the same config and seed.
    """

    def __init__(self, configs, seeds):
        if isinstance(configs, EpisodeConfig):
            configs = [configs] * len(seeds)
        if len(configs) != len(seeds):
            raise ConfigError("configs and seeds length mismatch")
        if not seeds:
            raise ConfigError("batch must contain at least one episode")
        self.envs = [OscillatorEnv(c, seed=s) for c, s in zip(configs, seeds)]

    def __len__(self):
        return len(self.envs)

    def reset(self, seeds=None):
        if seeds is None:
            seeds = [None] * len(self.envs)
        return np.stack([e.reset(seed=s)
                         for e, s in zip(self.envs, seeds)])

    def step(self, actions):
        """Step every member; collects per-index failures without
        aborting siblings, then raises BatchStepError if any failed."""
        results, failures = [], {}
        for i, env in enumerate(self.envs):
            try:
                results.append(env.step(np.asarray(actions)[i]))
            except Exception as e:  # noqa: BLE001 - reported per index
                results.append(None)
                failures[i] = e
        if failures:
            raise BatchStepError(failures, results)
        return results
