import numpy as np
import pytest

from domino.dynamics import BathParams, tau
from domino.env import (BatchEnv, BatchStepError, ConfigError, EpisodeConfig,
                        EpisodeFinishedError, OscillatorEnv)
from domino.rewards import RewardSpec
from domino.topology import OscillatorNetwork, path


def closed_config(**kw):
    defaults = dict(bath=BathParams(), eta=0.0, horizon=50,
                    reward=RewardSpec(kind="gaussian"))
    defaults.update(kw)
    return EpisodeConfig.independent(1, **defaults)


def test_reset_thermal_moments():
    cfg = EpisodeConfig.independent(
        1, bath=BathParams(n_th=1e4), eta=0.0)
    env = OscillatorEnv(cfg, seed=0)
    total = 0.0
    m = 10_000
    for k in range(m):
        env.reset(seed=k)
        total += float(np.sum(env._state.v ** 2) / 2.0)
    mean_n = total / m
    assert abs(mean_n - 10000.5) / 10000.5 < 0.02


def test_reset_same_seed_identical():
    cfg = closed_config(bath=BathParams(n_th=5.0, sigma_m=0.2))
    env = OscillatorEnv(cfg, seed=3)
    a = env.reset(seed=7)
    b = env.reset(seed=7)
    assert np.array_equal(a, b)


def test_fixed_frequencies_across_episodes():
    cfg = closed_config(freq_spread=0.0)
    env = OscillatorEnv(cfg, seed=0)
    env.reset(seed=0)
    f0 = env.frequencies.copy()
    env.reset(seed=1)
    assert np.array_equal(env.frequencies, f0)


def test_sampled_frequencies_vary():
    cfg = closed_config(freq_spread=0.1)
    env = OscillatorEnv(cfg, seed=0)
    env.reset(seed=0)
    f0 = env.frequencies.copy()
    env.reset(seed=1)
    assert not np.array_equal(env.frequencies, f0)


def test_free_rotation_preserves_energy():
    cfg = closed_config()
    env = OscillatorEnv(cfg, seed=1)
    env.reset(seed=0)
    n0 = float(env._state.v[0] ** 2 + env._state.v[1] ** 2) / 2
    rewards, devs = [], []
    for _ in range(50):
        r = env.step(np.zeros(1))
        rewards.append(r.reward)
        devs.append(abs(r.info["energies"][0] - n0) / n0)
    # kick samples fall mid-period, where the symplectic scheme shows its
    # bounded O(Omega dt) oscillation; it must not grow along the episode
    assert max(devs) < 1e-2
    assert max(devs[40:]) < 2 * max(devs[:10]) + 1e-9
    assert np.ptp(rewards) < 1e-3


def test_difference_reward_first_step_uses_reset_measurement():
    from domino.rewards import gaussian_reward

    cfg = closed_config(reward=RewardSpec(kind="difference", mu=-2.0,
                                          sigma=1.0),
                        bath=BathParams(sigma_m=0.3))
    env = OscillatorEnv(cfg, seed=2)
    obs0 = env.reset(seed=0)
    n_prev = float(np.sum((obs0 * cfg.obs_normalization) ** 2) / 2)
    r = env.step(np.zeros(1))
    n_now = float(np.sum((r.obs * cfg.obs_normalization) ** 2) / 2)
    want = gaussian_reward(n_now, -2.0, 1.0) - gaussian_reward(n_prev, -2.0,
                                                               1.0)
    assert r.reward == pytest.approx(want, rel=1e-10)


def test_horizon_timing_exact():
    cfg = closed_config(horizon=50)
    env = OscillatorEnv(cfg, seed=0)
    env.reset(seed=0)
    result = None
    for _ in range(50):
        result = env.step(np.zeros(1))
    assert result.truncated
    assert result.info["time"] == pytest.approx(5 * tau(), rel=1e-12)
    with pytest.raises(EpisodeFinishedError):
        env.step(np.zeros(1))


def test_observation_normalization_variance():
    n_th = 50.0
    cfg = EpisodeConfig.independent(1, bath=BathParams(n_th=n_th), eta=0.0)
    assert cfg.obs_normalization == pytest.approx(np.sqrt(2 * (n_th + 0.5)))
    env = OscillatorEnv(cfg, seed=0)
    obs = np.array([env.reset(seed=k) for k in range(10_000)])
    # dividing a Normal(0, n_th + 1/2) quadrature by sqrt(2 (n_th + 1/2))
    # leaves variance 1/2 per component
    assert np.allclose(obs.var(axis=0), 0.5, rtol=0.03)


def test_action_mapping_and_clipping():
    net = OscillatorNetwork(3, path(3), coupling=0.2)
    cfg = EpisodeConfig(network=net, eta=0.5, bath=BathParams())
    env = OscillatorEnv(cfg, seed=0)
    env.reset(seed=0)
    with pytest.raises(ValueError):
        env.step(np.zeros(3))  # 2 leaves on a 3-path
    env.reset(seed=0)
    env.step(np.array([5.0, -5.0]))  # clipped to [-1, 1], must not raise


def test_episode_determinism():
    cfg = EpisodeConfig.independent(
        2, eta=0.3, bath=BathParams(gamma=1e-4, n_th=100.0, sigma_m=0.1),
        freq_spread=0.05, horizon=5)
    rng = np.random.default_rng(0)
    actions = rng.uniform(-1, 1, size=(5, 2))

    def run():
        env = OscillatorEnv(cfg, seed=11)
        obs = [env.reset(seed=4)]
        rewards = []
        for a in actions:
            r = env.step(a)
            obs.append(r.obs)
            rewards.append(r.reward)
        return np.concatenate(obs), np.array(rewards)

    o1, r1 = run()
    o2, r2 = run()
    assert np.array_equal(o1, o2)
    assert np.array_equal(r1, r2)


def test_info_energies_uncontaminated_by_measurement_noise():
    base = dict(eta=0.3, freq_spread=0.05, horizon=5)
    noisy = EpisodeConfig.independent(
        1, bath=BathParams(gamma=1e-4, n_th=10.0, sigma_m=10.0), **base)
    clean = EpisodeConfig.independent(
        1, bath=BathParams(gamma=1e-4, n_th=10.0, sigma_m=0.0), **base)

    def energies_of(cfg):
        env = OscillatorEnv(cfg, seed=5)
        env.reset(seed=2)
        return [env.step(np.array([0.3])).info["energies"][0]
                for _ in range(5)]

    assert np.array_equal(energies_of(noisy), energies_of(clean))


def test_batch_m1_matches_scalar():
    cfg = EpisodeConfig.independent(
        1, eta=0.4, bath=BathParams(gamma=1e-4, n_th=10.0, sigma_m=0.1),
        horizon=3)
    scalar = OscillatorEnv(cfg, seed=9)
    batch = BatchEnv(cfg, seeds=[9])
    o1 = scalar.reset(seed=0)
    o2 = batch.reset(seeds=[0])
    assert np.array_equal(o1, o2[0])
    for _ in range(3):
        a = np.array([[0.25]])
        r1 = scalar.step(a[0])
        r2 = batch.step(a)[0]
        assert np.array_equal(r1.obs, r2.obs)
        assert r1.reward == r2.reward


def test_batch_distinct_seeds_distinct_trajectories():
    cfg = EpisodeConfig.independent(1, bath=BathParams(n_th=10.0), eta=0.0)
    batch = BatchEnv(cfg, seeds=list(range(8)))
    obs = batch.reset(seeds=[0] * 8)
    assert len({tuple(o) for o in obs}) == 8


def test_batch_reports_per_index_errors():
    cfg = EpisodeConfig.independent(1, bath=BathParams(), eta=0.0, horizon=1)
    batch = BatchEnv(cfg, seeds=[0, 1])
    batch.reset()
    batch.envs[0].step(np.zeros(1))  # env 0 reaches its horizon
    with pytest.raises(BatchStepError) as err:
        batch.step(np.zeros((2, 1)))
    assert list(err.value.failures) == [0]
    assert err.value.results[1] is not None  # sibling still stepped


def test_config_round_trip(tmp_path):
    net = OscillatorNetwork(3, path(3), frequencies=[1.0, 1.1, 0.9],
                            coupling=0.4)
    cfg = EpisodeConfig(network=net, eta=0.7,
                        bath=BathParams(gamma=1e-5, n_th=200.0, sigma_m=0.2),
                        freq_spread=0.1, horizon=77,
                        reward=RewardSpec(kind="difference", mu=-1.0,
                                          sigma=2.0, scale=3.0))
    f = tmp_path / "config.json"
    cfg.save(f)
    back = EpisodeConfig.load(f)
    assert back.to_dict() == cfg.to_dict()


def test_config_validation():
    with pytest.raises(ConfigError):
        EpisodeConfig.independent(1, horizon=0)
    with pytest.raises(ConfigError):
        EpisodeConfig.independent(1, kick_interval=1e-5, dt=1e-3)
    with pytest.raises(ConfigError):
        EpisodeConfig.from_dict({"network": {"n_nodes": 0}})
