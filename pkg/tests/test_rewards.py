import math

import numpy as np
import pytest

from domino.rewards import (InvalidEnergyError, RewardSpec, aggregate,
                            difference_reward, gaussian_reward,
                            inverse_reward)


def test_gaussian_peak_is_one():
    assert gaussian_reward(10.0 ** -2, -2.0, 1.0) == pytest.approx(1.0,
                                                                   abs=1e-12)
    assert gaussian_reward(10.0 ** 3, 3.0, 0.5) == pytest.approx(1.0,
                                                                 abs=1e-12)


def test_gaussian_frozen_values():
    # direct evaluation: log10(0.1) = -1, one sigma off a mu = -2 target
    assert gaussian_reward(0.1, -2.0, 1.0) == pytest.approx(
        math.exp(-0.5), rel=1e-12)
    # six sigma: exp(-18)
    assert gaussian_reward(1e4, -2.0, 1.0) == pytest.approx(
        math.exp(-18.0), rel=1e-12)


def test_gaussian_bounds_property():
    rng = np.random.default_rng(17)
    n = 10.0 ** rng.uniform(-6, 8, size=100_000)
    g = gaussian_reward(n, -2.0, 1.0)
    assert np.all(g > 0.0)
    assert np.all(g <= 1.0)


def test_gaussian_peak_location_scan():
    n = np.logspace(-6, 8, 1000)
    g = gaussian_reward(n, -2.0, 1.0)
    k = int(np.argmax(g))
    cell = np.log10(n[1]) - np.log10(n[0])
    assert abs(np.log10(n[k]) - (-2.0)) <= cell


def test_gaussian_rejects_nonpositive():
    with pytest.raises(InvalidEnergyError):
        gaussian_reward(0.0, -2.0, 1.0)
    with pytest.raises(InvalidEnergyError):
        gaussian_reward(-1.0, -2.0, 1.0)


def test_difference_frozen_values():
    assert difference_reward(1.0, 1.0, -2.0, 1.0) == 0.0
    want = math.exp(-0.5) - math.exp(-2.0)
    assert difference_reward(0.1, 1.0, -2.0, 1.0) == pytest.approx(
        want, rel=1e-12)
    assert difference_reward(1.0, 0.1, -2.0, 1.0) == pytest.approx(
        -want, rel=1e-12)


def test_difference_telescopes():
    rng = np.random.default_rng(3)
    energies = 10.0 ** rng.uniform(-4, 4, size=51)
    total = sum(difference_reward(energies[k + 1], energies[k], -2.0, 1.0)
                for k in range(50))
    direct = (gaussian_reward(energies[-1], -2.0, 1.0)
              - gaussian_reward(energies[0], -2.0, 1.0))
    assert abs(total - direct) < 1e-12


def test_difference_monotone_above_target():
    # both energies above 10^mu: positive reward iff cooling
    assert difference_reward(5.0, 9.0, -2.0, 1.0) > 0
    assert difference_reward(9.0, 5.0, -2.0, 1.0) < 0


def test_inverse_values():
    assert inverse_reward(2.0, 1.0) == 0.5
    assert inverse_reward(1e-3, 1.0) == pytest.approx(1000.0)
    assert inverse_reward(1.0, 2.0) == 2.0
    with pytest.raises(InvalidEnergyError):
        inverse_reward(0.0)


def test_aggregate():
    spec = RewardSpec(kind="gaussian", mu=-2.0, sigma=1.0, scale=1.0)
    assert aggregate([1.0, 1.0, 1.0], spec) == 1.0
    assert aggregate([0.5, 0.7], spec) == pytest.approx(0.6)
    spec2 = RewardSpec(kind="gaussian", scale=3.0)
    assert aggregate([0.25], spec2) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        aggregate([], spec)


def test_reward_spec_step_reward():
    spec = RewardSpec(kind="difference", mu=-2.0, sigma=1.0, scale=2.0)
    n_now = np.array([0.1, 0.1])
    n_prev = np.array([1.0, 1.0])
    want = 2.0 * (math.exp(-0.5) - math.exp(-2.0))
    assert spec.step_reward(n_now, n_prev) == pytest.approx(want, rel=1e-12)

    inv = RewardSpec(kind="inverse", scale=2.0)
    assert inv.step_reward(np.array([1.0, 2.0])) == pytest.approx(1.5)

    with pytest.raises(ValueError):
        RewardSpec(kind="difference").step_reward(np.array([1.0]))


def test_reward_spec_validation():
    with pytest.raises(ValueError):
        RewardSpec(kind="nonsense")
    with pytest.raises(ValueError):
        RewardSpec(sigma=0.0)
    with pytest.raises(ValueError):
        RewardSpec(scale=-1.0)


def test_reward_spec_dict_round_trip():
    spec = RewardSpec(kind="gaussian", mu=[-2.0, -3.0], sigma=[1.0, 2.0],
                      scale=4.0)
    back = RewardSpec.from_dict(spec.to_dict())
    assert back.kind == spec.kind
    assert np.array_equal(back.mu, spec.mu)
    assert np.array_equal(back.sigma, spec.sigma)
    assert back.scale == spec.scale
