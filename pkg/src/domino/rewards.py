"""Per-step rewards computed from (possibly noisy) oscillator energies.

Three forms: an unbounded inverse-energy reward, a bounded log-Gaussian
bump peaking at the target occupancy 10**mu, and the step-to-step
difference of the Gaussian form (which telescopes over an episode).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("inverse", "gaussian", "difference")


class InvalidEnergyError(ValueError):
    """Reward requested for a non-positive energy."""


def _check_positive(n):
    n = np.asarray(n, dtype=float)
    if np.any(n <= 0):
        raise InvalidEnergyError(f"energies must be > 0, got min {n.min()}")
    return n


def gaussian_reward(n, mu, sigma):
    """exp(-(log10(n) - mu)^2 / (2 sigma^2)); in (0, 1], peak at n = 10**mu."""
    n = _check_positive(n)
    dev = np.log10(n) - mu
    return np.exp(-(dev * dev) / (2.0 * np.asarray(sigma) ** 2))


def difference_reward(n_now, n_prev, mu, sigma):
    """Gain in the Gaussian reward between consecutive samples."""
    return gaussian_reward(n_now, mu, sigma) - gaussian_reward(n_prev, mu, sigma)


def inverse_reward(n, scale=1.0):
    """scale / n. Unbounded as n -> 0, with correspondingly steep gradients;
    kept for comparison against the bounded forms."""
    n = _check_positive(n)
    return scale / n


@dataclass(frozen=True)
class RewardSpec:
    """Reward configuration: kind plus per-node targets.

    mu and sigma are per-node arrays (target occupancy 10**mu_j, relaxation
    sigma_j); scalars broadcast to every node. scale multiplies the
    node-averaged reward.
    """

    kind: str = "difference"
    mu: np.ndarray = field(default_factory=lambda: np.asarray(-2.0))
    sigma: np.ndarray = field(default_factory=lambda: np.asarray(1.0))
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        sigma = np.asarray(self.sigma, dtype=float)
        if np.any(sigma <= 0):
            raise ValueError("sigma must be > 0")
        object.__setattr__(self, "sigma", sigma)
        if self.scale <= 0:
            raise ValueError("scale must be > 0")

    def broadcast(self, n_nodes):
        """Per-node (mu, sigma) arrays of length n_nodes."""
        mu = np.broadcast_to(self.mu, (n_nodes,))
        sigma = np.broadcast_to(self.sigma, (n_nodes,))
        return mu, sigma

    def per_node(self, n_now, n_prev=None):
        """Vector of per-node rewards (unscaled)."""
        n_now = np.asarray(n_now, dtype=float)
        mu, sigma = self.broadcast(n_now.shape[-1])
        if self.kind == "gaussian":
            return gaussian_reward(n_now, mu, sigma)
        if self.kind == "inverse":
            return inverse_reward(n_now)
        if n_prev is None:
            raise ValueError("difference reward needs the previous energies")
        return difference_reward(n_now, n_prev, mu, sigma)

    def step_reward(self, n_now, n_prev=None):
        """Scalar reward for one step: scale * mean over nodes."""
        return aggregate(self.per_node(n_now, n_prev), self)

    def to_dict(self):
        return {
            "kind": self.kind,
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            kind=data.get("kind", "difference"),
            mu=np.asarray(data.get("mu", -2.0), dtype=float),
            sigma=np.asarray(data.get("sigma", 1.0), dtype=float),
            scale=float(data.get("scale", 1.0)),
        )


def aggregate(per_node, spec):
    """scale * arithmetic mean of per-node rewards.

    The mean (rather than a sum) keeps reward magnitude independent of
    network size, so one entropy coefficient works across sizes.
    """
    per_node = np.asarray(per_node, dtype=float)
    if per_node.shape[-1] == 0:
        raise ValueError("cannot aggregate an empty reward vector")
    return spec.scale * per_node.mean(axis=-1)
