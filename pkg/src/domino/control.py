"""Analytic baseline controller and simple reference policies.

The closed-form phase for a parametrically kicked oscillator is

    phi* = pi/2 + 2*arctan(1 / (p/q + eta/(2*Omega)))

wrapped into [-pi, pi] and evaluated per leaf on that leaf's own measured
quadratures. The doubled arctan gives phi* the full 2*pi range it needs:
the energy extracted by a 2*Omega parametric drive goes as
sin(2*theta - phi) with theta the oscillator phase, so the commanded
phase must track twice the measured phase angle. A bounded correction
(range < 2 radians, e.g. a tanh in place of the arctan) stalls the
cooling at roughly 40% of the optimal rate and cannot reach the
sub-unity occupancies this controller is benchmarked against.

Limits follow IEEE division: q -> 0 with p != 0 gives phi* -> pi/2, and
d -> 0 from either side lands on -pi/2 after wrapping (arctan(1/d) tends
to +-pi/2, and the factor 2 makes both branches agree mod 2*pi).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import partition_leaves


class UndefinedStateError(ValueError):
    """Both quadratures are exactly zero: no phase is defined."""


@dataclass(frozen=True)
class PhaseKick:
    node: int
    phi: float


def wrap_phase(phi):
    """Wrap angles into [-pi, pi]."""
    return (np.asarray(phi) + np.pi) % (2.0 * np.pi) - np.pi


def optimal_phase(q, p, eta, omega):
    """Closed-form kick phase from one oscillator's measured quadratures."""
    if eta <= 0 or omega <= 0:
        raise ValueError("eta and omega must be > 0")
    if q == 0.0 and p == 0.0:
        raise UndefinedStateError("oscillator measured exactly at the origin")
    with np.errstate(divide="ignore"):
        d = np.float64(p) / np.float64(q) + eta / (2.0 * omega)
        phi = 0.5 * np.pi + 2.0 * np.arctan(1.0 / d)
    return float(wrap_phase(phi))


def baseline_policy(measured, net, eta):
    """One PhaseKick per leaf from its own (q, p); origin leaves are skipped.

    A skipped leaf keeps whatever phase the caller was holding for it.
    """
    measured = np.asarray(measured, dtype=float)
    if measured.shape[-1] != 2 * net.n_nodes:
        raise ValueError(f"measured length {measured.shape[-1]} != 2N")
    kicks = []
    for node in partition_leaves(net).leaves:
        q = measured[2 * (node - 1)]
        p = measured[2 * (node - 1) + 1]
        try:
            kicks.append(PhaseKick(node=node, phi=optimal_phase(
                q, p, eta, net.frequencies[node - 1])))
        except UndefinedStateError:
            continue
    return kicks


def optimal_phase_array(q, p, eta, omega):
    """Vectorized optimal_phase for (..., L) leaf quadrature arrays.

    Entries with q = p = 0 come back as NaN so callers can hold the
    previous phase there.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    omega = np.asarray(omega, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = p / q + eta / (2.0 * omega)
        phi = 0.5 * np.pi + 2.0 * np.arctan(1.0 / d)
    phi = np.where((q == 0.0) & (p == 0.0), np.nan, phi)
    return wrap_phase(phi)


class Controller:
    """Maps measured quadratures to raw actions in [-1, 1] per leaf.

    Raw actions scale to kick phases as phi = pi * a. Controllers may keep
    per-episode state (the analytic one holds phases across skipped
    leaves); reset() clears it and passes the episode's frequencies when
    these were resampled.
    """

    def reset(self, n_leaves, omega=None):
        pass

    def __call__(self, measured):
        raise NotImplementedError


class AnalyticController(Controller):
    """Closed-form phases per leaf, each from its own quadratures."""

    def __init__(self, net, eta):
        self.net = net
        self.eta = eta
        leaves = partition_leaves(net).leaves
        self.leaf_idx = np.asarray([j - 1 for j in leaves], dtype=np.intp)
        self.leaf_omega = net.frequencies[self.leaf_idx]
        self._phi = None

    def reset(self, n_leaves, omega=None):
        # omega may be (N,) or (M, N) when episodes resample frequencies
        if omega is not None:
            self.leaf_omega = np.asarray(omega)[..., self.leaf_idx]
        self._phi = np.zeros(n_leaves)

    def __call__(self, measured):
        measured = np.asarray(measured, dtype=float)
        q = measured[..., 0::2][..., self.leaf_idx]
        p = measured[..., 1::2][..., self.leaf_idx]
        phi = optimal_phase_array(q, p, self.eta, self.leaf_omega)
        if self._phi is None or self._phi.shape != phi.shape:
            self._phi = np.zeros_like(phi, dtype=float)
        keep = np.isnan(phi)
        phi = np.where(keep, self._phi, phi)
        self._phi = phi
        return phi / np.pi


class RandomController(Controller):
    """Uniform random phases; the no-information baseline."""

    def __init__(self, rng):
        self.rng = rng
        self._n_leaves = None

    def reset(self, n_leaves, omega=None):
        self._n_leaves = n_leaves

    def __call__(self, measured):
        shape = np.asarray(measured).shape[:-1]
        return self.rng.uniform(-1.0, 1.0, size=shape + (self._n_leaves,))


class FixedPhaseController(Controller):
    """Constant phase on every leaf at every kick."""

    def __init__(self, phi=0.0):
        self.phi = phi
        self._n_leaves = None

    def reset(self, n_leaves, omega=None):
        self._n_leaves = n_leaves

    def __call__(self, measured):
        shape = np.asarray(measured).shape[:-1]
        return np.full(shape + (self._n_leaves,), self.phi / np.pi)
