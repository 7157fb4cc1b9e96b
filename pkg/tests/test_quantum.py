import numpy as np
import pytest

from domino.quantum import (CutoffTooSmallError, FockState,
                            QuantumEpisodeConfig, TimestepTooLargeError,
                            build_operators, effective_hamiltonian,
                            expectations, mcwf_step, moment_observation,
                            quantum_episode, relaxation_ensemble)


def test_ladder_matrix_elements():
    ops = build_operators(8, 0.1, 0.5)
    assert ops.b[1, 2] == pytest.approx(np.sqrt(2.0))
    assert ops.b[0, 1] == 1.0
    # column-wise: b|n> = sqrt(n) |n-1>
    for n in range(1, 8):
        col = ops.b[:, n]
        assert col[n - 1] == pytest.approx(np.sqrt(n))
        assert np.count_nonzero(col) == 1


def test_canonical_commutator_interior():
    ops = build_operators(32, 0.0, 0.0)
    comm = ops.q @ ops.p - ops.p @ ops.q
    interior = comm[:-1, :-1]
    assert np.abs(interior - 1j * np.eye(31)).max() < 1e-12


def test_jump_operator_normalization():
    gamma, n_th = 0.1, 0.5
    ops = build_operators(16, gamma, n_th)
    rate_minus = ops.c_minus.conj().T @ ops.c_minus
    want = gamma * (n_th + 1.0) * np.arange(16)
    assert np.allclose(np.diag(rate_minus), want, atol=1e-12)
    assert np.abs(rate_minus - np.diag(np.diag(rate_minus))).max() < 1e-12


def test_hermiticity():
    ops = build_operators(16, 0.1, 0.5)
    assert np.abs(ops.q - ops.q.conj().T).max() < 1e-12
    assert np.abs(ops.p - ops.p.conj().T).max() < 1e-12
    assert np.abs(ops.qp_sym - ops.qp_sym.conj().T).max() < 1e-12


def test_fock_state_moments():
    ops = build_operators(32, 0.1, 0.5)
    for n0 in range(11):
        q2, p2, qp, n = expectations(FockState.fock(n0, 32), ops)
        assert abs(q2 - (n0 + 0.5)) < 1e-10
        assert abs(p2 - (n0 + 0.5)) < 1e-10
        assert abs(qp) < 1e-10
        assert abs(n - n0) < 1e-10


def test_occupancy_identity_random_states():
    ops = build_operators(24, 0.1, 0.5)
    rng = np.random.default_rng(2)
    for _ in range(100):
        amps = rng.standard_normal(24) + 1j * rng.standard_normal(24)
        amps[-6:] = 0.0  # keep clear of the truncation edge
        amps /= np.linalg.norm(amps)
        st = FockState(amps)
        _, _, _, n = expectations(st, ops)
        direct = np.vdot(amps, ops.num @ amps).real
        assert abs(n - direct) < 1e-10


def test_expectations_requires_normalized_state():
    ops = build_operators(8, 0.0, 0.0)
    with pytest.raises(ValueError):
        expectations(FockState(np.ones(8)), ops)


def test_closed_eigenstate_is_stationary():
    ops = build_operators(16, 0.0, 0.0)
    rng = np.random.default_rng(1)
    st = FockState.fock(3, 16)
    dt = 1e-4 * 2 * np.pi
    for _ in range(200):
        before = expectations(st, ops)[3]
        st, jump = mcwf_step(st, ops, 0.0, 1.0, dt, rng)
        assert jump == 0
        assert abs(expectations(st, ops)[3] - before) < 1e-6
    assert abs(expectations(st, ops)[3] - 3.0) < 1e-6
    assert abs(st.norm() - 1.0) < 1e-10


def test_zero_temperature_jump_lands_on_vacuum():
    ops = build_operators(8, 0.5, 0.0)
    rng = np.random.default_rng(0)
    st = FockState.fock(1, 8)
    jumped = 0
    for _ in range(2000):
        st, jump = mcwf_step(st, ops, 0.0, 1.0, 0.05, rng)
        if jump:
            jumped = jump
            break
    assert jumped == -1  # only the decay channel can fire at n_th = 0
    amps = np.abs(st.amplitudes)
    assert amps[0] == pytest.approx(1.0)
    assert np.all(amps[1:] == 0.0)


def test_norm_restored_every_step():
    ops = build_operators(16, 0.2, 1.0)
    rng = np.random.default_rng(5)
    st = FockState.fock(4, 16)
    for _ in range(500):
        st, _ = mcwf_step(st, ops, 0.1, 1.0, 1e-3, rng)
        assert abs(st.norm() - 1.0) < 1e-10


def test_relaxation_matches_master_equation():
    # scaled-down thermal relaxation oracle (the acceptance suite runs the
    # full 500-trajectory version to t = 10/gamma)
    gamma, n_th = 0.1, 0.5
    t_grid = np.array([0.0, 10.0, 20.0])
    nbar = relaxation_ensemble(32, gamma, n_th, 3, t_grid,
                               dt=2e-4 * 2 * np.pi, n_traj=200, seed=1)
    exact = n_th + (3.0 - n_th) * np.exp(-gamma * t_grid)
    assert nbar[0] == 3.0
    assert np.all(np.abs(nbar[1:] - exact[1:]) / exact[1:] < 0.1)


def test_interjump_times_exponential():
    # |3> is an eigenstate of the no-jump evolution, so the first-jump
    # waiting time is exactly exponential with the total jump rate
    gamma, n_th, n0 = 0.1, 0.5, 3
    rate = gamma * ((n_th + 1.0) * n0 + n_th * (n0 + 1))
    ops = build_operators(16, gamma, n_th)
    h = effective_hamiltonian(ops, 0.0, 1.0)
    rng = np.random.default_rng(8)
    m = 1000
    waits = np.zeros(m)
    for i in range(m):
        st = FockState.fock(n0, 16)
        t, dt = 0.0, 0.02
        while True:
            st, jump = mcwf_step(st, ops, 0.0, 1.0, dt, rng)
            t += dt
            if jump:
                waits[i] = t
                break
    # Kolmogorov-Smirnov against Exponential(rate), alpha = 0.01
    waits.sort()
    cdf = 1.0 - np.exp(-rate * waits)
    emp_hi = np.arange(1, m + 1) / m
    emp_lo = np.arange(0, m) / m
    d = max(np.abs(emp_hi - cdf).max(), np.abs(cdf - emp_lo).max())
    assert d < 1.63 / np.sqrt(m)


def test_leakage_guard():
    ops = build_operators(8, 0.0, 0.0)
    rng = np.random.default_rng(0)
    st = FockState.fock(7, 8)  # population on the truncation edge
    with pytest.raises(CutoffTooSmallError):
        mcwf_step(st, ops, 0.0, 1.0, 1e-4, rng)


def test_timestep_guard():
    ops = build_operators(16, 1.0, 0.0)
    rng = np.random.default_rng(0)
    st = FockState.fock(3, 16)
    with pytest.raises(TimestepTooLargeError):
        mcwf_step(st, ops, 0.0, 1.0, 0.05, rng)  # dp = 3 * 0.05 * 1 = 0.15


def test_quantum_episode_zero_length():
    cfg = QuantumEpisodeConfig(n0=12, cutoff=32, horizon=0, gamma=1e-6,
                               n_th=1e4, eta=0.0)
    traj = quantum_episode(cfg, None, seed=0)
    assert traj.times.shape == (1,)
    assert traj.n_expect[0] == pytest.approx(12.0, abs=1e-10)


def test_quantum_episode_undriven_relaxes_toward_bath():
    # strong decay toward a small thermal occupancy; <n> must fall from 8
    cfg = QuantumEpisodeConfig(n0=8, cutoff=24, horizon=40, gamma=0.2,
                               n_th=0.2, eta=0.0, dt=2e-4 * 2 * np.pi)
    traj = quantum_episode(cfg, None, seed=3)
    assert traj.n_expect[0] == pytest.approx(8.0, abs=1e-10)
    assert traj.n_expect[-1] < 4.0
    exact = 0.2 + 7.8 * np.exp(-0.2 * traj.times[-1])
    assert traj.n_expect[-1] == pytest.approx(exact, abs=1.5)


def test_quantum_episode_deterministic_per_seed():
    cfg = QuantumEpisodeConfig(n0=5, cutoff=24, horizon=10, gamma=0.05,
                               n_th=0.5, eta=0.3, dt=2e-4 * 2 * np.pi)

    class Fixed:
        def reset(self, n):
            pass

        def __call__(self, obs):
            return np.array([0.25])

    t1 = quantum_episode(cfg, Fixed(), seed=9)
    t2 = quantum_episode(cfg, Fixed(), seed=9)
    assert np.array_equal(t1.n_expect, t2.n_expect)
    assert np.array_equal(t1.jumps, t2.jumps)


def test_moment_observation_shape():
    obs = moment_observation(2.0, 0.5, -0.3)
    assert obs.shape == (3,)
    assert obs[0] == pytest.approx(np.log10(2.0))
    assert obs[2] == -0.3
