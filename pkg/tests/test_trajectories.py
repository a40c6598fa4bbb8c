"""Trajectory-engine tests: record generation, statistics, determinism."""

import numpy as np
import pytest

from qiokit.exceptions import StepTooLarge, ValidationError
from qiokit.operators import QMarkovModel, stationary_state
from qiokit.trajectories import (
    CountingRecord,
    DiffusiveRecord,
    simulate_counting,
    simulate_counting_ensemble,
    simulate_homodyne,
    simulate_homodyne_ensemble,
    simulate_reference,
    trajectory_rng,
)

from conftest import SM, SX, decay_qubit, driven_qubit

ZERO2 = np.zeros((2, 2), dtype=complex)
MIXED = np.eye(2, dtype=complex) / 2
EXCITED = np.diag([0.0, 1.0]).astype(complex)


class TestRecordTypes:
    def test_diffusive_invariants(self):
        r = DiffusiveRecord(dt=0.1, increments=[0.1, -0.2])
        assert r.t_final == pytest.approx(0.2)
        with pytest.raises(ValidationError):
            DiffusiveRecord(dt=-0.1, increments=[0.1])
        with pytest.raises(ValidationError):
            DiffusiveRecord(dt=0.1, increments=[])
        with pytest.raises(ValidationError):
            DiffusiveRecord(dt=0.1, increments=[np.nan])

    def test_counting_invariants(self):
        r = CountingRecord(horizon=1.0, jumps=[0.2, 0.7])
        assert r.n_jumps == 2
        with pytest.raises(ValidationError):
            CountingRecord(horizon=1.0, jumps=[0.7, 0.2])
        with pytest.raises(ValidationError):
            CountingRecord(horizon=1.0, jumps=[0.5, 1.5])
        with pytest.raises(ValidationError):
            CountingRecord(horizon=1.0, jumps=[0.0, 0.5])


class TestHomodyne:
    def test_free_evolution_statistics(self):
        # L = 0: increments are iid N(0, dt)
        m = QMarkovModel(H=SX, L=ZERO2)
        rec, _ = simulate_homodyne(m, MIXED, T=40.0, dt=1e-3, seed=1,
                                   keep_states=False)
        n = len(rec)
        var = rec.increments.var()
        # sample variance of N(0,dt): sd ~ dt*sqrt(2/n)
        assert abs(var - 1e-3) < 3 * 1e-3 * np.sqrt(2 / n)
        assert abs(rec.increments.mean()) < 3 * np.sqrt(1e-3 / n)

    def test_free_evolution_matches_unitary(self):
        m = QMarkovModel(H=SX, L=ZERO2)
        rho0 = EXCITED
        _, traj = simulate_homodyne(m, rho0, T=1.0, dt=1e-4, seed=2)
        t = traj.times[-1]
        u = np.eye(2) * np.cos(t) - 1j * np.sin(t) * SX  # exp(-i sx t)
        want = u @ rho0 @ u.conj().T
        assert np.max(np.abs(traj.states[-1] - want)) < 5e-4  # O(dt) per step

    def test_single_step(self):
        rec, traj = simulate_homodyne(driven_qubit(), MIXED, T=1e-3, dt=1e-3, seed=3)
        assert len(rec) == 1
        assert traj.states.shape == (2, 2, 2)

    def test_step_guard(self):
        with pytest.raises(StepTooLarge):
            simulate_homodyne(driven_qubit(kappa=10.0), MIXED, T=1.0, dt=0.05, seed=0)

    def test_determinism_and_stream_consistency(self):
        m = driven_qubit()
        r1, t1 = simulate_homodyne(m, MIXED, T=0.5, dt=1e-3, seed=11)
        r2, t2 = simulate_homodyne(m, MIXED, T=0.5, dt=1e-3, seed=11)
        assert np.array_equal(r1.increments, r2.increments)
        assert t1.loglik == t2.loglik
        ens = simulate_homodyne_ensemble(m, MIXED, T=0.5, dt=1e-3, n_traj=3, seed=11)
        assert np.array_equal(ens.increments[0], r1.increments)
        r3, _ = simulate_homodyne(m, MIXED, T=0.5, dt=1e-3, seed=11, index=2)
        assert np.array_equal(ens.increments[2], r3.increments)

    def test_emitted_states_are_physical(self):
        _, traj = simulate_homodyne(driven_qubit(), EXCITED, T=2.0, dt=1e-3, seed=5)
        tr = np.einsum("kii->k", traj.states).real
        assert np.max(np.abs(tr - 1)) < 1e-8
        w = np.linalg.eigvalsh(traj.states)
        assert w.min() >= -1e-10

    def test_stationary_output_mean(self):
        # ensemble mean of (1/T) int dY approaches Tr(rho_ss (L+L^dag))
        m = driven_qubit()
        rho_ss = stationary_state(m).rho
        want = np.trace(rho_ss @ (m.L + m.L.conj().T)).real
        T, n_traj = 15.0, 1000
        ens = simulate_homodyne_ensemble(m, rho_ss, T=T, dt=0.01, n_traj=n_traj, seed=7)
        means = ens.increments.sum(axis=1) / T
        se = means.std(ddof=1) / np.sqrt(n_traj)
        assert abs(means.mean() - want) < 3 * se


class TestCounting:
    def test_no_jumps_without_coupling(self):
        m = QMarkovModel(H=SX, L=ZERO2)
        rec, _ = simulate_counting(m, MIXED, T=5.0, dt=1e-3, seed=1)
        assert rec.n_jumps == 0

    def test_decay_at_most_one_jump(self):
        m = decay_qubit(kappa=1.0)
        ens = simulate_counting_ensemble(m, EXCITED, T=10.0, dt=5e-3,
                                         n_traj=800, seed=2)
        assert ens.counts.max() <= 1
        # P(one jump by T=10) = 1 - exp(-10)
        p = 1 - np.exp(-10.0)
        phat = ens.counts.mean()
        se = np.sqrt(p * (1 - p) / ens.n_traj) + 1e-4
        assert abs(phat - p) < 3 * se + 1e-3  # includes O(dt) thinning bias

    def test_count_rate_matches_stationary_rate(self):
        m = driven_qubit()
        rho_ss = stationary_state(m).rho
        mu = np.trace(rho_ss @ m.L.conj().T @ m.L).real
        T = 60.0
        ens = simulate_counting_ensemble(m, rho_ss, T=T, dt=0.01, n_traj=1200, seed=3)
        rates = ens.counts / T
        se = rates.std(ddof=1) / np.sqrt(ens.n_traj)
        assert abs(rates.mean() - mu) < 3 * se + mu * 0.01 * 1.0  # MC + O(dt)

    def test_determinism(self):
        m = driven_qubit()
        r1, _ = simulate_counting(m, MIXED, T=5.0, dt=1e-3, seed=9)
        r2, _ = simulate_counting(m, MIXED, T=5.0, dt=1e-3, seed=9)
        assert np.array_equal(r1.jumps, r2.jumps)
        ens = simulate_counting_ensemble(m, MIXED, T=5.0, dt=1e-3, n_traj=2, seed=9)
        assert np.array_equal(ens.jump_times[0], r1.jumps)

    def test_emitted_states_are_physical(self):
        _, traj = simulate_counting(driven_qubit(), EXCITED, T=5.0, dt=1e-3, seed=4)
        tr = np.einsum("kii->k", traj.states).real
        assert np.max(np.abs(tr - 1)) < 1e-8
        assert np.linalg.eigvalsh(traj.states).min() >= -1e-10

    def test_exact_sampler_decay_law(self):
        # single decay: jump time is Exp(kappa) truncated to the horizon
        m = decay_qubit(kappa=2.0)
        times = []
        for i in range(400):
            rec, _ = simulate_counting(m, EXCITED, T=20.0, dt=0.01, seed=6,
                                       index=i, method="exact", keep_states=False)
            if rec.n_jumps:
                times.append(rec.jumps[0])
        times = np.asarray(times)
        # mean of Exp(2) is 0.5
        se = times.std(ddof=1) / np.sqrt(len(times))
        assert abs(times.mean() - 0.5) < 3 * se

    def test_exact_matches_bernoulli_rate(self):
        m = driven_qubit()
        counts = []
        for i in range(300):
            rec, _ = simulate_counting(m, MIXED, T=20.0, dt=0.01, seed=8,
                                       index=i, method="exact", keep_states=False)
            counts.append(rec.n_jumps)
        mu = np.trace(stationary_state(m).rho @ m.L.conj().T @ m.L).real
        rates = np.asarray(counts) / 20.0
        se = rates.std(ddof=1) / np.sqrt(len(rates))
        assert abs(rates.mean() - mu) < 3 * se + 0.01


class TestReference:
    def test_wiener_single_step(self):
        r = simulate_reference("wiener", 1.0, T=1e-3, dt=1e-3, seed=0)
        assert isinstance(r, DiffusiveRecord) and len(r) == 1

    def test_poisson_mean_count(self):
        counts = [
            simulate_reference("poisson", 1.0, T=10.0, dt=1e-3, seed=1, index=i).n_jumps
            for i in range(500)
        ]
        counts = np.asarray(counts, dtype=float)
        se = counts.std(ddof=1) / np.sqrt(len(counts))
        assert abs(counts.mean() - 10.0) < 3 * se

    def test_poisson_small_intensity_usually_empty(self):
        empties = sum(
            simulate_reference("poisson", 0.01, T=1.0, dt=1.0, seed=2, index=i).n_jumps == 0
            for i in range(100)
        )
        assert empties >= 95

    def test_validation(self):
        with pytest.raises(ValidationError):
            simulate_reference("poisson", -1.0, T=1.0, dt=0.1, seed=0)
        with pytest.raises(ValidationError):
            simulate_reference("laplace", 1.0, T=1.0, dt=0.1, seed=0)


def test_trajectory_rng_streams_are_independent():
    a = trajectory_rng(5, 0).random(4)
    b = trajectory_rng(5, 1).random(4)
    c = trajectory_rng(5, 0).random(4)
    assert np.array_equal(a, c)
    assert not np.array_equal(a, b)


def test_time_averaged_filter_mean_reaches_stationarity():
    # ergodic model: late-time average of <L^dag L> matches the stationary value
    m = driven_qubit()
    rho_ss = stationary_state(m).rho
    want = np.trace(rho_ss @ m.L.conj().T @ m.L).real
    ens = simulate_homodyne_ensemble(m, EXCITED, T=20.0, dt=0.01, n_traj=300,
                                     seed=13, keep_states=True)
    LdL = m.L.conj().T @ m.L
    expct = np.einsum("ij,btji->bt", LdL, ens.states).real
    half = expct.shape[1] // 2
    tavg = expct[:, half:].mean(axis=1)
    se = tavg.std(ddof=1) / np.sqrt(len(tavg))
    assert abs(tavg.mean() - want) < 3 * se + 0.01
