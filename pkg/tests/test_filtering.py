"""Filter/Zakai/likelihood tests: consistency, martingales, shift identities."""

from itertools import product

import numpy as np
import pytest

from qiokit.exceptions import ValidationError, ZeroJumpRate
from qiokit.filtering import (
    log_likelihood,
    log_likelihood_many,
    run_filter,
    run_zakai,
)
from qiokit.operators import QMarkovModel
from qiokit.trajectories import (
    CountingRecord,
    DiffusiveRecord,
    simulate_counting,
    simulate_homodyne,
    simulate_reference,
)

from conftest import SM, SX, driven_qubit

ZERO2 = np.zeros((2, 2), dtype=complex)
MIXED = np.eye(2, dtype=complex) / 2
GROUND = np.diag([1.0, 0.0]).astype(complex)


class TestRunFilter:
    def test_free_evolution_is_record_independent(self):
        m = QMarkovModel(H=SX, L=ZERO2)
        rec1 = simulate_reference("wiener", 1.0, T=0.5, dt=1e-3, seed=1)
        rec2 = simulate_reference("wiener", 1.0, T=0.5, dt=1e-3, seed=2)
        t1 = run_filter(m, MIXED, rec1)
        t2 = run_filter(m, MIXED, rec2)
        assert np.max(np.abs(t1.states - t2.states)) < 1e-12
        t = 0.5
        u = np.eye(2) * np.cos(t) - 1j * np.sin(t) * SX
        assert np.max(np.abs(t1.final_state - u @ MIXED @ u.conj().T)) < 1e-3

    def test_replay_matches_simulation(self):
        m = driven_qubit()
        rec, traj = simulate_homodyne(m, MIXED, T=1.0, dt=1e-3, seed=3)
        replay = run_filter(m, MIXED, rec)
        assert np.max(np.abs(traj.states - replay.states)) < 1e-12
        crec, ctraj = simulate_counting(m, MIXED, T=5.0, dt=1e-3, seed=4)
        creplay = run_filter(m, MIXED, crec, dt=1e-3)
        assert np.max(np.abs(ctraj.states - creplay.states)) < 1e-12

    def test_filter_equals_normalized_zakai(self):
        m = driven_qubit()
        rec, _ = simulate_homodyne(m, MIXED, T=1.0, dt=1e-3, seed=5)
        f = run_filter(m, MIXED, rec)
        z = run_zakai(m, MIXED, rec)
        assert np.max(np.abs(f.states - z.states)) < 1e-8
        crec, _ = simulate_counting(m, MIXED, T=5.0, dt=1e-3, seed=6)
        f = run_filter(m, MIXED, crec, dt=1e-3)
        z = run_zakai(m, MIXED, crec, dt=1e-3)
        assert np.max(np.abs(f.states - z.states)) < 1e-8

    def test_dark_state_jump_raises(self):
        m = QMarkovModel(H=ZERO2, L=SM)
        rec = CountingRecord(horizon=1.0, jumps=[0.5])
        with pytest.raises(ZeroJumpRate):
            run_filter(m, GROUND, rec, dt=1e-3)


class TestRunZakai:
    def test_free_diffusive_trace_constant(self):
        m = QMarkovModel(H=SX, L=ZERO2)
        rec = simulate_reference("wiener", 1.0, T=1.0, dt=1e-3, seed=7)
        z = run_zakai(m, MIXED, rec)
        assert np.max(np.abs(z.logtrace)) < 1e-12

    def test_free_counting_no_jump_logtrace(self):
        m = QMarkovModel(H=ZERO2, L=ZERO2)
        z = run_zakai(m, MIXED, CountingRecord(horizon=5.0, jumps=[]), dt=1e-2)
        assert z.loglik == pytest.approx(5.0, abs=1e-12)
        # intermediate values grow linearly
        assert np.allclose(z.logtrace, z.times, atol=1e-12)

    def test_free_counting_jump_collapses(self):
        m = QMarkovModel(H=ZERO2, L=ZERO2)
        z = run_zakai(m, MIXED, CountingRecord(horizon=2.0, jumps=[1.0]), dt=1e-2)
        assert z.loglik == -np.inf

    def test_unnormalized_states_materialize(self):
        m = driven_qubit()
        rec, _ = simulate_homodyne(m, MIXED, T=0.1, dt=1e-3, seed=8)
        z = run_zakai(m, MIXED, rec)
        full = z.unnormalized_states
        tr = np.einsum("kii->k", full).real
        assert np.allclose(np.log(tr), z.logtrace, atol=1e-10)
        w = np.linalg.eigvalsh(full)
        assert w.min() >= -1e-10


class TestLogLikelihood:
    def test_counting_fast_path_matches_zakai(self):
        m = driven_qubit()
        for seed in range(4):
            rec, _ = simulate_counting(m, MIXED, T=10.0, dt=1e-3, seed=seed)
            ll = log_likelihood(m, MIXED, rec, dt=1e-3)
            z = run_zakai(m, MIXED, rec, dt=1e-3)
            assert ll == pytest.approx(z.loglik, abs=1e-9)

    def test_counting_fractional_jumps_match_zakai(self):
        m = driven_qubit()
        rec, _ = simulate_counting(m, MIXED, T=8.0, dt=1e-2, seed=30, method="exact")
        ll = log_likelihood(m, MIXED, rec, dt=1e-2)
        z = run_zakai(m, MIXED, rec, dt=1e-2)
        assert ll == pytest.approx(z.loglik, abs=1e-9)

    def test_diffusive_equals_zakai_trace(self):
        m = driven_qubit()
        rec, _ = simulate_homodyne(m, MIXED, T=1.0, dt=1e-3, seed=9)
        assert log_likelihood(m, MIXED, rec) == run_zakai(m, MIXED, rec).loglik

    def test_lambda_shift_identity_exact(self):
        m = driven_qubit()
        rec, _ = simulate_counting(m, MIXED, T=10.0, dt=1e-3, seed=10)
        l1 = log_likelihood(m, MIXED, rec, lam=1.0, dt=1e-3)
        for lam in (0.5, 2.0, 3.0):
            ll = log_likelihood(m, MIXED, rec, lam=lam, dt=1e-3)
            shift = (lam - 1.0) * rec.horizon - rec.n_jumps * np.log(lam)
            assert ll - l1 == pytest.approx(shift, abs=1e-10)

    def test_counting_empty_record_free(self):
        m = QMarkovModel(H=ZERO2, L=ZERO2)
        rec = CountingRecord(horizon=5.0, jumps=[])
        assert log_likelihood(m, MIXED, rec, dt=1e-3) == pytest.approx(5.0, abs=1e-12)
        assert log_likelihood(m, MIXED, rec, lam=2.0, dt=1e-3) == pytest.approx(
            10.0, abs=1e-12
        )

    def test_counting_dark_jump_is_minus_inf(self):
        m = QMarkovModel(H=ZERO2, L=SM)
        rec = CountingRecord(horizon=1.0, jumps=[0.5])
        assert log_likelihood(m, GROUND, rec, dt=1e-3) == -np.inf

    def test_girsanov_form_on_fine_grids(self):
        # log Tr rho_T = int m dY - (1/2) int m^2 dt for the same discrete record
        m = QMarkovModel(H=0.5 * SX, L=0.25 * SM)
        rec, _ = simulate_homodyne(m, MIXED, T=0.4, dt=1e-5, seed=11,
                                   keep_states=False)
        traj = run_filter(m, MIXED, rec)
        Lsum = m.L + m.L.conj().T
        mvals = np.einsum("ij,kji->k", Lsum, traj.states).real[:-1]
        girsanov = np.sum(mvals * rec.increments) - 0.5 * np.sum(mvals**2) * rec.dt
        assert abs(traj.loglik - girsanov) < 1e-6

    def test_loglik_c_accumulation_matches(self):
        # counting log-lik accumulation (lam - tr)dt + sum log(tr/lam) at jumps
        m = QMarkovModel(H=0.5 * SX, L=0.4 * SM)
        dt = 1e-6
        rec, _ = simulate_counting(m, MIXED, T=0.03, dt=dt, seed=12)
        traj = run_filter(m, MIXED, rec, dt=dt)
        LdL = m.L.conj().T @ m.L
        rates = np.einsum("ij,kji->k", LdL, traj.states).real
        lam = 1.0
        acc = np.sum((lam - rates[:-1])) * dt
        for tj in rec.jumps:
            k = int(round(tj / dt)) - 1  # jumps sit at cell ends
            acc += np.log(rates[k + 1] / lam)
        # the jump factor uses the pre-jump state at the cell end; replay applies
        # the no-jump substep first, so recompute from the pre-jump state
        acc2 = np.sum((lam - rates[:-1])) * dt
        prop_states = traj.states
        for tj in rec.jumps:
            k = int(round(tj / dt))
            # state right before the jump: advance states[k-1] by one no-jump step
            rho = prop_states[k - 1]
            M = np.eye(2) - dt * (1j * m.H + 0.5 * LdL)
            nj = M @ rho @ M.conj().T
            nj /= np.trace(nj).real
            acc2 += np.log(np.einsum("ij,ji->", LdL, nj).real / lam)
        ll = log_likelihood(m, MIXED, rec, dt=dt)
        assert abs(ll - acc2) < 1e-8

    def test_martingale_diffusive(self):
        m = driven_qubit()
        recs = [
            simulate_reference("wiener", 1.0, T=1.0, dt=1e-3, seed=40, index=i)
            for i in range(1500)
        ]
        w = np.exp(log_likelihood_many(m, MIXED, recs))
        se = w.std(ddof=1) / np.sqrt(len(w))
        assert abs(w.mean() - 1.0) < 3 * se

    def test_martingale_counting(self):
        m = driven_qubit()
        for lam in (1.0, 2.0):
            recs = [
                simulate_reference("poisson", lam, T=1.0, dt=1e-3, seed=41, index=i)
                for i in range(1500)
            ]
            w = np.exp(log_likelihood_many(m, MIXED, recs, lam=lam, dt=1e-3))
            se = w.std(ddof=1) / np.sqrt(len(w))
            assert abs(w.mean() - 1.0) < 3 * se + 2e-3  # MC + O(dt) jump placement

    def test_exhaustive_pattern_sum(self):
        m = driven_qubit()
        dt, n = 1e-3, 8
        total = 0.0
        for pat in product([0, 1], repeat=n):
            jumps = [(k + 1) * dt for k in range(n) if pat[k]]
            rec = CountingRecord(horizon=n * dt, jumps=jumps)
            ll = log_likelihood(m, MIXED, rec, dt=dt)
            pref = np.prod([dt if b else 1.0 - dt for b in pat])
            total += np.exp(ll) * pref
        assert abs(total - 1.0) <= 5 * dt

    def test_batch_matches_single(self):
        m = driven_qubit()
        recs = [
            simulate_reference("poisson", 1.0, T=2.0, dt=1e-3, seed=42, index=i)
            for i in range(5)
        ]
        batch = log_likelihood_many(m, MIXED, recs, dt=1e-3)
        singles = [log_likelihood(m, MIXED, r, dt=1e-3) for r in recs]
        assert np.allclose(batch, singles, atol=1e-12)
        wrecs = [
            simulate_reference("wiener", 1.0, T=0.5, dt=1e-3, seed=43, index=i)
            for i in range(5)
        ]
        batch = log_likelihood_many(m, MIXED, wrecs)
        singles = [log_likelihood(m, MIXED, r) for r in wrecs]
        assert np.allclose(batch, singles, atol=1e-12)

    def test_validation(self):
        m = driven_qubit()
        rec, _ = simulate_counting(m, MIXED, T=1.0, dt=1e-3, seed=1)
        with pytest.raises(ValidationError):
            log_likelihood(m, MIXED, rec, lam=-1.0)
        with pytest.raises(ValidationError):
            log_likelihood(m, MIXED, "not a record")
