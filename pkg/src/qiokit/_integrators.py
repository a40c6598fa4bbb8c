"""Batched integration cores for the stochastic master equations.

Not public API.  Everything here works on plain complex arrays, with
states shaped (b, d, d) and model operators (d, d) or (b, d, d), and is
shared by the trajectory generators and the filtering/likelihood layer so
that simulation, filtering and likelihood evaluation follow one and the
same discretization scheme:

* diffusive records: Euler step of the linear (Zakai) update followed by
  Hermitization, eigenvalue clipping at -1e-12 and trace renormalization;
  the trace of the linear update is the per-step likelihood factor, so the
  normalized filter equals the normalized Zakai solution identically and
  the product of factors is the Zakai trace.
* counting records: no-jump intervals advance with the first-order Kraus
  map M = 1 - dt (iH + L^dag L/2), which preserves positivity, and jumps
  apply rho -> L rho L^dag; both trace factors enter the likelihood.  The
  reference Poisson intensity enters in closed form as
  lam*T - N*log(lam), which makes the intensity-shift identity exact.
"""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np

from .exceptions import ZeroJumpRate

EIG_CLIP = -1e-12
TRACE_FLOOR = 1e-290


def dag(x):
    return np.conjugate(np.swapaxes(x, -1, -2))


def btrace(x):
    """Trace over the last two axes."""
    return np.einsum("...ii->...", x)


def expect(op, rho):
    """Tr(op @ rho) over the last two axes without forming the product."""
    return np.einsum("...ij,...ji->...", op, rho)


def lind_state(H, L, Ld, LdL, rho):
    """State-picture Lindblad generator i[rho,H] + L rho L^dag - {L^dag L, rho}/2."""
    return (
        -1j * (H @ rho - rho @ H)
        + L @ rho @ Ld
        - 0.5 * (LdL @ rho + rho @ LdL)
    )


def _clip_negative(rho):
    """Zero out eigenvalues below the clip threshold, batchwise, in place."""
    w = np.linalg.eigvalsh(rho)
    bad = w[..., 0] < EIG_CLIP
    if np.any(bad):
        wb, vb = np.linalg.eigh(rho[bad])
        np.clip(wb, 0.0, None, out=wb)
        rho[bad] = (vb * wb[..., None, :]) @ dag(vb)
    return rho


def _broadcast_rho(rho0, b):
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim == 2:
        return np.tile(rho0, (b, 1, 1))
    return np.array(rho0, dtype=complex)


def sweep_diffusive(H, L, rho0, dt, *, dY=None, dI=None, keep_states=False,
                    keep_logtrace=False):
    """Run the diffusive core over a batch.

    Exactly one of ``dY`` (replay of given records) or ``dI`` (simulation:
    innovation draws, output increments returned) must be supplied, each
    shaped (b, n).  Returns final/optional full states, the accumulated
    log trace (the log-likelihood), and the simulated increments.
    """
    simulate = dI is not None
    noise = dI if simulate else dY
    noise = np.asarray(noise, dtype=float)
    b, n = noise.shape
    rho = _broadcast_rho(rho0, b)
    d = rho.shape[-1]
    H = np.asarray(H, dtype=complex)
    L = np.asarray(L, dtype=complex)
    Ld = dag(L)
    LdL = Ld @ L
    Lsum = L + Ld

    loglik = np.zeros(b)
    alive = np.ones(b, dtype=bool)
    out_dY = np.empty((b, n)) if simulate else None
    states = np.empty((b, n + 1, d, d), dtype=complex) if keep_states else None
    logtrace = np.zeros((b, n + 1)) if keep_logtrace else None
    if keep_states:
        states[:, 0] = rho

    for k in range(n):
        m = expect(Lsum, rho).real
        if simulate:
            dy = noise[:, k] + m * dt
            out_dY[:, k] = dy
        else:
            dy = noise[:, k]
        upd = rho + dt * lind_state(H, L, Ld, LdL, rho) \
            + dy[:, None, None] * (L @ rho + rho @ Ld)
        upd = (upd + dag(upd)) * 0.5
        factor = btrace(upd).real
        _clip_negative(upd)
        tr = btrace(upd).real
        ok = (factor > 0.0) & (tr > TRACE_FLOOR)
        died = alive & ~ok
        keep = alive & ok
        upd[keep] /= tr[keep, None, None]
        upd[~keep] = rho[~keep]
        loglik[keep] += np.log(factor[keep])
        loglik[died] = -np.inf
        alive &= ok
        rho = upd
        if keep_states:
            states[:, k + 1] = rho
        if keep_logtrace:
            logtrace[:, k + 1] = loglik
    return SimpleNamespace(
        final=rho, loglik=loglik, states=states, logtrace=logtrace, dY=out_dY
    )


def nojump_kraus(H, L, LdL, delta):
    """First-order no-jump Kraus operator 1 - delta*(iH + L^dag L/2)."""
    d = np.shape(L)[-1]
    return np.eye(d) - delta * (1j * H + 0.5 * LdL)


def sweep_counting_simulate(H, L, rho0, dt, n_steps, uniforms, lam=1.0,
                            keep_states=False):
    """Bernoulli-thinning counting simulation over a batch.

    Per cell, the jump probability is Tr(L^dag L rho) dt at the cell
    start; the state advances with the no-jump Kraus map for the full
    cell and, on a jump, rho -> L rho L^dag at the cell end.  Jump times
    are the cell end times (k+1) dt.  The returned ``loglik`` is the
    record log-likelihood of each trajectory under the simulating model
    and reference intensity ``lam``.
    """
    b = uniforms.shape[0]
    rho = _broadcast_rho(rho0, b)
    d = rho.shape[-1]
    H = np.asarray(H, dtype=complex)
    L = np.asarray(L, dtype=complex)
    Ld = dag(L)
    LdL = Ld @ L
    M = nojump_kraus(H, L, LdL, dt)
    Md = dag(M)

    loglik = np.zeros(b)
    counts = np.zeros(b, dtype=int)
    jump_rows = []  # (trajectory index, cell index)
    states = np.empty((b, n_steps + 1, d, d), dtype=complex) if keep_states else None
    if keep_states:
        states[:, 0] = rho

    for k in range(n_steps):
        rate0 = expect(LdL, rho).real
        p = rate0 * dt
        nj = M @ rho @ Md
        f = btrace(nj).real
        nj /= f[:, None, None]
        rate1 = expect(LdL, nj).real
        jump = (uniforms[:, k] < p) & (rate1 > 0.0)
        loglik += np.log(f)
        if np.any(jump):
            Lj = L[jump] if L.ndim == 3 else L
            jmp = Lj @ nj[jump] @ dag(Lj)
            jmp /= rate1[jump, None, None]
            nj[jump] = jmp
            loglik[jump] += np.log(rate1[jump])
            counts[jump] += 1
            for idx in np.nonzero(jump)[0]:
                jump_rows.append((idx, k))
        rho = nj
        if keep_states:
            states[:, k + 1] = rho
    loglik += lam * n_steps * dt - counts * np.log(lam)
    jump_times = [[] for _ in range(b)]
    for idx, k in jump_rows:
        jump_times[idx].append((k + 1) * dt)
    jump_times = [np.asarray(t) for t in jump_times]
    return SimpleNamespace(
        final=rho, loglik=loglik, states=states, counts=counts,
        jump_times=jump_times,
    )


def _cell_grid(horizon, dt):
    """Cell boundaries 0, dt, 2dt, ..., horizon (fractional last cell allowed)."""
    n = int(np.ceil(horizon / dt - 1e-9))
    n = max(n, 1)
    t = np.arange(n + 1) * dt
    t[-1] = horizon
    return t


def replay_counting(H, L, rho0, dt, horizon, jumps, lam=1.0,
                    keep_states=False, on_dark="dead"):
    """Replay a counting record on a dt grid, jumps applied at their times.

    Cells are ``[k dt, (k+1) dt]``; jump times inside a cell split it into
    no-jump Kraus sub-steps with the jump map applied in between.  When a
    jump occurs at zero rate the record has likelihood zero: with
    ``on_dark="raise"`` this raises :class:`ZeroJumpRate`, otherwise the
    log trace is -inf from that point and the state freezes.
    """
    grid = _cell_grid(horizon, dt)
    n = len(grid) - 1
    rho = np.asarray(rho0, dtype=complex).copy()
    d = rho.shape[-1]
    H = np.asarray(H, dtype=complex)
    L = np.asarray(L, dtype=complex)
    Ld = dag(L)
    LdL = Ld @ L
    jumps = np.asarray(jumps, dtype=float)

    kraus_cache = {}

    def kraus(delta):
        key = round(delta / dt, 12)
        if key not in kraus_cache:
            M = nojump_kraus(H, L, LdL, delta)
            kraus_cache[key] = (M, dag(M))
        return kraus_cache[key]

    core_log = 0.0
    dead = False
    logtrace = np.empty(n + 1)
    logtrace[0] = 0.0
    states = np.empty((n + 1, d, d), dtype=complex) if keep_states else None
    if keep_states:
        states[0] = rho
    n_seen = 0

    for k in range(n):
        t0, t1 = grid[k], grid[k + 1]
        lo = np.searchsorted(jumps, t0, side="right")
        hi = np.searchsorted(jumps, t1, side="right")
        if not dead:
            pos = t0
            for tau in jumps[lo:hi]:
                delta = tau - pos
                if delta > 0:
                    M, Md = kraus(delta)
                    upd = M @ rho @ Md
                    f = btrace(upd).real
                    rho = upd / f
                    core_log += np.log(f)
                pos = tau
                rate = expect(LdL, rho).real
                if rate <= 1e-14:
                    if on_dark == "raise":
                        raise ZeroJumpRate(
                            f"record jumps at t={tau:.6g} while the jump rate is zero"
                        )
                    dead = True
                    break
                rho = (L @ rho @ Ld) / rate
                core_log += np.log(rate)
            if not dead and t1 > pos:
                M, Md = kraus(t1 - pos)
                upd = M @ rho @ Md
                f = btrace(upd).real
                rho = upd / f
                core_log += np.log(f)
        n_seen = hi
        logtrace[k + 1] = (
            -np.inf if dead else core_log + lam * t1 - n_seen * np.log(lam)
        )
        if keep_states:
            states[k + 1] = rho
    return SimpleNamespace(
        times=grid, states=states, logtrace=logtrace,
        loglik=float(logtrace[-1]), final=rho, dead=dead,
    )


class CountingLoglik:
    """Fast counting log-likelihood, identical in scheme to the grid replay.

    Propagates the vectorized linear map through whole-cell powers (via an
    eigendecomposition of the one-cell superoperator) and fractional
    sub-steps at jump times, renormalizing per segment.  Cost is
    O(number of jumps), independent of the number of grid cells, which is
    what makes likelihood optimization over long records practical.
    """

    _CHUNK = 10_000  # renormalize at least this often to dodge underflow

    def __init__(self, H, L, dt, lam=1.0):
        self.dt = float(dt)
        self.lam = float(lam)
        self.H = np.asarray(H, dtype=complex)
        self.L = np.asarray(L, dtype=complex)
        self.d = self.L.shape[0]
        LdL = self.L.conj().T @ self.L
        self._LdL = LdL
        M = nojump_kraus(self.H, self.L, LdL, self.dt)
        Mv = np.kron(M.conj(), M)
        self._Mv = Mv
        self._Jv = np.kron(self.L.conj(), self.L)
        self._tracevec = np.eye(self.d).reshape(-1, order="F").astype(complex)
        try:
            w, P = np.linalg.eig(Mv)
            Pinv = np.linalg.inv(P)
            cond = np.linalg.cond(P)
            self._eig = (w, P, Pinv) if np.isfinite(cond) and cond < 1e12 else None
        except np.linalg.LinAlgError:
            self._eig = None

    def _power_renorm(self, v, k, total):
        """k whole-cell no-jump steps, renormalized, log factor accumulated.

        Works in chunks so the trace never underflows on long jump-free runs.
        """
        while k > 0:
            step = min(k, self._CHUNK)
            if self._eig is not None:
                w, P, Pinv = self._eig
                v = P @ (w**step * (Pinv @ v))
            else:
                v = np.linalg.matrix_power(self._Mv, step) @ v
            k -= step
            tr = (self._tracevec @ v).real
            if tr <= 0.0:
                return v, -np.inf
            v = v / tr
            total += np.log(tr)
        return v, total

    def _frac_renorm(self, v, delta, total):
        """Fractional no-jump sub-step, renormalized, log factor accumulated."""
        M = nojump_kraus(self.H, self.L, self._LdL, delta)
        rho = v.reshape((self.d, self.d), order="F")
        v = (M @ rho @ M.conj().T).reshape(-1, order="F")
        tr = (self._tracevec @ v).real
        if tr <= 0.0:
            return v, -np.inf
        return v / tr, total + np.log(tr)

    def loglik(self, rho0, horizon, jumps):
        grid = _cell_grid(horizon, self.dt)
        n = len(grid) - 1
        jumps = np.asarray(jumps, dtype=float)
        v = np.asarray(rho0, dtype=complex).reshape(-1, order="F").copy()
        total = 0.0
        # cell j holds jumps in (grid[j], grid[j+1]]
        jcell = np.searchsorted(grid, jumps, side="left") - 1
        last_is_std = abs((grid[n] - grid[n - 1]) - self.dt) <= 1e-12 * self.dt
        jp = 0
        next_cell = 0
        while jp < len(jumps) and np.isfinite(total):
            c = int(jcell[jp])
            v, total = self._power_renorm(v, c - next_cell, total)
            pos = grid[c]
            while jp < len(jumps) and jcell[jp] == c and np.isfinite(total):
                tau = jumps[jp]
                if tau - pos > 1e-15:
                    v, total = self._frac_renorm(v, tau - pos, total)
                rate = float(np.einsum(
                    "ij,ji->", self._LdL, v.reshape((self.d, self.d), order="F")
                ).real)
                if rate <= 1e-14:
                    return -np.inf
                v = self._Jv @ v
                tr = (self._tracevec @ v).real
                total += np.log(tr)
                v = v / tr
                pos = tau
                jp += 1
            if np.isfinite(total) and grid[c + 1] - pos > 1e-15:
                v, total = self._frac_renorm(v, grid[c + 1] - pos, total)
            next_cell = c + 1
        if not np.isfinite(total):
            return -np.inf
        # jump-free tail; the last cell may be fractional
        if next_cell < n:
            if last_is_std:
                v, total = self._power_renorm(v, n - next_cell, total)
            else:
                v, total = self._power_renorm(v, n - 1 - next_cell, total)
                if np.isfinite(total):
                    v, total = self._frac_renorm(v, grid[n] - grid[n - 1], total)
        if not np.isfinite(total):
            return -np.inf
        return float(
            total + self.lam * horizon - len(jumps) * np.log(self.lam)
        )


def sample_counting_exact(H, L, rho0, T, rng):
    """Exact waiting-time sampling of jump times via the effective Hamiltonian.

    Propagates the no-jump dynamics with expm(-i H_e t), H_e = H - i L^dag L/2,
    and inverts the survival probability Tr(M rho M^dag) by bisection.
    Returns (jump_times, final normalized state).  Intended for small
    dimensions; the cost per jump is one eigendecomposition reuse plus a
    bisection loop.
    """
    H = np.asarray(H, dtype=complex)
    L = np.asarray(L, dtype=complex)
    d = L.shape[0]
    LdL = L.conj().T @ L
    gen = -(1j * H + 0.5 * LdL)
    w, P = np.linalg.eig(gen)
    Pinv = np.linalg.inv(P)

    def propagate(rho, tau):
        M = (P * np.exp(w * tau)) @ Pinv
        return M @ rho @ M.conj().T

    rho = np.asarray(rho0, dtype=complex).copy()
    t = 0.0
    times = []
    while t < T:
        u = rng.random()
        remaining = T - t
        if btrace(propagate(rho, remaining)).real > u:
            rho = propagate(rho, remaining)
            rho /= btrace(rho).real
            break
        lo, hi = 0.0, remaining
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if btrace(propagate(rho, mid)).real > u:
                lo = mid
            else:
                hi = mid
        tau = 0.5 * (lo + hi)
        rho = propagate(rho, tau)
        rho /= btrace(rho).real
        rate = expect(LdL, rho).real
        if rate <= 1e-14:
            break
        rho = (L @ rho @ L.conj().T) / rate
        t += tau
        times.append(min(t, T))
        if t >= T:
            break
    return np.asarray(times), rho
