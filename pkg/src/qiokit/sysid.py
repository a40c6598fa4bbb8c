"""Black-box identification of linear quantum systems from homodyne records.

End-to-end pipeline: PRBS input design, combined deterministic-stochastic
subspace identification (block Hankel matrices, oblique projection, SVD
truncation, least-squares state-space recovery), projection of the raw
estimate onto the physically realizable set, recovery of the unmeasured
output row, FPE order selection and NMSE validation.

The realizability projection sweeps the feasible set of the generalized
constraints by the parametrization (R, K, T): every solution is a
similarity transform ``(T A0 T^-1, T B0, C0 T^-1)`` of a physical system
built from a quadratic specification, with certificate ``Z = T J_n T^T``.
The distance to the raw estimate is minimized by damped Gauss-Newton
(``scipy.optimize.least_squares``) with numerical Jacobians and
multi-starts, one of them the closed-form inversion of the raw estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import optimize

from .exceptions import (
    DegenerateOutput,
    InsufficientData,
    LogBranch,
    NotExciting,
    OptimizationFailed,
    SingularZ,
    ValidationError,
)
from .linear import (
    LinearQSystem,
    QuadraticSpec,
    QUAD_ROW,
    build_linear_system,
    kalman_gain,
    simulate_innovation_form,
    symplectic_form,
)
from .trajectories import DiffusiveRecord

__all__ = [
    "SysIdDataset",
    "SubspaceEstimate",
    "ProjectionResult",
    "SysIdResult",
    "PipelineConfig",
    "prbs",
    "prbs_pair",
    "subspace_id",
    "pr_projection",
    "recover_full_c",
    "fpe_order_select",
    "validate_nmse",
    "run_pipeline",
]

# maximal-length LFSR tap positions (Fibonacci form, 1-indexed from the
# output end), one polynomial per supported register size
_LFSR_TAPS = {
    8: (8, 6, 5, 4),
    12: (12, 11, 10, 4),
    16: (16, 15, 13, 4),
    20: (20, 3),
    24: (24, 23, 22, 17),
}


def _auto_register(length: int) -> int:
    for cand in sorted(_LFSR_TAPS):
        if 2**cand - 1 >= length:
            return cand
    return max(_LFSR_TAPS)


def prbs(length: int, amplitude: float, seed: int,
         register: int | None = None) -> np.ndarray:
    """Pseudo-random binary sequence in {-amplitude, +amplitude}.

    Generated by a maximal-length Fibonacci LFSR; the register size is the
    smallest supported one whose period covers ``length`` unless fixed by
    ``register``.  Deterministic in ``seed``.  Distinct seeds on one
    register give shifted copies of the same m-sequence, so multi-channel
    excitation should use distinct registers (different polynomials), as
    ``run_pipeline`` does.
    """
    if length < 1:
        raise ValidationError("length must be at least 1")
    if not amplitude > 0:
        raise ValidationError("amplitude must be positive")
    nbits = _auto_register(length) if register is None else int(register)
    if nbits not in _LFSR_TAPS:
        raise ValidationError(
            f"unsupported register size {nbits}; choose from {sorted(_LFSR_TAPS)}"
        )
    taps = _LFSR_TAPS[nbits]
    mask = (1 << nbits) - 1
    state = (int(seed) * 2654435761 + 88172645463325252) & mask
    if state == 0:
        state = 1
    out = np.empty(length)
    for k in range(length):
        out[k] = amplitude if (state & 1) else -amplitude
        fb = 0
        for t in taps:
            fb ^= (state >> (t - 1)) & 1
        state = (state >> 1) | (fb << (nbits - 1))
    return out


def prbs_pair(length: int, amplitude: float, seed: int) -> np.ndarray:
    """Two-channel PRBS input (length, 2) on distinct LFSR polynomials.

    Using different registers keeps the channels from being shifted copies
    of one m-sequence, which would make the input block Hankel matrix rank
    deficient whenever the shift is small.
    """
    reg1 = _auto_register(length)
    larger = [r for r in sorted(_LFSR_TAPS) if r > reg1]
    reg2 = larger[0] if larger else sorted(_LFSR_TAPS)[-2]
    return np.stack(
        [
            prbs(length, amplitude, 2 * seed + 1, register=reg1),
            prbs(length, amplitude, 2 * seed + 2, register=reg2),
        ],
        axis=1,
    )


@dataclass(frozen=True)
class SysIdDataset:
    """Sampled input/output data with a contiguous estimation/validation split."""

    dt: float
    inputs: np.ndarray    # (N, 2)
    outputs: np.ndarray   # (N,) output samples y_k = dY_k / dt
    split_index: int

    def __post_init__(self):
        u = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.outputs, dtype=float).reshape(-1)
        if u.ndim != 2 or u.shape[1] != 2:
            raise ValidationError("inputs must be (N, 2)")
        if len(u) != len(y):
            raise ValidationError("inputs and outputs must have equal length")
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if not (0 < self.split_index < len(y)):
            raise ValidationError("both splits must be nonempty")
        u.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "outputs", y)

    @classmethod
    def from_record(cls, record: DiffusiveRecord, inputs, split: float = 0.7):
        y = record.increments / record.dt
        idx = int(round(split * len(y)))
        idx = min(max(idx, 1), len(y) - 1)
        return cls(dt=record.dt, inputs=np.asarray(inputs, float),
                   outputs=y, split_index=idx)

    @property
    def n_samples(self) -> int:
        return len(self.outputs)

    def estimation(self):
        return self.inputs[: self.split_index], self.outputs[: self.split_index]

    def validation(self):
        return self.inputs[self.split_index:], self.outputs[self.split_index:]


@dataclass(frozen=True)
class SubspaceEstimate:
    """Discrete and continuous-time subspace estimates (feedthrough known)."""

    Ad: np.ndarray
    Bd: np.ndarray
    C: np.ndarray        # (1, 2n) measured output row
    Kd: np.ndarray       # (2n, 1) discrete innovation gain (zeros on failure)
    A: np.ndarray
    B: np.ndarray
    singular_values: np.ndarray
    dt: float


def _blkhank(x: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Block Hankel with `rows` block rows from channel-major data (c, N)."""
    c = x.shape[0]
    H = np.empty((c * rows, cols))
    for k in range(rows):
        H[k * c : (k + 1) * c] = x[:, k : k + cols]
    return H


def _oblique(Yf, Uf, Wp):
    """Oblique projection of Yf onto row(Wp) along row(Uf) via LQ factors."""
    stacked = np.vstack([Uf, Wp, Yf])
    _, r = np.linalg.qr(stacked.T)
    L = r.T
    nu, nw = Uf.shape[0], Wp.shape[0]
    L22 = L[nu : nu + nw, nu : nu + nw]
    L32 = L[nu + nw :, nu : nu + nw]
    return L32 @ np.linalg.pinv(L22) @ Wp


def _discrete_to_continuous(Ad, Bd, dt):
    ev = np.linalg.eigvals(Ad)
    on_neg_axis = (np.abs(ev.imag) <= 1e-12 * np.maximum(1.0, np.abs(ev))) & (
        ev.real <= 0.0
    )
    if np.any(on_neg_axis):
        raise LogBranch(
            "discrete drift has eigenvalues on the closed negative real axis; "
            "principal logarithm undefined"
        )
    A = scipy.linalg.logm(Ad) / dt
    if np.max(np.abs(A.imag)) > 1e-6 * max(1.0, np.max(np.abs(A.real))):
        raise LogBranch("matrix logarithm of the discrete drift is not real")
    A = A.real
    M = Ad - np.eye(Ad.shape[0])
    if np.linalg.cond(M) < 1e12:
        B = np.linalg.solve(M, A @ Bd)  # exact zero-order-hold inversion
    else:
        B = Bd / dt
    return A, B


def _subspace_discrete(
    data: SysIdDataset, order: int, horizon: int,
    D: np.ndarray | None = None, quadrature: str = "Q",
):
    """Discrete-time subspace estimate (Ad, Bd, C, Kd, singular values)."""
    ns = 2 * order
    i = int(horizon)
    if i < ns + 1:
        raise ValidationError("horizon must exceed the state dimension")
    D = np.eye(2) if D is None else np.asarray(D, dtype=float)
    u, y_raw = data.estimation()
    y = y_raw - u @ D[QUAD_ROW[quadrature]]
    N = len(y)
    if N < 10 * (2 * i) * ns:
        raise InsufficientData(
            f"need at least {10 * 2 * i * ns} estimation samples, got {N}"
        )
    m, ell = 2, 1
    j = N - 2 * i + 1
    if j < 2 * i * (m + ell):
        raise InsufficientData("too few Hankel columns for the requested horizon")
    U = _blkhank(u.T, 2 * i, j)
    Y = _blkhank(y[None, :], 2 * i, j)
    sv_u = np.linalg.svd(U, compute_uv=False)
    if sv_u[0] <= 0 or sv_u[-1] < 1e-9 * sv_u[0]:
        raise NotExciting("input block Hankel matrix is rank deficient")

    Up, Uf = U[: i * m], U[i * m :]
    Yp, Yf = Y[: i * ell], Y[i * ell :]
    Wp = np.vstack([Up, Yp])
    Upp, Ufm = U[: (i + 1) * m], U[(i + 1) * m :]
    Ypp, Yfm = Y[: (i + 1) * ell], Y[(i + 1) * ell :]
    Wpp = np.vstack([Upp, Ypp])

    Oi = _oblique(Yf, Uf, Wp)
    Oim = _oblique(Yfm, Ufm, Wpp)
    Usv, sv, _ = np.linalg.svd(Oi, full_matrices=False)
    if ns > len(sv):
        raise ValidationError("order too large for the projection rank")
    gam = Usv[:, :ns] * np.sqrt(sv[:ns])[None, :]
    gam_minus = gam[:-ell]
    Xi = np.linalg.pinv(gam) @ Oi
    Xip = np.linalg.pinv(gam_minus) @ Oim

    Uii = U[i * m : (i + 1) * m]
    Yii = Y[i * ell : (i + 1) * ell]
    reg = np.vstack([Xi, Uii])
    theta, *_ = np.linalg.lstsq(reg.T, Xip.T, rcond=None)
    theta = theta.T
    Ad, Bd = theta[:, :ns], theta[:, ns:]
    c_row, *_ = np.linalg.lstsq(Xi.T, Yii.T, rcond=None)
    C = c_row.T

    res_w = Xip - Ad @ Xi - Bd @ Uii
    res_e = Yii - C @ Xi
    Qw = res_w @ res_w.T / j
    Re = res_e @ res_e.T / j
    Sw = res_w @ res_e.T / j
    try:
        P = scipy.linalg.solve_discrete_are(Ad.T, C.T, Qw, Re, s=Sw)
        Kd = np.linalg.solve((C @ P @ C.T + Re).T, (Ad @ P @ C.T + Sw).T).T
    except (np.linalg.LinAlgError, ValueError):
        Kd = np.zeros((ns, ell))
    return Ad, Bd, C, Kd, sv


def _balance(A, B, C):
    """Similarity transform to an internally balanced realization.

    The subspace basis is arbitrary and often badly scaled (tiny B against
    a large C), which would skew any distance-based projection; balancing
    equalizes the controllability and observability Gramians.  Falls back
    to a scalar rescaling when the Gramians are unavailable (non-Hurwitz
    or near-singular case).
    """
    ns = A.shape[0]
    try:
        if np.any(np.linalg.eigvals(A).real >= -1e-12):
            raise np.linalg.LinAlgError("drift not Hurwitz")
        Wc = scipy.linalg.solve_continuous_lyapunov(A, -B @ B.T)
        Wo = scipy.linalg.solve_continuous_lyapunov(A.T, -C.T @ C)
        Wc = (Wc + Wc.T) / 2
        Wo = (Wo + Wo.T) / 2
        R = np.linalg.cholesky(Wc + 1e-12 * np.trace(Wc) / ns * np.eye(ns))
        lam, U = np.linalg.eigh(R.T @ Wo @ R)
        if lam[0] <= 1e-12 * lam[-1]:
            raise np.linalg.LinAlgError("observability Gramian near singular")
        T = R @ U @ np.diag(lam ** -0.25)
        Tinv = np.diag(lam ** 0.25) @ U.T @ np.linalg.inv(R)
    except np.linalg.LinAlgError:
        nb, nc = np.linalg.norm(B), np.linalg.norm(C)
        s = np.sqrt(nc / nb) if nb > 0 and nc > 0 else 1.0
        T = np.eye(ns) / s
        Tinv = np.eye(ns) * s
    return T, Tinv


def subspace_id(
    data: SysIdDataset, order: int, horizon: int,
    D: np.ndarray | None = None, quadrature: str = "Q",
) -> SubspaceEstimate:
    """Combined deterministic-stochastic subspace identification.

    The known feedthrough (measured row of ``D``, identity by default) is
    removed from the outputs, which then regress on states only.
    ``order`` counts oscillator modes: the state dimension is 2*order.
    Continuous matrices come from the principal matrix logarithm, with an
    explicit :class:`LogBranch` failure instead of a silent branch repair;
    the returned realization is internally balanced.
    """
    Ad, Bd, C, Kd, sv = _subspace_discrete(data, order, horizon, D, quadrature)
    A, B = _discrete_to_continuous(Ad, Bd, data.dt)
    T, Tinv = _balance(A, B, C)
    A, B, C = Tinv @ A @ T, Tinv @ B, C @ T
    Ad, Bd, Kd = Tinv @ Ad @ T, Tinv @ Bd, Tinv @ Kd
    return SubspaceEstimate(
        Ad=Ad, Bd=Bd, C=C, Kd=Kd, A=A, B=B, singular_values=sv, dt=data.dt
    )


# --- physical-realizability projection ---------------------------------------


def _pack(R, K, T):
    n2 = R.shape[0]
    iu = np.triu_indices(n2)
    return np.concatenate([R[iu], K.real, K.imag, T.reshape(-1)])


def _unpack(params, n2):
    iu = np.triu_indices(n2)
    m_r = len(iu[0])
    R = np.zeros((n2, n2))
    R[iu] = params[:m_r]
    R = R + np.triu(R, 1).T
    k_re = params[m_r : m_r + n2]
    k_im = params[m_r + n2 : m_r + 2 * n2]
    T = params[m_r + 2 * n2 :].reshape(n2, n2)
    return R, k_re + 1j * k_im, T


def _assemble(params, n2):
    R, K, T = _unpack(params, n2)
    G0 = build_linear_system(QuadraticSpec(R=R, K=K))
    Tinv = np.linalg.solve(T, np.eye(n2))
    A = T @ G0.A @ Tinv
    B = T @ G0.B
    C_full = G0.C @ Tinv
    Z = T @ symplectic_form(n2 // 2) @ T.T
    return A, B, C_full, Z


@dataclass(frozen=True)
class ProjectionResult:
    A: np.ndarray
    B: np.ndarray
    C_m: np.ndarray      # (1, 2n) measured row of the projected system
    Z: np.ndarray
    cost: float
    start_costs: np.ndarray
    feasibility: float


def pr_projection(
    raw: tuple, D: np.ndarray, quadrature: str = "Q",
    *, n_starts: int = 8, seed: int = 0, max_nfev: int = 400,
) -> ProjectionResult:
    """Project a raw (A, B, C_m) estimate onto the realizable set.

    Minimizes ``M = (||A - Ahat||^2 + ||B - Bhat||^2 + ||Cm - Cmhat||^2)/2``
    over the (R, K, T) parametrization of the generalized-constraint
    feasible set; multi-start damped Gauss-Newton with the closed-form
    inversion of the raw estimate as the first start.
    """
    if quadrature not in QUAD_ROW:
        raise ValidationError("quadrature must be 'Q' or 'P'")
    row = QUAD_ROW[quadrature]
    Ahat = np.asarray(raw[0], dtype=float)
    Bhat = np.asarray(raw[1], dtype=float)
    Cmhat = np.asarray(raw[2], dtype=float).reshape(1, -1)
    n2 = Ahat.shape[0]
    if n2 % 2 or Bhat.shape != (n2, 2) or Cmhat.shape != (1, n2):
        raise ValidationError("raw estimate has inconsistent shapes")
    Jn = symplectic_form(n2 // 2)

    def residuals(params):
        try:
            A, B, C_full, _ = _assemble(params, n2)
        except np.linalg.LinAlgError:
            return np.full(n2 * n2 + 2 * n2 + n2, 1e6)
        return np.concatenate(
            [
                (A - Ahat).reshape(-1),
                (B - Bhat).reshape(-1),
                (C_full[row] - Cmhat[0]),
            ]
        )

    # closed-form start: invert the construction map on the raw estimate
    R0 = -0.5 * Jn @ Ahat
    R0 = (R0 + R0.T) / 2
    N0 = -0.5 * Jn @ Bhat
    K0 = N0[:, 1] - 1j * N0[:, 0]
    starts = [_pack(R0, K0, np.eye(n2))]
    rng = np.random.default_rng(seed)
    scale = max(1.0, np.abs(R0).max(), np.abs(K0).max())
    for _ in range(n_starts - 1):
        Rp = R0 + 0.3 * scale * rng.normal(size=R0.shape)
        Rp = (Rp + Rp.T) / 2
        Kp = K0 + 0.3 * scale * (rng.normal(size=n2) + 1j * rng.normal(size=n2))
        Tp = np.eye(n2) + 0.2 * rng.normal(size=(n2, n2))
        starts.append(_pack(Rp, Kp, Tp))

    best = None
    costs = []
    for x0 in starts:
        sol = optimize.least_squares(
            residuals, x0, method="trf", max_nfev=max_nfev, xtol=1e-14, ftol=1e-14
        )
        costs.append(sol.cost)
        if best is None or sol.cost < best.cost:
            best = sol
    A, B, C_full, Z = _assemble(best.x, n2)
    J = symplectic_form(1)
    feas = max(
        np.max(np.abs(A @ Z + Z @ A.T + B @ J @ B.T)),
        np.max(np.abs(Z @ C_full.T + B @ J)),
    )
    if not np.isfinite(feas) or feas > 1e-6 * max(1.0, np.abs(A).max()):
        raise OptimizationFailed(
            f"no feasible projection below tolerance (residual {feas:.3e})"
        )
    return ProjectionResult(
        A=A, B=B, C_m=C_full[row : row + 1].copy(), Z=Z,
        cost=float(best.cost), start_costs=np.asarray(costs), feasibility=float(feas),
    )


def recover_full_c(
    Z: np.ndarray, B: np.ndarray, D: np.ndarray,
    measured_row: str | None = None, c_m: np.ndarray | None = None,
) -> np.ndarray:
    """Full output matrix from the realizability identity Z C^T + B J D^T = 0.

    With Z invertible every row of C is determined as
    ``C = -(Z^{-1} B J D^T)^T``; when the measured row and its estimate are
    supplied, that row is kept as estimated and only the other row comes
    from the identity.
    """
    Z = np.asarray(Z, dtype=float)
    B = np.asarray(B, dtype=float)
    D = np.asarray(D, dtype=float)
    J = symplectic_form(1)
    if np.linalg.cond(Z) > 1e12:
        raise SingularZ("certificate Z is not invertible")
    C = -np.linalg.solve(Z, B @ J @ D.T).T
    if measured_row is not None and c_m is not None:
        C = C.copy()
        C[QUAD_ROW[measured_row]] = np.asarray(c_m, dtype=float).reshape(-1)
    return C


def _one_step_mse(Ad, Bd, C, Kd, u, ytilde):
    """One-step-ahead mean squared prediction error of a discrete model.

    An unstable predictor (possible for over-parameterized fits) scores
    infinite error rather than overflowing.
    """
    z = np.zeros(Ad.shape[0])
    c_row = np.asarray(C).reshape(-1)
    err2 = 0.0
    for k in range(len(ytilde)):
        pred = float(c_row @ z)
        if not np.isfinite(pred) or abs(pred) > 1e100:
            return np.inf
        e = ytilde[k] - pred
        err2 += e * e
        z = Ad @ z + Bd @ u[k] + Kd[:, 0] * e
    return err2 / len(ytilde)


def fpe_order_select(
    data: SysIdDataset, orders, horizon: int, D: np.ndarray | None = None,
    quadrature: str = "Q",
) -> tuple[int, dict]:
    """Akaike final prediction error over candidate mode counts.

    ``FPE(n) = V_N (1 + p/N) / (1 - p/N)`` with V_N the one-step-ahead MSE
    of the identified order-n model on the estimation split and
    ``p = 4 n^2 + 8 n`` free parameters (A, B, C row and innovation gain
    for 2n states and two inputs).  Selection runs on the discrete-time
    estimates, where the one-step predictor lives; the continuous
    conversion (and any branch failure) belongs to the selected order.
    """
    orders = list(orders)
    if not orders:
        raise ValidationError("need at least one candidate order")
    D = np.eye(2) if D is None else np.asarray(D, float)
    row = QUAD_ROW[quadrature]
    u, y = data.estimation()
    ytilde = y - u @ D[row]
    table = {}
    for n in orders:
        Ad, Bd, C, Kd, _ = _subspace_discrete(data, n, horizon, D, quadrature)
        vn = _one_step_mse(Ad, Bd, C, Kd, u, ytilde)
        p = 4 * n * n + 8 * n
        N = len(ytilde)
        if p >= N:
            raise InsufficientData(f"order {n} has more parameters than samples")
        table[n] = vn * (1 + p / N) / (1 - p / N)
    n_best = min(table, key=table.get)
    return n_best, table


def validate_nmse(
    G: LinearQSystem, L_m: np.ndarray, data: SysIdDataset, quadrature: str = "Q",
) -> float:
    """Normalized mean squared one-step prediction error on the validation split.

    ``NMSE = sum (y - yhat)^2 / sum (y - ybar)^2`` with ``yhat`` the
    one-step Kalman predictor of the supplied model.
    """
    if quadrature not in QUAD_ROW:
        raise ValidationError("quadrature must be 'Q' or 'P'")
    row = QUAD_ROW[quadrature]
    u, y = data.validation()
    denom = float(np.sum((y - y.mean()) ** 2))
    if denom == 0.0:
        raise DegenerateOutput("validation output has zero variance")
    Cm, Dm = G.C[row], G.D[row]
    L_m = np.asarray(L_m, dtype=float).reshape(-1)
    dt = data.dt
    z = np.zeros(2 * G.n)
    num = 0.0
    for k in range(len(y)):
        pred = float(Cm @ z + Dm @ u[k])
        e = y[k] - pred
        num += e * e
        z = z + (G.A @ z + G.B @ u[k]) * dt + L_m * e * dt
    return num / denom


@dataclass(frozen=True)
class PipelineConfig:
    """Configuration of the end-to-end identification run."""

    dt: float
    T: float
    prbs_amplitude: float
    orders: tuple
    quadrature: str = "Q"
    seed: int = 0
    split: float = 0.7
    horizon: int = 10
    system: LinearQSystem | None = None
    dataset: SysIdDataset | None = None

    def __post_init__(self):
        if self.system is None and self.dataset is None:
            raise ValidationError("config needs a true system or a dataset")
        if self.quadrature not in QUAD_ROW:
            raise ValidationError("quadrature must be 'Q' or 'P'")
        if not self.orders:
            raise ValidationError("config needs candidate orders")


@dataclass(frozen=True)
class SysIdResult:
    raw: SubspaceEstimate
    projected: LinearQSystem
    Z: np.ndarray
    order: int
    cost: float
    fpe: float
    fpe_table: dict
    nmse: float
    pr2_residual: float
    config: PipelineConfig = field(repr=False, default=None)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        exc.args = (f"[{name}] {exc}",) + exc.args[1:]
        raise


def run_pipeline(config: PipelineConfig) -> SysIdResult:
    """Run the full identification chain and return the fitted system."""
    if config.dataset is not None:
        data = config.dataset
    else:
        n_steps = max(1, int(round(config.T / config.dt)))
        f = prbs_pair(n_steps, config.prbs_amplitude, config.seed)
        gain, _ = _stage("kalman_gain", kalman_gain, config.system, config.quadrature)
        record, _ = _stage(
            "simulate", simulate_innovation_form,
            config.system, gain, config.quadrature, f,
            config.T, config.dt, config.seed,
        )
        data = SysIdDataset.from_record(record, f, split=config.split)

    D = np.eye(2) if config.system is None else config.system.D
    n_best, table = _stage(
        "fpe_order_select", fpe_order_select,
        data, config.orders, config.horizon, D, config.quadrature,
    )
    est = _stage(
        "subspace_id", subspace_id, data, n_best, config.horizon, D, config.quadrature
    )
    proj = _stage(
        "pr_projection", pr_projection,
        (est.A, est.B, est.C), D, config.quadrature, seed=config.seed,
    )
    C_full = _stage(
        "recover_full_c", recover_full_c,
        proj.Z, proj.B, D, config.quadrature, proj.C_m[0],
    )
    projected = LinearQSystem(A=proj.A, B=proj.B, C=C_full, D=D)
    J = symplectic_form(1)
    pr2_res = max(
        np.max(np.abs(proj.A @ proj.Z + proj.Z @ proj.A.T + proj.B @ J @ proj.B.T)),
        np.max(np.abs(proj.Z @ C_full.T + proj.B @ J @ D.T)),
    )
    gain_fit, _ = _stage("kalman_gain", kalman_gain, projected, config.quadrature)
    nmse = _stage(
        "validate_nmse", validate_nmse, projected, gain_fit, data, config.quadrature
    )
    return SysIdResult(
        raw=est, projected=projected, Z=proj.Z, order=n_best, cost=proj.cost,
        fpe=table[n_best], fpe_table=table, nmse=nmse,
        pr2_residual=float(pr2_res), config=config,
    )
