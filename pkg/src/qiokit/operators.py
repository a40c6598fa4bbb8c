"""Complex-matrix foundations for finite-dimensional quantum Markov models.

Defines the model, state and superoperator types plus the spectral and
information-geometric primitives everything else builds on: Lindblad
generators in both pictures, stationary states, spectral gaps, symmetric
logarithmic derivatives and quantum Fisher information.

Conventions, fixed once for the whole package:

* vectorization is column-stacking, ``vec(X) = X.reshape(-1, order="F")``,
  so ``vec(A X B) = kron(B.T, A) vec(X)``;
* the state-picture generator is
  ``X -> i[X, H] + L X L^dag - {L^dag L, X}/2`` and the observable-picture
  generator is its trace dual ``X -> i[H, X] + L^dag X L - {L^dag L, X}/2``;
* the operator imaginary part is ``Im(X) = (X - X^dag) / 2i``, the only
  Hermitian-valued reading.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    NonUniqueStationaryState,
    NotErgodic,
    NotZeroMean,
    NumericsError,
    SingularState,
    ValidationError,
)

__all__ = [
    "QMarkovModel",
    "DensityOperator",
    "Superoperator",
    "SpectralInfo",
    "dag",
    "op_imag",
    "vec",
    "unvec",
    "lindblad_generator",
    "stationary_state",
    "spectral_info",
    "is_ergodic",
    "sld",
    "qfi_matrix",
    "pure_state_qfi",
    "qcrb_trace_bound",
    "zero_mean_inverse",
]

HERM_TOL = 1e-12
STATE_HERM_TOL = 1e-10
TRACE_TOL = 1e-10
EIG_FLOOR = -1e-10
# full rank means min eigenvalue above this fraction of the max eigenvalue
FULL_RANK_RTOL = 1e-10
# singular values at or below this fraction of the largest count as null
NULLSPACE_RTOL = 1e-9


def dag(x: np.ndarray) -> np.ndarray:
    """Conjugate transpose, batched over leading axes."""
    return np.conjugate(np.swapaxes(x, -1, -2))


def op_imag(x: np.ndarray) -> np.ndarray:
    """Operator imaginary part (X - X^dag)/2i; Hermitian for any X."""
    return (x - dag(x)) / 2j


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    """Inverse of :func:`vec` for a d x d matrix."""
    return np.asarray(v).reshape((d, d), order="F")


def _square_complex(m, name: str) -> np.ndarray:
    a = np.array(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class QMarkovModel:
    """Quantum input-output model (H, L) on a d-dimensional system.

    H is the system Hamiltonian (hbar = 1) and L the coupling to the
    monitored traveling field, units 1/sqrt(time).  The gauge coupling of
    the field is the identity throughout the package.
    """

    H: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        H = _square_complex(self.H, "H")
        L = _square_complex(self.L, "L")
        if H.shape != L.shape:
            raise ValidationError(
                f"H and L must share a dimension, got {H.shape} and {L.shape}"
            )
        if H.size and np.max(np.abs(H - H.conj().T)) > HERM_TOL:
            raise ValidationError("H is not Hermitian to 1e-12")
        H.setflags(write=False)
        L.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "L", L)

    @property
    def dim(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class DensityOperator:
    """Trace-one, Hermitian, positive-semidefinite state matrix."""

    rho: np.ndarray

    def __post_init__(self):
        r = _square_complex(self.rho, "rho")
        if np.max(np.abs(r - r.conj().T)) > STATE_HERM_TOL:
            raise ValidationError("rho is not Hermitian to 1e-10")
        tr = np.trace(r).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"rho trace {tr} not within 1e-10 of 1")
        w = np.linalg.eigvalsh((r + r.conj().T) / 2)
        if w[0] < EIG_FLOOR:
            raise ValidationError(f"rho has eigenvalue {w[0]:.3e} below -1e-10")
        r.setflags(write=False)
        object.__setattr__(self, "rho", r)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.rho)


def _rho_array(rho) -> np.ndarray:
    if isinstance(rho, DensityOperator):
        return rho.rho
    return np.asarray(rho, dtype=complex)


@dataclass(frozen=True)
class Superoperator:
    """Matrix of a linear map on d x d matrices, column-stacking convention.

    ``picture`` is "schrodinger" (state evolution; trace-annihilating) or
    "heisenberg" (observable evolution; unital).
    """

    mat: np.ndarray
    picture: str

    def __post_init__(self):
        m = np.array(self.mat, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"superoperator matrix must be square, got {m.shape}")
        d2 = m.shape[0]
        d = int(round(d2**0.5))
        if d * d != d2:
            raise ValidationError("superoperator must act on vectorized square matrices")
        scale = max(1.0, float(np.max(np.abs(m))) if m.size else 0.0)
        if self.picture == "schrodinger":
            # Tr(L*(X)) = 0 for all X  <=>  vec(I)^T mat = 0
            resid = np.max(np.abs(vec(np.eye(d)) @ m))
            if resid > 1e-10 * scale:
                raise ValidationError(
                    f"schrodinger generator does not annihilate the trace ({resid:.3e})"
                )
        elif self.picture == "heisenberg":
            resid = np.max(np.abs(m @ vec(np.eye(d))))
            if resid > 1e-10 * scale:
                raise ValidationError(
                    f"heisenberg generator does not annihilate the identity ({resid:.3e})"
                )
        else:
            raise ValidationError(f"unknown picture {self.picture!r}")
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)

    @property
    def dim(self) -> int:
        return int(round(self.mat.shape[0] ** 0.5))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return unvec(self.mat @ vec(np.asarray(x, dtype=complex)), self.dim)


@dataclass(frozen=True)
class SpectralInfo:
    """Spectrum summary of the vectorized state-picture generator.

    ``gap`` is minus the largest real part among the nonzero eigenvalues
    (0 when none), ``unique_stationary`` reports one-dimensionality of the
    null space, and ``is_ergodic`` additionally requires the stationary
    state to be full rank.
    """

    gap: float
    eigenvalues: np.ndarray
    is_ergodic: bool
    unique_stationary: bool


def lindblad_generator(model: QMarkovModel, picture: str = "schrodinger") -> Superoperator:
    """Vectorized Lindblad generator of the model.

    schrodinger:  X -> i[X, H] + L X L^dag - {L^dag L, X}/2
    heisenberg:   X -> i[H, X] + L^dag X L - {L^dag L, X}/2

    The two matrices are duals under the bilinear trace pairing.
    """
    H, L = model.H, model.L
    d = model.dim
    eye = np.eye(d)
    LdL = L.conj().T @ L
    anticomm = 0.5 * (np.kron(eye, LdL) + np.kron(LdL.T, eye))
    if picture == "schrodinger":
        mat = (
            1j * (np.kron(H.T, eye) - np.kron(eye, H))
            + np.kron(L.conj(), L)
            - anticomm
        )
    elif picture == "heisenberg":
        mat = (
            1j * (np.kron(eye, H) - np.kron(H.T, eye))
            + np.kron(L.T, L.conj().T)
            - anticomm
        )
    else:
        raise ValidationError(f"unknown picture {picture!r}")
    return Superoperator(mat=mat, picture=picture)


def stationary_state(model: QMarkovModel) -> DensityOperator:
    """Unique stationary state of the model's Lindblad generator.

    Found as the null space of the vectorized state-picture generator;
    raises :class:`NonUniqueStationaryState` when that null space has
    dimension greater than one.
    """
    gen = lindblad_generator(model, "schrodinger")
    d = model.dim
    u, s, vh = np.linalg.svd(gen.mat)
    scale = float(s[0]) if s.size else 0.0
    if scale == 0.0:
        null_dim = d * d
    else:
        null_dim = int(np.sum(s <= NULLSPACE_RTOL * scale))
        null_dim = max(null_dim, 1)
    if null_dim > 1:
        raise NonUniqueStationaryState(
            f"stationary subspace has dimension {null_dim}"
        )
    rho = unvec(vh[-1].conj(), d)
    rho = (rho + rho.conj().T) / 2
    tr = np.trace(rho)
    if abs(tr) < 1e-12:
        raise NonUniqueStationaryState("null vector of the generator is traceless")
    rho = rho / tr
    resid = float(np.max(np.abs(gen.apply(rho))))
    if resid > 1e-10 * max(1.0, scale):
        raise NumericsError(f"stationary-state residual {resid:.3e} exceeds tolerance")
    return DensityOperator(rho)


def spectral_info(model: QMarkovModel) -> SpectralInfo:
    """Eigenvalues, spectral gap and ergodicity flags of the generator."""
    gen = lindblad_generator(model, "schrodinger")
    evals = np.linalg.eigvals(gen.mat)
    scale = float(np.max(np.abs(evals))) if evals.size else 0.0
    if scale == 0.0:
        gap = 0.0
    else:
        nonzero = evals[np.abs(evals) > 1e-9 * scale]
        gap = float(-np.max(nonzero.real)) if nonzero.size else 0.0
    unique = True
    full_rank = False
    try:
        rho_ss = stationary_state(model)
    except NonUniqueStationaryState:
        unique = False
    else:
        w = rho_ss.eigenvalues()
        full_rank = bool(w[0] > FULL_RANK_RTOL * max(w[-1], 0.0))
    return SpectralInfo(
        gap=gap,
        eigenvalues=evals,
        is_ergodic=unique and full_rank,
        unique_stationary=unique,
    )


def is_ergodic(model: QMarkovModel) -> bool:
    return spectral_info(model).is_ergodic


def _ergodic_stationary(model: QMarkovModel) -> DensityOperator:
    """Stationary state, insisting on ergodicity."""
    try:
        rho_ss = stationary_state(model)
    except NonUniqueStationaryState as exc:
        raise NotErgodic(str(exc)) from exc
    w = rho_ss.eigenvalues()
    if not w[0] > FULL_RANK_RTOL * max(w[-1], 0.0):
        raise NotErgodic(f"stationary state is rank deficient (min eigenvalue {w[0]:.3e})")
    return rho_ss


def sld(rho, drho: np.ndarray) -> np.ndarray:
    """Symmetric logarithmic derivative S with (S rho + rho S)/2 = drho.

    Solved entrywise in the eigenbasis of rho as
    ``S_jk = 2 drho_jk / (lam_j + lam_k)`` with divisor cutoff 1e-14.
    Raises :class:`SingularState` when a non-negligible component of drho
    falls in the kernel of the divisor.
    """
    r = _rho_array(rho)
    dr = np.asarray(drho, dtype=complex)
    if abs(np.trace(dr)) > 1e-10:
        raise ValidationError("drho must be traceless to 1e-10")
    lam, u = np.linalg.eigh((r + r.conj().T) / 2)
    m = u.conj().T @ dr @ u
    denom = lam[:, None] + lam[None, :]
    small = denom <= 1e-14
    if np.any(small & (np.abs(m) > 1e-12)):
        raise SingularState(
            "derivative component on the kernel of rho; SLD undefined"
        )
    s = np.where(small, 0.0, 2.0 * m / np.where(small, 1.0, denom))
    S = u @ s @ u.conj().T
    S = (S + S.conj().T) / 2
    resid = float(np.max(np.abs(0.5 * (S @ r + r @ S) - dr)))
    if resid > 1e-9:
        raise NumericsError(f"SLD Lyapunov residual {resid:.3e} exceeds 1e-9")
    return S


def qfi_matrix(rho, drhos) -> np.ndarray:
    """Quantum Fisher information matrix from state derivatives.

    ``F_ij = Tr(rho (S_i S_j + S_j S_i)) / 2`` with the S_i the SLDs of
    the supplied derivative directions.  Real, symmetric, PSD up to
    numerical error.
    """
    r = _rho_array(rho)
    slds = [sld(r, dr) for dr in drhos]
    k = len(slds)
    F = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            # Tr(rho S_i S_j) has conjugate-symmetric indices, so the real
            # part already equals the symmetrized half-anticommutator form.
            F[i, j] = F[j, i] = np.trace(r @ slds[i] @ slds[j]).real
    return F


def pure_state_qfi(psi: np.ndarray, G: np.ndarray) -> float:
    """QFI of the unitary family exp(-i theta G)|psi>: four times Var_psi(G)."""
    v = np.asarray(psi, dtype=complex).reshape(-1)
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValidationError("psi must be normalized to 1e-10")
    g = np.asarray(G, dtype=complex) @ v
    mean = np.vdot(v, g).real
    second = np.vdot(g, g).real
    return max(0.0, 4.0 * (second - mean * mean))


def qcrb_trace_bound(F: np.ndarray) -> float:
    """Trivial scalar Cramer-Rao bound Tr(F^-1) for a nonsingular QFI matrix."""
    F = np.asarray(F, dtype=float)
    try:
        return float(np.trace(np.linalg.inv(F)))
    except np.linalg.LinAlgError as exc:
        raise NumericsError("QFI matrix is singular; trace bound undefined") from exc


def zero_mean_inverse(model: QMarkovModel, X: np.ndarray) -> np.ndarray:
    """Solve L(A) = X on the zero-mean subspace of an ergodic model.

    ``L`` is the observable-picture generator.  The solution is the
    minimum-norm least-squares preimage projected to stationary mean zero,
    ``A -> A - Tr(rho_ss A) I``; for ergodic generators this coincides
    with the inverse of the restriction of L to zero-mean operators.
    """
    rho_ss = _ergodic_stationary(model).rho
    x = np.asarray(X, dtype=complex)
    mean = np.trace(rho_ss @ x)
    if abs(mean) > 1e-8:
        raise NotZeroMean(f"Tr(rho_ss X) = {mean:.3e} is not zero to 1e-8")
    gen = lindblad_generator(model, "heisenberg")
    sol, *_ = np.linalg.lstsq(gen.mat, vec(x), rcond=None)
    A = unvec(sol, model.dim)
    A = A - np.trace(rho_ss @ A) * np.eye(model.dim)
    resid = float(np.max(np.abs(gen.apply(A) - x)))
    if resid > 1e-8:
        raise NumericsError(f"zero-mean inverse residual {resid:.3e} exceeds 1e-8")
    return A
