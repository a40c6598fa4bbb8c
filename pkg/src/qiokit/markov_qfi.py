"""Output quantum Fisher information rate, gauge transformations, conditional QFI.

For an ergodic model the output QFI grows linearly in time; the rate per
parameter pair (a, b) is

    F_ab = 4 Re Tr[rho_ss G_a^dag G_b],
    G_a  = Ldot_a - i [L, A_a],      A_a = L^{-1}(Edot_a),
    Edot_a = Hdot_a + Im(Ldot_a^dag L) - Tr[rho_ss (...)] I,

with the inverse taken on the zero-mean subspace.  The overall factor 4
is pinned by the phase family (H, exp(-i theta) L), whose rate must equal
four times the asymptotic count variance; with that normalization the
rate vanishes identically along Hamiltonian-shift and unitary-conjugation
orbits, the directions that leave the stationary output invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .families import ParameterFamily
from .filtering import run_filter
from .operators import (
    QMarkovModel,
    _ergodic_stationary,
    _rho_array,
    _square_complex,
    op_imag,
    qfi_matrix,
    zero_mean_inverse,
)

__all__ = ["GaugeElement", "qfi_rate", "qfi_rate_raw", "gauge_transform", "conditional_qfi"]


@dataclass(frozen=True)
class GaugeElement:
    """Element (r, W) of the gauge group: Hamiltonian shift and unitary conjugation."""

    r: float
    W: np.ndarray

    def __post_init__(self):
        W = _square_complex(self.W, "W")
        d = W.shape[0]
        if np.max(np.abs(W.conj().T @ W - np.eye(d))) > 1e-10:
            raise ValidationError("W must be unitary to 1e-10")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "r", float(self.r))


def _generators(family: ParameterFamily, theta):
    """The G_a operators and the stationary state at theta."""
    model = family.model(theta)
    rho_ss = _ergodic_stationary(model).rho
    L = model.L
    eye = np.eye(model.dim)
    gs = []
    for Hdot, Ldot in zip(family.h_dot(theta), family.l_dot(theta)):
        edot = Hdot + op_imag(Ldot.conj().T @ L)
        edot = edot - np.trace(rho_ss @ edot).real * eye
        A = zero_mean_inverse(model, edot)
        gs.append(Ldot - 1j * (L @ A - A @ L))
    return gs, rho_ss


def qfi_rate_raw(family: ParameterFamily, theta) -> np.ndarray:
    """Unscaled matrix Tr[rho_ss G_a^dag G_b]; complex off the diagonal."""
    gs, rho_ss = _generators(family, theta)
    k = len(gs)
    out = np.empty((k, k), dtype=complex)
    for a in range(k):
        for b in range(k):
            out[a, b] = np.trace(rho_ss @ gs[a].conj().T @ gs[b])
    return out


def qfi_rate(family: ParameterFamily, theta) -> np.ndarray:
    """QFI rate matrix of the output, 4 Re Tr[rho_ss G_a^dag G_b]."""
    raw = qfi_rate_raw(family, theta)
    F = 4.0 * raw.real
    return (F + F.T) / 2


def gauge_transform(model: QMarkovModel, g: GaugeElement) -> QMarkovModel:
    """Apply (H, L) -> (W^dag (H + r) W, W^dag L W); output statistics invariant."""
    W = g.W
    H = W.conj().T @ (model.H + g.r * np.eye(model.dim)) @ W
    L = W.conj().T @ model.L @ W
    H = (H + H.conj().T) / 2
    return QMarkovModel(H=H, L=L)


def conditional_qfi(
    family: ParameterFamily, theta, rho0, record,
    *, h: float | None = None, dt: float = 1e-3,
) -> float:
    """QFI of the conditional state at the record horizon (one parameter).

    Runs the filter at theta and theta +- h on the same record and takes
    the central-difference state derivative; this is the final-measurement
    information term in the combined Cramer-Rao bound.
    """
    if family.k != 1:
        raise ValidationError("conditional_qfi handles one-parameter families")
    theta = float(np.atleast_1d(theta)[0])
    if h is None:
        h = 1e-4 * max(1.0, abs(theta))
    rho0 = _rho_array(rho0)
    center = run_filter(family.model([theta]), rho0, record, dt=dt).final_state
    plus = run_filter(family.model([theta + h]), rho0, record, dt=dt).final_state
    minus = run_filter(family.model([theta - h]), rho0, record, dt=dt).final_state
    drho = (plus - minus) / (2 * h)
    drho = (drho + drho.conj().T) / 2
    drho = drho - (np.trace(drho).real / center.shape[0]) * np.eye(center.shape[0])
    F = qfi_matrix(center, [drho])
    return float(F[0, 0])
