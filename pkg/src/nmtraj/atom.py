"""Two-level atom: drive Hamiltonian, no-jump propagator and Pauli expectations.

The basis ordering is ``(|g>, |e>)`` throughout, so a state vector is the
amplitude pair ``(c_g, c_e)`` and the lowering operator is
``sigma = |g><e| = [[0, 1], [0, 0]]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

SIGMA = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, 1.0j], [-1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=complex)

GROUND = np.array([1.0, 0.0], dtype=complex)
EXCITED = np.array([0.0, 1.0], dtype=complex)


@dataclass(frozen=True)
class AtomParams:
    """Physical parameters of the resonantly driven atom.

    Parameters
    ----------
    gamma : float
        Spontaneous decay rate. Sets the unit system; all other rates and
        times are expressed in the same units.
    omega_rabi : float
        Classical Rabi frequency of the resonant drive.
    """

    gamma: float = 1.0
    omega_rabi: float = 10.0

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma}")
        if not np.isfinite(self.omega_rabi):
            raise ValueError("omega_rabi must be finite")


def hamiltonian(params: AtomParams) -> np.ndarray:
    """Drive Hamiltonian ``(Omega/2)(sigma + sigma^dagger)`` in the rotating frame."""
    return 0.5 * params.omega_rabi * SIGMA_X


def generator(params: AtomParams) -> np.ndarray:
    """Non-Hermitian no-jump generator ``-i H - (gamma/2) |e><e|``."""
    g = -1j * hamiltonian(params)
    g[1, 1] -= 0.5 * params.gamma
    return g


def u_eff(tau: float, params: AtomParams) -> np.ndarray:
    """No-jump propagator ``exp(G tau)`` in closed form.

    For a 2x2 generator with eigenvalues ``a +/- mu`` the exponential is
    ``e^{a tau} [cosh(mu tau) I + sinh(mu tau)/mu (G - a I)]``, which stays
    well defined at the degenerate point ``mu = 0`` (critical damping
    ``Omega = gamma/2``) where a plain eigendecomposition breaks down.

    Parameters
    ----------
    tau : float
        Elapsed time, must be non-negative.
    params : AtomParams

    Returns
    -------
    ndarray of shape (2, 2), complex
    """
    tau = float(tau)
    if tau < 0 or not np.isfinite(tau):
        raise ValueError(f"tau must be a finite non-negative duration, got {tau}")
    g = generator(params)
    a = 0.5 * (g[0, 0] + g[1, 1])
    mu = np.sqrt(complex(a * a - (g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0])))
    x = mu * tau
    if abs(x) < 1e-4:
        x2 = x * x
        ch = 1.0 + x2 / 2.0 + x2 * x2 / 24.0
        shc = tau * (1.0 + x2 / 6.0 + x2 * x2 / 120.0)
    else:
        ch = np.cosh(x)
        shc = np.sinh(x) / mu
    return np.exp(a * tau) * (ch * np.eye(2) + shc * (g - a * np.eye(2)))


def apply_lowering(state: np.ndarray) -> np.ndarray:
    """Apply ``sigma = |g><e|``: ``(c_g, c_e) -> (c_e, 0)``."""
    state = np.asarray(state, dtype=complex)
    return np.array([state[1], 0.0], dtype=complex)


def pauli_expectations(
    mixture: Iterable[Tuple[float, Sequence[complex]]],
) -> Tuple[float, float, float]:
    """Bloch vector of a weighted mixture of (possibly unnormalised) kets.

    Each ket is normalised before weighting, and the weights are normalised
    to sum to one.

    Parameters
    ----------
    mixture : iterable of (weight, state)

    Returns
    -------
    (sx, sy, sz) : tuple of float

    Raises
    ------
    ValueError
        If no component carries positive weight and norm.
    """
    rho = np.zeros((2, 2), dtype=complex)
    total = 0.0
    for w, psi in mixture:
        psi = np.asarray(psi, dtype=complex)
        nrm = float(np.vdot(psi, psi).real)
        if w <= 0 or nrm <= 0:
            continue
        rho += w * np.outer(psi, psi.conj()) / nrm
        total += w
    if total <= 0:
        raise ValueError("degenerate mixture: no component with positive weight and norm")
    rho /= total
    return tuple(float(np.trace(rho @ op).real) for op in (SIGMA_X, SIGMA_Y, SIGMA_Z))


def bloch_from_state(state: Sequence[complex]) -> Tuple[float, float, float]:
    """Bloch vector of a single ket."""
    return pauli_expectations([(1.0, state)])


def excited_population(state: Sequence[complex]) -> float:
    """Normalised excited-state population ``|c_e|^2 / ||psi||^2``."""
    psi = np.asarray(state, dtype=complex)
    return float(abs(psi[1]) ** 2 / np.vdot(psi, psi).real)
