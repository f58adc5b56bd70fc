"""Markovian reference for the filter-cavity measurement.

The atom drives a single-mode cavity through a unidirectional (cascaded)
coupling, and the pair is treated as one Markovian system with two
detectors:

    H_eff = H_atom + (nu - i kappa) a^dag a - i (gamma/2 sigma^dag sigma + sqrt(gamma kappa) sigma a^dag)
    C_T = sqrt(kappa) a,        C_R = sqrt(kappa) a + sqrt(gamma) sigma

``C_T`` is light leaking through the far mirror, ``C_R`` the coherent sum of
light leaving the near mirror and light reflected straight off it.
The basis is ``kron(atom, Fock)`` with atom ordering ``(g, e)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import expm

from .atom import SIGMA, AtomParams, hamiltonian
from .engine import TrajectoryOutput, _check_seed, _n_steps
from .errors import ConfigurationError, StepSizeError

_CHUNK = 200_000
MAX_STEP_PROBABILITY = 0.1


def _ops(n_max: int):
    d = n_max + 1
    a = np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)
    s = np.kron(SIGMA, np.eye(d))
    A = np.kron(np.eye(2), a)
    return s, A


def build_heff(params: AtomParams, kappa: float, nu: float, n_max: int = 4) -> np.ndarray:
    """Non-Hermitian effective Hamiltonian of the cascaded atom-cavity system."""
    if n_max < 1:
        raise ConfigurationError("n_max must be >= 1")
    if kappa < 0:
        raise ConfigurationError("kappa must be >= 0")
    s, A = _ops(n_max)
    h_atom = np.kron(hamiltonian(params), np.eye(n_max + 1))
    nop = A.conj().T @ A
    return (h_atom + (nu - 1j * kappa) * nop
            - 1j * (0.5 * params.gamma * s.conj().T @ s + math.sqrt(params.gamma * kappa) * s @ A.conj().T))


def collapse_operators(params: AtomParams, kappa: float, n_max: int = 4):
    """``(C_T, C_R)`` for the transmitted and reflected detectors."""
    s, A = _ops(n_max)
    ct = math.sqrt(kappa) * A
    return ct, ct + math.sqrt(params.gamma) * s


def system_hamiltonian(params: AtomParams, kappa: float, nu: float, n_max: int = 4) -> np.ndarray:
    """Hermitian part of :func:`build_heff`, for master-equation oracles."""
    h = build_heff(params, kappa, nu, n_max)
    return 0.5 * (h + h.conj().T)


@dataclass
class CascadedState:
    """Atom-cavity ket over ``kron(atom, Fock)``."""

    amplitudes: np.ndarray
    n_max: int

    @classmethod
    def ground(cls, n_max: int = 4) -> "CascadedState":
        v = np.zeros(2 * (n_max + 1), dtype=complex)
        v[0] = 1.0
        return cls(v, n_max)

    @classmethod
    def from_atom(cls, atom_state, n_max: int = 4) -> "CascadedState":
        """Product of an atom ket with the cavity vacuum."""
        vac = np.zeros(n_max + 1, dtype=complex)
        vac[0] = 1.0
        return cls(np.kron(np.asarray(atom_state, dtype=complex), vac), n_max)

    def reshaped(self) -> np.ndarray:
        return self.amplitudes.reshape(2, self.n_max + 1)

    def atom_bloch(self):
        """Bloch vector of the reduced atom state."""
        psi = self.reshaped()
        nrm = np.vdot(psi, psi).real
        rge = np.vdot(psi[1], psi[0]) / nrm
        ree = np.vdot(psi[1], psi[1]).real / nrm
        return float(2 * rge.real), float(2 * rge.imag), float(2 * ree - 1)

    def photon_number(self) -> float:
        p = np.sum(np.abs(self.reshaped()) ** 2, axis=0)
        return float(p @ np.arange(self.n_max + 1) / p.sum())


class CascadedSystem:
    """Precomputed propagator and jump operators on a fixed grid.

    Parameters
    ----------
    params : AtomParams
    kappa, nu : float
        Cavity half linewidth and detuning.
    dt : float
        Time step; the no-jump propagator is ``expm(-i H_eff dt)``.
    n_max : int
        Fock-space truncation.
    """

    labels = ("T", "R")

    def __init__(self, params: AtomParams, kappa: float, nu: float, dt: float, n_max: int = 4):
        if dt <= 0:
            raise ConfigurationError("dt must be positive")
        self.params = params
        self.kappa = kappa
        self.nu = nu
        self.dt = dt
        self.n_max = n_max
        self.heff = build_heff(params, kappa, nu, n_max)
        self.U = expm(-1j * self.heff * dt)
        self.ct, self.cr = collapse_operators(params, kappa, n_max)

    def jump_probabilities(self, state: CascadedState) -> np.ndarray:
        psi = state.amplitudes
        nrm = np.vdot(psi, psi).real
        a = self.ct @ psi
        b = self.cr @ psi
        return self.dt * np.array([np.vdot(a, a).real, np.vdot(b, b).real]) / nrm

    def step(self, state: CascadedState, u: float):
        """One Monte Carlo step driven by the uniform ``u``.

        Returns the normalised new state and ``"T"``, ``"R"`` or ``None``.
        """
        p = self.jump_probabilities(state)
        if p.sum() > MAX_STEP_PROBABILITY:
            raise StepSizeError(f"jump probability {p.sum():.3g} per step exceeds "
                                f"{MAX_STEP_PROBABILITY}; reduce dt")
        psi = state.amplitudes
        if u < p[0]:
            psi, jump = self.U @ (self.ct @ psi), "T"
        elif u < p[0] + p[1]:
            psi, jump = self.U @ (self.cr @ psi), "R"
        else:
            psi, jump = self.U @ psi, None
        return CascadedState(psi / np.linalg.norm(psi), state.n_max), jump


def mcwf_step(system: CascadedSystem, state: CascadedState, rng, dt: float | None = None):
    """Draw one uniform from ``rng`` and apply :meth:`CascadedSystem.step`."""
    if dt is not None and not np.isclose(dt, system.dt):
        raise ConfigurationError("dt differs from the system's precomputed propagator")
    return system.step(state, rng.random_sample())


@njit(cache=True)
def _run_chunk(U, CT, CR, dt, psi_io, uniforms, det_limit, stride, k0, pmax,
               out_k, out_n, tr_k, tr_bl, tr_p, tr_n, top):
    # psi_io holds the state on entry and receives the state on exit
    psi = psi_io.copy()
    d = psi.shape[0] // 2
    nd = 0
    nt = 0
    status = 0
    steps = uniforms.shape[0]
    for it in range(uniforms.shape[0]):
        k = k0 + it
        a = CT @ psi
        b = CR @ psi
        pT = dt * np.vdot(a, a).real
        pR = dt * np.vdot(b, b).real
        if pT + pR > pmax:
            status = 2
            steps = it
            break
        ptop = abs(psi[d - 1]) ** 2 + abs(psi[2 * d - 1]) ** 2
        top[0] += ptop
        if ptop > top[1]:
            top[1] = ptop
        if k % stride == 0:
            rge = 0.0 + 0.0j
            ree = 0.0
            nph = 0.0
            for m in range(d):
                rge += psi[m] * np.conj(psi[d + m])
                ree += abs(psi[d + m]) ** 2
                nph += m * (abs(psi[m]) ** 2 + abs(psi[d + m]) ** 2)
            tr_k[nt] = k
            tr_bl[nt, 0] = 2.0 * rge.real
            tr_bl[nt, 1] = 2.0 * rge.imag
            tr_bl[nt, 2] = 2.0 * ree - 1.0
            tr_p[nt, 0] = pT
            tr_p[nt, 1] = pR
            tr_n[nt] = nph
            nt += 1
        u = uniforms[it]
        det = -1
        if u < pT:
            psi = U @ a
            det = 0
        elif u < pT + pR:
            psi = U @ b
            det = 1
        else:
            psi = U @ psi
        psi = psi / np.sqrt(np.vdot(psi, psi).real)
        if det >= 0:
            out_k[nd] = k
            out_n[nd] = det
            nd += 1
            if nd >= det_limit:
                steps = it + 1
                break
    psi_io[:] = psi
    return status, steps, nd, nt


def run_trajectory_cascaded(
    params: AtomParams,
    kappa: float,
    nu: float,
    dt: float,
    duration: float | None,
    seed: int,
    *,
    n_max: int = 4,
    target_detections: int | None = None,
    max_duration: float | None = None,
    trace_stride: int = 20,
    initial_state=None,
    burn_in: float = 0.0,
    uniforms: np.ndarray | None = None,
) -> TrajectoryOutput:
    """Cascaded Monte Carlo wavefunction trajectory with the engine's output schema.

    Uses the same one-uniform-per-step stream as the memory engine. Trace
    samples refer to the current step (``trace_state_steps == trace_steps``).
    ``stats`` reports the mean and largest population of the highest Fock
    level as a truncation monitor.
    """
    seed = _check_seed(seed)
    system = CascadedSystem(params, kappa, nu, dt, n_max)
    if initial_state is None:
        psi = CascadedState.ground(n_max).amplitudes
    elif np.asarray(initial_state).size == 2:
        psi = CascadedState.from_atom(initial_state, n_max).amplitudes
    else:
        psi = np.asarray(initial_state, dtype=complex).copy()
    psi = psi / np.linalg.norm(psi)
    n_total = _n_steps(duration, dt)
    if target_detections is not None:
        cap = _n_steps(max_duration, dt) if max_duration is not None else n_total
        if cap is None:
            raise ConfigurationError("target_detections needs duration or max_duration as a cap")
        n_total, det_goal = cap, int(target_detections)
    else:
        if n_total is None:
            raise ConfigurationError("duration is required")
        det_goal = np.iinfo(np.int64).max
    if uniforms is not None:
        uniforms = np.asarray(uniforms, dtype=float)
        n_total = min(n_total, uniforms.size)
    rng = np.random.RandomState(seed)
    top = np.zeros(2)
    parts = {k: [] for k in ("k", "n", "tk", "bl", "p", "nph")}
    done = nd_total = 0
    while done < n_total and nd_total < det_goal:
        n = min(_CHUNK, n_total - done)
        u = uniforms[done:done + n] if uniforms is not None else rng.random_sample(n)
        ntr = n // trace_stride + 2
        out_k, out_n = np.empty(n, np.int64), np.empty(n, np.int64)
        tr_k, tr_bl = np.empty(ntr, np.int64), np.empty((ntr, 3))
        tr_p, tr_n = np.empty((ntr, 2)), np.empty(ntr)
        st, steps, nd, nt = _run_chunk(system.U, system.ct, system.cr, dt, psi, u,
                                       det_goal - nd_total, trace_stride, done,
                                       MAX_STEP_PROBABILITY, out_k, out_n, tr_k, tr_bl, tr_p,
                                       tr_n, top)
        for key, arr in zip(parts, (out_k[:nd], out_n[:nd], tr_k[:nt], tr_bl[:nt], tr_p[:nt], tr_n[:nt])):
            parts[key].append(arr)
        if st != 0:
            raise StepSizeError("jump probability per step exceeds "
                                f"{MAX_STEP_PROBABILITY}; reduce dt", done + steps)
        done += steps
        nd_total += nd

    cat = lambda key, shape: np.concatenate(parts[key]) if parts[key] else np.empty(shape)
    tk = cat("tk", 0).astype(np.int64)
    return TrajectoryOutput(
        channel_labels=list(CascadedSystem.labels), dt=dt, n_steps=done, seed=seed,
        detection_steps=cat("k", 0).astype(np.int64), detection_channels=cat("n", 0).astype(np.int64),
        trace_steps=tk, trace_state_steps=tk.copy(), trace_bloch=cat("bl", (0, 3)).reshape(-1, 3),
        trace_probs=cat("p", (0, 2)).reshape(-1, 2), burn_in=float(burn_in), method="cascaded",
        config=dict(kappa=kappa, nu=nu, n_max=n_max),
        stats=dict(mean_top_fock_population=float(top[0] / max(done, 1)),
                   max_top_fock_population=float(top[1]),
                   mean_photon_number=float(np.mean(cat("nph", 0))) if done else 0.0),
    )

