"""Independent references used to validate the trajectory engines.

Nothing here calls the engines' propagators: matrix exponentials come from
``scipy.linalg.expm`` and master equations are integrated with
``scipy.integrate.solve_ivp``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.signal import find_peaks

from .atom import SIGMA, SIGMA_X, SIGMA_Y, SIGMA_Z, AtomParams, generator, hamiltonian


@dataclass(frozen=True)
class BlochState:
    """Bloch vector ``(sx, sy, sz)`` of a two-level density matrix."""

    sx: float
    sy: float
    sz: float

    def __post_init__(self):
        if self.sx ** 2 + self.sy ** 2 + self.sz ** 2 > 1 + 1e-9:
            raise ValueError("Bloch vector longer than one")

    @classmethod
    def ground(cls) -> "BlochState":
        return cls(0.0, 0.0, -1.0)

    @classmethod
    def excited(cls) -> "BlochState":
        return cls(0.0, 0.0, 1.0)

    @classmethod
    def from_density(cls, rho: np.ndarray) -> "BlochState":
        return cls(*(float(np.trace(rho @ op).real) for op in (SIGMA_X, SIGMA_Y, SIGMA_Z)))

    def density(self) -> np.ndarray:
        return 0.5 * (np.eye(2) + self.sx * SIGMA_X + self.sy * SIGMA_Y + self.sz * SIGMA_Z)

    def as_array(self) -> np.ndarray:
        return np.array([self.sx, self.sy, self.sz])


# -- master equations ---------------------------------------------------------

def liouvillian(h: np.ndarray, c_ops: Sequence[np.ndarray]) -> np.ndarray:
    """Superoperator of ``-i[H, rho] + sum D[c] rho`` acting on row-major ``rho.ravel()``."""
    d = h.shape[0]
    eye = np.eye(d)
    L = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for c in c_ops:
        cdc = c.conj().T @ c
        L += np.kron(c, c.conj()) - 0.5 * (np.kron(cdc, eye) + np.kron(eye, cdc.T))
    return L


def lindblad_evolve(h, c_ops, rho0, times, rtol=1e-10, atol=1e-12) -> np.ndarray:
    """Density matrices at ``times`` (adaptive DOP853 integration from ``t=0``)."""
    d = h.shape[0]
    L = liouvillian(h, c_ops)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ValueError("times must be >= 0")

    def rhs(_t, y):
        v = y[: d * d] + 1j * y[d * d:]
        dv = L @ v
        return np.concatenate([dv.real, dv.imag])

    v0 = np.asarray(rho0, dtype=complex).ravel()
    y0 = np.concatenate([v0.real, v0.imag])
    t_end = float(times.max()) if times.size else 0.0
    if t_end == 0.0:
        return np.repeat(np.asarray(rho0, dtype=complex)[None], times.size, axis=0)
    grid, inverse = np.unique(times, return_inverse=True)
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", t_eval=grid, rtol=rtol, atol=atol)
    y = sol.y.T[inverse]
    return (y[:, : d * d] + 1j * y[:, d * d:]).reshape(-1, d, d)


def atom_liouvillian(params: AtomParams) -> np.ndarray:
    """Resonance-fluorescence Liouvillian of the bare atom."""
    return liouvillian(hamiltonian(params), [np.sqrt(params.gamma) * SIGMA])


def bloch_trajectory(initial: BlochState, params: AtomParams, times) -> np.ndarray:
    """Bloch vectors, shape ``(len(times), 3)``, from the atom master equation."""
    rhos = lindblad_evolve(hamiltonian(params), [np.sqrt(params.gamma) * SIGMA],
                           initial.density(), times)
    return np.array([BlochState.from_density(r).as_array() for r in rhos])


def bloch_evolve(initial: BlochState, params: AtomParams, t: float) -> BlochState:
    """Bloch vector after time ``t`` of master-equation evolution."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return BlochState(*bloch_trajectory(initial, params, [t])[0])


def steady_state_density(params: AtomParams) -> np.ndarray:
    """Null vector of the atom Liouvillian, normalised to unit trace."""
    L = atom_liouvillian(params)
    w, v = np.linalg.eig(L)
    rho = v[:, np.argmin(np.abs(w))].reshape(2, 2)
    rho = rho / np.trace(rho)
    return 0.5 * (rho + rho.conj().T)


def steady_state(params: AtomParams) -> BlochState:
    return BlochState.from_density(steady_state_density(params))


def saturation_excited_population(params: AtomParams) -> float:
    """Closed-form steady excited population ``(O^2/4) / (O^2/2 + g^2/4)``."""
    o2, g2 = params.omega_rabi ** 2, params.gamma ** 2
    return (o2 / 4) / (o2 / 2 + g2 / 4)


# -- Mollow spectrum -----------------------------------------------------------

@dataclass
class MollowSpectrum:
    """Incoherent spectral density on a grid plus the coherent weight.

    ``incoherent`` integrates (over all frequencies) to
    ``<sigma^dag sigma> - |<sigma>|^2``; ``coherent`` is the weight
    ``|<sigma>|^2`` of the delta peak at ``omega = 0``.
    """

    omega: np.ndarray
    incoherent: np.ndarray
    coherent: float
    excited_population: float


def mollow_spectrum(params: AtomParams, omega_grid) -> MollowSpectrum:
    """Resonance-fluorescence spectrum by the quantum regression theorem.

    ``F(omega) = (1/pi) Re int_0^inf e^{i omega tau} <dsigma^dag(tau) dsigma(0)> dtau``
    with ``dsigma = sigma - <sigma>``, evaluated as a resolvent of the
    Liouvillian restricted to traceless operators.
    """
    omega = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    L = atom_liouvillian(params)
    rho = steady_state_density(params)
    mean_s = np.trace(SIGMA @ rho)
    x = (SIGMA @ rho - mean_s * rho).ravel()
    sd = SIGMA.conj().T
    rv = rho.ravel()
    out = np.empty(omega.size)
    eye = np.eye(4)
    for i, w in enumerate(omega):
        y = np.linalg.lstsq(1j * w * eye + L, -x, rcond=None)[0]
        y = y - np.trace(y.reshape(2, 2)) * rv
        out[i] = np.trace(sd @ y.reshape(2, 2)).real / np.pi
    return MollowSpectrum(omega, out, float(abs(mean_s) ** 2), float(rho[1, 1].real))


def spectrum_peaks(spec: MollowSpectrum, n: int = 3) -> np.ndarray:
    """Frequencies of the ``n`` highest local maxima, sorted."""
    idx, props = find_peaks(spec.incoherent, height=0)
    top = idx[np.argsort(props["peak_heights"])[::-1][:n]]
    return np.sort(spec.omega[top])


def band_rates(params: AtomParams, responses: Sequence, omega_grid) -> np.ndarray:
    """Predicted detection rate of each channel from the spectrum.

    ``rate_n = gamma [int F |S_n|^2 domega + |<sigma>|^2 |S_n(0)|^2]``.

    Parameters
    ----------
    responses : sequence of callables
        ``S_n(omega)`` for each channel (complex or magnitude).
    omega_grid : ndarray
        Uniform grid wide enough to hold the spectrum.
    """
    omega = np.asarray(omega_grid, dtype=float)
    spec = mollow_spectrum(params, omega)
    dw = omega[1] - omega[0]
    rates = []
    for S in responses:
        s2 = np.abs(np.asarray(S(omega))) ** 2
        s0 = np.abs(np.asarray(S(np.array([0.0]))))[0] ** 2
        inc = np.sum(spec.incoherent * s2) * dw
        rates.append(params.gamma * (inc + spec.coherent * s0))
    return np.array(rates)


# -- ensemble averaging --------------------------------------------------------

def ensemble_average(traces: Sequence[np.ndarray], times: Sequence[np.ndarray] | None = None):
    """Mean and standard error of Bloch traces on a common grid.

    Parameters
    ----------
    traces : sequence of ndarray, each ``(n_times, 3)``
    times : sequence of ndarray, optional
        Time grid of each trace; all must be identical.

    Returns
    -------
    mean, sem : ndarray of shape (n_times, 3)
    """
    if len(traces) == 0:
        raise ValueError("no traces")
    if times is not None:
        ref = np.asarray(times[0])
        for t in times[1:]:
            if np.shape(t) != ref.shape or not np.allclose(t, ref, rtol=0, atol=1e-12):
                raise ValueError("trace time grids are not aligned")
    shapes = {np.shape(t) for t in traces}
    if len(shapes) != 1:
        raise ValueError(f"trace shapes differ: {sorted(shapes)}")
    arr = np.asarray(traces, dtype=float)
    mean = arr.mean(axis=0)
    if arr.shape[0] > 1:
        sem = arr.std(axis=0, ddof=1) / np.sqrt(arr.shape[0])
    else:
        sem = np.zeros_like(mean)
    return mean, sem


# -- standard Markovian trajectories ------------------------------------------

def markov_mcwf(params: AtomParams, dt: float, uniforms: np.ndarray, initial=(1.0, 0.0)):
    """Textbook jump trajectory of the bare atom with a broadband detector.

    Step rule: jump with probability ``gamma dt |c_e|^2`` (state normalised),
    jump update ``expm(G dt) sigma psi``, otherwise ``expm(G dt) psi``.

    Returns
    -------
    jump_steps : ndarray of int
    states : ndarray, shape (n_steps, 2)
        Normalised state at the start of every step.
    """
    U = expm(generator(params) * dt)
    psi = np.asarray(initial, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    jumps = []
    states = np.empty((len(uniforms), 2), dtype=complex)
    for k, u in enumerate(uniforms):
        states[k] = psi
        p = params.gamma * dt * abs(psi[1]) ** 2
        psi = U @ (SIGMA @ psi) if u < p else U @ psi
        if u < p:
            jumps.append(k)
        psi = psi / np.linalg.norm(psi)
    return np.array(jumps, dtype=np.int64), states


def markov_mcwf_ensemble(params: AtomParams, dt: float, n_steps: int, seeds: Sequence[int],
                         initial=(1.0, 0.0)) -> list[np.ndarray]:
    """Jump steps of many Markovian trajectories, vectorised over trajectories.

    Trajectory ``i`` consumes ``RandomState(seeds[i]).random_sample(n_steps)``.
    """
    U = expm(generator(params) * dt)
    out = []
    for lo in range(0, len(seeds), 256):
        batch = list(seeds[lo:lo + 256])
        u = np.stack([np.random.RandomState(int(s)).random_sample(n_steps) for s in batch])
        psi = np.tile(np.asarray(initial, dtype=complex), (len(batch), 1))
        psi /= np.linalg.norm(psi, axis=1, keepdims=True)
        hits = np.zeros((len(batch), n_steps), dtype=bool)
        for k in range(n_steps):
            p = params.gamma * dt * np.abs(psi[:, 1]) ** 2
            jump = u[:, k] < p
            hits[:, k] = jump
            pre = psi.copy()
            pre[jump, 0] = psi[jump, 1]
            pre[jump, 1] = 0.0
            psi = pre @ U.T
            psi /= np.linalg.norm(psi, axis=1, keepdims=True)
        out.extend(np.flatnonzero(h) for h in hits)
    return out


# -- brute-force window quadrature --------------------------------------------

def window_amplitude_bruteforce(window, channel=None, kernel_lengths=None) -> np.ndarray:
    """Detection (or survival) amplitude of a window by explicit enumeration.

    Sums over every branch ``E`` and every assignment of distinct emission
    steps to the detections not already attributed to the boundary, in the
    order those emissions occur, the product of kernel weights and
    propagator/lowering-operator chains. With ``channel=None`` the
    survival amplitude of the current step is returned.

    Parameters
    ----------
    window : MemoryWindow
    channel : int or str, optional
        Candidate detection channel at the current step.
    kernel_lengths : sequence of int, optional
        Usable kernel length of each in-window detection then of the
        candidate (defaults: full length).
    """
    ws = window._ws
    params = ws.params
    U = expm(generator(params) * ws.dt)
    sg = np.sqrt(params.gamma)
    W = np.array([c.weights() for c in ws.channels])
    M = W.shape[1]
    B, k, N = window.boundary_index, window.step_index, window.n_in_window
    dets = [(int(ws.dk[j]), int(ws.dn[j])) for j in range(N)]
    lens = list(kernel_lengths) if kernel_lengths is not None else [M] * (N + 1)
    powers = [np.linalg.matrix_power(U, p) for p in range(k - B + 1)]
    if channel is not None and not isinstance(channel, (int, np.integer)):
        channel = ws.labels.index(channel)

    total = np.zeros(2, dtype=complex)
    for br in window.branches:
        E = br.history_mask
        todo = [(dets[j][0], dets[j][1], lens[j]) for j in range(N) if not (E >> j) & 1]
        if channel is not None:
            todo.append((k, int(channel), lens[N]))
        ranges = [range(B, min(dkj, k - 1) + 1) if dkj < k else range(B, k + 1)
                  for dkj, _, _ in todo]
        for times in itertools.product(*ranges):
            if len(set(times)) < len(times):
                continue
            w = 1.0 + 0j
            ok = True
            for s, (dkj, n, ln) in zip(times, todo):
                d = dkj - s
                if not 0 <= d < ln:
                    ok = False
                    break
                w *= sg * W[n, d]
            if not ok:
                continue
            psi = br.state.copy()
            t = B
            for s in sorted(times):
                psi = SIGMA @ (powers[s - t] @ psi)
                t = s
            total += w * (powers[k - t] @ psi)
    return total
