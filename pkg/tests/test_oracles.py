import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid
from scipy.linalg import expm

from nmtraj import oracles
from nmtraj.atom import SIGMA, AtomParams, hamiltonian
from nmtraj.channels import ChannelResponse, filter_responses, markov_channel
from nmtraj.engine import MemoryWindow

P = AtomParams(1.0, 10.0)


def test_bloch_state_roundtrip():
    b = oracles.BlochState(0.3, -0.2, 0.5)
    assert np.allclose(oracles.BlochState.from_density(b.density()).as_array(), b.as_array())
    assert oracles.BlochState.ground().sz == -1
    assert oracles.BlochState.excited().sz == 1


def test_liouvillian_preserves_trace():
    L = oracles.atom_liouvillian(P)
    # trace functional in row-major vec is vec(I)
    assert np.allclose(np.eye(2).ravel() @ L, 0, atol=1e-12)


def test_lindblad_matches_dense_propagator():
    L = oracles.atom_liouvillian(P)
    rho0 = oracles.BlochState.ground().density()
    times = np.array([0.0, 0.3, 1.7])
    got = oracles.lindblad_evolve(hamiltonian(P), [np.sqrt(P.gamma) * SIGMA], rho0, times)
    for t, r in zip(times, got):
        ref = (expm(L * t) @ rho0.ravel()).reshape(2, 2)
        assert np.allclose(r, ref, atol=1e-8)


def test_decay_without_drive():
    p = AtomParams(1.3, 0.0)
    t = np.linspace(0, 3, 7)
    b = oracles.bloch_trajectory(oracles.BlochState.excited(), p, t)
    assert np.allclose((b[:, 2] + 1) / 2, np.exp(-1.3 * t), atol=1e-8)


def test_steady_state_closed_form():
    ss = oracles.steady_state(P)
    s = P.omega_rabi ** 2 / P.gamma ** 2
    assert ss.sz == pytest.approx(-1 / (1 + 2 * s), abs=1e-10)
    assert oracles.saturation_excited_population(P) == pytest.approx(s / (1 + 2 * s), rel=1e-10)
    late = oracles.bloch_evolve(oracles.BlochState.ground(), P, 40.0)
    assert np.allclose(late.as_array(), ss.as_array(), atol=1e-8)


def test_mollow_triplet_peaks_and_weight():
    spec = oracles.mollow_spectrum(P, np.arange(-30, 30 + 1e-9, 0.1))
    peaks = oracles.spectrum_peaks(spec)
    assert np.all(np.abs(peaks - [-10, 0, 10]) <= 0.1 + 1e-9)
    grid = np.arange(-200, 200, 0.01)
    dense = oracles.mollow_spectrum(P, grid)
    total = trapezoid(dense.incoherent, grid) + dense.coherent
    assert total == pytest.approx(dense.excited_population, rel=5e-3)


def test_band_rates_sum_to_emission_rate():
    grid = np.arange(-60, 60, 0.01)
    edges = [-np.inf, -5, 5, np.inf]
    resp = [lambda w, a=a, b=b: ((w >= a) & (w < b)).astype(float) for a, b in zip(edges[:-1], edges[1:])]
    rates = oracles.band_rates(P, resp, grid)
    assert rates.sum() == pytest.approx(P.gamma * oracles.saturation_excited_population(P), rel=0.01)
    assert rates[0] == pytest.approx(rates[2], rel=1e-3)


def test_ensemble_average_checks_alignment():
    a = np.zeros((4, 3))
    mean, sem = oracles.ensemble_average([a, a + 1])
    assert np.allclose(mean, 0.5) and np.allclose(sem, 0.5)
    with pytest.raises(ValueError):
        oracles.ensemble_average([a, np.zeros((5, 3))])
    with pytest.raises(ValueError):
        oracles.ensemble_average([a, a], times=[np.arange(4), np.arange(4) + 0.1])
    with pytest.raises(ValueError):
        oracles.ensemble_average([])


def test_markov_mcwf_ensemble_matches_single():
    dt, n = 0.005, 3000
    seeds = [3, 4]
    ens = oracles.markov_mcwf_ensemble(P, dt, n, seeds)
    for s, e in zip(seeds, ens):
        j, _ = oracles.markov_mcwf(P, dt, np.random.RandomState(s).random_sample(n))
        assert np.array_equal(j, e)


def test_markov_mcwf_rate():
    dt, n = 0.01, 200_000
    j, _ = oracles.markov_mcwf(P, dt, np.random.RandomState(0).random_sample(n))
    rate = j.size / (n * dt)
    assert rate == pytest.approx(oracles.saturation_excited_population(P), rel=0.03)


def _random_window(seed, m=6, n_ch=2):
    rng = np.random.default_rng(seed)
    chans = [ChannelResponse(str(i), float(rng.normal()), rng.normal(size=m) + 1j * rng.normal(size=m),
                             0.0, 0.05, m * 0.05) for i in range(n_ch)]
    return MemoryWindow(AtomParams(1.0, 3.0), chans, initial_state=(0.6, 0.8))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), dets=st.lists(st.integers(-1, 1), min_size=18, max_size=18))
def test_bruteforce_matches_incremental(seed, dets):
    w = _random_window(seed)
    for d in dets:
        a = w.survival_amplitude()
        b = oracles.window_amplitude_bruteforce(w)
        assert np.allclose(a, b, rtol=1e-10, atol=1e-14 * max(1, np.abs(b).max()))
        for n in range(2):
            a = w.detection_amplitude(n)
            b = oracles.window_amplitude_bruteforce(w, n)
            assert np.allclose(a, b, rtol=1e-10, atol=1e-12 * max(1e-300, np.abs(b).max()))
        w._ws.commit(d)


def test_bruteforce_markov_channel_is_lowering():
    w = MemoryWindow(P, [markov_channel(0.01)])
    for _ in range(5):
        w._ws.commit(-1)
    a = oracles.window_amplitude_bruteforce(w, 0)
    assert np.allclose(a, np.sqrt(P.gamma) * SIGMA @ w.survival_amplitude())


def test_bruteforce_filter_pair():
    chans = filter_responses(20.0, 0.0, 0.004, 0.3)
    w = MemoryWindow(P, chans, initial_state=(0.6, 0.8))
    for d in [-1] * 7 + [0] + [-1] * 9 + [1] + [-1] * 5:
        w._ws.commit(d)
    for n in (0, 1, None):
        a = w.survival_amplitude() if n is None else w.detection_amplitude(n)
        assert np.allclose(a, oracles.window_amplitude_bruteforce(w, n), rtol=1e-10, atol=1e-14)
