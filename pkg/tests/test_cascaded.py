import numpy as np
import pytest

from nmtraj import oracles
from nmtraj.atom import AtomParams
from nmtraj.cascaded import (CascadedState, CascadedSystem, build_heff, collapse_operators, mcwf_step,
                             run_trajectory_cascaded, system_hamiltonian)
from nmtraj.channels import filter_spectra
from nmtraj.errors import ConfigurationError, StepSizeError

P = AtomParams(1.0, 10.0)
DT = 0.005


def test_heff_structure():
    h = build_heff(P, 5.0, 1.0, 3)
    hs = system_hamiltonian(P, 5.0, 1.0, 3)
    ct, cr = collapse_operators(P, 5.0, 3)
    anti = sum(c.conj().T @ c for c in (ct, cr))
    assert np.allclose(hs, hs.conj().T)
    assert np.allclose(h, hs - 0.5j * anti)


def test_norm_loss_equals_jump_probability():
    sysm = CascadedSystem(P, 5.0, 0.0, 1e-7)
    rng = np.random.default_rng(0)
    psi = rng.normal(size=sysm.U.shape[0]) + 1j * rng.normal(size=sysm.U.shape[0])
    s = CascadedState(psi / np.linalg.norm(psi), 4)
    loss = 1 - np.linalg.norm(sysm.U @ s.amplitudes) ** 2
    assert loss == pytest.approx(sysm.jump_probabilities(s).sum(), rel=1e-3)


def test_state_helpers():
    g = CascadedState.ground(4)
    assert g.atom_bloch() == pytest.approx((0, 0, -1))
    assert g.photon_number() == 0
    e = CascadedState.from_atom([0, 1], 4)
    assert e.atom_bloch()[2] == pytest.approx(1)


def test_step_and_errors():
    sysm = CascadedSystem(P, 5.0, 0.0, DT)
    s, jump = mcwf_step(sysm, CascadedState.ground(4), np.random.RandomState(0))
    assert jump is None and np.linalg.norm(s.amplitudes) == pytest.approx(1)
    with pytest.raises(ConfigurationError):
        mcwf_step(sysm, s, np.random.RandomState(0), dt=0.1)
    big = CascadedSystem(AtomParams(50.0, 0.0), 5.0, 0.0, 0.01)
    with pytest.raises(StepSizeError):
        big.step(CascadedState.from_atom([0, 1], 4), 0.5)
    with pytest.raises(ConfigurationError):
        CascadedSystem(P, 5.0, 0.0, 0.0)


def test_compiled_run_matches_python_steps():
    u = np.random.RandomState(3).random_sample(4000)
    out = run_trajectory_cascaded(P, 5.0, 0.0, DT, 4000 * DT, 0, uniforms=u, trace_stride=1)
    sysm = CascadedSystem(P, 5.0, 0.0, DT)
    s = CascadedState.ground(4)
    jumps, bloch = [], []
    for k, x in enumerate(u):
        bloch.append(s.atom_bloch())
        s, j = sysm.step(s, x)
        if j is not None:
            jumps.append((k, j))
    assert [(k, out.channel_labels[c]) for k, c in zip(out.detection_steps, out.detection_channels)] == jumps
    assert np.allclose(out.trace_bloch, np.array(bloch), atol=1e-10)


@pytest.mark.slow
def test_rate_and_split_match_spectrum():
    out = run_trajectory_cascaded(P, 5.0, 0.0, DT, 2000.0, 11)
    rate = out.n_detections / out.duration
    ss = oracles.saturation_excited_population(P)
    assert rate == pytest.approx(ss, rel=4 / np.sqrt(out.n_detections))
    grid = np.arange(-60, 60, 0.01)
    pred = oracles.band_rates(P, [lambda w: filter_spectra(w, 5.0, 0.0)[0],
                                  lambda w: filter_spectra(w, 5.0, 0.0)[1]], grid)
    f_t = np.mean(out.detection_channels == 0)
    sig = np.sqrt(f_t * (1 - f_t) / out.n_detections)
    assert abs(f_t - pred[0] / pred.sum()) < 3 * sig
    assert out.stats["max_top_fock_population"] < 1e-4
    assert np.max(np.abs(out.trace_bloch[:, 0])) < 1e-10


def test_determinism():
    a = run_trajectory_cascaded(P, 5.0, 0.0, DT, 30.0, 4).to_jsonl()
    b = run_trajectory_cascaded(P, 5.0, 0.0, DT, 30.0, 4).to_jsonl()
    assert a == b
