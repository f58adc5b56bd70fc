import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from nmtraj.atom import (EXCITED, GROUND, SIGMA, SIGMA_X, SIGMA_Y, SIGMA_Z, AtomParams, apply_lowering,
                         bloch_from_state, excited_population, generator, hamiltonian,
                         pauli_expectations, u_eff)


def test_operator_conventions():
    assert np.allclose(SIGMA @ EXCITED, GROUND)
    assert np.allclose(SIGMA @ GROUND, 0)
    assert np.allclose(SIGMA_X, SIGMA + SIGMA.conj().T)
    assert np.allclose(SIGMA_Y @ SIGMA_Y, np.eye(2))
    assert bloch_from_state(GROUND) == pytest.approx((0, 0, -1))
    assert bloch_from_state(EXCITED) == pytest.approx((0, 0, 1))


def test_hamiltonian_is_hermitian():
    h = hamiltonian(AtomParams(0.7, 3.1))
    assert np.allclose(h, h.conj().T)


def test_params_validation():
    with pytest.raises(ValueError):
        AtomParams(-1.0, 1.0)
    with pytest.raises(ValueError):
        AtomParams(1.0, np.inf)


@settings(max_examples=60, deadline=None)
@given(gamma=st.floats(0, 5), omega=st.floats(-20, 20), tau=st.floats(0, 3))
def test_u_eff_matches_expm(gamma, omega, tau):
    p = AtomParams(gamma, omega)
    assert np.allclose(u_eff(tau, p), expm(generator(p) * tau), atol=1e-11, rtol=1e-9)


@pytest.mark.parametrize("tau", [0.0, 1e-9, 0.37, 4.0])
def test_u_eff_critical_damping(tau):
    p = AtomParams(1.0, 0.5)  # degenerate generator
    assert np.allclose(u_eff(tau, p), expm(generator(p) * tau), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0, 3), b=st.floats(0, 3))
def test_u_eff_semigroup(a, b):
    p = AtomParams(1.0, 4.0)
    assert np.allclose(u_eff(a, p) @ u_eff(b, p), u_eff(a + b, p), atol=1e-11)


def test_u_eff_contracts_norm():
    p = AtomParams(1.0, 10.0)
    s = np.linalg.svd(u_eff(0.3, p), compute_uv=False)
    assert s.max() <= 1 + 1e-12


def test_u_eff_rejects_negative_time():
    with pytest.raises(ValueError):
        u_eff(-0.1, AtomParams())


def test_no_drive_survival():
    p = AtomParams(2.0, 0.0)
    psi = u_eff(0.8, p) @ EXCITED
    assert np.vdot(psi, psi).real == pytest.approx(np.exp(-1.6))


def test_lowering_and_population():
    assert np.allclose(apply_lowering([0.6, 0.8j]), [0.8j, 0])
    assert excited_population([3.0, 4.0]) == pytest.approx(16 / 25)


def test_mixture_bloch():
    sx, sy, sz = pauli_expectations([(1.0, GROUND), (1.0, 2 * EXCITED)])
    assert (sx, sy, sz) == pytest.approx((0, 0, 0))
    plus = np.array([1, 1]) / np.sqrt(2)
    assert pauli_expectations([(0.3, plus)])[0] == pytest.approx(1)
    with pytest.raises(ValueError):
        pauli_expectations([(0.0, GROUND), (1.0, [0, 0])])
