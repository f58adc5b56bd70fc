import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmtraj.channels import (ChannelResponse, completeness_deviation, filter_responses, filter_spectra,
                             filter_truncation_ratio, frequency_response, kernel_from_csv, kernel_to_csv,
                             markov_channel, prism_channels, prism_kernel_ideal, prism_response,
                             prism_truncation_ratio, top_hat, unshifted_kernel)
from nmtraj.errors import ConfigurationError


def test_filter_kernel_energy():
    kappa = 5.0
    t, _ = filter_responses(kappa, 0.0, 1 / (100 * kappa), 10 / kappa)
    assert t.energy() == pytest.approx(kappa / 2, rel=0.01)


@pytest.mark.parametrize("nu", [0.0, 3.0])
def test_filter_frequency_response_matches_closed_form(nu):
    kappa, dt = 5.0, 0.001
    t, r = filter_responses(kappa, nu, dt, 2.0)
    w = np.linspace(-30, 30, 121)
    st_, sr = filter_spectra(w, kappa, nu)
    assert np.allclose(t.frequency_response(w), st_, atol=0.01)
    assert np.allclose(r.frequency_response(w), sr, atol=0.01)


def test_filter_pair_is_complete():
    kappa = 5.0
    chans = filter_responses(kappa, 0.0, 0.005, 1.0)
    assert completeness_deviation(chans, np.linspace(-10 * kappa, 10 * kappa, 2001)) < 0.02


def test_filter_rejects_bad_grids():
    with pytest.raises(ConfigurationError):
        filter_responses(5.0, 0.0, 0.05, 1.0)
    with pytest.raises(ConfigurationError):
        filter_responses(5.0, 0.0, 0.005, 0.5)
    with pytest.raises(ConfigurationError):
        filter_responses(-1.0, 0.0, 0.005, 1.0)
    assert filter_truncation_ratio(5.0, 1.0) < 1e-3


def test_markov_channel_is_flat_and_complete():
    m = markov_channel(0.01)
    w = np.linspace(-100, 100, 11)
    assert np.allclose(m.frequency_response(w), 1)
    assert completeness_deviation([m], w) < 1e-14


def test_weights_half_weight_and_delta():
    ch = ChannelResponse("x", 0.5, np.array([2.0, 4.0, 6.0]), 0.0, 0.1, 0.3)
    assert np.allclose(ch.weights(), [0.1 * 1.0 + 0.5, 0.4, 0.6])
    assert ch.n_taps == 3 and np.allclose(ch.taus, [0, 0.1, 0.2])


def test_completeness_errors():
    with pytest.raises(ValueError):
        completeness_deviation([], [0.0])
    with pytest.raises(ConfigurationError):
        completeness_deviation([markov_channel(0.1), markov_channel(0.2)], [0.0])


def test_ideal_prism_kernel_transform():
    # the ideal kernel integrates to the unit top-hat
    tau = np.linspace(-400, 400, 400_001)
    h = prism_kernel_ideal(tau, 2.0, 10.0)
    s = np.trapezoid(h * np.exp(1j * 1.0 * tau), tau) if hasattr(np, "trapezoid") else None
    assert prism_kernel_ideal(0.0, 0.0, 10.0) == pytest.approx(10 / (2 * np.pi))
    if s is not None:
        assert abs(s) == pytest.approx(1.0, abs=0.01)
    assert top_hat(np.array([2.0, 7.5, -3.1]), 2.0, 10.0).tolist() == [1.0, 0.0, 0.0]


def test_prism_band_shape():
    dt, t_m = 0.005, 1.0
    ch = prism_response(10.0, 10.0, dt, t_m)
    w = np.linspace(-40, 40, 1601)
    s2 = np.abs(ch.frequency_response(w)) ** 2
    assert s2.max() == pytest.approx(1.0, abs=1e-6)
    assert s2[np.abs(w - 10) <= 5 - np.pi / t_m].min() > 0.8
    assert s2[np.abs(w - 10) >= 5 + np.pi / t_m].max() < 0.05
    # mean-square error against the top-hat away from the edges
    keep = np.abs(np.abs(w - 10) - 5) > np.pi / t_m
    assert np.mean((s2[keep] - top_hat(w[keep], 10.0, 10.0)) ** 2) < 0.01


def test_prism_is_causal_with_latency():
    ch = prism_response(0.0, 10.0, 0.005, 1.0)
    assert ch.latency == pytest.approx(0.5)
    tau, h = unshifted_kernel(ch)
    assert tau[0] == pytest.approx(-0.5) and np.all(ch.taus >= 0)
    # real even prototype for the centred band
    nz = np.flatnonzero(np.abs(h) > 0)
    assert np.allclose(h[nz], h[nz][::-1])


def test_prism_window_method_and_errors():
    ch = prism_response(0.0, 10.0, 0.005, 1.0, method="window")
    assert ch.meta["method"] == "window"
    with pytest.raises(ConfigurationError):
        prism_response(0.0, 10.0, 0.005, 1.0, method="magic")
    with pytest.raises(ConfigurationError):
        prism_response(0.0, 5.0, 0.005, 1.0)  # cannot resolve the band
    with pytest.raises(ConfigurationError):
        prism_response(700.0, 10.0, 0.005, 1.0)  # aliased
    assert 0 < prism_truncation_ratio(10.0, 1.0) < 0.25


def test_prism_channels_labels():
    chans = prism_channels([-10, 0, 10], 10.0, 0.005, 1.0, labels=["L", "C", "R"])
    assert [c.label for c in chans] == ["L", "C", "R"]
    with pytest.raises(ConfigurationError):
        prism_channels([-10, 0], 10.0, 0.005, 1.0, labels=["L"])


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000), delta=st.complex_numbers(max_magnitude=2, allow_nan=False))
def test_kernel_csv_roundtrip(seed, delta, tmp_path_factory):
    rng = np.random.default_rng(seed)
    ch = ChannelResponse("b", delta, rng.normal(size=5) + 1j * rng.normal(size=5), 0.02, 0.01, 0.05)
    back = kernel_from_csv(kernel_to_csv(ch))
    assert back.label == "b" and back.delta_coeff == ch.delta_coeff
    assert np.array_equal(back.kernel, ch.kernel)
    p = tmp_path_factory.mktemp("k") / "k.csv"
    kernel_to_csv(ch, p)
    assert np.array_equal(kernel_from_csv(p).kernel, ch.kernel)


def test_frequency_response_function_matches_method():
    ch = prism_response(0.0, 10.0, 0.005, 1.0)
    w = np.array([0.0, 3.0])
    assert np.allclose(frequency_response(ch, w), ch.frequency_response(w))
