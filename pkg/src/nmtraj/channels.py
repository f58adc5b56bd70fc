"""Measurement-channel impulse responses on the simulation grid.

A channel maps the atom's emission history onto one detector. It is stored
as a direct term ``delta_coeff * delta(tau)`` plus a causal sampled kernel
``h[j] = h(j dt)`` on ``[0, t_m)``. Convolutions use left-endpoint weights
``dt * h[j]`` except at ``tau = 0``, which gets half weight (trapezoid at the
jump of a causal kernel).

Conventions
-----------
Frequency response: ``S(omega) = delta_coeff + int h(tau) exp(i omega tau) dtau``.
A complete set of channels satisfies ``sum_n |S_n(omega)|^2 = 1``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal, special

from .errors import ConfigurationError


@dataclass(frozen=True)
class ChannelResponse:
    """Sampled impulse response of one detection channel.

    Parameters
    ----------
    label : str
        Channel id used in detection records.
    delta_coeff : complex
        Coefficient of the direct ``delta(tau)`` path (``-1`` for light
        reflected straight off a mirror, ``1`` for a Markovian detector).
    kernel : ndarray of complex
        Samples ``h(j dt)`` for ``j = 0 .. M-1``, in units of rate.
    latency : float
        Delay added so that the stored kernel is causal.
    dt : float
        Grid spacing.
    t_m : float
        Kernel support length, ``M * dt``.
    """

    label: str
    delta_coeff: complex
    kernel: np.ndarray
    latency: float
    dt: float
    t_m: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=complex)
        if k.ndim != 1 or k.size == 0:
            raise ConfigurationError("kernel must be a non-empty 1-d array")
        if not np.all(np.isfinite(k)):
            raise ConfigurationError(f"channel {self.label!r}: non-finite kernel samples")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "delta_coeff", complex(self.delta_coeff))

    @property
    def n_taps(self) -> int:
        return self.kernel.size

    @property
    def taus(self) -> np.ndarray:
        """Sample times of the stored (causal) kernel."""
        return np.arange(self.n_taps) * self.dt

    def weights(self) -> np.ndarray:
        """Quadrature weights used by the engine, direct term folded into ``w[0]``."""
        w = self.dt * self.kernel.copy()
        w[0] *= 0.5
        w[0] += self.delta_coeff
        return w

    def frequency_response(self, omega) -> np.ndarray:
        """Discrete-time response ``S(omega)`` of the stored channel."""
        return frequency_response(self, omega)

    def energy(self) -> float:
        """Trapezoid estimate of ``int |h(tau)|^2 dtau`` over the stored support.

        The first sample carries half weight, matching :meth:`weights`.
        """
        e = np.abs(self.kernel) ** 2
        return float((e.sum() - 0.5 * e[0]) * self.dt)


def _n_taps(dt: float, t_m: float) -> int:
    if dt <= 0 or t_m <= 0:
        raise ConfigurationError(f"dt and t_m must be positive (dt={dt}, t_m={t_m})")
    m = int(round(t_m / dt))
    if m < 1 or abs(m * dt - t_m) > 1e-9 * max(t_m, 1.0):
        raise ConfigurationError(f"t_m={t_m} is not an integer multiple of dt={dt}")
    return m


def frequency_response(channel: ChannelResponse, omega) -> np.ndarray:
    """``S(omega) = sum_j w_j exp(i omega tau_j)`` with the engine's weights."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    w = channel.weights()
    tau = channel.taus
    out = np.empty(omega.shape, dtype=complex)
    # chunk to bound memory on long grids
    step = max(1, 2_000_000 // max(tau.size, 1))
    for i in range(0, omega.size, step):
        out[i:i + step] = np.exp(1j * np.outer(omega[i:i + step], tau)) @ w
    return out


def completeness_deviation(channels: Sequence[ChannelResponse], omega_grid) -> float:
    """Largest violation of ``sum_n |S_n|^2 = 1`` over a frequency grid."""
    if len(channels) == 0:
        raise ValueError("completeness needs at least one channel")
    dts = {c.dt for c in channels}
    if len(dts) != 1:
        raise ConfigurationError(f"channels use different grids: {sorted(dts)}")
    total = sum(np.abs(frequency_response(c, omega_grid)) ** 2 for c in channels)
    return float(np.max(np.abs(total - 1.0)))


# -- filter cavity -----------------------------------------------------------

def filter_kernel(tau, kappa: float, nu: float) -> np.ndarray:
    """Analytic transmission kernel ``u(tau) kappa exp(-(kappa + i nu) tau)``."""
    tau = np.asarray(tau, dtype=float)
    return np.where(tau >= 0, kappa * np.exp(-(kappa + 1j * nu) * np.maximum(tau, 0.0)), 0.0)


def filter_spectra(omega, kappa: float, nu: float):
    """Analytic ``(S_T, S_R)`` of an ideal single-mode filter cavity."""
    x = np.asarray(omega, dtype=float) - nu
    den = kappa - 1j * x
    return kappa / den, 1j * x / den


def filter_truncation_ratio(kappa: float, t_m: float) -> float:
    """``int_{t_m}^inf |h_T|^2 / int_0^{t_m} |h_T|^2`` for the cavity kernel."""
    e = np.exp(-2.0 * kappa * t_m)
    return float(e / (1.0 - e))


def filter_responses(
    kappa: float,
    nu: float,
    dt: float,
    t_m: float,
    *,
    truncation_tol: float = 1e-3,
    min_decay_lengths: float = 5.0,
    labels: tuple[str, str] = ("T", "R"),
) -> tuple[ChannelResponse, ChannelResponse]:
    """Transmitted and reflected channels of a Fabry-Perot filter cavity.

    The transmitted kernel is ``kappa exp(-(kappa + i nu) tau)`` for
    ``tau >= 0``; the reflected channel adds a direct ``-delta(tau)`` path.

    Parameters
    ----------
    kappa : float
        Cavity half linewidth (amplitude decay rate).
    nu : float
        Cavity detuning from the atomic transition.
    dt, t_m : float
        Grid spacing and memory time. ``t_m`` must be a multiple of ``dt``.
    truncation_tol : float, optional
        Largest accepted ratio of kernel energy beyond ``t_m`` to energy
        inside it.
    min_decay_lengths : float, optional
        Require ``kappa * t_m`` at least this large.

    Returns
    -------
    transmit, reflect : ChannelResponse
    """
    if kappa <= 0:
        raise ConfigurationError(f"kappa must be positive, got {kappa}")
    m = _n_taps(dt, t_m)
    if kappa * dt > 0.1:
        raise ConfigurationError(
            f"kappa*dt={kappa * dt:.3g} does not resolve the cavity decay; use dt <= {0.1 / kappa:.3g}")
    ratio = filter_truncation_ratio(kappa, t_m)
    if kappa * t_m < min_decay_lengths or ratio > truncation_tol:
        raise ConfigurationError(
            f"t_m={t_m} too short for kappa={kappa}: kappa*t_m={kappa * t_m:.3g}, "
            f"tail ratio {ratio:.2e} (tolerance {truncation_tol:.1e})")
    h = filter_kernel(np.arange(m) * dt, kappa, nu)
    meta = dict(kind="filter", kappa=kappa, nu=nu, truncation_ratio=ratio)
    t = ChannelResponse(labels[0], 0.0, h, 0.0, dt, t_m, dict(meta))
    r = ChannelResponse(labels[1], -1.0, h.copy(), 0.0, dt, t_m, dict(meta))
    return t, r


def markov_channel(dt: float, label: str = "M") -> ChannelResponse:
    """Broadband detector ``h = delta(tau)``, memory of one grid step."""
    return ChannelResponse(label, 1.0, np.zeros(1, dtype=complex), 0.0, dt, dt, {"kind": "markov"})


# -- prism bands -------------------------------------------------------------

def prism_kernel_ideal(tau, center: float, width: float) -> np.ndarray:
    """Non-causal inverse transform of a unit top-hat on ``[c - w/2, c + w/2]``.

    ``h(tau) = exp(-i c tau) sin(w tau / 2) / (pi tau)``, so ``h(0) = w / (2 pi)``.
    """
    tau = np.asarray(tau, dtype=float)
    return np.exp(-1j * center * tau) * (width / (2 * np.pi)) * np.sinc(width * tau / (2 * np.pi))


def top_hat(omega, center: float, width: float) -> np.ndarray:
    """Ideal band indicator ``1`` on ``[c - w/2, c + w/2)``."""
    x = np.asarray(omega, dtype=float) - center
    return ((x >= -0.5 * width) & (x < 0.5 * width)).astype(float)


def prism_truncation_ratio(width: float, t_m: float) -> float:
    """Energy of the ideal sinc outside ``|tau| < t_m/2`` relative to inside."""
    a, T = 0.5 * width, 0.5 * t_m
    total = width / (2 * np.pi)
    inside = 2.0 / np.pi ** 2 * (a * special.sici(2 * a * T)[0] - np.sin(a * T) ** 2 / T)
    return float((total - inside) / inside)


def _lowpass_firls(n_taps: int, half_width: float, transition: float, dt: float) -> np.ndarray:
    fs = 2 * np.pi / dt
    lo = max(half_width - transition, 0.0)
    hi = min(half_width + transition, 0.5 * fs)
    return signal.firls(n_taps, [0.0, lo, hi, 0.5 * fs], [1.0, 1.0, 0.0, 0.0], fs=fs) / dt


def _lowpass_window(n_taps: int, half_width: float, dt: float) -> np.ndarray:
    tau = (np.arange(n_taps) - n_taps // 2) * dt
    span = n_taps * dt
    taper = 0.5 * (1 + np.cos(2 * np.pi * tau / span))
    return prism_kernel_ideal(tau, 0.0, 2 * half_width).real * taper


def prism_response(
    center: float,
    width: float,
    dt: float,
    t_m: float,
    *,
    label: str | None = None,
    method: str = "firls",
    transition: float | None = None,
    truncation_tol: float = 0.25,
    normalize: bool = True,
) -> ChannelResponse:
    """One band of a prism spectrometer, designed as a causal FIR kernel.

    A real, even low-pass prototype of support ``t_m`` is designed around
    ``tau = 0``, modulated to ``center`` and delayed by ``latency`` (the
    centre tap) so that storage is causal.

    Parameters
    ----------
    center, width : float
        Band centre and full width.
    dt, t_m : float
        Grid spacing and kernel support.
    method : {"firls", "window"}
        ``"firls"``: least-squares design with transition half-width
        ``transition`` (default ``pi / t_m``). ``"window"``: ideal sinc with
        a raised-cosine taper.
    truncation_tol : float
        Largest accepted tail ratio of the ideal sinc outside the support.
    normalize : bool
        Rescale so ``max |S|^2 = 1``. Keeps the detector passive: an
        unnormalised truncated design can exceed unit transmission.

    Returns
    -------
    ChannelResponse
    """
    if width <= 0:
        raise ConfigurationError(f"band width must be positive, got {width}")
    if width * dt > np.pi or abs(center) + 0.5 * width >= np.pi / dt:
        raise ConfigurationError(f"band [{center - width / 2}, {center + width / 2}] aliases at dt={dt}")
    m = _n_taps(dt, t_m)
    if transition is None:
        transition = np.pi / t_m
    if width * t_m <= 2 * np.pi:
        raise ConfigurationError(f"width*t_m={width * t_m:.3g} cannot resolve the band (need > 2 pi)")
    ratio = prism_truncation_ratio(width, t_m)
    if ratio > truncation_tol:
        raise ConfigurationError(f"prism tail ratio {ratio:.3f} exceeds tolerance {truncation_tol}")

    c = m // 2
    n_proto = 2 * c + 1 if 2 * c + 1 <= m else 2 * c - 1
    start = c - n_proto // 2
    if method == "firls":
        proto = _lowpass_firls(n_proto, 0.5 * width, transition, dt)
    elif method == "window":
        proto = _lowpass_window(n_proto, 0.5 * width, dt)
    else:
        raise ConfigurationError(f"unknown prism design method {method!r}")
    latency = c * dt
    h = np.zeros(m, dtype=complex)
    idx = np.arange(start, start + n_proto)
    h[idx] = proto * np.exp(-1j * center * (idx * dt - latency))
    ch = ChannelResponse(label or f"{center:g}", 0.0, h, latency, dt, t_m,
                         dict(kind="prism", center=center, width=width, method=method,
                              truncation_ratio=ratio))
    if normalize:
        grid = center + np.linspace(-width, width, 4001)
        peak = np.max(np.abs(frequency_response(ch, grid)))
        ch = ChannelResponse(ch.label, 0.0, h / peak, latency, dt, t_m, ch.meta)
    return ch


def prism_channels(
    centers: Sequence[float],
    width: float,
    dt: float,
    t_m: float,
    labels: Sequence[str] | None = None,
    **kwargs,
) -> list[ChannelResponse]:
    """Prism bands sharing width and grid."""
    if labels is None:
        labels = [f"{c:g}" for c in centers]
    if len(labels) != len(centers):
        raise ConfigurationError("one label per band centre is required")
    return [prism_response(c, width, dt, t_m, label=l, **kwargs) for c, l in zip(centers, labels)]


def unshifted_kernel(channel: ChannelResponse):
    """``(tau, h)`` with the latency removed, i.e. on ``[-latency, t_m - latency)``."""
    return channel.taus - channel.latency, channel.kernel


# -- CSV export --------------------------------------------------------------

def kernel_to_csv(channel: ChannelResponse, path=None) -> str:
    """Write ``tau, re, im`` rows preceded by ``# key=value`` header lines."""
    buf = io.StringIO()
    buf.write(f"# label={channel.label}\n")
    d = channel.delta_coeff
    buf.write(f"# delta_coeff={float(d.real)!r},{float(d.imag)!r}\n")
    buf.write(f"# latency={float(channel.latency)!r}\n# dt={float(channel.dt)!r}\n"
              f"# t_m={float(channel.t_m)!r}\n")
    buf.write("tau,re,im\n")
    for t, h in zip(channel.taus, channel.kernel):
        buf.write(f"{float(t)!r},{float(h.real)!r},{float(h.imag)!r}\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def kernel_from_csv(source) -> ChannelResponse:
    """Inverse of :func:`kernel_to_csv`; accepts a path or the CSV text."""
    text = source
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    head = {}
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            k, v = line[1:].strip().split("=", 1)
            head[k] = v
        elif line and not line.startswith("tau"):
            rows.append([float(x) for x in line.split(",")])
    arr = np.asarray(rows)
    dre, dim = (float(x) for x in head["delta_coeff"].split(","))
    return ChannelResponse(head["label"], complex(dre, dim), arr[:, 1] + 1j * arr[:, 2],
                           float(head["latency"]), float(head["dt"]), float(head["t_m"]))
