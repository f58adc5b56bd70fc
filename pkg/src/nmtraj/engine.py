"""Non-Markovian quantum trajectories with a finite memory window.

Between the window boundary ``B = t - t_m`` and the present ``t`` the engine
keeps, for every subset of the detections made inside the window, the atom's
survival amplitude under the hypothesis that exactly those detections have
already been accounted for by an emission. The subsets fixed at the
boundary are the branch states; the conditioned state at the boundary is
their norm-weighted mixture. A detection in channel ``n`` at step ``k`` has
amplitude

    A_n = sqrt(gamma) sum_{s in [B, k]} w_n[k - s] U(k - s) sigma psi(s),

where ``psi(s)`` runs over histories that have already emitted for every
earlier in-window detection. Detection probability in the step is
``P_n = dt |A_n|^2 / |psi_D(k)|^2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _core
from .atom import GROUND, AtomParams, u_eff
from .channels import ChannelResponse
from .errors import ConfigurationError, NumericalFault, StepSizeError, WindowOverflowError

_CHUNK = 100_000


@dataclass(frozen=True)
class DetectionRecord:
    """A grid-aligned detection event."""

    time: float
    channel: str


@dataclass(frozen=True)
class BranchState:
    """Unnormalised atom state at the window boundary.

    ``history_mask`` bit ``j`` is set when the ``j``-th in-window detection
    (oldest first) is attributed to an emission before the boundary.
    """

    history_mask: int
    state: np.ndarray


def _check_channels(channels: Sequence[ChannelResponse]):
    if len(channels) == 0:
        raise ConfigurationError("at least one channel is required")
    dts = {c.dt for c in channels}
    taps = {c.n_taps for c in channels}
    if len(dts) != 1 or len(taps) != 1:
        raise ConfigurationError("all channels must share dt and kernel length")
    labels = [c.label for c in channels]
    if len(set(labels)) != len(labels):
        raise ConfigurationError(f"duplicate channel labels {labels}")
    return dts.pop(), taps.pop()


class _Workspace:
    """Arrays and compiled-call plumbing shared by the stepping APIs."""

    def __init__(self, params: AtomParams, channels, max_in_window, shorten_above, initial_state):
        dt, m = _check_channels(channels)
        if max_in_window < 1 or max_in_window > 16:
            raise ConfigurationError("max_in_window must lie in [1, 16]")
        self.params = params
        self.channels = list(channels)
        self.labels = [c.label for c in channels]
        self.dt = dt
        self.M = m
        self.U = u_eff(dt, params)
        self.sg = math.sqrt(params.gamma)
        self.W = np.array([c.weights() for c in channels])
        self.max_in = int(max_in_window)
        self.shorten_above = -1 if shorten_above is None else int(shorten_above)
        self.short_len = max(1, m // 2)
        nsub = 1 << self.max_in
        nch = len(channels)
        self.buf = np.zeros((nsub, m + 1, 2), dtype=complex)
        self.zbuf = np.zeros((nch, nsub, m + 1, 2), dtype=complex)
        self.amp = np.zeros((nch, 2), dtype=complex)
        self.probs = np.zeros(nch)
        self.dk = np.zeros(self.max_in, dtype=np.int64)
        self.dn = np.zeros(self.max_in, dtype=np.int64)
        self.dl = np.zeros(self.max_in, dtype=np.int64)
        self.meta = np.zeros(6, dtype=np.int64)
        self.lognorm = np.zeros(1)
        psi = np.asarray(initial_state, dtype=complex)
        nrm = np.linalg.norm(psi)
        if psi.shape != (2,) or nrm == 0:
            raise ConfigurationError("initial_state must be a non-zero amplitude pair")
        self.buf[0, 0] = psi / nrm
        self._fresh = False

    def amplitudes(self) -> float:
        norm = _core.amplitudes(self.U, self.sg, self.W, self.dt, self.buf, self.zbuf, self.amp,
                                self.probs, self.dk, self.dn, self.dl, self.meta,
                                self.shorten_above, self.short_len)
        self._fresh = True
        return norm

    def commit(self, det: int):
        if not self._fresh:
            self.amplitudes()
        st = _core.commit(self.U, self.sg, self.W, self.buf, self.zbuf, self.dk, self.dn, self.dl,
                          self.meta, self.lognorm, det, self.shorten_above, self.short_len,
                          self.max_in)
        self._fresh = False
        _raise_status(st, int(self.meta[0]), self.max_in)

    def raise_status(self, status):
        _raise_status(status, int(self.meta[0]), self.max_in, self.probs)


def _raise_status(status, k, max_in, probs=None):
    if status == _core.OK:
        return
    if status == _core.OVERFLOW:
        raise WindowOverflowError(
            f"more than {max_in} detections inside one memory window; reduce dt/t_m "
            "or enable kernel shortening", k)
    if status == _core.STEP_SIZE:
        msg = "sum of per-step detection probabilities exceeds 1"
        if probs is not None:
            msg += f" (P_n = {np.array2string(probs, precision=4)})"
        raise StepSizeError(msg + "; reduce dt", k)
    raise NumericalFault("survival amplitude vanished or became non-finite", k)


class MemoryWindow:
    """Single-trajectory stepping state over one memory window.

    Parameters
    ----------
    params : AtomParams
    channels : sequence of ChannelResponse
        Complete or partial set of detection channels sharing ``dt`` and
        kernel length ``M``; the window spans ``M`` grid steps.
    max_in_window : int, optional
        Largest number of detections tracked inside one window. Cost and
        memory grow as ``2**max_in_window``.
    shorten_above : int or None, optional
        If set, a candidate detection made while this many detections are
        already in the window uses a kernel cut to half length (and the
        event is counted in ``n_shortened``).
    initial_state : array_like, optional
        Atom state at the first boundary, default ground.
    """

    def __init__(self, params: AtomParams, channels: Sequence[ChannelResponse], *,
                 max_in_window: int = 8, shorten_above: int | None = None,
                 initial_state=GROUND):
        self._ws = _Workspace(params, channels, max_in_window, shorten_above, initial_state)

    # -- bookkeeping -------------------------------------------------------
    @property
    def dt(self) -> float:
        return self._ws.dt

    @property
    def step_index(self) -> int:
        return int(self._ws.meta[0])

    @property
    def time(self) -> float:
        return self.step_index * self.dt

    @property
    def boundary_index(self) -> int:
        return int(self._ws.meta[1])

    @property
    def boundary_time(self) -> float:
        return self.boundary_index * self.dt

    @property
    def n_in_window(self) -> int:
        return int(self._ws.meta[2])

    @property
    def n_renormalizations(self) -> int:
        return int(self._ws.meta[3])

    @property
    def n_shortened(self) -> int:
        return int(self._ws.meta[4])

    @property
    def in_window_detections(self) -> list[DetectionRecord]:
        ws = self._ws
        return [DetectionRecord(float(ws.dk[j] * ws.dt), ws.labels[ws.dn[j]])
                for j in range(self.n_in_window)]

    @property
    def branches(self) -> list[BranchState]:
        ws = self._ws
        s = self.boundary_index % (ws.M + 1)
        return [BranchState(E, ws.buf[E, s].copy()) for E in range(1 << self.n_in_window)]

    def history_state(self, mask: int, step: int) -> np.ndarray:
        """Stored amplitude ``buf[mask, step]`` for ``B <= step <= k`` (scaled)."""
        if not (self.boundary_index <= step <= self.step_index):
            raise IndexError("step outside the current window")
        if mask >= 1 << self.n_in_window:
            raise IndexError("mask refers to detections outside the window")
        return self._ws.buf[mask, step % (self._ws.M + 1)].copy()

    # -- amplitudes --------------------------------------------------------
    def survival_amplitude(self) -> np.ndarray:
        """Unnormalised survival state at the current time (common scale removed)."""
        ws = self._ws
        return ws.buf[(1 << self.n_in_window) - 1, self.step_index % (ws.M + 1)].copy()

    def no_jump_extend(self) -> np.ndarray:
        """Survival state one step ahead if nothing is detected now."""
        return self._ws.U @ self.survival_amplitude()

    def detection_amplitude(self, channel) -> np.ndarray:
        """Rate amplitude ``A_n``; ``P_n = dt |A_n|^2 / |survival|^2``."""
        n = channel if isinstance(channel, (int, np.integer)) else self._ws.labels.index(channel)
        self._ws.amplitudes()
        return self._ws.amp[n].copy()

    def detection_probabilities(self) -> np.ndarray:
        """Per-channel detection probabilities for the current step."""
        self._ws.amplitudes()
        return self._ws.probs.copy()

    def log_window_normalization(self) -> float:
        """``log <psi0|psi0>`` including factors removed by renormalisation."""
        a = self.survival_amplitude()
        return float(np.log(np.vdot(a, a).real) + self._ws.lognorm[0])

    def window_normalization(self) -> float:
        """Squared norm of the survival state relative to the initial state."""
        return float(np.exp(self.log_window_normalization()))

    # -- stepping ----------------------------------------------------------
    def step(self, u: float) -> DetectionRecord | None:
        """Advance one grid step using the uniform variate ``u``.

        ``u < P_1 + ... + P_n`` selects channel ``n`` (inverse CDF); larger
        ``u`` means no detection.
        """
        ws = self._ws
        norm = ws.amplitudes()
        if norm == 0.0:
            ws.raise_status(_core.ZERO_NORM)
        if ws.probs.sum() > 1.0:
            ws.raise_status(_core.STEP_SIZE)
        det = int(_core.choose(ws.probs, float(u)))
        k = self.step_index
        ws.commit(det)
        if det < 0:
            return None
        return DetectionRecord(k * ws.dt, ws.labels[det])

    def conditioned_state(self) -> list[tuple[float, np.ndarray]]:
        """Boundary mixture as ``(P_k, normalised state)`` pairs, ``sum P_k = 1``."""
        br = self.branches
        norms = np.array([np.vdot(b.state, b.state).real for b in br])
        tot = norms.sum()
        out = []
        for b, nn in zip(br, norms):
            st = b.state / np.sqrt(nn) if nn > 0 else b.state
            out.append((float(nn / tot), st))
        return out


@dataclass
class TrajectoryOutput:
    """Detections and sampled traces of one trajectory.

    Attributes
    ----------
    detection_steps, detection_channels : ndarray of int
        Grid index and channel index of every detection.
    trace_steps, trace_state_steps : ndarray of int
        Grid index at which each trace sample was taken and grid index of
        the time its Bloch vector refers to (the window boundary for the
        memory engine, the same step for Markovian engines).
    trace_bloch : ndarray, shape (n, 3)
    trace_probs : ndarray, shape (n, n_channels)
    """

    channel_labels: list
    dt: float
    n_steps: int
    seed: int
    detection_steps: np.ndarray
    detection_channels: np.ndarray
    trace_steps: np.ndarray
    trace_state_steps: np.ndarray
    trace_bloch: np.ndarray
    trace_probs: np.ndarray
    burn_in: float = 0.0
    method: str = "nm"
    config: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def detection_times(self) -> np.ndarray:
        return self.detection_steps * self.dt

    @property
    def n_detections(self) -> int:
        return int(self.detection_steps.size)

    def records(self, skip_burn_in: bool = False) -> list[DetectionRecord]:
        """Detections as records; optionally drop those before ``burn_in``."""
        t = self.detection_times
        keep = t >= self.burn_in if skip_burn_in else np.ones(t.size, bool)
        return [DetectionRecord(float(ti), self.channel_labels[c])
                for ti, c, k in zip(t, self.detection_channels, keep) if k]

    def header(self) -> dict:
        return dict(method=self.method, seed=int(self.seed), dt=self.dt, n_steps=int(self.n_steps),
                    channels=list(self.channel_labels), burn_in=self.burn_in,
                    config=self.config, stats=self.stats)

    def to_jsonl(self, path=None) -> str:
        """One ``{"t", "channel"}`` object per line after a ``{"header": ...}`` line."""
        lines = [json.dumps({"header": self.header()}, sort_keys=True)]
        for r in self.records():
            lines.append(json.dumps({"t": round(r.time, 12), "channel": r.channel}))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    def traces_to_csv(self, path=None) -> str:
        """CSV with ``t, t_state, sx, sy, sz, P_<label>...`` after a JSON header comment."""
        cols = ["t", "t_state", "sx", "sy", "sz"] + [f"P_{l}" for l in self.channel_labels]
        out = ["# " + json.dumps(self.header(), sort_keys=True), ",".join(cols)]
        t = self.trace_steps * self.dt
        ts = self.trace_state_steps * self.dt
        for i in range(t.size):
            vals = [t[i], ts[i], *self.trace_bloch[i], *self.trace_probs[i]]
            out.append(",".join(repr(float(v)) for v in vals))
        text = "\n".join(out) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def read_detections_jsonl(source) -> tuple[dict, list[DetectionRecord]]:
    """Parse a detections file written by :meth:`TrajectoryOutput.to_jsonl`."""
    text = Path(source).read_text() if not str(source).lstrip().startswith("{") else source
    header = {}
    recs = []
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        if "header" in obj:
            header = obj["header"]
        else:
            recs.append(DetectionRecord(float(obj["t"]), str(obj["channel"])))
    return header, recs


def _n_steps(duration, dt):
    if duration is None:
        return None
    if duration < 0 or not np.isfinite(duration):
        raise ConfigurationError(f"duration must be finite and >= 0, got {duration}")
    return int(round(duration / dt))


def _check_seed(seed):
    if seed is None:
        raise ConfigurationError("a seed is required")
    seed = int(seed)
    if not 0 <= seed < 2 ** 32:
        raise ConfigurationError("seed must lie in [0, 2**32)")
    return seed


def run_trajectory(
    params: AtomParams,
    channels: Sequence[ChannelResponse],
    duration: float | None,
    seed: int,
    *,
    target_detections: int | None = None,
    max_duration: float | None = None,
    trace_stride: int = 20,
    max_in_window: int = 8,
    shorten_above: int | None = None,
    initial_state=GROUND,
    burn_in: float | None = None,
    uniforms: np.ndarray | None = None,
    on_excess: str = "raise",
) -> TrajectoryOutput:
    """Run one trajectory of the memory-window engine.

    Parameters
    ----------
    params : AtomParams
    channels : sequence of ChannelResponse
    duration : float or None
        Simulated time. May be ``None`` when ``target_detections`` is given.
    seed : int
        Seed of the ``RandomState`` stream; one uniform is consumed per step.
    target_detections : int, optional
        Stop after this many detections (or at ``max_duration``).
    trace_stride : int
        Record a trace sample every ``trace_stride`` steps.
    burn_in : float, optional
        Start of the statistics window, default one memory time.
    uniforms : ndarray, optional
        Explicit uniform stream overriding ``seed`` (for pathwise checks).
    on_excess : {"raise", "rescale"}
        What to do when the per-step detection probabilities sum above one.
        ``"raise"`` stops with ``StepSizeError``; ``"rescale"`` divides them
        by their sum, so a detection is certain at that step, and counts the
        event in ``stats["n_excess"]``.

    Returns
    -------
    TrajectoryOutput
    """
    if on_excess not in ("raise", "rescale"):
        raise ConfigurationError(f"on_excess must be 'raise' or 'rescale', got {on_excess!r}")
    ws = _Workspace(params, channels, max_in_window, shorten_above, initial_state)
    seed = _check_seed(seed)
    dt = ws.dt
    n_total = _n_steps(duration, dt)
    if target_detections is not None:
        if target_detections < 1:
            raise ConfigurationError("target_detections must be >= 1")
        cap = _n_steps(max_duration, dt) if max_duration is not None else n_total
        if cap is None:
            raise ConfigurationError("target_detections needs duration or max_duration as a cap")
        n_total = cap
        det_goal = int(target_detections)
    else:
        if n_total is None:
            raise ConfigurationError("duration is required")
        det_goal = np.iinfo(np.int64).max
    if trace_stride < 1:
        raise ConfigurationError("trace_stride must be >= 1")
    if uniforms is not None:
        uniforms = np.asarray(uniforms, dtype=float)
        n_total = min(n_total, uniforms.size)
    rng = np.random.RandomState(seed)

    det_k, det_n, tk, tb, tbl, tp = [], [], [], [], [], []
    done = 0
    nd_total = 0
    nch = len(ws.channels)
    while done < n_total and nd_total < det_goal:
        n = min(_CHUNK, n_total - done)
        u = uniforms[done:done + n] if uniforms is not None else rng.random_sample(n)
        out_k = np.empty(n, np.int64)
        out_n = np.empty(n, np.int64)
        ntr = n // trace_stride + 2
        tr_k = np.empty(ntr, np.int64)
        tr_b = np.empty(ntr, np.int64)
        tr_bl = np.empty((ntr, 3))
        tr_p = np.empty((ntr, nch))
        st, steps, nd, nt = _core.run_chunk(
            ws.U, ws.sg, ws.W, dt, ws.buf, ws.zbuf, ws.amp, ws.probs, ws.dk, ws.dn, ws.dl,
            ws.meta, ws.lognorm, ws.shorten_above, ws.short_len, ws.max_in, u,
            det_goal - nd_total, trace_stride, out_k, out_n, tr_k, tr_b, tr_bl, tr_p,
            on_excess == "rescale")
        det_k.append(out_k[:nd])
        det_n.append(out_n[:nd])
        tk.append(tr_k[:nt])
        tb.append(tr_b[:nt])
        tbl.append(tr_bl[:nt])
        tp.append(tr_p[:nt])
        ws.raise_status(st)
        done += steps
        nd_total += nd

    cat = lambda xs, shape: np.concatenate(xs) if xs else np.empty(shape)
    return TrajectoryOutput(
        channel_labels=list(ws.labels), dt=dt, n_steps=done, seed=seed,
        detection_steps=cat(det_k, 0).astype(np.int64),
        detection_channels=cat(det_n, 0).astype(np.int64),
        trace_steps=cat(tk, 0).astype(np.int64), trace_state_steps=cat(tb, 0).astype(np.int64),
        trace_bloch=cat(tbl, (0, 3)).reshape(-1, 3), trace_probs=cat(tp, (0, nch)).reshape(-1, nch),
        burn_in=float(ws.M * dt if burn_in is None else burn_in), method="nm",
        stats=dict(n_renormalizations=int(ws.meta[3]), n_shortened=int(ws.meta[4]),
                   log_norm_offset=float(ws.lognorm[0]), max_in_window=ws.max_in,
                   shorten_above=shorten_above, n_excess=int(ws.meta[5]), on_excess=on_excess),
    )
