"""Statistics of detection records: waiting times, histograms, channel ratios."""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .engine import DetectionRecord, TrajectoryOutput

N_BINS = 100
DEFAULT_T_MAX = 5.0


def _as_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(records, TrajectoryOutput):
        recs = records.records(skip_burn_in=True)
    else:
        recs = list(records)
    t = np.array([r.time for r in recs], dtype=float)
    c = np.array([r.channel for r in recs], dtype=object)
    return t, c


def _predicate(subset) -> Callable[[str], bool]:
    if subset is None:
        return lambda _c: True
    if callable(subset):
        return subset
    if isinstance(subset, str):
        subset = {subset}
    allowed = set(subset)
    return lambda c: c in allowed


def waiting_times(records, subset=None) -> np.ndarray:
    """Gaps between consecutive detections that pass ``subset``.

    Parameters
    ----------
    records : sequence of DetectionRecord or TrajectoryOutput
        Time ordered. A ``TrajectoryOutput`` contributes only detections
        after its burn-in.
    subset : None, str, iterable of str or callable
        Channels to keep; detections in other channels are ignored.
    """
    t, c = _as_arrays(records)
    keep = np.array([_predicate(subset)(ci) for ci in c], dtype=bool)
    tk = t[keep] if t.size else t
    if np.any(np.diff(tk) < 0):
        raise ValueError("records are not time ordered")
    return np.diff(tk)


def inter_sideband_waits(records, left: str, right: str) -> np.ndarray:
    """Delays from a side-peak detection to the next detection in the other side peak.

    Each side holds at most one pending start. A detection on one side
    closes the other side's pending pair (if any) and opens its own pending
    pair unless one is already open; a repeated same-side detection does not
    move an open start. Other channels are ignored.
    """
    t, c = _as_arrays(records)
    pending = {left: None, right: None}
    other = {left: right, right: left}
    out = []
    for ti, ci in zip(t, c):
        if ci not in pending:
            continue
        o = other[ci]
        if pending[o] is not None:
            out.append(ti - pending[o])
            pending[o] = None
        if pending[ci] is None:
            pending[ci] = ti
    return np.asarray(out, dtype=float)


@dataclass
class WaitingHistogram:
    """Linear-bin waiting-time histogram with a separate overflow count."""

    bin_edges: np.ndarray
    counts: np.ndarray
    total: int
    overflow: int = 0
    channel_filter: str = "all"

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def probabilities(self) -> np.ndarray:
        """Bin masses normalised over the in-range total."""
        if self.total == 0:
            return np.zeros(self.counts.size)
        return self.counts / self.total

    @property
    def density(self) -> np.ndarray:
        return self.probabilities / self.widths

    @property
    def modal_bin(self) -> int:
        return int(np.argmax(self.counts))

    def to_csv(self, path=None) -> str:
        """Rows ``bin_lo, bin_hi, count, density``."""
        buf = io.StringIO()
        buf.write(f"# channel_filter={self.channel_filter} total={self.total} overflow={self.overflow}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count", "density"])
        for lo, hi, n, d in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts, self.density):
            w.writerow([repr(float(lo)), repr(float(hi)), int(n), repr(float(d))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def histogram(waits, n_bins: int = N_BINS, t_max: float = DEFAULT_T_MAX,
              channel_filter: str = "all") -> WaitingHistogram:
    """Histogram of waits on ``[0, t_max]`` with ``n_bins`` linear bins.

    Waits beyond ``t_max`` go to the overflow count and are excluded from
    ``total``.
    """
    if t_max <= 0 or n_bins < 1:
        raise ValueError("need t_max > 0 and n_bins >= 1")
    waits = np.asarray(waits, dtype=float)
    edges = np.linspace(0.0, t_max, n_bins + 1)
    inside = waits[waits <= t_max]
    counts, _ = np.histogram(inside, bins=edges)
    return WaitingHistogram(edges, counts.astype(np.int64), int(counts.sum()),
                            int(waits.size - inside.size), channel_filter)


def histogram_distance(a: WaitingHistogram, b: WaitingHistogram) -> float:
    """L1 distance between normalised histograms, in ``[0, 2]``."""
    if a.bin_edges.shape != b.bin_edges.shape or not np.allclose(a.bin_edges, b.bin_edges):
        raise ValueError("histograms have different bin edges")
    if a.total == 0 or b.total == 0:
        raise ValueError("cannot compare an empty histogram")
    return float(np.abs(a.probabilities - b.probabilities).sum())


def noise_floor(histograms: Sequence[WaitingHistogram]) -> float:
    """Largest pairwise L1 distance among independent realisations."""
    if len(histograms) < 2:
        raise ValueError("need at least two histograms")
    return max(histogram_distance(a, b) for a, b in itertools.combinations(histograms, 2))


@dataclass
class ChannelCounts:
    """Exact counts per channel with binomial uncertainties."""

    counts: dict
    total: int
    defined: bool = field(init=False)

    def __post_init__(self):
        self.defined = self.total > 0

    def fraction(self, label: str) -> float:
        return self.counts.get(label, 0) / self.total if self.defined else float("nan")

    def fraction_error(self, label: str) -> float:
        if not self.defined:
            return float("nan")
        f = self.fraction(label)
        return float(np.sqrt(f * (1 - f) / self.total))

    def ratio(self, a: str, b: str) -> tuple[float, float]:
        """``n_a / n_b`` and its propagated Poisson error."""
        na, nb = self.counts.get(a, 0), self.counts.get(b, 0)
        if na == 0 or nb == 0:
            return float("nan"), float("nan")
        r = na / nb
        return r, float(r * np.sqrt(1 / na + 1 / nb))

    def as_dict(self) -> dict:
        return dict(total=self.total, counts=dict(self.counts),
                    fractions={k: self.fraction(k) for k in self.counts},
                    fraction_errors={k: self.fraction_error(k) for k in self.counts})


def channel_counts(records, labels: Iterable[str] | None = None) -> ChannelCounts:
    """Count detections per channel (``labels`` fixes the reported set)."""
    _, c = _as_arrays(records)
    counts = {l: 0 for l in labels} if labels is not None else {}
    for ci in c:
        counts[ci] = counts.get(ci, 0) + 1
    return ChannelCounts(counts, int(c.size))


def post_detection_values(output: TrajectoryOutput, labels: Iterable[str], component: int = 0):
    """Conditioned Bloch component just after selected detections reach the state.

    For every detection in ``labels`` (after burn-in) take the first trace
    sample whose state time is strictly after the detection time, i.e. the
    first conditioned state that includes the emission behind the
    detection.

    Returns
    -------
    after : ndarray
        Component values at those samples.
    overall : ndarray
        Component values at every trace sample after burn-in.
    """
    ts = output.trace_state_steps * output.dt
    vals = output.trace_bloch[:, component]
    keep = ts >= output.burn_in
    wanted = set(labels)
    idx = [i for i, l in enumerate(output.channel_labels) if l in wanted]
    mask = np.isin(output.detection_channels, idx) & (output.detection_times >= output.burn_in)
    pos = np.searchsorted(ts, output.detection_times[mask] + 0.5 * output.dt, side="left")
    pos = pos[pos < ts.size]
    return vals[pos], vals[keep]


def pooled_waits(outputs: Sequence[TrajectoryOutput], subset=None) -> np.ndarray:
    """Waiting times of several trajectories, never pairing across trajectories."""
    parts = [waiting_times(o, subset) for o in outputs]
    return np.concatenate(parts) if parts else np.empty(0)


def write_json(obj, path=None) -> str:
    """Deterministic JSON (sorted keys, NaN written as null)."""
    def clean(x):
        if isinstance(x, dict):
            return {str(k): clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if isinstance(x, np.ndarray):
            return clean(x.tolist())
        if isinstance(x, (np.floating, float)):
            return None if not np.isfinite(x) else float(x)
        if isinstance(x, np.integer):
            return int(x)
        return x
    text = json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
