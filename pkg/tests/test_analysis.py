import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from nmtraj import analysis
from nmtraj.analysis import histogram, histogram_distance, inter_sideband_waits, waiting_times
from nmtraj.atom import AtomParams
from nmtraj.channels import markov_channel
from nmtraj.engine import DetectionRecord, run_trajectory


def recs(*pairs):
    return [DetectionRecord(float(t), c) for t, c in pairs]


def test_waiting_times_basic():
    assert waiting_times([]).size == 0
    assert waiting_times(recs((1, "a"), (3, "b"), (6, "a"))).tolist() == [2, 3]
    assert waiting_times(recs((1, "a"), (3, "b"), (6, "a")), "a").tolist() == [5]
    assert waiting_times(recs((1, "a"), (3, "b")), lambda c: c == "b").size == 0
    with pytest.raises(ValueError):
        waiting_times(recs((3, "a"), (1, "a")))


def test_inter_sideband_examples():
    assert inter_sideband_waits(recs((1, "L"), (2, "R")), "L", "R").tolist() == [1]
    assert inter_sideband_waits(recs((1, "L"), (2, "L"), (5, "R")), "L", "R").tolist() == [4]
    assert inter_sideband_waits(recs((1, "L"), (2, "C"), (4, "R"), (7, "L")), "L", "R").tolist() == [3, 3]


def test_histogram_basic():
    h = histogram([])
    assert h.total == 0 and h.counts.sum() == 0 and h.bin_edges.size == 101
    h = histogram(np.full(10, 1.23))
    assert np.count_nonzero(h.counts) == 1 and h.total == 10
    h = histogram([1.0, 9.0], t_max=5.0)
    assert h.total == 1 and h.overflow == 1
    with pytest.raises(ValueError):
        histogram([1.0], t_max=0)


def test_histogram_matches_exponential_law():
    w = np.random.default_rng(0).exponential(1.0, 100_000)
    h = histogram(w)
    cdf = 1 - np.exp(-h.bin_edges)
    expect = np.diff(cdf) / cdf[-1] * h.total
    chi2, p = stats.chisquare(h.counts, expect)
    assert p > 0.01


def test_distance_examples():
    a = histogram([0.1, 0.2, 0.3])
    assert histogram_distance(a, a) == 0
    assert histogram_distance(histogram([0.01]), histogram([4.9])) == 2
    with pytest.raises(ValueError):
        histogram_distance(a, histogram([0.1], n_bins=50))
    with pytest.raises(ValueError):
        histogram_distance(a, histogram([]))
    with pytest.raises(ValueError):
        analysis.noise_floor([a])


@settings(max_examples=50, deadline=None)
@given(w=st.lists(st.floats(0, 10), max_size=200), n=st.integers(1, 120), t_max=st.floats(0.1, 8))
def test_histogram_invariants(w, n, t_max):
    h = histogram(w, n, t_max)
    assert h.counts.sum() == h.total
    assert h.total + h.overflow == len(w)
    assert np.all(np.diff(h.bin_edges) > 0)
    if h.total:
        assert h.probabilities.sum() == pytest.approx(1)


@settings(max_examples=50, deadline=None)
@given(a=st.lists(st.floats(0, 5), min_size=1, max_size=50), b=st.lists(st.floats(0, 5), min_size=1, max_size=50))
def test_distance_is_a_bounded_metric(a, b):
    ha, hb = histogram(a), histogram(b)
    d = histogram_distance(ha, hb)
    assert 0 <= d <= 2 + 1e-12
    assert d == pytest.approx(histogram_distance(hb, ha))


@settings(max_examples=50, deadline=None)
@given(t=st.lists(st.floats(0, 100), max_size=60), c=st.data())
def test_inter_sideband_waits_are_positive_and_bounded(t, c):
    t = sorted(t)
    chans = c.draw(st.lists(st.sampled_from("LCR"), min_size=len(t), max_size=len(t)))
    r = recs(*zip(t, chans))
    w = inter_sideband_waits(r, "L", "R")
    assert np.all(w >= 0)
    n_side = sum(ch in "LR" for ch in chans)
    assert w.size <= n_side


def test_channel_counts():
    cc = analysis.channel_counts(recs((1, "T"), (2, "T"), (3, "R")))
    assert cc.ratio("T", "R")[0] == 2
    assert cc.fraction("T") == pytest.approx(2 / 3)
    assert cc.fraction_error("T") == pytest.approx(np.sqrt(2 / 9 / 3))
    empty = analysis.channel_counts([], ["T", "R"])
    assert empty.counts == {"T": 0, "R": 0} and not empty.defined
    assert np.isnan(empty.fraction("T")) and np.isnan(empty.ratio("T", "R")[0])


def test_exponential_gaps_in_markov_reexcitation():
    # undriven atom re-prepared in the excited state after every detection
    p, dt = AtomParams(1.0, 0.0), 0.001
    gaps = []
    for s in range(300):
        out = run_trajectory(p, [markov_channel(dt)], 20.0, s, initial_state=(0, 1), target_detections=1,
                             max_duration=20.0, burn_in=0.0)
        if out.n_detections:
            gaps.append(out.detection_times[0] + dt)
    assert stats.kstest(gaps, "expon").pvalue > 0.01


def test_output_skips_burn_in_and_histogram_csv(tmp_path):
    out = run_trajectory(AtomParams(1.0, 10.0), [markov_channel(0.01)], 30.0, 2, max_in_window=2)
    w = waiting_times(out)
    kept = out.detection_times[out.detection_times >= out.burn_in]
    assert np.allclose(w, np.diff(kept))
    h = histogram(w, channel_filter="M")
    text = h.to_csv(tmp_path / "h.csv")
    assert text.splitlines()[1] == "bin_lo,bin_hi,count,density"
    assert (tmp_path / "h.csv").read_text() == text


def test_post_detection_values_and_pooling():
    out = run_trajectory(AtomParams(1.0, 10.0), [markov_channel(0.01)], 30.0, 2, max_in_window=2,
                         trace_stride=1)
    after, overall = analysis.post_detection_values(out, ["M"], component=2)
    # right after a broadband jump the atom is in the ground state
    assert after.size > 0 and np.allclose(after, -1, atol=0.01)
    assert overall.size > after.size
    pooled = analysis.pooled_waits([out, out])
    assert pooled.size == 2 * waiting_times(out).size


def test_write_json_is_deterministic(tmp_path):
    text = analysis.write_json({"b": np.float64("nan"), "a": np.arange(2)}, tmp_path / "x.json")
    assert text.index('"a"') < text.index('"b"') and "null" in text
