"""Configuration, orchestration and artifact writing for reproducible runs.

A configuration is a nested mapping::

    {"mode": "nm-filter",
     "physics": {"gamma": 1, "omega_rabi": 10, "kappa": 5, "nu": 0,
                 "band_width": 10, "band_centers": [-10, 0, 10], "t_m": 1, "dt": 0.005},
     "run": {"duration": 200, "seed": 7, "n_trajectories": 1, ...},
     "analysis": {"t_max": 5, "n_bins": 100, "inputs": [...], "reference": [[...], ...]},
     "io": {"out_dir": "out"}}

Per-trajectory seeds are ``SeedSequence(seed).spawn(n)[i].generate_state(1)[0]``,
so results do not depend on how trajectories are scheduled over workers.
"""

from __future__ import annotations

import copy
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import analysis, oracles
from .atom import AtomParams
from .cascaded import run_trajectory_cascaded
from .channels import filter_responses, kernel_to_csv, prism_channels, top_hat
from .engine import TrajectoryOutput, read_detections_jsonl, run_trajectory
from .errors import ConfigurationError, NumericalFault

MODES = ("nm-filter", "nm-prism", "cascaded-filter", "oracle-bloch", "oracle-spectrum",
         "analyze", "compare")
OUT_DIR_ENV = "NMTRAJ_OUT_DIR"

DEFAULTS: dict[str, Any] = {
    "mode": None,
    "physics": {"gamma": 1.0, "omega_rabi": 10.0, "kappa": 5.0, "nu": 0.0,
                "band_width": 10.0, "band_centers": None, "band_labels": None,
                "t_m": 1.0, "dt": None, "prism_method": "firls"},
    "run": {"duration": None, "target_detections": None, "max_duration": None,
            "n_trajectories": 1, "seed": None, "trace_stride": 20, "n_workers": 1,
            "max_in_window": 8, "shorten_above": None, "on_excess": "raise", "n_max": 4},
    "analysis": {"t_max": 5.0, "n_bins": 100, "inputs": [], "reference": [],
                 "omega_span": 3.0, "omega_step": 0.1},
    "io": {"out_dir": "out"},
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigurationError(f"{path}{k}: unknown key")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigurationError(f"{path}{k}: expected a section")
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


def _line_of(text: str | None, key: str) -> str:
    if not text:
        return ""
    needle = f'"{key.split(".")[-1]}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return f" (line {i})"
    return ""


@dataclass
class ExperimentConfig:
    """Validated, fully resolved configuration."""

    data: dict

    @property
    def mode(self) -> str:
        return self.data["mode"]

    @property
    def physics(self) -> dict:
        return self.data["physics"]

    @property
    def run(self) -> dict:
        return self.data["run"]

    @property
    def analysis(self) -> dict:
        return self.data["analysis"]

    @property
    def out_dir(self) -> Path:
        return Path(self.data["io"]["out_dir"])

    @property
    def atom(self) -> AtomParams:
        p = self.physics
        return AtomParams(p["gamma"], p["omega_rabi"])

    @property
    def dt(self) -> float:
        return float(self.physics["dt"])

    def trajectory_seeds(self) -> list[int]:
        n = int(self.run["n_trajectories"])
        children = np.random.SeedSequence(int(self.run["seed"])).spawn(n)
        return [int(c.generate_state(1)[0]) for c in children]

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"


def load_config(source=None, overrides: dict | None = None, env=None) -> ExperimentConfig:
    """Merge defaults, a JSON file (path or mapping) and flag overrides, then validate."""
    text = None
    data: dict = {}
    if isinstance(source, dict):
        data = copy.deepcopy(source)
    elif source is not None:
        text = Path(source).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{source}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigurationError(f"{source}: top level must be an object")
    cfg = _merge(DEFAULTS, data)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        sec, _, key = dotted.rpartition(".")
        if sec:
            cfg[sec][key] = value
        else:
            cfg[key] = value
    env = os.environ if env is None else env
    if env.get(OUT_DIR_ENV):
        cfg["io"]["out_dir"] = env[OUT_DIR_ENV]
    try:
        _validate(cfg)
    except ConfigurationError as exc:
        key = str(exc).split(":", 1)[0]
        raise ConfigurationError(f"{exc}{_line_of(text, key)}") from None
    return ExperimentConfig(cfg)


def _validate(cfg: dict):
    mode = cfg["mode"]
    if mode not in MODES:
        raise ConfigurationError(f"mode: must be one of {', '.join(MODES)}, got {mode!r}")
    p, r, a = cfg["physics"], cfg["run"], cfg["analysis"]
    for key in ("gamma", "t_m"):
        if not _num(p[key]) or p[key] <= 0:
            raise ConfigurationError(f"physics.{key}: must be a positive number")
    for key in ("omega_rabi", "nu"):
        if not _num(p[key]):
            raise ConfigurationError(f"physics.{key}: must be a number")
    if mode in ("nm-filter", "cascaded-filter") and (not _num(p["kappa"]) or p["kappa"] <= 0):
        raise ConfigurationError("physics.kappa: must be a positive number")
    if mode == "nm-prism" and (not _num(p["band_width"]) or p["band_width"] <= 0):
        raise ConfigurationError("physics.band_width: must be a positive number")
    if p["dt"] is None:
        p["dt"] = p["t_m"] / 200.0
    if not _num(p["dt"]) or p["dt"] <= 0:
        raise ConfigurationError("physics.dt: must be a positive number")
    if p["band_centers"] is None:
        p["band_centers"] = [-p["omega_rabi"], 0.0, p["omega_rabi"]]
    if p["band_labels"] is None:
        n = len(p["band_centers"])
        p["band_labels"] = ["L", "C", "R"] if n == 3 else [f"B{i}" for i in range(n)]
    if len(p["band_labels"]) != len(p["band_centers"]):
        raise ConfigurationError("physics.band_labels: one label per band centre")
    if mode in ("nm-filter", "nm-prism", "cascaded-filter", "oracle-bloch"):
        if r["seed"] is None and mode != "oracle-bloch":
            raise ConfigurationError("run.seed: a seed is required")
        if r["duration"] is None and r["target_detections"] is None:
            raise ConfigurationError("run.duration: give duration or target_detections")
        for key in ("duration", "max_duration"):
            if r[key] is not None and (not _num(r[key]) or r[key] < 0):
                raise ConfigurationError(f"run.{key}: must be >= 0")
        if r["target_detections"] is not None:
            if not isinstance(r["target_detections"], int) or r["target_detections"] < 1:
                raise ConfigurationError("run.target_detections: must be a positive integer")
            if r["duration"] is None and r["max_duration"] is None:
                raise ConfigurationError("run.max_duration: target_detections needs a duration cap")
    if r["seed"] is not None and (not isinstance(r["seed"], int) or r["seed"] < 0):
        raise ConfigurationError("run.seed: must be a non-negative integer")
    for key in ("n_trajectories", "trace_stride", "n_workers", "max_in_window", "n_max"):
        if not isinstance(r[key], int) or r[key] < 1:
            raise ConfigurationError(f"run.{key}: must be a positive integer")
    if not _num(a["t_max"]) or a["t_max"] <= 0 or not isinstance(a["n_bins"], int) or a["n_bins"] < 1:
        raise ConfigurationError("analysis.t_max: need t_max > 0 and integer n_bins >= 1")
    if mode in ("analyze", "compare") and not a["inputs"]:
        raise ConfigurationError("analysis.inputs: list detection files to analyse")
    if mode == "compare" and len(a["reference"]) < 2:
        raise ConfigurationError("analysis.reference: need at least two reference groups")


def _num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and np.isfinite(x)


# -- trajectory workers --------------------------------------------------------

def build_channels(cfg: ExperimentConfig):
    p = cfg.physics
    if cfg.mode in ("nm-filter", "cascaded-filter"):
        return list(filter_responses(p["kappa"], p["nu"], cfg.dt, p["t_m"]))
    if cfg.mode == "nm-prism":
        return prism_channels(p["band_centers"], p["band_width"], cfg.dt, p["t_m"],
                              labels=p["band_labels"], method=p["prism_method"])
    raise ConfigurationError(f"mode {cfg.mode} has no detection channels")


def _run_one(args) -> TrajectoryOutput:
    data, seed = args
    cfg = ExperimentConfig(data)
    r, p = cfg.run, cfg.physics
    common = dict(target_detections=r["target_detections"], max_duration=r["max_duration"],
                  trace_stride=r["trace_stride"])
    if cfg.mode == "cascaded-filter":
        out = run_trajectory_cascaded(cfg.atom, p["kappa"], p["nu"], cfg.dt, r["duration"], seed,
                                      n_max=r["n_max"], burn_in=p["t_m"], **common)
    else:
        out = run_trajectory(cfg.atom, build_channels(cfg), r["duration"], seed,
                             max_in_window=r["max_in_window"], shorten_above=r["shorten_above"],
                             on_excess=r["on_excess"], **common)
    # io settings stay out of the artifact header so outputs do not depend on where they are written
    out.config = {k: v for k, v in cfg.data.items() if k != "io"}
    out.config["run"] = {k: v for k, v in cfg.run.items() if k != "n_workers"}
    return out


def run_trajectories(cfg: ExperimentConfig) -> list[TrajectoryOutput]:
    """All trajectories of a config, returned in seed order."""
    jobs = [(cfg.data, s) for s in cfg.trajectory_seeds()]
    nw = min(int(cfg.run["n_workers"]), len(jobs))
    if nw <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=nw) as pool:
        return list(pool.map(_run_one, jobs))


class BatchFailure(NumericalFault):
    """A batch stopped early; ``partial`` holds the completed trajectories."""

    def __init__(self, message, partial, step=None):
        super().__init__(message, step)
        self.partial = partial


def _run_collect(cfg: ExperimentConfig) -> list[TrajectoryOutput]:
    jobs = [(cfg.data, s) for s in cfg.trajectory_seeds()]
    nw = min(int(cfg.run["n_workers"]), len(jobs))
    done: list = [None] * len(jobs)
    if nw <= 1:
        for i, j in enumerate(jobs):
            try:
                done[i] = _run_one(j)
            except NumericalFault as exc:
                raise BatchFailure(f"trajectory {i}: {exc}", done, exc.step) from exc
        return done
    with ProcessPoolExecutor(max_workers=nw) as pool:
        futs = [pool.submit(_run_one, j) for j in jobs]
        err = None
        for i, f in enumerate(futs):
            try:
                done[i] = f.result()
            except NumericalFault as exc:
                err = err or (i, exc)
        if err:
            i, exc = err
            raise BatchFailure(f"trajectory {i}: {exc}", done, exc.step) from exc
    return done


# -- summaries -----------------------------------------------------------------

def _hist_block(outputs, subset, label, a, out_dir: Path | None, name: str):
    waits = analysis.pooled_waits(outputs, subset)
    h = analysis.histogram(waits, a["n_bins"], a["t_max"], label)
    if out_dir is not None:
        h.to_csv(out_dir / f"hist_{name}.csv")
    return h, waits


def summarize(cfg: ExperimentConfig, outputs: list[TrajectoryOutput], out_dir: Path | None = None) -> dict:
    """Counts, rates, waiting-time statistics and oracle comparisons."""
    a = cfg.analysis
    labels = outputs[0].channel_labels
    recs = [r for o in outputs for r in o.records(skip_burn_in=True)]
    span = sum(o.duration - o.burn_in for o in outputs)
    cc = analysis.channel_counts(recs, labels)
    summ: dict[str, Any] = dict(
        mode=cfg.mode, n_trajectories=len(outputs), seeds=[o.seed for o in outputs],
        observed_time=span, detections=cc.as_dict(),
        rate=cc.total / span if span > 0 else float("nan"),
        steady_state_rate=cfg.atom.gamma * oracles.saturation_excited_population(cfg.atom),
        stats=[o.stats for o in outputs],
    )
    hists = {}
    h, w = _hist_block(outputs, None, "all", a, out_dir, "all")
    hists["all"] = h
    summ["mean_wait"] = {"all": float(np.mean(w)) if w.size else None}
    for l in labels:
        h, w = _hist_block(outputs, {l}, l, a, out_dir, l)
        hists[l] = h
        summ["mean_wait"][l] = float(np.mean(w)) if w.size else None
    summ["fraction_waits_below_t_m"] = float(np.mean(analysis.pooled_waits(outputs) < cfg.physics["t_m"])) \
        if cc.total > 1 else None
    if len(labels) == 2:
        summ["ratio"] = dict(zip(("value", "error"), cc.ratio(labels[0], labels[1])))
    summ["max_abs_sx"] = float(max(np.max(np.abs(o.trace_bloch[:, 0]), initial=0.0) for o in outputs))
    if cfg.mode == "nm-prism":
        summ["prism"] = _prism_summary(cfg, outputs, hists, out_dir)
    if len(outputs) > 1:
        summ["ensemble"] = ensemble_report(cfg, outputs, out_dir)
    return summ


def _prism_summary(cfg, outputs, hists, out_dir):
    p, a = cfg.physics, cfg.analysis
    labels = p["band_labels"]
    chans = build_channels(cfg)
    grid = np.arange(-a["omega_span"] * abs(p["omega_rabi"]) - p["band_width"],
                     a["omega_span"] * abs(p["omega_rabi"]) + p["band_width"] + 1e-9, 0.01)
    pred = oracles.band_rates(cfg.atom, [c.frequency_response for c in chans], grid)
    out: dict[str, Any] = dict(predicted_rates=dict(zip(labels, pred.tolist())),
                               predicted_fractions=dict(zip(labels, (pred / pred.sum()).tolist())))
    if len(labels) == 3:
        left, _, right = labels
        waits = np.concatenate([analysis.inter_sideband_waits(o.records(skip_burn_in=True), left, right)
                                for o in outputs])
        hx = analysis.histogram(waits, a["n_bins"], a["t_max"], f"{left}<->{right}")
        if out_dir is not None:
            hx.to_csv(out_dir / "hist_inter_sideband.csv")
        central = labels[1]
        if hx.total and all(hists[l].total for l in labels):
            out["l1_inter_vs_central"] = analysis.histogram_distance(hx, hists[central])
            out["l1_side_vs_central"] = {l: analysis.histogram_distance(hists[l], hists[central])
                                         for l in (left, right)}
        after = np.concatenate([analysis.post_detection_values(o, (left, right))[0] for o in outputs])
        overall = np.concatenate([analysis.post_detection_values(o, (left, right))[1] for o in outputs])
        out["mean_abs_sx_after_side_detection"] = float(np.mean(np.abs(after))) if after.size else None
        out["mean_abs_sx_overall"] = float(np.mean(np.abs(overall))) if overall.size else None
    return out


def ensemble_report(cfg: ExperimentConfig, outputs: list[TrajectoryOutput], out_dir: Path | None = None,
                    n_times: int = 50) -> dict:
    """Compare the trajectory-averaged Bloch vector with the master equation."""
    n = min(o.trace_steps.size for o in outputs)
    ref = outputs[0].trace_state_steps[:n]
    for o in outputs[1:]:
        if not np.array_equal(o.trace_state_steps[:n], ref):
            raise ConfigurationError("trajectories do not share a trace grid")
    mean, sem = oracles.ensemble_average([o.trace_bloch[:n] for o in outputs])
    t = ref * outputs[0].dt
    live = np.flatnonzero(ref > 0)
    if live.size == 0:
        raise ConfigurationError("trajectories too short for an ensemble comparison")
    pick = live[np.unique(np.linspace(0, live.size - 1, min(n_times, live.size)).round().astype(int))]
    exact = oracles.bloch_trajectory(oracles.BlochState.ground(), cfg.atom, t[pick])
    dev = np.abs(mean[pick] - exact)
    sig = np.where(sem[pick] > 0, sem[pick], np.inf)
    z = np.where(dev == 0, 0.0, dev / sig)
    if out_dir is not None:
        rows = ["t,sx,sy,sz,sem_sx,sem_sy,sem_sz,oracle_sx,oracle_sy,oracle_sz"]
        for i, j in enumerate(pick):
            rows.append(",".join(repr(float(v)) for v in (t[j], *mean[j], *sem[j], *exact[i])))
        (out_dir / "ensemble.csv").write_text("\n".join(rows) + "\n")
    return dict(n_times=int(pick.size), max_z=float(z.max()), max_abs_dev=float(dev.max()),
                within_3_sigma=bool(np.all(z < 3)))


# -- entry points --------------------------------------------------------------

def _write_outputs(cfg: ExperimentConfig, outputs, out_dir: Path):
    if len(outputs) == 1:
        outputs[0].to_jsonl(out_dir / "detections.jsonl")
        outputs[0].traces_to_csv(out_dir / "traces.csv")
    else:
        tdir = out_dir / "trajectories"
        tdir.mkdir(exist_ok=True)
        for i, o in enumerate(outputs):
            o.to_jsonl(tdir / f"detections_{i:04d}.jsonl")
            o.traces_to_csv(tdir / f"traces_{i:04d}.csv")


def execute(cfg: ExperimentConfig) -> dict:
    """Run the configured mode and write its artifacts; returns the summary."""
    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(cfg.to_json())
    mode = cfg.mode
    if mode in ("nm-filter", "nm-prism", "cascaded-filter"):
        if mode != "cascaded-filter":
            kdir = out_dir / "kernels"
            kdir.mkdir(exist_ok=True)
            for c in build_channels(cfg):
                kernel_to_csv(c, kdir / f"kernel_{c.label}.csv")
        try:
            outputs = _run_collect(cfg)
        except BatchFailure as exc:
            done = [o for o in exc.partial if o is not None]
            analysis.write_json(dict(error=str(exc), completed=len(done),
                                     seeds=[o.seed for o in done]), out_dir / "partial-results.json")
            if done:
                _write_outputs(cfg, done, out_dir)
            raise
        _write_outputs(cfg, outputs, out_dir)
        summ = summarize(cfg, outputs, out_dir)
    elif mode == "oracle-bloch":
        summ = _oracle_bloch(cfg, out_dir)
    elif mode == "oracle-spectrum":
        summ = _oracle_spectrum(cfg, out_dir)
    elif mode == "analyze":
        summ = _analyze(cfg, out_dir)
    else:
        summ = compare(cfg, out_dir)
    analysis.write_json(summ, out_dir / "summary.json")
    return summ


def _oracle_bloch(cfg, out_dir):
    r = cfg.run
    duration = r["duration"] if r["duration"] is not None else r["max_duration"]
    t = np.arange(0.0, duration + 0.5 * cfg.dt * r["trace_stride"], cfg.dt * r["trace_stride"])
    b = oracles.bloch_trajectory(oracles.BlochState.ground(), cfg.atom, t)
    rows = ["t,sx,sy,sz"] + [",".join(repr(float(v)) for v in (ti, *bi)) for ti, bi in zip(t, b)]
    (out_dir / "bloch.csv").write_text("\n".join(rows) + "\n")
    ss = oracles.steady_state(cfg.atom)
    return dict(mode=cfg.mode, final=b[-1].tolist(), steady_state=ss.as_array().tolist(),
                steady_excited_population=0.5 * (1 + ss.sz),
                saturation_formula=oracles.saturation_excited_population(cfg.atom))


def _oracle_spectrum(cfg, out_dir):
    p, a = cfg.physics, cfg.analysis
    lim = a["omega_span"] * max(abs(p["omega_rabi"]), p["gamma"])
    grid = np.arange(-lim, lim + 0.5 * a["omega_step"], a["omega_step"])
    spec = oracles.mollow_spectrum(cfg.atom, grid)
    rows = ["omega,S"] + [f"{w!r},{s!r}" for w, s in zip(grid.tolist(), spec.incoherent.tolist())]
    (out_dir / "spectrum.csv").write_text("\n".join(rows) + "\n")
    fine = np.arange(-lim - p["band_width"], lim + p["band_width"] + 1e-9, 0.01)
    labels = p["band_labels"]
    ideal = oracles.band_rates(cfg.atom, [lambda w, c=c: top_hat(w, c, p["band_width"])
                                          for c in p["band_centers"]], fine)
    bands = dict(labels=labels, centers=p["band_centers"], width=p["band_width"],
                 ideal_rates=ideal.tolist(), ideal_fractions=(ideal / ideal.sum()).tolist())
    try:
        chans = prism_channels(p["band_centers"], p["band_width"], cfg.dt, p["t_m"], labels=labels,
                               method=p["prism_method"])
        designed = oracles.band_rates(cfg.atom, [c.frequency_response for c in chans], fine)
        bands.update(designed_rates=designed.tolist(), designed_fractions=(designed / designed.sum()).tolist())
    except ConfigurationError as exc:
        bands["designed_error"] = str(exc)
    analysis.write_json(bands, out_dir / "band_weights.json")
    return dict(mode=cfg.mode, peaks=oracles.spectrum_peaks(spec).tolist(), coherent_weight=spec.coherent,
                excited_population=spec.excited_population, grid_step=a["omega_step"], bands=bands)


def _load_records(paths):
    groups = []
    for path in paths:
        header, recs = read_detections_jsonl(path)
        burn = float(header.get("burn_in", 0.0))
        groups.append(([r for r in recs if r.time >= burn], header))
    return groups


def _analyze(cfg, out_dir):
    a = cfg.analysis
    groups = _load_records(a["inputs"])
    labels = sorted({r.channel for recs, _ in groups for r in recs})
    all_recs = [r for recs, _ in groups for r in recs]
    hs = {}
    for name, subset in [("all", None)] + [(l, {l}) for l in labels]:
        waits = np.concatenate([analysis.waiting_times(recs, subset) for recs, _ in groups])
        hs[name] = analysis.histogram(waits, a["n_bins"], a["t_max"], name)
        hs[name].to_csv(out_dir / f"hist_{name}.csv")
    return dict(mode=cfg.mode, inputs=[str(x) for x in a["inputs"]],
                detections=analysis.channel_counts(all_recs, labels).as_dict(),
                histogram_totals={k: h.total for k, h in hs.items()})


def _group_hists(paths, a, subsets):
    groups = _load_records(paths)
    out = {}
    for name, subset in subsets:
        waits = np.concatenate([analysis.waiting_times(recs, subset) for recs, _ in groups])
        out[name] = analysis.histogram(waits, a["n_bins"], a["t_max"], name)
    counts = analysis.channel_counts([r for recs, _ in groups for r in recs])
    return out, counts


def compare(cfg: ExperimentConfig, out_dir: Path | None = None) -> dict:
    """Histogram distances of a candidate run against independent reference runs.

    ``analysis.inputs`` lists the candidate detection files; every entry of
    ``analysis.reference`` is a list of files forming one independent
    reference realisation. The noise floor is the largest pairwise distance
    among reference realisations; the candidate passes a subset when its
    mean distance to the references is below that floor.
    """
    a = cfg.analysis
    refs = [g if isinstance(g, list) else [g] for g in a["reference"]]
    probe_groups = _load_records(a["inputs"])
    labels = sorted({r.channel for recs, _ in probe_groups for r in recs})
    subsets = [("all", None)] + [(l, {l}) for l in labels]
    cand, cand_counts = _group_hists(a["inputs"], a, subsets)
    ref_h = [_group_hists(g, a, subsets) for g in refs]
    report: dict[str, Any] = dict(mode="compare", subsets={})
    for name, _ in subsets:
        rh = [h[name] for h, _ in ref_h]
        floor = analysis.noise_floor(rh)
        d = [analysis.histogram_distance(cand[name], h) for h in rh]
        report["subsets"][name] = dict(l1_to_references=d, mean_l1=float(np.mean(d)), noise_floor=floor,
                                       candidate_total=cand[name].total,
                                       within_noise_floor=bool(np.mean(d) <= floor))
    if len(labels) == 2:
        a_, b_ = labels
        ref_counts = analysis.ChannelCounts({l: sum(c.counts.get(l, 0) for _, c in ref_h) for l in labels},
                                            sum(c.total for _, c in ref_h))
        fc, fr = cand_counts.fraction(a_), ref_counts.fraction(a_)
        sig = np.hypot(cand_counts.fraction_error(a_), ref_counts.fraction_error(a_))
        report["fraction"] = dict(channel=a_, candidate=fc, reference=fr, sigma=float(sig),
                                  z=float(abs(fc - fr) / sig) if sig > 0 else None,
                                  within_2_sigma=bool(abs(fc - fr) <= 2 * sig))
        report["ratio"] = dict(candidate=cand_counts.ratio(a_, b_), reference=ref_counts.ratio(a_, b_))
    if out_dir is not None:
        analysis.write_json(report, out_dir / "comparison.json")
    return report
