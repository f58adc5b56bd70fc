import json

import pytest

from nmtraj.cli import main


def _run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out-dir", str(out)])
    return code, out


def test_run_filter_writes_artifacts(tmp_path):
    code, out = _run(tmp_path, "a", "run", "--mode", "nm-filter", "--duration", "20", "--seed", "3")
    assert code == 0
    for f in ("detections.jsonl", "traces.csv", "summary.json", "config.json", "hist_all.csv",
              "kernels/kernel_T.csv"):
        assert (out / f).exists(), f
    summ = json.loads((out / "summary.json").read_text())
    assert summ["max_abs_sx"] < 1e-6
    assert set(summ["detections"]["counts"]) == {"T", "R"}


def test_run_is_byte_deterministic(tmp_path):
    args = ["run", "--mode", "nm-filter", "--duration", "15", "--seed", "11"]
    _, a = _run(tmp_path, "a", *args)
    _, b = _run(tmp_path, "b", *args)
    assert (a / "detections.jsonl").read_bytes() == (b / "detections.jsonl").read_bytes()


def test_missing_seed_and_bad_config(tmp_path, capsys):
    code, _ = _run(tmp_path, "a", "run", "--mode", "nm-filter", "--duration", "5")
    assert code == 2
    cfg = tmp_path / "c.json"
    cfg.write_text('{"mode": "nm-filter",\n "run": {"seed": 1, "duration": 1, "bogus": 2}}')
    code, _ = _run(tmp_path, "b", "run", "--config", str(cfg))
    assert code == 2
    assert "bogus" in capsys.readouterr().err
    code, _ = _run(tmp_path, "c", "run", "--mode", "analyze", "--input", str(tmp_path / "nope.jsonl"))
    assert code == 2
    with pytest.raises(SystemExit) as e:
        main(["run", "--mode", "teleport"])
    assert e.value.code == 2


def test_numerical_fault_exit_code(tmp_path, capsys):
    code, out = _run(tmp_path, "a", "run", "--mode", "nm-filter", "--duration", "50", "--seed", "1",
                     "--max-in-window", "1")
    assert code == 3
    assert "step" in capsys.readouterr().err


def test_batch_independent_of_worker_count(tmp_path):
    args = ["batch", "--mode", "nm-filter", "--duration", "6", "--seed", "5", "--n-trajectories", "3"]
    _, a = _run(tmp_path, "a", *args, "--n-workers", "1")
    _, b = _run(tmp_path, "b", *args, "--n-workers", "2")
    assert (a / "summary.json").read_text() == (b / "summary.json").read_text()
    assert (a / "ensemble.csv").exists()
    for i in range(3):
        f = f"trajectories/detections_{i:04d}.jsonl"
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_cascaded_analyze_and_compare(tmp_path):
    _, nm = _run(tmp_path, "nm", "run", "--mode", "nm-filter", "--duration", "200", "--seed", "1")
    _, c1 = _run(tmp_path, "c1", "run", "--mode", "cascaded-filter", "--duration", "200", "--seed", "2")
    _, c2 = _run(tmp_path, "c2", "run", "--mode", "cascaded-filter", "--duration", "200", "--seed", "3")
    code, an = _run(tmp_path, "an", "run", "--mode", "analyze", "--input", str(nm / "detections.jsonl"))
    assert code == 0 and (an / "hist_all.csv").exists()
    code, cmp_ = _run(tmp_path, "cmp", "run", "--mode", "compare", "--input", str(nm / "detections.jsonl"),
                      "--reference", str(c1 / "detections.jsonl"), "--reference", str(c2 / "detections.jsonl"))
    assert code == 0
    report = json.loads((cmp_ / "comparison.json").read_text())
    assert "noise_floor" in json.dumps(report)


def test_oracle_modes(tmp_path):
    code, out = _run(tmp_path, "b", "run", "--mode", "oracle-bloch", "--duration", "2")
    assert code == 0 and (out / "bloch.csv").read_text().count("\n") > 2
    code, out = _run(tmp_path, "s", "run", "--mode", "oracle-spectrum")
    assert code == 0
    assert (out / "spectrum.csv").read_text().splitlines()[0].startswith("omega")
    bands = json.loads((out / "band_weights.json").read_text())
    assert bands


@pytest.mark.slow
def test_prism_run_summary(tmp_path):
    code, out = _run(tmp_path, "p", "run", "--mode", "nm-prism", "--duration", "100", "--seed", "4",
                     "--on-excess", "rescale")
    assert code == 0
    summ = json.loads((out / "summary.json").read_text())
    assert set(summ["detections"]["counts"]) == {"L", "C", "R"}
    assert "prism" in summ
