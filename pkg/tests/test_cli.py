import csv
import io
import subprocess
import sys

import pytest

from vocovar.cli import main
from vocovar.dataset import load_dataset, save_dataset
from vocovar.simulate import ScenarioSpec


@pytest.fixture
def scene(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(ScenarioSpec(kind="line", num_keyframes=6, samples_per_keyframe=10, seed=4).to_json())
    ds = tmp_path / "scene.txt"
    assert main(["simulate", str(spec), "-o", str(ds)]) == 0
    return ds


def _rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_validate(scene, capsys):
    assert main(["validate", str(scene)]) == 0
    assert capsys.readouterr().out.startswith("ok: 6 keyframes")


def test_validate_corrupt_file_names_the_line(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("vocovar-dataset v1\nK 1 1 0.5 0.5 1 1\nF 0 1 0 0 0 x 0 0\n")
    assert main(["validate", str(bad)]) == 3
    assert "line 3" in capsys.readouterr().err


def test_unknown_version_is_rejected(tmp_path):
    bad = tmp_path / "v2.txt"
    bad.write_text("vocovar-dataset v2\n")
    assert main(["validate", str(bad)]) == 3


def test_exit_codes(tmp_path, scene):
    assert main(["validate", str(tmp_path / "missing.txt")]) == 5
    assert main(["frobnicate"]) == 2
    assert main([]) == 2
    assert main(["solve", str(scene), "--gauge-frames"]) == 4
    assert main(["--help"]) == 0


def test_solve_writes_poses_and_dataset(tmp_path, scene):
    out, dso = tmp_path / "poses.csv", tmp_path / "solved.txt"
    assert main(["solve", str(scene), "-o", str(out), "--dataset-out", str(dso)]) == 0
    rows = _rows(out)
    assert [r["keyframe"] for r in rows] == [str(k) for k in range(6)]
    assert load_dataset(dso).num_keyframes == 6


def test_marginals_injects_default_gauge(tmp_path, scene):
    out = tmp_path / "m.csv"
    assert main(["marginals", str(scene), "-o", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 6 and len(rows[0]) == 23
    # the gauge-anchored first pose is far more certain than the last
    assert float(rows[0]["logdet"]) < float(rows[-1]["logdet"])
    out2 = tmp_path / "m2.csv"
    assert main(["marginals", str(scene), "-o", str(out2), "--at-input", "--gauge-rot-sigma", "1e-3"]) == 0


def test_covis(tmp_path, scene):
    out = tmp_path / "c.csv"
    assert main(["covis", str(scene), "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "frame,0,1,2,3,4,5"
    assert lines[1].split(",")[1] == "0"


def test_trend_writes_csv_and_plot(tmp_path, scene):
    out = tmp_path / "t.csv"
    assert main(["trend", str(scene), "-o", str(out), "--workers", "2"]) == 0
    assert len(_rows(out)) == 5
    assert (tmp_path / "t.svg").read_text().startswith("<svg")


def test_pipeline_is_byte_identical(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(ScenarioSpec(kind="arc", num_keyframes=6, samples_per_keyframe=8).to_json())
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        assert main(["simulate", str(spec), "-o", str(d / "ds.txt"), "--seed", "21"]) == 0
        assert main(["solve", str(d / "ds.txt"), "-o", str(d / "poses.csv")]) == 0
        assert main(["trend", str(d / "ds.txt"), "-o", str(d / "trend.csv")]) == 0
        assert main(["marginals", str(d / "ds.txt"), "-o", str(d / "marg.csv")]) == 0
        outputs.append([(d / f).read_bytes() for f in ("ds.txt", "poses.csv", "trend.csv", "trend.svg", "marg.csv")])
    assert outputs[0] == outputs[1]


def test_loop_pipeline_shows_closure_decrease(tmp_path):
    spec = ScenarioSpec(kind="loop", num_keyframes=20, seed=3, covis_span=2)
    sp = tmp_path / "loop.json"
    sp.write_text(spec.to_json())
    ds_path = tmp_path / "loop.txt"
    assert main(["simulate", str(sp), "-o", str(ds_path)]) == 0
    ds = load_dataset(ds_path)
    cut = tmp_path / "cut.txt"
    save_dataset(ds.filter_measurements(lambda m: abs(m.frame_i - m.frame_j) <= spec.covis_span), cut)
    full, no_loop = tmp_path / "full.csv", tmp_path / "noloop.csv"
    assert main(["trend", str(ds_path), "-o", str(full)]) == 0
    assert main(["trend", str(cut), "-o", str(no_loop)]) == 0
    a, b = _rows(full), _rows(no_loop)
    closing = [k for k, r in enumerate(a) if int(r["max_backlink_span"]) > spec.covis_span]
    assert closing
    for k in closing:
        assert float(a[k]["logdet"]) < float(b[k]["logdet"])


def test_module_entry_point(scene):
    r = subprocess.run([sys.executable, "-m", "vocovar", "validate", str(scene)], capture_output=True, text=True)
    assert r.returncode == 0
    r = subprocess.run([sys.executable, "-m", "vocovar", "bogus"], capture_output=True, text=True)
    assert r.returncode == 2 and "usage" in r.stderr
