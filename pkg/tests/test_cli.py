import json
import os
import subprocess
import sys

import pytest

from mtnetkit.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from mtnetkit.fileio import read_boxes


@pytest.fixture(scope="module")
def seq(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "synth.json"
    cfg.write_text(json.dumps({"frames": 4, "width": 96, "height": 80, "target_w": 20, "target_h": 16}))
    assert main(["synth", "--config", str(cfg), "--seed", "9", "--out", str(root / "seq")]) == EXIT_OK
    return root / "seq"


def test_synth_layout(seq):
    assert len(os.listdir(seq / "rgb")) == 4 and len(os.listdir(seq / "thermal")) == 4
    assert (seq / "rgb" / "000001.ppm").exists() and (seq / "thermal" / "000004.pgm").exists()
    assert len(read_boxes(seq / "groundtruth.txt")) == 4
    assert json.loads((seq / "synth.json").read_text())["seed"] == 9


def test_track_eval_roundtrip(seq, tmp_path, capsys):
    assert main(["track", str(seq), "--seed", "5", "--out", str(tmp_path / "r")]) == EXIT_OK
    res = tmp_path / "r" / "seq.txt"
    assert len(read_boxes(res)) == 4
    log = json.loads((tmp_path / "r" / "seq.log.json").read_text())
    assert log["seed"] == 5 and [f["proposals"] for f in log["frames"]] == [0, 1024, 1024, 1024]
    attrs = tmp_path / "attrs.txt"
    attrs.write_text("seq LI,FM\n")
    assert main(["eval", "--gt", str(seq / "groundtruth.txt"), "--results", str(res), "--attributes", str(attrs),
                 "--seed", "5", "--out", str(tmp_path / "e")]) == EXIT_OK
    rep = json.loads((tmp_path / "e" / "report.json").read_text())
    assert rep["seed"] == 5 and set(rep["attributes"]) == {"LI", "FM"}
    assert set(rep["overall"]) == {"PR", "SR", "NPR"}
    lines = (tmp_path / "e" / "curves.csv").read_text().splitlines()
    assert lines[0] == "curve,threshold,value" and len(lines) == 1 + 51 + 21 + 101
    assert "seed=5" in capsys.readouterr().out


def test_stress_config_replaces_every_frame(seq, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"update": {"M": 1, "hi": 0.0, "lo": 0.0}}))
    assert main(["track", str(seq), "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    actions = [f["action"] for f in json.loads((tmp_path / "seq.log.json").read_text())["frames"]]
    assert actions[1:] == ["replace_with_current"] * 3


def test_eval_self_identity(seq, tmp_path):
    gt = str(seq / "groundtruth.txt")
    assert main(["eval", "--gt", gt, "--results", gt, "--out", str(tmp_path)]) == EXIT_OK
    s = json.loads((tmp_path / "report.json").read_text())["overall"]
    assert s == {"PR": 1.0, "SR": 20 / 21, "NPR": 1.0}
    assert "attributes" not in json.loads((tmp_path / "report.json").read_text())


def test_eval_empty_attribute_file_gives_overall_only(seq, tmp_path):
    gt = str(seq / "groundtruth.txt")
    (tmp_path / "a.txt").write_text("")
    assert main(["eval", "--gt", gt, "--results", gt, "--attributes", str(tmp_path / "a.txt"),
                 "--out", str(tmp_path)]) == EXIT_OK
    assert "attributes" not in json.loads((tmp_path / "report.json").read_text())


def test_curves(seq, tmp_path):
    gt = str(seq / "groundtruth.txt")
    assert main(["curves", "--gt", gt, "--results", gt, "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "seq.csv").exists() and (tmp_path / "overall.csv").exists()


def test_usage_errors(seq, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"fusion": {"d_modle": 64}}))
    assert main(["track", str(seq), "--config", str(bad), "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["gradcheck", "--trials", "0"]) == EXIT_USAGE
    short = tmp_path / "short.txt"
    short.write_text("1,2,3,4\n")
    assert main(["eval", "--gt", str(seq / "groundtruth.txt"), "--results", str(short),
                 "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["track", str(tmp_path / "missing"), "--out", str(tmp_path)]) == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["nope"])
    assert e.value.code == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_malformed_frame(seq, tmp_path):
    import shutil
    broken = tmp_path / "broken"
    shutil.copytree(seq, broken)
    (broken / "thermal" / "000002.pgm").write_bytes(b"P5\n96 80\n255\n\x00")
    assert main(["track", str(broken), "--out", str(tmp_path)]) == EXIT_USAGE


def test_gradcheck_and_statecheck_output(capsys):
    assert main(["gradcheck", "--trials", "5", "--seed", "2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "seed=2" in out and "max rel err" in out and out.strip().endswith("PASS")
    assert main(["statecheck"]) == EXIT_OK
    assert "traces=59049" in capsys.readouterr().out


def test_statecheck_mutation_exit_code(monkeypatch, capsys):
    from mtnetkit import cli, verify

    def mutated(confs, M, N, hi=0.9, lo=0.7):
        return verify.reference_actions(confs, M, N + 1, hi, lo)

    monkeypatch.setattr(cli, "statecheck", lambda: verify.statecheck(reference=mutated, length=3))
    assert main(["statecheck"]) == EXIT_FAIL
    assert "counterexample" in capsys.readouterr().out


def test_thread_env_validation(seq, tmp_path, monkeypatch):
    monkeypatch.setenv("MTNETKIT_THREADS", "zero")
    assert main(["track", str(seq), "--out", str(tmp_path)]) == EXIT_USAGE


def test_jit_flag_selects_numpy_backend():
    env = dict(os.environ, MTNETKIT_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, "-c", "import mtnetkit; print(mtnetkit.backend_name())"],
                         env=env, capture_output=True, text=True, check=True).stdout
    assert out.strip() == "numpy"
