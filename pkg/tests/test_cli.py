import csv
import json
import subprocess
import sys

import pytest

from spmc.cli import main
from spmc.models import load_checkpoint


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["synth", "--num-users", "40", "--num-items", "30", "--seed", "1", "--out", str(d)]) == 0
    return d


def _flags(data, out, *extra):
    return ["--interactions", str(data / "interactions.tsv"), "--trust", str(data / "trust.tsv"),
            "--epochs", "3", "--out", str(out), *extra]


def _read(path):
    return path.read_bytes()


def test_train_writes_artifacts(data, tmp_path, capsys):
    assert main(["train", *_flags(data, tmp_path, "--model", "spmc")]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("test_auc=") and 0.0 <= float(line.split("=")[1]) <= 1.0
    with open(tmp_path / "metrics.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "val_auc", "objective_estimate"] and len(rows) == 4
    with open(tmp_path / "checkpoint.txt") as fh:
        p = load_checkpoint(fh)
    assert p.K == 20 and p.merged and p.alpha == 1.0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["command"] == "train" and m["seed"] == 0
    assert m["config"]["threshold"] == 5 and m["config"]["K"] == 20
    assert m["inputs"]["interactions"]["digest"].startswith("sha256:")
    assert len(m["outputs"]) == 2 and m["duration_seconds"] >= 0


def test_train_unmerged(data, tmp_path):
    assert main(["train", *_flags(data, tmp_path, "--unmerged", "--k", "4")]) == 0
    with open(tmp_path / "checkpoint.txt") as fh:
        p = load_checkpoint(fh)
    assert not p.merged and p.K == 4 and p.N is not None


@pytest.mark.parametrize("command", ["train", "grid", "sweep"])
def test_rerun_and_threads_are_bitwise_identical(data, tmp_path, command, capsys):
    extra = {
        "train": ["--model", "gbpr"],
        "grid": ["--model", "fpmc", "--eta-grid", "0.05", "--lambda-grid", "0.1,0.01"],
        "sweep": ["--sweep", "threshold", "--values", "4,6", "--models", "spmc,sbpr",
                  "--eta-grid", "0.05", "--lambda-grid", "0.01"],
    }[command]
    outs, printed = [], set()
    for name, threads in [("a", "1"), ("b", "1"), ("c", "4")]:
        out = tmp_path / name
        assert main([command, *_flags(data, out, "--threads", threads, *extra)]) == 0
        outs.append({p.name: _read(p) for p in out.iterdir() if p.name != "manifest.json"})
        printed.add(capsys.readouterr().out.replace(str(out), "OUT"))
    assert outs[0] and outs[0] == outs[1] == outs[2]
    assert len(printed) == 1


def test_grid_default_has_twelve_cells(data, tmp_path, capsys):
    assert main(["grid", *_flags(data, tmp_path, "--model", "bprmf")]) == 0
    with open(tmp_path / "grid.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12
    assert sum(int(r["selected"]) for r in rows) == 1
    assert capsys.readouterr().out.startswith("best eta=")


def test_sweep_alpha_single_value(data, tmp_path):
    assert main(["sweep", *_flags(data, tmp_path, "--sweep", "alpha", "--values", "1.0")]) == 0
    with open(tmp_path / "sensitivity.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["parameter", "value", "val_auc", "test_auc"] and len(rows) == 2


def test_sweep_threshold_rows(data, tmp_path):
    flags = _flags(data, tmp_path, "--sweep", "threshold", "--values", "5,6",
                   "--eta-grid", "0.05", "--lambda-grid", "0.01")
    assert main(["sweep", *flags]) == 0
    with open(tmp_path / "threshold.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 5
    assert {r["model"] for r in rows} == {"BPRMF", "FPMC", "SBPR", "GBPR", "SPMC"}


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--threshold", "3"],
        ["train", "--model", "svd"],
        ["grid", "--eta-grid", ""],
        ["grid", "--lambda-grid", "0.1,,0.2"],
        ["sweep", "--sweep", "alpha", "--values", ""],
        ["sweep", "--sweep", "threshold", "--values", "5,2"],
        ["sweep", "--sweep", "bogus", "--values", "1"],
    ],
)
def test_usage_errors(data, tmp_path, argv):
    cmd, *rest = argv
    with pytest.raises(SystemExit) as exc:
        main([cmd, *_flags(data, tmp_path), *rest])
    assert exc.value.code != 0


def test_missing_required_flag():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--out", "x"])
    assert exc.value.code != 0


def test_synth_mix_must_sum_to_one(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--mix", "0.5,0.5,0.5", "--out", str(tmp_path)])
    assert exc.value.code != 0


def test_synth_is_deterministic(tmp_path):
    for name in "ab":
        assert main(["synth", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    for f in ("interactions.tsv", "trust.tsv"):
        assert _read(tmp_path / "a" / f) == _read(tmp_path / "b" / f)


def test_data_error_names_file_and_line(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("u i 1\nu j\n")
    code = main(["train", "--interactions", str(bad), "--out", str(tmp_path / "o")])
    assert code == 1
    assert f"{bad}:line 2" in capsys.readouterr().err


def test_too_few_interactions_is_reported(tmp_path, capsys):
    p = tmp_path / "short.tsv"
    p.write_text("u i 1\nu j 2\n")
    assert main(["train", "--interactions", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "error:" in capsys.readouterr().err


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "spmc.cli", "train", "--help"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    for flag in ("--interactions", "--trust", "--model", "--k", "--eta", "--lambda", "--alpha",
                 "--epochs", "--threshold", "--seed", "--unmerged", "--out", "--threads"):
        assert flag in r.stdout
