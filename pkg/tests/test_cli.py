import csv
import json

import pytest

from dcpfl.cli import main

SMALL_BODY = """
n_clients = 4
layer_dims = 4,6,4
num_classes = 4
samples_per_client = 40
local_epochs = 1
max_rounds = 6
seed = 3
"""


def write_config(tmp_path, name="run.cfg", algorithm="fedavg", extra=""):
    path = tmp_path / name
    path.write_text(f"algorithm = {algorithm}\n{SMALL_BODY}\n{extra}\n")
    return path


def run_cli(*argv):
    return main(list(argv))


def test_run_writes_artifacts(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert run_cli("run", "--config", str(cfg), "--out", str(out),
                   "--name", "a", "--no-figures") == 0
    run_dir = out / "a"
    for artifact in ("rounds.csv", "summary.json", "events.jsonl", "trace.csv"):
        assert (run_dir / artifact).is_file(), artifact
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["rounds_run"] == 6


def test_run_renders_figures_by_default(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert run_cli("run", "--config", str(cfg), "--out", str(out), "--name", "f") == 0
    assert (out / "f" / "loss_curve.png").is_file()
    assert (out / "f" / "accuracy.png").is_file()


def test_run_dcpfl_captures_matrices(tmp_path):
    cfg = write_config(tmp_path, algorithm="dcpfl")
    out = tmp_path / "out"
    assert run_cli("run", "--config", str(cfg), "--out", str(out),
                   "--name", "d", "--no-figures") == 0
    assert (out / "d" / "discrepancy.csv").is_file()
    assert (out / "d" / "kld.csv").is_file()
    assert (out / "d" / "dendrogram.json").is_file()


def test_missing_algorithm_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text(SMALL_BODY)
    assert run_cli("run", "--config", str(path), "--out", str(tmp_path / "o")) == 2
    assert "algorithm" in capsys.readouterr().err


def test_unknown_field_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, extra="bogus_field = 1")
    assert run_cli("run", "--config", str(cfg), "--out", str(tmp_path / "o")) == 2
    assert "bogus_field" in capsys.readouterr().err


def test_invalid_value_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, extra="lr = fast")
    assert run_cli("run", "--config", str(cfg), "--out", str(tmp_path / "o")) == 2
    assert "lr" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert run_cli("run", "--config", str(tmp_path / "nope.cfg"),
                   "--out", str(tmp_path / "o")) == 2


def test_reruns_byte_identical(tmp_path):
    cfg = write_config(tmp_path, algorithm="dcpfl")
    out = tmp_path / "out"
    for name in ("one", "two"):
        assert run_cli("run", "--config", str(cfg), "--out", str(out),
                       "--name", name, "--no-figures") == 0
    a = (out / "one" / "rounds.csv").read_bytes()
    b = (out / "two" / "rounds.csv").read_bytes()
    assert a == b


def test_seed_override_changes_output(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert run_cli("run", "--config", str(cfg), "--out", str(out),
                   "--name", "base", "--no-figures") == 0
    assert run_cli("run", "--config", str(cfg), "--out", str(out),
                   "--name", "other", "--seed-override", "99", "--no-figures") == 0
    a = (out / "base" / "rounds.csv").read_bytes()
    b = (out / "other" / "rounds.csv").read_bytes()
    assert a != b


def sweep_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_sweep_rows_and_means(tmp_path):
    spec = tmp_path / "sweep.cfg"
    spec.write_text(
        "axis = lr\nvalues = 0.02, 0.05\nrepeats = 2\nalgorithm = fedavg\n"
        + SMALL_BODY
    )
    out = tmp_path / "out"
    assert run_cli("sweep", "--config", str(spec), "--out", str(out),
                   "--name", "s", "--no-figures") == 0
    rows = sweep_rows(out / "s" / "sweep.csv")
    seed_rows = [r for r in rows if r["kind"] == "seed"]
    mean_rows = [r for r in rows if r["kind"] == "mean"]
    assert len(seed_rows) == 4
    assert len(mean_rows) == 2
    assert all(r["status"] == "ok" for r in rows)
    for mr in mean_rows:
        group = [float(r["final_mean_accuracy"]) for r in seed_rows
                 if r["value"] == mr["value"]]
        assert float(mr["final_mean_accuracy"]) == pytest.approx(
            sum(group) / len(group)
        )


def test_sweep_single_repeat_mean_equals_seed(tmp_path):
    spec = tmp_path / "sweep.cfg"
    spec.write_text("axis = lr\nvalues = 0.05\nalgorithm = fedavg\n" + SMALL_BODY)
    out = tmp_path / "out"
    assert run_cli("sweep", "--config", str(spec), "--out", str(out),
                   "--name", "s1", "--no-figures") == 0
    rows = sweep_rows(out / "s1" / "sweep.csv")
    seed = next(r for r in rows if r["kind"] == "seed")
    mean = next(r for r in rows if r["kind"] == "mean")
    assert float(seed["final_mean_accuracy"]) == float(mean["final_mean_accuracy"])


def test_sweep_bad_axis_exits_2(tmp_path, capsys):
    spec = tmp_path / "sweep.cfg"
    spec.write_text("axis = warp_factor\nvalues = 1\n" + SMALL_BODY)
    assert run_cli("sweep", "--config", str(spec), "--out", str(tmp_path / "o")) == 2
    assert "warp_factor" in capsys.readouterr().err


def test_correlate_after_dcpfl_run(tmp_path, capsys):
    cfg = write_config(tmp_path, algorithm="dcpfl")
    out = tmp_path / "out"
    assert run_cli("run", "--config", str(cfg), "--out", str(out),
                   "--name", "d", "--no-figures") == 0
    assert run_cli("correlate", str(out / "d"), "--no-figures") == 0
    assert "pearson" in capsys.readouterr().out
    report = json.loads((out / "d" / "correlation.json").read_text())
    assert report["pairs"] == 6


def test_correlate_missing_matrices_exits_2(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run_cli("correlate", str(empty)) == 2
