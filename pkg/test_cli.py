import json

import numpy as np

from cli import main
from dataset_io import read_labeled_csv, write_dataset_csv
from errors import EXIT_DATA, EXIT_OK, EXIT_USAGE
from models import Dataset


def test_simulate_writes_domains(tmp_path):
    assert main(["simulate", "--seed", "3", "--n", "60", "--out", str(tmp_path)]) == EXIT_OK
    source = read_labeled_csv(tmp_path / "source.csv")
    latent = read_labeled_csv(tmp_path / "latent_source.csv")
    assert source.values.shape == (30, 5)
    assert latent.values.shape == (30, 2)
    assert (tmp_path / "target.csv").exists()


def test_adapt_writes_report_and_projections(tmp_path):
    main(["simulate", "--seed", "3", "--n", "120", "--out", str(tmp_path / "data")])
    out = tmp_path / "adapt"
    code = main([
        "adapt", "--source", str(tmp_path / "data" / "source.csv"), "--target", str(tmp_path / "data" / "target.csv"),
        "--p", "2", "--restarts", "3", "--max-iters", "100", "--out", str(out),
    ])
    assert code == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["schema"] == 1
    assert report["config"]["optimizer"]["max_iters"] == 100
    assert [s["name"] for s in report["scenarios"]] == ["baseline", "semi_supervised"]
    assert read_labeled_csv(out / "z_b.csv").values.shape == (60, 2)


def test_sweep_output(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--seed", "1", "--n", "100", "--grid", "24", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "family,alpha,mmd2"
    assert len(lines) == 49


def test_experiment_embed_on_files(tmp_path, rng):
    centers = {0: -3.0, 1: 0.0, 2: 3.0}
    labels = np.repeat([0, 1, 2], 15)
    latent = rng.normal(0, 0.3, (45, 2)) + np.array([[centers[c], 0.5 * centers[c] ** 2] for c in labels])
    write_dataset_csv(Dataset(values=latent @ rng.standard_normal((2, 4)), labels=labels), tmp_path / "a.csv")
    write_dataset_csv(Dataset(values=latent @ rng.standard_normal((2, 4)) + 1.0, labels=labels), tmp_path / "b.csv")

    out = tmp_path / "embed.json"
    code = main([
        "experiment-embed", "--source", str(tmp_path / "a.csv"), "--target", str(tmp_path / "b.csv"),
        "--p", "2", "--restarts", "2", "--max-iters", "50", "--out", str(out),
    ])
    assert code == EXIT_OK
    report = json.loads(out.read_text())
    assert [task["task"] for task in report["tasks"]] == ["0-1", "0-2", "1-2"]


def test_experiment_sim_is_byte_identical(tmp_path):
    args = ["experiment-sim", "--seed", "42", "--restarts", "2", "--grid", "36", "--max-iters", "60"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("report.json", "sweep.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["runtime_ms"] is None


def test_timing_flag_records_runtime(tmp_path):
    args = ["experiment-sim", "--seed", "1", "--restarts", "1", "--grid", "12", "--max-iters", "20", "--timing"]
    assert main(args + ["--out", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "report.json").read_text())["runtime_ms"] >= 0


def test_usage_errors(tmp_path):
    assert main([]) == EXIT_USAGE
    assert main(["adapt", "--source", "x.csv"]) == EXIT_USAGE
    assert main(["sweep", "--source", "x.csv", "--out", str(tmp_path / "s.csv")]) == EXIT_USAGE
    assert main(["experiment-sim", "--sigma-sq", "-1", "--out", str(tmp_path)]) == EXIT_USAGE


def test_data_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,oops\n")
    assert main(["adapt", "--source", str(bad), "--target", str(bad), "--out", str(tmp_path / "o")]) == EXIT_DATA

    one_row = tmp_path / "one.csv"
    one_row.write_text("1,2\n")
    assert main(["adapt", "--source", str(one_row), "--target", str(one_row), "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_help_exits_cleanly(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "experiment-embed" in capsys.readouterr().out


def test_non_utf8_input_is_a_data_error(tmp_path):
    bad = tmp_path / "latin.csv"
    bad.write_bytes(b"1,2\n3,\xff\n")
    assert main(["adapt", "--source", str(bad), "--target", str(bad), "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_bad_flag_values_are_usage_errors(tmp_path):
    out = str(tmp_path / "o")
    assert main(["experiment-sim", "--restarts", "0", "--out", out]) == EXIT_USAGE
    assert main(["experiment-sim", "--labeled-fraction", "1.5", "--out", out]) == EXIT_USAGE
    assert main(["experiment-sim", "--workers", "0", "--out", out]) == EXIT_USAGE
    assert main(["sweep", "--grid", "2", "--out", out]) == EXIT_USAGE
    assert main(["adapt", "--source", "a.csv", "--target", "b.csv", "--p", "0", "--out", out]) == EXIT_USAGE
    assert main(["adapt", "--source", "a.csv", "--target", "b.csv", "--p", "most", "--out", out]) == EXIT_USAGE


def test_adapt_with_full_rank(tmp_path):
    main(["simulate", "--seed", "3", "--n", "120", "--out", str(tmp_path / "data")])
    out = tmp_path / "adapt"
    code = main([
        "adapt", "--source", str(tmp_path / "data" / "source.csv"), "--target", str(tmp_path / "data" / "target.csv"),
        "--p", "full", "--restarts", "2", "--max-iters", "50", "--out", str(out),
    ])
    assert code == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["p"] == "full"
    assert report["scenarios"][-1]["details"]["p"] == 2


def test_experiment_embed_aggregates_synthetic_seeds(tmp_path):
    out = tmp_path / "embed.json"
    code = main([
        "experiment-embed", "--seeds", "2", "--p", "full", "--noise-scale", "0.05",
        "--restarts", "1", "--max-iters", "20", "--out", str(out),
    ])
    assert code == EXIT_OK
    report = json.loads(out.read_text())
    assert len(report["tasks"]) == 2 * 45
    assert {task["replicate"] for task in report["tasks"]} == {0, 1}
    assert all(task["p"] == 20 for task in report["tasks"] if not task["skipped"])
    assert report["scenarios"][1]["details"]["replicates"] == 2


def test_replicates_need_synthetic_mode(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("1,2\n3,4\n")
    args = ["experiment-embed", "--source", str(data), "--target", str(data), "--seeds", "3", "--out", str(tmp_path / "e.json")]
    assert main(args) == EXIT_USAGE
