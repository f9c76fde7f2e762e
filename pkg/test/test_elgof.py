import json
from pathlib import Path

import numpy as np
import pytest

__import__("sys").path[0:0] = "."
from src.elgof import *


def write_data(path, X, Y):
    columns = [f"x{j + 1}" for j in range(X.shape[1])] + [f"y{l + 1}" for l in range(Y.shape[1])]
    rows = [",".join(columns)] + [",".join(repr(float(v)) for v in row) for row in np.column_stack([X, Y])]
    path.write_text("\n".join(rows) + "\n")
    return path


@pytest.fixture
def linear_data(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(60, 1))
    return write_data(tmp_path / "linear.csv", X, 1 + 2 * X + 0.1 * rng.normal(size=(60, 1)))


TEST_FLAGS = ["--model", "linear", "--boot", "19", "--h0", "0.25", "--h1", "0.35", "--h-grid", "2", "--seed", "3"]


def test_constants(tmp_path, capsys):
    assert main(["constants", "--out-dir", str(tmp_path)]) == EXIT_OK
    lines = dict(line.split("\t") for line in capsys.readouterr().out.splitlines())
    print(lines)
    assert float(lines["R_K"]) == pytest.approx(2 / 3, abs=1e-10)
    assert float(lines["K4_0"]) == pytest.approx(151 / 315, rel=1e-10)
    assert float(lines["int_pi2"]) == pytest.approx(1.25)
    assert float(lines["sigma2"]) == pytest.approx(2 * (151 / 315) * (9 / 4) * 1.25, rel=1e-9)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["outputs"] == []
    assert manifest["version"] == VERSION


def test_constants_in_two_dimensions(tmp_path, capsys):
    assert main(["constants", "--out-dir", str(tmp_path), "--d", "2", "--k", "3", "--kernel", "epanechnikov"]) == EXIT_OK
    lines = dict(line.split("\t") for line in capsys.readouterr().out.splitlines())
    assert float(lines["R_K"]) == pytest.approx(0.36, abs=1e-10)
    assert float(lines["k"]) == 3


def test_invalid_response_count(tmp_path, capsys):
    assert main(["constants", "--out-dir", str(tmp_path), "--k", "0"]) == EXIT_INPUT
    assert "Invalid input" in capsys.readouterr().err


def test_invalid_config_file(tmp_path, capsys):
    path = tmp_path / "bad.conf"
    path.write_text("alpha = 0.05\nspeed = 2\n")
    assert main(["constants", "--out-dir", str(tmp_path), "--config", str(path)]) == EXIT_INPUT
    assert f"{path}:2:1" in capsys.readouterr().err


def test_missing_data_file(tmp_path):
    assert main(["test", "--out-dir", str(tmp_path), "--data", str(tmp_path / "none.csv"), *TEST_FLAGS]) == EXIT_INPUT


def test_numerical_failure(tmp_path, capsys):
    X = np.linspace(0, 0.2, 30)[:, None]
    data = write_data(tmp_path / "clustered.csv", X, X)
    flags = ["--model", "linear", "--boot", "9", "--h0", "0.05", "--h1", "0.05", "--h-grid", "1"]
    assert main(["test", "--out-dir", str(tmp_path), "--data", str(data), *flags]) == EXIT_NUMERICAL
    assert "UnreliableIntegrationError" in capsys.readouterr().err


def test_test_command(tmp_path, linear_data, capsys):
    out_dir = tmp_path / "out"
    assert main(["test", "--out-dir", str(out_dir), "--data", str(linear_data), *TEST_FLAGS]) == EXIT_OK
    captured = capsys.readouterr()
    print(captured.out)
    assert "Null model: linear" in captured.out
    assert "p-value" in captured.out
    assert "Done" in captured.err
    frame = (out_dir / "linear_report.csv").read_text().splitlines()
    assert frame[0] == "h,lambda_n,standardized"
    assert len(frame) == 3
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["seed"] == 3
    assert manifest["outputs"] == [str(out_dir / "linear_report.csv"), str(out_dir / "linear_report.txt")]
    assert manifest["command"].startswith("elgof test")
    assert (out_dir / "log.txt").is_file()


def test_reports_do_not_depend_on_the_worker_count(tmp_path, linear_data):
    reports = []
    for workers in ("1", "2", "-1"):
        out_dir = tmp_path / f"workers_{workers}"
        assert main(["test", "--out-dir", str(out_dir), "--data", str(linear_data), "--workers", workers, *TEST_FLAGS]) == EXIT_OK
        reports.append((out_dir / "linear_report.csv").read_bytes() + (out_dir / "linear_report.txt").read_bytes())
    assert reports[0] == reports[1] == reports[2]


def report_lines(path):
    return dict(line.split(": ", 1) for line in path.read_text().splitlines() if ": " in line)


def test_exact_linear_data_is_not_rejected(tmp_path, capsys):
    X = np.random.default_rng(1).uniform(size=(60, 1))
    data = write_data(tmp_path / "exact.csv", X, 1 + 2 * X)
    assert main(["test", "--out-dir", str(tmp_path), "--data", str(data), *TEST_FLAGS]) == EXIT_OK
    assert "is not rejected" in capsys.readouterr().out
    report = report_lines(tmp_path / "linear_report.txt")
    print(report)
    assert report["Decision"] == "fail to reject the null model"
    assert float(report["p-value"]) == pytest.approx(1.0, abs=1e-12)


def test_test_command_is_reproducible(tmp_path, linear_data):
    reports = []
    for run in ("first", "second"):
        out_dir = tmp_path / run
        assert main(["test", "--out-dir", str(out_dir), "--data", str(linear_data), *TEST_FLAGS]) == EXIT_OK
        reports.append(report_lines(out_dir / "linear_report.txt"))
    assert float(reports[0]["p-value"]) == pytest.approx(float(reports[1]["p-value"]), abs=1e-12)
    assert reports[0] == reports[1]


def test_simulate_command(tmp_path, capsys):
    path = tmp_path / "tiny.conf"
    path.write_text("name = tiny\nn = 60\nh0 = 0.3\nh1 = 0.4\nh_grid = 2\na = 0, 1\nseed = 7\n")
    argv = ["simulate", "--out-dir", str(tmp_path), "--config", str(path), "--reps", "2", "--boot", "9", "--workers", "1"]
    assert main(argv) == EXIT_OK
    table = (tmp_path / "tiny_table.csv").read_text().splitlines()
    print(table)
    assert table[0] == "model,g1,g2,a,c,n,reps,reject_rate,mc_se"
    assert len(table) == 3
    assert (tmp_path / "tiny_summary.txt").is_file()
    assert "Rejection table written" in capsys.readouterr().err


def test_simulate_rerun_gives_the_same_table(tmp_path):
    path = tmp_path / "tiny.conf"
    path.write_text("name = tiny\nn = 50\nh0 = 0.3\nh1 = 0.4\nh_grid = 2\na = 0, 1\nseed = 11\n")
    (tables, digests) = ([], [])
    for run in ("first", "second"):
        out_dir = tmp_path / run
        argv = ["simulate", "--out-dir", str(out_dir), "--config", str(path), "--reps", "2", "--boot", "5", "--workers", "1"]
        assert main(argv) == EXIT_OK
        tables.append((out_dir / "tiny_table.csv").read_bytes())
        digests.append(json.loads((out_dir / "manifest.json").read_text())["config_digest"])
    assert digests[0] == digests[1]
    assert tables[0] == tables[1]


@pytest.mark.parametrize("name, cells", [("table1_desk", 8), ("table2_desk", 5)])
def test_desk_studies_fill_every_cell(tmp_path, monkeypatch, name, cells):
    monkeypatch.setenv("ELGOF_N", "40")
    config = Path(__file__).parent.parent / "configs" / f"{name}.conf"
    argv = ["simulate", "--out-dir", str(tmp_path), "--config", str(config), "--reps", "1", "--boot", "1", "--workers", "1"]
    assert main(argv) == EXIT_OK
    table = (tmp_path / f"{name}_table.csv").read_text().splitlines()
    print(table)
    assert table[0] == "model,g1,g2,a,c,n,reps,reject_rate,mc_se"
    assert len(table) == 1 + cells
    assert all(row.split(",")[5] == "40" for row in table[1:])


overrides_data = [
    (["test", "--data", "d.csv", "--model", "plm", "--h0", "0.2"], {"h0": (0.2,), "h1": None, "b": None}),
    (["simulate", "--full-scale"], {"reps": 300, "boot": 300}),
    (["constants", "--no-normalize-pi"], {"normalize_pi": False, "seed": None}),
]


@pytest.mark.parametrize("argv, expected", overrides_data)
def test_overrides(argv, expected):
    result = overrides(cli_arguments(argv))
    print(result)
    for (key, value) in expected.items():
        assert result[key] == value


if __name__ == "__main__":  # pragma: no cover
    pytest.main(["-qq", __import__("sys").argv[0]])
