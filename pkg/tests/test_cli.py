import json

import pytest

from online_bvm.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER, main


def write_config(tmp_path, **raw):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(raw))
    return str(p)


def test_sec9_small(tmp_path, capsys):
    cfg = write_config(tmp_path, experiment="bernoulli_sec9", n_total=50, replications=5,
                       batch_sizes=[5, 50], vb={"draws": 50}, svg=False)
    assert main(["sec9", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "online_vb" in out and "mle" in out
    assert (tmp_path / "o" / "coverage.csv").exists()


def test_bad_config_value(tmp_path):
    cfg = write_config(tmp_path, experiment="bernoulli_sec9", alpha=2.0)
    assert main(["sec9", "--config", cfg]) == EXIT_CONFIG


def test_config_for_other_experiment(tmp_path):
    cfg = write_config(tmp_path, experiment="logistic_gaussian")
    assert main(["sec9", "--config", cfg]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["sec9", "--config", str(tmp_path / "none.json")]) == EXIT_IO


def test_diagnose_missing_data(tmp_path):
    assert main(["diagnose", "--data", str(tmp_path / "none.csv"),
                 "--out-dir", str(tmp_path)]) == EXIT_IO


def test_diagnose_malformed_data(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("y,x1\n1\n")
    assert main(["diagnose", "--data", str(p), "--out-dir", str(tmp_path)]) == EXIT_IO


def test_diagnose_separated_data_still_runs(tmp_path, capsys):
    p = tmp_path / "d.csv"
    p.write_text("y\n" + "1\n" * 40)
    assert main(["diagnose", "--data", str(p), "--out-dir", str(tmp_path / "o")]) == EXIT_OK
    assert "steps=1" in capsys.readouterr().out


def test_solver_failure_exit_code(tmp_path, capsys):
    # all-equal responses leave the pooled MLE undefined
    cfg = write_config(tmp_path, experiment="bernoulli_sec9", n_total=1, replications=1,
                       batch_sizes=[1], vb={"draws": 10}, svg=False)
    assert main(["sec9", "--config", cfg, "--out-dir", str(tmp_path)]) == EXIT_SOLVER
    assert "solver failure" in capsys.readouterr().err


def test_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
