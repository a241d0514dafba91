import json

import pandas as pd
import pytest

from src.backend.worker import CSV_COLUMNS
from src.ui.cli import EXIT_CONFIG, EXIT_OK, main

SMALL = ["--horizon", "500", "--replications", "2", "--no-progress"]


def test_run_writes_csv(tmp_path):
    output = tmp_path / "run.csv"
    code = main(["run", "-N", "2", "--lambda-tot", "0.3", *SMALL, "-o", str(output)])
    assert code == EXIT_OK
    table = pd.read_csv(output)
    assert list(table.columns) == CSV_COLUMNS
    assert table["replication"].tolist() == [0, 1, -1]


def test_run_from_config_file_with_override(tmp_path):
    config = tmp_path / "exp.json"
    config.write_text(json.dumps({"protocol": "tdma", "N": 4, "lambda_tot": 0.4, "seed": 5}))
    output = tmp_path / "run.csv"
    code = main(["run", "--config", str(config), "--seed", "8", *SMALL, "-o", str(output)])
    assert code == EXIT_OK
    table = pd.read_csv(output)
    assert set(table["protocol"]) == {"tdma"}
    assert table["seed"].tolist() == [8, 9, 8]


def test_configuration_error_exit_code(tmp_path):
    code = main(["run", "-N", "3", "--lambda-tot", "0.5", *SMALL, "-o", str(tmp_path / "x.csv")])
    assert code == EXIT_CONFIG


def test_unknown_preset(tmp_path):
    assert main(["run", "--preset", "no-such", "-o", str(tmp_path / "x.csv")]) == EXIT_CONFIG


def test_sweep_with_empty_values(tmp_path):
    output = tmp_path / "sweep.csv"
    code = main(["sweep", "--axis", "users", "--values", "", "--lambda-tot", "0.5", *SMALL,
                 "-o", str(output)])
    assert code == EXIT_OK
    assert output.read_text().strip() == ",".join(CSV_COLUMNS)


def test_sweep_then_plot(tmp_path):
    output = tmp_path / "sweep.csv"
    code = main(["sweep", "--axis", "load", "--values", "0.2,0.4", "-N", "2",
                 "--lambda-tot", "0.2", "--protocols", "cima,tdma", *SMALL, "-o", str(output)])
    assert code == EXIT_OK
    svg = tmp_path / "sweep.svg"
    assert main(["plot", str(output), "--kind", "delay_vs_load", "--bound-overlay",
                 "-o", str(svg)]) == EXIT_OK
    assert svg.read_text().startswith("<?xml")


def test_plot_missing_column(tmp_path):
    table = tmp_path / "bad.csv"
    pd.DataFrame({"protocol": ["cima"], "N": [4]}).to_csv(table, index=False)
    code = main(["plot", str(table), "--kind", "delay_vs_users", "-o", str(tmp_path / "p.svg")])
    assert code == EXIT_CONFIG


def test_sweep_requires_axis(tmp_path):
    code = main(["sweep", "--lambda-tot", "0.5", *SMALL, "-o", str(tmp_path / "s.csv")])
    assert code == EXIT_CONFIG


def test_verify_quick():
    assert main(["verify"]) == EXIT_OK


@pytest.mark.slow
def test_verify_full():
    assert main(["verify", "--full"]) == EXIT_OK
