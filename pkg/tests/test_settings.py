import json

import pytest
from pydantic import ValidationError

from src.config.settings import (
    ConfigurationError, ExperimentConfig, Settings, build_experiment_config, load_settings,
    save_settings,
)


class TestExperimentConfig:
    def test_alias_and_asymmetric_rates(self):
        config = ExperimentConfig(N=4, lambda_tot=0.5)
        assert config.n_users == 4
        assert config.arrival_rates().rates == pytest.approx((0.175, 0.175, 0.075, 0.075))
        assert config.pattern_label == "asymmetric"

    def test_explicit_rates(self):
        config = ExperimentConfig(n_users=2, rates=[0.1, 0.3])
        assert config.total_rate == pytest.approx(0.4)
        assert config.pattern_label == "explicit"

    def test_symmetric_allows_odd_n(self):
        config = ExperimentConfig(n_users=3, lambda_tot=0.6, pattern="symmetric")
        assert config.arrival_rates().rates == pytest.approx((0.2, 0.2, 0.2))

    @pytest.mark.parametrize("values", [
        {"n_users": 5, "lambda_tot": 0.5},
        {"n_users": 2, "rates": [0.1]},
        {"n_users": 2, "rates": [0.1, 1.5]},
        {"n_users": 2},
        {"n_users": 2, "lambda_tot": -0.1},
        {"n_users": 2, "lambda_tot": 2.0},
        {"n_users": 4, "lambda_tot": 0.5, "horizon": 10, "burn_in": 10},
        {"n_users": 4, "lambda_tot": 0.5, "protocol": "aloha"},
        {"n_users": 4, "lambda_tot": 0.5, "unknown": 1},
    ])
    def test_invalid(self, values):
        with pytest.raises(ValidationError):
            ExperimentConfig(**values)


class TestBuildExperimentConfig:
    def test_defaults_come_from_settings(self):
        defaults = Settings()
        config = build_experiment_config(overrides={"n_users": 2, "lambda_tot": 0.3},
                                         defaults=defaults)
        assert config.horizon == defaults.simulation.horizon
        assert config.replications == 5

    def test_file_then_overrides(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"protocol": "tdma", "N": 6, "lambda_tot": 0.4, "seed": 3}))
        config = build_experiment_config(path, {"seed": 9, "horizon": None}, defaults=Settings())
        assert config.protocol == "tdma"
        assert config.n_users == 6
        assert config.seed == 9
        assert config.horizon == 100_000

    def test_preset_base_is_lowest_priority(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"N": 8}))
        config = build_experiment_config(path, base={"N": 4, "lambda_tot": 0.2},
                                         defaults=Settings())
        assert config.n_users == 8
        assert config.lambda_tot == 0.2

    def test_lambda_override_replaces_file_rates(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"N": 2, "rates": [0.1, 0.2]}))
        config = build_experiment_config(path, {"lambda_tot": 0.5}, defaults=Settings())
        assert config.rates is None
        assert config.total_rate == pytest.approx(0.5)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            build_experiment_config(tmp_path / "missing.json")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError):
            build_experiment_config(path)

    def test_invalid_values_are_configuration_errors(self):
        with pytest.raises(ConfigurationError):
            build_experiment_config(overrides={"n_users": 3, "lambda_tot": 0.5},
                                    defaults=Settings())


class TestSettingsFile:
    def test_environment_sets_output_directory(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CIMA_OUTPUT_DIR", str(tmp_path / "out"))
        loaded = load_settings(tmp_path / "absent.json")
        assert loaded.output.output_directory == tmp_path / "out"

    def test_invalid_file_falls_back_to_defaults(self, tmp_path, monkeypatch):
        monkeypatch.delenv("CIMA_OUTPUT_DIR", raising=False)
        path = tmp_path / "settings.json"
        path.write_text(json.dumps({"simulation": {"horizon": 0}}))
        assert load_settings(path).simulation.horizon == 100_000

    def test_save_and_reload(self, tmp_path, monkeypatch):
        monkeypatch.delenv("CIMA_OUTPUT_DIR", raising=False)
        path = tmp_path / "settings.json"
        settings = Settings()
        settings.simulation.replications = 7
        assert save_settings(settings, path)
        assert load_settings(path).simulation.replications == 7
