import pandas as pd
import pytest

from src.backend.worker import (
    AGGREGATE_REPLICATION, CSV_COLUMNS, NOT_APPLICABLE, run_experiment, sweep,
)
from src.config.settings import ConfigurationError, ExperimentConfig
from src.utils.file_ops import save_csv_table


def _config(**values):
    base = {"protocol": "cima", "n_users": 4, "lambda_tot": 0.5, "horizon": 2_000,
            "replications": 3, "seed": 10}
    base.update(values)
    return ExperimentConfig(**base)


class TestRunExperiment:
    def test_rows_follow_schema(self):
        result = run_experiment(_config())
        frame = result.to_frame()
        assert list(frame.columns) == CSV_COLUMNS
        assert frame["replication"].tolist() == [0, 1, 2, AGGREGATE_REPLICATION]
        assert frame["seed"].tolist() == [10, 11, 12, 10]
        assert frame["collisions"].sum() == 0
        assert frame["bound_violations"].sum() == 0
        assert result.violations == 0
        assert isinstance(result.aggregate["delay_stderr"], float)

    def test_aggregate_is_mean_of_replications(self):
        result = run_experiment(_config())
        delays = [row["delay"] for row in result.rows[:-1]]
        assert result.aggregate["delay"] == pytest.approx(sum(delays) / len(delays))
        assert result.sojourn is not None

    def test_zero_load_marks_delay_not_applicable(self):
        result = run_experiment(_config(n_users=2, lambda_tot=0.0))
        assert all(row["delay"] == NOT_APPLICABLE for row in result.rows)
        assert all(row["q_avg"] == 0 for row in result.rows)

    def test_identical_config_gives_identical_csv(self, tmp_path):
        first = save_csv_table(run_experiment(_config()).to_frame(), tmp_path / "a.csv")
        second = save_csv_table(run_experiment(_config()).to_frame(), tmp_path / "b.csv")
        assert first.read_bytes() == second.read_bytes()

    def test_parallel_matches_sequential(self):
        sequential = run_experiment(_config(), workers=1).rows
        parallel = run_experiment(_config(), workers=2).rows
        assert parallel == sequential

    def test_overloaded_tdma_is_flagged_unstable(self):
        result = run_experiment(_config(protocol="tdma", lambda_tot=0.9, horizon=20_000,
                                        replications=2))
        assert result.violations == 0
        assert not result.stable

    def test_backoff_collisions_are_reported(self):
        result = run_experiment(_config(protocol="backoff", lambda_tot=0.3))
        assert result.aggregate["collisions"] > 0
        assert result.violations == 0

    def test_progress_callback(self):
        seen = []
        run_experiment(_config(), progress_cb=lambda msg, pct: seen.append(pct))
        assert seen[-1] == 100


class TestSweep:
    def test_users_axis(self):
        table = sweep(_config(), "users", [2, 4])
        assert list(table.columns) == CSV_COLUMNS
        assert table["N"].tolist() == [2, 4]
        assert (table["lambda_tot"] == 0.5).all()
        assert (table["replication"] == AGGREGATE_REPLICATION).all()

    def test_load_axis_with_paired_protocols(self):
        table = sweep(_config(), "load", [0.3, 0.6], ["cima", "tdma", "backoff"])
        assert table["protocol"].tolist() == ["cima", "tdma", "backoff"] * 2
        assert (table["N"] == 4).all()
        for _, group in table.groupby("lambda_tot"):
            assert group["arrival_checksum"].nunique() == 1

    def test_explicit_rates_are_replaced_by_pattern(self):
        base = ExperimentConfig(n_users=2, rates=[0.2, 0.2], horizon=500, replications=1)
        table = sweep(base, "users", [4])
        assert table["pattern"].tolist() == ["asymmetric"]
        assert table["lambda_tot"].tolist() == [pytest.approx(0.4)]

    def test_empty_values_give_header_only(self):
        table = sweep(_config(), "users", [])
        assert isinstance(table, pd.DataFrame)
        assert table.empty
        assert list(table.columns) == CSV_COLUMNS

    def test_odd_users_with_asymmetric_pattern(self):
        with pytest.raises(ConfigurationError):
            sweep(_config(), "users", [4, 5])

    def test_unknown_axis(self):
        with pytest.raises(ConfigurationError):
            sweep(_config(), "horizon", [10])

    def test_unknown_protocol(self):
        with pytest.raises(ConfigurationError):
            sweep(_config(), "load", [0.2], ["aloha"])


@pytest.mark.slow
class TestLongRuns:
    def test_cima_delay_bound(self):
        result = run_experiment(_config(horizon=100_000, replications=5))
        assert result.aggregate["delay"] <= 16
        assert result.aggregate["collisions"] == 0

    def test_tdma_unstable_cima_stable_at_three_quarters_load(self):
        tdma = run_experiment(_config(protocol="tdma", lambda_tot=0.75, horizon=100_000,
                                      replications=5))
        cima = run_experiment(_config(lambda_tot=0.75, horizon=100_000, replications=5))
        assert not tdma.stable
        assert cima.stable

    def test_backoff_delay_exceeds_cima(self):
        table = sweep(_config(horizon=100_000, replications=5), "load", [0.8],
                      ["cima", "backoff"])
        delays = dict(zip(table["protocol"], table["delay"].astype(float)))
        assert delays["backoff"] > delays["cima"]
        assert table["arrival_checksum"].nunique() == 1

    def test_delay_roughly_doubles_with_users(self):
        table = sweep(_config(lambda_tot=0.6, horizon=100_000), "users", [10, 20, 40, 80])
        delays = table["delay"].astype(float).tolist()
        for small, large in zip(delays, delays[1:]):
            assert 1.5 <= large / small <= 2.5

    @pytest.mark.parametrize("n_users", [4, 8, 16, 32])
    def test_delay_within_linear_bound(self, n_users):
        table = sweep(_config(n_users=n_users, horizon=100_000, replications=5), "load",
                      [0.3, 0.6, 0.9])
        assert (table["collisions"] == 0).all()
        for _, row in table.iterrows():
            assert float(row["delay"]) <= 2 * n_users / (1 - row["lambda_tot"])
