import numpy as np
import pandas as pd
import pytest

from gridcast.config import ExperimentConfig
from gridcast.dataset import table_from_frame
from gridcast.pipeline import train_horizon_models
from gridcast.synthetic import make_synthetic_grid, write_grid_csv

# Small but structurally complete learners: subsampling, dropout and early
# stopping stay on so every stochastic code path is exercised.
TINY_SUBLEARNERS = {
    "gbdt_a": {"n_rounds": 15, "max_depth": 3},
    "gbdt_b": {"n_rounds": 15, "max_depth": 4},
    "mlp": {"epochs": 3, "hidden": [16, 8]},
}

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def hourly_frame(n_hours, start="2022-01-01", **columns):
    idx = pd.date_range(pd.Timestamp(start, tz="UTC"), periods=n_hours, freq="h")
    return pd.DataFrame(columns, index=idx)


@pytest.fixture(scope="session")
def small_grid(tmp_path_factory):
    """90 days of synthetic data on disk, with a constant weather column."""
    frame, clean = make_synthetic_grid(days=90, seed=3, constant_column=True)
    path = tmp_path_factory.mktemp("grid") / "small.csv"
    write_grid_csv(frame, path)
    return path, frame, clean


@pytest.fixture(scope="session")
def small_table(small_grid):
    _, frame, _ = small_grid
    return table_from_frame(frame, "SMALL")


@pytest.fixture(scope="session")
def small_config(small_grid, tmp_path_factory):
    path, _, _ = small_grid
    return ExperimentConfig(
        grid_id="SMALL", data_path=str(path), train_test_cutoff="2020-03-15T00:00:00Z",
        seeds=(0,), sublearners=TINY_SUBLEARNERS,
        output_dir=str(tmp_path_factory.mktemp("runs")),
    )


@pytest.fixture(scope="session")
def small_models(small_config, small_table):
    from gridcast.dataset import split_train_test

    train, _ = split_train_test(small_table, small_config.cutoff)
    return train_horizon_models(train, small_config, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


__all__ = ["hourly_frame", "write_grid_csv", "TINY_SUBLEARNERS"]
