"""Shared fixtures: tiny model configs and the synthetic dataset pipeline.

Real benchmark CSVs (ETTh1, ETTm1, ILI, Exchange, ...) are looked up under
$CLIENT_DATA_DIR or ./data; tests that need them skip with an explicit
message when the files are absent.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from client_ts import data as D
from client_ts import model as M
from client_ts import training as TR

TINY_TASK = M.ForecastTask(lookback=8, n_variables=3, horizon=4)


def data_dir():
    return Path(os.environ.get("CLIENT_DATA_DIR", Path(__file__).parent.parent / "data"))


def require_dataset(name):
    """Path of a real benchmark CSV, or skip with instructions."""
    path = data_dir() / name
    if not path.exists():
        pytest.skip(
            f"benchmark dataset {name} not present at {path}; place the "
            f"standard CSV there (or set CLIENT_DATA_DIR) to run this "
            f"criterion")
    return path


@pytest.fixture
def tiny_config():
    return M.ClientConfig(task=TINY_TASK, n_layers=1, d_ff=16, n_heads=2)


@pytest.fixture(scope="session")
def fixture_series():
    return D.synthetic_fixture(n_rows=1600, seed=7)


@pytest.fixture(scope="session")
def fixture_windows(fixture_series):
    """(scaler, (train, val, test)) windows at L=24, T=8."""
    return D.prepare_windows(fixture_series, "ratio", 24, 8)


@pytest.fixture(scope="session")
def trained_fixture_model(fixture_windows):
    """A small model genuinely trained on the fixture (3 epochs)."""
    scaler, (tr_w, va_w, te_w) = fixture_windows
    cfg = M.ClientConfig(task=M.ForecastTask(24, 7, 8), n_layers=1, d_ff=16)
    model = M.build_variant(cfg, seed=TR.component_seed(0, TR.SEED_INIT))
    tcfg = TR.TrainConfig(lr=2e-3, max_epochs=3, patience=3, seed=0)
    ckpt, history = TR.train(model, tr_w, va_w, tcfg)
    ckpt.scaler_mean, ckpt.scaler_std = scaler.mean, scaler.std
    return model, ckpt, history


def rng(seed=0):
    return np.random.default_rng(seed)
