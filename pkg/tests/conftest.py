import numpy as np
import pytest

from config.settings import AutoencoderConfig, PredictionConfig, RunConfig
from simulation.factor_models import SimConfig, simulate_panel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_panel():
    panel, _ = simulate_panel(SimConfig(m=2, n=12, p=4, s=2, amplitude=3.0, seed=3))
    return panel


@pytest.fixture
def tiny_autoencoder_config():
    return AutoencoderConfig(bottleneck=2, epochs=3, log_every=1)


@pytest.fixture
def tiny_prediction_config():
    return PredictionConfig(dense_units=3, lstm_units=2, epochs=3, log_every=1)


@pytest.fixture
def tiny_run_config(tmp_path):
    return RunConfig(
        preset="desk-linear-linear",
        n=15,
        p=5,
        s=2,
        epochs_autoencoder=2,
        epochs_prediction=2,
        bottleneck=2,
        dense_units=3,
        lstm_units=2,
        workers=1,
        out_dir=str(tmp_path / "out"),
    )
