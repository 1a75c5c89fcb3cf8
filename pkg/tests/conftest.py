import numpy as np
import pytest

from kerdock_radar.src.core.config import ExperimentConfig
from kerdock_radar.src.core.scene_grid import make_grid, sample_geometry
from kerdock_radar.src.core.sensing import SensingOperator
from kerdock_radar.src.core.waveforms import kerdock_family, kerdock_waveforms


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_waveforms():
    """Two Kerdock waveforms of length 5"""
    return kerdock_waveforms(kerdock_family(5), n_tx=2)


@pytest.fixture
def small_operator(small_waveforms):
    """N_T=2, N_R=3, p=N_s=N_f=5: small enough for the dense oracle"""
    geometry = sample_geometry(2, 3, seed=11)
    grid = make_grid(5, 5, 2, 3)
    return SensingOperator(small_waveforms, geometry, grid)


@pytest.fixture
def small_config(tmp_path):
    return ExperimentConfig(
        n_tx=2,
        n_rx=3,
        p=5,
        sparsity=1,
        snr_db=30.0,
        trials=3,
        seed=5,
        jobs=1,
        output_dir=str(tmp_path / "results"),
    )


@pytest.fixture
def reduced_config(tmp_path):
    """p=13, N_T=2, N_R=4, N_f=13"""
    return ExperimentConfig(
        n_tx=2,
        n_rx=4,
        p=13,
        n_doppler=13,
        sparsity=2,
        trials=3,
        seed=3,
        jobs=1,
        output_dir=str(tmp_path / "results"),
    )
