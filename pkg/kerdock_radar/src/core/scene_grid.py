"""
Random array geometry, steering vectors, the azimuth-range-Doppler grid
and generic sparse scenes
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np

from .errors import DimensionError
from .models import ArrayGeometry, Grid, MagnitudeModel, SparseScene

logger = logging.getLogger(__name__)

# stream identifiers for seeds derived from a campaign master seed
GEOMETRY_STREAM = 0
SCENE_STREAM = 1
NOISE_STREAM = 2
SOLVER_STREAM = 3


def derive_seed(master_seed: int, trial: int, stream: int) -> int:
    """Independent 63-bit seed for one (trial, stream) pair of a campaign"""
    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(trial), int(stream)))
    return int(sequence.generate_state(1, np.uint64)[0] >> np.uint64(1))


def sample_geometry(n_tx: int, n_rx: int, seed: int) -> ArrayGeometry:
    """Antenna positions i.i.d. uniform on [0, n_rx * n_tx / 2]"""
    if n_tx < 1 or n_rx < 1:
        raise DimensionError(f"Antenna counts must be positive, got n_tx={n_tx}, n_rx={n_rx}")
    rng = np.random.default_rng(seed)
    aperture = n_rx * n_tx / 2.0
    tx_positions = rng.uniform(0.0, aperture, n_tx)
    rx_positions = rng.uniform(0.0, aperture, n_rx)
    return ArrayGeometry(tx_positions=tx_positions, rx_positions=rx_positions, seed=seed)


def steering_matrix(positions: np.ndarray, betas: np.ndarray) -> np.ndarray:
    """Rows e^{2 pi i position * beta}, one per azimuth"""
    return np.exp(2j * np.pi * np.outer(np.atleast_1d(betas), positions))


def steering_vectors(geometry: ArrayGeometry, beta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Transmit and receive array manifolds at azimuth beta"""
    tx = steering_matrix(geometry.tx_positions, beta)[0]
    rx = steering_matrix(geometry.rx_positions, beta)[0]
    return tx, rx


def make_grid(n_delay: int, n_doppler: int, n_tx: int, n_rx: int) -> Grid:
    """Grid with N_beta = N_R * N_T azimuth points spaced 2 / (N_R * N_T)"""
    if n_delay < 1 or n_doppler < 1:
        raise DimensionError(f"Grid sizes must be positive, got N_tau={n_delay}, N_f={n_doppler}")
    if n_tx < 1 or n_rx < 1:
        raise DimensionError(f"Antenna counts must be positive, got n_tx={n_tx}, n_rx={n_rx}")
    n_azimuth = n_rx * n_tx
    return Grid(
        n_delay=n_delay,
        n_doppler=n_doppler,
        n_azimuth=n_azimuth,
        delta_beta=2.0 / n_azimuth,
    )


def sample_scene(
    grid: Grid,
    sparsity: int,
    magnitude_model: Optional[MagnitudeModel] = None,
    seed: int = 0,
) -> SparseScene:
    """
    Generic S-sparse scene: support uniform without replacement, phases
    uniform on [0, 2 pi), magnitudes from the model (unit by default).
    """
    n_cells = grid.n_cells
    if not 1 <= sparsity <= n_cells:
        raise DimensionError(f"Sparsity must be in [1, {n_cells}], got {sparsity}")
    model = magnitude_model or MagnitudeModel()
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(n_cells, size=sparsity, replace=False)).astype(np.int64)
    phases = rng.uniform(0.0, 2 * np.pi, sparsity)
    magnitudes = model.draw(rng, sparsity)
    return SparseScene(
        support=support,
        amplitudes=magnitudes * np.exp(1j * phases),
        n_cells=n_cells,
        seed=seed,
        magnitude_model=model.kind,
    )


def min_amplitude(sigma: float, n_rx: int, n_tx: int, grid: Grid) -> float:
    """Detectability floor 8 sqrt(3) sigma / sqrt(N_R N_T) * sqrt(2 log(N_tau N_f N_beta))"""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    return 8.0 * math.sqrt(3.0) * sigma / math.sqrt(n_rx * n_tx) * math.sqrt(2.0 * math.log(grid.n_cells))


def normalized_amplitude_floor(sigma: float, grid: Grid) -> float:
    """min_amplitude in the column-normalized domain: 8 sigma sqrt(2 log(N_tau N_f N_beta))"""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    return 8.0 * sigma * math.sqrt(2.0 * math.log(grid.n_cells))
