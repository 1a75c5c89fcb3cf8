"""
Trial orchestrator for the Kerdock radar simulation.
Coordinates geometry sampling, scene generation, measurement and
debiased-lasso recovery for one Monte-Carlo trial at a time.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .config import TrialConfig
from .errors import DimensionError
from .io import read_waveforms_csv, write_measurement_csv
from .models import (
    ArrayGeometry,
    Grid,
    Measurement,
    RecoveryResult,
    SparseScene,
    TrialRecord,
    WaveformSet,
    write_json,
)
from .scene_grid import (
    GEOMETRY_STREAM,
    NOISE_STREAM,
    SCENE_STREAM,
    SOLVER_STREAM,
    derive_seed,
    make_grid,
    min_amplitude,
    normalized_amplitude_floor,
    sample_geometry,
    sample_scene,
)
from .sensing import SensingOperator, add_noise_with_sigma, noise_sigma
from .solver import default_lambda, recover
from .waveforms import alltop_waveforms, kerdock_family, kerdock_waveforms

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[float, str], None]


def build_waveforms(cfg: TrialConfig) -> WaveformSet:
    """Waveform set named by the configuration"""
    if cfg.family == "kerdock":
        return kerdock_waveforms(kerdock_family(cfg.p), cfg.n_tx, cfg.j_select)
    if cfg.family == "alltop":
        return alltop_waveforms(cfg.p, cfg.n_tx)
    waveforms = read_waveforms_csv(cfg.waveform_file)
    if waveforms.p != cfg.p or waveforms.n_tx != cfg.n_tx:
        raise DimensionError(
            f"Waveform file holds p={waveforms.p}, n_tx={waveforms.n_tx}; configuration says p={cfg.p}, n_tx={cfg.n_tx}"
        )
    return waveforms


@dataclass
class TrialArtifacts:
    """Everything one trial produced"""

    trial: int
    geometry: ArrayGeometry
    operator: SensingOperator
    scene: SparseScene
    measurement: Measurement
    recovery: RecoveryResult
    amplitude_floor: float

    def save(self, output_dir: str):
        self.geometry.save_to_file(output_dir)
        self.scene.save_to_file(output_dir)
        write_measurement_csv(self.measurement, f"{output_dir}/measurement.csv")
        write_json(
            {
                "sigma": self.measurement.sigma,
                "seed": self.measurement.seed,
                "requested_snr_db": None if math.isinf(self.measurement.snr_db) else self.measurement.snr_db,
                "output_snr_db": None if math.isinf(self.measurement.output_snr_db) else self.measurement.output_snr_db,
            },
            f"{output_dir}/measurement.json",
        )
        self.recovery.save_to_file(output_dir)


class SimulationPipeline:
    """Runs recovery trials for one configuration"""

    def __init__(self, cfg: TrialConfig, waveforms: Optional[WaveformSet] = None, dense_oracle: bool = False):
        """
        Initialize the pipeline

        Args:
            cfg: validated trial configuration
            waveforms: overrides the waveform set named by cfg
            dense_oracle: cross-check every fast forward product against the dense matrix
        """
        self.cfg = cfg
        self.dense_oracle = dense_oracle
        self.dense_cap = getattr(cfg, "dense_cap", 2**27)
        self.waveforms = waveforms
        self.grid: Optional[Grid] = None
        self.magnitude_model = cfg.magnitude_model()

        self._initialize_components()

    def _initialize_components(self):
        """Build the waveform set and the grid shared by every trial"""
        try:
            if self.waveforms is None:
                logger.info(f"Building {self.cfg.family} waveforms (p={self.cfg.p}, n_tx={self.cfg.n_tx})")
                self.waveforms = build_waveforms(self.cfg)
            self.grid = make_grid(self.waveforms.p, self.cfg.doppler_bins, self.cfg.n_tx, self.cfg.n_rx)
            logger.info(
                f"Grid ready: N_tau={self.grid.n_delay}, N_f={self.grid.n_doppler}, "
                f"N_beta={self.grid.n_azimuth}, {self.grid.n_cells} cells"
            )
        except Exception as e:
            logger.error(f"Failed to initialize simulation pipeline: {e}")
            raise

    def trial_seed(self, trial: int) -> int:
        return derive_seed(self.cfg.seed, trial, GEOMETRY_STREAM)

    def build_operator(self, trial: int) -> SensingOperator:
        geometry = sample_geometry(self.cfg.n_tx, self.cfg.n_rx, self.trial_seed(trial))
        return SensingOperator(self.waveforms, geometry, self.grid, dense_cap=self.dense_cap)

    def _select_lambda(self, op: SensingOperator, y: np.ndarray, sigma: float) -> float:
        if self.cfg.lam is not None:
            return self.cfg.lam
        if sigma > 0:
            return default_lambda(sigma, self.grid)
        correlations = op.adjoint(y)
        if self.cfg.normalize_columns:
            correlations = correlations / op.column_norms()
        return self.cfg.noiseless_lambda_ratio * float(np.max(np.abs(correlations)))

    def _cross_check(self, op: SensingOperator, x: np.ndarray, y_fast: np.ndarray):
        y_dense = op.dense_matrix() @ x
        deviation = float(np.linalg.norm(y_fast - y_dense) / max(np.linalg.norm(y_dense), 1e-300))
        logger.info(f"Dense oracle deviation {deviation:.3e}")
        if deviation > 1e-10:
            raise DimensionError(f"Fast forward deviates from the dense product by {deviation:.3e}")

    def simulate_trial(self, trial: int) -> TrialArtifacts:
        """Geometry, scene, noisy measurement and debiased-lasso recovery for one trial"""
        cfg = self.cfg
        op = self.build_operator(trial)
        scene = sample_scene(
            self.grid, cfg.sparsity, self.magnitude_model, derive_seed(cfg.seed, trial, SCENE_STREAM)
        )
        x = scene.to_vector()
        y_clean = op.forward(x)
        if self.dense_oracle:
            self._cross_check(op, x, y_clean)

        sigma = noise_sigma(y_clean, cfg.snr_db)
        floor = min_amplitude(sigma, cfg.n_rx, cfg.n_tx, self.grid)
        if self.magnitude_model.kind == "floor_multiple" and sigma > 0:
            factor = self.magnitude_model.multiple * floor
            scene = scene.scaled(factor)
            y_clean = y_clean * factor

        measurement = add_noise_with_sigma(y_clean, sigma, derive_seed(cfg.seed, trial, NOISE_STREAM))
        measurement.snr_db = math.inf if cfg.snr_db is None else cfg.snr_db

        lam = self._select_lambda(op, measurement.y, sigma)
        gate = cfg.detection_floor_ratio * normalized_amplitude_floor(sigma, self.grid)
        recovery = recover(
            op,
            measurement.y,
            cfg.lasso_config(lam, detection_floor=gate),
            seed=derive_seed(cfg.seed, trial, SOLVER_STREAM),
        )

        return TrialArtifacts(
            trial=trial,
            geometry=op.geometry,
            operator=op,
            scene=scene,
            measurement=measurement,
            recovery=recovery,
            amplitude_floor=floor,
        )

    def run_trial(self, trial: int) -> TrialRecord:
        """Run one trial; failures become error records instead of exceptions"""
        start_time = time.time()
        try:
            artifacts = self.simulate_trial(trial)
            record = self._create_record(artifacts)
        except Exception as e:
            logger.error(f"Trial {trial} failed: {e}")
            record = self._create_error_result(trial, str(e))
        record.processing_time = time.time() - start_time
        return record

    def _create_record(self, artifacts: TrialArtifacts) -> TrialRecord:
        cfg = self.cfg
        scene = artifacts.scene
        recovery = artifacts.recovery
        measurement = artifacts.measurement
        x_true = scene.to_vector()
        true_support = sorted(int(i) for i in scene.support)
        detected = sorted(int(i) for i in recovery.support)
        y_norm = float(np.linalg.norm(measurement.y))
        error_bound = (
            5.0 * measurement.sigma * math.sqrt(3.0 * cfg.n_rx * self.grid.n_delay) / y_norm
            if y_norm > 0
            else math.inf
        )
        return TrialRecord(
            trial=artifacts.trial,
            seed=self.trial_seed(artifacts.trial),
            success=True,
            sparsity=scene.sparsity,
            n_cells=self.grid.n_cells,
            true_support=true_support,
            detected_support=detected,
            support_exact=true_support == detected,
            relative_error=float(np.linalg.norm(recovery.x_debiased - x_true) / np.linalg.norm(x_true)),
            error_bound=error_bound,
            sigma=measurement.sigma,
            lam=recovery.lam,
            output_snr_db=measurement.output_snr_db,
            y_norm=y_norm,
            min_true_magnitude=float(np.min(np.abs(scene.amplitudes))),
            amplitude_floor=artifacts.amplitude_floor,
            iterations=recovery.iterations,
            converged=recovery.converged,
            kkt_ratio=recovery.kkt_ratio,
            rank_deficient=recovery.rank_deficient,
            debias_converged=recovery.debias_converged,
            magnitudes=np.abs(recovery.x_lasso),
        )

    def _create_error_result(self, trial: int, error: str) -> TrialRecord:
        return TrialRecord(
            trial=trial,
            seed=self.trial_seed(trial),
            success=False,
            sparsity=self.cfg.sparsity,
            n_cells=self.grid.n_cells if self.grid else 0,
            errors=[error],
        )

    def process_campaign(
        self, trials: Optional[List[int]] = None, progress_callback: Optional[ProgressCallback] = None
    ) -> List[TrialRecord]:
        """
        Run trials sequentially

        Args:
            trials: trial indices, all cfg.trials by default
            progress_callback: Optional callback function for progress updates

        Returns:
            One record per trial, in trial order
        """
        trials = list(range(self.cfg.trials)) if trials is None else trials
        logger.info(f"Starting campaign of {len(trials)} trials")
        start_time = time.time()
        records = []
        for i, trial in enumerate(trials):
            if progress_callback:
                progress_callback(100.0 * i / len(trials), f"Trial {i + 1}/{len(trials)}")
            records.append(self.run_trial(trial))
        if progress_callback:
            progress_callback(100.0, "Campaign complete")
        logger.info(f"Campaign completed in {time.time() - start_time:.2f} seconds")
        return records


def create_pipeline(cfg: TrialConfig, waveforms: Optional[WaveformSet] = None) -> SimulationPipeline:
    """Factory function to create a simulation pipeline"""
    return SimulationPipeline(cfg, waveforms=waveforms, dense_oracle=getattr(cfg, "dense_oracle", False))
