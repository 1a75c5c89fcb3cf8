"""
Azimuth-range-Doppler sensing operator.

Column (tau, f, beta) is a_R(beta) kron (M_f T_tau S a_T(beta)). The fast
path applies it with circular convolutions by FFT; a dense oracle is
available below a memory cap.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .errors import ConvergenceError, DimensionError, MeasurementError, MemoryCapError
from .models import ArrayGeometry, CoherenceResult, Grid, Measurement, WaveformSet
from .scene_grid import steering_matrix

logger = logging.getLogger(__name__)

DEFAULT_DENSE_CAP = 2**27


class SensingOperator:
    """Matrix-free forward/adjoint map for one geometry, waveform set and grid"""

    def __init__(
        self,
        waveforms: WaveformSet,
        geometry: ArrayGeometry,
        grid: Grid,
        dense_cap: int = DEFAULT_DENSE_CAP,
    ):
        self.waveforms = waveforms
        self.geometry = geometry
        self.grid = grid
        self.dense_cap = dense_cap
        self.n_samples = waveforms.p
        self.n_rx = geometry.n_rx
        self._validate()

        betas = grid.azimuths
        self.tx_steering = steering_matrix(geometry.tx_positions, betas)
        self.rx_steering = steering_matrix(geometry.rx_positions, betas)
        # composite signal S a_T(beta), one row per azimuth
        self.composite = self.tx_steering @ waveforms.columns.T
        self.composite.setflags(write=False)
        self._composite_fft = np.fft.fft(self.composite, axis=-1)
        l = np.arange(self.n_samples)
        self._modulation = np.exp(2j * np.pi * np.outer(np.arange(grid.n_doppler), l) / self.n_samples)

    def _validate(self):
        errors = []
        if self.grid.n_delay != self.n_samples:
            errors.append(f"N_tau={self.grid.n_delay} must equal N_s={self.n_samples}")
        if self.grid.n_doppler > self.n_samples:
            errors.append(f"N_f={self.grid.n_doppler} must not exceed N_s={self.n_samples}")
        if self.waveforms.n_tx != self.geometry.n_tx:
            errors.append(f"{self.waveforms.n_tx} waveforms for {self.geometry.n_tx} transmit antennas")
        if self.grid.n_azimuth != self.geometry.n_tx * self.geometry.n_rx:
            errors.append(f"N_beta={self.grid.n_azimuth} must equal N_R*N_T={self.geometry.n_tx * self.geometry.n_rx}")
        if errors:
            raise DimensionError("Inconsistent sensing operator:\n" + "\n".join(f"  - {e}" for e in errors))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_rx * self.n_samples, self.grid.n_cells)

    def _check_length(self, vector: np.ndarray, expected: int, name: str) -> np.ndarray:
        vector = np.asarray(vector)
        if vector.ndim != 1 or vector.shape[0] != expected:
            raise DimensionError(f"{name} must have length {expected}, got shape {vector.shape}")
        return vector

    def forward(self, x: np.ndarray) -> np.ndarray:
        """y = A x, receiver-major"""
        x = self._check_length(x, self.shape[1], "Domain vector")
        cells = x.reshape(self.grid.shape)
        delayed = np.fft.ifft(self._composite_fft[:, None, :] * np.fft.fft(cells, axis=-1), axis=-1)
        per_azimuth = np.sum(delayed * self._modulation[None, :, :], axis=1)
        return (self.rx_steering.T @ per_azimuth).ravel()

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """x = A^H y"""
        y = self._check_length(y, self.shape[0], "Range vector")
        beamformed = np.conj(self.rx_steering) @ y.reshape(self.n_rx, self.n_samples)
        demodulated = beamformed[:, None, :] * np.conj(self._modulation)[None, :, :]
        correlated = np.fft.ifft(np.fft.fft(demodulated, axis=-1) * np.conj(self._composite_fft)[:, None, :], axis=-1)
        return correlated.ravel()

    def columns(self, indices: np.ndarray) -> np.ndarray:
        """Explicit columns for the given flat cell indices, shape (M, len(indices))"""
        indices = np.asarray(indices, dtype=np.int64)
        azimuth, doppler, delay = np.unravel_index(indices, self.grid.shape)
        l = np.arange(self.n_samples)
        shifted = self.composite[azimuth[:, None], np.mod(l[None, :] - delay[:, None], self.n_samples)]
        blocks = shifted * self._modulation[doppler]
        cols = self.rx_steering[azimuth][:, :, None] * blocks[:, None, :]
        return cols.reshape(len(indices), -1).T

    def column_norms(self) -> np.ndarray:
        """Exact l2 norms of every column; they depend only on the azimuth"""
        per_azimuth = np.sqrt(self.n_rx) * np.linalg.norm(self.composite, axis=1)
        return np.repeat(per_azimuth, self.grid.n_doppler * self.grid.n_delay)

    def dense_matrix(self) -> np.ndarray:
        """Explicit A, columns ordered delay fastest, then Doppler, then azimuth"""
        rows, cols = self.shape
        if rows * cols > self.dense_cap:
            raise MemoryCapError(f"Dense matrix needs {rows * cols} entries, cap is {self.dense_cap}")
        l = np.arange(self.n_samples)
        delays = np.arange(self.grid.n_delay)
        circulant = self.composite[:, np.mod(l[None, :] - delays[:, None], self.n_samples)]
        dense = np.einsum("bj,fl,btl->jlbft", self.rx_steering, self._modulation, circulant)
        return dense.reshape(rows, cols)

    def normalized(self) -> "ScaledOperator":
        """A D^{-1}, the operator with unit-norm columns"""
        return ScaledOperator(self, self.column_norms())


class MatrixOperator:
    """Explicit matrix with the operator interface"""

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=complex)
        if self.matrix.ndim != 2:
            raise DimensionError("MatrixOperator needs a 2-D array")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return self.matrix.conj().T @ y

    def columns(self, indices: np.ndarray) -> np.ndarray:
        return self.matrix[:, np.asarray(indices, dtype=np.int64)]

    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.matrix, axis=0)

    def dense_matrix(self) -> np.ndarray:
        return self.matrix

    def normalized(self) -> "ScaledOperator":
        return ScaledOperator(self, self.column_norms())


class ScaledOperator:
    """Operator A D^{-1} for a positive diagonal D given by its entries"""

    def __init__(self, base, scales: np.ndarray):
        scales = np.asarray(scales, dtype=float)
        if np.any(scales <= 0):
            raise DimensionError("Column scaling requires strictly positive norms")
        self.base = base
        self.scales = scales

    @property
    def shape(self) -> Tuple[int, int]:
        return self.base.shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.base.forward(np.asarray(x) / self.scales)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return self.base.adjoint(y) / self.scales

    def columns(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        return self.base.columns(indices) / self.scales[indices]

    def column_norms(self) -> np.ndarray:
        return self.base.column_norms() / self.scales

    def dense_matrix(self) -> np.ndarray:
        return self.base.dense_matrix() / self.scales[None, :]


Operator = Union[SensingOperator, MatrixOperator, ScaledOperator]


@dataclass
class ColumnNorms:
    """Column norms, their per-azimuth values and the normalized operator"""

    norms: np.ndarray
    azimuth_norms: Optional[np.ndarray]
    condition_number: float
    normalized: ScaledOperator

    @property
    def squared(self) -> np.ndarray:
        return self.norms**2

    @property
    def kappa_guard(self) -> bool:
        """kappa(D) <= sqrt(5), the consequence of the column-norm band"""
        return self.condition_number <= math.sqrt(5.0)


def column_norms(op: Operator) -> ColumnNorms:
    """Exact column norms, D's condition number and A D^{-1}"""
    norms = op.column_norms()
    azimuth_norms = None
    if isinstance(op, SensingOperator):
        azimuth_norms = norms.reshape(op.grid.n_azimuth, -1)[:, 0]
    positive = norms[norms > 0]
    condition = float(np.max(positive) / np.min(positive)) if positive.size else math.inf
    if positive.size < norms.size:
        logger.warning(f"{norms.size - positive.size} columns are identically zero")
        condition = math.inf
    return ColumnNorms(
        norms=norms,
        azimuth_norms=azimuth_norms,
        condition_number=condition,
        normalized=ScaledOperator(op, np.where(norms > 0, norms, 1.0)),
    )


def gram_matrix(op: Operator, dense: bool = True) -> np.ndarray:
    """A^H A, from the dense matrix or one adjoint application per column"""
    n = op.shape[1]
    if dense:
        cap = getattr(op, "dense_cap", DEFAULT_DENSE_CAP)
        if n * n > cap:
            raise MemoryCapError(f"Gram matrix needs {n * n} entries, cap is {cap}")
        matrix = op.dense_matrix()
        return matrix.conj().T @ matrix
    gram = np.empty((n, n), dtype=complex)
    for index in range(n):
        gram[:, index] = op.adjoint(op.columns(np.array([index]))[:, 0])
    return gram


def coherence(target: Union[np.ndarray, Operator], dense: bool = True) -> CoherenceResult:
    """
    mu(A) = max_{k != l} |<A_k, A_l>| / (||A_k|| ||A_l||) with its argmax pair,
    plus the largest unnormalized cross inner product.
    """
    op = MatrixOperator(target) if isinstance(target, np.ndarray) else target
    n = op.shape[1]
    if n < 2:
        logger.info("Coherence undefined for a single column")
        return CoherenceResult(mu=None, pair=None, max_inner=None, max_inner_pair=None)
    magnitudes = np.abs(gram_matrix(op, dense=dense))
    norms = op.column_norms()
    np.fill_diagonal(magnitudes, -np.inf)

    flat = int(np.argmax(magnitudes))
    raw_pair = tuple(sorted(divmod(flat, n)))
    max_inner = float(magnitudes.flat[flat])

    with np.errstate(divide="ignore", invalid="ignore"):
        normalized = magnitudes / np.outer(norms, norms)
    normalized[~np.isfinite(normalized)] = 0.0
    np.fill_diagonal(normalized, -np.inf)
    flat = int(np.argmax(normalized))
    pair = tuple(sorted(divmod(flat, n)))
    return CoherenceResult(
        mu=float(normalized.flat[flat]),
        pair=(int(pair[0]), int(pair[1])),
        max_inner=max_inner,
        max_inner_pair=(int(raw_pair[0]), int(raw_pair[1])),
    )


def operator_norm(
    op: Operator,
    tol: float = 1e-6,
    max_iters: int = 500,
    seed: int = 0,
    strict: bool = False,
) -> float:
    """
    Spectral norm by power iteration on A^H A from a seeded random start.

    Args:
        op: any operator with forward/adjoint
        tol: relative change of the estimate that stops the iteration
        max_iters: iteration budget
        seed: seed of the starting vector
        strict: raise ConvergenceError instead of warning when the budget runs out

    Returns:
        Estimate of the largest singular value
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    rng = np.random.default_rng(seed)
    n = op.shape[1]
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    estimate_old = math.inf
    estimate = 0.0
    for iteration in range(max_iters):
        ax = op.forward(x)
        estimate = float(np.linalg.norm(ax))
        if estimate == 0.0:
            return 0.0
        if abs(estimate - estimate_old) / estimate < tol:
            logger.debug(f"Power iteration converged after {iteration + 1} iterations: {estimate:.6e}")
            return estimate
        estimate_old = estimate
        x = op.adjoint(ax)
        x /= np.linalg.norm(x)
    message = f"Power iteration did not reach tol={tol} in {max_iters} iterations (estimate {estimate:.6e})"
    if strict:
        raise ConvergenceError(message)
    logger.warning(message)
    return estimate


def noise_sigma(y_clean: np.ndarray, snr_db: Optional[float]) -> float:
    """sigma with ||y_clean||^2 / (len(y) sigma^2) = 10^{snr_db / 10}"""
    if snr_db is None or snr_db == math.inf:
        return 0.0
    if not math.isfinite(snr_db):
        raise MeasurementError(f"SNR must be finite or +inf, got {snr_db}")
    energy = float(np.vdot(y_clean, y_clean).real)
    if energy == 0.0:
        raise MeasurementError("Cannot set a finite SNR on an all-zero signal")
    return math.sqrt(energy / (len(y_clean) * 10.0 ** (snr_db / 10.0)))


def add_noise_with_sigma(y_clean: np.ndarray, sigma: float, seed: Optional[int]) -> Measurement:
    """Circular complex Gaussian noise with E|w_i|^2 = sigma^2"""
    y_clean = np.asarray(y_clean, dtype=complex)
    if not np.all(np.isfinite(y_clean)):
        raise MeasurementError("Clean signal contains non-finite values")
    energy = float(np.vdot(y_clean, y_clean).real)
    if sigma == 0.0:
        return Measurement(y=y_clean.copy(), sigma=0.0, seed=seed, snr_db=math.inf, clean_energy=energy)
    rng = np.random.default_rng(seed)
    size = len(y_clean)
    noise = sigma * (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2.0)
    measurement = Measurement(y=y_clean + noise, sigma=sigma, seed=seed, clean_energy=energy)
    measurement.snr_db = measurement.output_snr_db
    return measurement


def add_noise(y_clean: np.ndarray, snr_db: Optional[float], seed: Optional[int]) -> Measurement:
    """y = y_clean + w at the requested output SNR; None or +inf means noiseless"""
    y_clean = np.asarray(y_clean, dtype=complex)
    if not np.all(np.isfinite(y_clean)):
        raise MeasurementError("Clean signal contains non-finite values")
    measurement = add_noise_with_sigma(y_clean, noise_sigma(y_clean, snr_db), seed)
    measurement.snr_db = math.inf if snr_db is None else float(snr_db)
    return measurement
