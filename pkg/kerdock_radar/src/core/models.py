"""
Core data models for the Kerdock radar toolkit
"""

import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from sklearn.metrics import auc

from .errors import ConfigError, DimensionError

FAMILY_TAGS = ("kerdock", "alltop", "external")
MAGNITUDE_KINDS = ("constant", "uniform", "lognormal", "floor_multiple")


def complex_to_pairs(values: np.ndarray) -> List[List[float]]:
    """Encode a complex vector as a list of [real, imag] pairs for JSON"""
    values = np.asarray(values, dtype=complex).ravel()
    return [[float(v.real), float(v.imag)] for v in values]


def pairs_to_complex(pairs: List[List[float]]) -> np.ndarray:
    """Inverse of complex_to_pairs"""
    if len(pairs) == 0:
        return np.zeros(0, dtype=complex)
    arr = np.asarray(pairs, dtype=float)
    return arr[:, 0] + 1j * arr[:, 1]


def _json_number(value: Optional[float]) -> Optional[float]:
    """JSON has no inf/nan; map them to None"""
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def write_json(data: Dict[str, Any], filepath: str) -> str:
    """Writes a JSON document, creating the parent directory"""
    parent = os.path.dirname(filepath)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(filepath, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False)
    return filepath


@dataclass(frozen=True, eq=False)
class KerdockFamily:
    """The p+1 mutually unbiased bases over Z_p, stacked as bases[k][:, j] = u_{k,j}"""

    p: int
    bases: np.ndarray

    def __post_init__(self):
        if self.bases.shape != (self.p + 1, self.p, self.p):
            raise DimensionError(
                f"Kerdock bases must have shape {(self.p + 1, self.p, self.p)}, got {self.bases.shape}"
            )
        self.bases.setflags(write=False)

    def basis(self, k: int) -> np.ndarray:
        return self.bases[k]

    def vector(self, k: int, j: int) -> np.ndarray:
        return self.bases[k][:, j]


@dataclass(frozen=True, eq=False)
class WaveformSet:
    """Transmit waveforms, one unit-norm column per transmit antenna"""

    p: int
    n_tx: int
    columns: np.ndarray
    family_tag: str
    gamma: Optional[float] = None
    j_select: Optional[int] = None

    def __post_init__(self):
        if self.family_tag not in FAMILY_TAGS:
            raise ConfigError(f"Unknown waveform family '{self.family_tag}', expected one of {FAMILY_TAGS}")
        if self.columns.shape != (self.p, self.n_tx):
            raise DimensionError(f"Waveform matrix must be {self.p}x{self.n_tx}, got {self.columns.shape}")
        self.columns.setflags(write=False)

    def papr(self) -> np.ndarray:
        """Peak-to-average power ratio ||s||_inf / ||s||_2 of every column"""
        peaks = np.max(np.abs(self.columns), axis=0)
        return peaks / np.linalg.norm(self.columns, axis=0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p": self.p,
            "n_tx": self.n_tx,
            "family_tag": self.family_tag,
            "gamma": self.gamma,
            "j_select": self.j_select,
            "papr": [float(v) for v in self.papr()],
        }


@dataclass
class ArrayGeometry:
    """Random colocated transmit and receive antenna positions"""

    tx_positions: np.ndarray
    rx_positions: np.ndarray
    seed: Optional[int] = None

    @property
    def n_tx(self) -> int:
        return len(self.tx_positions)

    @property
    def n_rx(self) -> int:
        return len(self.rx_positions)

    @property
    def aperture(self) -> float:
        return self.n_rx * self.n_tx / 2.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tx_positions": [float(v) for v in self.tx_positions],
            "rx_positions": [float(v) for v in self.rx_positions],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ArrayGeometry":
        return cls(
            tx_positions=np.asarray(data["tx_positions"], dtype=float),
            rx_positions=np.asarray(data["rx_positions"], dtype=float),
            seed=data.get("seed"),
        )

    def save_to_file(self, output_dir: str = "results") -> str:
        return write_json(self.to_dict(), os.path.join(output_dir, "geometry.json"))


@dataclass(frozen=True)
class Grid:
    """
    Azimuth-delay-Doppler grid in normalized units.

    Cells are flattened with delay fastest, then Doppler, then azimuth.
    Azimuth index b (0-based) is the grid point beta_{b+1} = (b+1) * delta_beta.
    """

    n_delay: int
    n_doppler: int
    n_azimuth: int
    delta_beta: float

    @property
    def n_cells(self) -> int:
        return self.n_delay * self.n_doppler * self.n_azimuth

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.n_azimuth, self.n_doppler, self.n_delay)

    @property
    def azimuths(self) -> np.ndarray:
        return np.arange(1, self.n_azimuth + 1) * self.delta_beta

    def cell_index(self, delay: int, doppler: int, azimuth: int) -> int:
        return int(np.ravel_multi_index((azimuth, doppler, delay), self.shape))

    def cell_coordinates(self, index: int) -> Tuple[int, int, int]:
        """Return (delay, doppler, azimuth) of a flat cell index"""
        azimuth, doppler, delay = np.unravel_index(index, self.shape)
        return int(delay), int(doppler), int(azimuth)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_delay": self.n_delay,
            "n_doppler": self.n_doppler,
            "n_azimuth": self.n_azimuth,
            "delta_beta": self.delta_beta,
            "n_cells": self.n_cells,
        }


@dataclass(frozen=True)
class MagnitudeModel:
    """Scatterer magnitude distribution of the generic sparse scene"""

    kind: str = "constant"
    value: float = 1.0
    low: float = 1.0
    high: float = 2.0
    mean: float = 0.0
    sigma: float = 0.5
    multiple: float = 1.5

    def __post_init__(self):
        if self.kind not in MAGNITUDE_KINDS:
            raise ConfigError(f"Unknown magnitude model '{self.kind}', expected one of {MAGNITUDE_KINDS}")
        if self.kind == "uniform" and not 0 <= self.low <= self.high:
            raise ConfigError("Uniform magnitude model needs 0 <= low <= high")
        if self.kind == "floor_multiple" and self.multiple <= 0:
            raise ConfigError("Floor multiple must be positive")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw magnitudes; floor_multiple returns unit magnitudes to be rescaled once sigma is known"""
        if self.kind == "constant":
            return np.full(size, float(self.value))
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size)
        if self.kind == "lognormal":
            return rng.lognormal(self.mean, self.sigma, size)
        return np.ones(size)

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class SparseScene:
    """Ground-truth S-sparse scene on the grid"""

    support: np.ndarray
    amplitudes: np.ndarray
    n_cells: int
    seed: Optional[int] = None
    magnitude_model: str = "constant"

    @property
    def sparsity(self) -> int:
        return len(self.support)

    def to_vector(self) -> np.ndarray:
        x = np.zeros(self.n_cells, dtype=complex)
        x[self.support] = self.amplitudes
        return x

    def scaled(self, factor: float) -> "SparseScene":
        return SparseScene(
            support=self.support.copy(),
            amplitudes=self.amplitudes * factor,
            n_cells=self.n_cells,
            seed=self.seed,
            magnitude_model=self.magnitude_model,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "support": [int(v) for v in self.support],
            "amplitudes": complex_to_pairs(self.amplitudes),
            "n_cells": self.n_cells,
            "seed": self.seed,
            "magnitude_model": self.magnitude_model,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SparseScene":
        return cls(
            support=np.asarray(data["support"], dtype=np.int64),
            amplitudes=pairs_to_complex(data["amplitudes"]),
            n_cells=int(data["n_cells"]),
            seed=data.get("seed"),
            magnitude_model=data.get("magnitude_model", "constant"),
        )

    def save_to_file(self, output_dir: str = "results") -> str:
        return write_json(self.to_dict(), os.path.join(output_dir, "scene.json"))


@dataclass
class Measurement:
    """Receiver-major measurement y = A x + w"""

    y: np.ndarray
    sigma: float
    seed: Optional[int] = None
    snr_db: Optional[float] = None
    clean_energy: float = 0.0

    @property
    def output_snr_db(self) -> float:
        """Realized ||Ax||^2 / (len(y) sigma^2) in dB"""
        if self.sigma == 0:
            return math.inf
        if self.clean_energy == 0:
            return -math.inf
        return 10.0 * math.log10(self.clean_energy / (len(self.y) * self.sigma**2))


@dataclass
class LassoConfig:
    """Parameters of the lasso solve and the support detector"""

    lam: float
    max_iters: int = 2000
    rel_tol: float = 1e-8
    support_threshold: float = 1e-3
    detection_floor: float = 0.0
    normalize_columns: bool = True
    backtracking: bool = True
    kkt_tol: float = 1e-3

    def __post_init__(self):
        errors = []
        if not self.lam >= 0:
            errors.append("lambda must be non-negative")
        if self.max_iters < 1:
            errors.append("max_iters must be at least 1")
        if self.rel_tol <= 0:
            errors.append("rel_tol must be positive")
        if self.support_threshold < 0:
            errors.append("support_threshold must be non-negative")
        if not self.detection_floor >= 0:
            errors.append("detection_floor must be non-negative")
        if self.kkt_tol <= 0:
            errors.append("kkt_tol must be positive")
        if errors:
            raise ConfigError("Lasso configuration invalid:\n" + "\n".join(f"  - {e}" for e in errors))


@dataclass
class RecoveryResult:
    """Lasso solution and, once debiased, the support-restricted least-squares estimate"""

    x_lasso: np.ndarray
    iterations: int
    objective: float
    converged: bool
    lam: float
    kkt_ratio: float
    kkt_tol: float = 1e-3
    restarts: int = 0
    lipschitz: float = math.nan
    objective_history: List[float] = field(default_factory=list)
    support: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    x_debiased: Optional[np.ndarray] = None
    rank_deficient: bool = False
    debias_converged: bool = True
    residual_norm: Optional[float] = None
    column_scales: Optional[np.ndarray] = None

    @property
    def kkt_satisfied(self) -> bool:
        return self.kkt_ratio <= 1.0 + self.kkt_tol

    def to_dict(self) -> Dict[str, Any]:
        amplitudes = self.x_debiased[self.support] if self.x_debiased is not None else self.x_lasso[self.support]
        return {
            "support": [int(v) for v in self.support],
            "amplitudes": complex_to_pairs(amplitudes),
            "iterations": self.iterations,
            "objective": self.objective,
            "converged": self.converged,
            "lambda": self.lam,
            "kkt_ratio": _json_number(self.kkt_ratio),
            "kkt_satisfied": self.kkt_satisfied,
            "restarts": self.restarts,
            "lipschitz": _json_number(self.lipschitz),
            "rank_deficient": self.rank_deficient,
            "debias_converged": self.debias_converged,
            "residual_norm": _json_number(self.residual_norm),
        }

    def save_to_file(self, output_dir: str = "results", name: str = "recovery") -> str:
        return write_json(self.to_dict(), os.path.join(output_dir, f"{name}_result.json"))


@dataclass
class DebiasResult:
    """Least-squares amplitudes restricted to a detected support"""

    x: np.ndarray
    support: np.ndarray
    residual_norm: float
    rank_deficient: bool
    method: str
    condition_number: float = math.nan
    converged: bool = True

    @property
    def amplitudes(self) -> np.ndarray:
        return self.x[self.support]


@dataclass
class MatchedFilterMap:
    """Correlation surface |<y, M_f T_tau s>| indexed [delay, doppler]"""

    surface: np.ndarray
    peak: float
    argmax: Tuple[int, int]
    peak_cells: List[Tuple[int, int]]

    @property
    def peak_count(self) -> int:
        return len(self.peak_cells)


@dataclass
class CoherenceResult:
    """Largest cross inner product between distinct columns"""

    mu: Optional[float]
    pair: Optional[Tuple[int, int]]
    max_inner: Optional[float]
    max_inner_pair: Optional[Tuple[int, int]]

    @property
    def applicable(self) -> bool:
        return self.mu is not None


@dataclass
class KerdockPropertyReport:
    """Worst-case deviations of the four Kerdock code properties"""

    p: int
    tolerance: float
    deviations: Dict[str, float]
    ambiguity_points: Dict[int, List[Tuple[int, int]]]
    ambiguity_count_errors: int
    cross_exhaustive: bool

    PROPERTY_GROUPS = {
        "mutually_unbiased": ("unitarity", "eigenvector", "mub"),
        "autocorrelation": ("autocorrelation",),
        "crosscorrelation": ("crosscorrelation",),
        "polyphase": ("polyphase_time", "polyphase_frequency"),
    }

    @property
    def properties(self) -> Dict[str, bool]:
        result = {
            name: all(self.deviations[key] <= self.tolerance for key in keys)
            for name, keys in self.PROPERTY_GROUPS.items()
        }
        result["autocorrelation"] = result["autocorrelation"] and self.ambiguity_count_errors == 0
        return result

    @property
    def passed(self) -> bool:
        return all(self.properties.values())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p": self.p,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "properties": self.properties,
            "deviations": self.deviations,
            "ambiguity_count_errors": self.ambiguity_count_errors,
            "ambiguity_points": {str(k): [list(pt) for pt in pts] for k, pts in self.ambiguity_points.items()},
            "cross_exhaustive": self.cross_exhaustive,
        }

    def save_to_file(self, output_dir: str = "results") -> str:
        return write_json(self.to_dict(), os.path.join(output_dir, f"kerdock_p{self.p}_report.json"))


@dataclass
class IncoherenceReport:
    """Time-frequency incoherence of a waveform set against a constant gamma"""

    p: int
    n_tx: int
    gamma: float
    self_max: float
    cross_max: Optional[float]
    zero_doppler_cross_max: Optional[float]
    tolerance: float = 1e-10

    @property
    def empirical_gamma(self) -> float:
        """Smallest gamma that passes both conditions"""
        worst = max(self.self_max, self.cross_max or 0.0)
        return math.sqrt(self.p) * worst

    @property
    def self_passed(self) -> bool:
        return self.self_max <= self.gamma / math.sqrt(self.p) + self.tolerance

    @property
    def cross_passed(self) -> bool:
        if self.cross_max is None:
            return True
        return self.cross_max <= self.gamma / math.sqrt(self.p) + self.tolerance

    @property
    def passed(self) -> bool:
        return self.self_passed and self.cross_passed

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p": self.p,
            "n_tx": self.n_tx,
            "gamma": self.gamma,
            "passed": self.passed,
            "self_passed": self.self_passed,
            "cross_passed": self.cross_passed,
            "self_max": self.self_max,
            "cross_max": self.cross_max,
            "zero_doppler_cross_max": self.zero_doppler_cross_max,
            "empirical_gamma": self.empirical_gamma,
        }


@dataclass
class TrialRecord:
    """Outcome of one Monte-Carlo recovery trial"""

    trial: int
    seed: int
    success: bool
    sparsity: int
    n_cells: int
    true_support: List[int] = field(default_factory=list)
    detected_support: List[int] = field(default_factory=list)
    support_exact: bool = False
    relative_error: float = math.nan
    error_bound: float = math.nan
    sigma: float = math.nan
    lam: float = math.nan
    output_snr_db: float = math.nan
    y_norm: float = math.nan
    min_true_magnitude: float = math.nan
    amplitude_floor: float = math.nan
    iterations: int = 0
    converged: bool = False
    kkt_ratio: float = math.nan
    rank_deficient: bool = False
    debias_converged: bool = True
    errors: List[str] = field(default_factory=list)
    magnitudes: Optional[np.ndarray] = None
    processing_time: float = 0.0

    CSV_FIELDS = (
        "trial", "seed", "success", "sparsity", "n_cells", "true_support", "detected_support",
        "support_exact", "relative_error", "error_bound", "within_error_bound", "sigma", "lambda",
        "output_snr_db", "y_norm", "min_true_magnitude", "amplitude_floor", "iterations",
        "converged", "kkt_ratio", "rank_deficient", "debias_converged", "errors",
    )

    @property
    def within_error_bound(self) -> bool:
        return bool(self.relative_error <= self.error_bound)

    def to_row(self) -> List[Any]:
        return [
            self.trial, self.seed, int(self.success), self.sparsity, self.n_cells,
            ";".join(str(i) for i in self.true_support),
            ";".join(str(i) for i in self.detected_support),
            int(self.support_exact), repr(float(self.relative_error)), repr(float(self.error_bound)),
            int(self.within_error_bound), repr(float(self.sigma)), repr(float(self.lam)),
            repr(float(self.output_snr_db)), repr(float(self.y_norm)),
            repr(float(self.min_true_magnitude)), repr(float(self.amplitude_floor)),
            self.iterations, int(self.converged), repr(float(self.kkt_ratio)),
            int(self.rank_deficient), int(self.debias_converged), " | ".join(self.errors),
        ]

    @classmethod
    def from_row(cls, row: Dict[str, str]) -> "TrialRecord":
        def indices(text: str) -> List[int]:
            return [int(v) for v in text.split(";")] if text else []

        return cls(
            trial=int(row["trial"]),
            seed=int(row["seed"]),
            success=row["success"] == "1",
            sparsity=int(row["sparsity"]),
            n_cells=int(row["n_cells"]),
            true_support=indices(row["true_support"]),
            detected_support=indices(row["detected_support"]),
            support_exact=row["support_exact"] == "1",
            relative_error=float(row["relative_error"]),
            error_bound=float(row["error_bound"]),
            sigma=float(row["sigma"]),
            lam=float(row["lambda"]),
            output_snr_db=float(row["output_snr_db"]),
            y_norm=float(row["y_norm"]),
            min_true_magnitude=float(row["min_true_magnitude"]),
            amplitude_floor=float(row["amplitude_floor"]),
            iterations=int(row["iterations"]),
            converged=row["converged"] == "1",
            kkt_ratio=float(row["kkt_ratio"]),
            rank_deficient=row["rank_deficient"] == "1",
            debias_converged=row.get("debias_converged", "1") == "1",
            errors=[e for e in row["errors"].split(" | ") if e],
        )


@dataclass
class RocCurve:
    """Detection versus false-alarm probability over a descending threshold sweep"""

    thresholds: np.ndarray
    pd: np.ndarray
    pfa: np.ndarray
    n_trials: int
    label: str = ""

    def __post_init__(self):
        if not len(self.thresholds) == len(self.pd) == len(self.pfa):
            raise DimensionError("ROC thresholds, pd and pfa must have equal lengths")

    @property
    def auc(self) -> float:
        """Area under the curve with the (0, 0) and (1, 1) corners appended"""
        x = np.concatenate(([0.0], self.pfa, [1.0]))
        y = np.concatenate(([0.0], self.pd, [1.0]))
        return float(auc(x, y))

    def pd_at_pfa(self, target_pfa: float) -> float:
        """Largest detection probability among thresholds whose false-alarm rate is at most target_pfa"""
        mask = self.pfa <= target_pfa
        return float(np.max(self.pd[mask])) if np.any(mask) else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "n_trials": self.n_trials,
            "auc": self.auc,
            "pd_at_pfa_1e-2": self.pd_at_pfa(1e-2),
            "thresholds": [float(v) for v in self.thresholds],
            "pd": [float(v) for v in self.pd],
            "pfa": [float(v) for v in self.pfa],
        }


@dataclass
class TheoryReport:
    """Monte-Carlo check of a probabilistic bound"""

    bound_name: str
    bound_expression: str
    bound_value: Optional[float]
    empirical_max: Optional[float]
    empirical_min: Optional[float]
    violations: int
    trials: int
    claimed_failure_probability: Optional[float] = None
    allowed_violations: int = 0
    hypotheses: Dict[str, bool] = field(default_factory=dict)
    forced: bool = False
    applicable: bool = True
    details: Dict[str, Any] = field(default_factory=dict)
    timestamp: datetime = field(default_factory=datetime.now)

    def __post_init__(self):
        if not 0 <= self.violations <= self.trials:
            raise ValueError(f"Violation count {self.violations} outside [0, {self.trials}]")

    @property
    def hypotheses_satisfied(self) -> bool:
        return all(self.hypotheses.values())

    @property
    def violation_rate(self) -> float:
        return self.violations / self.trials if self.trials else 0.0

    @property
    def passed(self) -> bool:
        return not self.applicable or self.violations <= self.allowed_violations

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bound_name": self.bound_name,
            "bound_expression": self.bound_expression,
            "bound_value": _json_number(self.bound_value),
            "applicable": self.applicable,
            "empirical_max": _json_number(self.empirical_max),
            "empirical_min": _json_number(self.empirical_min),
            "violations": self.violations,
            "trials": self.trials,
            "violation_rate": self.violation_rate,
            "claimed_failure_probability": _json_number(self.claimed_failure_probability),
            "allowed_violations": self.allowed_violations,
            "passed": self.passed,
            "hypotheses": self.hypotheses,
            "hypotheses_satisfied": self.hypotheses_satisfied,
            "forced": self.forced,
            "details": self.details,
            "timestamp": self.timestamp.isoformat(),
        }

    def save_to_file(self, output_dir: str = "results") -> str:
        return write_json(self.to_dict(), os.path.join(output_dir, f"{self.bound_name}_report.json"))


@dataclass
class BenchmarkReport:
    """Forward-apply timings of the fast operator against the dense product"""

    fast_seconds: float
    dense_seconds: Optional[float]
    sample_counts: List[int]
    scaling_seconds: List[float]
    scaling_exponent: float
    normalized_slope: float
    min_speedup: float = 5.0
    max_normalized_slope: float = 1.3

    @property
    def speedup(self) -> Optional[float]:
        if self.dense_seconds is None:
            return None
        return self.dense_seconds / self.fast_seconds

    @property
    def passed(self) -> bool:
        speed_ok = self.speedup is None or self.speedup >= self.min_speedup
        return speed_ok and self.normalized_slope <= self.max_normalized_slope

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fast_seconds": self.fast_seconds,
            "dense_seconds": self.dense_seconds,
            "speedup": self.speedup,
            "sample_counts": self.sample_counts,
            "scaling_seconds": self.scaling_seconds,
            "scaling_exponent": self.scaling_exponent,
            "normalized_slope": self.normalized_slope,
            "passed": self.passed,
        }
