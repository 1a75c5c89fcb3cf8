"""
Configuration management for Kerdock radar experiments
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from .errors import ConfigError
from .models import FAMILY_TAGS, LassoConfig, MagnitudeModel
from .waveforms import MAX_PRIME, is_prime

REQUIRED_KEYS = ("n_tx", "n_rx", "p")


def _parse_snr(value: Any) -> Optional[float]:
    """None, 'inf' and +inf all mean noiseless"""
    if value is None:
        return None
    if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "none", ""):
        return None
    value = float(value)
    return None if value == math.inf else value


@dataclass
class TrialConfig:
    """Parameters of one Monte-Carlo recovery campaign"""

    # Waveforms
    family: str = "kerdock"
    waveform_file: Optional[str] = None
    j_select: int = 0

    # Array and grid
    n_tx: int = 6
    n_rx: int = 6
    p: int = 37
    n_doppler: Optional[int] = None

    # Scene and noise
    sparsity: int = 10
    snr_db: Optional[float] = 20.0
    amplitude_model: str = "constant"
    amplitude_value: float = 1.0
    amplitude_low: float = 1.0
    amplitude_high: float = 2.0
    amplitude_mean: float = 0.0
    amplitude_sigma: float = 0.5
    amplitude_multiple: float = 1.5

    # Campaign
    trials: int = 50
    seed: int = 0

    # Solver overrides
    lam: Optional[float] = None
    max_iters: int = 2000
    rel_tol: float = 1e-8
    support_threshold: float = 1e-3
    detection_floor_ratio: float = 0.5
    normalize_columns: bool = True
    noiseless_lambda_ratio: float = 0.05

    @property
    def doppler_bins(self) -> int:
        return self.n_doppler if self.n_doppler is not None else self.p

    @property
    def n_cells(self) -> int:
        return self.p * self.doppler_bins * self.n_tx * self.n_rx

    def magnitude_model(self) -> MagnitudeModel:
        return MagnitudeModel(
            kind=self.amplitude_model,
            value=self.amplitude_value,
            low=self.amplitude_low,
            high=self.amplitude_high,
            mean=self.amplitude_mean,
            sigma=self.amplitude_sigma,
            multiple=self.amplitude_multiple,
        )

    def lasso_config(self, lam: float, detection_floor: float = 0.0) -> LassoConfig:
        return LassoConfig(
            lam=lam,
            max_iters=self.max_iters,
            rel_tol=self.rel_tol,
            support_threshold=self.support_threshold,
            detection_floor=detection_floor,
            normalize_columns=self.normalize_columns,
        )

    def _collect_errors(self) -> List[str]:
        errors = []
        if self.family not in FAMILY_TAGS:
            errors.append(f"family must be one of {FAMILY_TAGS}, got '{self.family}'")
        if self.family == "external" and not self.waveform_file:
            errors.append("external waveforms need waveform_file")

        if self.family != "external":
            if self.p % 2 == 0 or not is_prime(self.p):
                errors.append(f"p must be an odd prime, got {self.p}")
            elif not 3 <= self.p <= MAX_PRIME:
                errors.append(f"p must be between 3 and {MAX_PRIME}, got {self.p}")
        if self.family == "alltop" and self.p < 5:
            errors.append("alltop waveforms need p >= 5")

        if self.n_tx < 1:
            errors.append("n_tx must be at least 1")
        if self.family == "kerdock" and self.n_tx >= self.p:
            errors.append(f"kerdock waveforms need n_tx < p ({self.n_tx} >= {self.p})")
        if self.family == "alltop" and self.n_tx > self.p:
            errors.append(f"alltop waveforms need n_tx <= p ({self.n_tx} > {self.p})")
        if self.n_rx < 1:
            errors.append("n_rx must be at least 1")
        if not 0 <= self.j_select < max(self.p, 1):
            errors.append(f"j_select must be in [0, p-1], got {self.j_select}")
        if not 1 <= self.doppler_bins <= self.p:
            errors.append(f"n_doppler must be in [1, p], got {self.doppler_bins}")

        if self.n_tx >= 1 and self.n_rx >= 1 and not 1 <= self.sparsity <= self.n_cells:
            errors.append(f"sparsity must be in [1, {self.n_cells}], got {self.sparsity}")
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            errors.append("snr_db must be finite, or null for a noiseless run")
        try:
            self.magnitude_model()
        except ConfigError as e:
            errors.append(str(e))

        if self.trials < 1:
            errors.append("trials must be at least 1")
        if self.lam is not None and self.lam < 0:
            errors.append("lam must be non-negative")
        if self.max_iters < 1:
            errors.append("max_iters must be at least 1")
        if self.rel_tol <= 0:
            errors.append("rel_tol must be positive")
        if self.support_threshold < 0:
            errors.append("support_threshold must be non-negative")
        if not 0 <= self.detection_floor_ratio <= 1:
            errors.append(f"detection_floor_ratio must be in [0, 1], got {self.detection_floor_ratio}")
        if not 0 < self.noiseless_lambda_ratio <= 1:
            errors.append("noiseless_lambda_ratio must be in (0, 1]")
        return errors

    def validate(self) -> bool:
        """Validate configuration"""
        errors = self._collect_errors()
        if errors:
            raise ConfigError("Configuration validation failed:\n" + "\n".join(f"  - {error}" for error in errors))
        return True


@dataclass
class ExperimentConfig(TrialConfig):
    """Trial parameters plus output, parallelism and sweep settings"""

    output_dir: str = field(default_factory=lambda: os.getenv("KERDOCK_OUTPUT_ROOT", "results"))
    dense_oracle: bool = False
    dense_cap: int = 2**27
    jobs: Optional[int] = None
    force: bool = False
    sparsity_sweep: List[int] = field(default_factory=list)
    snr_db_sweep: List[float] = field(default_factory=list)

    def _collect_errors(self) -> List[str]:
        errors = super()._collect_errors()
        if self.jobs is not None and self.jobs < 1:
            errors.append("jobs must be at least 1")
        if self.dense_cap < 1:
            errors.append("dense_cap must be positive")
        for s in self.sparsity_sweep:
            if not 1 <= s <= self.n_cells:
                errors.append(f"sparsity_sweep value {s} outside [1, {self.n_cells}]")
        for snr in self.snr_db_sweep:
            if not math.isfinite(snr):
                errors.append(f"snr_db_sweep value {snr} must be finite")
        return errors

    @classmethod
    def from_env(cls) -> "ExperimentConfig":
        """Create configuration from environment variables"""
        env_file = Path(".env")
        if env_file.exists():
            load_dotenv(env_file)

        n_doppler = os.getenv("KERDOCK_N_DOPPLER")
        jobs = os.getenv("KERDOCK_JOBS")
        config = cls(
            family=os.getenv("KERDOCK_FAMILY", "kerdock"),
            waveform_file=os.getenv("KERDOCK_WAVEFORM_FILE") or None,
            n_tx=int(os.getenv("KERDOCK_N_TX", "6")),
            n_rx=int(os.getenv("KERDOCK_N_RX", "6")),
            p=int(os.getenv("KERDOCK_P", "37")),
            n_doppler=int(n_doppler) if n_doppler else None,
            sparsity=int(os.getenv("KERDOCK_SPARSITY", "10")),
            snr_db=_parse_snr(os.getenv("KERDOCK_SNR_DB", "20")),
            amplitude_model=os.getenv("KERDOCK_AMPLITUDE_MODEL", "constant"),
            trials=int(os.getenv("KERDOCK_TRIALS", "50")),
            seed=int(os.getenv("KERDOCK_SEED", "0")),
            output_dir=os.getenv("KERDOCK_OUTPUT_ROOT", "results"),
            dense_oracle=os.getenv("KERDOCK_DENSE_ORACLE", "false").lower() == "true",
            jobs=int(jobs) if jobs else None,
        )
        config.validate()
        return config

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown configuration key(s): {', '.join(unknown)}")
        missing = [key for key in REQUIRED_KEYS if key not in data]
        if missing:
            raise ConfigError(f"Missing required configuration key(s): {', '.join(missing)}")
        data = dict(data)
        if "snr_db" in data:
            data["snr_db"] = _parse_snr(data["snr_db"])
        config = cls(**data)
        try:
            config.validate()
        except TypeError as e:
            raise ConfigError(f"Configuration value has the wrong type: {e}") from e
        return config

    @classmethod
    def from_file(cls, config_path: str) -> "ExperimentConfig":
        """Create configuration from a JSON config file"""
        config_file = Path(config_path)
        if not config_file.exists():
            raise FileNotFoundError(f"Configuration file not found: {config_path}")

        with open(config_file, "r") as f:
            try:
                config_data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Configuration file {config_path} is not valid JSON: {e}") from e
        if not isinstance(config_data, dict):
            raise ConfigError("Configuration file must hold a JSON object")

        return cls.from_dict(config_data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def save_to_file(self, config_path: str):
        """Save configuration to file"""
        config_file = Path(config_path)
        config_file.parent.mkdir(parents=True, exist_ok=True)

        with open(config_file, "w") as f:
            json.dump(self.to_dict(), f, indent=2)


def load_config(config_path: Optional[str] = None) -> ExperimentConfig:
    """Load configuration from file or environment"""
    if config_path:
        return ExperimentConfig.from_file(config_path)
    return ExperimentConfig.from_env()


def create_default_config(config_path: str = "kerdock_config.json") -> ExperimentConfig:
    """Create a default configuration file"""
    config = ExperimentConfig()
    config.save_to_file(config_path)
    return config


def create_env_template(env_path: str = ".env.example") -> str:
    """Create a .env template file"""
    env_template = """# Kerdock radar configuration
# Copy this file to .env and adjust the values

# Waveforms: kerdock | alltop | external
KERDOCK_FAMILY=kerdock
KERDOCK_WAVEFORM_FILE=

# Array and grid
KERDOCK_N_TX=6
KERDOCK_N_RX=6
KERDOCK_P=37
KERDOCK_N_DOPPLER=37

# Scene and noise (inf = noiseless)
KERDOCK_SPARSITY=10
KERDOCK_SNR_DB=20
KERDOCK_AMPLITUDE_MODEL=constant

# Campaign
KERDOCK_TRIALS=50
KERDOCK_SEED=0
KERDOCK_JOBS=
KERDOCK_DENSE_ORACLE=false

# Output and logging
KERDOCK_OUTPUT_ROOT=results
LOG_LEVEL=INFO
"""

    with open(env_path, "w") as f:
        f.write(env_template)

    return env_path
