"""
Configuration management.

Precedence, lowest to highest: dataclass defaults, environment variables
(TSKO_WORKERS, TSKO_LOG_LEVEL, TSKO_OUT_DIR), a key-value config file,
command-line flags.
"""

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from utils.exceptions import ConfigError

logger = logging.getLogger(__name__)


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"Environment variable {name} must be an integer, got '{raw}'")


@dataclass
class AutoencoderConfig:
    """Knockoff generator training settings"""

    bottleneck: int = 15
    epochs: int = 1000
    learning_rate: float = 1e-3
    layers_per_side: int = 1
    log_every: int = 100

    def validate(self):
        if self.bottleneck < 1:
            raise ConfigError(f"bottleneck must be >= 1, got {self.bottleneck}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.layers_per_side < 1:
            raise ConfigError(f"layers_per_side must be >= 1, got {self.layers_per_side}")


@dataclass
class PredictionConfig:
    """Prediction network settings"""

    dense_units: int = 32
    lstm_units: int = 32
    epochs: int = 1000
    learning_rate: float = 1e-3
    batch_norm: bool = False
    filter_init: float = 0.1
    standardize_response: bool = True
    log_every: int = 100

    def validate(self):
        if self.dense_units < 1 or self.lstm_units < 1:
            raise ConfigError(
                f"dense_units and lstm_units must be >= 1, got {self.dense_units}, {self.lstm_units}"
            )
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")


@dataclass
class IngestConfig:
    """Abundance table ingestion settings"""

    sample_missing_threshold: float = 0.5
    feature_absence_threshold: float = 0.9
    pseudocount: float = 0.5
    response_feature: Optional[str] = None
    response_column: Optional[str] = None
    response_log: bool = False
    delimiter: Optional[str] = None

    def validate(self):
        for name in ("sample_missing_threshold", "feature_absence_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.pseudocount <= 0:
            raise ConfigError(f"pseudocount must be > 0, got {self.pseudocount}")
        if self.response_feature and self.response_column:
            raise ConfigError("Set at most one of response_feature and response_column")


@dataclass
class RunConfig:
    """Everything a CLI run needs; serialized verbatim into the manifest"""

    # pipeline
    seed: int = 0
    q: float = 0.2
    epochs_autoencoder: int = 1000
    epochs_prediction: int = 1000
    bottleneck: int = 15
    layers_per_side: int = 1
    dense_units: int = 32
    lstm_units: int = 32
    learning_rate: float = 1e-3
    batch_norm: bool = False
    standardize_response: bool = True
    repetitions: int = 1
    workers: int = field(default_factory=lambda: _env_int("TSKO_WORKERS", 1))
    out_dir: str = field(default_factory=lambda: os.environ.get("TSKO_OUT_DIR", "output"))
    log_every: int = 100

    # simulation (None keeps the preset's value)
    preset: str = "desk-linear-linear"
    m: Optional[int] = None
    n: Optional[int] = None
    p: Optional[int] = None
    s: Optional[int] = None
    amplitude: Optional[float] = None
    noise_sd: Optional[float] = None
    confounders: Optional[bool] = None
    redraw_loadings: Optional[bool] = None

    # sweep
    grid: str = "hyper"
    epochs_grid: Tuple[int, ...] = (100, 300, 500, 1000)
    bottleneck_grid: Tuple[int, ...] = (1, 3, 15, 64)
    amplitude_grid: Tuple[float, ...] = (2.0, 4.0, 6.0, 8.0, 10.0)
    p_grid: Tuple[int, ...] = ()
    subjects_grid: Tuple[int, ...] = (1, 2, 4, 8)

    # real-data inputs
    table: Optional[str] = None
    panel: Optional[str] = None
    knockoff_dir: Optional[str] = None
    truth: Optional[str] = None
    sample_missing_threshold: float = 0.5
    feature_absence_threshold: float = 0.9
    pseudocount: float = 0.5
    response_feature: Optional[str] = None
    response_column: Optional[str] = None
    response_log: bool = False

    def validate(self) -> "RunConfig":
        if not 0.0 < self.q < 1.0:
            raise ConfigError(f"q must lie in (0, 1), got {self.q}")
        if self.epochs_autoencoder < 0 or self.epochs_prediction < 0:
            raise ConfigError("epochs must be >= 0")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.grid not in ("hyper", "amplitude", "subjects"):
            raise ConfigError(f"grid must be one of hyper, amplitude, subjects; got '{self.grid}'")
        self.autoencoder_config().validate()
        self.prediction_config().validate()
        self.ingest_config().validate()
        return self

    def autoencoder_config(self) -> AutoencoderConfig:
        return AutoencoderConfig(
            bottleneck=self.bottleneck,
            epochs=self.epochs_autoencoder,
            learning_rate=self.learning_rate,
            layers_per_side=self.layers_per_side,
            log_every=self.log_every,
        )

    def prediction_config(self) -> PredictionConfig:
        return PredictionConfig(
            dense_units=self.dense_units,
            lstm_units=self.lstm_units,
            epochs=self.epochs_prediction,
            learning_rate=self.learning_rate,
            batch_norm=self.batch_norm,
            standardize_response=self.standardize_response,
            log_every=self.log_every,
        )

    def ingest_config(self) -> IngestConfig:
        return IngestConfig(
            sample_missing_threshold=self.sample_missing_threshold,
            feature_absence_threshold=self.feature_absence_threshold,
            pseudocount=self.pseudocount,
            response_feature=self.response_feature,
            response_column=self.response_column,
            response_log=self.response_log,
        )

    def sim_overrides(self) -> Dict[str, Any]:
        """Non-None simulation fields, keyed by SimConfig field names"""
        names = ("m", "n", "p", "s", "amplitude", "noise_sd", "confounders", "redraw_loadings")
        return {name: getattr(self, name) for name in names if getattr(self, name) is not None}

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        return {key: list(value) if isinstance(value, tuple) else value for key, value in data.items()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
        values = {}
        for f in dataclasses.fields(cls):
            if f.name in data:
                value = data[f.name]
                values[f.name] = tuple(value) if isinstance(value, list) else value
        return cls(**values)

    def updated(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def coerce_value(name: str, raw: str, default: Any) -> Any:
    """Parse a text value into the type of a RunConfig field's default"""
    text = raw.strip()
    if text.lower() in ("none", "null", ""):
        return None
    if isinstance(default, bool) or name in ("batch_norm", "confounders", "redraw_loadings",
                                             "standardize_response", "response_log"):
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got '{raw}'")
    try:
        if isinstance(default, tuple) or name.endswith("_grid"):
            parts = [part for part in text.replace(";", ",").split(",") if part.strip()]
            cast = float if name == "amplitude_grid" else int
            return tuple(cast(part) for part in parts)
        if name in ("amplitude", "noise_sd") or isinstance(default, float):
            return float(text)
        if name in ("m", "n", "p", "s") or isinstance(default, int):
            return int(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse '{raw}'")
    return text


def load_config_file(path: str, base: Optional[RunConfig] = None) -> RunConfig:
    """Apply `key = value` lines from a config file on top of base"""
    config = base or RunConfig()
    defaults = {f.name: getattr(config, f.name) for f in dataclasses.fields(RunConfig)}
    changes = {}

    file_path = Path(path)
    if not file_path.exists():
        raise ConfigError(f"Config file not found: {path}")

    for line_no, line in enumerate(file_path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value', got '{line.strip()}'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        key = key.replace("-", "_")
        if key not in defaults:
            raise ConfigError(f"{path}:{line_no}: unknown key '{key}'")
        changes[key] = coerce_value(key, value, defaults[key])

    logger.info(f"Loaded {len(changes)} settings from {path}")
    return dataclasses.replace(config, **changes)
