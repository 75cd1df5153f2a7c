# Configuration package
from config.settings import (
    AutoencoderConfig,
    IngestConfig,
    PredictionConfig,
    RunConfig,
    load_config_file,
)

__all__ = [
    "AutoencoderConfig",
    "IngestConfig",
    "PredictionConfig",
    "RunConfig",
    "load_config_file",
]
