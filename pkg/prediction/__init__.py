# LSTM prediction network and weight-based knockoff statistics
from prediction.network import (
    FilterParams,
    PredictionNetwork,
    build_prediction_network,
    train_prediction_network,
)
from prediction.statistics import (
    KnockoffStatistics,
    compute_statistics,
    gate_path_contributions,
    importance_scores,
    knockoff_statistics,
)

__all__ = [
    "FilterParams",
    "KnockoffStatistics",
    "PredictionNetwork",
    "build_prediction_network",
    "compute_statistics",
    "gate_path_contributions",
    "importance_scores",
    "knockoff_statistics",
    "train_prediction_network",
]
