"""
Knockoff statistics read from trained prediction-network weights.

For each gate g the path contribution of input slot j is
v^(g) = (W0 * Gamma) @ Vg.T @ V1, Gamma being the batch-norm scale broadcast
over the rows of W0 (omitted when batch norm is off). Feature j then scores
Z_j = ||z_j * v_j||_2 and its knockoff Z~_j = ||z~_j * v_j||_2, giving
W_j = Z_j**2 - Z~_j**2.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from prediction.network import PredictionNetwork
from tensor_nn.lstm import GATES
from utils.exceptions import DataError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class KnockoffStatistics:
    v_f: np.ndarray
    v_i: np.ndarray
    v_c: np.ndarray
    v_o: np.ndarray
    Z: np.ndarray
    Z_tilde: np.ndarray
    W: np.ndarray

    def to_frame(self, feature_names: Optional[Sequence[str]] = None) -> pd.DataFrame:
        """One row per feature in input order"""
        names = list(feature_names) if feature_names is not None else [f"X{j + 1}" for j in range(len(self.W))]
        if len(names) != len(self.W):
            raise ShapeError(f"{len(names)} feature names for {len(self.W)} statistics")
        return pd.DataFrame({
            "feature": names,
            "Z": self.Z,
            "Z_tilde": self.Z_tilde,
            "W": self.W,
        })


def _effective_dense_weights(model: PredictionNetwork) -> np.ndarray:
    W0 = model.dense.W0
    if model.batch_norm is None:
        return W0
    return W0 * model.batch_norm.gamma[np.newaxis, :]


def gate_path_contributions(model: PredictionNetwork) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(v_f, v_i, v_c, v_o), each a p-vector"""
    dense = _effective_dense_weights(model)
    contributions: List[np.ndarray] = []
    for gate in GATES:
        V_g = getattr(model.lstm, f"V{gate}")
        contributions.append(dense @ (V_g.T @ model.V1))
    return tuple(contributions)


def _scores(filter_weights: np.ndarray, paths: np.ndarray) -> np.ndarray:
    # paths: (4, p); norm over the gate axis
    return np.sqrt(np.sum((filter_weights[np.newaxis, :] * paths) ** 2, axis=0))


def importance_scores(model: PredictionNetwork) -> Tuple[np.ndarray, np.ndarray]:
    paths = np.vstack(gate_path_contributions(model))
    return _scores(model.filter.z, paths), _scores(model.filter.z_tilde, paths)


def knockoff_statistics(Z: np.ndarray, Z_tilde: np.ndarray) -> np.ndarray:
    """W = Z**2 - Z_tilde**2"""
    Z = np.asarray(Z, dtype=np.float64)
    Z_tilde = np.asarray(Z_tilde, dtype=np.float64)
    if Z.shape != Z_tilde.shape:
        raise ShapeError(f"importance scores differ in length: {Z.shape} vs {Z_tilde.shape}")
    if np.any(Z < 0) or np.any(Z_tilde < 0):
        raise DataError("importance scores must be non-negative")
    return Z ** 2 - Z_tilde ** 2


def compute_statistics(model: PredictionNetwork) -> KnockoffStatistics:
    v_f, v_i, v_c, v_o = gate_path_contributions(model)
    paths = np.vstack([v_f, v_i, v_c, v_o])
    Z = _scores(model.filter.z, paths)
    Z_tilde = _scores(model.filter.z_tilde, paths)
    W = knockoff_statistics(Z, Z_tilde)
    if not np.all(np.isfinite(W)):
        logger.warning("Knockoff statistics contain non-finite values")
    logger.info(f"Statistics: {int(np.sum(W > 0))} positive, {int(np.sum(W < 0))} negative, "
                f"{int(np.sum(W == 0))} zero of {len(W)}")
    return KnockoffStatistics(v_f=v_f, v_i=v_i, v_c=v_c, v_o=v_o, Z=Z, Z_tilde=Z_tilde, W=W)
