import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config.settings import AutoencoderConfig
from data_io.panel import TimeSeriesPanel
from knockoffs.autoencoder import LstmAutoencoder, train_autoencoder
from utils.exceptions import DataError, ShapeError
from utils.seeding import derive_seed


@dataclass
class KnockoffResult:
    """Knockoff copy of one subject: X_tilde = C_hat + E_tilde"""

    subject_id: str
    C_hat: np.ndarray
    theta_hat: float
    X_tilde: np.ndarray
    seed: int


def estimate_noise_variance(X_i: np.ndarray, C_hat_i: np.ndarray) -> float:
    """Mean squared residual of X - C_hat over all n x p entries"""
    X_i = np.asarray(X_i, dtype=np.float64)
    C_hat_i = np.asarray(C_hat_i, dtype=np.float64)
    if X_i.shape != C_hat_i.shape:
        raise ShapeError(f"noise variance: data {X_i.shape} vs reconstruction {C_hat_i.shape}")
    if X_i.size == 0:
        raise ShapeError("noise variance: empty matrix")
    residual = X_i - C_hat_i
    return float(np.mean(residual ** 2))


def sample_knockoffs(C_hat_i: np.ndarray, theta_hat_i: float, rng: np.random.Generator) -> np.ndarray:
    """C_hat plus i.i.d. N(0, theta_hat) noise"""
    if not theta_hat_i >= 0:
        raise DataError(f"noise variance must be >= 0, got {theta_hat_i}")
    C_hat_i = np.asarray(C_hat_i, dtype=np.float64)
    if theta_hat_i == 0:
        return C_hat_i.copy()
    return C_hat_i + np.sqrt(theta_hat_i) * rng.standard_normal(C_hat_i.shape)


def knockoff_panel(panel: TimeSeriesPanel, results: List[KnockoffResult]) -> TimeSeriesPanel:
    """Knockoff features stacked into a panel with the original labels"""
    if len(results) != panel.m:
        raise ShapeError(f"{len(results)} knockoff results for {panel.m} subjects")
    return panel.with_features(np.stack([result.X_tilde for result in results]))


class KnockoffGenerator:
    """Trains the autoencoder once, then draws per-subject knockoffs"""

    def __init__(self, config: AutoencoderConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.model: Optional[LstmAutoencoder] = None
        self.logger = logging.getLogger(__name__)

    def fit(self, panel: TimeSeriesPanel) -> LstmAutoencoder:
        self.model = train_autoencoder(panel, self.config, seed=derive_seed(self.seed, "autoencoder"))
        return self.model

    def generate(self, panel: TimeSeriesPanel) -> List[KnockoffResult]:
        if self.model is None:
            self.fit(panel)

        results = []
        for i, subject_id in enumerate(panel.subject_ids):
            X_i = panel.X[i]
            C_hat = self.model.reconstruct(X_i)
            theta_hat = estimate_noise_variance(X_i, C_hat)
            noise_seed = derive_seed(self.seed, "noise", i)
            X_tilde = sample_knockoffs(C_hat, theta_hat, np.random.default_rng(noise_seed))
            results.append(KnockoffResult(subject_id=str(subject_id), C_hat=C_hat, theta_hat=theta_hat,
                                          X_tilde=X_tilde, seed=noise_seed))
            self.logger.info(f"Subject {subject_id}: theta_hat={theta_hat:.4f}")
        return results


def generate_knockoffs(panel: TimeSeriesPanel, config: AutoencoderConfig, seed: int = 0) -> List[KnockoffResult]:
    """Train, estimate per-subject noise variance, sample knockoffs"""
    return KnockoffGenerator(config, seed=seed).generate(panel)


def exchangeability_diagnostic(panel: TimeSeriesPanel, results: List[KnockoffResult]) -> Tuple[pd.DataFrame, Dict[str, float]]:
    """
    Per-feature moments of X vs X_tilde and the largest gaps between the
    swapped cross-correlations corr(X_j, X~_k) vs corr(X~_j, X_k) and between
    corr(X) and corr(X~). Rows of all subjects are pooled.
    """
    X = panel.X.reshape(-1, panel.p)
    X_tilde = np.concatenate([result.X_tilde for result in results], axis=0)
    if X_tilde.shape != X.shape:
        raise ShapeError(f"knockoffs {X_tilde.shape} do not match data {X.shape}")

    features = pd.DataFrame({
        "feature": panel.feature_names,
        "mean_x": X.mean(axis=0),
        "mean_x_tilde": X_tilde.mean(axis=0),
        "var_x": X.var(axis=0),
        "var_x_tilde": X_tilde.var(axis=0),
    })

    p = panel.p
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(np.hstack([X, X_tilde]), rowvar=False)
    corr = np.nan_to_num(corr)
    cross = corr[:p, p:]
    off_diagonal = ~np.eye(p, dtype=bool)

    cov = np.cov(np.hstack([X, X_tilde]), rowvar=False, bias=True)
    cross_cov = cov[:p, p:]

    summary = {
        "max_cross_cov_gap": float(np.max(np.abs(cross_cov - cross_cov.T))) if p > 1 else 0.0,
        "max_cross_gap": float(np.max(np.abs(cross - cross.T))) if p > 1 else 0.0,
        "max_within_gap": float(np.max(np.abs(corr[:p, :p] - corr[p:, p:])[off_diagonal])) if p > 1 else 0.0,
        "tolerance": 3.0 / np.sqrt(X.shape[0]),
    }
    logging.getLogger(__name__).info(
        f"Exchangeability gaps: cross {summary['max_cross_gap']:.4f}, within {summary['max_within_gap']:.4f} "
        f"(tolerance {summary['tolerance']:.4f})"
    )
    return features, summary
