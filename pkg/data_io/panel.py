import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from utils.exceptions import DataError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class TimeSeriesPanel:
    """Subjects x time points x features, plus an optional subjects x time response"""

    X: np.ndarray
    y: Optional[np.ndarray] = None
    feature_names: List[str] = field(default_factory=list)
    subject_ids: List[str] = field(default_factory=list)
    time_index: List = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim == 2:
            self.X = self.X[np.newaxis]
        if self.X.ndim != 3:
            raise ShapeError(f"Panel X must be (m, n, p), got {self.X.shape}")

        m, n, p = self.X.shape
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.float64)
            if self.y.ndim == 1:
                self.y = self.y[np.newaxis]
            if self.y.shape != (m, n):
                raise ShapeError(f"Panel y must be ({m}, {n}), got {self.y.shape}")

        if not self.feature_names:
            self.feature_names = [f"X{j + 1}" for j in range(p)]
        if not self.subject_ids:
            self.subject_ids = [f"S{i + 1}" for i in range(m)]
        if not self.time_index:
            self.time_index = list(range(1, n + 1))

        if len(self.feature_names) != p:
            raise ShapeError(f"{len(self.feature_names)} feature names for {p} features")
        if len(self.subject_ids) != m:
            raise ShapeError(f"{len(self.subject_ids)} subject ids for {m} subjects")
        if len(self.time_index) != n:
            raise ShapeError(f"{len(self.time_index)} time labels for {n} time points")

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.X.shape

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[2]

    def require_finite(self, what: str = "panel"):
        if self.X.size == 0:
            raise DataError(f"{what}: empty feature array {self.X.shape}")
        if not np.all(np.isfinite(self.X)):
            raise DataError(f"{what}: feature array contains non-finite values")
        if self.y is not None and not np.all(np.isfinite(self.y)):
            raise DataError(f"{what}: response contains non-finite values")

    def require_response(self) -> np.ndarray:
        if self.y is None:
            raise DataError("Panel has no response attached")
        return self.y

    def with_features(self, X: np.ndarray) -> "TimeSeriesPanel":
        """Same labels and response, different feature values (e.g. knockoffs)"""
        return replace(self, X=np.asarray(X, dtype=np.float64))
