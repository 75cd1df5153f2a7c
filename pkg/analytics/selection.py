"""
Knockoff filter thresholds.

For a target level q and offset o (0 for the knockoff rule, 1 for knockoff+)
the threshold is the smallest positive magnitude t of W with

    (o + #{j : W_j <= -t}) / max(#{j : W_j >= t}, 1) <= q

or +inf when no magnitude qualifies. Features with W_j = 0 never count.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from utils.exceptions import ConfigError, DataError

logger = logging.getLogger(__name__)


def _check(W, q: float) -> np.ndarray:
    if not 0.0 < q < 1.0:
        raise ConfigError(f"q must lie in (0, 1), got {q}")
    W = np.asarray(W, dtype=np.float64).ravel()
    if not np.all(np.isfinite(W)):
        raise DataError("knockoff statistics contain non-finite values")
    return W


def estimated_fdp(W, offset: int = 0) -> tuple:
    """(candidate magnitudes ascending, estimated FDP at each)"""
    W = np.asarray(W, dtype=np.float64).ravel()
    positives = np.sort(W[W > 0])
    negatives = np.sort(-W[W < 0])
    candidates = np.unique(np.abs(W[W != 0]))

    n_pos = len(positives) - np.searchsorted(positives, candidates, side="left")
    n_neg = len(negatives) - np.searchsorted(negatives, candidates, side="left")
    ratio = (offset + n_neg) / np.maximum(n_pos, 1)
    return candidates, ratio


def knockoff_threshold(W, q: float, offset: int = 0) -> float:
    W = _check(W, q)
    if offset not in (0, 1):
        raise ConfigError(f"offset must be 0 or 1, got {offset}")
    candidates, ratio = estimated_fdp(W, offset)
    passing = np.nonzero(ratio <= q)[0]
    if passing.size == 0:
        return float("inf")
    return float(candidates[passing[0]])


def knockoff_plus_threshold(W, q: float) -> float:
    return knockoff_threshold(W, q, offset=1)


def select(W, threshold: float) -> List[int]:
    """Sorted 0-based indices with W_j >= threshold"""
    W = np.asarray(W, dtype=np.float64).ravel()
    if np.isinf(threshold):
        return []
    return [int(j) for j in np.nonzero(W >= threshold)[0]]


@dataclass
class SelectionReport:
    """Outcome of one thresholding rule at level q"""

    q: float
    threshold: float
    plus: bool
    selected: List[int] = field(default_factory=list)
    W: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def rule(self) -> str:
        return "knockoff+" if self.plus else "knockoff"

    def __len__(self) -> int:
        return len(self.selected)


def run_selection(W, q: float) -> Dict[str, SelectionReport]:
    """Both rules on one statistics vector, keyed 'knockoff' and 'knockoff+'"""
    W = _check(W, q)
    reports = {}
    for plus in (False, True):
        threshold = knockoff_threshold(W, q, offset=int(plus))
        report = SelectionReport(q=q, threshold=threshold, plus=plus, selected=select(W, threshold), W=W)
        reports[report.rule] = report
        logger.info(f"{report.rule} threshold at q={q}: {threshold:.6g}, {len(report)} selected")
    return reports


def demo_selection():
    """Both rules on a five-feature statistics vector (run with python -m analytics.selection)"""
    print("🧪 Thresholding W = (3, -1, 2, -2, 5) at q = 0.5...")
    try:
        for rule, report in run_selection(np.array([3.0, -1.0, 2.0, -2.0, 5.0]), 0.5).items():
            print(f"✅ {rule}: T = {report.threshold:g}, selected {report.selected}")
        return True
    except Exception as e:
        print(f"❌ Demo failed: {e}")
        return False


if __name__ == "__main__":
    demo_selection()
