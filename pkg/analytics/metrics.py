import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from utils.exceptions import ConfigError, DataError

logger = logging.getLogger(__name__)


@dataclass
class EvalMetrics:
    """Single-run discovery metrics against a known support"""

    fdp: float
    tdp: float
    mfdr_term: float
    n_selected: int
    true_discoveries: int
    false_discoveries: int


def evaluate(selected: Iterable[int], S0: Iterable[int], q: float, allow_empty_truth: bool = False) -> EvalMetrics:
    """
    fdp = |S & S0^c| / max(|S|, 1), tdp = |S & S0| / |S0| and the mFDR
    contribution |S & S0^c| / (|S| + 1/q). An empty S0 is an error unless
    allow_empty_truth, in which case tdp is NaN.
    """
    if not 0.0 < q < 1.0:
        raise ConfigError(f"q must lie in (0, 1), got {q}")
    selected = set(int(j) for j in selected)
    S0 = set(int(j) for j in S0)
    if not S0 and not allow_empty_truth:
        raise DataError("true support S0 is empty; power is undefined")

    true_hits = len(selected & S0)
    false_hits = len(selected - S0)
    return EvalMetrics(
        fdp=false_hits / max(len(selected), 1),
        tdp=true_hits / len(S0) if S0 else float("nan"),
        mfdr_term=false_hits / (len(selected) + 1.0 / q),
        n_selected=len(selected),
        true_discoveries=true_hits,
        false_discoveries=false_hits,
    )


@dataclass
class FrequencyReport:
    """How often each feature was selected across repeated runs"""

    counts: np.ndarray
    runs: int
    feature_names: List[str]

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({
            "feature": self.feature_names,
            "count": self.counts.astype(int),
            "frequency": self.counts / self.runs,
        })
        # stable sort keeps input order among ties
        return df.sort_values("count", ascending=False, kind="mergesort").reset_index(drop=True)

    def histogram(self, bins: Optional[int] = None) -> pd.DataFrame:
        """Number of features per selection count, 0..runs"""
        bins = bins or self.runs + 1
        edges = np.linspace(-0.5, self.runs + 0.5, bins + 1)
        totals, edges = np.histogram(self.counts, bins=edges)
        return pd.DataFrame({"lower": edges[:-1], "upper": edges[1:], "features": totals})


def aggregate_runs(selected_sets: Sequence[Iterable[int]], p: Optional[int] = None,
                   feature_names: Optional[Sequence[str]] = None) -> FrequencyReport:
    """Count selections per feature over a list of runs"""
    if len(selected_sets) == 0:
        raise DataError("cannot aggregate an empty list of runs")

    runs = [sorted(set(int(j) for j in run)) for run in selected_sets]
    if p is None:
        p = len(feature_names) if feature_names is not None else max((max(r) for r in runs if r), default=-1) + 1
    names = list(feature_names) if feature_names is not None else [f"X{j + 1}" for j in range(p)]
    if len(names) != p:
        raise DataError(f"{len(names)} feature names for {p} features")

    counts = np.zeros(p, dtype=np.int64)
    for run in runs:
        if not run:
            continue
        if run[0] < 0 or run[-1] >= p:
            raise DataError(f"selected index out of range for p={p}: {run}")
        counts[run] += 1

    logger.info(f"Aggregated {len(runs)} runs over {p} features, {int(np.sum(counts > 0))} ever selected")
    return FrequencyReport(counts=counts, runs=len(runs), feature_names=names)
