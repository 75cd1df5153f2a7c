"""
Compositional transforms and ingestion of abundance tables into panels.

clr(x)_j = ln x_j - mean_k ln x_k, after adding a pseudocount to every entry.
A response taxon is centered by the explanatory features' log mean only, so
it is not a linear combination of the CLR features.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.settings import IngestConfig
from data_io.panel import TimeSeriesPanel
from data_io.tables import CountTable
from utils.exceptions import ConfigError, DataError

logger = logging.getLogger(__name__)


def _log_counts(counts, pseudocount: float) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    if pseudocount < 0:
        raise DataError(f"pseudocount must be >= 0, got {pseudocount}")
    if np.any(counts < 0):
        raise DataError("counts must be non-negative")
    shifted = counts + pseudocount
    if np.any(shifted <= 0):
        raise DataError("zero counts need a positive pseudocount before taking logs")
    return np.log(shifted)


def clr_transform(counts, pseudocount: float = 0.5) -> np.ndarray:
    """Centered log-ratio over the last axis"""
    logs = _log_counts(counts, pseudocount)
    return logs - logs.mean(axis=-1, keepdims=True)


def modified_clr_response(y_count, explanatory_counts, pseudocount: float = 0.5):
    """ln(y) minus the mean log of the explanatory counts (last axis)"""
    log_y = _log_counts(y_count, pseudocount)
    log_x = _log_counts(explanatory_counts, pseudocount)
    result = log_y - log_x.mean(axis=-1)
    return float(result) if np.ndim(result) == 0 else result


def missing_fractions(table: CountTable) -> np.ndarray:
    """Per-subject fraction of the time grid with no row"""
    return 1.0 - table.observed().mean(axis=1)


def absence_fractions(table: CountTable) -> np.ndarray:
    """Per-feature fraction of observed samples with a zero count"""
    observed = table.observed()
    samples = table.counts[observed]
    if samples.shape[0] == 0:
        return np.ones(len(table.feature_names))
    return (samples == 0).mean(axis=0)


def filter_missing(table: CountTable, config: IngestConfig,
                   keep_features: Sequence[str] = ()) -> Tuple[CountTable, Dict[str, List[str]]]:
    """
    Drop subjects missing more than sample_missing_threshold of the time grid,
    then features absent from more than feature_absence_threshold of the
    remaining samples. Features in keep_features are never dropped.
    Applying it twice equals applying it once.
    """
    config.validate()
    subject_missing = missing_fractions(table)
    drop_subjects = [i for i, fraction in enumerate(subject_missing) if fraction > config.sample_missing_threshold]
    after_subjects = table.drop(subjects=drop_subjects)

    absent = absence_fractions(after_subjects)
    protected = set(keep_features)
    drop_features = [
        j for j, fraction in enumerate(absent)
        if fraction > config.feature_absence_threshold and after_subjects.feature_names[j] not in protected
    ]
    filtered = after_subjects.drop(features=drop_features)

    report = {
        "dropped_subjects": [table.subject_ids[i] for i in drop_subjects],
        "dropped_features": [after_subjects.feature_names[j] for j in drop_features],
    }
    if report["dropped_subjects"]:
        logger.info(f"Dropped {len(drop_subjects)} subject(s) over {config.sample_missing_threshold:.0%} missing: "
                    f"{report['dropped_subjects']}")
    if report["dropped_features"]:
        logger.info(f"Dropped {len(drop_features)} feature(s) absent in over "
                    f"{config.feature_absence_threshold:.0%} of samples")
    if not filtered.subject_ids:
        raise DataError("No subjects left after missing-time filtering")
    if not filtered.feature_names:
        raise DataError("No features left after absence filtering")
    return filtered, report


def interpolate_missing(values: np.ndarray, time_index: Optional[Sequence] = None) -> np.ndarray:
    """
    Fill NaN rows of an (n, d) or (n,) array by linear interpolation along
    time; leading and trailing gaps take the nearest observed value.
    """
    values = np.asarray(values, dtype=np.float64)
    flat = values.ndim == 1
    frame = pd.DataFrame(values[:, np.newaxis] if flat else values)
    if frame.notna().any(axis=1).sum() == 0:
        raise DataError("cannot interpolate a series with no observed time points")
    if frame.isna().to_numpy().any():
        method = "linear"
        if time_index is not None and all(isinstance(t, (int, float, np.number)) for t in time_index):
            frame.index = pd.Index(np.asarray(time_index, dtype=np.float64))
            method = "index"
        # np.interp underneath clamps outside the observed range
        frame = frame.interpolate(method=method, limit_direction="both")
    filled = frame.to_numpy(dtype=np.float64)
    return filled[:, 0] if flat else filled


def build_panel(table: CountTable, config: IngestConfig) -> Tuple[TimeSeriesPanel, Dict[str, List[str]]]:
    """
    Filter, interpolate and transform a count table. Features become CLR
    values of the explanatory taxa; the response is either a taxon under the
    modified CLR or a numeric metadata column (optionally logged).
    """
    config.validate()
    if config.response_feature and config.response_feature not in table.feature_names:
        raise ConfigError(f"response_feature '{config.response_feature}' is not a table column")
    if config.response_column and config.response_column not in table.metadata:
        raise ConfigError(f"response_column '{config.response_column}' was not loaded as metadata")

    keep = [config.response_feature] if config.response_feature else []
    table, report = filter_missing(table, config, keep_features=keep)

    counts = np.stack([interpolate_missing(table.counts[i], table.time_index)
                       for i in range(len(table.subject_ids))])

    names = list(table.feature_names)
    explanatory = [j for j, name in enumerate(names) if name != config.response_feature]
    if not explanatory:
        raise DataError("No explanatory features besides the response")
    explanatory_counts = counts[:, :, explanatory]
    X = clr_transform(explanatory_counts, config.pseudocount)

    y = None
    if config.response_feature:
        response_counts = counts[:, :, names.index(config.response_feature)]
        y = modified_clr_response(response_counts, explanatory_counts, config.pseudocount)
    elif config.response_column:
        meta = table.metadata[config.response_column]
        y = np.stack([interpolate_missing(meta[i], table.time_index) for i in range(meta.shape[0])])
        if config.response_log:
            if np.any(y <= 0):
                raise DataError(f"response_log needs positive values in '{config.response_column}'")
            y = np.log(y)

    panel = TimeSeriesPanel(
        X=X,
        y=y,
        feature_names=[names[j] for j in explanatory],
        subject_ids=list(table.subject_ids),
        time_index=list(table.time_index),
    )
    panel.require_finite("ingested panel")
    logger.info(f"Built panel m={panel.m} n={panel.n} p={panel.p}"
                f"{' with response' if y is not None else ''}")
    return panel, report
