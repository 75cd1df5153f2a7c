"""
Result artifacts: CSV tables, the run manifest and their figures.

CSVs are written with a fixed float format and row order so identical
inputs give byte-identical files.
"""

import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from analytics.metrics import FrequencyReport
from analytics.selection import SelectionReport
from config.settings import RunConfig
from data_io import plots
from data_io.panel import TimeSeriesPanel
from data_io.tables import FLOAT_FORMAT, RESPONSE_COLUMN, SUBJECT_COLUMN, TIME_COLUMN
from prediction.statistics import KnockoffStatistics
from utils.exceptions import ConfigError, DataError

logger = logging.getLogger(__name__)

TOP_FEATURES = 3

METRIC_COLUMNS = [
    "run", "seed", "rule", "status", "threshold", "n_selected",
    "fdp", "tdp", "mfdr_term", "true_discoveries", "false_discoveries",
]

METRICS_FILE = "metrics.csv"
SELECTED_FILE = "selected.csv"
STATISTICS_FILE = "statistics.csv"
FREQUENCIES_FILE = "frequencies.csv"
SWEEP_FILE = "sweep.csv"
TRAJECTORIES_FILE = "trajectories.csv"
MANIFEST_FILE = "manifest.json"


def write_csv(df: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def metrics_frame(records: List[Dict[str, Any]]) -> pd.DataFrame:
    """Per-run metric rows in a fixed column and row order"""
    df = pd.DataFrame(records, columns=METRIC_COLUMNS)
    if df.empty:
        return df
    return df.sort_values(["run", "rule"], kind="mergesort").reset_index(drop=True)


def statistics_frame(stats: KnockoffStatistics, feature_names: List[str],
                     reports: Optional[Dict[str, SelectionReport]] = None) -> pd.DataFrame:
    """Z, Z_tilde, W per feature, ranked by W descending"""
    df = stats.to_frame(feature_names)
    df.insert(0, "index", np.arange(len(df)))
    for rule, report in (reports or {}).items():
        column = "selected_plus" if report.plus else "selected"
        df[column] = df["index"].isin(report.selected)
    return df.sort_values("W", ascending=False, kind="mergesort").reset_index(drop=True)


def selected_frame(reports: Dict[str, SelectionReport], feature_names: List[str]) -> pd.DataFrame:
    rows = []
    for rule in sorted(reports):
        report = reports[rule]
        for j in report.selected:
            rows.append({"rule": rule, "index": j, "feature": feature_names[j], "W": float(report.W[j]),
                         "threshold": report.threshold})
    return pd.DataFrame(rows, columns=["rule", "index", "feature", "W", "threshold"])


def trajectories_frame(panel: TimeSeriesPanel, reports: Dict[str, SelectionReport],
                       top: int = TOP_FEATURES) -> Optional[pd.DataFrame]:
    """
    Response and the `top` highest-W selected features, one row per
    (subject, time). Features come from the knockoff+ selection, or the
    knockoff one when knockoff+ is empty; None when neither selects.
    """
    report = reports.get("knockoff+")
    if report is None or not len(report):
        report = reports.get("knockoff")
    if report is None or not len(report):
        return None

    chosen = sorted(report.selected, key=lambda j: (-float(report.W[j]), j))[:top]
    m, n, _ = panel.shape
    df = pd.DataFrame({
        SUBJECT_COLUMN: np.repeat(panel.subject_ids, n),
        TIME_COLUMN: list(panel.time_index) * m,
        RESPONSE_COLUMN: panel.y.reshape(m * n) if panel.y is not None else np.nan,
    })
    for j in chosen:
        df[panel.feature_names[j]] = panel.X[:, :, j].reshape(m * n)
    return df


def write_manifest(path: Path, config: RunConfig, seeds: Dict[str, Any],
                   extra: Optional[Dict[str, Any]] = None) -> Path:
    """JSON record of the full config and every derived seed"""
    payload = {"config": config.to_dict(), "seeds": seeds}
    if extra:
        payload.update(extra)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    return path


def read_manifest(path: str) -> Dict[str, Any]:
    manifest_path = Path(path)
    if not manifest_path.exists():
        raise ConfigError(f"Manifest not found: {path}")
    try:
        with open(manifest_path) as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Manifest {path} is not valid JSON: {e}")
    if "config" not in payload:
        raise ConfigError(f"Manifest {path} has no 'config' section")
    return payload


def write_report(out_dir: str, metrics: Optional[pd.DataFrame] = None,
                 statistics: Optional[pd.DataFrame] = None,
                 selected: Optional[pd.DataFrame] = None,
                 frequencies: Optional[FrequencyReport] = None,
                 sweep: Optional[pd.DataFrame] = None,
                 trajectories: Optional[pd.DataFrame] = None,
                 figures: bool = True) -> Dict[str, Path]:
    """Write whichever tables are given, then render their figures"""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    written = {}
    if metrics is not None:
        written["metrics"] = write_csv(metrics, root / METRICS_FILE)
    if statistics is not None:
        written["statistics"] = write_csv(statistics, root / STATISTICS_FILE)
    if selected is not None:
        written["selected"] = write_csv(selected, root / SELECTED_FILE)
    if frequencies is not None:
        written["frequencies"] = write_csv(frequencies.to_frame(), root / FREQUENCIES_FILE)
        written["histogram"] = write_csv(frequencies.histogram(), root / "frequency_histogram.csv")
    if sweep is not None:
        written["sweep"] = write_csv(sweep, root / SWEEP_FILE)
    if trajectories is not None:
        written["trajectories"] = write_csv(trajectories, root / TRAJECTORIES_FILE)
    logger.info(f"Wrote {len(written)} table(s) to {root}")

    if figures:
        written.update(render_figures(root))
    return written


def render_figures(out_dir: str) -> Dict[str, Path]:
    """Build figures from whatever result CSVs exist in out_dir"""
    root = Path(out_dir)
    if not root.is_dir():
        raise DataError(f"Output directory not found: {out_dir}")
    figures = {}

    stats_path = root / STATISTICS_FILE
    if stats_path.exists():
        stats = pd.read_csv(stats_path).sort_values("index")
        threshold = None
        selected_path = root / SELECTED_FILE
        if selected_path.exists():
            selected = pd.read_csv(selected_path)
            plus = selected[selected["rule"] == "knockoff+"]
            threshold = float(plus["threshold"].iloc[0]) if len(plus) else None
        figures["statistics_plot"] = plots.save_figure(
            plots.statistics_figure(stats, threshold), root / "statistics")

    freq_path = root / FREQUENCIES_FILE
    hist_path = root / "frequency_histogram.csv"
    if freq_path.exists() and hist_path.exists():
        frequencies = pd.read_csv(freq_path)
        histogram = pd.read_csv(hist_path)
        runs = int(round(histogram["upper"].max() - 0.5))
        figures["histogram_plot"] = plots.save_figure(
            plots.frequency_histogram(histogram, runs), root / "frequency_histogram")
        figures["top_plot"] = plots.save_figure(plots.top_frequencies_figure(frequencies), root / "top_features")

    trajectories_path = root / TRAJECTORIES_FILE
    if trajectories_path.exists():
        figures.update(_trajectory_figures(pd.read_csv(trajectories_path, dtype={SUBJECT_COLUMN: str}), root))

    sweep_path = root / SWEEP_FILE
    if sweep_path.exists():
        figures.update(_sweep_figures(pd.read_csv(sweep_path), root))

    logger.info(f"Rendered {len(figures)} figure(s) in {root}")
    return figures


def _trajectory_figures(trajectories: pd.DataFrame, root: Path) -> Dict[str, Path]:
    """One figure per subject, named trajectory_<subject>"""
    features = [c for c in trajectories.columns if c not in (SUBJECT_COLUMN, TIME_COLUMN, RESPONSE_COLUMN)]
    figures = {}
    for subject, frame in trajectories.groupby(SUBJECT_COLUMN, sort=False):
        name = "trajectory_" + re.sub(r"[^A-Za-z0-9_.-]", "_", str(subject))
        figures[name] = plots.save_figure(
            plots.trajectories_figure(frame, features, str(subject), response=RESPONSE_COLUMN), root / name)
    return figures

def _sweep_figures(sweep: pd.DataFrame, root: Path) -> Dict[str, Path]:
    figures = {}
    grid = sweep["grid"].iloc[0] if len(sweep) else None
    for rule, suffix in (("knockoff+", "_plus"), ("knockoff", "")):
        frame = sweep[sweep["rule"] == rule]
        if frame.empty:
            continue
        label = "+" if suffix else ""
        if grid == "hyper":
            for value in ("power", "fdr"):
                name = f"heatmap_{value}{suffix}"
                figures[name] = plots.save_figure(
                    plots.heatmap_figure(frame, "epochs", "bottleneck", value,
                                         f"{value.upper()}{label}: epochs x bottleneck"),
                    root / name)
        elif grid == "amplitude":
            name = f"amplitude{suffix}"
            figures[name] = plots.save_figure(
                plots.lines_figure(frame, "amplitude", ["power", "fdr"], group="p",
                                   title=f"FDR{label} and power{label} vs amplitude"),
                root / name)
        elif grid == "subjects":
            name = f"subjects{suffix}"
            figures[name] = plots.save_figure(
                plots.lines_figure(frame, "m", ["power", "fdr"],
                                   title=f"FDR{label} and power{label} vs number of subjects"),
                root / name)
    return figures
