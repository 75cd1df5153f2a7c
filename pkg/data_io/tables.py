"""
Delimited-text readers and writers.

Abundance tables and panels are long form: one row per (subject, time) with
a header naming the feature columns. Knockoff files hold one subject each,
preceded by `# key: value` provenance lines.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from data_io.panel import TimeSeriesPanel
from utils.exceptions import DataError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
SUBJECT_COLUMN = "subject"
TIME_COLUMN = "time"
RESPONSE_COLUMN = "response"
KNOCKOFF_PATTERN = "knockoffs_{index:03d}.csv"


@dataclass
class CountTable:
    """Raw counts on a subject x time grid; NaN marks a missing (subject, time) row"""

    counts: np.ndarray
    feature_names: List[str]
    subject_ids: List[str]
    time_index: List
    metadata: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.counts.shape

    def observed(self) -> np.ndarray:
        """(m, n) mask of rows present in the file"""
        return ~np.all(np.isnan(self.counts), axis=2)

    def drop(self, subjects: Sequence[int] = (), features: Sequence[int] = ()) -> "CountTable":
        keep_s = [i for i in range(len(self.subject_ids)) if i not in set(subjects)]
        keep_f = [j for j in range(len(self.feature_names)) if j not in set(features)]
        return replace(
            self,
            counts=self.counts[keep_s][:, :, keep_f],
            feature_names=[self.feature_names[j] for j in keep_f],
            subject_ids=[self.subject_ids[i] for i in keep_s],
            metadata={name: values[keep_s] for name, values in self.metadata.items()},
        )


def _sniff_delimiter(first_line: str, delimiter: Optional[str]) -> str:
    if delimiter:
        return delimiter
    return "\t" if "\t" in first_line else ","


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def _sorted_times(values: pd.Series) -> List:
    numeric = pd.to_numeric(values, errors="coerce")
    if numeric.notna().all():
        unique = np.unique(numeric.to_numpy())
        return [int(t) if float(t).is_integer() else float(t) for t in unique]
    return sorted(values.astype(str).unique())


def _time_keys(values: pd.Series, times: List) -> pd.Series:
    if times and not isinstance(times[0], str):
        return pd.to_numeric(values).map(lambda t: int(t) if float(t).is_integer() else float(t))
    return values.astype(str)


def load_table(path: str, delimiter: Optional[str] = None,
               metadata_columns: Sequence[str] = ()) -> CountTable:
    """
    Parse a headered table: subject id, time, then one column per feature.
    Columns named in metadata_columns are kept aside as numeric metadata.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise DataError(f"Table not found: {path}")

    lines = file_path.read_text().splitlines()
    header_line = next((no for no, line in enumerate(lines, start=1) if line.strip()), None)
    if header_line is None:
        raise DataError(f"{path}: file is empty")
    sep = _sniff_delimiter(lines[header_line - 1], delimiter)
    header = [token.strip() for token in lines[header_line - 1].split(sep)]
    if len(header) < 3:
        raise DataError(f"{path}:{header_line}: expected subject, time and at least one feature column")
    if all(_is_number(token) for token in header[2:]):
        raise DataError(f"{path}:{header_line}: missing header row (found numeric values where feature names belong)")

    try:
        df = pd.read_csv(file_path, sep=sep, dtype=str, skip_blank_lines=True, skipinitialspace=True)
    except pd.errors.ParserError as e:
        raise DataError(f"{path}: malformed row ({e})")
    df.columns = [str(column).strip() for column in df.columns]
    if df.columns.duplicated().any():
        raise DataError(f"{path}:{header_line}: duplicate column names {list(df.columns[df.columns.duplicated()])}")

    subject_col, time_col = df.columns[0], df.columns[1]
    missing_meta = [name for name in metadata_columns if name not in df.columns]
    if missing_meta:
        raise DataError(f"{path}: metadata column(s) not found: {missing_meta}")
    feature_cols = [c for c in df.columns[2:] if c not in set(metadata_columns)]
    if not feature_cols:
        raise DataError(f"{path}: no feature columns")

    # data line numbers, assuming no blank lines inside the table
    line_numbers = np.arange(len(df)) + header_line + 1

    if df[[subject_col, time_col]].isna().any(axis=None):
        bad = int(line_numbers[df[[subject_col, time_col]].isna().any(axis=1).to_numpy()][0])
        raise DataError(f"{path}:{bad}: missing subject or time value")

    values = df[feature_cols + list(metadata_columns)].apply(pd.to_numeric, errors="coerce")
    bad_cells = values.isna().to_numpy()
    if bad_cells.any():
        row, col = np.argwhere(bad_cells)[0]
        column = values.columns[col]
        raw = df[column].iloc[row]
        raise DataError(f"{path}:{int(line_numbers[row])}: non-numeric or missing value '{raw}' in column '{column}'")

    counts = values[feature_cols].to_numpy(dtype=np.float64)
    if np.any(counts < 0):
        row = int(np.argwhere(counts < 0)[0][0])
        raise DataError(f"{path}:{int(line_numbers[row])}: negative count")

    subject_keys = df[subject_col].astype(str)
    times = _sorted_times(df[time_col])
    time_keys = _time_keys(df[time_col], times)
    # "1" and "1.0" are the same time point
    duplicated = pd.DataFrame({"subject": subject_keys, "time": time_keys}).duplicated(keep="first").to_numpy()
    if duplicated.any():
        row = int(np.argmax(duplicated))
        raise DataError(
            f"{path}:{int(line_numbers[row])}: duplicate (subject, time) key "
            f"({df[subject_col].iloc[row]}, {df[time_col].iloc[row]})"
        )

    subjects = list(dict.fromkeys(subject_keys))
    subject_pos = {s: i for i, s in enumerate(subjects)}
    time_pos = {t: k for k, t in enumerate(times)}
    rows = subject_keys.map(subject_pos).to_numpy()
    cols = time_keys.map(time_pos).to_numpy()

    grid = np.full((len(subjects), len(times), len(feature_cols)), np.nan)
    grid[rows, cols] = counts
    metadata = {}
    for name in metadata_columns:
        meta = np.full((len(subjects), len(times)), np.nan)
        meta[rows, cols] = values[name].to_numpy(dtype=np.float64)
        metadata[name] = meta

    logger.info(f"Loaded {path}: {len(subjects)} subjects, {len(times)} time points, {len(feature_cols)} features")
    return CountTable(counts=grid, feature_names=feature_cols, subject_ids=subjects,
                      time_index=times, metadata=metadata)


def panel_to_frame(panel: TimeSeriesPanel) -> pd.DataFrame:
    m, n, p = panel.shape
    df = pd.DataFrame(panel.X.reshape(m * n, p), columns=panel.feature_names)
    df.insert(0, TIME_COLUMN, list(panel.time_index) * m)
    df.insert(0, SUBJECT_COLUMN, np.repeat(panel.subject_ids, n))
    if panel.y is not None:
        df[RESPONSE_COLUMN] = panel.y.reshape(m * n)
    return df


def write_panel(panel: TimeSeriesPanel, path: str) -> Path:
    """Long-form CSV with an optional trailing response column, full float precision"""
    reserved = {SUBJECT_COLUMN, TIME_COLUMN, RESPONSE_COLUMN} & set(panel.feature_names)
    if reserved:
        raise DataError(f"feature names clash with reserved columns: {sorted(reserved)}")
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    panel_to_frame(panel).to_csv(out, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote panel {panel.shape} to {out}")
    return out


def read_panel(path: str) -> TimeSeriesPanel:
    file_path = Path(path)
    if not file_path.exists():
        raise DataError(f"Panel file not found: {path}")
    df = pd.read_csv(file_path, dtype={SUBJECT_COLUMN: str})
    if list(df.columns[:2]) != [SUBJECT_COLUMN, TIME_COLUMN]:
        raise DataError(f"{path}: expected leading columns '{SUBJECT_COLUMN}', '{TIME_COLUMN}'")

    feature_names = [c for c in df.columns[2:] if c != RESPONSE_COLUMN]
    subjects = list(dict.fromkeys(df[SUBJECT_COLUMN]))
    groups = [df[df[SUBJECT_COLUMN] == s] for s in subjects]
    n = len(groups[0]) if groups else 0
    if not groups or any(len(g) != n for g in groups):
        raise DataError(f"{path}: subjects must share the same number of time points")

    time_index = groups[0][TIME_COLUMN].tolist()
    for subject, group in zip(subjects, groups):
        if group[TIME_COLUMN].tolist() != time_index:
            raise DataError(f"{path}: subject {subject} has a different time grid")

    X = np.stack([g[feature_names].to_numpy(dtype=np.float64) for g in groups])
    y = None
    if RESPONSE_COLUMN in df.columns:
        y = np.stack([g[RESPONSE_COLUMN].to_numpy(dtype=np.float64) for g in groups])
    panel = TimeSeriesPanel(X=X, y=y, feature_names=feature_names, subject_ids=subjects, time_index=time_index)
    panel.require_finite(str(path))
    logger.info(f"Read panel {panel.shape} from {path}")
    return panel


def write_knockoffs(results, panel: TimeSeriesPanel, directory: str) -> List[Path]:
    """One CSV per subject: provenance comment lines, then time + knockoff features"""
    out_dir = Path(directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for index, result in enumerate(results):
        path = out_dir / KNOCKOFF_PATTERN.format(index=index)
        df = pd.DataFrame(result.X_tilde, columns=panel.feature_names)
        df.insert(0, TIME_COLUMN, panel.time_index)
        with open(path, "w", newline="") as handle:
            handle.write(f"# subject: {result.subject_id}\n")
            handle.write(f"# theta_hat: {result.theta_hat!r}\n")
            handle.write(f"# seed: {result.seed}\n")
            df.to_csv(handle, index=False, float_format=FLOAT_FORMAT)
        paths.append(path)
    logger.info(f"Wrote {len(paths)} knockoff file(s) to {out_dir}")
    return paths


def _read_provenance(path: Path) -> Tuple[Dict[str, str], int]:
    info = {}
    skip = 0
    with open(path) as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition(":")
            info[key.strip()] = value.strip()
            skip += 1
    return info, skip


def read_knockoffs(directory: str, panel: TimeSeriesPanel) -> Tuple[TimeSeriesPanel, pd.DataFrame]:
    """Knockoff panel aligned to `panel`'s subjects, plus a (subject, theta_hat, seed) frame"""
    in_dir = Path(directory)
    paths = sorted(in_dir.glob("knockoffs_*.csv"))
    if not paths:
        raise DataError(f"No knockoff files in {directory}")

    by_subject = {}
    rows = []
    for path in paths:
        info, skip = _read_provenance(path)
        if "subject" not in info:
            raise DataError(f"{path}: missing '# subject:' line")
        df = pd.read_csv(path, skiprows=skip)
        missing = [name for name in panel.feature_names if name not in df.columns]
        if missing:
            raise DataError(f"{path}: knockoff columns missing for {missing[:5]}")
        by_subject[info["subject"]] = df[panel.feature_names].to_numpy(dtype=np.float64)
        rows.append({"subject": info["subject"], "theta_hat": float(info.get("theta_hat", "nan")),
                     "seed": int(info.get("seed", -1))})

    absent = [s for s in panel.subject_ids if str(s) not in by_subject]
    if absent:
        raise DataError(f"No knockoffs for subject(s) {absent}")
    X_tilde = np.stack([by_subject[str(s)] for s in panel.subject_ids])
    if X_tilde.shape != panel.shape:
        raise DataError(f"Knockoffs {X_tilde.shape} do not match panel {panel.shape}")
    knockoffs = panel.with_features(X_tilde)
    knockoffs.require_finite("knockoffs")
    return knockoffs, pd.DataFrame(rows)


def write_truth(beta: np.ndarray, support: Sequence[int], feature_names: List[str], path: str) -> Path:
    """Coefficients and support of a simulated panel"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame({
        "index": np.arange(len(beta)),
        "feature": feature_names,
        "beta": beta,
        "signal": np.isin(np.arange(len(beta)), list(support)),
    })
    df.to_csv(out, index=False, float_format=FLOAT_FORMAT)
    return out


def read_truth(path: str) -> Tuple[int, ...]:
    file_path = Path(path)
    if not file_path.exists():
        raise DataError(f"Truth file not found: {path}")
    df = pd.read_csv(file_path)
    if "index" not in df.columns or "signal" not in df.columns:
        raise DataError(f"{path}: expected 'index' and 'signal' columns")
    return tuple(int(j) for j in df.loc[df["signal"].astype(bool), "index"])
