"""
Pipeline orchestration: one run, repeated runs and hyperparameter sweeps.

Run r of a master seed always uses derive_seed(master, "run", r), so adding
repetitions or sweep cells never changes the runs that already exist and
every sweep cell sees the same simulated data sets.
"""

import logging
import traceback
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from analytics.metrics import EvalMetrics, evaluate
from analytics.selection import SelectionReport, run_selection
from config.settings import RunConfig
from data_io.compositional import build_panel
from data_io.panel import TimeSeriesPanel
from data_io.reports import trajectories_frame
from data_io.tables import load_table, read_knockoffs, read_panel
from knockoffs.generator import KnockoffGenerator, KnockoffResult, knockoff_panel
from prediction.network import train_prediction_network
from prediction.statistics import KnockoffStatistics, compute_statistics
from simulation.factor_models import GroundTruth, simulate_panel
from simulation.presets import get_preset
from utils.exceptions import DataError, KnockoffSelectorError
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

RULES = ("knockoff", "knockoff+")


@dataclass
class RunResult:
    """Everything one pipeline run produced"""

    run: int
    seed: int
    status: str = "ok"
    feature_names: List[str] = field(default_factory=list)
    reports: Dict[str, SelectionReport] = field(default_factory=dict)
    statistics: Optional[KnockoffStatistics] = None
    metrics: Dict[str, EvalMetrics] = field(default_factory=dict)
    truth: Optional[Tuple[int, ...]] = None
    seeds: Dict[str, int] = field(default_factory=dict)
    trajectories: Optional[pd.DataFrame] = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def selected(self, rule: str = "knockoff+") -> List[int]:
        return list(self.reports[rule].selected) if rule in self.reports else []

    def metric_records(self) -> List[Dict]:
        records = []
        for rule in RULES:
            report = self.reports.get(rule)
            metrics = self.metrics.get(rule)
            records.append({
                "run": self.run,
                "seed": self.seed,
                "rule": rule,
                "status": self.status,
                "threshold": report.threshold if report else np.nan,
                "n_selected": len(report) if report else 0,
                "fdp": metrics.fdp if metrics else np.nan,
                "tdp": metrics.tdp if metrics else np.nan,
                "mfdr_term": metrics.mfdr_term if metrics else np.nan,
                "true_discoveries": metrics.true_discoveries if metrics else 0,
                "false_discoveries": metrics.false_discoveries if metrics else 0,
            })
        return records


def run_seed(config: RunConfig, run_index: int) -> int:
    return derive_seed(config.seed, "run", run_index)


def load_data(config: RunConfig, seed: int) -> Tuple[TimeSeriesPanel, Optional[GroundTruth]]:
    """Panel from a panel file, an abundance table, or the simulation preset"""
    if config.panel:
        return read_panel(config.panel), None
    if config.table:
        ingest = config.ingest_config()
        metadata = [ingest.response_column] if ingest.response_column else []
        table = load_table(config.table, metadata_columns=metadata)
        panel, _ = build_panel(table, ingest)
        return panel, None

    sim_config = get_preset(config.preset, **config.sim_overrides(), seed=derive_seed(seed, "sim"))
    return simulate_panel(sim_config)


def make_knockoffs(panel: TimeSeriesPanel, config: RunConfig, seed: int) -> Tuple[TimeSeriesPanel, List[KnockoffResult]]:
    generator = KnockoffGenerator(config.autoencoder_config(), seed=seed)
    results = generator.generate(panel)
    return knockoff_panel(panel, results), results


def fit_and_select(panel: TimeSeriesPanel, knockoffs: TimeSeriesPanel, config: RunConfig,
                   seed: int) -> Tuple[KnockoffStatistics, Dict[str, SelectionReport]]:
    """Train the prediction network, read statistics from its weights and threshold them"""
    y = panel.require_response()
    model = train_prediction_network(panel, knockoffs, y, config.prediction_config(),
                                     seed=derive_seed(seed, "prediction"))
    statistics = compute_statistics(model)
    return statistics, run_selection(statistics.W, config.q)


def run_single(config: RunConfig, run_index: int = 0) -> RunResult:
    """Data, knockoffs, statistics, selection and (for simulated data) metrics"""
    seed = run_seed(config, run_index)
    result = RunResult(run=run_index, seed=seed)
    result.seeds = {
        "run": seed,
        "sim": derive_seed(seed, "sim"),
        "autoencoder": derive_seed(seed, "autoencoder"),
        "prediction": derive_seed(seed, "prediction"),
    }
    logger.info(f"Run {run_index}: seed {seed}")

    panel, truth = load_data(config, seed)
    if config.knockoff_dir:
        knockoffs, _ = read_knockoffs(config.knockoff_dir, panel)
    else:
        knockoffs, results = make_knockoffs(panel, config, seed)
        result.seeds.update({f"noise_{r.subject_id}": r.seed for r in results})

    result.feature_names = list(panel.feature_names)
    result.statistics, result.reports = fit_and_select(panel, knockoffs, config, seed)
    result.trajectories = trajectories_frame(panel, result.reports)

    if truth is not None:
        result.truth = truth.S0
        for rule, report in result.reports.items():
            result.metrics[rule] = evaluate(report.selected, truth.S0, config.q, allow_empty_truth=True)
        plus = result.metrics["knockoff+"]
        logger.info(f"Run {run_index}: FDP+ {plus.fdp:.3f}, TDP+ {plus.tdp:.3f}, {plus.n_selected} selected")
    return result


def _run_worker(job: Tuple[RunConfig, int]) -> RunResult:
    config, run_index = job
    try:
        return run_single(config, run_index)
    except (KnockoffSelectorError, ArithmeticError, ValueError) as e:
        logger.error(f"Run {run_index} failed: {e}")
        logger.debug(traceback.format_exc())
        return RunResult(run=run_index, seed=run_seed(config, run_index), status="failed", error=str(e))


def run_jobs(jobs: List[Tuple[RunConfig, int]], workers: int = 1) -> List[RunResult]:
    """Run jobs on `workers` processes (in-process when 1); results keep job order"""
    n_jobs = max(1, min(workers, len(jobs)))
    return Parallel(n_jobs=n_jobs, verbose=0)(delayed(_run_worker)(job) for job in jobs)


def run_repeat(config: RunConfig) -> List[RunResult]:
    config.validate()
    logger.info(f"Repeating the pipeline {config.repetitions} time(s) with {config.workers} worker(s)")
    results = run_jobs([(config, r) for r in range(config.repetitions)], config.workers)
    failed = [r.run for r in results if not r.ok]
    if len(failed) == len(results):
        raise DataError(f"All {len(results)} runs failed; first error: {results[0].error}")
    if failed:
        logger.warning(f"{len(failed)} of {len(results)} runs failed: {failed}")
    return results


def summarize_runs(results: List[RunResult]) -> pd.DataFrame:
    """Empirical FDR/power (mean FDP/TDP) and mean mFDR term per rule over successful runs"""
    rows = []
    for rule in RULES:
        done = [r for r in results if r.ok]
        metrics = [r.metrics[rule] for r in done if rule in r.metrics]
        tdps = [m.tdp for m in metrics if not np.isnan(m.tdp)]
        rows.append({
            "rule": rule,
            "runs": len(done),
            "failed": len(results) - len(done),
            "fdr": float(np.mean([m.fdp for m in metrics])) if metrics else np.nan,
            "power": float(np.mean(tdps)) if tdps else np.nan,
            "mfdr": float(np.mean([m.mfdr_term for m in metrics])) if metrics else np.nan,
            "mean_selected": float(np.mean([len(r.reports[rule]) for r in done])) if done else np.nan,
        })
    return pd.DataFrame(rows)


def sweep_cells(config: RunConfig) -> List[Dict]:
    """Grid points as RunConfig field overrides"""
    if config.grid == "hyper":
        return [{"epochs_autoencoder": e, "epochs_prediction": e, "bottleneck": b}
                for e in config.epochs_grid for b in config.bottleneck_grid]
    if config.grid == "amplitude":
        p_values = config.p_grid or (config.p,)
        return [{"amplitude": float(a), "p": p} for p in p_values for a in config.amplitude_grid]
    return [{"m": int(m)} for m in config.subjects_grid]


def _cell_key(config: RunConfig, cell: Dict) -> Dict:
    if config.grid == "hyper":
        return {"epochs": cell["epochs_autoencoder"], "bottleneck": cell["bottleneck"]}
    if config.grid == "amplitude":
        p = cell["p"] if cell["p"] is not None else get_preset(config.preset).p
        return {"amplitude": cell["amplitude"], "p": p}
    return {"m": cell["m"]}


def run_sweep(config: RunConfig) -> Tuple[pd.DataFrame, List[Tuple[Dict, RunResult]]]:
    """
    Every grid cell runs config.repetitions pipelines. Run r shares its seed
    across cells. Returns the summary table (one row per cell and rule) and
    the raw (cell, result) pairs.
    """
    config.validate()
    if config.panel or config.table:
        raise DataError("sweep needs simulated data (known support); drop --panel/--table")
    cells = sweep_cells(config)
    jobs, keys = [], []
    for cell in cells:
        cell_config = config.updated(**cell).validate()
        for r in range(config.repetitions):
            jobs.append((cell_config, r))
            keys.append(_cell_key(config, cell))

    logger.info(f"Sweep '{config.grid}': {len(cells)} cell(s) x {config.repetitions} run(s) on {config.workers} worker(s)")
    results = run_jobs(jobs, config.workers)

    rows = []
    for cell in cells:
        key = _cell_key(config, cell)
        cell_results = [res for k, res in zip(keys, results) if k == key]
        summary = summarize_runs(cell_results)
        for record in summary.to_dict("records"):
            rows.append({"grid": config.grid, **key, **record})
    table = pd.DataFrame(rows)
    return table, list(zip(keys, results))
