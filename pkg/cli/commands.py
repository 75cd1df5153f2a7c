"""
Command-line entry points.

    simulate | knockoffs | select | pipeline | repeat | sweep | report

Settings resolve as defaults < environment < --config file < flags. Staged
commands (simulate, knockoffs, select) with the same seed reproduce run 0
of `pipeline`.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from analytics.metrics import aggregate_runs, evaluate
from cli import runner
from config.settings import RunConfig, coerce_value, load_config_file
from data_io import reports
from data_io.tables import read_knockoffs, read_truth, write_knockoffs, write_panel, write_truth
from knockoffs.generator import exchangeability_diagnostic
from simulation.factor_models import simulate_panel
from simulation.presets import get_preset
from utils.exceptions import ConfigError, KnockoffSelectorError
from utils.logger import setup_logger
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

COMMANDS = ("simulate", "knockoffs", "select", "pipeline", "repeat", "sweep", "report")
REPEAT_DEFAULT_REPETITIONS = 200

# flag -> (RunConfig field, type, help)
_PIPELINE_FLAGS = [
    ("--seed", int, "master seed"),
    ("--q", float, "target FDR level in (0, 1)"),
    ("--epochs-autoencoder", int, "autoencoder training epochs"),
    ("--epochs-prediction", int, "prediction network training epochs"),
    ("--bottleneck", int, "autoencoder bottleneck width"),
    ("--layers-per-side", int, "stacked LSTM layers in encoder and decoder"),
    ("--dense-units", int, "prediction network dense width"),
    ("--lstm-units", int, "prediction network LSTM units"),
    ("--learning-rate", float, "Adam learning rate"),
    ("--repetitions", int, "independent runs (repeat, sweep)"),
    ("--workers", int, "worker processes (env TSKO_WORKERS)"),
    ("--out-dir", str, "output directory (env TSKO_OUT_DIR)"),
    ("--log-every", int, "epochs between training log lines"),
]
_SIM_FLAGS = [
    ("--preset", str, "simulation preset name"),
    ("--m", int, "subjects"),
    ("--n", int, "time points"),
    ("--p", int, "features"),
    ("--s", int, "true signals"),
    ("--amplitude", float, "signal amplitude A"),
    ("--noise-sd", float, "response noise standard deviation"),
]
_DATA_FLAGS = [
    ("--table", str, "abundance table (CSV/TSV: subject, time, features...)"),
    ("--panel", str, "panel CSV written by `simulate`"),
    ("--knockoff-dir", str, "directory of knockoff files written by `knockoffs`"),
    ("--truth", str, "truth CSV written by `simulate` (enables FDP/TDP in `select`)"),
    ("--sample-missing-threshold", float, "drop subjects missing more than this fraction of time points"),
    ("--feature-absence-threshold", float, "drop features absent in more than this fraction of samples"),
    ("--pseudocount", float, "added to counts before logs"),
    ("--response-feature", str, "taxon used as response (modified CLR)"),
    ("--response-column", str, "numeric metadata column used as response"),
]
_SWEEP_FLAGS = [
    ("--grid", str, "hyper | amplitude | subjects"),
    ("--epochs-grid", str, "comma-separated epochs (hyper)"),
    ("--bottleneck-grid", str, "comma-separated bottlenecks (hyper)"),
    ("--amplitude-grid", str, "comma-separated amplitudes (amplitude)"),
    ("--p-grid", str, "comma-separated feature counts (amplitude)"),
    ("--subjects-grid", str, "comma-separated subject counts (subjects)"),
]
_SWITCHES = [
    ("batch_norm", "batch normalization after the dense layer"),
    ("standardize_response", "z-score the response before training"),
    ("confounders", "add latent confounders to the response"),
    ("redraw_loadings", "draw new loadings per subject"),
    ("response_log", "log-transform a metadata response"),
]


def _field(flag: str) -> str:
    return flag.lstrip("-").replace("-", "_")


def _add_flags(parser: argparse.ArgumentParser, flags):
    for flag, kind, help_text in flags:
        parser.add_argument(flag, dest=_field(flag), type=kind,
                            default=argparse.SUPPRESS, help=help_text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsko",
        description="FDR-controlled feature selection for longitudinal time series with LSTM knockoffs",
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (env TSKO_LOG_LEVEL)")
    parser.add_argument("--log-file", default=None, help="also log to this file (under data/logs/ if bare)")
    sub = parser.add_subparsers(dest="command", required=True)

    helps = {
        "simulate": "simulate a panel from a preset and write panel.csv and truth.csv",
        "knockoffs": "train the autoencoder and write per-subject knockoff files",
        "select": "train the prediction network on a panel and its knockoffs, then select",
        "pipeline": "simulate or load data, build knockoffs, select, report (one run)",
        "repeat": "independent pipeline runs with derived seeds and selection frequencies",
        "sweep": "grid over epochs x bottleneck, amplitude x p, or subjects",
        "report": "re-render figures from the CSVs in an output directory",
    }
    for name in COMMANDS:
        command = sub.add_parser(name, help=helps[name])
        command.add_argument("--config", default=None, help="key = value settings file")
        _add_flags(command, _PIPELINE_FLAGS + _SIM_FLAGS + _DATA_FLAGS + _SWEEP_FLAGS)
        for switch, help_text in _SWITCHES:
            flag = switch.replace("_", "-")
            command.add_argument(f"--{flag}", dest=switch, action="store_true", default=argparse.SUPPRESS,
                                 help=help_text)
            command.add_argument(f"--no-{flag}", dest=switch, action="store_false", default=argparse.SUPPRESS)
        if name == "knockoffs":
            command.add_argument("--diagnose", action="store_true", help="write exchangeability diagnostics")
        if name != "report":
            command.add_argument("--manifest", default=None, help="re-execute the run recorded in a manifest.json")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, environment, config file and flags, in increasing precedence"""
    manifest = getattr(args, "manifest", None)
    if manifest:
        config = RunConfig.from_dict(reports.read_manifest(manifest)["config"])
    else:
        config = RunConfig(repetitions=REPEAT_DEFAULT_REPETITIONS) if args.command == "repeat" else RunConfig()
    if getattr(args, "config", None):
        config = load_config_file(args.config, base=config)

    defaults = config.to_dict()
    changes = {}
    for name, value in vars(args).items():
        if name not in defaults:
            continue
        if name.endswith("_grid") and isinstance(value, str):
            value = coerce_value(name, value, getattr(config, name))
        changes[name] = value
    return config.updated(**changes).validate()


def _write_selection_outputs(result: runner.RunResult, config: RunConfig, out: Path,
                             extra: Optional[Dict] = None) -> Dict[str, Path]:
    metrics = reports.metrics_frame(result.metric_records())
    stats = reports.statistics_frame(result.statistics, result.feature_names, result.reports)
    selected = reports.selected_frame(result.reports, result.feature_names)
    written = reports.write_report(str(out), metrics=metrics, statistics=stats, selected=selected,
                                   trajectories=result.trajectories)
    written["manifest"] = reports.write_manifest(out / reports.MANIFEST_FILE, config, result.seeds, extra)
    return written


def _log_selection(result: runner.RunResult):
    for rule, report in result.reports.items():
        names = [result.feature_names[j] for j in report.selected]
        line = f"{rule}: T={report.threshold:.6g}, {len(names)} selected {names[:20]}"
        metrics = result.metrics.get(rule)
        if metrics is not None:
            line += f", FDP={metrics.fdp:.3f}, TDP={metrics.tdp:.3f}"
        logger.info(line)


def cmd_simulate(config: RunConfig, args) -> int:
    seed = runner.run_seed(config, 0)
    sim_config = get_preset(config.preset, **config.sim_overrides(), seed=derive_seed(seed, "sim"))
    panel, truth = simulate_panel(sim_config)
    out = Path(config.out_dir)
    write_panel(panel, str(out / "panel.csv"))
    write_truth(truth.beta, truth.S0, panel.feature_names, str(out / "truth.csv"))
    reports.write_manifest(out / reports.MANIFEST_FILE, config, {"run": seed, "sim": sim_config.seed},
                           {"simulation": sim_config.to_dict()})
    logger.info(f"Simulated {config.preset} {panel.shape}; signals at {list(truth.S0)}")
    return 0


def cmd_knockoffs(config: RunConfig, args) -> int:
    seed = runner.run_seed(config, 0)
    panel, _ = runner.load_data(config, seed)
    _, results = runner.make_knockoffs(panel, config, seed)
    out = Path(config.out_dir)
    write_knockoffs(results, panel, str(out / "knockoffs"))
    seeds = {"run": seed, "autoencoder": derive_seed(seed, "autoencoder")}
    seeds.update({f"noise_{r.subject_id}": r.seed for r in results})

    extra = {}
    if getattr(args, "diagnose", False):
        features, summary = exchangeability_diagnostic(panel, results)
        reports.write_csv(features, out / "diagnostics.csv")
        reports.write_csv(pd.DataFrame([summary]), out / "diagnostics_summary.csv")
        extra["diagnostics"] = summary
        if max(summary["max_cross_gap"], summary["max_within_gap"]) > summary["tolerance"]:
            logger.warning("Exchangeability gaps exceed the Monte Carlo tolerance")
    reports.write_manifest(out / reports.MANIFEST_FILE, config, seeds, extra)
    return 0


def cmd_select(config: RunConfig, args) -> int:
    if not config.knockoff_dir:
        raise ConfigError("select needs --knockoff-dir (run `knockoffs` first)")
    seed = runner.run_seed(config, 0)
    panel, truth = runner.load_data(config, seed)
    knockoffs, _ = read_knockoffs(config.knockoff_dir, panel)

    result = runner.RunResult(run=0, seed=seed, feature_names=list(panel.feature_names),
                              seeds={"run": seed, "prediction": derive_seed(seed, "prediction")})
    result.statistics, result.reports = runner.fit_and_select(panel, knockoffs, config, seed)
    result.trajectories = reports.trajectories_frame(panel, result.reports)
    support = truth.S0 if truth is not None else (read_truth(config.truth) if config.truth else None)
    if support is not None:
        result.truth = tuple(support)
        for rule, report in result.reports.items():
            result.metrics[rule] = evaluate(report.selected, support, config.q, allow_empty_truth=True)
    _log_selection(result)
    _write_selection_outputs(result, config, Path(config.out_dir))
    return 0


def cmd_pipeline(config: RunConfig, args) -> int:
    result = runner.run_single(config, 0)
    _log_selection(result)
    _write_selection_outputs(result, config, Path(config.out_dir),
                             {"truth": list(result.truth) if result.truth is not None else None})
    return 0


def cmd_repeat(config: RunConfig, args) -> int:
    results = runner.run_repeat(config)
    done = [r for r in results if r.ok]
    records = [record for r in results for record in r.metric_records()]
    frequencies = aggregate_runs([r.selected("knockoff+") for r in done], feature_names=done[0].feature_names)
    summary = runner.summarize_runs(results)

    out = Path(config.out_dir)
    reports.write_report(str(out), metrics=reports.metrics_frame(records), frequencies=frequencies)
    reports.write_csv(summary, out / "summary.csv")
    reports.write_manifest(out / reports.MANIFEST_FILE, config,
                           {f"run_{r.run}": r.seed for r in results},
                           {"failed_runs": [r.run for r in results if not r.ok]})
    for row in summary.to_dict("records"):
        logger.info(f"{row['rule']}: {row['runs']} runs, FDR {row['fdr']:.3f}, power {row['power']:.3f}, "
                    f"mean |S| {row['mean_selected']:.2f}")
    return 0


def cmd_sweep(config: RunConfig, args) -> int:
    table, pairs = runner.run_sweep(config)
    records = []
    for key, result in pairs:
        for record in result.metric_records():
            records.append({**key, **record})
    out = Path(config.out_dir)
    reports.write_report(str(out), sweep=table)
    reports.write_csv(pd.DataFrame(records), out / "sweep_runs.csv")
    reports.write_manifest(out / reports.MANIFEST_FILE, config,
                           {f"run_{r}": runner.run_seed(config, r) for r in range(config.repetitions)})
    logger.info(f"Sweep table with {len(table)} rows written to {out}")
    return 0


def cmd_report(config: RunConfig, args) -> int:
    figures = reports.render_figures(config.out_dir)
    if not figures:
        logger.warning(f"No result CSVs found in {config.out_dir}")
    return 0


HANDLERS = {
    "simulate": cmd_simulate,
    "knockoffs": cmd_knockoffs,
    "select": cmd_select,
    "pipeline": cmd_pipeline,
    "repeat": cmd_repeat,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse, run, and map errors to exit codes (2 config, 3 data, 4 numeric, 1 other)"""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logger(level=args.log_level, log_file=args.log_file)

    try:
        config = resolve_config(args)
        return HANDLERS[args.command](config, args)
    except KnockoffSelectorError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in '{args.command}': {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
