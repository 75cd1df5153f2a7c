import json

import numpy as np
import plotly.graph_objects as go
import pandas as pd
import pytest

from analytics.metrics import EvalMetrics
from analytics.selection import SelectionReport
from cli import commands, runner
from config.settings import RunConfig, coerce_value, load_config_file
from utils.exceptions import ConfigError, DataError, NumericError

TINY = [
    "--preset", "desk-linear-linear", "--n", "15", "--p", "5", "--s", "2",
    "--epochs-autoencoder", "2", "--epochs-prediction", "2", "--bottleneck", "2",
    "--dense-units", "3", "--lstm-units", "2", "--workers", "1",
]


@pytest.fixture(autouse=True)
def stub_image_export(monkeypatch):
    monkeypatch.setattr(go.Figure, "write_image", lambda self, path, **kwargs: open(path, "w").close())


def run_cli(*argv):
    return commands.main(list(argv))


def read_bytes(directory, *names):
    return {name: (directory / name).read_bytes() for name in names}


def test_bad_q_exits_with_config_code(tmp_path):
    assert run_cli("pipeline", "--q", "1.5", "--out-dir", str(tmp_path)) == 2


def test_missing_panel_exits_with_data_code(tmp_path):
    assert run_cli("pipeline", "--panel", str(tmp_path / "missing.csv"), "--out-dir", str(tmp_path)) == 3


def test_select_without_knockoffs_is_a_config_error(tmp_path):
    assert run_cli("select", "--panel", "panel.csv", "--out-dir", str(tmp_path)) == 2


def test_error_classes_map_to_exit_codes(tmp_path, monkeypatch):
    def numeric(config, args):
        raise NumericError("loss diverged")

    def unexpected(config, args):
        raise RuntimeError("boom")

    monkeypatch.setitem(commands.HANDLERS, "report", numeric)
    assert run_cli("report", "--out-dir", str(tmp_path)) == 4
    monkeypatch.setitem(commands.HANDLERS, "report", unexpected)
    assert run_cli("report", "--out-dir", str(tmp_path)) == 1


def test_unknown_config_file_key_exits_2(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("q = 0.1\nnot_a_key = 3\n")
    assert run_cli("pipeline", "--config", str(path), "--out-dir", str(tmp_path)) == 2


def test_pipeline_writes_results(tmp_path):
    out = tmp_path / "out"
    assert run_cli("pipeline", *TINY, "--out-dir", str(out)) == 0
    for name in ("metrics.csv", "statistics.csv", "selected.csv", "manifest.json", "statistics.svg"):
        assert (out / name).exists(), name

    statistics = pd.read_csv(out / "statistics.csv")
    assert len(statistics) == 5
    assert list(statistics["W"]) == sorted(statistics["W"], reverse=True)
    np.testing.assert_allclose(statistics["W"], statistics["Z"] ** 2 - statistics["Z_tilde"] ** 2,
                               rtol=1e-12, atol=1e-15)

    metrics = pd.read_csv(out / "metrics.csv")
    assert list(metrics["rule"]) == ["knockoff", "knockoff+"]
    assert (metrics["status"] == "ok").all()

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["n"] == 15
    assert set(manifest["seeds"]) >= {"run", "sim", "autoencoder", "prediction", "noise_S1"}
    assert len(manifest["truth"]) == 2

    selected = pd.read_csv(out / "selected.csv")
    assert (out / "trajectories.csv").exists() == (len(selected) > 0)
    if len(selected):
        trajectories = pd.read_csv(out / "trajectories.csv")
        assert list(trajectories.columns[:3]) == ["subject", "time", "response"]
        assert set(trajectories.columns[3:]) <= set(selected["feature"])
        assert (out / "trajectory_S1.svg").exists()


def test_report_draws_trajectories_from_table(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    pd.DataFrame({"subject": ["S1", "S1", "S2", "S2"], "time": [1, 2, 1, 2],
                  "response": [0.5, 0.7, 0.1, 0.2], "X3": [1.0, 2.0, 3.0, 4.0]}).to_csv(
        out / "trajectories.csv", index=False)
    assert run_cli("report", "--out-dir", str(out)) == 0
    assert (out / "trajectory_S1.svg").exists()
    assert (out / "trajectory_S2.svg").exists()


def test_pipeline_rerun_from_manifest_is_byte_identical(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    assert run_cli("pipeline", *TINY, "--seed", "11", "--out-dir", str(first)) == 0
    assert run_cli("pipeline", "--manifest", str(first / "manifest.json"), "--out-dir", str(second)) == 0
    names = ("metrics.csv", "statistics.csv", "selected.csv")
    assert read_bytes(first, *names) == read_bytes(second, *names)


def test_repeat_rerun_from_manifest_is_byte_identical(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    assert run_cli("repeat", *TINY, "--seed", "4", "--repetitions", "2", "--out-dir", str(first)) == 0
    assert run_cli("repeat", "--manifest", str(first / "manifest.json"), "--out-dir", str(second)) == 0
    names = ("metrics.csv", "frequencies.csv", "summary.csv")
    assert read_bytes(first, *names) == read_bytes(second, *names)
    assert json.loads((second / "manifest.json").read_text())["seeds"] == \
        json.loads((first / "manifest.json").read_text())["seeds"]


def test_staged_reruns_from_manifest(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    assert run_cli("simulate", *TINY, "--seed", "6", "--out-dir", str(first)) == 0
    assert run_cli("simulate", "--manifest", str(first / "manifest.json"), "--out-dir", str(second)) == 0
    assert read_bytes(first, "panel.csv", "truth.csv") == read_bytes(second, "panel.csv", "truth.csv")


@pytest.mark.parametrize("command", ["simulate", "knockoffs", "select", "pipeline", "repeat", "sweep"])
def test_manifest_flag_on_every_writing_command(command):
    args = commands.build_parser().parse_args([command, "--manifest", "manifest.json"])
    assert args.manifest == "manifest.json"


def test_staged_commands_reproduce_pipeline(tmp_path):
    staged, whole = tmp_path / "staged", tmp_path / "whole"
    assert run_cli("simulate", *TINY, "--seed", "5", "--out-dir", str(staged)) == 0
    assert (staged / "truth.csv").exists()
    assert run_cli("knockoffs", *TINY, "--seed", "5", "--panel", str(staged / "panel.csv"),
                   "--out-dir", str(staged), "--diagnose") == 0
    assert (staged / "knockoffs" / "knockoffs_000.csv").exists()
    assert (staged / "diagnostics_summary.csv").exists()
    assert run_cli("select", *TINY, "--seed", "5", "--panel", str(staged / "panel.csv"),
                   "--knockoff-dir", str(staged / "knockoffs"), "--truth", str(staged / "truth.csv"),
                   "--out-dir", str(staged)) == 0

    assert run_cli("pipeline", *TINY, "--seed", "5", "--out-dir", str(whole)) == 0
    names = ("statistics.csv", "selected.csv", "metrics.csv")
    assert read_bytes(staged, *names) == read_bytes(whole, *names)


def test_repeat_frequencies(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    for out in (first, second):
        assert run_cli("repeat", *TINY, "--repetitions", "3", "--out-dir", str(out)) == 0

    manifest = json.loads((first / "manifest.json").read_text())
    seeds = [manifest["seeds"][f"run_{r}"] for r in range(3)]
    assert len(set(seeds)) == 3
    assert manifest["failed_runs"] == []

    frequencies = pd.read_csv(first / "frequencies.csv")
    assert len(frequencies) == 5
    assert list(frequencies["count"]) == sorted(frequencies["count"], reverse=True)
    assert frequencies["count"].max() <= 3
    assert read_bytes(first, "frequencies.csv", "metrics.csv") == read_bytes(second, "frequencies.csv", "metrics.csv")

    summary = pd.read_csv(first / "summary.csv")
    assert list(summary["rule"]) == ["knockoff", "knockoff+"]
    assert (summary["runs"] == 3).all()


def test_sweep_hyper_grid(tmp_path):
    out = tmp_path / "sweep"
    assert run_cli("sweep", *TINY, "--grid", "hyper", "--epochs-grid", "1,2", "--bottleneck-grid", "1,2",
                   "--repetitions", "1", "--out-dir", str(out)) == 0
    table = pd.read_csv(out / "sweep.csv")
    assert len(table) == 8
    assert set(zip(table["epochs"], table["bottleneck"])) == {(1, 1), (1, 2), (2, 1), (2, 2)}
    assert (out / "heatmap_power_plus.svg").exists()
    assert len(pd.read_csv(out / "sweep_runs.csv")) == 8


def test_report_rerenders_figures(tmp_path):
    out = tmp_path / "out"
    assert run_cli("pipeline", *TINY, "--out-dir", str(out)) == 0
    (out / "statistics.svg").unlink()
    assert run_cli("report", "--out-dir", str(out)) == 0
    assert (out / "statistics.svg").exists()


def test_report_on_missing_directory(tmp_path):
    assert run_cli("report", "--out-dir", str(tmp_path / "nothing")) == 3


def test_config_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("TSKO_WORKERS", "3")
    parser = commands.build_parser()
    assert commands.resolve_config(parser.parse_args(["pipeline"])).workers == 3

    path = tmp_path / "run.conf"
    path.write_text("# local run\nworkers = 4\nq = 0.1\nepochs_grid = 10, 20\nbatch_norm = yes\n")
    config = commands.resolve_config(parser.parse_args(["pipeline", "--config", str(path)]))
    assert (config.workers, config.q, config.epochs_grid, config.batch_norm) == (4, 0.1, (10, 20), True)

    config = commands.resolve_config(parser.parse_args(
        ["pipeline", "--config", str(path), "--workers", "2", "--no-batch-norm", "--epochs-grid", "5"]))
    assert (config.workers, config.q, config.epochs_grid, config.batch_norm) == (2, 0.1, (5,), False)


def test_repeat_defaults_to_200_runs():
    config = commands.resolve_config(commands.build_parser().parse_args(["repeat"]))
    assert config.repetitions == 200
    config = commands.resolve_config(commands.build_parser().parse_args(["pipeline"]))
    assert config.repetitions == 1


def test_bad_environment_value(monkeypatch):
    monkeypatch.setenv("TSKO_WORKERS", "many")
    with pytest.raises(ConfigError):
        RunConfig()


def test_coerce_value_types():
    assert coerce_value("amplitude_grid", "2, 4.5", ()) == (2.0, 4.5)
    assert coerce_value("m", "3", None) == 3
    assert coerce_value("response_feature", "none", None) is None
    assert coerce_value("confounders", "off", None) is False
    with pytest.raises(ConfigError):
        coerce_value("q", "high", 0.2)
    with pytest.raises(ConfigError):
        coerce_value("batch_norm", "maybe", False)


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config_file(str(tmp_path / "missing.conf"))
    path = tmp_path / "broken.conf"
    path.write_text("q 0.2\n")
    with pytest.raises(ConfigError, match=":1:"):
        load_config_file(str(path))


def test_manifest_config_round_trip():
    config = RunConfig(seed=9, epochs_grid=(1, 2), amplitude=3.0, workers=1)
    assert RunConfig.from_dict(json.loads(json.dumps(config.to_dict()))) == config
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"seeds": 1})


def test_run_seeds_do_not_depend_on_repetitions(tiny_run_config):
    short = [runner.run_seed(tiny_run_config, r) for r in range(3)]
    longer = [runner.run_seed(tiny_run_config.updated(repetitions=10), r) for r in range(5)]
    assert longer[:3] == short


def test_parallel_workers_match_in_process(tiny_run_config):
    jobs = [(tiny_run_config, 0), (tiny_run_config, 1)]
    serial = runner.run_jobs(jobs, workers=1)
    pooled = runner.run_jobs(jobs, workers=2)
    for a, b in zip(serial, pooled):
        assert a.seed == b.seed
        np.testing.assert_array_equal(a.statistics.W, b.statistics.W)


def test_failed_runs_are_recorded(tiny_run_config, tmp_path):
    config = tiny_run_config.updated(panel=str(tmp_path / "missing.csv"), repetitions=2)
    result = runner._run_worker((config, 0))
    assert result.status == "failed"
    assert "not found" in result.error
    with pytest.raises(DataError, match="All 2 runs failed"):
        runner.run_repeat(config)


def _result(run, fdp, tdp, selected, status="ok"):
    result = runner.RunResult(run=run, seed=run, status=status)
    if status == "ok":
        for rule in runner.RULES:
            result.reports[rule] = SelectionReport(q=0.2, threshold=1.0, plus=rule == "knockoff+",
                                                   selected=selected)
            result.metrics[rule] = EvalMetrics(fdp=fdp, tdp=tdp, mfdr_term=fdp / 2, n_selected=len(selected),
                                               true_discoveries=0, false_discoveries=0)
    return result


def test_summarize_runs_skips_failures():
    results = [_result(0, 0.5, 1.0, [1, 2]), _result(1, 0.0, 0.5, [3]), _result(2, 0, 0, [], status="failed")]
    summary = runner.summarize_runs(results).set_index("rule")
    row = summary.loc["knockoff+"]
    assert (row["runs"], row["failed"]) == (2, 1)
    assert row["fdr"] == pytest.approx(0.25)
    assert row["power"] == pytest.approx(0.75)
    assert row["mfdr"] == pytest.approx(0.125)
    assert row["mean_selected"] == pytest.approx(1.5)


def test_sweep_cells(tiny_run_config):
    hyper = runner.sweep_cells(tiny_run_config.updated(epochs_grid=(1, 2), bottleneck_grid=(3,)))
    assert hyper == [{"epochs_autoencoder": 1, "epochs_prediction": 1, "bottleneck": 3},
                     {"epochs_autoencoder": 2, "epochs_prediction": 2, "bottleneck": 3}]
    amplitude = runner.sweep_cells(tiny_run_config.updated(grid="amplitude", amplitude_grid=(2.0,), p_grid=(5, 8)))
    assert amplitude == [{"amplitude": 2.0, "p": 5}, {"amplitude": 2.0, "p": 8}]
    subjects = runner.sweep_cells(tiny_run_config.updated(grid="subjects", subjects_grid=(1, 3)))
    assert subjects == [{"m": 1}, {"m": 3}]


def test_sweep_rejects_real_data(tiny_run_config):
    with pytest.raises(DataError):
        runner.run_sweep(tiny_run_config.updated(table="abundance.csv"))


# Desk scale: linear factors and link, m=1, n=400, p=100, s=10, A=10, q=0.2
DESK = ["--preset", "desk-linear-linear", "--q", "0.2", "--repetitions", "20"]


def _repeat_summary(tmp_path, *extra):
    out = tmp_path / "repeat"
    assert run_cli("repeat", *DESK, "--epochs-autoencoder", "500", "--epochs-prediction", "500",
                   *extra, "--out-dir", str(out)) == 0
    return pd.read_csv(out / "summary.csv").set_index("rule")


def _hyper_sweep(tmp_path, epochs, bottlenecks, *extra):
    out = tmp_path / "sweep"
    assert run_cli("sweep", *DESK, "--grid", "hyper", "--epochs-grid", epochs,
                   "--bottleneck-grid", bottlenecks, *extra, "--out-dir", str(out)) == 0
    table = pd.read_csv(out / "sweep.csv")
    return table[table["rule"] == "knockoff+"].set_index(["epochs", "bottleneck"])


@pytest.mark.slow
def test_fdr_control_at_desk_scale(tmp_path):
    plus = _repeat_summary(tmp_path).loc["knockoff+"]
    assert plus["runs"] == 20
    assert plus["fdr"] <= 0.25
    assert plus["power"] >= 0.6


@pytest.mark.slow
def test_null_panels_rarely_select(tmp_path):
    plus = _repeat_summary(tmp_path, "--s", "0").loc["knockoff+"]
    assert plus["runs"] == 20
    assert plus["mean_selected"] <= 1.0


@pytest.mark.slow
def test_confounded_response_needs_long_training(tmp_path):
    plus = _hyper_sweep(tmp_path, "100,1000", "15", "--preset", "desk-linear-linear-confounded")
    assert plus.loc[(1000, 15), "fdr"] <= 0.25
    # the short-training cell is kept in sweep.csv for the report, not bounded
    assert plus.loc[(100, 15), "runs"] == 20
    assert (tmp_path / "sweep" / "heatmap_fdr_plus.svg").exists()


@pytest.mark.slow
def test_bottleneck_width_barely_moves_power(tmp_path):
    plus = _hyper_sweep(tmp_path, "1000", "1,3,15,64")
    assert sorted(plus.index.get_level_values("bottleneck")) == [1, 3, 15, 64]
    assert (plus["fdr"] <= 0.25).all()
    assert plus["power"].max() - plus["power"].min() <= 0.15
