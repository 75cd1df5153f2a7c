import numpy as np
import pandas as pd
import plotly.graph_objects as go
import pytest

from analytics.metrics import aggregate_runs
from analytics.selection import run_selection
from config.settings import IngestConfig
from data_io import (
    TimeSeriesPanel,
    load_table,
    read_knockoffs,
    read_panel,
    read_truth,
    write_knockoffs,
    write_panel,
    write_truth,
)
from data_io.compositional import (
    build_panel,
    clr_transform,
    filter_missing,
    interpolate_missing,
    modified_clr_response,
)
from data_io.plots import save_figure, statistics_figure
from data_io.reports import (
    metrics_frame,
    read_manifest,
    render_figures,
    selected_frame,
    statistics_frame,
    trajectories_frame,
    write_report,
)
from data_io.tables import CountTable
from knockoffs.generator import KnockoffResult
from prediction.statistics import KnockoffStatistics
from utils.exceptions import ConfigError, DataError

TOY_TABLE = """subject,time,f1,f2,f3,f4
A,1,1,0,3,4
A,2,2,1,3,4
A,3,3,2,3,4
B,1,5,6,7,8
B,2,5,6,7,8
B,3,5,6,7,8
"""


def write_text(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def make_table(counts, names=None, metadata=None):
    m, n, p = counts.shape
    return CountTable(
        counts=counts,
        feature_names=names or [f"f{j + 1}" for j in range(p)],
        subject_ids=[f"S{i + 1}" for i in range(m)],
        time_index=list(range(1, n + 1)),
        metadata=metadata or {},
    )


def test_load_table_dimensions(tmp_path):
    table = load_table(str(write_text(tmp_path, "toy.csv", TOY_TABLE)))
    assert table.shape == (2, 3, 4)
    assert table.feature_names == ["f1", "f2", "f3", "f4"]
    assert table.subject_ids == ["A", "B"]
    assert table.time_index == [1, 2, 3]
    assert table.counts[1, 0, 3] == 8.0


def test_load_table_tab_separated_and_sorted_times(tmp_path):
    text = "subject\ttime\tg1\tg2\nA\t10\t1\t2\nA\t2\t3\t4\nB\t2\t5\t6\n"
    table = load_table(str(write_text(tmp_path, "toy.tsv", text)))
    assert table.time_index == [2, 10]
    np.testing.assert_array_equal(table.counts[0, 0], [3.0, 4.0])
    # B has no row at time 10
    np.testing.assert_array_equal(table.observed(), [[True, True], [True, False]])


def test_load_table_metadata_columns(tmp_path):
    text = "subject,time,weight,f1,f2\nA,1,3.5,1,2\nA,2,4.0,1,2\n"
    table = load_table(str(write_text(tmp_path, "meta.csv", text)), metadata_columns=["weight"])
    assert table.feature_names == ["f1", "f2"]
    np.testing.assert_array_equal(table.metadata["weight"], [[3.5, 4.0]])


def test_load_table_missing_header_names_line(tmp_path):
    path = write_text(tmp_path, "noheader.csv", TOY_TABLE.split("\n", 1)[1])
    with pytest.raises(DataError, match=r":1: missing header row"):
        load_table(str(path))


def test_load_table_rejects_duplicate_key(tmp_path):
    path = write_text(tmp_path, "dup.csv", TOY_TABLE + "A,2,1,1,1,1\n")
    with pytest.raises(DataError, match=r":8: duplicate \(subject, time\) key"):
        load_table(str(path))


def test_load_table_duplicate_key_compares_numeric_times(tmp_path):
    path = write_text(tmp_path, "dup_float.csv", TOY_TABLE + "B,2.0,9,9,9,9\n")
    with pytest.raises(DataError, match=r":8: duplicate \(subject, time\) key \(B, 2.0\)"):
        load_table(str(path))


def test_load_table_rejects_non_numeric_and_negative(tmp_path):
    bad = TOY_TABLE.replace("B,2,5,6,7,8", "B,2,5,six,7,8")
    with pytest.raises(DataError, match=r":6: non-numeric"):
        load_table(str(write_text(tmp_path, "bad.csv", bad)))
    negative = TOY_TABLE.replace("A,3,3,2,3,4", "A,3,3,-2,3,4")
    with pytest.raises(DataError, match="negative count"):
        load_table(str(write_text(tmp_path, "neg.csv", negative)))
    with pytest.raises(DataError, match="not found"):
        load_table(str(tmp_path / "missing.csv"))


def test_clr_examples():
    np.testing.assert_allclose(clr_transform([1.0, np.e, np.e ** 2], pseudocount=0.0), [-1.0, 0.0, 1.0],
                               atol=1e-12)
    np.testing.assert_allclose(clr_transform([4.0, 4.0, 4.0]), 0.0, atol=1e-15)


def test_clr_rows_sum_to_zero():
    counts = np.random.default_rng(0).poisson(3.0, size=(4, 6, 25))
    assert np.all(np.abs(clr_transform(counts).sum(axis=-1)) < 1e-10)


def test_clr_rejects_unloggable_input():
    with pytest.raises(DataError):
        clr_transform([0.0, 1.0], pseudocount=0.0)
    with pytest.raises(DataError):
        clr_transform([-1.0, 1.0])


def test_modified_clr_response_examples():
    x = np.array([1.0, np.e, np.e ** 2])
    assert modified_clr_response(np.e ** 3, x, pseudocount=0.0) == pytest.approx(2.0)
    assert modified_clr_response(np.e, x, pseudocount=0.0) == pytest.approx(0.0, abs=1e-12)
    shifted = modified_clr_response(np.e ** 3, 5.0 * x, pseudocount=0.0)
    assert shifted == pytest.approx(2.0 - np.log(5.0))


def test_filter_missing_drops_sparse_subject_and_absent_feature():
    counts = np.ones((2, 24, 3))
    counts[:, :, 2] = 0.0
    counts[0, :13] = np.nan  # 13 of 24 months missing
    table = make_table(counts)

    filtered, report = filter_missing(table, IngestConfig())
    assert report == {"dropped_subjects": ["S1"], "dropped_features": ["f3"]}
    assert filtered.shape == (1, 24, 2)
    assert filtered.feature_names == ["f1", "f2"]


def test_filter_missing_protects_response_feature():
    counts = np.ones((1, 5, 3))
    counts[:, :, 1] = 0.0
    filtered, report = filter_missing(make_table(counts), IngestConfig(), keep_features=["f2"])
    assert filtered.feature_names == ["f1", "f2", "f3"]
    assert report["dropped_features"] == []


def test_filter_missing_is_idempotent():
    rng = np.random.default_rng(1)
    counts = rng.poisson([2.0] * 4 + [0.1] * 4, size=(5, 12, 8)).astype(float)
    counts[rng.random((5, 12)) < 0.4] = np.nan
    config = IngestConfig(sample_missing_threshold=0.5, feature_absence_threshold=0.7)

    once, _ = filter_missing(make_table(counts), config)
    twice, report = filter_missing(once, config)
    assert report == {"dropped_subjects": [], "dropped_features": []}
    np.testing.assert_array_equal(once.counts, twice.counts)
    assert once.feature_names == twice.feature_names


def test_filter_missing_everything_dropped():
    counts = np.full((1, 4, 2), np.nan)
    counts[0, 0] = 1.0
    with pytest.raises(DataError, match="No subjects left"):
        filter_missing(make_table(counts), IngestConfig())


def test_interpolate_linear_inside_nearest_at_edges():
    values = np.array([np.nan, 1.0, np.nan, 3.0, np.nan])
    np.testing.assert_allclose(interpolate_missing(values), [1.0, 1.0, 2.0, 3.0, 3.0])


def test_interpolate_uses_numeric_time_spacing():
    values = np.array([[0.0, 10.0], [np.nan, np.nan], [4.0, 50.0]])
    filled = interpolate_missing(values, time_index=[0, 1, 4])
    np.testing.assert_allclose(filled[1], [1.0, 20.0])


def test_interpolate_needs_an_observation():
    with pytest.raises(DataError):
        interpolate_missing(np.full(3, np.nan))


def test_build_panel_with_response_feature():
    rng = np.random.default_rng(2)
    counts = rng.integers(1, 20, size=(2, 6, 4)).astype(float)
    counts[1, 2] = np.nan
    table = make_table(counts, names=["a", "b", "resp", "c"])

    panel, report = build_panel(table, IngestConfig(response_feature="resp"))
    assert panel.feature_names == ["a", "b", "c"]
    assert panel.shape == (2, 6, 3)
    assert np.all(np.abs(panel.X.sum(axis=-1)) < 1e-10)

    explanatory = counts[0][:, [0, 1, 3]]
    expected = np.log(counts[0, :, 2] + 0.5) - np.log(explanatory + 0.5).mean(axis=1)
    np.testing.assert_allclose(panel.y[0], expected)
    # the missing row of S2 is interpolated from its neighbours
    np.testing.assert_allclose(panel.X[1, 2], clr_transform((counts[1, 1] + counts[1, 3])[[0, 1, 3]] / 2.0))
    assert report["dropped_subjects"] == []


def test_build_panel_with_logged_metadata_response():
    counts = np.ones((1, 3, 2))
    counts[0, :, 0] = [1.0, 2.0, 3.0]
    weight = np.array([[1.0, np.e, np.nan]])
    table = make_table(counts, metadata={"weight": weight})

    panel, _ = build_panel(table, IngestConfig(response_column="weight", response_log=True))
    np.testing.assert_allclose(panel.y[0], [0.0, 1.0, 1.0], atol=1e-12)


def test_build_panel_config_errors():
    table = make_table(np.ones((1, 3, 2)))
    with pytest.raises(ConfigError):
        build_panel(table, IngestConfig(response_feature="nope"))
    with pytest.raises(ConfigError):
        build_panel(table, IngestConfig(response_column="weight"))
    with pytest.raises(ConfigError):
        build_panel(table, IngestConfig(pseudocount=0.0))


def test_panel_round_trip_full_precision(tmp_path):
    rng = np.random.default_rng(3)
    panel = TimeSeriesPanel(X=rng.normal(size=(2, 5, 3)) / 7.0, y=rng.normal(size=(2, 5)))
    path = write_panel(panel, str(tmp_path / "panel.csv"))
    restored = read_panel(str(path))
    np.testing.assert_array_equal(restored.X, panel.X)
    np.testing.assert_array_equal(restored.y, panel.y)
    assert restored.feature_names == panel.feature_names
    assert restored.subject_ids == panel.subject_ids
    assert restored.time_index == panel.time_index


def test_panel_without_response_round_trip(tmp_path):
    panel = TimeSeriesPanel(X=np.arange(12.0).reshape(1, 4, 3))
    restored = read_panel(str(write_panel(panel, str(tmp_path / "panel.csv"))))
    assert restored.y is None
    np.testing.assert_array_equal(restored.X, panel.X)


def test_write_panel_rejects_reserved_names(tmp_path):
    panel = TimeSeriesPanel(X=np.zeros((1, 2, 2)), feature_names=["time", "x"])
    with pytest.raises(DataError):
        write_panel(panel, str(tmp_path / "panel.csv"))


def test_knockoff_files_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    panel = TimeSeriesPanel(X=rng.normal(size=(2, 4, 3)), y=rng.normal(size=(2, 4)))
    results = [
        KnockoffResult(subject_id=sid, C_hat=np.zeros((4, 3)), theta_hat=0.1 * (i + 1),
                       X_tilde=rng.normal(size=(4, 3)), seed=100 + i)
        for i, sid in enumerate(panel.subject_ids)
    ]
    paths = write_knockoffs(results, panel, str(tmp_path / "knockoffs"))
    assert [p.name for p in paths] == ["knockoffs_000.csv", "knockoffs_001.csv"]
    assert paths[0].read_text().startswith("# subject: S1\n# theta_hat: 0.1\n# seed: 100\n")

    knockoffs, info = read_knockoffs(str(tmp_path / "knockoffs"), panel)
    np.testing.assert_array_equal(knockoffs.X, np.stack([r.X_tilde for r in results]))
    np.testing.assert_array_equal(knockoffs.y, panel.y)
    assert list(info["seed"]) == [100, 101]
    assert info["theta_hat"].iloc[1] == 0.2


def test_read_knockoffs_needs_every_subject(tmp_path):
    panel = TimeSeriesPanel(X=np.zeros((2, 3, 2)))
    result = KnockoffResult("S1", np.zeros((3, 2)), 0.0, np.ones((3, 2)), 0)
    write_knockoffs([result], TimeSeriesPanel(X=np.zeros((1, 3, 2))), str(tmp_path))
    with pytest.raises(DataError, match="S2"):
        read_knockoffs(str(tmp_path), panel)
    with pytest.raises(DataError):
        read_knockoffs(str(tmp_path / "empty"), panel)


def test_truth_round_trip(tmp_path):
    beta = np.array([0.0, 10.0, 0.0, -10.0])
    path = write_truth(beta, (1, 3), ["a", "b", "c", "d"], str(tmp_path / "truth.csv"))
    assert read_truth(str(path)) == (1, 3)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["index", "feature", "beta", "signal"]


def _statistics():
    W = np.array([3.0, -1.0, 2.0, -2.0, 5.0])
    zeros = np.zeros(5)
    Z = np.sqrt(np.maximum(W, 0) + 2.0)
    return KnockoffStatistics(v_f=zeros, v_i=zeros, v_c=zeros, v_o=zeros,
                              Z=Z, Z_tilde=np.sqrt(Z ** 2 - W), W=W)


def test_statistics_frame_ranks_by_w():
    stats = _statistics()
    frame = statistics_frame(stats, list("abcde"), run_selection(stats.W, 0.5))
    assert list(frame["feature"]) == ["e", "a", "c", "b", "d"]
    assert list(frame["selected"]) == [True, True, True, False, False]
    assert list(frame["selected_plus"]) == [True, True, False, False, False]


def test_write_report_is_byte_identical(tmp_path):
    stats = _statistics()
    reports = run_selection(stats.W, 0.5)
    records = [{"run": 0, "seed": 7, "rule": rule, "status": "ok", "threshold": r.threshold,
                "n_selected": len(r)} for rule, r in reports.items()]
    frequencies = aggregate_runs([reports["knockoff"].selected, reports["knockoff+"].selected], p=5)

    outputs = []
    for name in ("first", "second"):
        written = write_report(str(tmp_path / name), metrics=metrics_frame(records),
                               statistics=statistics_frame(stats, list("abcde"), reports),
                               selected=selected_frame(reports, list("abcde")),
                               frequencies=frequencies, figures=False)
        outputs.append({key: path.read_bytes() for key, path in written.items()})
    assert outputs[0] == outputs[1]
    assert set(outputs[0]) == {"metrics", "statistics", "selected", "frequencies", "histogram"}


def test_write_report_empty_selection(tmp_path):
    W = -np.ones(4)
    reports = run_selection(W, 0.2)
    written = write_report(str(tmp_path), selected=selected_frame(reports, list("abcd")),
                           metrics=metrics_frame([]), figures=False)
    selected = pd.read_csv(written["selected"])
    assert selected.empty
    assert list(selected.columns) == ["rule", "index", "feature", "W", "threshold"]
    assert pd.read_csv(written["metrics"]).empty


def test_frequency_report_sorted_descending(tmp_path):
    rng = np.random.default_rng(5)
    runs = [list(np.nonzero(rng.random(10) < 0.3)[0]) for _ in range(200)]
    written = write_report(str(tmp_path), frequencies=aggregate_runs(runs, p=10), figures=False)
    frame = pd.read_csv(written["frequencies"])
    assert list(frame["count"]) == sorted(frame["count"], reverse=True)
    assert frame["frequency"].max() <= 1.0


def test_save_figure_falls_back_to_html(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise ValueError("image export unavailable")

    monkeypatch.setattr(go.Figure, "write_image", broken)
    stats = _statistics().to_frame(list("abcde"))
    path = save_figure(statistics_figure(stats, threshold=2.0), str(tmp_path / "statistics"))
    assert path.suffix == ".html"
    assert path.exists()


def test_render_figures_from_tables(tmp_path, monkeypatch):
    monkeypatch.setattr(go.Figure, "write_image", lambda self, path, **kwargs: open(path, "w").close())
    stats = _statistics()
    reports = run_selection(stats.W, 0.5)
    written = write_report(str(tmp_path), statistics=statistics_frame(stats, list("abcde"), reports),
                           selected=selected_frame(reports, list("abcde")),
                           frequencies=aggregate_runs([[0, 4], [4]], p=5))
    assert {"statistics_plot", "histogram_plot", "top_plot"} <= set(written)
    assert written["statistics_plot"].suffix == ".svg"


def test_trajectories_frame_keeps_top_selected_features():
    stats = _statistics()
    reports = run_selection(stats.W, 0.5)  # knockoff+ selects a and e
    X = np.arange(30.0).reshape(2, 3, 5)
    y = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    panel = TimeSeriesPanel(X=X, y=y, feature_names=list("abcde"), subject_ids=["P1", "P2"])

    frame = trajectories_frame(panel, reports)
    assert list(frame.columns) == ["subject", "time", "response", "e", "a"]
    assert list(frame["subject"]) == ["P1"] * 3 + ["P2"] * 3
    np.testing.assert_array_equal(frame["response"], y.ravel())
    np.testing.assert_array_equal(frame["e"], X[:, :, 4].ravel())

    assert list(trajectories_frame(panel, reports, top=1).columns) == ["subject", "time", "response", "e"]


def test_trajectories_frame_falls_back_to_knockoff_rule():
    W = np.array([3.0, -1.0, 2.0, -2.0, 5.0])
    reports = run_selection(W, 0.5)
    reports["knockoff+"].selected = []
    panel = TimeSeriesPanel(X=np.zeros((1, 2, 5)), y=np.zeros((1, 2)))
    assert list(trajectories_frame(panel, reports).columns)[3:] == ["X5", "X1", "X3"]

    reports["knockoff"].selected = []
    assert trajectories_frame(panel, reports) is None


def test_trajectory_figures_per_subject(tmp_path, monkeypatch):
    monkeypatch.setattr(go.Figure, "write_image", lambda self, path, **kwargs: open(path, "w").close())
    stats = _statistics()
    reports = run_selection(stats.W, 0.5)
    panel = TimeSeriesPanel(X=np.ones((2, 4, 5)), y=np.ones((2, 4)), feature_names=list("abcde"),
                            subject_ids=["P1", "P/2"])
    written = write_report(str(tmp_path), trajectories=trajectories_frame(panel, reports))
    assert (tmp_path / "trajectories.csv").exists()
    assert written["trajectory_P1"].name == "trajectory_P1.svg"
    assert written["trajectory_P_2"].exists()

    (tmp_path / "trajectory_P1.svg").unlink()
    assert "trajectory_P1" in render_figures(str(tmp_path))
    assert (tmp_path / "trajectory_P1.svg").exists()


def test_read_manifest_errors(tmp_path):
    with pytest.raises(ConfigError):
        read_manifest(str(tmp_path / "missing.json"))
    bad = write_text(tmp_path, "bad.json", "{not json")
    with pytest.raises(ConfigError):
        read_manifest(str(bad))
    empty = write_text(tmp_path, "empty.json", "{}")
    with pytest.raises(ConfigError):
        read_manifest(str(empty))
