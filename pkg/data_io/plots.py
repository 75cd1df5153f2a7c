import logging
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

logger = logging.getLogger(__name__)


def save_figure(fig: go.Figure, path: str) -> Path:
    """Write SVG through kaleido; fall back to standalone HTML if image export is unavailable"""
    target = Path(path).with_suffix(".svg")
    target.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.write_image(str(target), format="svg")
        return target
    except Exception as e:
        fallback = target.with_suffix(".html")
        logger.warning(f"SVG export failed ({e}); writing {fallback.name} instead")
        fig.write_html(str(fallback), include_plotlyjs=True, full_html=True)
        return fallback


def statistics_figure(stats: pd.DataFrame, threshold: Optional[float] = None,
                      title: str = "Knockoff statistics") -> go.Figure:
    """Bar chart of W in input order; the threshold, if finite, as a dashed line"""
    colors = ["#2ca02c" if w > 0 else "#d62728" for w in stats["W"]]
    fig = go.Figure(go.Bar(x=stats["feature"], y=stats["W"], marker_color=colors, name="W"))
    if threshold is not None and threshold != float("inf"):
        fig.add_hline(y=threshold, line_dash="dash", annotation_text=f"T = {threshold:.3g}")
    fig.update_layout(title=title, xaxis_title="feature", yaxis_title="W = Z² - Z̃²", template="plotly_white")
    return fig


def frequency_histogram(histogram: pd.DataFrame, runs: int, title: str = "Selection frequencies") -> go.Figure:
    centers = (histogram["lower"] + histogram["upper"]) / 2.0
    fig = go.Figure(go.Bar(x=centers, y=histogram["features"], name="features"))
    fig.update_layout(title=f"{title} over {runs} runs", xaxis_title="times selected",
                      yaxis_title="number of features", bargap=0.05, template="plotly_white")
    return fig


def top_frequencies_figure(frequencies: pd.DataFrame, top: int = 20) -> go.Figure:
    head = frequencies.head(top)
    fig = go.Figure(go.Bar(x=head["count"], y=head["feature"], orientation="h"))
    fig.update_layout(title=f"Top {len(head)} selected features", xaxis_title="times selected",
                      yaxis=dict(autorange="reversed"), template="plotly_white")
    return fig


def heatmap_figure(table: pd.DataFrame, row: str, column: str, value: str, title: str) -> go.Figure:
    pivot = table.pivot_table(index=row, columns=column, values=value, aggfunc="mean").sort_index()
    fig = go.Figure(go.Heatmap(
        z=pivot.to_numpy(),
        x=[str(c) for c in pivot.columns],
        y=[str(r) for r in pivot.index],
        zmin=0.0,
        zmax=1.0,
        colorscale="Blues",
        text=pivot.round(2).to_numpy(),
        texttemplate="%{text}",
    ))
    fig.update_layout(title=title, xaxis_title=column, yaxis_title=row, template="plotly_white")
    return fig


def lines_figure(table: pd.DataFrame, x: str, values: Sequence[str], group: Optional[str] = None,
                 title: str = "") -> go.Figure:
    """One trace per (value column, group level); solid for power, dashed for FDR"""
    fig = go.Figure()
    groups = [(None, table)] if group is None else list(table.groupby(group, sort=True))
    for level, frame in groups:
        frame = frame.sort_values(x)
        for value in values:
            label = value if level is None else f"{value} ({group}={level})"
            dash = "dash" if "fdr" in value else "solid"
            fig.add_trace(go.Scatter(x=frame[x], y=frame[value], mode="lines+markers",
                                     name=label, line=dict(dash=dash)))
    fig.update_layout(title=title, xaxis_title=x, yaxis_title="rate", yaxis_range=[0, 1.05],
                      template="plotly_white")
    return fig


def trajectories_figure(frame: pd.DataFrame, features: Sequence[str], subject: str,
                        response: str = "response") -> go.Figure:
    """Response over time (left axis) with the top selected features (right axis) for one subject"""
    fig = make_subplots(specs=[[{"secondary_y": True}]])
    fig.add_trace(go.Scatter(x=frame["time"], y=frame[response], mode="lines+markers", name=response,
                             line=dict(color="black", width=3)), secondary_y=False)
    for feature in features:
        fig.add_trace(go.Scatter(x=frame["time"], y=frame[feature], mode="lines", name=feature),
                      secondary_y=True)
    fig.update_layout(title=f"Subject {subject}: response and top {len(features)} selected features",
                      xaxis_title="time", template="plotly_white")
    fig.update_yaxes(title_text=response, secondary_y=False)
    fig.update_yaxes(title_text="feature value", secondary_y=True)
    return fig
