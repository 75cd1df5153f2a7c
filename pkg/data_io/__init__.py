# Panels, table readers/writers, compositional ingestion and result artifacts
from data_io.panel import TimeSeriesPanel
from data_io.tables import (
    CountTable,
    load_table,
    read_knockoffs,
    read_panel,
    read_truth,
    write_knockoffs,
    write_panel,
    write_truth,
)

__all__ = [
    "CountTable",
    "TimeSeriesPanel",
    "load_table",
    "read_knockoffs",
    "read_panel",
    "read_truth",
    "write_knockoffs",
    "write_panel",
    "write_truth",
]
