"""Trajectory tables and the deterministic CSV dialect.

CSV files carry '#'-prefixed `key = value` metadata lines followed by a
comma-separated header and rows formatted with 17 significant digits in
scientific notation, LF line endings, no locale dependence.  The metadata
records enough to re-run the point standalone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def format_float(x: float) -> str:
    return f"{x:.16e}"


@dataclass
class TrajectoryTable:
    """Time column plus named data columns and a metadata mapping."""

    time: np.ndarray
    columns: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        n = self.time.size
        for name, col in self.columns.items():
            col = np.asarray(col)
            if col.size != n:
                raise ValueError(f"column {name!r} length {col.size} != time length {n}")
            if not np.all(np.isfinite(col)):
                raise ValueError(f"column {name!r} contains non-finite values")
            self.columns[name] = col

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def write_csv(self, path, time_label: str = "t"):
        names = list(self.columns)
        with open(path, "w", newline="\n") as fh:
            for key in self.metadata:
                fh.write(f"# {key} = {self.metadata[key]}\n")
            fh.write(",".join([time_label] + names) + "\n")
            cols = [self.columns[n] for n in names]
            for i in range(self.time.size):
                row = [format_float(self.time[i])]
                row += [format_float(float(np.real(c[i]))) for c in cols]
                fh.write(",".join(row) + "\n")


def write_rows_csv(path, metadata: dict, header: list, rows):
    """Long-format CSV (e.g. heatmap grids) in the same dialect."""
    with open(path, "w", newline="\n") as fh:
        for key in metadata:
            fh.write(f"# {key} = {metadata[key]}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_float(float(v)) for v in row) + "\n")
