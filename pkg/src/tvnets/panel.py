"""Multivariate time-series panels: data model, CSV ingestion, lagged designs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataFormatError,
    InsufficientDataError,
    MissingDataError,
    ValidationError,
)

__all__ = ["TimeSeriesPanel", "LaggedDesign", "load_panel", "save_panel", "build_lagged_design"]


@dataclass(frozen=True)
class TimeSeriesPanel:
    """An n x d data matrix on the scaled-time grid tau_t = t/n.

    Immutable after construction; safe to share across workers.
    """

    values: np.ndarray
    names: tuple = ()
    grid: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValidationError("panel values must be a 2-D array")
        n, d = values.shape
        if n < 2 or d < 1:
            raise ValidationError(f"panel needs n >= 2 and d >= 1, got {values.shape}")
        if not np.isfinite(values).all():
            raise MissingDataError("panel contains NaN or infinite entries")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        names = tuple(self.names) if self.names else tuple(f"x{j + 1}" for j in range(d))
        if len(names) != d:
            raise ValidationError(f"expected {d} names, got {len(names)}")
        object.__setattr__(self, "names", names)
        grid = np.arange(1, n + 1, dtype=float) / n
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def standardized(self) -> "TimeSeriesPanel":
        """Column-wise standardization to mean 0, unit variance (n-1 denominator)."""
        mu = self.values.mean(axis=0)
        sd = self.values.std(axis=0, ddof=1)
        degenerate = np.flatnonzero(sd <= 0.0)
        if degenerate.size:
            raise ValidationError(
                f"zero-variance column(s): {[self.names[j] for j in degenerate]}"
            )
        return TimeSeriesPanel((self.values - mu) / sd, self.names)


@dataclass(frozen=True)
class LaggedDesign:
    """Response x_{t,i} with stacked lagged regressor rows (X_{t-1}', ..., X_{t-p}')."""

    response_index: int
    response: np.ndarray     # (n - p,)
    regressors: np.ndarray   # (n - p, p*d)
    lag_order: int
    grid: np.ndarray         # tau_t for the response rows, t = p+1..n
    n: int                   # original panel length
    d: int

    @property
    def n_effective(self) -> int:
        return self.response.shape[0]


def _parse_csv(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines:
        raise DataFormatError(f"empty file: {path}")
    first = [c.strip() for c in lines[0].split(",")]

    def numeric(cell):
        try:
            float(cell)
            return True
        except ValueError:
            return False

    has_header = not all(numeric(c) for c in first)
    names = tuple(first) if has_header else ()
    start = 1 if has_header else 0
    width = None
    for r, line in enumerate(lines[start:], start=start + 1):
        cells = [c.strip() for c in line.split(",")]
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise DataFormatError(f"ragged row {r}: expected {width} cells, got {len(cells)}", row=r)
        parsed = []
        for c, cell in enumerate(cells, start=1):
            try:
                parsed.append(float(cell))
            except ValueError:
                raise DataFormatError(f"non-numeric cell at row {r}, column {c}: {cell!r}", row=r, column=c) from None
        rows.append(parsed)
    if not rows:
        raise DataFormatError(f"no data rows in {path}")
    values = np.asarray(rows, dtype=float)
    if np.isnan(values).any():
        t, j = np.argwhere(np.isnan(values))[0]
        raise MissingDataError(f"missing value at row {int(t) + 1}, column {int(j) + 1}")
    return values, names


def load_panel(path, standardize: bool = False) -> TimeSeriesPanel:
    """Load a CSV panel (UTF-8, comma-separated, header iff any first-row cell is non-numeric)."""
    values, names = _parse_csv(path)
    panel = TimeSeriesPanel(values, names)
    return panel.standardized() if standardize else panel


def save_panel(panel: TimeSeriesPanel, path) -> None:
    """Write the panel as CSV with a header row; round-trips finite doubles exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(panel.names) + "\n")
        for row in panel.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def build_lagged_design(panel: TimeSeriesPanel, i: int, p: int) -> LaggedDesign:
    """Lagged design for response column ``i`` with lag order ``p``.

    Row t (t = p+1..n) of the regressor matrix is the concatenation
    (X_{t-1}', ..., X_{t-p}').
    """
    n, d = panel.n, panel.d
    if not 0 <= i < d:
        raise ValidationError(f"response index {i} outside [0, {d})")
    if p < 1:
        raise ValidationError(f"lag order must be >= 1, got {p}")
    if p >= n:
        raise InsufficientDataError(f"lag order p={p} needs more than {n} observations")
    X = panel.values
    blocks = [X[p - k - 1 : n - k - 1, :] for k in range(p)]
    regressors = np.hstack(blocks)
    return LaggedDesign(
        response_index=i,
        response=X[p:, i].copy(),
        regressors=regressors,
        lag_order=p,
        grid=panel.grid[p:].copy(),
        n=n,
        d=d,
    )
