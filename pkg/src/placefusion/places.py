"""Workspace partitioning: a regular grid of place classes over the bounding
box of the training viewpoints, and the viewpoint-to-class mapping."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ContractError, DataError

__all__ = [
    "Viewpoint",
    "PlaceGrid",
    "LabeledDataset",
    "build_grid",
    "classify_viewpoint",
    "classify_points",
    "label_dataset",
]


@dataclass(frozen=True)
class Viewpoint:
    """A 2-D workspace position keyed by a dataset sample id."""

    x: float
    y: float
    sample_id: str

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ContractError(f"viewpoint {self.sample_id!r} has non-finite coordinates")
        if not self.sample_id:
            raise ContractError("sample_id must be non-empty")


@dataclass(frozen=True)
class PlaceGrid:
    """Axis-aligned bounding box split into rows x cols place classes.

    Class labels are row-major: label = row * cols + col, with row 0 at
    min_y and col 0 at min_x.
    """

    min_x: float
    min_y: float
    max_x: float
    max_y: float
    rows: int = 10
    cols: int = 10

    def __post_init__(self) -> None:
        if not self.max_x > self.min_x:
            raise ContractError("degenerate bounding box: zero extent in x axis")
        if not self.max_y > self.min_y:
            raise ContractError("degenerate bounding box: zero extent in y axis")
        if self.rows < 1 or self.cols < 1:
            raise ContractError("rows and cols must be >= 1")

    @property
    def n_classes(self) -> int:
        return self.rows * self.cols


class LabeledDataset(NamedTuple):
    labels: list[tuple[str, int]]   # (sample_id, class), in input order
    histogram: np.ndarray           # counts over all rows*cols classes, zeros included


def build_grid(train_viewpoints: Iterable[Viewpoint], rows: int = 10, cols: int = 10) -> PlaceGrid:
    """Grid whose bounding box is the exact min/max of the training viewpoints."""
    vps = list(train_viewpoints)
    if not vps:
        raise ContractError("at least one viewpoint is required")
    xs = [v.x for v in vps]
    ys = [v.y for v in vps]
    return PlaceGrid(min(xs), min(ys), max(xs), max(ys), rows, cols)


def _cell(value: float, low: float, high: float, count: int) -> int:
    idx = math.floor((value - low) / (high - low) * count)
    return min(max(idx, 0), count - 1)


def classify_viewpoint(grid: PlaceGrid, v: Viewpoint) -> int:
    """Row-major class label; points outside the box clamp to the border cell."""
    col = _cell(v.x, grid.min_x, grid.max_x, grid.cols)
    row = _cell(v.y, grid.min_y, grid.max_y, grid.rows)
    return row * grid.cols + col


def classify_points(grid: PlaceGrid, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized classify_viewpoint over coordinate arrays."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    cols = np.floor((xs - grid.min_x) / (grid.max_x - grid.min_x) * grid.cols)
    rows = np.floor((ys - grid.min_y) / (grid.max_y - grid.min_y) * grid.rows)
    cols = np.clip(cols, 0, grid.cols - 1).astype(np.int64)
    rows = np.clip(rows, 0, grid.rows - 1).astype(np.int64)
    return rows * grid.cols + cols


def label_dataset(grid: PlaceGrid, viewpoints: Iterable[Viewpoint]) -> LabeledDataset:
    """Label every viewpoint and tally a histogram over all classes.

    Unseen classes stay visible as zero bins. Duplicate sample ids are an
    error.
    """
    labels: list[tuple[str, int]] = []
    seen: set[str] = set()
    hist = np.zeros(grid.n_classes, dtype=np.int64)
    for v in viewpoints:
        if v.sample_id in seen:
            raise DataError(f"duplicate sample_id {v.sample_id!r}")
        seen.add(v.sample_id)
        label = classify_viewpoint(grid, v)
        labels.append((v.sample_id, label))
        hist[label] += 1
    return LabeledDataset(labels, hist)
