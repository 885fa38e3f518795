"""Windowed standard-deviation features over keypoint traces.

A trace is cut into consecutive, non-overlapping windows of 50 frames
(configurable). Within a window the x and y coordinates of the top part
(points 0-4) and the middle part (points 5-9) are pooled across points
and frames, low-confidence samples are dropped, and the population
standard deviation of each pool gives the four feature columns:
sigma_top_x, sigma_top_y, sigma_mid_x, sigma_mid_y.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, InputFormatError
from .keypoints import MID_INDICES, TOP_INDICES, LabeledTrace
from .util import atomic_write_text, data_lines

FEATURE_CSV_HEADER = "window_index,t_seconds,sigma_top_x,sigma_top_y,sigma_mid_x,sigma_mid_y,label"

# Coordinates live in [0, 1], so a population s.d. can never exceed 0.5;
# the slack absorbs float rounding.
_SIGMA_BOUND = 0.5 + 1e-9


@dataclass(frozen=True)
class FeatureWindowConfig:
    """Windowing and sample-filtering knobs for feature extraction."""

    window_frames: int = 50
    min_valid_samples: int = 2
    confidence_threshold: float = 0.1

    def __post_init__(self) -> None:
        if self.window_frames < 2:
            raise ValueError(f"window_frames must be >= 2, got {self.window_frames}")
        if self.min_valid_samples < 2:
            raise ValueError(f"min_valid_samples must be >= 2, got {self.min_valid_samples}")
        if not (0.0 <= self.confidence_threshold <= 1.0):
            raise ValueError(f"confidence_threshold must be in [0, 1], got {self.confidence_threshold}")


@dataclass(frozen=True)
class FeatureVector:
    """The four pooled standard deviations of one window."""

    sigma_top_x: float
    sigma_top_y: float
    sigma_mid_x: float
    sigma_mid_y: float
    window_index: int
    t_seconds: float

    def __post_init__(self) -> None:
        for name in ("sigma_top_x", "sigma_top_y", "sigma_mid_x", "sigma_mid_y"):
            value = getattr(self, name)
            if not (0.0 <= value <= _SIGMA_BOUND):
                raise ValueError(f"{name}={value!r} outside [0, 0.5]")
        if self.window_index < 0:
            raise ValueError(f"window_index must be non-negative, got {self.window_index}")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.sigma_top_x, self.sigma_top_y, self.sigma_mid_x, self.sigma_mid_y], dtype=np.float64
        )


def population_std(values: Sequence[float] | np.ndarray) -> float:
    """Population standard deviation (divisor n) of at least two values."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        raise ValueError(f"population_std needs at least 2 values, got {arr.size}")
    if arr.min() == arr.max():
        # Keep the constant-series identity exact; the rounded mean of n
        # equal values need not equal them bitwise.
        return 0.0
    mean = arr.mean()
    return float(np.sqrt(np.mean((arr - mean) ** 2)))


def _trace_arrays(trace: LabeledTrace) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xs = np.array([[p.x for p in frame.points] for frame in trace.frames], dtype=np.float64)
    ys = np.array([[p.y for p in frame.points] for frame in trace.frames], dtype=np.float64)
    conf = np.array([[p.confidence for p in frame.points] for frame in trace.frames], dtype=np.float64)
    return xs, ys, conf


def extract_features(
    trace: LabeledTrace, config: FeatureWindowConfig | None = None
) -> tuple[list[FeatureVector], int]:
    """Compute per-window feature vectors for `trace`.

    Returns the valid feature vectors in window order plus the number of
    windows dropped because some pool had fewer than `min_valid_samples`
    usable samples after confidence filtering.
    """
    config = config or FeatureWindowConfig()
    n_windows = len(trace.frames) // config.window_frames
    if n_windows == 0:
        return [], 0
    xs, ys, conf = _trace_arrays(trace)
    valid = conf >= config.confidence_threshold
    top = slice(TOP_INDICES[0], TOP_INDICES[-1] + 1)
    mid = slice(MID_INDICES[0], MID_INDICES[-1] + 1)

    features: list[FeatureVector] = []
    dropped = 0
    for window_index in range(n_windows):
        start = window_index * config.window_frames
        stop = start + config.window_frames
        pools = []
        for coords, part in ((xs, top), (ys, top), (xs, mid), (ys, mid)):
            block = coords[start:stop, part]
            mask = valid[start:stop, part]
            pools.append(block[mask])
        if any(pool.size < config.min_valid_samples for pool in pools):
            dropped += 1
            continue
        sigmas = [population_std(pool) for pool in pools]
        features.append(
            FeatureVector(
                sigma_top_x=sigmas[0],
                sigma_top_y=sigmas[1],
                sigma_mid_x=sigmas[2],
                sigma_mid_y=sigmas[3],
                window_index=window_index,
                t_seconds=config.window_frames * (window_index + 1) / trace.fps,
            )
        )
    return features, dropped


def feature_matrix(features: Sequence[FeatureVector]) -> np.ndarray:
    """Stack feature vectors into an (n, 4) float64 matrix."""
    if not features:
        return np.zeros((0, 4), dtype=np.float64)
    return np.stack([f.as_array() for f in features])


def emit_2d_histogram(
    trace: LabeledTrace, bins: int, *, confidence_threshold: float = 0.1
) -> np.ndarray:
    """Count keypoint samples on a bins x bins grid over [0, 1] squared.

    Cell (i, j) counts samples with x in bin i and y in bin j; the bin
    index is floor(value * bins) capped at bins - 1, so 1.0 lands in the
    last bin. Samples below the confidence threshold are skipped.
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    if not trace.frames:
        raise DataError("cannot histogram an empty trace")
    xs, ys, conf = _trace_arrays(trace)
    mask = conf >= confidence_threshold
    x_idx = np.minimum((xs[mask] * bins).astype(np.int64), bins - 1)
    y_idx = np.minimum((ys[mask] * bins).astype(np.int64), bins - 1)
    grid = np.zeros((bins, bins), dtype=np.int64)
    np.add.at(grid, (x_idx, y_idx), 1)
    return grid


def write_features_csv(
    path: str | Path,
    features: Sequence[FeatureVector],
    labels: Sequence[int | None],
    *,
    config_echo: str | None = None,
) -> None:
    """Write feature rows with their per-row labels (empty field when unlabeled)."""
    if len(features) != len(labels):
        raise ValueError("features and labels must have the same length")
    lines = []
    if config_echo is not None:
        lines.append(f"# config: {config_echo}")
    lines.append(FEATURE_CSV_HEADER)
    for feature, label in zip(features, labels):
        label_field = "" if label is None else str(label)
        lines.append(
            f"{feature.window_index},{float(feature.t_seconds)!r},"
            f"{float(feature.sigma_top_x)!r},{float(feature.sigma_top_y)!r},"
            f"{float(feature.sigma_mid_x)!r},{float(feature.sigma_mid_y)!r},{label_field}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_features_csv(path: str | Path) -> tuple[list[FeatureVector], list[int | None]]:
    lines = data_lines(path)
    if not lines or lines[0] != FEATURE_CSV_HEADER:
        raise InputFormatError(f"expected header {FEATURE_CSV_HEADER!r}", source=str(path), line=1)
    features: list[FeatureVector] = []
    labels: list[int | None] = []
    for line_number, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 7:
            raise InputFormatError(f"expected 7 fields, got {len(parts)}", source=str(path), line=line_number)
        try:
            features.append(
                FeatureVector(
                    window_index=int(parts[0]),
                    t_seconds=float(parts[1]),
                    sigma_top_x=float(parts[2]),
                    sigma_top_y=float(parts[3]),
                    sigma_mid_x=float(parts[4]),
                    sigma_mid_y=float(parts[5]),
                )
            )
            labels.append(None if parts[6] == "" else int(parts[6]))
        except ValueError as exc:
            raise InputFormatError(str(exc), source=str(path), line=line_number) from exc
        if labels[-1] not in (0, 1, None):
            raise InputFormatError(f"label must be 0, 1 or empty, got {parts[6]!r}", source=str(path), line=line_number)
    return features, labels


def write_hist2d_csv(path: str | Path, grid: np.ndarray, *, config_echo: str | None = None) -> None:
    lines = []
    if config_echo is not None:
        lines.append(f"# config: {config_echo}")
    for row in np.asarray(grid, dtype=np.int64):
        lines.append(",".join(str(int(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
