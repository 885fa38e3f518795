"""Scalar Kalman filtering of the recognition series.

Each per-window classifier output is treated as a noisy measurement of
the underlying concentration level. The filter runs the usual scalar
predict/update recursion and returns the post-update estimates, which
track the level smoothly while the raw measurements fluctuate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import InputFormatError, NumericError
from .mlp import RecognitionSeries
from .util import atomic_write_text, data_lines

SERIES_CSV_HEADER = "window_index,t_seconds,s_r,s_e"
RECOGNITION_CSV_HEADER = "window_index,t_seconds,s_r"


@dataclass(frozen=True)
class KalmanParams:
    """Filter constants.

    transition (A) and process_noise (Q) describe the level dynamics; the
    defaults 1 and 0 model a student holding a steady level with no
    external disturbance. scale (H) maps state to measurement,
    measurement_noise (R) is the classifier noise variance, and the
    filter starts at initial_estimate 0.5 (a 50% level) with
    initial_covariance 0.9.
    """

    transition: float = 1.0
    process_noise: float = 0.0
    scale: float = 1.0
    measurement_noise: float = 0.1
    initial_estimate: float = 0.5
    initial_covariance: float = 0.9

    def __post_init__(self) -> None:
        if not self.measurement_noise > 0:
            raise ValueError(f"measurement_noise must be positive, got {self.measurement_noise}")
        if not self.initial_covariance > 0:
            raise ValueError(f"initial_covariance must be positive, got {self.initial_covariance}")
        if self.process_noise < 0:
            raise ValueError(f"process_noise must be non-negative, got {self.process_noise}")

    def initial_state(self) -> "KalmanState":
        return KalmanState(estimate=self.initial_estimate, covariance=self.initial_covariance, step=0)


@dataclass(frozen=True)
class KalmanState:
    """Current estimate, its error covariance, and the step count."""

    estimate: float
    covariance: float
    step: int = 0

    def __post_init__(self) -> None:
        if self.covariance < 0:
            raise ValueError(f"covariance must be non-negative, got {self.covariance}")


@dataclass(frozen=True)
class EstimationSeries:
    """Filtered levels aligned one-to-one with the input measurements."""

    values: tuple[float, ...]
    t_seconds: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "t_seconds", tuple(float(t) for t in self.t_seconds))
        if len(self.values) != len(self.t_seconds):
            raise ValueError("values and t_seconds must have the same length")

    def __len__(self) -> int:
        return len(self.values)


def kf_step(state: KalmanState, measurement: float, params: KalmanParams) -> KalmanState:
    """One predict/update cycle.

        x_pre = A*x          P_pre = A*P*A + Q
        K     = P_pre*H / (H*P_pre*H + R)
        x'    = x_pre + K*(m - H*x_pre)
        P'    = P_pre - K*H*P_pre
    """
    if not math.isfinite(measurement):
        raise NumericError(f"measurement is not finite: {measurement!r}")
    a, q, h, r = params.transition, params.process_noise, params.scale, params.measurement_noise
    x_pre = a * state.estimate
    p_pre = a * state.covariance * a + q
    gain = p_pre * h / (h * p_pre * h + r)
    estimate = x_pre + gain * (measurement - h * x_pre)
    covariance = p_pre - gain * h * p_pre
    return KalmanState(estimate=estimate, covariance=covariance, step=state.step + 1)


def run_filter(series: RecognitionSeries, params: KalmanParams | None = None) -> EstimationSeries:
    """Filter a whole recognition series, one update per measurement."""
    params = params or KalmanParams()
    state = params.initial_state()
    estimates = []
    for measurement in series.values:
        state = kf_step(state, measurement, params)
        estimates.append(state.estimate)
    return EstimationSeries(values=tuple(estimates), t_seconds=series.t_seconds)


def write_series_csv(
    path: str | Path,
    window_indices: Sequence[int],
    recognition: RecognitionSeries,
    estimation: EstimationSeries | None = None,
    *,
    config_echo: str | None = None,
) -> None:
    """Write the per-window series table (s_r only, or s_r plus s_e)."""
    n = len(recognition)
    if len(window_indices) != n or (estimation is not None and len(estimation) != n):
        raise ValueError("window_indices, recognition and estimation lengths must agree")
    lines = []
    if config_echo is not None:
        lines.append(f"# config: {config_echo}")
    lines.append(SERIES_CSV_HEADER if estimation is not None else RECOGNITION_CSV_HEADER)
    for i in range(n):
        row = f"{int(window_indices[i])},{recognition.t_seconds[i]!r},{recognition.values[i]!r}"
        if estimation is not None:
            row += f",{estimation.values[i]!r}"
        lines.append(row)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_series_csv(path: str | Path) -> dict[str, list]:
    """Read a series table back into columns, with or without the s_e column."""
    lines = data_lines(path)
    if not lines or lines[0] not in (SERIES_CSV_HEADER, RECOGNITION_CSV_HEADER):
        raise InputFormatError(
            f"expected header {SERIES_CSV_HEADER!r} or {RECOGNITION_CSV_HEADER!r}",
            source=str(path),
            line=1,
        )
    names = lines[0].split(",")
    columns: dict[str, list] = {name: [] for name in names}
    for line_number, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(names):
            raise InputFormatError(
                f"expected {len(names)} fields, got {len(parts)}", source=str(path), line=line_number
            )
        try:
            columns["window_index"].append(int(parts[0]))
            for name, value in zip(names[1:], parts[1:]):
                columns[name].append(float(value))
        except ValueError as exc:
            raise InputFormatError(str(exc), source=str(path), line=line_number) from exc
    return columns
