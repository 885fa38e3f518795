"""Histogramming and two-Gaussian curve fitting of estimated levels.

The distribution of filtered levels in a session typically shows two
dominant modes. The model fitted here is a sum of two Gaussians with
free amplitudes,

    f(x) = a1*exp(-(x - mu1)^2 / (2*s1^2)) + a2*exp(-(x - mu2)^2 / (2*s2^2)),

fitted by damped Gauss-Newton (Levenberg-Marquardt) least squares to the
(bin center, count) pairs of a uniform histogram over [0, 1]. Reported
fits are canonically ordered with mu1 <= mu2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .util import atomic_write_text

FIT_CURVE_CSV_HEADER = "x,fitted"

# Parameter bounds applied to every candidate step: amplitudes stay
# non-negative, centers stay in [0, 1], widths stay off the collapse
# singularity at zero.
WIDTH_FLOOR = 1e-4
_AMPLITUDE_FLOOR = 1e-12


@dataclass(frozen=True)
class FitConfig:
    """Histogram resolution and Levenberg-Marquardt stopping rules."""

    bins: int = 40
    max_iterations: int = 500
    sse_rtol: float = 1e-10
    step_tol: float = 1e-10
    curve_points: int = 200

    def __post_init__(self) -> None:
        if self.bins < 4:
            raise ValueError(f"bins must be >= 4, got {self.bins}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.sse_rtol <= 0 or self.step_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.curve_points < 2:
            raise ValueError("curve_points must be >= 2")


@dataclass(frozen=True)
class Histogram1D:
    """Uniform-bin counts over [0, 1]; edges have length bins + 1."""

    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin_edges must be strictly increasing with at least 2 entries")
        if counts.shape != (edges.size - 1,):
            raise ValueError("counts length must equal number of bins")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def bins(self) -> int:
        return self.counts.size

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def sample_count(self) -> int:
        return int(round(float(self.counts.sum())))


@dataclass(frozen=True)
class BimodalFit:
    """Two-Gaussian parameters plus fit diagnostics.

    Components are stored in canonical order (mu1 <= mu2); constructing
    with swapped centers reorders them. Amplitudes of zero are accepted
    so a single Gaussian can be expressed, but fitted results keep both
    strictly positive.
    """

    a1: float
    mu1: float
    s1: float
    a2: float
    mu2: float
    s2: float
    residual_sse: float = math.nan
    converged: bool = False
    iterations: int = 0

    def __post_init__(self) -> None:
        if self.mu1 > self.mu2:
            for left, right in (("a1", "a2"), ("mu1", "mu2"), ("s1", "s2")):
                low, high = getattr(self, right), getattr(self, left)
                object.__setattr__(self, left, low)
                object.__setattr__(self, right, high)
        if self.a1 < 0 or self.a2 < 0:
            raise ValueError("amplitudes must be non-negative")
        if self.s1 <= 0 or self.s2 <= 0:
            raise ValueError("widths must be positive")
        if not (0.0 <= self.mu1 <= 1.0 and 0.0 <= self.mu2 <= 1.0):
            raise ValueError("mode centers must lie in [0, 1]")

    def theta(self) -> np.ndarray:
        return np.array([self.a1, self.mu1, self.s1, self.a2, self.mu2, self.s2])


def build_histogram(values: Sequence[float] | np.ndarray, bins: int) -> Histogram1D:
    """Histogram values from [0, 1] into `bins` uniform bins.

    The bin index is floor(value * bins) capped at bins - 1, so exactly
    1.0 falls in the last bin.
    """
    if bins < 4:
        raise ValueError(f"bins must be >= 4, got {bins}")
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise DataError("cannot histogram an empty value sequence")
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DataError("histogram values must lie in [0, 1]")
    idx = np.minimum((arr * bins).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    edges = np.linspace(0.0, 1.0, bins + 1)
    return Histogram1D(bin_edges=edges, counts=counts)


def _gaussian_sum(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    a1, mu1, s1, a2, mu2, s2 = theta
    return a1 * np.exp(-((x - mu1) ** 2) / (2.0 * s1 * s1)) + a2 * np.exp(
        -((x - mu2) ** 2) / (2.0 * s2 * s2)
    )


def eval_bimodal(params: BimodalFit, x: float | np.ndarray) -> float | np.ndarray:
    """Evaluate the two-Gaussian model at x (scalar or array)."""
    arr = np.asarray(x, dtype=np.float64)
    result = _gaussian_sum(params.theta(), arr)
    return float(result) if np.isscalar(x) or arr.ndim == 0 else result


def _jacobian(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    a1, mu1, s1, a2, mu2, s2 = theta
    d1 = x - mu1
    d2 = x - mu2
    e1 = np.exp(-(d1**2) / (2.0 * s1 * s1))
    e2 = np.exp(-(d2**2) / (2.0 * s2 * s2))
    jac = np.empty((x.size, 6))
    jac[:, 0] = e1
    jac[:, 1] = a1 * e1 * d1 / (s1 * s1)
    jac[:, 2] = a1 * e1 * d1 * d1 / (s1**3)
    jac[:, 3] = e2
    jac[:, 4] = a2 * e2 * d2 / (s2 * s2)
    jac[:, 5] = a2 * e2 * d2 * d2 / (s2**3)
    return jac


def _project(theta: np.ndarray) -> np.ndarray:
    out = theta.copy()
    out[0] = max(out[0], _AMPLITUDE_FLOOR)
    out[3] = max(out[3], _AMPLITUDE_FLOOR)
    out[1] = min(max(out[1], 0.0), 1.0)
    out[4] = min(max(out[4], 0.0), 1.0)
    out[2] = max(out[2], WIDTH_FLOOR)
    out[5] = max(out[5], WIDTH_FLOOR)
    return out


def initial_guess(hist: Histogram1D) -> BimodalFit:
    """Seed the fit from the two highest local maxima of smoothed counts.

    Counts are smoothed with a 3-bin moving average. If fewer than two
    local maxima exist (single peak, flat data), the two mode centers are
    seeded at the sample mean plus/minus one sample standard deviation.
    """
    counts = np.asarray(hist.counts, dtype=np.float64)
    if not np.any(counts > 0):
        raise DataError("cannot seed a fit from an all-zero histogram")
    centers = hist.bin_centers
    bin_width = float(hist.bin_edges[1] - hist.bin_edges[0])

    smoothed = np.array(
        [counts[max(0, i - 1) : i + 2].mean() for i in range(counts.size)]
    )
    peaks = []
    for i in range(counts.size):
        left = smoothed[i - 1] if i > 0 else -np.inf
        right = smoothed[i + 1] if i + 1 < counts.size else -np.inf
        if smoothed[i] > left and smoothed[i] > right:
            peaks.append(i)

    width_seed = 2.0 * bin_width
    if len(peaks) >= 2:
        top_two = sorted(peaks, key=lambda i: smoothed[i], reverse=True)[:2]
        seeds = []
        for i in sorted(top_two):
            amplitude = max(float(counts[i]), float(smoothed[i]), _AMPLITUDE_FLOOR)
            seeds.append((amplitude, float(centers[i]), width_seed))
        (a1, mu1, s1), (a2, mu2, s2) = seeds
        return BimodalFit(a1=a1, mu1=mu1, s1=s1, a2=a2, mu2=mu2, s2=s2)

    total = counts.sum()
    mean = float((counts * centers).sum() / total)
    sd = float(np.sqrt((counts * (centers - mean) ** 2).sum() / total))
    spread = max(sd, bin_width)
    amplitude = max(float(counts.max()), _AMPLITUDE_FLOOR)
    width = max(sd, width_seed)
    return BimodalFit(
        a1=amplitude,
        mu1=min(max(mean - spread, 0.0), 1.0),
        s1=width,
        a2=amplitude,
        mu2=min(max(mean + spread, 0.0), 1.0),
        s2=width,
    )


def fit_bimodal(
    hist: Histogram1D,
    init: BimodalFit | None = None,
    config: FitConfig | None = None,
) -> BimodalFit:
    """Least-squares fit of the two-Gaussian model to histogram counts.

    Damped Gauss-Newton with multiplicative damping: candidate steps are
    accepted only if they reduce the SSE, so the final SSE never exceeds
    the SSE of the initial guess. Stops when the relative SSE change or
    the parameter step drops below the configured tolerances; otherwise
    returns the best parameters found with converged=False.
    """
    config = config or FitConfig()
    counts = np.asarray(hist.counts, dtype=np.float64)
    if int(np.count_nonzero(counts)) < 6:
        raise DataError(
            f"fit needs at least 6 bins with nonzero counts, got {int(np.count_nonzero(counts))}"
        )
    x = hist.bin_centers
    guess = init if init is not None else initial_guess(hist)
    theta = _project(guess.theta())

    residual = _gaussian_sum(theta, x) - counts
    sse = float(residual @ residual)
    damping = 1e-3
    converged = False
    iterations = 0

    while iterations < config.max_iterations:
        iterations += 1
        jac = _jacobian(theta, x)
        gradient = jac.T @ residual
        if not np.any(gradient):
            # Exactly stationary (includes a perfect zero-residual fit).
            converged = True
            break
        normal = jac.T @ jac
        diag = np.diag(normal).copy()
        diag[diag <= 0.0] = 1e-12
        try:
            step = np.linalg.solve(normal + damping * np.diag(diag), -gradient)
        except np.linalg.LinAlgError:
            damping *= 10.0
            if damping > 1e14:
                break
            continue
        candidate = _project(theta + step)
        candidate_residual = _gaussian_sum(candidate, x) - counts
        candidate_sse = float(candidate_residual @ candidate_residual)
        if candidate_sse < sse:
            improvement = sse - candidate_sse
            theta, residual, sse = candidate, candidate_residual, candidate_sse
            damping = max(damping / 10.0, 1e-12)
            if (
                candidate_sse == 0.0
                or improvement <= config.sse_rtol * max(sse, 1e-300)
                or float(np.max(np.abs(step))) <= config.step_tol
            ):
                converged = True
                break
        else:
            damping *= 10.0
            if damping > 1e14:
                break

    a1, mu1, s1, a2, mu2, s2 = theta
    return BimodalFit(
        a1=float(a1),
        mu1=float(mu1),
        s1=float(s1),
        a2=float(a2),
        mu2=float(mu2),
        s2=float(s2),
        residual_sse=sse,
        converged=converged,
        iterations=iterations,
    )


def write_fit_report(
    path: str | Path,
    fit: BimodalFit,
    *,
    bins: int,
    sample_count: int,
    config_echo: str | None = None,
) -> None:
    record = {
        "a1": fit.a1,
        "mu1": fit.mu1,
        "s1": fit.s1,
        "a2": fit.a2,
        "mu2": fit.mu2,
        "s2": fit.s2,
        "residual_sse": fit.residual_sse,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "bins": bins,
        "sample_count": sample_count,
    }
    if config_echo is not None:
        record["config"] = json.loads(config_echo)
    atomic_write_text(path, json.dumps(record, indent=2) + "\n")


def write_fit_curve(
    path: str | Path, fit: BimodalFit, *, points: int = 200, config_echo: str | None = None
) -> None:
    """Emit (x, fitted value) pairs at uniform x for plotting overlays."""
    xs = np.linspace(0.0, 1.0, points)
    values = _gaussian_sum(fit.theta(), xs)
    lines = []
    if config_echo is not None:
        lines.append(f"# config: {config_echo}")
    lines.append(FIT_CURVE_CSV_HEADER)
    lines.extend(f"{float(x)!r},{float(v)!r}" for x, v in zip(xs, values))
    atomic_write_text(path, "\n".join(lines) + "\n")
