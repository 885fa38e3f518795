"""Seeded synthetic keypoint traces for end-to-end testing and demos.

A trace is a fixed seated-upper-body pose plus per-frame Gaussian jitter
whose magnitude depends on the session label: the high-concentration
class barely moves while the low-concentration class jitters more and
slowly sways sideways. All generation is deterministic per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .keypoints import KeypointFrame, LabeledTrace, Point

# Head cluster (points 0-4) over neck/shoulders/elbows (points 5-9),
# centered in the frame the way a webcam sees a seated student.
DEFAULT_BASE_POSE: tuple[tuple[float, float], ...] = (
    (0.50, 0.30),
    (0.47, 0.28),
    (0.53, 0.28),
    (0.44, 0.30),
    (0.56, 0.30),
    (0.50, 0.42),
    (0.38, 0.45),
    (0.62, 0.45),
    (0.34, 0.60),
    (0.66, 0.60),
)

# Slow postural sway for the low-concentration class (5 s period).
SWAY_FREQUENCY_HZ = 0.2


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    frames: int = 100
    fps: float = 20.0
    base_pose: tuple[tuple[float, float], ...] = DEFAULT_BASE_POSE
    jitter_high: float = 0.002
    jitter_low: float = 0.010
    drift_low: float = 0.02

    def __post_init__(self) -> None:
        object.__setattr__(self, "base_pose", tuple((float(x), float(y)) for x, y in self.base_pose))
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.frames < 1:
            raise ValueError(f"frames must be positive, got {self.frames}")
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        if len(self.base_pose) != 10:
            raise ValueError(f"base_pose must have 10 points, got {len(self.base_pose)}")
        if self.jitter_high < 0 or self.jitter_low < 0 or self.drift_low < 0:
            raise ValueError("jitter and drift magnitudes must be non-negative")
        if not self.jitter_high < self.jitter_low:
            raise ValueError("jitter_high must be smaller than jitter_low")


def generate_trace(config: SynthConfig, label: int) -> LabeledTrace:
    """Generate one labeled trace (label 1 = high concentration)."""
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    rng = np.random.default_rng(config.seed)
    jitter = config.jitter_high if label == 1 else config.jitter_low
    base = np.asarray(config.base_pose, dtype=np.float64)
    coords = base[None, :, :] + rng.normal(0.0, jitter, size=(config.frames, 10, 2))
    if label == 0 and config.drift_low > 0:
        phase = rng.uniform(0.0, 2.0 * math.pi)
        t = np.arange(config.frames) / config.fps
        sway = config.drift_low * np.sin(2.0 * math.pi * SWAY_FREQUENCY_HZ * t + phase)
        coords[:, :, 0] += sway[:, None]
    coords = np.clip(coords, 0.0, 1.0)
    frames = tuple(
        KeypointFrame(
            frame_index=i,
            points=tuple(Point(float(x), float(y), 1.0) for x, y in coords[i]),
        )
        for i in range(config.frames)
    )
    return LabeledTrace(frames=frames, label=label, fps=config.fps)


def generate_dataset(config: SynthConfig, traces_per_class: int) -> list[LabeledTrace]:
    """Generate a balanced dataset, one derived seed per trace.

    Traces alternate high/low so the two classes interleave; seeds are
    config.seed + 1 + k for the k-th generated trace, which keeps the
    whole dataset reproducible while every trace gets its own stream.
    """
    if traces_per_class < 1:
        raise ValueError("traces_per_class must be >= 1")
    traces = []
    counter = 0
    for _ in range(traces_per_class):
        for label in (1, 0):
            derived = replace(config, seed=config.seed + 1 + counter)
            traces.append(generate_trace(derived, label))
            counter += 1
    return traces
