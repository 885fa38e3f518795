"""Shared fixtures: synthetic datasets, a trained model, CLI helpers."""

from __future__ import annotations

import numpy as np
import pytest

from conctrack import (
    SynthConfig,
    TrainConfig,
    extract_features,
    generate_dataset,
    generate_trace,
    train,
)
from conctrack.cli import main as cli_main
from conctrack.keypoints import KeypointFrame, LabeledTrace, save_trace
from conctrack.mlp import bce_loss, forward_batch, save_model


def labeled_matrix(traces):
    rows, labels = [], []
    for trace in traces:
        vectors, _ = extract_features(trace)
        rows.extend(f.as_array() for f in vectors)
        labels.extend([trace.label] * len(vectors))
    return np.stack(rows), np.array(labels, dtype=np.float64)


def mixed_session_trace(seed: int, segments, fps: float = 20.0) -> LabeledTrace:
    """Concatenate per-label synthetic segments into one unlabeled session.

    Models a student drifting between states, which is what makes the
    estimated-level distribution genuinely bimodal.
    """
    frames: list[KeypointFrame] = []
    offset = 0
    for k, (label, n_frames) in enumerate(segments):
        config = SynthConfig(seed=seed + k, frames=n_frames, fps=fps)
        segment = generate_trace(config, label)
        frames.extend(
            KeypointFrame(offset + frame.frame_index, frame.points) for frame in segment.frames
        )
        offset += n_frames
    return LabeledTrace(tuple(frames), label=None, fps=fps)


def finite_difference_gradient(model_vector, x, y, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of the batch loss over the flat parameters.

    Independent oracle: perturbs each parameter and re-evaluates the loss
    through the forward path only.
    """
    from conctrack.mlp import MlpModel

    grad = np.empty_like(model_vector)
    for i in range(model_vector.size):
        plus = model_vector.copy()
        plus[i] += h
        minus = model_vector.copy()
        minus[i] -= h
        loss_plus = bce_loss(forward_batch(MlpModel.from_vector(plus), x), y)
        loss_minus = bce_loss(forward_batch(MlpModel.from_vector(minus), x), y)
        grad[i] = (loss_plus - loss_minus) / (2.0 * h)
    return grad


def run_cli(*argv: str) -> int:
    try:
        return cli_main(list(argv))
    except SystemExit as exc:  # argparse errors
        return int(exc.code)


@pytest.fixture(scope="session")
def training_setup(tmp_path_factory):
    """A trained model over a 100-per-class synthetic dataset, on disk."""
    base = tmp_path_factory.mktemp("trained")
    traces = generate_dataset(SynthConfig(seed=42, frames=100), 100)
    x, y = labeled_matrix(traces)
    config = TrainConfig(seed=1)
    result = train(x, y, config)
    model_path = base / "model.json"
    save_model(result.model, model_path, config)
    return {"model_path": model_path, "model": result.model, "x": x, "y": y}


@pytest.fixture(scope="session")
def session_trace_file(tmp_path_factory):
    """A 50-window mixed-state session saved in the canonical format."""
    path = tmp_path_factory.mktemp("session") / "session.jsonl"
    trace = mixed_session_trace(900, [(0, 1000), (1, 600), (0, 900)])
    save_trace(trace, path)
    return path
