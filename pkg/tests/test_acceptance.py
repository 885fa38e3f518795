"""Acceptance suite: one test per release criterion, at pinned tolerances.

Each test prints a single PASS/FAIL line so the suite can be read as a
checklist (`pytest tests/test_acceptance.py -v -s`).
"""

from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from conftest import finite_difference_gradient, mixed_session_trace, run_cli
from conctrack.bimodal import BimodalFit, Histogram1D, _gaussian_sum, build_histogram, fit_bimodal
from conctrack.features import FeatureWindowConfig, extract_features
from conctrack.kalman import KalmanParams, kf_step, read_series_csv, run_filter
from conctrack.keypoints import KeypointFrame, LabeledTrace, Point, save_trace
from conctrack.mlp import RecognitionSeries, TrainConfig, backward, init_model, kfold_cv
from conctrack.synth import SynthConfig, generate_dataset
from conftest import labeled_matrix


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def test_c1_gradient_correctness():
    with criterion("C1 gradient-correctness"):
        start = time.perf_counter()
        rng = np.random.default_rng(1000)
        worst = 0.0
        for _ in range(20):
            model = init_model(rng)
            n = int(rng.integers(4, 17))
            x = rng.uniform(0.0, 0.5, size=(n, 4))
            y = rng.integers(0, 2, size=n).astype(float)
            analytic = backward(model, x, y).to_vector()
            numeric = finite_difference_gradient(model.to_vector(), x, y, h=1e-6)
            # Floor guards entries below the finite-difference noise level
            # (roundoff in the loss is ~1e-10 at h = 1e-6).
            denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3)
            worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
        elapsed = time.perf_counter() - start
        assert worst < 1e-6, f"worst relative error {worst:.3e}"
        assert elapsed < 10.0, f"took {elapsed:.1f}s"


def test_c2_kalman_oracle_equivalence():
    with criterion("C2 kalman-oracle-equivalence"):
        start = time.perf_counter()
        rng = np.random.default_rng(2000)
        for r in (0.05, 0.1, 1.0, 7.5):
            params = KalmanParams(measurement_noise=r)
            measurements = rng.uniform(0.0, 1.0, size=1000)
            series = RecognitionSeries(
                values=tuple(np.clip(measurements, 1e-6, 1 - 1e-6)),
                t_seconds=tuple(float(i) for i in range(1000)),
            )
            out = run_filter(series, params)
            prior_weight = 1.0 / 0.9
            running_sum = 0.0
            state = params.initial_state()
            for t, m in enumerate(series.values, start=1):
                running_sum += m
                fused = (0.5 * prior_weight + running_sum / r) / (prior_weight + t / r)
                assert abs(out.values[t - 1] - fused) < 1e-10
                state = kf_step(state, m, params)
                assert abs(state.covariance - 1.0 / (prior_weight + t / r)) < 1e-12
        elapsed = time.perf_counter() - start
        assert elapsed < 1.0, f"took {elapsed:.2f}s"


def test_c3_first_step_hand_check():
    with criterion("C3 first-step-hand-check"):
        params = KalmanParams()  # x0=0.5, P0=0.9, R=0.1, A=H=1, Q=0
        state = kf_step(params.initial_state(), 1.0, params)
        gain = 0.9 / (0.9 + 0.1)
        assert abs(gain - 0.9) < 1e-15
        assert abs(state.estimate - 0.95) < 1e-15
        assert abs(state.covariance - 0.09) < 1e-15


def test_c4_surrogate_accuracy_protocol():
    with criterion("C4 surrogate-accuracy-protocol"):
        start = time.perf_counter()
        config = SynthConfig(seed=42, frames=100)
        assert config.jitter_high == 0.002 and config.jitter_low == 0.010
        traces = generate_dataset(config, 200)
        x, y = labeled_matrix(traces)
        assert x.shape == (800, 4)
        train_config = TrainConfig(seed=11)
        assert train_config.learning_rate == 0.001 and train_config.folds == 5
        result = kfold_cv(x, y, train_config)
        elapsed = time.perf_counter() - start
        assert result.stratified
        assert result.median_accuracy >= 0.90, f"median {result.median_accuracy:.4f}"
        assert elapsed < 60.0, f"took {elapsed:.1f}s"


def test_c5_mixture_fit_recovery():
    with criterion("C5 mixture-fit-recovery"):
        start = time.perf_counter()
        truth = BimodalFit(a1=120.0, mu1=0.3, s1=0.05, a2=80.0, mu2=0.7, s2=0.08)
        edges = np.linspace(0.0, 1.0, 41)
        centers = 0.5 * (edges[:-1] + edges[1:])
        hist = Histogram1D(bin_edges=edges, counts=_gaussian_sum(truth.theta(), centers))
        fit = fit_bimodal(hist)
        assert np.max(np.abs(fit.theta() - truth.theta())) < 1e-6
        assert fit.residual_sse < 1e-9

        rng = np.random.default_rng(123)
        component = rng.integers(0, 2, size=2000)
        means = np.where(component == 0, 0.09, 0.16)
        samples = np.clip(rng.normal(means, 0.02), 0.0, 1.0)
        sampled_fit = fit_bimodal(build_histogram(samples, 40))
        assert abs(sampled_fit.mu1 - 0.09) <= 0.01, f"mu1 {sampled_fit.mu1:.4f}"
        assert abs(sampled_fit.mu2 - 0.16) <= 0.01, f"mu2 {sampled_fit.mu2:.4f}"
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0, f"took {elapsed:.1f}s"


def _random_window_trace(rng: np.random.Generator, n_windows: int) -> LabeledTrace:
    frames = []
    for i in range(n_windows * 50):
        triples = rng.uniform(0.0, 1.0, (10, 3))
        frames.append(
            KeypointFrame(i, tuple(Point(float(a), float(b), float(c)) for a, b, c in triples))
        )
    return LabeledTrace(tuple(frames), label=0, fps=20.0)


def test_c6_feature_oracle_equivalence():
    with criterion("C6 feature-oracle-equivalence"):
        rng = np.random.default_rng(600)
        config = FeatureWindowConfig()
        checked = 0
        for _ in range(20):
            trace = _random_window_trace(rng, 50)
            vectors, _ = extract_features(trace, config)
            for v in vectors:
                start = v.window_index * 50
                pools = {"tx": [], "ty": [], "mx": [], "my": []}
                for frame in trace.frames[start : start + 50]:
                    for j, p in enumerate(frame.points):
                        if p.confidence < config.confidence_threshold:
                            continue
                        part = "t" if j < 5 else "m"
                        pools[part + "x"].append(p.x)
                        pools[part + "y"].append(p.y)

                def oracle(values):
                    mean = sum(values) / len(values)
                    return math.sqrt(sum((u - mean) ** 2 for u in values) / len(values))

                assert abs(v.sigma_top_x - oracle(pools["tx"])) < 1e-12
                assert abs(v.sigma_top_y - oracle(pools["ty"])) < 1e-12
                assert abs(v.sigma_mid_x - oracle(pools["mx"])) < 1e-12
                assert abs(v.sigma_mid_y - oracle(pools["my"])) < 1e-12
                checked += 1
        assert checked == 1000

        # Translation invariance and scale equivariance at 1e-12.
        rng = np.random.default_rng(601)
        frames = []
        for i in range(200):
            pts = rng.uniform(0.3, 0.6, (10, 2))
            frames.append(
                KeypointFrame(i, tuple(Point(float(a), float(b), 1.0) for a, b in pts))
            )
        base = LabeledTrace(tuple(frames), label=1, fps=20.0)
        base_vectors, _ = extract_features(base, config)
        for dx, dy, k in ((0.2, -0.1, 1.0), (-0.05, 0.15, 1.0), (0.0, 0.0, 0.5), (0.0, 0.0, 0.125)):
            moved = LabeledTrace(
                tuple(
                    KeypointFrame(
                        f.frame_index,
                        tuple(Point(p.x * k + dx, p.y * k + dy, p.confidence) for p in f.points),
                    )
                    for f in base.frames
                ),
                label=1,
                fps=20.0,
            )
            moved_vectors, _ = extract_features(moved, config)
            for a, b in zip(base_vectors, moved_vectors):
                assert np.max(np.abs(a.as_array() * k - b.as_array())) < 1e-12


def test_c7_cadence(tmp_path, training_setup):
    with criterion("C7 cadence"):
        trace = mixed_session_trace(700, [(0, 500), (1, 250), (0, 250)], fps=20.0)
        assert len(trace.frames) == 1000 and trace.fps == 20.0
        trace_path = tmp_path / "cadence.jsonl"
        save_trace(trace, trace_path)
        feat_dir = tmp_path / "feat"
        assert run_cli("--out", str(feat_dir), "preprocess", str(trace_path)) == 0
        rec_dir = tmp_path / "rec"
        assert run_cli(
            "--out", str(rec_dir), "recognize", str(feat_dir / "features.csv"),
            "--model", str(training_setup["model_path"]),
        ) == 0
        est_dir = tmp_path / "est"
        assert run_cli("--out", str(est_dir), "estimate", str(rec_dir / "recognition.csv")) == 0
        series = read_series_csv(est_dir / "series.csv")
        assert len(series["window_index"]) == 20
        assert series["t_seconds"] == [2.5 * (i + 1) for i in range(20)]


def test_c8_end_to_end_determinism(tmp_path, training_setup, session_trace_file):
    with criterion("C8 end-to-end-determinism"):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"seed": 5, "kalman": {"process_noise": 0.02}}))
        outputs = []
        for name in ("first", "second"):
            out = tmp_path / name
            code = run_cli(
                "--config", str(config_path), "--out", str(out), "run",
                str(session_trace_file), "--model", str(training_setup["model_path"]),
            )
            assert code == 0
            outputs.append(out)
        for artifact in ("features.csv", "series.csv", "fit_report.json", "fit_curve.csv"):
            first = (outputs[0] / artifact).read_bytes()
            second = (outputs[1] / artifact).read_bytes()
            assert first == second, f"{artifact} differs between identical runs"
