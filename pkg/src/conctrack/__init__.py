"""Concentration-level estimation from body-keypoint time series.

The pipeline: keypoint traces -> windowed standard-deviation features ->
a small MLP producing per-window recognition levels -> a scalar Kalman
filter producing estimation levels -> a two-Gaussian fit of the
estimated-level distribution.
"""

from .bimodal import (
    BimodalFit,
    FitConfig,
    Histogram1D,
    build_histogram,
    eval_bimodal,
    fit_bimodal,
    initial_guess,
)
from .config import PipelineConfig, load_pipeline_config
from .errors import ConcTrackError, ConfigError, DataError, InputFormatError, NumericError
from .features import (
    FeatureVector,
    FeatureWindowConfig,
    emit_2d_histogram,
    extract_features,
    feature_matrix,
    population_std,
)
from .kalman import EstimationSeries, KalmanParams, KalmanState, kf_step, run_filter
from .keypoints import (
    KeypointFrame,
    LabeledTrace,
    Point,
    adapt_detector_output,
    load_trace,
    parse_trace,
    save_trace,
    serialize_trace,
)
from .mlp import (
    AdamState,
    MlpModel,
    RecognitionSeries,
    TrainConfig,
    adam_step,
    backward,
    bce_loss,
    forward,
    forward_batch,
    init_model,
    kfold_cv,
    load_model,
    predict_series,
    save_model,
    train,
)
from .synth import SynthConfig, generate_dataset, generate_trace

__version__ = "0.1.0"
