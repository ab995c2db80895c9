"""Multiscale CSP and Riemannian tangent-space classification of 4-class
motor-imagery EEG."""

from .dataset import (
    ClassBalanceReport,
    TrialSet,
    exclude_artifacts,
    load_trials,
    store_trials,
    synth_trials,
)
from .dsp import (
    BandSpec,
    BiquadCascade,
    WindowSpec,
    default_bands,
    default_windows,
    design_butter_bandpass,
    filter_forward,
    slice_window,
)
from .errors import ConfigError, DataError, MibciError, NumericError
from .pipeline import (
    ExperimentConfig,
    FeatureExtractor,
    RunReport,
    SubjectResult,
    TrainedModel,
    evaluate,
    extract_features,
    feature_dim,
    fit,
    load_model,
    run_benchmark,
    save_model,
)
from .svm import CvReport, SvmModel, grid_search_cv, predict, train_svm

__version__ = "0.1.0"

__all__ = [
    "BandSpec", "BiquadCascade", "ClassBalanceReport", "ConfigError",
    "CvReport", "DataError", "ExperimentConfig", "FeatureExtractor",
    "MibciError", "NumericError", "RunReport", "SubjectResult", "SvmModel",
    "TrainedModel", "TrialSet", "WindowSpec", "default_bands",
    "default_windows", "design_butter_bandpass", "evaluate",
    "exclude_artifacts", "extract_features", "feature_dim", "filter_forward",
    "fit", "grid_search_cv", "load_model", "load_trials", "predict",
    "run_benchmark", "save_model", "slice_window", "store_trials",
    "synth_trials", "train_svm",
]
