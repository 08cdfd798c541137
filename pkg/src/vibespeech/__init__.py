"""Accelerometer speech side-channel toolkit.

Synthesizes or ingests loudspeaker-impacted accelerometer traces, detects
and isolates speech, extracts time-frequency or cepstral features, and
trains/evaluates gender, speaker, and word classifiers, including
confidence-thresholded keyword search.
"""

__version__ = "0.1.0"

from .trace import (
    AudioClip,
    SensorTrace,
    load_audio,
    load_trace,
    save_trace,
    trim_protocol_edges,
)
from .synth import ResponseModel, alias_frequency, synthesize_trace
from .segment import (
    IsolationConfig,
    SpeechSegment,
    detect_speech_region,
    highpass_motion_filter,
    isolate_words,
    speech_present,
)
from .features import (
    FEATURE_NAMES,
    FeatureVector,
    LabeledDataset,
    MfccConfig,
    PipelineConfig,
    build_dataset,
    extract_mfcc_features,
    extract_tf_features,
    load_dataset,
    rank_features_info_gain,
    save_dataset,
)
from .learn import (
    ForestConfig,
    ForestModel,
    LogisticConfig,
    LogisticModel,
    Prediction,
    load_model,
    predict,
    save_model,
    train_forest,
    train_logistic,
    train_tree,
)
from .evaluate import (
    EvalReport,
    binary_one_vs_others,
    evaluate_cv,
    evaluate_split,
    keyword_confidence_cdf,
    keyword_filter,
    load_report,
    metrics_from_confusion,
    pick_threshold,
    save_report,
)

__all__ = [
    "AudioClip",
    "SensorTrace",
    "load_audio",
    "load_trace",
    "save_trace",
    "trim_protocol_edges",
    "ResponseModel",
    "alias_frequency",
    "synthesize_trace",
    "IsolationConfig",
    "SpeechSegment",
    "detect_speech_region",
    "highpass_motion_filter",
    "isolate_words",
    "speech_present",
    "FEATURE_NAMES",
    "FeatureVector",
    "LabeledDataset",
    "MfccConfig",
    "PipelineConfig",
    "build_dataset",
    "extract_mfcc_features",
    "extract_tf_features",
    "load_dataset",
    "rank_features_info_gain",
    "save_dataset",
    "ForestConfig",
    "ForestModel",
    "LogisticConfig",
    "LogisticModel",
    "Prediction",
    "load_model",
    "predict",
    "save_model",
    "train_forest",
    "train_logistic",
    "train_tree",
    "EvalReport",
    "binary_one_vs_others",
    "evaluate_cv",
    "evaluate_split",
    "keyword_confidence_cdf",
    "keyword_filter",
    "load_report",
    "metrics_from_confusion",
    "pick_threshold",
    "save_report",
    "__version__",
]
