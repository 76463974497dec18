"""soundmat: few-shot sound-to-action training with a mat-zone simulator.

Record one-second sounds while the device sits on an action zone, train
a random forest over log-mel statistics, then let the device classify
live clips and act them out. Everything runs headless: a protocol
server hosts sessions; a simulated device and a CLI drive them.
"""

from .actions import ACTION_NAMES, Action, N_ACTIONS
from .audio import (
    AudioClip,
    CANONICAL_RATE_HZ,
    FeatureConfig,
    FeatureExtractor,
    LogMelExtractor,
    MelSpectrogram,
    compute_log_mel,
    extract_features,
    validate_clip,
)
from .errors import SoundmatError
from .forest import (
    DecisionTree,
    ForestConfig,
    ForestModel,
    LabeledSample,
    Leaf,
    Split,
    model_from_json,
    model_to_json,
    predict_proba,
    predict_top,
    train_forest,
)
from .mat import DevicePose, MatLayout, Rect, canonical_layout, zone_at
from .session import InferenceResult, Mode, Session, session_from_snapshot
from .protocol import Envelope, decode, encode

__version__ = "0.1.0"

__all__ = [
    "ACTION_NAMES",
    "Action",
    "AudioClip",
    "CANONICAL_RATE_HZ",
    "DecisionTree",
    "DevicePose",
    "Envelope",
    "FeatureConfig",
    "FeatureExtractor",
    "ForestConfig",
    "ForestModel",
    "InferenceResult",
    "LabeledSample",
    "Leaf",
    "LogMelExtractor",
    "MatLayout",
    "MelSpectrogram",
    "Mode",
    "N_ACTIONS",
    "Rect",
    "Session",
    "SoundmatError",
    "Split",
    "canonical_layout",
    "compute_log_mel",
    "decode",
    "encode",
    "extract_features",
    "model_from_json",
    "model_to_json",
    "predict_proba",
    "predict_top",
    "session_from_snapshot",
    "train_forest",
    "validate_clip",
    "zone_at",
]
