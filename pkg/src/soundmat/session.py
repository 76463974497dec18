"""The record -> train -> infer session state machine.

A session starts in TRAINING, collects labeled clips per action,
trains a forest on demand (passing through TRAINING_IN_PROGRESS), and
then serves inference until the mode button returns it to TRAINING
with its dataset and model intact for another iteration.

One session has one logical owner: callers must serialize all
operations on it. Training may run off-thread via the begin/complete
pair; only those two calls touch session state for it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum

from .actions import Action
from .audio import AudioClip, FeatureExtractor, LogMelExtractor
from .errors import (
    AlreadyTraining,
    InsufficientClasses,
    MalformedJson,
    NoZoneSelected,
    NothingToDelete,
    NotInInferenceMode,
    NotInTrainingMode,
)
from .forest import (
    ForestConfig,
    ForestModel,
    LabeledSample,
    model_from_json,
    model_to_json,
    predict_proba,
    top_action,
    train_forest,
)

import numpy as np

SNAPSHOT_FORMAT = "soundmat-session"
SNAPSHOT_VERSION = 1


class Mode(Enum):
    TRAINING = "training"
    TRAINING_IN_PROGRESS = "training_in_progress"
    INFERENCE = "inference"


@dataclass(frozen=True)
class InferenceResult:
    probabilities: dict[Action, float]
    top: Action
    latency_ms: int


class Session:
    def __init__(
        self,
        seed: int = 42,
        extractor: FeatureExtractor | None = None,
        forest_config: ForestConfig | None = None,
    ) -> None:
        self.seed = seed
        self.extractor = extractor if extractor is not None else LogMelExtractor()
        self.forest_config = forest_config if forest_config is not None else ForestConfig()
        self.mode = Mode.TRAINING
        self.dataset: dict[Action, list[LabeledSample]] = {a: [] for a in Action}
        self.recording_log: list[tuple[Action, int]] = []
        self.model: ForestModel | None = None
        self.current_zone: Action | None = None

    # -- dataset management ------------------------------------------------

    def counts(self) -> dict[Action, int]:
        return {a: len(samples) for a, samples in self.dataset.items()}

    def set_zone(self, zone: Action | None) -> None:
        self.current_zone = zone

    def record_sample(self, clip: AudioClip, label: Action | None = None) -> int:
        """Extract features from the clip and file them under ``label``
        (default: the current zone). Returns the label's new count."""
        if self.mode is not Mode.TRAINING:
            raise NotInTrainingMode(f"cannot record in mode {self.mode.value}")
        if label is None:
            label = self.current_zone
        if label is None:
            raise NoZoneSelected("device is not on any action zone")
        features = self.extractor.extract(clip)
        self.dataset[label].append(LabeledSample(features=features, label=label))
        self.recording_log.append((label, len(self.dataset[label]) - 1))
        return len(self.dataset[label])

    def delete_last(self) -> Action:
        """Remove the most recently recorded sample, whatever its label."""
        if self.mode is not Mode.TRAINING:
            raise NotInTrainingMode(f"cannot delete in mode {self.mode.value}")
        if not self.recording_log:
            raise NothingToDelete("no recordings to delete")
        label, index = self.recording_log.pop()
        self.dataset[label].pop(index)
        return label

    def reset_all(self) -> None:
        """Drop every recording; any trained model stays until retrained."""
        if self.mode is not Mode.TRAINING:
            raise NotInTrainingMode(f"cannot reset in mode {self.mode.value}")
        for samples in self.dataset.values():
            samples.clear()
        self.recording_log.clear()

    # -- training ----------------------------------------------------------

    def _samples_in_recorded_order(self) -> list[LabeledSample]:
        return [self.dataset[label][index] for label, index in self.recording_log]

    def begin_training(self) -> list[LabeledSample]:
        """Validate and enter TRAINING_IN_PROGRESS; returns the training
        set snapshot in recorded order for an off-thread trainer."""
        if self.mode is Mode.TRAINING_IN_PROGRESS:
            raise AlreadyTraining("a training run is already in progress")
        if self.mode is not Mode.TRAINING:
            raise NotInTrainingMode(f"cannot train in mode {self.mode.value}")
        present = [a for a, samples in self.dataset.items() if samples]
        if len(present) < 2:
            raise InsufficientClasses(
                f"need samples for at least 2 actions, have {len(present)}"
            )
        self.mode = Mode.TRAINING_IN_PROGRESS
        return self._samples_in_recorded_order()

    def complete_training(self, model: ForestModel) -> None:
        self.model = model
        self.mode = Mode.INFERENCE

    def abort_training(self) -> None:
        self.mode = Mode.TRAINING

    def start_training(self) -> ForestModel:
        """Synchronous train: TRAINING -> TRAINING_IN_PROGRESS -> INFERENCE.

        On any training failure the mode reverts to TRAINING and the
        error propagates.
        """
        samples = self.begin_training()
        try:
            model = train_forest(samples, self.forest_config, self.seed)
        except Exception:
            self.abort_training()
            raise
        self.complete_training(model)
        return model

    # -- inference ---------------------------------------------------------

    def infer(self, clip: AudioClip) -> InferenceResult:
        if self.mode is not Mode.INFERENCE or self.model is None:
            raise NotInInferenceMode(f"cannot infer in mode {self.mode.value}")
        start = time.perf_counter()
        features = self.extractor.extract(clip)
        probs = predict_proba(self.model, features)
        top = top_action(probs)
        latency_ms = int((time.perf_counter() - start) * 1000)
        return InferenceResult(probabilities=probs, top=top, latency_ms=latency_ms)

    # -- mode button -------------------------------------------------------

    def press_mode_button(self) -> Mode:
        """The single physical button: trains in TRAINING, returns to
        TRAINING from INFERENCE, does nothing mid-training."""
        if self.mode is Mode.INFERENCE:
            self.mode = Mode.TRAINING
        elif self.mode is Mode.TRAINING:
            self.start_training()
        return self.mode

    # -- persistence ---------------------------------------------------------

    def snapshot(self) -> dict:
        recordings = [
            {
                "action": int(label),
                "features": [float(v) for v in self.dataset[label][index].features],
            }
            for label, index in self.recording_log
        ]
        # an interrupted training run is not resumable across restarts
        mode = Mode.TRAINING if self.mode is Mode.TRAINING_IN_PROGRESS else self.mode
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "mode": mode.value,
            "seed": self.seed,
            "current_zone": int(self.current_zone) if self.current_zone is not None else None,
            "recordings": recordings,
            "model": model_to_json(self.model) if self.model is not None else None,
        }


def session_from_snapshot(
    doc: dict,
    extractor: FeatureExtractor | None = None,
    forest_config: ForestConfig | None = None,
) -> Session:
    try:
        if doc["format"] != SNAPSHOT_FORMAT or doc["version"] != SNAPSHOT_VERSION:
            raise MalformedJson(f"unsupported snapshot: {doc.get('format')!r}")
        session = Session(seed=int(doc["seed"]), extractor=extractor, forest_config=forest_config)
        for rec in doc["recordings"]:
            label = Action(int(rec["action"]))
            features = np.asarray(rec["features"], dtype=np.float64)
            session.dataset[label].append(LabeledSample(features=features, label=label))
            session.recording_log.append((label, len(session.dataset[label]) - 1))
        if doc["model"] is not None:
            session.model = model_from_json(doc["model"])
        zone = doc.get("current_zone")
        session.current_zone = Action(int(zone)) if zone is not None else None
        mode = Mode(doc["mode"])
        if mode is Mode.INFERENCE and session.model is None:
            raise MalformedJson("snapshot claims inference mode without a model")
        session.mode = mode
        return session
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedJson(f"bad snapshot document: {exc}") from exc
