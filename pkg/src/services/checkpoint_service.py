"""
Self-describing checkpoint files.

A checkpoint is a ``torch.save`` of a plain dictionary: the detector kind, its
configuration, the feature configuration and fingerprint, parameters,
training history, split parameters, the fingerprint of the manifest it was
trained on and (for the anomaly detector) the calibration block. Loading under a different feature configuration is refused.
"""
import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import torch

from src.app.models.detection import (
    AnomalyConfig,
    ClassifierConfig,
    DetectionMethod,
    EpochRecord,
    ThresholdCalibration,
)
from src.app.models.features import FeatureExtractorConfig
from src.services.anomaly_service import AnomalyModel, init_anomaly
from src.services.classifier_service import ClassifierModel, init_classifier
from src.services.utils.exceptions import ConfigurationError, InputError, InputValidationError
from src.services.utils.json_formatter import fingerprint, get_formatted_json
from src.utils.logging import get_logger

logger = get_logger(__name__)

CHECKPOINT_FORMAT_VERSION = 1

DetectorModel = Union[ClassifierModel, AnomalyModel]


@dataclass
class Checkpoint:
    """A loaded detector plus the metadata it was saved with."""
    kind: DetectionMethod
    model: DetectorModel
    fe_config: FeatureExtractorConfig
    run_fingerprint: Optional[str] = None
    techniques: list[str] = field(default_factory=list)
    split: dict[str, Any] = field(default_factory=dict)
    manifest_fingerprint: Optional[str] = None

    @property
    def fe_fingerprint(self) -> str:
        return fingerprint(self.fe_config)


def history_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".history.json")


def save_checkpoint(
    path: Path,
    model: DetectorModel,
    fe_config: FeatureExtractorConfig,
    run_fingerprint: Optional[str] = None,
    techniques: Optional[list[str]] = None,
    split: Optional[dict[str, Any]] = None,
    manifest_fingerprint: Optional[str] = None,
) -> Path:
    """Write the checkpoint and its history sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kind = DetectionMethod.CLASSIFIER if isinstance(model, ClassifierModel) else DetectionMethod.ANOMALY
    history = [record.model_dump(mode="json") for record in model.history]
    payload: dict[str, Any] = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": kind.value,
        "config": model.config.model_dump(mode="json"),
        "fe_config": fe_config.model_dump(mode="json"),
        "fe_fingerprint": fingerprint(fe_config),
        "run_fingerprint": run_fingerprint,
        "state_dict": model.network.state_dict(),
        "history": history,
        "techniques": sorted(techniques or []),
        "split": split or {},
        "manifest_fingerprint": manifest_fingerprint,
        "calibration": None,
    }
    if isinstance(model, ClassifierModel):
        payload["best_epoch"] = model.best_epoch
    elif model.calibration is not None:
        payload["calibration"] = model.calibration.model_dump(mode="json")
    torch.save(payload, path)
    history_path(path).write_text(get_formatted_json({"kind": kind.value, "history": history}, pretty=True))
    logger.info(f"Saved {kind.value} checkpoint to {path}")
    return path


def load_checkpoint(
    path: Path,
    fe_config: Optional[FeatureExtractorConfig] = None,
    expected_kind: Optional[DetectionMethod] = None,
) -> Checkpoint:
    """
    Rebuild the detector stored at ``path``. When ``fe_config`` is given its
    fingerprint must match the stored one.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"Checkpoint not found: {path}", details={"path": str(path)})
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except (RuntimeError, ValueError, pickle.UnpicklingError, EOFError) as e:
        raise InputError(f"Cannot read checkpoint '{path}': {e}")
    if not isinstance(payload, dict) or "kind" not in payload:
        raise InputValidationError(f"'{path}' is not a detector checkpoint")

    kind = DetectionMethod(payload["kind"])
    if expected_kind is not None and kind != expected_kind:
        raise InputValidationError(
            f"Expected a {expected_kind.value} checkpoint, got {kind.value}",
            details={"path": str(path)},
        )
    stored_fe_config = FeatureExtractorConfig.model_validate(payload["fe_config"])
    if fe_config is not None and fingerprint(fe_config) != payload["fe_fingerprint"]:
        raise ConfigurationError(
            "Checkpoint was trained under a different feature configuration",
            details={"stored": payload["fe_fingerprint"], "requested": fingerprint(fe_config)},
        )

    history = [EpochRecord.model_validate(record) for record in payload["history"]]
    if kind == DetectionMethod.CLASSIFIER:
        model: DetectorModel = init_classifier(ClassifierConfig.model_validate(payload["config"]))
        model.best_epoch = payload.get("best_epoch")
    else:
        model = init_anomaly(AnomalyConfig.model_validate(payload["config"]))
        if payload.get("calibration") is not None:
            model.calibration = ThresholdCalibration.model_validate(payload["calibration"])
    model.network.load_state_dict(payload["state_dict"])
    model.network.eval()
    model.history = history
    return Checkpoint(
        kind=kind,
        model=model,
        fe_config=stored_fe_config,
        run_fingerprint=payload.get("run_fingerprint"),
        techniques=list(payload.get("techniques", [])),
        split=dict(payload.get("split", {})),
        manifest_fingerprint=payload.get("manifest_fingerprint"),
    )
