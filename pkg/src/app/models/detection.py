from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field, model_validator


class DetectionMethod(str, Enum):
    """Which detector produced a verdict."""
    CLASSIFIER = "classifier"
    ANOMALY = "anomaly"


class VerdictLabel(str, Enum):
    """Verdict on the suspicious image."""
    REAL = "real"
    FACE_SWAPPED = "face-swapped"


class ClassifierConfig(BaseModel):
    """Training hyperparameters of the style feature classifier."""
    alpha: float = Field(0.5, ge=0, description="Weight of the stacked identity loss")
    learning_rate: float = Field(1e-4, gt=0)
    batch_size: int = Field(64, ge=1)
    epochs: int = Field(200, ge=1)
    seed: int = 0
    input_dim: Optional[int] = Field(None, description="Stack length, derived from the feature config")
    widths: tuple[int, int, int, int] = Field((32, 64, 128, 128), description="Conv block channel widths")
    augment: bool = False

    @classmethod
    def desk(cls, **overrides) -> "ClassifierConfig":
        """Desk-scale preset."""
        return cls(**{"epochs": 50, **overrides})


class AnomalyConfig(BaseModel):
    """Training hyperparameters of the dual encoder anomaly detector."""
    learning_rate: float = Field(1e-4, gt=0)
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(200, ge=1)
    latent_dim: int = Field(64, ge=1)
    seed: int = Field(0, ge=0)
    input_dim: Optional[int] = Field(None, description="Stack length, derived from the feature config")
    widths: tuple[int, int] = Field((64, 128), description="Encoder channel widths before the latent layer")

    @classmethod
    def desk(cls, **overrides) -> "AnomalyConfig":
        """Desk-scale preset."""
        return cls(**{"epochs": 50, **overrides})


class ThresholdCalibration(BaseModel):
    """Reconstruction-loss threshold: mean plus k population standard deviations."""
    mu: float
    sigma: float = Field(..., ge=0)
    k: float = Field(2.0, ge=0)
    threshold: float
    n_pairs: int = Field(0, ge=0)

    @model_validator(mode="after")
    def validate_threshold(self):
        """threshold = mu + k * sigma."""
        expected = self.mu + self.k * self.sigma
        if abs(self.threshold - expected) > 1e-9 * max(1.0, abs(expected)):
            raise ValueError("threshold must equal mu + k * sigma")
        return self

    @classmethod
    def from_statistics(cls, mu: float, sigma: float, k: float = 2.0, n_pairs: int = 0) -> "ThresholdCalibration":
        return cls(mu=mu, sigma=sigma, k=k, threshold=mu + k * sigma, n_pairs=n_pairs)


class Verdict(BaseModel):
    """Decision on one (reference, suspicious) pair."""
    label: VerdictLabel
    score: float = Field(..., description="Pair-is-real probability or anomaly score")
    method: DetectionMethod
    threshold_used: Optional[float] = None

    @property
    def is_face_swapped(self) -> bool:
        return self.label == VerdictLabel.FACE_SWAPPED

    @classmethod
    def from_probability(cls, probability: float, decision_cutoff: float) -> "Verdict":
        """Classifier rule: face-swapped iff the pair-is-real probability is below the cutoff."""
        label = VerdictLabel.FACE_SWAPPED if probability < decision_cutoff else VerdictLabel.REAL
        return cls(label=label, score=probability, method=DetectionMethod.CLASSIFIER, threshold_used=decision_cutoff)

    @classmethod
    def from_anomaly_score(cls, score: float, threshold: float) -> "Verdict":
        """Anomaly rule: face-swapped iff the score strictly exceeds the threshold."""
        label = VerdictLabel.FACE_SWAPPED if score > threshold else VerdictLabel.REAL
        return cls(label=label, score=score, method=DetectionMethod.ANOMALY, threshold_used=threshold)


class EpochRecord(BaseModel):
    """One training_history entry."""
    epoch: int = Field(..., ge=1)
    train_loss: float
    bce: Optional[float] = None
    sil: Optional[float] = None
    val_loss: Optional[float] = None
    val_accuracy: Optional[float] = None
    val_auc: Optional[float] = None
