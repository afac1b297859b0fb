from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field

from src.app.models.detection import DetectionMethod


class Protocol(str, Enum):
    """Evaluation protocols keyed by technique membership."""
    IN_DATASET = "in-dataset"
    CROSS_DATASET = "cross-dataset"


class ConfusionCounts(BaseModel):
    """Confusion table; the positive class is face-swapped."""
    tp: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    tn: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)

    @property
    def n_pairs(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class MetricsReport(BaseModel):
    """Detection metrics for one (method, protocol) run. Undefined metrics stay None."""
    accuracy: float = Field(..., ge=0, le=1)
    precision: Optional[float] = Field(None, ge=0, le=1)
    recall: Optional[float] = Field(None, ge=0, le=1)
    f1: Optional[float] = Field(None, ge=0, le=1)
    auc: Optional[float] = Field(None, ge=0, le=1)
    confusion: ConfusionCounts
    n_pairs: int = Field(..., ge=1)
    protocol: Optional[Protocol] = None
    method: Optional[DetectionMethod] = None
    dataset_id: Optional[str] = None
    decision_cutoff: Optional[float] = None
    threshold: Optional[float] = None
    techniques: list[str] = Field(default_factory=list)
    scenario_accuracy: dict[str, float] = Field(default_factory=dict)
    fingerprints: dict[str, str] = Field(default_factory=dict)


class EvaluationDocument(BaseModel):
    """Report file: one entry per (method, protocol)."""
    reports: list[MetricsReport] = Field(default_factory=list)
    run_fingerprint: Optional[str] = None
