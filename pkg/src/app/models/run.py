from pathlib import Path

from pydantic import BaseModel, Field

from src.app.models.detection import AnomalyConfig, ClassifierConfig
from src.app.models.features import FeatureExtractorConfig
from src.services.utils.json_formatter import fingerprint


class DataConfig(BaseModel):
    """Synthetic generation and split parameters."""
    seed: int = 7
    identities: int = Field(20, ge=1)
    pairs: int = Field(500, ge=1)
    artifact_level: float = Field(0.5, ge=0, le=1)
    technique: str = "synthetic-swap"
    train_fraction: float = 0.8
    out_dir: Path = Path("data/synthetic")


class RunConfig(BaseModel):
    """Fully resolved configuration of one command run."""
    features: FeatureExtractorConfig = Field(default_factory=FeatureExtractorConfig)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig.desk)
    anomaly: AnomalyConfig = Field(default_factory=AnomalyConfig.desk)
    data: DataConfig = Field(default_factory=DataConfig)
    decision_cutoff: float = Field(0.5, ge=0, le=1)
    k: float = Field(2.0, ge=0)

    @property
    def fingerprint(self) -> str:
        """Hash of everything except output locations."""
        payload = self.model_dump(mode="json")
        payload["data"].pop("out_dir", None)
        return fingerprint(payload)

    @property
    def feature_fingerprint(self) -> str:
        return fingerprint(self.features)
