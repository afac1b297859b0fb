import enum
import logging
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from pydantic_settings import BaseSettings

logger = logging.getLogger(__name__)

load_dotenv(override=True)


class LogLevel(str, enum.Enum):
    """Possible log levels."""
    NOTSET = "NOTSET"
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    FATAL = "FATAL"


class Profile(str, enum.Enum):
    """Training scale presets."""
    DESK = "desk"
    FULL = "full"


class ApplicationSettings(BaseSettings):
    """Application-specific settings."""
    environment: str = os.environ.get("ENVIRONMENT", "dev")
    log_level: str = os.environ.get("LOG_LEVEL", "INFO")
    profile: Profile = Profile.DESK
    app_title: str = "Style Feature Face-Swap Detector"
    weights_dir: Optional[Path] = None  # <backbone_id>.pth state dicts for torchvision backbones

    class Config:
        env_prefix = "APP_"


class FeatureSettings(BaseSettings):
    """Style feature extraction defaults."""
    backbone_id: str = "toy-cnn"
    layer_ids: list[str] = ["block1", "block2", "block3", "block4"]
    style_mode: str = "gram"
    seed: int = 0
    image_size: int = 256

    class Config:
        env_prefix = "FEATURES_"


class ClassifierSettings(BaseSettings):
    """Style feature classifier training defaults."""
    alpha: float = 0.5
    learning_rate: float = 1e-4
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    decision_cutoff: float = 0.5
    augment: bool = False

    class Config:
        env_prefix = "CLASSIFIER_"


class AnomalySettings(BaseSettings):
    """Dual encoder anomaly detector defaults."""
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 50
    latent_dim: int = 64
    seed: int = 0
    k: float = 2.0

    class Config:
        env_prefix = "ANOMALY_"


class DataSettings(BaseSettings):
    """Synthetic dataset and split defaults."""
    seed: int = 7
    identities: int = 20
    pairs: int = 500
    artifact_level: float = 0.5
    technique: str = "synthetic-swap"
    train_fraction: float = 0.8
    out_dir: Path = Path("data/synthetic")

    class Config:
        env_prefix = "DATA_"


FULL_CLASSIFIER = {"epochs": 200, "batch_size": 64}
FULL_ANOMALY = {"epochs": 200, "batch_size": 32}


class Settings(BaseSettings):
    """Application settings."""
    app: ApplicationSettings = ApplicationSettings()
    features: FeatureSettings = FeatureSettings()
    classifier: ClassifierSettings = ClassifierSettings()
    anomaly: AnomalySettings = AnomalySettings()
    data: DataSettings = DataSettings()

    @property
    def environment(self) -> str:
        return self.app.environment

    @property
    def log_level(self) -> str:
        return self.app.log_level

    @property
    def profile(self) -> Profile:
        return self.app.profile

    def section_defaults(self, profile: Profile | None = None) -> dict[str, dict]:
        """
        Plain-dict defaults per config section, before file and flag overrides.

        The full profile raises epochs and batch sizes unless the environment set them.
        """
        sections = {
            "features": self.features.model_dump(),
            "classifier": self.classifier.model_dump(),
            "anomaly": self.anomaly.model_dump(),
            "data": self.data.model_dump(mode="json"),
        }
        if (profile or self.profile) == Profile.FULL:
            for name, preset in (("classifier", FULL_CLASSIFIER), ("anomaly", FULL_ANOMALY)):
                explicit = getattr(self, name).model_fields_set
                sections[name].update({k: v for k, v in preset.items() if k not in explicit})
        return sections


settings = Settings()
