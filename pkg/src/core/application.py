from pathlib import Path
from typing import Any, Optional

import toml
from pydantic import ValidationError

from src.app.models.detection import AnomalyConfig, ClassifierConfig
from src.app.models.features import FeatureExtractorConfig
from src.app.models.run import DataConfig, RunConfig
from src.services.utils.exceptions import ConfigurationError, InputError
from src.settings import Profile, settings
from src.utils.logging import get_logger

logger = get_logger(__name__)

PYPROJECT_PATH = Path(__file__).resolve().parents[2] / "pyproject.toml"
SECTIONS = ("features", "classifier", "anomaly", "data")


def project_version() -> str:
    """Version from pyproject.toml, as the installed package knows it."""
    try:
        data = toml.loads(PYPROJECT_PATH.read_text())
        return data["tool"]["poetry"]["version"]
    except (OSError, KeyError, toml.TomlDecodeError):
        return "0.0.0"


def load_config_file(path: Path) -> dict[str, Any]:
    """
    Parse a flat TOML config file whose keys are ``<section>_<field>``,
    e.g. ``classifier_alpha = 0.5``.
    """
    try:
        data = toml.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise InputError(f"Cannot read config file '{path}': {e.strerror or e}")
    except toml.TomlDecodeError as e:
        raise ConfigurationError(f"Invalid TOML in '{path}': {e}")
    nested = [key for key, value in data.items() if isinstance(value, dict)]
    if nested:
        raise ConfigurationError(
            "Config file must be flat; use <section>_<field> keys instead of tables",
            details={"tables": nested},
        )
    return data


def _apply(sections: dict[str, dict], flat: dict[str, Any], origin: str) -> None:
    for key, value in flat.items():
        section, _, field = key.partition("_")
        if section not in sections or field not in sections[section]:
            raise ConfigurationError(f"Unknown config key '{key}' in {origin}", details={"key": key})
        sections[section][field] = value


def resolve_run_config(
    config_path: Optional[Path] = None,
    overrides: Optional[dict[str, Any]] = None,
    profile: Optional[Profile] = None,
) -> RunConfig:
    """
    Merge defaults (environment and .env included), the config file and flag
    overrides, in increasing precedence. Overrides use the config file's flat
    keys; ``None`` values mean "flag not given".
    """
    sections = settings.section_defaults(profile)
    if config_path is not None:
        _apply(sections, load_config_file(config_path), str(config_path))
    _apply(sections, {k: v for k, v in (overrides or {}).items() if v is not None}, "flags")

    classifier = dict(sections["classifier"])
    anomaly = dict(sections["anomaly"])
    decision_cutoff = classifier.pop("decision_cutoff")
    k = anomaly.pop("k")
    try:
        run_config = RunConfig(
            features=FeatureExtractorConfig(**sections["features"]),
            classifier=ClassifierConfig(**classifier),
            anomaly=AnomalyConfig(**anomaly),
            data=DataConfig(**sections["data"]),
            decision_cutoff=decision_cutoff,
            k=k,
        )
    except ValidationError as e:
        raise ConfigurationError(
            f"Invalid configuration: {e}",
            details={"errors": e.errors(include_url=False, include_context=False)},
        )
    logger.debug(f"Resolved run configuration {run_config.fingerprint[:12]}")
    return run_config
