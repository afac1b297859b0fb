import argparse
import sys
from pathlib import Path
from typing import Any, Optional

from src.app.models.dataset import DatasetManifest, SplitName
from src.app.models.run import RunConfig
from src.core.application import resolve_run_config
from src.middleware.request import set_run_context
from src.services.checkpoint_service import Checkpoint
from src.services.dataset_service import load_manifest, manifest_fingerprint, split_dataset
from src.services.utils.json_formatter import get_formatted_json
from src.settings import Profile
from src.utils.logging import get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FACE_SWAPPED = 1


def resolve(args: argparse.Namespace, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """Resolve the run configuration for a command and tag the logs with its fingerprint."""
    profile = Profile(args.profile) if args.profile else None
    run_config = resolve_run_config(args.config, overrides, profile)
    set_run_context(run_config.fingerprint)
    return run_config


def emit(record: dict[str, Any]) -> None:
    """One structured line on stdout."""
    sys.stdout.write(get_formatted_json(record) + "\n")
    sys.stdout.flush()


def split_params(run_config: RunConfig, held_out: Optional[list[str]] = None) -> dict[str, Any]:
    return {
        "train_fraction": run_config.data.train_fraction,
        "seed": run_config.data.seed,
        "held_out_techniques": sorted(held_out or []),
    }


def apply_split(manifest: DatasetManifest, split: dict[str, Any]) -> DatasetManifest:
    """Split with the stored parameters unless the manifest already carries splits."""
    if manifest.is_split:
        return manifest
    return split_dataset(
        manifest,
        train_fraction=split["train_fraction"],
        seed=split["seed"],
        held_out_techniques=split.get("held_out_techniques", []),
    )


def load_split_manifest(path: Path, split: dict[str, Any]) -> DatasetManifest:
    return apply_split(load_manifest(path), split)


def load_checkpoint_manifest(path: Path, checkpoint: Checkpoint) -> DatasetManifest:
    """
    Load a manifest for a trained detector. The stored split is replayed only on
    the manifest the detector was trained on; any other unsplit manifest is
    returned as is, so none of its records count as training data.
    """
    manifest = load_manifest(path)
    if manifest.is_split or not checkpoint.split:
        return manifest
    if checkpoint.manifest_fingerprint != manifest_fingerprint(manifest):
        logger.info(f"{path} is not the training manifest; every record is eligible")
        return manifest
    return apply_split(manifest, checkpoint.split)


def training_techniques(manifest: DatasetManifest) -> list[str]:
    return sorted({r.technique for r in manifest.split_records(SplitName.TRAIN.value)})
