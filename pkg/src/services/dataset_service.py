import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np
import torch
import torchvision.transforms.functional as TF
from PIL import Image, UnidentifiedImageError
from pydantic import ValidationError
from torchvision.transforms import InterpolationMode

from src.app.models.dataset import DatasetManifest, PairLabel, PairRecord, SplitName
from src.services.utils.exceptions import ConfigurationError, InputError, InputValidationError
from src.services.utils.json_formatter import fingerprint, get_formatted_json
from src.utils.logging import get_logger

logger = get_logger(__name__)

MANIFEST_FORMAT_VERSION = 1
HEADER_TYPE = "manifest_header"

# Accepts an RGB image and returns the aligned face crop.
FaceAligner = Callable[[Image.Image], Image.Image]


def normalize_pixels(pixels) -> np.ndarray:
    """Map [0, 255] to [-1, 1]: p / 127.5 - 1."""
    return np.asarray(pixels, dtype=np.float64) / 127.5 - 1.0


def denormalize_pixels(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((image + 1.0) * 127.5), 0, 255).astype(np.uint8)


def preprocess_image(raw: bytes, image_size: int = 256, aligner: Optional[FaceAligner] = None) -> np.ndarray:
    """
    Decode, optionally align, bilinear-resize to image_size x image_size x 3
    and normalize to [-1, 1]. Images already at the target size are not resampled.
    """
    try:
        image = Image.open(io.BytesIO(raw))
        image.load()
    except (UnidentifiedImageError, OSError) as e:
        raise InputError(f"Cannot decode image: {e}")
    image = image.convert("RGB")
    if aligner is not None:
        image = aligner(image).convert("RGB")
    if image.size != (image_size, image_size):
        image = image.resize((image_size, image_size), Image.BILINEAR)
    return normalize_pixels(np.asarray(image))


def load_image(path: Path, image_size: int = 256, aligner: Optional[FaceAligner] = None) -> np.ndarray:
    """Read and preprocess one image file."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"Cannot read image '{path}': {e.strerror or e}", details={"path": str(path)})
    return preprocess_image(raw, image_size=image_size, aligner=aligner)


def encode_png(pixels: np.ndarray) -> bytes:
    """Lossless PNG bytes of a uint8 h x w x 3 array."""
    buffer = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buffer, format="PNG")
    return buffer.getvalue()


def horizontal_flip(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image[:, ::-1, :])


@dataclass(frozen=True)
class AugmentationPlan:
    """Transforms drawn for one seed; None means the transform does not fire."""
    flip: bool
    rotation: Optional[float]
    jitter: Optional[tuple[float, float]]
    scale: Optional[float]

    @property
    def is_identity(self) -> bool:
        return not self.flip and self.rotation is None and self.jitter is None and self.scale is None


def sample_augmentation(seed: int) -> AugmentationPlan:
    """Each transform fires with probability 0.5; all parameters are always drawn."""
    rng = np.random.default_rng(seed)
    fires = rng.random(4) < 0.5
    rotation = float(rng.uniform(-10.0, 10.0))
    brightness, contrast = (float(v) for v in rng.uniform(0.9, 1.1, size=2))
    scale = float(rng.uniform(0.9, 1.1))
    return AugmentationPlan(
        flip=bool(fires[0]),
        rotation=rotation if fires[1] else None,
        jitter=(brightness, contrast) if fires[2] else None,
        scale=scale if fires[3] else None,
    )


def augment(image: np.ndarray, seed: int) -> np.ndarray:
    """Random flip, rotation (+-10 deg), brightness/contrast jitter (+-10%) and scaling ([0.9, 1.1]), clamped to [-1, 1]."""
    plan = sample_augmentation(seed)
    result = image.copy()
    if plan.is_identity:
        return result
    if plan.flip:
        result = horizontal_flip(result)
    if plan.rotation is not None or plan.scale is not None:
        tensor = torch.from_numpy(np.ascontiguousarray(result.transpose(2, 0, 1)))
        tensor = TF.affine(
            tensor,
            angle=plan.rotation or 0.0,
            translate=[0, 0],
            scale=plan.scale or 1.0,
            shear=[0.0, 0.0],
            interpolation=InterpolationMode.BILINEAR,
            fill=[-1.0] * result.shape[2],
        )
        result = tensor.numpy().transpose(1, 2, 0)
    if plan.jitter is not None:
        brightness, contrast = plan.jitter
        unit = (result + 1.0) / 2.0
        mean = unit.mean()
        unit = ((unit - mean) * contrast + mean) * brightness
        result = unit * 2.0 - 1.0
    return np.clip(result, -1.0, 1.0)


def save_manifest(manifest: DatasetManifest, path: Path) -> Path:
    """Line-delimited JSON: a header line, then one record per line with its split name."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "type": HEADER_TYPE,
        "format_version": MANIFEST_FORMAT_VERSION,
        "split_seed": manifest.split_seed,
        "metadata": manifest.metadata,
    }
    lines = [get_formatted_json(header)]
    for record, split in zip(manifest.records, manifest.split_names()):
        payload = record.model_dump(mode="json")
        if split is not None:
            payload["split"] = split
        lines.append(get_formatted_json(payload))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Manifest with {len(manifest.records)} records written to {path}")
    return path


def load_manifest(path: Path, check_files: bool = True) -> DatasetManifest:
    """Parse a manifest; malformed lines are reported with their line number."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"Cannot read manifest '{path}': {e.strerror or e}", details={"path": str(path)})

    records: list[PairRecord] = []
    split_names: list[Optional[str]] = []
    header: dict = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
            if not isinstance(payload, dict):
                raise ValueError("not a JSON object")
            if payload.get("type") == HEADER_TYPE:
                header = payload
                continue
            split = payload.pop("split", None)
            records.append(PairRecord.model_validate(payload))
            split_names.append(split)
        except (ValueError, ValidationError) as e:
            raise InputValidationError(
                f"Malformed manifest line {line_number} in {path}: {e}",
                details={"line": line_number},
            )

    splits: dict[str, list[int]] = {}
    if any(name is not None for name in split_names):
        splits = {name.value: [] for name in SplitName}
        for index, name in enumerate(split_names):
            if name is not None:
                splits.setdefault(name, []).append(index)

    manifest = DatasetManifest(
        records=records,
        split_seed=header.get("split_seed"),
        splits=splits,
        metadata=header.get("metadata", {}),
    ).with_root(path.parent)
    if check_files:
        validate_manifest_files(manifest)
    return manifest


def manifest_fingerprint(manifest: DatasetManifest) -> str:
    """Fingerprint of the pair records alone; splits, header and location do not count."""
    return fingerprint([record.model_dump(mode="json") for record in manifest.records])


def validate_manifest_files(manifest: DatasetManifest) -> None:
    """Both images of every record must exist."""
    for record in manifest.records:
        for path in (record.real_path, record.suspicious_path):
            if not manifest.resolve(path).is_file():
                raise InputError(
                    f"Missing image for pair '{record.pair_id}': {path}",
                    details={"pair_id": record.pair_id, "path": path},
                )


def split_dataset(
    manifest: DatasetManifest,
    train_fraction: float = 0.8,
    seed: int = 0,
    held_out_techniques: Iterable[str] = (),
) -> DatasetManifest:
    """
    Stratified, seed-deterministic train/val split of the in-dataset records.

    Records whose technique is held out go to ``test``. Each label is shuffled
    and cut at round(train_fraction * n), so both splits keep the real/fake
    balance within one record.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError("train_fraction must lie in (0, 1)", details={"train_fraction": train_fraction})
    if not manifest.records:
        raise InputValidationError("Cannot split an empty manifest")

    held_out = set(held_out_techniques)
    splits: dict[str, list[int]] = {name.value: [] for name in SplitName}
    rng = np.random.default_rng(seed)
    for label in (PairLabel.REAL_REAL, PairLabel.FAKE_REAL):
        indices = [
            i for i, r in enumerate(manifest.records)
            if r.label == label and r.technique not in held_out
        ]
        order = rng.permutation(len(indices))
        n_train = int(np.floor(train_fraction * len(indices) + 0.5))
        splits[SplitName.TRAIN.value] += [indices[j] for j in order[:n_train]]
        splits[SplitName.VAL.value] += [indices[j] for j in order[n_train:]]
    splits[SplitName.TEST.value] = [i for i, r in enumerate(manifest.records) if r.technique in held_out]
    splits = {name: sorted(indices) for name, indices in splits.items()}

    split_manifest = manifest.model_copy(update={"split_seed": seed, "splits": splits})
    split_manifest.with_root(manifest.root)
    logger.info(
        "Split manifest: "
        + ", ".join(f"{name}={len(indices)}" for name, indices in splits.items())
    )
    return split_manifest
