from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from src.app.models.dataset import DatasetManifest, PairRecord
from src.app.models.features import (
    FeatureExtractorConfig,
    LayerFeatureSet,
    StyleFeatureStack,
    StyleMode,
)
from src.networks.backbone import StyleBackbone, get_backbone
from src.services.dataset_service import FaceAligner, augment, load_image
from src.services.utils.exceptions import (
    ConfigurationError,
    DegenerateInputError,
    InputValidationError,
    NumericError,
)
from src.services.utils.json_formatter import derive_seed
from src.utils.logging import get_logger, progress_enabled

logger = get_logger(__name__)


def validate_image(image: np.ndarray, config: FeatureExtractorConfig) -> None:
    """ImageArray contract: h x w x 3, h = w = image_size, finite, values in [-1, 1]."""
    if not isinstance(image, np.ndarray) or image.ndim != 3 or image.shape[2] != 3:
        raise InputValidationError(
            "Image must be an h x w x 3 array",
            details={"shape": list(getattr(image, "shape", []))},
        )
    if image.shape[0] != config.image_size or image.shape[1] != config.image_size:
        raise InputValidationError(
            f"Image must be {config.image_size}x{config.image_size}",
            details={"shape": list(image.shape)},
        )
    if not np.all(np.isfinite(image)):
        raise NumericError("Image contains non-finite values")
    if image.min() < -1.0 or image.max() > 1.0:
        raise InputValidationError("Image values must lie in [-1, 1]; preprocess it first")


def gram_matrix(activation: np.ndarray) -> np.ndarray:
    """
    Normalized Gram matrix of a c x h x w activation.

    G = F F^T / (h w) with F the activation flattened to c x (h w). The
    result is symmetrized so G == G^T holds exactly.
    """
    activation = np.asarray(activation, dtype=np.float64)
    if activation.ndim != 3:
        raise InputValidationError("Gram input must be c x h x w", details={"shape": list(activation.shape)})
    channels = activation.shape[0]
    spatial = activation.shape[1] * activation.shape[2]
    if spatial == 0:
        raise DegenerateInputError("Gram matrix of an empty spatial map is undefined")
    if not np.all(np.isfinite(activation)):
        raise NumericError("Gram input contains non-finite values")
    flat = activation.reshape(channels, spatial)
    gram = flat @ flat.T / spatial
    return (gram + gram.T) / 2


def unstack_style_features(stacked: np.ndarray, layer_offsets: Sequence[tuple[int, int]]) -> list[np.ndarray]:
    """Recover per-layer vectors from a stacked vector."""
    return [np.asarray(stacked[start:end]) for start, end in layer_offsets]


@dataclass
class PairFeatures:
    """Stacked reference/suspicious features of manifest records, in record order."""
    ref: np.ndarray
    sus: np.ndarray
    labels: np.ndarray
    records: list[PairRecord]
    layer_ids: list[str]
    layer_offsets: list[tuple[int, int]]

    def __len__(self) -> int:
        return len(self.records)

    @property
    def dim(self) -> int:
        return int(self.ref.shape[1])

    def subset(self, mask: np.ndarray) -> "PairFeatures":
        indices = np.flatnonzero(mask)
        return PairFeatures(
            ref=self.ref[indices],
            sus=self.sus[indices],
            labels=self.labels[indices],
            records=[self.records[i] for i in indices],
            layer_ids=self.layer_ids,
            layer_offsets=self.layer_offsets,
        )


class FeatureService:
    """Style feature extraction over a registered, frozen backbone."""

    def __init__(self, extraction_batch_size: int = 16):
        self.extraction_batch_size = extraction_batch_size

    def backbone(self, config: FeatureExtractorConfig) -> StyleBackbone:
        backbone = get_backbone(config.backbone_id, config.seed)
        taps = {tap.layer_id: tap for tap in backbone.layer_taps(config.image_size)}
        unknown = [layer_id for layer_id in config.layer_ids if layer_id not in taps]
        if unknown:
            raise ConfigurationError(
                f"Unknown layer ids for backbone '{config.backbone_id}': {unknown}",
                details={"declared": sorted(taps), "default_layer_ids": list(backbone.default_layer_ids)},
            )
        empty = [layer_id for layer_id in config.layer_ids if min(taps[layer_id].height, taps[layer_id].width) < 1]
        if empty:
            raise ConfigurationError(
                f"Image size {config.image_size} is too small for layers {empty} of '{config.backbone_id}'",
                details={"image_size": config.image_size},
            )
        return backbone

    def _run_backbone(self, images: np.ndarray, config: FeatureExtractorConfig) -> list[LayerFeatureSet]:
        backbone = self.backbone(config)
        batch = torch.from_numpy(np.ascontiguousarray(images.transpose(0, 3, 1, 2))).float()
        with torch.no_grad():
            outputs = backbone(batch)
        feature_sets = []
        for index in range(batch.shape[0]):
            activations = []
            for layer_id in config.layer_ids:
                activation = outputs[layer_id][index].double().numpy()
                if not np.all(np.isfinite(activation)):
                    raise NumericError(f"Non-finite activations at layer '{layer_id}'")
                activations.append(activation)
            feature_sets.append(LayerFeatureSet(layer_ids=list(config.layer_ids), activations=activations))
        return feature_sets

    def extract_layer_features(self, image: np.ndarray, config: FeatureExtractorConfig) -> LayerFeatureSet:
        """One activation array per configured layer, in layer_ids order."""
        validate_image(image, config)
        return self._run_backbone(image[None], config)[0]

    def stack_style_features(self, features: LayerFeatureSet, config: FeatureExtractorConfig) -> StyleFeatureStack:
        """Gram upper triangles (gram mode) or flattened activations, concatenated in layer order."""
        if list(features.layer_ids) != list(config.layer_ids) or len(features.activations) != config.num_layers:
            raise ConfigurationError(
                "Layer features do not match the feature configuration",
                details={"features": list(features.layer_ids), "config": list(config.layer_ids)},
            )
        vectors = []
        for layer_id, activation in zip(features.layer_ids, features.activations):
            if config.style_mode == StyleMode.GRAM:
                if activation.ndim != 3:
                    raise ConfigurationError(
                        f"Gram mode needs c x h x w activations, layer '{layer_id}' has shape {activation.shape}"
                    )
                gram = gram_matrix(activation)
                vectors.append(gram[np.triu_indices(gram.shape[0])])
            else:
                vectors.append(np.asarray(activation, dtype=np.float64).reshape(-1))
        return StyleFeatureStack.from_vectors(features.layer_ids, vectors)

    def extract_style_stack(self, image: np.ndarray, config: FeatureExtractorConfig) -> StyleFeatureStack:
        return self.stack_style_features(self.extract_layer_features(image, config), config)

    def extract_pair_features(
        self,
        reference: np.ndarray,
        suspicious: np.ndarray,
        config: FeatureExtractorConfig,
    ) -> tuple[StyleFeatureStack, StyleFeatureStack]:
        """Stacks for (reference, suspicious) under one configuration."""
        return self.extract_style_stack(reference, config), self.extract_style_stack(suspicious, config)

    def extract_stacks(
        self,
        images: Iterable[np.ndarray],
        config: FeatureExtractorConfig,
        total: int | None = None,
        description: str = "Extracting style features",
    ) -> list[StyleFeatureStack]:
        """Batched extraction; results are in input order."""
        stacks: list[StyleFeatureStack] = []
        pending: list[np.ndarray] = []
        with tqdm(total=total, desc=description, disable=not progress_enabled(), leave=False) as bar:
            for image in images:
                validate_image(image, config)
                pending.append(image)
                if len(pending) == self.extraction_batch_size:
                    stacks += self._stack_batch(pending, config)
                    bar.update(len(pending))
                    pending = []
            if pending:
                stacks += self._stack_batch(pending, config)
                bar.update(len(pending))
        return stacks

    def _stack_batch(self, images: list[np.ndarray], config: FeatureExtractorConfig) -> list[StyleFeatureStack]:
        return [self.stack_style_features(fs, config) for fs in self._run_backbone(np.stack(images), config)]

    def extract_pairs(
        self,
        manifest: DatasetManifest,
        records: Sequence[PairRecord],
        config: FeatureExtractorConfig,
        aligner: Optional[FaceAligner] = None,
        augment_seed: Optional[int] = None,
    ) -> PairFeatures:
        """
        Load, preprocess and stack every record's images. With ``augment_seed``
        each image is augmented under a seed derived from it and the pair id.
        """
        if not records:
            raise InputValidationError("No pairs to extract features from")

        def images(role: str) -> Iterable[np.ndarray]:
            for record in records:
                path = record.real_path if role == "real" else record.suspicious_path
                image = load_image(manifest.resolve(path), config.image_size, aligner)
                if augment_seed is not None:
                    image = augment(image, derive_seed(augment_seed, record.pair_id, role))
                yield image

        ref = self.extract_stacks(images("real"), config, total=len(records), description="Reference features")
        sus = self.extract_stacks(images("suspicious"), config, total=len(records), description="Suspicious features")
        return PairFeatures(
            ref=np.stack([s.stacked for s in ref]),
            sus=np.stack([s.stacked for s in sus]),
            labels=np.asarray([int(r.label) for r in records], dtype=np.float64),
            records=list(records),
            layer_ids=list(ref[0].layer_ids),
            layer_offsets=list(ref[0].layer_offsets),
        )

    def stack_dim(self, config: FeatureExtractorConfig) -> int:
        """Length of a stacked vector under ``config``, from the declared layer taps."""
        taps = {tap.layer_id: tap for tap in self.backbone(config).layer_taps(config.image_size)}
        dim = 0
        for layer_id in config.layer_ids:
            tap = taps[layer_id]
            if config.style_mode == StyleMode.GRAM:
                dim += tap.channels * (tap.channels + 1) // 2
            else:
                dim += tap.channels * tap.height * tap.width
        return dim


feature_service = FeatureService()

extract_layer_features = feature_service.extract_layer_features
stack_style_features = feature_service.stack_style_features
extract_pair_features = feature_service.extract_pair_features
extract_pairs = feature_service.extract_pairs
