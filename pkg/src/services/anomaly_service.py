from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import torch
from torch.utils.data import DataLoader, TensorDataset

from src.app.models.dataset import DatasetManifest, SplitName
from src.app.models.detection import AnomalyConfig, EpochRecord, ThresholdCalibration, Verdict
from src.app.models.features import FeatureExtractorConfig, StyleFeatureStack
from src.networks.dual_encoder import DualEncoderModel, fuse_latents
from src.services.dataset_service import FaceAligner
from src.services.feature_service import PairFeatures, feature_service
from src.services.losses import ensure_finite, reconstruction_loss
from src.services.utils.exceptions import ConfigurationError, InputValidationError
from src.utils.logging import get_logger

logger = get_logger(__name__)

__all__ = [
    "AnomalyModel",
    "AnomalyService",
    "anomaly_score",
    "anomaly_service",
    "calibrate_from_losses",
    "calibrate_threshold",
    "detect_anomaly",
    "encode_pair",
    "fuse_latents",
    "init_anomaly",
    "score_stacks",
    "train_anomaly",
]

StackLike = Union[StyleFeatureStack, np.ndarray]


@dataclass
class AnomalyModel:
    """Dual encoder, its configuration, per-epoch losses and the calibrated threshold."""
    network: DualEncoderModel
    config: AnomalyConfig
    history: list[EpochRecord] = field(default_factory=list)
    calibration: Optional[ThresholdCalibration] = None

    @property
    def input_dim(self) -> int:
        return self.network.input_dim


def _vector(x: StackLike) -> np.ndarray:
    return x.stacked if isinstance(x, StyleFeatureStack) else np.asarray(x, dtype=np.float64)


class AnomalyService:
    """One-class face-swap detection with the dual encoder."""

    def init_anomaly(self, config: AnomalyConfig) -> AnomalyModel:
        if config.input_dim is None or config.input_dim < 1:
            raise ConfigurationError("Anomaly input_dim must be positive", details={"input_dim": config.input_dim})
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed)
            network = DualEncoderModel(config.input_dim, config.latent_dim, tuple(config.widths))
        network.eval()
        return AnomalyModel(network=network, config=config)

    def _as_batch(self, model: AnomalyModel, x: StackLike) -> torch.Tensor:
        vector = np.atleast_2d(_vector(x))
        if vector.shape[-1] != model.input_dim:
            raise InputValidationError(
                f"Feature vectors must have length {model.input_dim}",
                details={"shape": list(vector.shape)},
            )
        return torch.as_tensor(vector).float()

    def encode_pair(self, model: AnomalyModel, x1: StackLike, x2: StackLike) -> tuple[np.ndarray, np.ndarray]:
        """
        Latents of one pair: z1 = E1(x1), z2 = E2(x2).

        Args:
            model: Dual encoder
            x1: Reference stack (one vector)
            x2: Suspicious stack (one vector)

        Returns:
            (z1, z2), each of length latent_dim
        """
        v1, v2 = _vector(x1), _vector(x2)
        if v1.ndim != 1 or v2.ndim != 1:
            raise InputValidationError(
                "encode_pair takes one vector per side; use score_stacks for batches",
                details={"x1": list(v1.shape), "x2": list(v2.shape)},
            )
        t1, t2 = self._as_batch(model, v1), self._as_batch(model, v2)
        model.network.eval()
        with torch.no_grad():
            z1, z2 = model.network.encode(t1, t2)
        return z1[0].double().numpy(), z2[0].double().numpy()

    def score_stacks(self, model: AnomalyModel, ref: np.ndarray, sus: np.ndarray) -> np.ndarray:
        """Per-pair reconstruction losses of N x D stacks, in the model's standardized space."""
        t1, t2 = self._as_batch(model, ref), self._as_batch(model, sus)
        if t1.shape != t2.shape:
            raise InputValidationError("Reference and suspicious stacks must have equal shapes")
        model.network.eval()
        with torch.no_grad():
            n1, n2, x_hat = model.network(t1, t2)
            losses = reconstruction_loss(n1, n2, x_hat)
        return losses.double().numpy()

    def anomaly_score(self, model: AnomalyModel, ref_stack: StackLike, sus_stack: StackLike) -> float:
        return float(self.score_stacks(model, ref_stack, sus_stack)[0])

    def train_anomaly(
        self,
        manifest: DatasetManifest,
        fe_config: FeatureExtractorConfig,
        cfg: AnomalyConfig,
        aligner: Optional[FaceAligner] = None,
    ) -> AnomalyModel:
        """
        Fit the dual encoder to reconstruct real-real pairs of the train split.

        Args:
            manifest: Dataset; all records are used when it has no splits
            fe_config: Feature extraction configuration
            cfg: Dual encoder hyperparameters; input_dim is taken from the data
            aligner: Optional face alignment hook

        Returns:
            The trained, uncalibrated model with its per-epoch history
        """
        records = manifest.split_records(SplitName.TRAIN.value if manifest.is_split else None)
        real_records = [r for r in records if r.is_real_pair]
        if not real_records:
            raise InputValidationError("Anomaly training needs at least one real-real pair")

        features = feature_service.extract_pairs(manifest, real_records, fe_config, aligner)
        val_records = [r for r in manifest.split_records(SplitName.VAL.value) if r.is_real_pair]
        val = feature_service.extract_pairs(manifest, val_records, fe_config, aligner) if val_records else None
        config = cfg.model_copy(update={"input_dim": features.dim})
        model = self.init_anomaly(config)
        network = model.network
        network.normalizer.fit(torch.as_tensor(np.concatenate([features.ref, features.sus])).float())
        optimizer = torch.optim.Adam(network.parameters(), lr=config.learning_rate)
        dataset = TensorDataset(torch.as_tensor(features.ref).float(), torch.as_tensor(features.sus).float())
        logger.info(
            f"Training dual encoder on {len(features)} real-real pairs, dim={features.dim}, epochs={config.epochs}"
        )

        for epoch in range(1, config.epochs + 1):
            network.train()
            generator = torch.Generator().manual_seed(config.seed + epoch)
            total = 0.0
            for batch_index, (x1, x2) in enumerate(
                DataLoader(dataset, batch_size=config.batch_size, shuffle=True, generator=generator)
            ):
                n1, n2, x_hat = network(x1, x2)
                loss = ensure_finite(reconstruction_loss(n1, n2, x_hat).mean(), epoch=epoch, batch=batch_index)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += loss.item() * len(x1)
            record = EpochRecord(epoch=epoch, train_loss=total / len(features))
            if val is not None:
                record.val_loss = float(self.score_stacks(model, val.ref, val.sus).mean())
            model.history.append(record)
            logger.info(f"epoch {epoch}: reconstruction loss={record.train_loss:.6f} val_loss={record.val_loss}")

        network.eval()
        return model

    def calibrate_from_losses(self, losses: Sequence[float], k: float = 2.0) -> ThresholdCalibration:
        """mu + k * sigma with the population standard deviation."""
        values = np.asarray(losses, dtype=np.float64)
        if values.size < 2:
            raise InputValidationError(
                "Calibration needs at least 2 validation pairs", details={"n_pairs": int(values.size)}
            )
        if k < 0:
            raise ConfigurationError("k must be non-negative", details={"k": k})
        return ThresholdCalibration.from_statistics(
            mu=float(values.mean()), sigma=float(values.std(ddof=0)), k=k, n_pairs=int(values.size)
        )

    def calibrate_threshold(
        self,
        model: AnomalyModel,
        validation_manifest: DatasetManifest,
        fe_config: FeatureExtractorConfig,
        k: float = 2.0,
        aligner: Optional[FaceAligner] = None,
    ) -> ThresholdCalibration:
        """
        Calibrate on the real-real pairs of the validation split (all records when
        the manifest is unsplit) and store the result on the model.
        """
        records = validation_manifest.split_records(SplitName.VAL.value if validation_manifest.is_split else None)
        real_records = [r for r in records if r.is_real_pair]
        if len(real_records) < 2:
            raise InputValidationError(
                "Calibration needs at least 2 real-real validation pairs",
                details={"n_pairs": len(real_records)},
            )
        features: PairFeatures = feature_service.extract_pairs(validation_manifest, real_records, fe_config, aligner)
        calibration = self.calibrate_from_losses(self.score_stacks(model, features.ref, features.sus), k)
        model.calibration = calibration
        logger.info(
            f"Calibrated on {calibration.n_pairs} pairs: mu={calibration.mu:.6g} "
            f"sigma={calibration.sigma:.6g} threshold={calibration.threshold:.6g}"
        )
        return calibration

    def detect_anomaly(
        self,
        model: AnomalyModel,
        reference_image: np.ndarray,
        suspicious_image: np.ndarray,
        fe_config: FeatureExtractorConfig,
        calibration: Optional[ThresholdCalibration] = None,
    ) -> Verdict:
        """Face-swapped iff the anomaly score strictly exceeds the calibrated threshold."""
        calibration = calibration or model.calibration
        if calibration is None:
            raise ConfigurationError("Anomaly detection requires a calibrated threshold; run calibrate first")
        ref_stack, sus_stack = feature_service.extract_pair_features(reference_image, suspicious_image, fe_config)
        return Verdict.from_anomaly_score(self.anomaly_score(model, ref_stack, sus_stack), calibration.threshold)


anomaly_service = AnomalyService()

init_anomaly = anomaly_service.init_anomaly
encode_pair = anomaly_service.encode_pair
score_stacks = anomaly_service.score_stacks
anomaly_score = anomaly_service.anomaly_score
train_anomaly = anomaly_service.train_anomaly
calibrate_from_losses = anomaly_service.calibrate_from_losses
calibrate_threshold = anomaly_service.calibrate_threshold
detect_anomaly = anomaly_service.detect_anomaly
