import copy
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
from sklearn.metrics import roc_auc_score
from torch.utils.data import DataLoader, TensorDataset

from src.app.models.dataset import DatasetManifest, SplitName
from src.app.models.detection import ClassifierConfig, EpochRecord, Verdict
from src.app.models.features import FeatureExtractorConfig, StyleFeatureStack
from src.networks.classifier import MIN_INPUT_DIM, StyleFeatureClassifier
from src.services.dataset_service import FaceAligner
from src.services.feature_service import PairFeatures, feature_service
from src.services.losses import PairBatch, bce_loss, ensure_finite, final_loss, stacked_identity_loss
from src.services.utils.exceptions import ConfigurationError, InputValidationError
from src.utils.logging import get_logger

logger = get_logger(__name__)

VALIDATION_CUTOFF = 0.5


@dataclass
class ClassifierModel:
    """A style feature classifier with its configuration and training history."""
    network: StyleFeatureClassifier
    config: ClassifierConfig
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None

    @property
    def input_dim(self) -> int:
        return self.network.input_dim

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.network.parameters())


def _loader(features: PairFeatures, batch_size: int, seed: int) -> DataLoader:
    dataset = TensorDataset(
        torch.as_tensor(features.ref).float(),
        torch.as_tensor(features.sus).float(),
        torch.as_tensor(features.labels).float(),
    )
    generator = torch.Generator().manual_seed(seed)
    return DataLoader(dataset, batch_size=batch_size, shuffle=True, generator=generator)


class ClassifierService:
    """Supervised face-swap detection over (reference, suspicious) style feature stacks."""

    def __init__(self, validation_cutoff: float = VALIDATION_CUTOFF):
        self.validation_cutoff = validation_cutoff

    def init_classifier(self, config: ClassifierConfig) -> ClassifierModel:
        """Seeded initialization; the global torch RNG is left untouched."""
        if config.input_dim is None or config.input_dim < MIN_INPUT_DIM:
            raise ConfigurationError(
                f"Classifier input_dim must be at least {MIN_INPUT_DIM}",
                details={"input_dim": config.input_dim},
            )
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed)
            network = StyleFeatureClassifier(config.input_dim, tuple(config.widths))
        network.eval()
        return ClassifierModel(network=network, config=config)

    @staticmethod
    def _check_dims(model: ClassifierModel, ref: np.ndarray, sus: np.ndarray) -> None:
        if ref.shape != sus.shape or ref.shape[-1] != model.input_dim:
            raise InputValidationError(
                f"Stacks must have length {model.input_dim}",
                details={"ref": list(ref.shape), "sus": list(sus.shape)},
            )

    def predict_stacks(self, model: ClassifierModel, ref: np.ndarray, sus: np.ndarray) -> np.ndarray:
        """
        Pair-is-real probabilities for N x D reference/suspicious stacks.

        Args:
            model: Classifier
            ref: Reference stacks, one row per pair (a single vector is one pair)
            sus: Suspicious stacks, same shape as ``ref``

        Returns:
            Probabilities in (0, 1), one per pair
        """
        ref, sus = np.atleast_2d(ref), np.atleast_2d(sus)
        self._check_dims(model, ref, sus)
        if not (np.all(np.isfinite(ref)) and np.all(np.isfinite(sus))):
            raise InputValidationError("Style feature stacks must be finite")
        model.network.eval()
        with torch.no_grad():
            probabilities = model.network(torch.as_tensor(ref).float(), torch.as_tensor(sus).float())
        return probabilities.double().numpy()

    def predict_pair(
        self, model: ClassifierModel, ref_stack: StyleFeatureStack, sus_stack: StyleFeatureStack
    ) -> float:
        """Probability that the pair is real-real."""
        return float(self.predict_stacks(model, ref_stack.stacked, sus_stack.stacked)[0])

    def _validate(self, model: ClassifierModel, features: PairFeatures) -> tuple[float, float, Optional[float]]:
        """Validation BCE, accuracy at the default cutoff, and AUC when both classes are present."""
        probabilities = self.predict_stacks(model, features.ref, features.sus)
        loss = float(bce_loss(torch.as_tensor(probabilities), torch.as_tensor(features.labels)))
        is_real = features.labels == 1
        accuracy = float(np.mean((probabilities >= self.validation_cutoff) == is_real))
        auc = None
        if 0 < is_real.sum() < len(is_real):
            auc = float(roc_auc_score(~is_real, 1.0 - probabilities))
        return loss, accuracy, auc

    def train_classifier(
        self,
        manifest: DatasetManifest,
        fe_config: FeatureExtractorConfig,
        cls_config: ClassifierConfig,
        aligner: Optional[FaceAligner] = None,
    ) -> tuple[ClassifierModel, list[EpochRecord]]:
        """
        Minimize BCE + alpha * SIL with Adam over the train split.

        The identity loss acts on the gated, standardized stacks the network
        consumes. The parameters of the epoch with the best validation accuracy
        are restored at the end (the last epoch when there is no validation split).

        Args:
            manifest: Split dataset manifest
            fe_config: Feature extraction configuration
            cls_config: Training hyperparameters; input_dim is taken from the data
            aligner: Optional face alignment hook

        Returns:
            The trained model and its per-epoch history
        """
        if not manifest.is_split:
            raise InputValidationError("Manifest has no splits; split it before training")
        train_records = manifest.split_records(SplitName.TRAIN.value)
        if not train_records:
            raise InputValidationError("Training split is empty")
        val_records = manifest.split_records(SplitName.VAL.value)

        train = feature_service.extract_pairs(manifest, train_records, fe_config, aligner)
        val = feature_service.extract_pairs(manifest, val_records, fe_config, aligner) if val_records else None

        config = cls_config.model_copy(update={"input_dim": train.dim})
        model = self.init_classifier(config)
        network = model.network
        network.normalizer.fit(torch.as_tensor(np.concatenate([train.ref, train.sus])).float())
        optimizer = torch.optim.Adam(network.parameters(), lr=config.learning_rate)
        logger.info(
            f"Training classifier on {len(train)} pairs ({len(val) if val else 0} validation), "
            f"dim={train.dim}, alpha={config.alpha}, epochs={config.epochs}"
        )

        history: list[EpochRecord] = []
        best_accuracy, best_state = -1.0, None
        for epoch in range(1, config.epochs + 1):
            epoch_features = train
            if config.augment:
                epoch_features = feature_service.extract_pairs(
                    manifest, train_records, fe_config, aligner, augment_seed=config.seed * 100_003 + epoch
                )
            network.train()
            totals = np.zeros(3)
            for batch_index, (ref, sus, labels) in enumerate(
                _loader(epoch_features, config.batch_size, config.seed + epoch)
            ):
                rep_ref, rep_sus = network.represent(ref), network.represent(sus)
                probabilities = network.probability(network.logits_from_representation(rep_ref, rep_sus))
                bce = ensure_finite(bce_loss(probabilities, labels), epoch=epoch, batch=batch_index, term="bce")
                sil = ensure_finite(
                    stacked_identity_loss(
                        PairBatch(rep_ref, rep_sus, labels, train.layer_offsets, list(train.layer_ids))
                    ),
                    epoch=epoch,
                    batch=batch_index,
                    term="sil",
                )
                loss = ensure_finite(final_loss(bce, sil, config.alpha), epoch=epoch, batch=batch_index)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                totals += len(labels) * np.array([loss.item(), bce.item(), sil.item()])

            mean_loss, mean_bce, mean_sil = totals / len(epoch_features)
            record = EpochRecord(epoch=epoch, train_loss=mean_loss, bce=mean_bce, sil=mean_sil)
            if val is not None:
                record.val_loss, record.val_accuracy, record.val_auc = self._validate(model, val)
            history.append(record)
            logger.info(
                f"epoch {epoch}: loss={mean_loss:.6f} bce={mean_bce:.6f} sil={mean_sil:.6f} "
                f"val_accuracy={record.val_accuracy}"
            )

            score = record.val_accuracy if record.val_accuracy is not None else float(epoch)
            if score > best_accuracy:
                best_accuracy, best_state = score, copy.deepcopy(network.state_dict())
                model.best_epoch = epoch

        network.load_state_dict(best_state)
        network.eval()
        model.history = history
        logger.info(f"Classifier training finished; best epoch {model.best_epoch}")
        return model, history

    def classify(
        self,
        model: ClassifierModel,
        reference_image: np.ndarray,
        suspicious_image: np.ndarray,
        fe_config: FeatureExtractorConfig,
        decision_cutoff: float = 0.5,
    ) -> Verdict:
        """Extract both stacks, predict, and apply the cutoff."""
        ref_stack, sus_stack = feature_service.extract_pair_features(reference_image, suspicious_image, fe_config)
        probability = self.predict_pair(model, ref_stack, sus_stack)
        return Verdict.from_probability(probability, decision_cutoff)


classifier_service = ClassifierService()

init_classifier = classifier_service.init_classifier
predict_stacks = classifier_service.predict_stacks
predict_pair = classifier_service.predict_pair
train_classifier = classifier_service.train_classifier
classify = classifier_service.classify
