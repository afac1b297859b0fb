"""
Detection metrics, evaluation protocols and report files.

The positive class is face-swapped (a fake-real pair, truth label 0). Metrics
whose denominator is zero are left out of the report instead of being set to 0.
"""
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.metrics import roc_auc_score

from src.app.models.dataset import DatasetManifest, PairLabel, PairRecord, SplitName
from src.app.models.detection import DetectionMethod, Verdict, VerdictLabel
from src.app.models.features import FeatureExtractorConfig
from src.app.models.metrics import ConfusionCounts, EvaluationDocument, MetricsReport, Protocol
from src.services.anomaly_service import AnomalyModel, score_stacks
from src.services.classifier_service import ClassifierModel, predict_stacks
from src.services.dataset_service import FaceAligner
from src.services.feature_service import PairFeatures, feature_service
from src.services.utils.exceptions import ConfigurationError, InputError, InputValidationError
from src.services.utils.json_formatter import get_formatted_json
from src.utils.logging import get_logger

logger = get_logger(__name__)

SUMMARY_COLUMNS = ["method", "protocol", "n_pairs", "accuracy", "precision", "recall", "f1", "auc"]


def _is_positive(truth_label: int) -> bool:
    return int(truth_label) == PairLabel.FAKE_REAL


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


@dataclass
class Detectors:
    """Trained detectors sharing one feature configuration."""
    fe_config: FeatureExtractorConfig
    classifier: Optional[ClassifierModel] = None
    anomaly: Optional[AnomalyModel] = None
    decision_cutoff: float = 0.5
    training_techniques: list[str] = field(default_factory=list)
    fingerprints: dict[str, str] = field(default_factory=dict)


class EvaluationService:
    """Scores detectors under the in-dataset and cross-dataset protocols."""

    def confusion_counts(self, verdicts: Sequence[Verdict], truth: Sequence[int]) -> ConfusionCounts:
        """Tally verdicts against truth labels (1 real-real, 0 fake-real)."""
        if len(verdicts) != len(truth):
            raise InputValidationError(
                "One truth label per verdict is required",
                details={"verdicts": len(verdicts), "truth": len(truth)},
            )
        if not verdicts:
            raise InputValidationError("Cannot count an empty set of verdicts")
        counts = ConfusionCounts()
        for verdict, label in zip(verdicts, truth):
            flagged = verdict.label == VerdictLabel.FACE_SWAPPED
            if _is_positive(label):
                counts.tp += flagged
                counts.fn += not flagged
            else:
                counts.fp += flagged
                counts.tn += not flagged
        return counts

    def compute_metrics(self, counts: ConfusionCounts, **fields) -> MetricsReport:
        """
        Accuracy, precision, recall and f1 from a confusion table.

        Args:
            counts: Confusion table with face-swapped as positive
            **fields: Report metadata (method, protocol, threshold, ...)

        Returns:
            A report with auc left unset
        """
        if counts.n_pairs < 1:
            raise InputValidationError("Metrics need at least one pair")
        precision = _ratio(counts.tp, counts.tp + counts.fp)
        recall = _ratio(counts.tp, counts.tp + counts.fn)
        f1 = None
        if precision is not None and recall is not None and precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        return MetricsReport(
            accuracy=(counts.tp + counts.tn) / counts.n_pairs,
            precision=precision,
            recall=recall,
            f1=f1,
            confusion=counts,
            n_pairs=counts.n_pairs,
            **fields,
        )

    def auc(self, scores: Sequence[float], truth: Sequence[int]) -> float:
        """
        Area under the ROC curve with face-swapped as positive; higher scores
        mean more suspicious. Ties get half credit.
        """
        scores = np.asarray(scores, dtype=np.float64)
        positive = np.asarray([_is_positive(t) for t in truth])
        if scores.shape != positive.shape:
            raise InputValidationError("One truth label per score is required")
        if positive.all() or not positive.any():
            raise InputValidationError("AUC needs both real-real and fake-real pairs")
        return float(roc_auc_score(positive, scores))

    def select_protocol_records(
        self,
        manifest: DatasetManifest,
        protocol: Protocol,
        training_techniques: Sequence[str],
    ) -> list[PairRecord]:
        """
        Records outside the manifest's train split whose technique was
        (in-dataset) or was not (cross-dataset) seen during training. Every
        record of an unsplit manifest is eligible.
        """
        train_indices = set(manifest.splits.get(SplitName.TRAIN.value, []))
        seen = set(training_techniques)
        candidates = [r for i, r in enumerate(manifest.records) if i not in train_indices]
        if protocol == Protocol.IN_DATASET:
            selected = [r for r in candidates if r.technique in seen]
        else:
            selected = [r for r in candidates if r.technique not in seen]
        if not selected:
            raise InputValidationError(
                f"Protocol '{protocol.value}' selects no pairs",
                details={"training_techniques": sorted(seen), "manifest_techniques": manifest.techniques},
            )
        return selected

    def scenario_accuracy(self, records: Sequence[PairRecord], correct: np.ndarray) -> dict[str, float]:
        """Accuracy per scenario tag, keyed ``name=value``."""
        buckets: dict[str, list[bool]] = defaultdict(list)
        for record, hit in zip(records, correct):
            for name, value in record.scenario.items():
                buckets[f"{name}={value}"].append(bool(hit))
        return {key: float(np.mean(hits)) for key, hits in sorted(buckets.items())}

    def _report(
        self,
        verdicts: list[Verdict],
        scores: np.ndarray,
        features: PairFeatures,
        **fields,
    ) -> MetricsReport:
        counts = self.confusion_counts(verdicts, features.labels.astype(int).tolist())
        report = self.compute_metrics(counts, **fields)
        try:
            report.auc = self.auc(scores, features.labels)
        except InputValidationError:
            logger.warning("Selection holds a single class; AUC is left undefined")
        correct = np.array([v.is_face_swapped == _is_positive(t) for v, t in zip(verdicts, features.labels)])
        report.scenario_accuracy = self.scenario_accuracy(features.records, correct)
        return report

    def evaluate_features(
        self,
        detectors: Detectors,
        features: PairFeatures,
        protocol: Optional[Protocol] = None,
        dataset_id: Optional[str] = None,
    ) -> list[MetricsReport]:
        """One report per available detector over already extracted pair features."""
        common = {
            "protocol": protocol,
            "dataset_id": dataset_id,
            "techniques": sorted({r.technique for r in features.records}),
            "fingerprints": dict(detectors.fingerprints),
        }
        reports = []
        if detectors.classifier is not None:
            probabilities = predict_stacks(detectors.classifier, features.ref, features.sus)
            verdicts = [Verdict.from_probability(float(p), detectors.decision_cutoff) for p in probabilities]
            reports.append(
                self._report(
                    verdicts,
                    1.0 - probabilities,
                    features,
                    method=DetectionMethod.CLASSIFIER,
                    decision_cutoff=detectors.decision_cutoff,
                    **common,
                )
            )
        if detectors.anomaly is not None:
            calibration = detectors.anomaly.calibration
            if calibration is None:
                raise ConfigurationError("Anomaly detector is not calibrated; run calibrate first")
            scores = score_stacks(detectors.anomaly, features.ref, features.sus)
            verdicts = [Verdict.from_anomaly_score(float(s), calibration.threshold) for s in scores]
            reports.append(
                self._report(
                    verdicts,
                    scores,
                    features,
                    method=DetectionMethod.ANOMALY,
                    threshold=calibration.threshold,
                    **common,
                )
            )
        if not reports:
            raise ConfigurationError("No detector to evaluate")
        return reports

    def run_protocol(
        self,
        detectors: Detectors,
        manifest: DatasetManifest,
        protocol: Protocol,
        dataset_id: Optional[str] = None,
        aligner: Optional[FaceAligner] = None,
    ) -> list[MetricsReport]:
        """
        Evaluate every detector on the records the protocol selects.

        Args:
            detectors: Trained detectors and the techniques they were trained on
            manifest: Dataset to evaluate on
            protocol: in-dataset or cross-dataset
            dataset_id: Identifier written into each report
            aligner: Optional face alignment hook

        Returns:
            One report per detector
        """
        records = self.select_protocol_records(manifest, protocol, detectors.training_techniques)
        logger.info(f"Protocol {protocol.value}: {len(records)} pairs")
        features = feature_service.extract_pairs(manifest, records, detectors.fe_config, aligner)
        return self.evaluate_features(detectors, features, protocol=protocol, dataset_id=dataset_id)

    def write_report(self, document: EvaluationDocument, path: Path) -> Path:
        """Pretty JSON with sorted keys."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(get_formatted_json(document, pretty=True), encoding="utf-8")
        return path

    def read_report(self, path: Path) -> EvaluationDocument:
        try:
            return EvaluationDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise InputError(f"Cannot read report '{path}': {e.strerror or e}")

    def summary_table(self, reports: Sequence[MetricsReport]) -> pd.DataFrame:
        """One row per (method, protocol)."""
        rows = [report.model_dump(mode="json", include=set(SUMMARY_COLUMNS)) for report in reports]
        return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    def format_summary(self, reports: Sequence[MetricsReport]) -> str:
        return self.summary_table(reports).to_string(index=False, float_format=lambda v: f"{v:.4f}", na_rep="-")


evaluation_service = EvaluationService()

confusion_counts = evaluation_service.confusion_counts
compute_metrics = evaluation_service.compute_metrics
auc = evaluation_service.auc
select_protocol_records = evaluation_service.select_protocol_records
scenario_accuracy = evaluation_service.scenario_accuracy
evaluate_features = evaluation_service.evaluate_features
run_protocol = evaluation_service.run_protocol
write_report = evaluation_service.write_report
read_report = evaluation_service.read_report
summary_table = evaluation_service.summary_table
format_summary = evaluation_service.format_summary
