import argparse
import sys
from pathlib import Path

from src.app.commands.common import EXIT_OK, load_checkpoint_manifest, resolve
from src.app.commands.router import CommandRouter, argument
from src.app.models.detection import DetectionMethod
from src.app.models.metrics import EvaluationDocument, Protocol
from src.core.lifetime import LifecycleManager
from src.services.checkpoint_service import load_checkpoint
from src.services.evaluation_service import Detectors, format_summary, run_protocol, write_report
from src.services.utils.exceptions import ConfigurationError
from src.services.utils.json_formatter import fingerprint
from src.utils.logging import get_logger

logger = get_logger(__name__)
router = CommandRouter()


@router.command(
    "evaluate",
    help="Evaluate trained detectors under in-dataset and/or cross-dataset protocols",
    arguments=[
        argument("--manifest", type=Path, required=True),
        argument("--classifier-checkpoint", type=Path, default=None),
        argument("--anomaly-checkpoint", type=Path, default=None),
        argument(
            "--protocol",
            nargs="+",
            choices=[p.value for p in Protocol],
            default=[Protocol.IN_DATASET.value],
        ),
        argument("--report", type=Path, default=Path("reports/evaluation.json")),
        argument("--decision-cutoff", type=float, default=None),
    ],
)
def evaluate(args: argparse.Namespace) -> int:
    """Write the report file and print one summary row per (method, protocol)."""
    run_config = resolve(args, {"classifier_decision_cutoff": args.decision_cutoff})
    if args.classifier_checkpoint is None and args.anomaly_checkpoint is None:
        raise ConfigurationError("Pass --classifier-checkpoint and/or --anomaly-checkpoint")

    classifier = anomaly = None
    fe_config = None
    if args.classifier_checkpoint is not None:
        classifier = load_checkpoint(args.classifier_checkpoint, expected_kind=DetectionMethod.CLASSIFIER)
        fe_config = classifier.fe_config
    if args.anomaly_checkpoint is not None:
        anomaly = load_checkpoint(args.anomaly_checkpoint, fe_config=fe_config, expected_kind=DetectionMethod.ANOMALY)
        fe_config = fe_config or anomaly.fe_config
    reference = classifier or anomaly

    detectors = Detectors(
        fe_config=fe_config,
        classifier=classifier.model if classifier else None,
        anomaly=anomaly.model if anomaly else None,
        decision_cutoff=run_config.decision_cutoff,
        training_techniques=reference.techniques,
        fingerprints={
            "run": reference.run_fingerprint or run_config.fingerprint,
            "features": fingerprint(fe_config),
        },
    )
    manifest = load_checkpoint_manifest(args.manifest, reference)
    dataset_id = args.manifest.resolve().parent.name

    reports = []
    with LifecycleManager.run(run_config.data.seed):
        for protocol in dict.fromkeys(args.protocol):
            reports += run_protocol(detectors, manifest, Protocol(protocol), dataset_id=dataset_id)

    document = EvaluationDocument(reports=reports, run_fingerprint=detectors.fingerprints["run"])
    write_report(document, args.report)
    logger.info(f"Report written to {args.report}")
    sys.stdout.write(format_summary(reports) + "\n")
    return EXIT_OK
