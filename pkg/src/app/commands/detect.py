import argparse
from pathlib import Path

from src.app.commands.common import EXIT_FACE_SWAPPED, EXIT_OK, emit, resolve
from src.app.commands.router import CommandRouter, argument
from src.app.models.detection import DetectionMethod
from src.services.anomaly_service import detect_anomaly
from src.services.checkpoint_service import load_checkpoint
from src.services.classifier_service import classify
from src.services.dataset_service import load_image
from src.utils.logging import get_logger

logger = get_logger(__name__)
router = CommandRouter()


@router.command(
    "detect",
    help="Judge a suspicious image against a real reference; exit 0 real, 1 face-swapped",
    arguments=[
        argument("--reference", type=Path, required=True, help="Genuine image of the person"),
        argument("--suspicious", type=Path, required=True, help="Image suspected to be face-swapped"),
        argument("--method", required=True, choices=[m.value for m in DetectionMethod]),
        argument("--checkpoint", type=Path, default=None, help="Default checkpoints/<method>.pt"),
        argument("--decision-cutoff", type=float, default=None, help="Classifier probability cutoff"),
    ],
)
def detect(args: argparse.Namespace) -> int:
    run_config = resolve(args, {"classifier_decision_cutoff": args.decision_cutoff})
    method = DetectionMethod(args.method)
    checkpoint = load_checkpoint(
        args.checkpoint or Path("checkpoints") / f"{method.value}.pt", expected_kind=method
    )
    fe_config = checkpoint.fe_config
    reference = load_image(args.reference, fe_config.image_size)
    suspicious = load_image(args.suspicious, fe_config.image_size)

    if method == DetectionMethod.CLASSIFIER:
        verdict = classify(checkpoint.model, reference, suspicious, fe_config, run_config.decision_cutoff)
    else:
        verdict = detect_anomaly(checkpoint.model, reference, suspicious, fe_config)
    emit(verdict.model_dump(mode="json"))
    return EXIT_FACE_SWAPPED if verdict.is_face_swapped else EXIT_OK
