import argparse
from pathlib import Path

from src.app.commands.common import EXIT_OK, emit, load_split_manifest, resolve, split_params, training_techniques
from src.app.commands.router import CommandRouter, argument
from src.app.models.detection import DetectionMethod
from src.core.lifetime import LifecycleManager
from src.services.anomaly_service import train_anomaly
from src.services.checkpoint_service import load_checkpoint, save_checkpoint
from src.services.classifier_service import train_classifier
from src.services.dataset_service import manifest_fingerprint
from src.services.utils.exceptions import ConfigurationError
from src.utils.logging import get_logger

logger = get_logger(__name__)
router = CommandRouter()


def default_checkpoint(method: str) -> Path:
    return Path("checkpoints") / f"{method}.pt"


@router.command(
    "train",
    help="Train the pair classifier or the dual encoder anomaly detector",
    arguments=[
        argument("--manifest", type=Path, required=True),
        argument("--method", required=True, choices=[m.value for m in DetectionMethod]),
        argument("--out", type=Path, default=None, help="Checkpoint path (default checkpoints/<method>.pt)"),
        argument("--epochs", type=int, default=None),
        argument("--batch-size", type=int, default=None),
        argument("--lr", type=float, default=None, help="Adam learning rate"),
        argument("--seed", type=int, default=None, help="Model initialization and batch order seed"),
        argument("--alpha", type=float, default=None, help="Identity loss weight (classifier)"),
        argument("--augment", action="store_true", default=None, help="Augment training images (classifier)"),
        argument("--latent-dim", type=int, default=None, help="Latent length (anomaly)"),
        argument("--train-fraction", type=float, default=None),
        argument("--split-seed", type=int, default=None),
        argument(
            "--held-out-technique",
            action="append",
            default=[],
            help="Route a technique to the test split; repeatable",
        ),
        argument("--force", action="store_true", help="Overwrite a checkpoint from a different configuration"),
    ],
)
def train(args: argparse.Namespace) -> int:
    method = DetectionMethod(args.method)
    section = method.value
    overrides = {
        f"{section}_epochs": args.epochs,
        f"{section}_batch_size": args.batch_size,
        f"{section}_learning_rate": args.lr,
        f"{section}_seed": args.seed,
        "data_train_fraction": args.train_fraction,
        "data_seed": args.split_seed,
    }
    if method == DetectionMethod.CLASSIFIER:
        overrides.update(classifier_alpha=args.alpha, classifier_augment=args.augment)
    else:
        overrides.update(anomaly_latent_dim=args.latent_dim)
    run_config = resolve(args, overrides)

    out = args.out or default_checkpoint(method.value)
    if out.exists() and not args.force:
        existing = load_checkpoint(out)
        if existing.run_fingerprint != run_config.fingerprint:
            raise ConfigurationError(
                f"{out} was produced under a different configuration; pass --force to overwrite",
                details={"stored": existing.run_fingerprint, "current": run_config.fingerprint},
            )

    split = split_params(run_config, args.held_out_technique)
    manifest = load_split_manifest(args.manifest, split)
    seed = run_config.classifier.seed if method == DetectionMethod.CLASSIFIER else run_config.anomaly.seed
    with LifecycleManager.run(seed):
        if method == DetectionMethod.CLASSIFIER:
            model, _ = train_classifier(manifest, run_config.features, run_config.classifier)
        else:
            model = train_anomaly(manifest, run_config.features, run_config.anomaly)

    save_checkpoint(
        out,
        model,
        run_config.features,
        run_fingerprint=run_config.fingerprint,
        techniques=training_techniques(manifest),
        split=split,
        manifest_fingerprint=manifest_fingerprint(manifest),
    )
    emit(
        {
            "checkpoint": str(out),
            "method": method.value,
            "epochs": len(model.history),
            "final_loss": model.history[-1].train_loss,
        }
    )
    return EXIT_OK
