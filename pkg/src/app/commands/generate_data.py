import argparse
from pathlib import Path

from src.app.commands.common import EXIT_OK, emit, resolve
from src.app.commands.router import CommandRouter, argument
from src.core.lifetime import LifecycleManager
from src.services.synthetic_service import MANIFEST_NAME, generate_synthetic_dataset
from src.utils.logging import get_logger

logger = get_logger(__name__)
router = CommandRouter()


@router.command(
    "generate-data",
    help="Render a seeded synthetic pair dataset and its manifest",
    arguments=[
        argument("--out-dir", type=Path, default=None, help="Output directory"),
        argument("--seed", type=int, default=None),
        argument("--identities", type=int, default=None, help="Number of synthetic identities (>= 2)"),
        argument("--pairs", type=int, default=None, help="Pairs per class"),
        argument("--artifact-level", type=float, default=None, help="Blending artifact strength in [0, 1]"),
        argument("--technique", default=None, help="Technique tag written on every record"),
        argument("--image-size", type=int, default=None),
    ],
)
def generate_data(args: argparse.Namespace) -> int:
    """
    Generate the dataset and print the manifest path with record counts.
    """
    run_config = resolve(
        args,
        {
            "data_out_dir": args.out_dir,
            "data_seed": args.seed,
            "data_identities": args.identities,
            "data_pairs": args.pairs,
            "data_artifact_level": args.artifact_level,
            "data_technique": args.technique,
            "features_image_size": args.image_size,
        },
    )
    data = run_config.data
    with LifecycleManager.run(data.seed):
        manifest = generate_synthetic_dataset(
            seed=data.seed,
            n_identities=data.identities,
            n_pairs_per_class=data.pairs,
            out_dir=data.out_dir,
            artifact_level=data.artifact_level,
            technique=data.technique,
            image_size=run_config.features.image_size,
            metadata={"run_fingerprint": run_config.fingerprint},
        )
    real_real = sum(1 for r in manifest.records if r.is_real_pair)
    emit(
        {
            "manifest": str(Path(data.out_dir) / MANIFEST_NAME),
            "records": len(manifest.records),
            "real_real": real_real,
            "fake_real": len(manifest.records) - real_real,
        }
    )
    return EXIT_OK
