from pathlib import Path

import numpy as np
import pytest

from src.app.models.dataset import DatasetManifest, PairLabel, SplitName
from src.app.models.features import FeatureExtractorConfig
from src.logging import configure_logging
from src.services.dataset_service import split_dataset
from src.services.synthetic_service import generate_synthetic_dataset

TEST_IMAGE_SIZE = 64


@pytest.fixture(scope="session", autouse=True)
def _logging() -> None:
    """Route logs through loguru at WARNING for the test session."""
    configure_logging("WARNING")


@pytest.fixture(scope="session")
def fe_config() -> FeatureExtractorConfig:
    """
    Toy backbone over small images.

    :return: feature configuration used across the suite.
    """
    return FeatureExtractorConfig(image_size=TEST_IMAGE_SIZE)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synthetic_manifest(tmp_path_factory: pytest.TempPathFactory) -> DatasetManifest:
    """
    Small seeded synthetic dataset written once per session.

    :return: unsplit manifest rooted at the dataset directory.
    """
    out_dir = tmp_path_factory.mktemp("synthetic")
    return generate_synthetic_dataset(
        seed=3,
        n_identities=6,
        n_pairs_per_class=16,
        out_dir=out_dir,
        image_size=TEST_IMAGE_SIZE,
    )


@pytest.fixture(scope="session")
def split_manifest(synthetic_manifest: DatasetManifest) -> DatasetManifest:
    return split_dataset(synthetic_manifest, train_fraction=0.75, seed=0)


@pytest.fixture
def image(rng: np.random.Generator) -> np.ndarray:
    """A random preprocessed image."""
    return rng.uniform(-1.0, 1.0, size=(TEST_IMAGE_SIZE, TEST_IMAGE_SIZE, 3))


@pytest.fixture
def manifest_path(synthetic_manifest: DatasetManifest) -> Path:
    return synthetic_manifest.root / "manifest.jsonl"


def carve_test_split(manifest: DatasetManifest, seed: int = 0) -> DatasetManifest:
    """
    Move half of each label's val records into test.

    Training selects its best epoch on val, so accuracy claims are measured on test.
    """
    rng = np.random.default_rng(seed)
    val = manifest.splits[SplitName.VAL.value]
    kept, test = [], list(manifest.splits.get(SplitName.TEST.value, []))
    for label in PairLabel:
        indices = [i for i in val if manifest.records[i].label == label]
        order = rng.permutation(len(indices))
        cut = len(indices) // 2
        test += [indices[j] for j in order[:cut]]
        kept += [indices[j] for j in order[cut:]]
    splits = {**manifest.splits, SplitName.VAL.value: sorted(kept), SplitName.TEST.value: sorted(test)}
    return manifest.model_copy(update={"splits": splits}).with_root(manifest.root)


@pytest.fixture(scope="session")
def held_out_test_split():
    """Factory carving a test split that training never sees."""
    return carve_test_split
