import json

import numpy as np
import pytest

from src.app.models.dataset import DatasetManifest, PairLabel, PairRecord
from src.services.dataset_service import (
    augment,
    encode_png,
    horizontal_flip,
    load_image,
    load_manifest,
    manifest_fingerprint,
    normalize_pixels,
    preprocess_image,
    sample_augmentation,
    save_manifest,
    split_dataset,
    validate_manifest_files,
)
from src.services.synthetic_service import (
    MANIFEST_NAME,
    RenderContent,
    generate_synthetic_dataset,
    identity_signature,
    render,
    render_swap,
)
from src.services.utils.exceptions import ConfigurationError, InputError, InputValidationError


def make_manifest(n_real: int, n_fake: int, technique: str = "synthetic-swap") -> DatasetManifest:
    records = [
        PairRecord(
            pair_id=f"{technique}-{index:03d}",
            real_path=f"{index:03d}/real.png",
            suspicious_path=f"{index:03d}/suspicious.png",
            label=PairLabel.REAL_REAL if index < n_real else PairLabel.FAKE_REAL,
            technique=technique,
        )
        for index in range(n_real + n_fake)
    ]
    return DatasetManifest(records=records)


def split_labels(manifest: DatasetManifest, name: str) -> tuple[int, int]:
    records = manifest.split_records(name)
    real = sum(r.is_real_pair for r in records)
    return real, len(records) - real


def test_preprocess_pixel_map_endpoints():
    pixels = np.zeros((4, 4, 3), dtype=np.uint8)
    pixels[0, 0] = 255
    image = preprocess_image(encode_png(pixels), image_size=4)
    assert image.shape == (4, 4, 3)
    assert image[0, 0, 0] == 1.0
    assert image[1, 1, 0] == -1.0
    np.testing.assert_array_equal(normalize_pixels([0.0, 127.5, 255.0]), [-1.0, 0.0, 1.0])


def test_preprocess_resizes_to_target():
    pixels = np.full((512, 512, 3), 90, dtype=np.uint8)
    image = preprocess_image(encode_png(pixels))
    assert image.shape == (256, 256, 3)
    assert image.min() >= -1.0 and image.max() <= 1.0


def test_preprocess_upsampled_checkerboard_keeps_corner_values():
    board = np.array([[0, 255], [255, 0]], dtype=np.uint8)
    pixels = np.repeat(board[:, :, None], 3, axis=2)
    image = preprocess_image(encode_png(pixels), image_size=256)
    assert image[0, 0, 0] == -1.0
    assert image[0, -1, 0] == 1.0
    assert image[-1, 0, 0] == 1.0
    assert image[-1, -1, 0] == -1.0


def test_preprocess_rejects_undecodable_bytes():
    with pytest.raises(InputError):
        preprocess_image(b"definitely not an image")


def test_augment_without_firing_transforms_is_identity(image):
    seed = next(s for s in range(1000) if sample_augmentation(s).is_identity)
    np.testing.assert_array_equal(augment(image, seed), image)


def test_double_flip_is_identity(image):
    np.testing.assert_allclose(horizontal_flip(horizontal_flip(image)), image, atol=1e-12)


def test_augment_is_deterministic_and_bounded(image):
    for seed in range(20):
        first, second = augment(image, seed), augment(image, seed)
        np.testing.assert_array_equal(first, second)
        assert first.shape == image.shape
        assert first.min() >= -1.0 and first.max() <= 1.0


def test_manifest_round_trip_preserves_unknown_fields(tmp_path):
    manifest = split_dataset(make_manifest(5, 5), seed=4)
    manifest.records[0] = PairRecord.model_validate({**manifest.records[0].model_dump(), "source_identity": 3})
    manifest.metadata = {"generator": "test"}
    path = save_manifest(manifest, tmp_path / MANIFEST_NAME)
    loaded = load_manifest(path, check_files=False)
    assert [r.model_dump() for r in loaded.records] == [r.model_dump() for r in manifest.records]
    assert loaded.records[0].model_extra == {"source_identity": 3}
    assert loaded.splits == manifest.splits
    assert loaded.split_seed == 4
    assert loaded.metadata == {"generator": "test"}
    assert loaded.root == tmp_path


def test_malformed_manifest_line_is_reported(tmp_path):
    path = save_manifest(make_manifest(2, 2), tmp_path / MANIFEST_NAME)
    lines = path.read_text().splitlines()
    lines[3] = '{"pair_id": "broken", "label": 7}'
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(InputValidationError) as error:
        load_manifest(path, check_files=False)
    assert error.value.details == {"line": 4}


def test_missing_image_names_the_pair(synthetic_manifest):
    manifest = synthetic_manifest.model_copy(deep=True).with_root(synthetic_manifest.root)
    record = manifest.records[2]
    manifest.records[2] = record.model_copy(update={"suspicious_path": "nowhere/suspicious.png"})
    with pytest.raises(InputError) as error:
        validate_manifest_files(manifest)
    assert error.value.details["pair_id"] == record.pair_id


def test_split_sizes_and_resplit_membership():
    manifest = make_manifest(5, 5)
    first = split_dataset(manifest, train_fraction=0.8, seed=17)
    second = split_dataset(manifest, train_fraction=0.8, seed=17)
    assert len(first.splits["train"]) == 8
    assert len(first.splits["val"]) == 2
    assert first.splits == second.splits


def test_split_is_disjoint_and_exhaustive():
    manifest = split_dataset(make_manifest(13, 9), seed=2)
    train, val = set(manifest.splits["train"]), set(manifest.splits["val"])
    assert not train & val
    assert train | val == set(range(22))


def test_balanced_split_is_stratified():
    manifest = split_dataset(make_manifest(50, 50), seed=0)
    assert split_labels(manifest, "train") == (40, 40)
    assert split_labels(manifest, "val") == (10, 10)


def test_unbalanced_split_keeps_ratio():
    manifest = split_dataset(make_manifest(60, 20), seed=5)
    train_real, train_fake = split_labels(manifest, "train")
    val_real, val_fake = split_labels(manifest, "val")
    assert abs(train_real - 3 * train_fake) <= 3
    assert abs(val_real - 3 * val_fake) <= 3


def test_held_out_techniques_go_to_test():
    manifest = make_manifest(4, 4)
    manifest.records += make_manifest(2, 2, technique="other-swap").records
    split = split_dataset(manifest, seed=1, held_out_techniques=["other-swap"])
    assert {r.technique for r in split.split_records("test")} == {"other-swap"}
    assert len(split.splits["train"]) + len(split.splits["val"]) == 8


def test_split_errors():
    with pytest.raises(InputValidationError):
        split_dataset(DatasetManifest(), seed=0)
    for fraction in (0.0, 1.0, 1.5):
        with pytest.raises(ConfigurationError):
            split_dataset(make_manifest(2, 2), train_fraction=fraction)


def test_identity_signature_is_deterministic():
    assert identity_signature(7, 3) == identity_signature(7, 3)
    assert identity_signature(7, 3) != identity_signature(7, 4)


def test_zero_artifact_swap_equals_genuine_render():
    rng = np.random.default_rng(0)
    content = RenderContent.sample(rng)
    source, target = identity_signature(1, 0), identity_signature(1, 1)
    np.testing.assert_array_equal(render_swap(source, target, content, 0.0, 64), render(source, content, 64))
    assert not np.array_equal(render_swap(source, target, content, 0.5, 64), render(source, content, 64))


def test_generation_is_byte_identical(tmp_path):
    kwargs = dict(seed=21, n_identities=3, n_pairs_per_class=2, image_size=32)
    first = generate_synthetic_dataset(out_dir=tmp_path / "a", **kwargs)
    generate_synthetic_dataset(out_dir=tmp_path / "b", **kwargs)
    for record in first.records:
        for path in (record.real_path, record.suspicious_path):
            assert (tmp_path / "a" / path).read_bytes() == (tmp_path / "b" / path).read_bytes()
    assert (tmp_path / "a" / MANIFEST_NAME).read_bytes() == (tmp_path / "b" / MANIFEST_NAME).read_bytes()


def test_generated_manifest_layout(synthetic_manifest):
    loaded = load_manifest(synthetic_manifest.root / MANIFEST_NAME)
    assert len(loaded.records) == 32
    assert sum(r.is_real_pair for r in loaded.records) == 16
    header = json.loads((synthetic_manifest.root / MANIFEST_NAME).read_text().splitlines()[0])
    assert header["metadata"]["n_identities"] == 6
    for record in loaded.records:
        assert record.real_path == f"{record.pair_id}/real.png"
        assert set(record.scenario) == {"lighting", "pose", "expression"}
        extra = record.model_extra
        if record.is_real_pair:
            assert extra["target_identity"] is None
        else:
            assert extra["target_identity"] != extra["source_identity"]


def test_generation_requires_two_identities(tmp_path):
    with pytest.raises(ConfigurationError):
        generate_synthetic_dataset(seed=0, n_identities=1, n_pairs_per_class=2, out_dir=tmp_path)


def _central_chromaticity(image: np.ndarray) -> np.ndarray:
    size = image.shape[0]
    lo, hi = int(size * 0.375), int(size * 0.625)
    color = (image[lo:hi, lo:hi] + 1.0).reshape(-1, 3).mean(axis=0)
    return color / color.sum()


@pytest.mark.slow
def test_nearest_centroid_baseline_learns_the_oracle(tmp_path):
    manifest = split_dataset(
        generate_synthetic_dataset(seed=8, n_identities=20, n_pairs_per_class=150, out_dir=tmp_path, image_size=64),
        seed=0,
    )

    def distances(name: str) -> tuple[np.ndarray, np.ndarray]:
        records = manifest.split_records(name)
        values = [
            np.linalg.norm(
                _central_chromaticity(load_image(manifest.resolve(r.real_path), 64))
                - _central_chromaticity(load_image(manifest.resolve(r.suspicious_path), 64))
            )
            for r in records
        ]
        return np.asarray(values), np.asarray([r.label for r in records])

    train_d, train_y = distances("train")
    centroids = {label: train_d[train_y == label].mean() for label in (0, 1)}
    val_d, val_y = distances("val")
    predicted = np.where(np.abs(val_d - centroids[1]) <= np.abs(val_d - centroids[0]), 1, 0)
    assert np.mean(predicted == val_y) > 0.8


def test_split_names_follow_record_order(tmp_path):
    manifest = make_manifest(3, 3)
    manifest.records += make_manifest(1, 1, technique="other-swap").records
    split = split_dataset(manifest, seed=6, held_out_techniques=["other-swap"])
    names = split.split_names()
    assert len(names) == 8
    for name, indices in split.splits.items():
        assert all(names[i] == name for i in indices)
    assert names[6:] == ["test", "test"]
    assert make_manifest(1, 1).split_names() == [None, None]

    loaded = load_manifest(save_manifest(split, tmp_path / MANIFEST_NAME), check_files=False)
    assert loaded.split_names() == names
    assert loaded.splits == split.splits


def test_manifest_fingerprint_tracks_records_only():
    manifest = make_manifest(4, 4)
    assert manifest_fingerprint(split_dataset(manifest, seed=1)) == manifest_fingerprint(manifest)
    assert manifest_fingerprint(make_manifest(4, 4, technique="other-swap")) != manifest_fingerprint(manifest)
