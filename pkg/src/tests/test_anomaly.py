import numpy as np
import pytest
import torch

from src.app.models.dataset import SplitName
from src.app.models.detection import AnomalyConfig, DetectionMethod, ThresholdCalibration, Verdict, VerdictLabel
from src.services.anomaly_service import (
    anomaly_score,
    calibrate_from_losses,
    calibrate_threshold,
    detect_anomaly,
    encode_pair,
    fuse_latents,
    init_anomaly,
    score_stacks,
    train_anomaly,
)
from src.services.dataset_service import load_image, split_dataset
from src.services.feature_service import feature_service
from src.services.synthetic_service import generate_synthetic_dataset
from src.services.utils.exceptions import ConfigurationError, InputValidationError

INPUT_DIM = 100


def small_config(**overrides) -> AnomalyConfig:
    return AnomalyConfig(
        **{"input_dim": INPUT_DIM, "latent_dim": 8, "widths": (4, 8), "batch_size": 4, "learning_rate": 1e-3, **overrides}
    )


def test_fuse_latents_examples(rng):
    z2 = torch.as_tensor(rng.normal(size=6))
    assert torch.equal(fuse_latents(torch.ones(6, dtype=torch.float64), z2), z2)
    assert fuse_latents(torch.tensor([1.0, 2.0]), torch.tensor([3.0, 4.0])).tolist() == [3.0, 8.0]
    for _ in range(100):
        a, b = torch.as_tensor(rng.normal(size=5)), torch.as_tensor(rng.normal(size=5))
        assert torch.equal(fuse_latents(a, b), fuse_latents(b, a))
    with pytest.raises(InputValidationError):
        fuse_latents(torch.ones(2), torch.ones(3))


def test_encode_pair_is_repeatable_and_finite(rng):
    model = init_anomaly(small_config())
    x1, x2 = rng.normal(size=INPUT_DIM), rng.normal(size=INPUT_DIM)
    z1, z2 = encode_pair(model, x1, x2)
    again = encode_pair(model, x1, x2)
    np.testing.assert_array_equal(z1, again[0])
    np.testing.assert_array_equal(z2, again[1])
    assert z1.shape == z2.shape == (8,)
    zeros = encode_pair(model, np.zeros(INPUT_DIM), np.zeros(INPUT_DIM))
    assert all(np.all(np.isfinite(z)) for z in zeros)


def test_second_encoder_never_sees_the_reference(rng):
    model = init_anomaly(small_config())
    x1, x2 = rng.normal(size=INPUT_DIM), rng.normal(size=INPUT_DIM)
    z1, z2 = encode_pair(model, x1, x2)
    p1, p2 = encode_pair(model, x1 + 1e-6 * rng.normal(size=INPUT_DIM), x2)
    assert np.linalg.norm(p1 - z1) < 1e-3
    np.testing.assert_array_equal(p2, z2)


def test_encode_pair_rejects_length_mismatch(rng):
    model = init_anomaly(small_config())
    with pytest.raises(InputValidationError):
        encode_pair(model, rng.normal(size=INPUT_DIM), rng.normal(size=INPUT_DIM - 1))


def test_scores_are_non_negative_and_repeatable(rng):
    model = init_anomaly(small_config())
    for _ in range(20):
        a = rng.normal(size=INPUT_DIM)
        assert anomaly_score(model, a, a) >= 0.0
    a, b = rng.normal(size=INPUT_DIM), rng.normal(size=INPUT_DIM)
    assert anomaly_score(model, a, b) == anomaly_score(model, a, b)
    batch = score_stacks(model, rng.normal(size=(5, INPUT_DIM)), rng.normal(size=(5, INPUT_DIM)))
    assert batch.shape == (5,)


def test_calibration_examples():
    calibration = calibrate_from_losses([0.1, 0.2, 0.3], k=2.0)
    assert calibration.mu == pytest.approx(0.2)
    assert calibration.sigma == pytest.approx(0.0816497, abs=1e-7)
    assert calibration.threshold == pytest.approx(0.3632993, abs=1e-7)
    assert calibration.n_pairs == 3
    assert ThresholdCalibration.from_statistics(0.5, 0.05, k=2.0).threshold == pytest.approx(0.6)
    flat = calibrate_from_losses([0.4, 0.4, 0.4])
    assert flat.sigma == pytest.approx(0.0, abs=1e-15)
    assert flat.threshold == pytest.approx(0.4)


def test_threshold_grows_with_k(rng):
    losses = rng.uniform(0, 1, size=10)
    thresholds = [calibrate_from_losses(losses, k).threshold for k in (0.0, 1.0, 2.0, 3.5)]
    assert all(a < b for a, b in zip(thresholds, thresholds[1:]))


def test_calibration_errors():
    with pytest.raises(InputValidationError):
        calibrate_from_losses([0.3])
    with pytest.raises(ConfigurationError):
        calibrate_from_losses([0.1, 0.2], k=-1.0)


def test_threshold_boundary_is_strict():
    threshold = 0.6
    assert Verdict.from_anomaly_score(threshold, threshold).label == VerdictLabel.REAL
    assert Verdict.from_anomaly_score(np.nextafter(threshold, 1.0), threshold).label == VerdictLabel.FACE_SWAPPED


def test_verdict_only_depends_on_the_comparison(rng):
    for score, threshold in rng.uniform(0, 5, size=(50, 2)):
        plain = Verdict.from_anomaly_score(score, threshold).label
        assert Verdict.from_anomaly_score(np.log1p(score), np.log1p(threshold)).label == plain
        assert Verdict.from_anomaly_score(3 * score + 1, 3 * threshold + 1).label == plain


def test_detect_requires_calibration(fe_config, image):
    model = init_anomaly(small_config(input_dim=feature_service.stack_dim(fe_config)))
    with pytest.raises(ConfigurationError):
        detect_anomaly(model, image, image, fe_config)


def test_training_needs_real_pairs(synthetic_manifest, fe_config):
    fakes = synthetic_manifest.model_copy(
        update={"records": [r for r in synthetic_manifest.records if not r.is_real_pair]}
    ).with_root(synthetic_manifest.root)
    with pytest.raises(InputValidationError):
        train_anomaly(fakes, fe_config, small_config(epochs=1))


def test_training_reduces_reconstruction_loss(split_manifest, fe_config):
    model = train_anomaly(split_manifest, fe_config, small_config(epochs=20))
    assert len(model.history) == 20
    assert all(np.isfinite(r.train_loss) for r in model.history)
    assert model.history[-1].train_loss < model.history[0].train_loss
    assert model.history[0].val_loss is not None


def test_training_is_deterministic(split_manifest, fe_config):
    first = train_anomaly(split_manifest, fe_config, small_config(epochs=2, seed=4))
    second = train_anomaly(split_manifest, fe_config, small_config(epochs=2, seed=4))
    for a, b in zip(first.network.state_dict().values(), second.network.state_dict().values()):
        assert torch.equal(a, b)


def test_calibrate_then_detect(split_manifest, fe_config):
    model = train_anomaly(split_manifest, fe_config, small_config(epochs=1))
    calibration = calibrate_threshold(model, split_manifest, fe_config, k=2.0)
    n_val_real = sum(r.is_real_pair for r in split_manifest.split_records(SplitName.VAL.value))
    assert calibration.n_pairs == n_val_real
    assert model.calibration == calibration

    record = split_manifest.records[0]
    reference = load_image(split_manifest.resolve(record.real_path), fe_config.image_size)
    suspicious = load_image(split_manifest.resolve(record.suspicious_path), fe_config.image_size)
    verdict = detect_anomaly(model, reference, suspicious, fe_config)
    assert verdict.method == DetectionMethod.ANOMALY
    assert verdict.threshold_used == calibration.threshold
    assert verdict.is_face_swapped == (verdict.score > calibration.threshold)


def test_calibration_needs_two_real_validation_pairs(split_manifest, fe_config):
    model = init_anomaly(small_config(input_dim=feature_service.stack_dim(fe_config)))
    one_real = next(i for i in split_manifest.splits["val"] if split_manifest.records[i].is_real_pair)
    narrowed = split_manifest.model_copy(
        update={"splits": {**split_manifest.splits, "val": [one_real]}}
    ).with_root(split_manifest.root)
    with pytest.raises(InputValidationError):
        calibrate_threshold(model, narrowed, fe_config)


@pytest.mark.slow
def test_oracle_scores_and_verdicts(tmp_path, fe_config, held_out_test_split):
    manifest = held_out_test_split(
        split_dataset(
            generate_synthetic_dataset(
                seed=13, n_identities=40, n_pairs_per_class=1000, out_dir=tmp_path, image_size=fe_config.image_size
            ),
            seed=0,
        )
    )
    model = train_anomaly(manifest, fe_config, AnomalyConfig(epochs=30, learning_rate=1e-3, seed=0))
    calibration = calibrate_threshold(model, manifest, fe_config)

    test = feature_service.extract_pairs(manifest, manifest.split_records(SplitName.TEST.value), fe_config)
    scores = score_stacks(model, test.ref, test.sus)
    real, fake = scores[test.labels == 1], scores[test.labels == 0]
    assert real[:200].mean() < fake[:200].mean()
    assert np.mean(fake > calibration.threshold) >= 0.9
    assert np.mean(real > calibration.threshold) <= 0.1


def test_encode_pair_rejects_batches(rng):
    model = init_anomaly(small_config())
    with pytest.raises(InputValidationError):
        encode_pair(model, rng.normal(size=(3, INPUT_DIM)), rng.normal(size=(3, INPUT_DIM)))
    with pytest.raises(InputValidationError):
        encode_pair(model, rng.normal(size=INPUT_DIM), rng.normal(size=(1, INPUT_DIM)))


@pytest.mark.parametrize("value", [1e39, -1e39, 3e38])
def test_extreme_finite_inputs_give_finite_scores(value):
    model = init_anomaly(small_config())
    score = anomaly_score(model, np.full(INPUT_DIM, value), np.ones(INPUT_DIM))
    assert np.isfinite(score)
    assert score >= 0.0
