import json

import pytest

from src.__main__ import main
from src.app.commands.common import load_checkpoint_manifest
from src.app.models.dataset import DatasetManifest
from src.services.checkpoint_service import history_path, load_checkpoint
from src.services.dataset_service import load_manifest, save_manifest
from src.services.evaluation_service import read_report


def last_json_line(capsys) -> dict:
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "run.toml"
    config.write_text("features_image_size = 64\nclassifier_batch_size = 8\nanomaly_batch_size = 4\n")
    return root, config


def test_end_to_end(workspace, capsys):
    root, config = workspace
    data = root / "data"
    manifest = data / "manifest.jsonl"

    assert main(["generate-data", "--out-dir", str(data), "--seed", "3", "--identities", "4", "--pairs", "8",
                 "--image-size", "64"]) == 0
    generated = last_json_line(capsys)
    assert generated == {"manifest": str(manifest), "records": 16, "real_real": 8, "fake_real": 8}

    classifier, anomaly = root / "classifier.pt", root / "anomaly.pt"
    for method, out in (("classifier", classifier), ("anomaly", anomaly)):
        code = main(["train", "--manifest", str(manifest), "--method", method, "--out", str(out), "--epochs", "1",
                     "--config", str(config)])
        assert code == 0
        trained = last_json_line(capsys)
        assert trained["epochs"] == 1
        assert out.is_file() and history_path(out).is_file()

    assert main(["calibrate", "--checkpoint", str(anomaly), "--manifest", str(manifest), "--k", "2"]) == 0
    calibration = last_json_line(capsys)
    assert calibration["threshold"] == pytest.approx(calibration["mu"] + 2 * calibration["sigma"])

    pair = data / "synthetic-swap-fr-00000"
    images = ["--reference", str(pair / "real.png"), "--suspicious", str(pair / "suspicious.png")]
    assert main(["detect", *images, "--method", "classifier", "--checkpoint", str(classifier),
                 "--decision-cutoff", "0"]) == 0
    assert last_json_line(capsys)["label"] == "real"
    assert main(["detect", *images, "--method", "classifier", "--checkpoint", str(classifier),
                 "--decision-cutoff", "1"]) == 1
    assert last_json_line(capsys)["label"] == "face-swapped"

    code = main(["detect", *images, "--method", "anomaly", "--checkpoint", str(anomaly)])
    verdict = last_json_line(capsys)
    assert code == (1 if verdict["label"] == "face-swapped" else 0)
    assert verdict["threshold_used"] == pytest.approx(calibration["threshold"])

    report = root / "reports" / "evaluation.json"
    assert main(["evaluate", "--manifest", str(manifest), "--classifier-checkpoint", str(classifier),
                 "--anomaly-checkpoint", str(anomaly), "--report", str(report)]) == 0
    summary = capsys.readouterr().out
    assert "classifier" in summary and "anomaly" in summary
    document = read_report(report)
    assert [r.method.value for r in document.reports] == ["classifier", "anomaly"]
    assert all(r.dataset_id == "data" for r in document.reports)
    assert all(r.n_pairs == 4 for r in document.reports)

    # same output, different configuration
    assert main(["train", "--manifest", str(manifest), "--method", "classifier", "--out", str(classifier),
                 "--epochs", "1", "--alpha", "0.9", "--config", str(config)]) == 2
    assert "CONFIGURATION_ERROR" in capsys.readouterr().err


def test_usage_and_input_errors(workspace, capsys):
    root, _ = workspace
    assert main(["generate-data", "--out-dir", str(root / "bad"), "--identities", "1", "--pairs", "2"]) == 2
    assert main(["bogus-command"]) == 2
    assert main(["detect", "--reference", str(root / "missing.png"), "--suspicious", str(root / "missing.png"),
                 "--method", "classifier", "--checkpoint", str(root / "absent.pt")]) == 2
    assert main(["generate-data", "--out-dir", str(root / "bad"), "--config", str(root / "absent.toml")]) == 2


def test_detect_missing_image_and_wrong_checkpoint_kind(workspace, capsys):
    root, config = workspace
    data = root / "small"
    manifest = data / "manifest.jsonl"
    assert main(["generate-data", "--out-dir", str(data), "--identities", "3", "--pairs", "5", "--image-size", "64"]) == 0
    classifier = root / "small-classifier.pt"
    assert main(["train", "--manifest", str(manifest), "--method", "classifier", "--out", str(classifier),
                 "--epochs", "1", "--config", str(config)]) == 0
    capsys.readouterr()

    assert main(["detect", "--reference", str(root / "missing.png"), "--suspicious", str(root / "missing.png"),
                 "--method", "classifier", "--checkpoint", str(classifier)]) == 2
    assert "INPUT_ERROR" in capsys.readouterr().err
    assert main(["calibrate", "--checkpoint", str(classifier), "--manifest", str(manifest)]) == 2
    assert "VALIDATION_ERROR" in capsys.readouterr().err


@pytest.fixture(scope="module")
def two_datasets(workspace):
    """Dataset A with the default technique, dataset B with another one, and a classifier trained on A."""
    root, config = workspace
    paths = {}
    for name, technique in (("data-a", "synthetic-swap"), ("data-b", "strong-swap")):
        out_dir = root / name
        assert main(["generate-data", "--out-dir", str(out_dir), "--seed", "5", "--identities", "4", "--pairs", "10",
                     "--image-size", "64", "--technique", technique]) == 0
        paths[name] = out_dir / "manifest.jsonl"
    classifier = root / "classifier-a.pt"
    assert main(["train", "--manifest", str(paths["data-a"]), "--method", "classifier", "--out", str(classifier),
                 "--epochs", "1", "--config", str(config)]) == 0
    return paths["data-a"], paths["data-b"], classifier


def test_other_dataset_is_evaluated_in_full(workspace, two_datasets, capsys):
    root, _ = workspace
    _, manifest_b, classifier = two_datasets
    capsys.readouterr()
    report = root / "reports" / "cross.json"
    assert main(["evaluate", "--manifest", str(manifest_b), "--classifier-checkpoint", str(classifier),
                 "--protocol", "cross-dataset", "--report", str(report)]) == 0
    (entry,) = read_report(report).reports
    assert entry.protocol.value == "cross-dataset"
    assert entry.n_pairs == 20


def test_stored_split_is_replayed_only_on_the_training_manifest(two_datasets):
    manifest_a, manifest_b, classifier = two_datasets
    checkpoint = load_checkpoint(classifier)
    replayed = load_checkpoint_manifest(manifest_a, checkpoint)
    assert replayed.is_split
    assert len(replayed.splits["train"]) == 16
    foreign = load_checkpoint_manifest(manifest_b, checkpoint)
    assert not foreign.is_split
    assert len(foreign.records) == 20


def test_both_protocols_on_a_combined_manifest(workspace, two_datasets, capsys):
    root, config = workspace
    manifest_a, manifest_b, _ = two_datasets
    records = []
    for path in (manifest_a, manifest_b):
        source = load_manifest(path)
        records += [
            r.model_copy(update={"real_path": str(source.resolve(r.real_path)),
                                 "suspicious_path": str(source.resolve(r.suspicious_path))})
            for r in source.records
        ]
    combined = save_manifest(DatasetManifest(records=records), root / "combined" / "manifest.jsonl")
    classifier = root / "classifier-combined.pt"
    assert main(["train", "--manifest", str(combined), "--method", "classifier", "--out", str(classifier),
                 "--epochs", "1", "--held-out-technique", "strong-swap", "--config", str(config)]) == 0
    capsys.readouterr()

    report = root / "reports" / "combined.json"
    assert main(["evaluate", "--manifest", str(combined), "--classifier-checkpoint", str(classifier),
                 "--protocol", "in-dataset", "cross-dataset", "--report", str(report)]) == 0
    summary = capsys.readouterr().out
    assert "in-dataset" in summary and "cross-dataset" in summary
    by_protocol = {r.protocol.value: r for r in read_report(report).reports}
    assert by_protocol["in-dataset"].n_pairs == 4
    assert by_protocol["cross-dataset"].n_pairs == 20


def test_repeated_training_writes_identical_files(workspace, two_datasets, capsys):
    root, config = workspace
    manifest_a, _, _ = two_datasets
    out = root / "repeat.pt"
    outputs = []
    for _ in range(2):
        assert main(["train", "--manifest", str(manifest_a), "--method", "classifier", "--out", str(out),
                     "--epochs", "2", "--config", str(config)]) == 0
        outputs.append((out.read_bytes(), history_path(out).read_bytes()))
    assert outputs[0] == outputs[1]


def test_non_finite_loss_exits_with_numeric_code(workspace, two_datasets, capsys, monkeypatch):
    root, config = workspace
    manifest_a, _, _ = two_datasets
    monkeypatch.setattr(
        "src.services.classifier_service.final_loss", lambda bce, sil, alpha: bce * float("nan")
    )
    capsys.readouterr()
    assert main(["train", "--manifest", str(manifest_a), "--method", "classifier", "--out", str(root / "nan.pt"),
                 "--epochs", "1", "--config", str(config)]) == 3
    assert "NUMERIC_ERROR" in capsys.readouterr().err
    assert not (root / "nan.pt").exists()


def test_calibrate_reports_threshold_rule(workspace, two_datasets, capsys):
    root, config = workspace
    manifest_a, _, _ = two_datasets
    anomaly = root / "anomaly-a.pt"
    assert main(["train", "--manifest", str(manifest_a), "--method", "anomaly", "--out", str(anomaly),
                 "--epochs", "1", "--config", str(config)]) == 0
    assert main(["calibrate", "--checkpoint", str(anomaly), "--manifest", str(manifest_a), "--k", "3"]) == 0
    calibration = last_json_line(capsys)
    assert calibration["k"] == 3
    assert calibration["threshold"] == pytest.approx(calibration["mu"] + 3 * calibration["sigma"])
    assert "mu + k * sigma" in calibration["rule"]
    assert "0.6" in calibration["rule"]
