import json

import numpy as np
import pytest

from semconmf import tensorio
from semconmf.cli import _worker_count, main
from semconmf.synthetic import write_planted_dataset

FAST = ["--iters", "250", "--beta-temp", "0"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    manifest = write_planted_dataset(root, 4, seed=50)
    return manifest


def _run(argv):
    return main([str(a) for a in argv])


def test_empty_manifest(tmp_path):
    manifest = tmp_path / "m.json"
    manifest.write_text('{"samples": []}')
    out = tmp_path / "run"
    assert _run(["decompose", "--manifest", manifest, "--out", out] + FAST) == 0
    listing = json.loads((out / "results.json").read_text())
    assert listing["samples"] == []
    assert _run(["eval", "--results", out, "--manifest", manifest]) == 0
    report = json.loads((out / "eval_report.json").read_text())
    assert report["samples_scored"] == 0


def test_decompose_recovers_planted_concepts(dataset, tmp_path):
    out = tmp_path / "run"
    assert _run(["decompose", "--manifest", dataset, "--out", out] + FAST) == 0
    listing = json.loads((out / "results.json").read_text())
    assert len(listing["samples"]) == 4
    assert all(r["status"] == "ok" for r in listing["samples"])
    manifest = tensorio.load_manifest(dataset)
    expected = {s.sample_id: s.gt_class_label for s in manifest}
    for record in listing["samples"]:
        result = json.loads((out / record["dir"] / "result.json").read_text())
        frame = result["frames"][0]
        assert frame["label"] == expected[record["sample_id"]]
        assert 0 <= frame["k_star"] < 8
        assert len(frame["per_factor_divergence"]) == 8


def test_corrupt_sample_is_isolated(dataset, tmp_path):
    import shutil

    data_dir = dataset.parent
    bad_root = tmp_path / "databad"
    shutil.copytree(data_dir, bad_root)
    (bad_root / "planted001" / "image_f0.scnm").write_bytes(b"JUNK")
    out = tmp_path / "run"
    code = _run(["decompose", "--manifest", bad_root / "manifest.json", "--out", out,
                 "--iters", "40", "--beta-temp", "0"])
    assert code == 1
    listing = json.loads((out / "results.json").read_text())
    by_id = {r["sample_id"]: r for r in listing["samples"]}
    assert by_id["planted001"]["status"] == "failed"
    assert "FormatError" in by_id["planted001"]["error"]
    others = [r for sid, r in by_id.items() if sid != "planted001"]
    assert all(r["status"] == "ok" for r in others)


def test_rerun_is_byte_identical(dataset, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        assert _run(["decompose", "--manifest", dataset, "--out", out,
                     "--iters", "60", "--beta-temp", "0", "--seed", "9"]) == 0
    assert (out1 / "results.json").read_bytes() == (out2 / "results.json").read_bytes()
    for sample in sorted(p.name for p in (out1 / "samples").iterdir()):
        a = (out1 / "samples" / sample / "result.json").read_bytes()
        b = (out2 / "samples" / sample / "result.json").read_bytes()
        assert a == b


def test_worker_pool_matches_serial(dataset, tmp_path):
    serial, parallel = tmp_path / "serial", tmp_path / "parallel"
    args = ["--iters", "60", "--beta-temp", "0"]
    assert _run(["decompose", "--manifest", dataset, "--out", serial] + args) == 0
    assert _run(["decompose", "--manifest", dataset, "--out", parallel,
                 "--workers", "3"] + args) == 0
    assert (serial / "results.json").read_bytes() == (parallel / "results.json").read_bytes()
    for sample in sorted(p.name for p in (serial / "samples").iterdir()):
        a = (serial / "samples" / sample / "result.json").read_bytes()
        b = (parallel / "samples" / sample / "result.json").read_bytes()
        assert a == b


def test_env_var_caps_workers(monkeypatch):
    monkeypatch.setenv("SEMCONMF_THREADS", "2")
    assert _worker_count(8) == 2
    monkeypatch.setenv("SEMCONMF_THREADS", "not-a-number")
    assert _worker_count(8) == 8
    monkeypatch.delenv("SEMCONMF_THREADS")
    assert _worker_count(3) == 3


def _craft_results(tmp_path, pred_soft, gt, label="dog"):
    """Hand-build a data dir plus matching results dir around given masks."""
    data = tmp_path / "data"
    data.mkdir()
    h, w = gt.shape
    tensorio.write_tensor(data / "img.scnm", np.abs(np.random.default_rng(0).normal(size=(h * w, 4))))
    tensorio.write_tensor(data / "aud.scnm", np.abs(np.random.default_rng(1).normal(size=(3, 4))))
    tensorio.write_tensor(data / "gt.scnm", gt.astype(np.float32))
    bank = {"labels": ["dog", "cat"], "image_anchors": [[1, 0, 0, 0], [0, 1, 0, 0]],
            "audio_anchors": [[1, 0, 0, 0], [0, 1, 0, 0]]}
    (data / "bank.json").write_text(json.dumps(bank))
    manifest = {
        "samples": [{
            "sample_id": "s1", "anchor_bank_path": "bank.json",
            "spatial_dims": [h, w],
            "image_features_path": "img.scnm", "audio_features_path": "aud.scnm",
            "ground_truth_mask_path": "gt.scnm", "gt_class_label": "dog",
        }]
    }
    (data / "manifest.json").write_text(json.dumps(manifest))

    run = tmp_path / "run"
    sample_dir = run / "samples" / "s1"
    sample_dir.mkdir(parents=True)
    tensorio.write_tensor(sample_dir / "activation_mask_f0.scnm", pred_soft)
    tensorio.write_tensor(sample_dir / "segmenter_mask_f0.scnm", pred_soft)
    (sample_dir / "result.json").write_text(json.dumps({
        "sample_id": "s1", "spatial_dims": [h, w], "anchor_labels": ["dog", "cat"],
        "frames": [{"frame_index": 0, "k_star": 0, "label": label, "label_score": 1.0,
                    "files": {"activation_mask": "activation_mask_f0.scnm",
                              "segmenter_mask": "segmenter_mask_f0.scnm"}}],
    }))
    (run / "results.json").write_text(json.dumps({
        "config": {}, "samples": [{"sample_id": "s1", "status": "ok", "dir": "samples/s1"}],
    }))
    return data / "manifest.json", run


def test_eval_perfect_predictions(tmp_path):
    gt = np.zeros((4, 4), dtype=np.float32)
    gt[1:3, 1:3] = 1.0
    pred = np.where(gt > 0, 0.9, 0.1).astype(np.float32)
    manifest, run = _craft_results(tmp_path, pred, gt)
    assert _run(["eval", "--results", run, "--manifest", manifest]) == 0
    report = json.loads((run / "eval_report.json").read_text())
    for kind in ("activation", "segmenter"):
        for metric in ("mask_iou", "mean_iou", "f_score", "m_ap", "class_mean_iou"):
            assert report["metrics"][kind][metric]["mean"] == 1.0


def test_eval_half_overlap_is_exactly_half(tmp_path):
    gt = np.zeros((2, 2), dtype=np.float32)
    gt[0, :] = 1.0  # two positive pixels
    pred = np.array([[0.9, 0.1], [0.1, 0.1]], dtype=np.float32)  # covers one of them
    manifest, run = _craft_results(tmp_path, pred, gt)
    assert _run(["eval", "--results", run, "--manifest", manifest]) == 0
    report = json.loads((run / "eval_report.json").read_text())
    assert report["metrics"]["activation"]["mask_iou"]["mean"] == 0.5


def test_eval_multi_seed_reports_std(dataset, tmp_path):
    multi = tmp_path / "multi"
    for seed in (0, 1, 2):
        assert _run(["decompose", "--manifest", dataset, "--out", multi / f"seed{seed}",
                     "--iters", "120", "--beta-temp", "0", "--seed", seed]) == 0
    assert _run(["eval", "--results", multi, "--manifest", dataset]) == 0
    report = json.loads((multi / "eval_report.json").read_text())
    assert report["runs"] == 3
    cell = report["metrics"]["activation"]["mask_iou"]
    assert len(cell["runs"]) == 3
    assert "std" in cell
    csv_text = (multi / "eval_report.csv").read_text()
    assert "std" in csv_text.splitlines()[0]


def test_eval_excludes_samples_without_ground_truth(dataset, tmp_path, capsys):
    out = tmp_path / "run"
    assert _run(["decompose", "--manifest", dataset, "--out", out,
                 "--iters", "40", "--beta-temp", "0"]) == 0
    # manifest variant with one ground truth removed
    doc = json.loads(dataset.read_text())
    doc["samples"][0].pop("ground_truth_mask_path")
    alt = dataset.parent / "manifest_nogt.json"
    alt.write_text(json.dumps(doc))
    assert _run(["eval", "--results", out, "--manifest", alt]) == 0
    report = json.loads((out / "eval_report.json").read_text())
    assert report["samples_scored"] == 3
    assert "no ground truth" in capsys.readouterr().err


def test_inspect_outputs(dataset, tmp_path):
    out = tmp_path / "run"
    assert _run(["decompose", "--manifest", dataset, "--out", out,
                 "--iters", "40", "--beta-temp", "0", "--K", "3"]) == 0
    assert _run(["inspect", "--results", out, "--sample", "planted000"]) == 0
    inspect_dir = out / "samples" / "planted000" / "inspect"
    assert (inspect_dir / "descriptors_f0.csv").exists()
    assert (inspect_dir / "factor0_f0.png").exists()
    assert (inspect_dir / "factor2_f0.png").exists()
    header = (inspect_dir / "descriptors_f0.csv").read_text().splitlines()[0]
    assert "image_cos_dog" in header and "is_sounding" in header


def test_inspect_missing_sample(dataset, tmp_path, capsys):
    out = tmp_path / "run"
    assert _run(["decompose", "--manifest", dataset, "--out", out,
                 "--iters", "40", "--beta-temp", "0"]) == 0
    assert _run(["inspect", "--results", out, "--sample", "nope"]) == 1
    assert "not found" in capsys.readouterr().err


def test_inspect_partial_result(dataset, tmp_path, capsys):
    import shutil

    out = tmp_path / "run"
    assert _run(["decompose", "--manifest", dataset, "--out", out,
                 "--iters", "40", "--beta-temp", "0"]) == 0
    shutil.rmtree(out / "samples" / "planted000" / "state_f0")
    assert _run(["inspect", "--results", out, "--sample", "planted000"]) == 1
    assert "partial" in capsys.readouterr().err


def test_eval_missing_results_dir(tmp_path, dataset):
    assert _run(["eval", "--results", tmp_path / "void", "--manifest", dataset]) == 1


def test_sequence_manifest_runs(tmp_path):
    manifest = write_planted_dataset(tmp_path / "seq", 1, seed=7, frames_per_sample=3)
    out = tmp_path / "run"
    assert _run(["decompose", "--manifest", manifest, "--out", out,
                 "--iters", "60"]) == 0
    result = json.loads((out / "samples" / "planted000" / "result.json").read_text())
    assert len(result["frames"]) == 3
    assert (out / "samples" / "planted000" / "activation_mask_f2.png").exists()
