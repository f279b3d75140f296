import json
from pathlib import Path

import numpy as np
import pytest

from segvpr.cli import main
from segvpr.tensor_io import read_manifest, read_masks, read_tensor


def run_pipeline(root: Path, seed=21, order=1, extra_describe=()):
    """vocab -> describe -> index -> query -> eval in one directory."""
    data = root / "data"
    main(
        [
            "synth", "--out-dir", str(data),
            "--num-refs", "10", "--num-queries", "5", "--seed", str(seed),
        ]
    )
    main(
        [
            "build-vocab", "--manifest", str(data / "manifest.json"),
            "--clusters", "16", "--per-image", "64", "--seed", "7",
            "--out", str(root / "vocab.svt"),
        ]
    )
    for split, out in (("reference", "db"), ("query", "qd")):
        main(
            [
                "describe", "--manifest", str(data / "manifest.json"),
                "--split", split, "--vocab", str(root / "vocab.svt"),
                "--order", str(order), "--method", "segvlad",
                "--out-dir", str(root / out),
                *extra_describe,
            ]
        )
    main(["index", "--desc-dir", str(root / "db"), "--out", str(root / "index")])
    main(
        [
            "query", "--index", str(root / "index"), "--desc-dir", str(root / "qd"),
            "--k-prime", "50", "--top-k", "5", "--ranking", "weighted",
            "--out", str(root / "results.json"),
        ]
    )
    main(
        [
            "eval", "--results", str(root / "results.json"),
            "--manifest", str(data / "manifest.json"),
            "--gt-mode", "pairs", "--gt-pairs", str(data / "gt.json"),
            "--ks", "1,5", "--out", str(root / "report.json"),
            "--csv", str(root / "report.csv"),
        ]
    )
    return root / "report.json"


class TestEndToEnd:
    def test_full_pipeline_recall(self, tmp_path):
        report_path = run_pipeline(tmp_path)
        report = json.loads(report_path.read_text())
        assert report["recalls"]["1"] == 1.0

    def test_two_runs_byte_identical(self, tmp_path):
        a = run_pipeline(tmp_path / "a")
        b = run_pipeline(tmp_path / "b")
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a/results.json").read_bytes() == (
            tmp_path / "b/results.json"
        ).read_bytes()
        assert (tmp_path / "a/report.csv").read_bytes() == (
            tmp_path / "b/report.csv"
        ).read_bytes()

    def test_filter_then_index(self, tmp_path):
        run_pipeline(tmp_path)
        main(
            [
                "filter", "--desc-dir", str(tmp_path / "db"),
                "--iou-threshold", "0.4", "--out-dir", str(tmp_path / "dbf"),
                "--report", str(tmp_path / "cull.json"),
            ]
        )
        cull = json.loads((tmp_path / "cull.json").read_text())
        assert cull["total_after"] < cull["total_before"]
        assert 0 < cull["retention_ratio"] < 1
        main(["index", "--desc-dir", str(tmp_path / "dbf"), "--out", str(tmp_path / "indexf")])
        main(
            [
                "query", "--index", str(tmp_path / "indexf"),
                "--desc-dir", str(tmp_path / "qd"),
                "--out", str(tmp_path / "resultsf.json"),
            ]
        )
        main(
            [
                "eval", "--results", str(tmp_path / "resultsf.json"),
                "--manifest", str(tmp_path / "data/manifest.json"),
                "--gt-mode", "pairs", "--gt-pairs", str(tmp_path / "data/gt.json"),
                "--out", str(tmp_path / "reportf.json"),
            ]
        )
        report = json.loads((tmp_path / "reportf.json").read_text())
        assert report["recalls"]["1"] == 1.0

    def test_filter_threshold_one_keeps_everything(self, tmp_path):
        run_pipeline(tmp_path)
        main(
            [
                "filter", "--desc-dir", str(tmp_path / "db"),
                "--iou-threshold", "1.0", "--out-dir", str(tmp_path / "dbk"),
                "--report", str(tmp_path / "cullk.json"),
            ]
        )
        cull = json.loads((tmp_path / "cullk.json").read_text())
        assert cull["total_after"] == cull["total_before"]
        assert cull["retention_ratio"] == 1.0

    def test_pca_index_path(self, tmp_path):
        run_pipeline(tmp_path)
        main(
            [
                "index", "--desc-dir", str(tmp_path / "db"),
                "--pca-dim", "24", "--out", str(tmp_path / "indexp"),
            ]
        )
        matrix = read_tensor(tmp_path / "indexp.svt")
        assert matrix.shape[1] == 24
        main(
            [
                "query", "--index", str(tmp_path / "indexp"),
                "--desc-dir", str(tmp_path / "qd"),
                "--out", str(tmp_path / "resultsp.json"),
            ]
        )
        main(
            [
                "eval", "--results", str(tmp_path / "resultsp.json"),
                "--manifest", str(tmp_path / "data/manifest.json"),
                "--gt-mode", "pairs", "--gt-pairs", str(tmp_path / "data/gt.json"),
                "--out", str(tmp_path / "reportp.json"),
            ]
        )
        report = json.loads((tmp_path / "reportp.json").read_text())
        assert report["recalls"]["1"] == 1.0


class TestPatchify:
    def test_patch_manifest(self, tmp_path):
        data = tmp_path / "data"
        main(
            [
                "synth", "--out-dir", str(data),
                "--num-refs", "3", "--num-queries", "2", "--seed", "4",
            ]
        )
        main(
            [
                "patchify", "--manifest", str(data / "manifest.json"),
                "--patch", "32", "--out-dir", str(tmp_path / "patched"),
            ]
        )
        patched = read_manifest(tmp_path / "patched" / "manifest.json")
        masks = read_masks(
            patched.resolve(patched.reference_entries[0].mask_path)
        )
        # synthetic images are 128x128 -> 16 patches of 32x32
        assert masks.num_segments == 16


class TestConfigFile:
    def test_config_provides_defaults(self, tmp_path):
        data = tmp_path / "data"
        main(
            [
                "synth", "--out-dir", str(data),
                "--num-refs", "4", "--num-queries", "2", "--seed", "3",
            ]
        )
        config = {"clusters": 8, "per-image": 32, "seed": 5}
        (tmp_path / "config.json").write_text(json.dumps(config))
        main(
            [
                "--config", str(tmp_path / "config.json"),
                "build-vocab", "--manifest", str(data / "manifest.json"),
                "--out", str(tmp_path / "vocab.svt"),
            ]
        )
        meta = json.loads((tmp_path / "vocab.json").read_text())
        assert meta["num_clusters"] == 8
        assert meta["seed"] == 5

    def test_explicit_flag_overrides_config(self, tmp_path):
        data = tmp_path / "data"
        main(
            [
                "synth", "--out-dir", str(data),
                "--num-refs", "4", "--num-queries", "2", "--seed", "3",
            ]
        )
        (tmp_path / "config.json").write_text(json.dumps({"clusters": 8}))
        main(
            [
                "--config", str(tmp_path / "config.json"),
                "build-vocab", "--manifest", str(data / "manifest.json"),
                "--clusters", "4", "--per-image", "32",
                "--out", str(tmp_path / "vocab.svt"),
            ]
        )
        meta = json.loads((tmp_path / "vocab.json").read_text())
        assert meta["num_clusters"] == 4


class TestAblate:
    def test_grid_emitted(self, tmp_path):
        data = tmp_path / "data"
        main(
            [
                "synth", "--out-dir", str(data),
                "--num-refs", "6", "--num-queries", "3", "--seed", "13",
            ]
        )
        main(
            [
                "build-vocab", "--manifest", str(data / "manifest.json"),
                "--clusters", "8", "--per-image", "32", "--seed", "1",
                "--out", str(tmp_path / "vocab.svt"),
            ]
        )
        main(
            [
                "ablate", "--manifest", str(data / "manifest.json"),
                "--vocab", str(tmp_path / "vocab.svt"),
                "--orders", "0,1", "--methods", "segvlad,sap",
                "--gt-mode", "pairs", "--gt-pairs", str(data / "gt.json"),
                "--out", str(tmp_path / "grid.json"),
                "--csv", str(tmp_path / "grid.csv"),
            ]
        )
        grid = json.loads((tmp_path / "grid.json").read_text())["grid"]
        assert len(grid) == 4
        csv = (tmp_path / "grid.csv").read_text().splitlines()
        assert csv[0] == "method,order,r@1,r@5"
        assert len(csv) == 5
