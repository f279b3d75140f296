import numpy as np
import pytest

from segvpr.filtering import cull_by_iou
from segvpr.seggraph import mask_iou


def greedy_oracle(masks, threshold):
    """Independent re-run: drop anything overlapping a larger segment."""
    areas = masks.sum(axis=1)
    order = sorted(range(len(masks)), key=lambda i: (-areas[i], i))
    kept = []
    for pos, i in enumerate(order):
        if all(mask_iou(masks[i], masks[e]) <= threshold for e in order[:pos]):
            kept.append(i)
    return sorted(kept)


def random_masks(rng, count=10, cells=60):
    """Random intervals: guaranteed variety of overlaps."""
    masks = np.zeros((count, cells), dtype=bool)
    for i in range(count):
        a = int(rng.integers(0, cells - 1))
        b = int(rng.integers(a + 1, cells + 1))
        masks[i, a:b] = True
    return masks


class TestCulling:
    def test_threshold_one_keeps_all(self):
        rng = np.random.default_rng(1)
        masks = random_masks(rng)
        report = cull_by_iou(masks, 1.0)
        assert report.kept_ids == list(range(10))
        assert report.removed_ids == []
        assert report.retention_ratio == 1.0

    def test_identical_pair_keeps_one(self):
        m = np.zeros((2, 10), bool)
        m[:, 2:7] = True
        report = cull_by_iou(m, 0.5)
        assert report.kept_ids == [0]  # area tie broken by ascending id
        assert report.removed_ids == [1]

    def test_random_matches_independent_greedy(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            masks = random_masks(rng)
            psi = float(rng.uniform(0.1, 0.9))
            report = cull_by_iou(masks, psi)
            assert report.kept_ids == greedy_oracle(masks, psi)
            # retained pairwise IOUs at or below threshold
            for a in report.kept_ids:
                for b in report.kept_ids:
                    if a < b:
                        assert mask_iou(masks[a], masks[b]) <= psi

    def test_partition(self):
        rng = np.random.default_rng(3)
        masks = random_masks(rng)
        report = cull_by_iou(masks, 0.4)
        assert sorted(report.kept_ids + report.removed_ids) == list(range(10))

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        masks = random_masks(rng)
        a = cull_by_iou(masks, 0.3)
        b = cull_by_iou(masks, 0.3)
        assert a.kept_ids == b.kept_ids

    def test_empty_set(self):
        report = cull_by_iou(np.zeros((0, 10), bool), 0.5)
        assert report.kept_ids == [] and report.retention_ratio == 1.0

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            cull_by_iou(np.zeros((1, 4), bool), 1.5)

    def test_threshold_monotone_nesting(self):
        rng = np.random.default_rng(2024)
        psis = [0.2, 0.4, 0.6, 0.8, 1.0]
        for _ in range(40):
            masks = random_masks(rng)
            kept = [set(cull_by_iou(masks, p).kept_ids) for p in psis]
            for lo, hi in zip(kept, kept[1:]):
                assert lo <= hi

    def test_json_report(self):
        m = np.zeros((2, 10), bool)
        m[:, 2:7] = True
        doc = cull_by_iou(m, 0.5).to_json()
        assert '"kept_ids": [0]' in doc
