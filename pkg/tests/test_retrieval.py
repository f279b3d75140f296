import numpy as np
import pytest

from segvpr.aggregate import DescriptorSet, l2_normalize, vlad_descriptors
from segvpr.retrieval import (
    FlatIndex,
    SegmentHitList,
    build_index,
    load_index,
    query_object_instance,
    rank_maxseg,
    rank_maxsim,
    rank_weighted,
    save_index,
    search,
)
from segvpr.seggraph import downsample_masks
from segvpr.tensor_io import SegmentMaskSet
from segvpr.vocab import Vocabulary


def dset(image_id, vectors, segment_ids=None):
    vectors = np.asarray(vectors, dtype=np.float32)
    return DescriptorSet(
        vectors=vectors,
        image_id=image_id,
        segment_ids=segment_ids or list(range(len(vectors))),
        order=0,
        method="segvlad",
    )


def unit_rows(rng, r, d):
    return l2_normalize(rng.standard_normal((r, d))).astype(np.float32)


class TestBuildIndex:
    def test_lexicographic_provenance(self):
        rng = np.random.default_rng(1)
        sets = [dset(i, unit_rows(rng, 2, 4)) for i in ("b", "a", "c")]
        index = build_index(sets)
        assert index.size == 6
        assert index.provenance == [
            ("a", 0), ("a", 1), ("b", 0), ("b", 1), ("c", 0), ("c", 1)
        ]

    def test_zero_descriptor_excluded(self, caplog):
        rng = np.random.default_rng(2)
        vectors = unit_rows(rng, 3, 4)
        vectors[1] = 0
        import logging

        with caplog.at_level(logging.WARNING, logger="segvpr.retrieval"):
            index = build_index([dset("a", vectors), dset("b", unit_rows(rng, 3, 4))])
        assert index.size == 5
        assert ("a", 1) not in index.provenance
        assert "zero" in caplog.text

    def test_rebuild_byte_identical(self, tmp_path):
        rng = np.random.default_rng(3)
        sets = [dset("x", unit_rows(rng, 4, 8)), dset("y", unit_rows(rng, 2, 8))]
        save_index(build_index(sets), tmp_path / "i1")
        save_index(build_index(sets), tmp_path / "i2")
        assert (tmp_path / "i1.svt").read_bytes() == (tmp_path / "i2.svt").read_bytes()
        assert (tmp_path / "i1.json").read_bytes() == (tmp_path / "i2.json").read_bytes()
        back = load_index(tmp_path / "i1")
        assert back.provenance == build_index(sets).provenance

    def test_dim_mismatch(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError, match="dim"):
            build_index([dset("a", unit_rows(rng, 2, 4)), dset("b", unit_rows(rng, 2, 5))])


class TestSearch:
    def test_query_equal_to_row(self):
        rng = np.random.default_rng(5)
        index = build_index([dset("a", unit_rows(rng, 10, 6))])
        q = index.matrix[[4]]
        hits = search(index, q, 3)
        assert hits.row_ids[0][0] == 4
        assert hits.similarities[0][0] == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_ties_break_by_row_id(self):
        rows = np.eye(4, dtype=np.float32)[:3]
        index = build_index([dset("a", rows)])
        q = np.array([[0.0, 0.0, 0.0, 1.0]])
        hits = search(index, q, 3)
        assert list(hits.row_ids[0]) == [0, 1, 2]
        assert np.all(hits.similarities[0] == 0)

    def test_matches_exhaustive_scan_oracle(self):
        rng = np.random.default_rng(6)
        index = build_index([dset("db", unit_rows(rng, 500, 32))])
        queries = unit_rows(rng, 7, 32).astype(np.float64)
        hits = search(index, queries, 10)
        db = index.matrix.astype(np.float64)
        for s in range(7):
            sims = db @ queries[s]
            order = np.lexsort((np.arange(len(sims)), -sims))[:10]
            assert list(hits.row_ids[s]) == list(order)
            assert np.allclose(hits.similarities[s], sims[order])

    def test_duplicate_rows_tie_case(self):
        rng = np.random.default_rng(7)
        base = unit_rows(rng, 1, 8)
        rows = np.tile(base, (5, 1))
        index = build_index([dset("a", rows)])
        hits = search(index, base, 5)
        assert list(hits.row_ids[0]) == [0, 1, 2, 3, 4]

    def test_k_prime_larger_than_index(self):
        rng = np.random.default_rng(8)
        index = build_index([dset("a", unit_rows(rng, 3, 4))])
        hits = search(index, unit_rows(rng, 1, 4), 50)
        assert len(hits.row_ids[0]) == 3

    def test_dim_mismatch(self):
        rng = np.random.default_rng(9)
        index = build_index([dset("a", unit_rows(rng, 3, 4))])
        with pytest.raises(ValueError, match="dim"):
            search(index, np.zeros((1, 5)), 2)


def hits_from(segments):
    """Build a SegmentHitList from [(image_id, sim), ...] per query segment."""
    row_ids, image_ids, sims = [], [], []
    row = 0
    for seg in segments:
        ids = [i for i, _ in seg]
        ss = np.array([s for _, s in seg], dtype=float)
        order = np.argsort(-ss, kind="stable")
        row_ids.append(np.arange(row, row + len(seg))[order])
        image_ids.append([ids[i] for i in order])
        sims.append(ss[order])
        row += len(seg)
    return SegmentHitList(row_ids=row_ids, image_ids=image_ids, similarities=sims)


class TestRankWeighted:
    def test_single_segment_single_image(self):
        hits = hits_from([[("imgA", 0.9), ("imgA", 0.8), ("imgA", 0.7)]])
        ranking = rank_weighted(hits)
        assert ranking.image_ids == ["imgA"]
        assert ranking.scores[0] == pytest.approx(2.4)

    def test_hand_accumulation_example(self):
        hits = hits_from(
            [[("imgA", 0.9), ("imgB", 0.8)], [("imgB", 0.7), ("imgA", 0.1)]]
        )
        ranking = rank_weighted(hits)
        assert ranking.image_ids == ["imgB", "imgA"]
        assert ranking.scores == [pytest.approx(1.5), pytest.approx(1.0)]

    def test_duplicates_count_every_occurrence(self):
        hits = hits_from(
            [[("imgA", 0.5), ("imgA", 0.5)], [("imgA", 0.5), ("imgB", 0.9)]]
        )
        ranking = rank_weighted(hits)
        assert ranking.scores[ranking.image_ids.index("imgA")] == pytest.approx(1.5)

    def test_matches_accumulation_oracle_random(self):
        rng = np.random.default_rng(10)
        for _ in range(30):
            segs = []
            for _s in range(int(rng.integers(1, 5))):
                segs.append(
                    [
                        (f"img{int(rng.integers(6))}", float(rng.random()))
                        for _ in range(int(rng.integers(1, 8)))
                    ]
                )
            hits = hits_from(segs)
            ranking = rank_weighted(hits)
            oracle = {}
            for seg in segs:
                for img, s in seg:
                    oracle[img] = oracle.get(img, 0.0) + s
            want = sorted(oracle.items(), key=lambda kv: (-kv[1], kv[0]))
            assert ranking.image_ids == [k for k, _ in want]
            assert np.allclose(ranking.scores, [v for _, v in want])

    def test_arrival_order_invariance(self):
        segs = [[("a", 0.3), ("b", 0.7)], [("c", 0.9), ("a", 0.2)]]
        r1 = rank_weighted(hits_from(segs))
        r2 = rank_weighted(hits_from(segs[::-1]))
        assert r1.image_ids == r2.image_ids
        assert r1.scores == r2.scores

    def test_positive_scaling_preserves_order(self):
        rng = np.random.default_rng(11)
        segs = [
            [(f"img{int(rng.integers(5))}", float(rng.random())) for _ in range(6)]
            for _ in range(3)
        ]
        base = rank_weighted(hits_from(segs))
        scaled = rank_weighted(
            hits_from([[(i, 3.7 * s) for i, s in seg] for seg in segs])
        )
        assert base.image_ids == scaled.image_ids

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            rank_weighted(SegmentHitList(row_ids=[], image_ids=[], similarities=[]))


class TestRankMaxSeg:
    def test_all_top1_same_image(self):
        hits = hits_from(
            [[("imgC", 0.9), ("x", 0.1)], [("imgC", 0.8)], [("imgC", 0.7)]]
        )
        ranking = rank_maxseg(hits)
        assert ranking.image_ids[0] == "imgC"
        assert ranking.scores[0] == 3

    def test_counts_order(self):
        hits = hits_from([[("A", 0.9)], [("A", 0.8)], [("B", 0.95)]])
        ranking = rank_maxseg(hits)
        assert ranking.image_ids == ["A", "B"]
        assert ranking.scores == [2, 1]

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            segs = [
                [(f"img{int(rng.integers(5))}", float(rng.random())) for _ in range(5)]
                for _ in range(int(rng.integers(1, 6)))
            ]
            hits = hits_from(segs)
            ranking = rank_maxseg(hits)
            counts, sums = {}, {}
            for ids, sims in zip(hits.image_ids, hits.similarities):
                counts[ids[0]] = counts.get(ids[0], 0) + 1
                sums[ids[0]] = sums.get(ids[0], 0.0) + float(sims[0])
            want = sorted(counts, key=lambda i: (-counts[i], -sums[i], i))
            assert ranking.image_ids == want


class TestRankMaxSim:
    def test_single_strong_hit_dominates(self):
        hits = hits_from(
            [[("imgD", 0.99)], [("imgE", 0.5), ("imgE", 0.5)], [("imgE", 0.5)]]
        )
        assert rank_maxsim(hits).image_ids[0] == "imgD"

    def test_all_equal_breaks_by_id(self):
        hits = hits_from([[("b", 0.5), ("a", 0.5), ("c", 0.5)]])
        assert rank_maxsim(hits).image_ids == ["a", "b", "c"]

    def test_matches_max_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            segs = [
                [(f"img{int(rng.integers(5))}", float(rng.random())) for _ in range(6)]
                for _ in range(int(rng.integers(1, 5)))
            ]
            ranking = rank_maxsim(hits_from(segs))
            best = {}
            for seg in segs:
                for img, s in seg:
                    best[img] = max(best.get(img, -1), s)
            want = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
            assert ranking.image_ids == [k for k, _ in want]


class TestAllMethodsAgreeOnSingleImage:
    def test_single_image_hits(self):
        hits = hits_from(
            [[("only", 0.9), ("only", 0.1)], [("only", 0.5), ("only", 0.2)]]
        )
        for fn in (rank_weighted, rank_maxseg, rank_maxsim):
            assert fn(hits).image_ids[0] == "only"


def tiny_scene(rng, n_seg=4, grid=6, dim=5, cell_pixels=4):
    """Square segments on a grid with distinct feature patterns."""
    h = w = grid * cell_pixels
    half = grid // 2
    dense = np.zeros((n_seg, h, w), bool)
    quadrants = [(0, 0), (0, half), (half, 0), (half, half)]
    feats = np.zeros((grid, grid, dim), np.float32)
    protos = l2_normalize(rng.standard_normal((n_seg, dim)))
    for s, (gy, gx) in enumerate(quadrants[:n_seg]):
        dense[
            s,
            gy * cell_pixels : (gy + half) * cell_pixels,
            gx * cell_pixels : (gx + half) * cell_pixels,
        ] = True
        feats[gy : gy + half, gx : gx + half] = protos[s]
    masks = SegmentMaskSet.encode(dense.reshape(n_seg, -1), h, w)
    return masks, feats


class TestObjectInstanceQuery:
    def _setup(self, seed=14):
        rng = np.random.default_rng(seed)
        vocab = Vocabulary(centers=rng.standard_normal((3, 5)))
        masks, feats = tiny_scene(rng)
        return rng, vocab, masks, feats

    def test_duplicate_mask_gives_identical_descriptor(self):
        rng, vocab, masks, feats = self._setup()
        grid = (feats.shape[1], feats.shape[0])
        from segvpr.pipeline import supersegment_masks

        expanded = supersegment_masks(masks, grid, 2)
        flat = feats.reshape(-1, feats.shape[-1]).astype(np.float64)
        reference = vlad_descriptors(expanded.masks, flat, vocab)
        index = build_index([dset("scene", reference)])

        ooi = masks.decode()[2].reshape(masks.height, masks.width)
        ranking = query_object_instance(
            feats, masks, ooi, vocab, order=2, index=index, k_prime=4
        )
        assert ranking.image_ids[0] == "scene"
        # the appended duplicate node reproduces segment 2's descriptor
        hits = search(index, vlad_descriptors(expanded.masks[[2]], flat, vocab), 1)
        assert hits.similarities[0][0] == pytest.approx(1.0, abs=1e-6)

    def test_order_changes_descriptor(self):
        rng, vocab, masks, feats = self._setup()
        index = build_index([dset("scene", np.eye(15, dtype=np.float32)[:3])])
        ooi = masks.decode()[0].reshape(masks.height, masks.width)
        from segvpr.pipeline import supersegment_masks
        from segvpr.seggraph import build_graph

        flat = feats.reshape(-1, feats.shape[-1]).astype(np.float64)

        def descriptor(order):
            aug = SegmentMaskSet(
                height=masks.height,
                width=masks.width,
                runs=list(masks.runs) + [masks.runs[0]],
            )
            exp = supersegment_masks(aug, (feats.shape[1], feats.shape[0]), order)
            return vlad_descriptors(exp.masks[[-1]], flat, vocab)

        d0, d3 = descriptor(0), descriptor(3)
        assert float(l2_normalize(d0[0]) @ l2_normalize(d3[0])) < 1 - 1e-6

    def test_planted_object_found(self):
        rng = np.random.default_rng(15)
        vocab = Vocabulary(centers=rng.standard_normal((3, 5)))
        scenes = {}
        for name in ("one", "two", "three"):
            masks, feats = tiny_scene(rng)
            scenes[name] = (masks, feats)
        db_sets = []
        from segvpr.pipeline import supersegment_masks

        for name, (masks, feats) in scenes.items():
            exp = supersegment_masks(masks, (feats.shape[1], feats.shape[0]), 1)
            flat = feats.reshape(-1, feats.shape[-1]).astype(np.float64)
            db_sets.append(dset(name, vlad_descriptors(exp.masks, flat, vocab)))
        index = build_index(db_sets)
        target_masks, target_feats = scenes["two"]
        ooi = target_masks.decode()[1].reshape(target_masks.height, target_masks.width)
        ranking = query_object_instance(
            target_feats, target_masks, ooi, vocab, order=1, index=index, k_prime=5
        )
        assert ranking.image_ids[0] == "two"

    def test_empty_ooi_rejected(self):
        rng, vocab, masks, feats = self._setup()
        index = build_index([dset("a", np.eye(3, dtype=np.float32))])
        with pytest.raises(ValueError, match="empty"):
            query_object_instance(
                feats,
                masks,
                np.zeros((masks.height, masks.width), bool),
                vocab,
                order=1,
                index=index,
                k_prime=3,
            )
