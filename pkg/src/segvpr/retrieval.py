"""Flat exact segment index, kNN search, and segment-to-image ranking.

Similarity is the inner product of L2-normalized descriptors (cosine).
Search is an exact blocked scan; all ties break deterministically by
ascending row id or image id so recall numbers are reproducible.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aggregate import DescriptorSet, vlad_descriptors
from .dimred import PcaModel, pca_transform
from .seggraph import delaunay_adjacency, centroids, downsample_masks, expand_masks
from .tensor_io import SegmentMaskSet, read_tensor, write_tensor
from .vocab import Vocabulary

log = logging.getLogger(__name__)

RANKING_METHODS = ("weighted", "maxseg", "maxsim")


@dataclass
class FlatIndex:
    matrix: np.ndarray  # (R, d) float32, rows L2-normalized
    provenance: list[tuple[str, int]]  # (image_id, segment_id) per row

    @property
    def size(self) -> int:
        return len(self.matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass
class SegmentHitList:
    """Top hits per query segment, sorted by descending similarity."""

    row_ids: list[np.ndarray]  # per query segment, (k,) int
    image_ids: list[list[str]]
    similarities: list[np.ndarray]  # per query segment, (k,) float

    @property
    def num_query_segments(self) -> int:
        return len(self.row_ids)


@dataclass
class ImageRanking:
    image_ids: list[str]
    scores: list[float]
    method: str

    def top(self, k: int) -> list[str]:
        return self.image_ids[:k]


def build_index(descriptor_sets: list[DescriptorSet]) -> FlatIndex:
    """Stack descriptors in deterministic (image_id, segment_id) order.

    Zero descriptors (degenerate aggregates) are excluded with a warning;
    they can never match anything under cosine similarity.
    """
    rows: list[tuple[str, int, np.ndarray]] = []
    dim = None
    for dset in descriptor_sets:
        if dim is None:
            dim = dset.vectors.shape[1]
        elif dset.vectors.shape[1] != dim:
            raise ValueError(
                f"descriptor dim mismatch: {dset.vectors.shape[1]} vs {dim}"
            )
        for seg_id, vec in zip(dset.segment_ids, dset.vectors):
            rows.append((dset.image_id, int(seg_id), vec))
    rows.sort(key=lambda r: (r[0], r[1]))

    kept = []
    provenance = []
    dropped = 0
    for image_id, seg_id, vec in rows:
        if float(np.linalg.norm(vec)) == 0.0:
            dropped += 1
            continue
        kept.append(vec.astype(np.float32))
        provenance.append((image_id, seg_id))
    if dropped:
        log.warning("excluded %d zero descriptors from index", dropped)
    matrix = (
        np.stack(kept) if kept else np.empty((0, dim or 0), dtype=np.float32)
    )
    return FlatIndex(matrix=matrix, provenance=provenance)


def save_index(index: FlatIndex, prefix: str | Path) -> None:
    prefix = Path(prefix)
    write_tensor(prefix.parent / f"{prefix.name}.svt", index.matrix)
    doc = [{"image_id": i, "segment_id": s} for i, s in index.provenance]
    (prefix.parent / f"{prefix.name}.json").write_text(
        json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_index(prefix: str | Path) -> FlatIndex:
    prefix = Path(prefix)
    matrix = read_tensor(prefix.parent / f"{prefix.name}.svt")
    doc = json.loads((prefix.parent / f"{prefix.name}.json").read_text(encoding="utf-8"))
    provenance = [(d["image_id"], int(d["segment_id"])) for d in doc]
    if len(provenance) != len(matrix):
        raise ValueError("provenance length does not match index rows")
    return FlatIndex(matrix=matrix, provenance=provenance)


def search(
    index: FlatIndex, query_descriptors: np.ndarray, k_prime: int
) -> SegmentHitList:
    """Exact top-k_prime rows by inner product per query segment.

    Ties break by ascending row id. Returns fewer hits only when the index
    holds fewer rows than k_prime.
    """
    if k_prime < 1:
        raise ValueError("k_prime must be >= 1")
    queries = np.atleast_2d(np.asarray(query_descriptors, dtype=np.float64))
    if index.size and queries.shape[1] != index.dim:
        raise ValueError(
            f"query dim {queries.shape[1]} does not match index dim {index.dim}"
        )
    k = min(k_prime, index.size)
    sims = np.empty((len(queries), index.size))
    block = max(1, 4_194_304 // max(1, index.dim))
    db = index.matrix.astype(np.float64)
    for lo in range(0, index.size, block):
        hi = min(index.size, lo + block)
        sims[:, lo:hi] = queries @ db[lo:hi].T

    row_ids, image_ids, hit_sims = [], [], []
    all_rows = np.arange(index.size)
    for s in range(len(queries)):
        order = np.lexsort((all_rows, -sims[s]))[:k]
        row_ids.append(order.astype(int))
        image_ids.append([index.provenance[r][0] for r in order])
        hit_sims.append(sims[s, order])
    return SegmentHitList(row_ids=row_ids, image_ids=image_ids, similarities=hit_sims)


def _sorted_ranking(scores: dict[str, float], method: str) -> ImageRanking:
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ImageRanking(
        image_ids=[k for k, _ in ordered],
        scores=[v for _, v in ordered],
        method=method,
    )


def rank_weighted(hits: SegmentHitList) -> ImageRanking:
    """Cumulative similarity per image over every hit (multiplicities count)."""
    if hits.num_query_segments == 0:
        raise ValueError("empty hit list")
    per_image: dict[str, list[float]] = {}
    for ids, sims in zip(hits.image_ids, hits.similarities):
        for image_id, theta in zip(ids, sims):
            per_image.setdefault(image_id, []).append(float(theta))
    return _sorted_ranking(
        {img: math.fsum(vals) for img, vals in per_image.items()}, "weighted"
    )


def rank_maxseg(hits: SegmentHitList) -> ImageRanking:
    """Frequency of per-segment best matches; ties by cumulative similarity."""
    counts: dict[str, int] = {}
    sums: dict[str, list[float]] = {}
    for ids, sims in zip(hits.image_ids, hits.similarities):
        if not ids:
            continue
        best = ids[0]
        counts[best] = counts.get(best, 0) + 1
        sums.setdefault(best, []).append(float(sims[0]))
    ordered = sorted(
        counts.items(), key=lambda kv: (-kv[1], -math.fsum(sums[kv[0]]), kv[0])
    )
    return ImageRanking(
        image_ids=[k for k, _ in ordered],
        scores=[float(v) for _, v in ordered],
        method="maxseg",
    )


def rank_maxsim(hits: SegmentHitList) -> ImageRanking:
    """Best single-segment similarity per image across all query segments."""
    best: dict[str, float] = {}
    for ids, sims in zip(hits.image_ids, hits.similarities):
        for image_id, theta in zip(ids, sims):
            theta = float(theta)
            if theta > best.get(image_id, -np.inf):
                best[image_id] = theta
    return _sorted_ranking(best, "maxsim")


def rank(hits: SegmentHitList, method: str) -> ImageRanking:
    if method == "weighted":
        return rank_weighted(hits)
    if method == "maxseg":
        return rank_maxseg(hits)
    if method == "maxsim":
        return rank_maxsim(hits)
    raise ValueError(f"unknown ranking {method!r}; expected one of {RANKING_METHODS}")


def query_object_instance(
    image_features: np.ndarray,
    image_masks: SegmentMaskSet,
    ooi_mask: np.ndarray,
    vocab: Vocabulary,
    order: int,
    index: FlatIndex,
    k_prime: int,
    pca: PcaModel | None = None,
) -> ImageRanking:
    """Retrieve images for a single object-of-interest mask.

    The OOI mask is appended as a virtual segment, the segment graph is
    rebuilt, and only the OOI node's neighborhood-expanded descriptor is
    searched, ranked by cumulative similarity.
    """
    ooi = np.asarray(ooi_mask, dtype=bool)
    if not ooi.any():
        raise ValueError("empty object-of-interest mask")
    if ooi.shape != (image_masks.height, image_masks.width):
        raise ValueError("OOI mask shape does not match image masks")
    ooi_runs = SegmentMaskSet.encode(
        ooi.reshape(1, -1), image_masks.height, image_masks.width
    ).runs[0]
    augmented = SegmentMaskSet(
        height=image_masks.height,
        width=image_masks.width,
        runs=list(image_masks.runs) + [ooi_runs],
        image_id=image_masks.image_id,
    )
    graph = delaunay_adjacency(centroids(augmented))
    feats = np.asarray(image_features, dtype=np.float64)
    if feats.ndim == 3:
        h_f, w_f, d = feats.shape
        feats = feats.reshape(h_f * w_f, d)
    else:
        raise ValueError("image_features must be (H_f, W_f, D)")
    grid_masks = downsample_masks(augmented, (w_f, h_f))
    expanded = expand_masks(graph, grid_masks, order)
    descriptor = vlad_descriptors(expanded.masks[[-1]], feats, vocab)
    if pca is not None:
        descriptor = pca_transform(pca, descriptor)
    hits = search(index, descriptor, k_prime)
    return rank_weighted(hits)
