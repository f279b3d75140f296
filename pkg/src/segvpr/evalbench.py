"""Recall@K evaluation, ground truth, synthetic datasets, and baselines.

The synthetic generator plants a controlled overlap between each query and
exactly one reference while the rest of the query is filled with strong
distractor features reused from a different reference. The overlapping
part is split across many small segments and the distractor part across a
few large context segments, so segment-level ranking is dominated by the
planted matches while a whole-image descriptor is dominated by the
distractor mass.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregate import l2_normalize
from .retrieval import FlatIndex, ImageRanking, rank, rank_weighted, search
from .tensor_io import (
    DatasetManifest,
    ManifestEntry,
    SegmentMaskSet,
    read_tensor,
    write_manifest,
    write_masks,
    write_tensor,
)

GT_MODES = ("metric_radius", "frame_radius", "pairs")


@dataclass
class GroundTruth:
    """Correct reference image ids per query id."""

    positives: dict[str, set[str]]

    def validate(self, manifest: DatasetManifest) -> None:
        ref_ids = {e.image_id for e in manifest.reference_entries}
        query_ids = {e.image_id for e in manifest.query_entries}
        for qid, refs in self.positives.items():
            if qid not in query_ids:
                raise ValueError(f"ground truth query {qid!r} not in manifest")
            missing = refs - ref_ids
            if missing:
                raise ValueError(f"ground truth for {qid!r} references {missing}")


@dataclass
class RecallReport:
    recalls: dict[int, float]
    per_query_hits: dict[str, dict[int, bool]]
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "recalls": {str(k): v for k, v in sorted(self.recalls.items())},
            "per_query_hits": {
                q: {str(k): bool(v) for k, v in sorted(hits.items())}
                for q, hits in sorted(self.per_query_hits.items())
            },
            "config": self.config,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        lines = ["k,recall"]
        for k in sorted(self.recalls):
            lines.append(f"{k},{self.recalls[k]:.6f}")
        return "\n".join(lines) + "\n"


def recall_at_k(
    rankings: dict[str, ImageRanking],
    gt: GroundTruth,
    ks: list[int],
    config: dict | None = None,
) -> RecallReport:
    """Fraction of queries whose top-K contains at least one correct image."""
    per_query: dict[str, dict[int, bool]] = {}
    for qid, ranking in rankings.items():
        if qid not in gt.positives:
            raise ValueError(f"query {qid!r} missing from ground truth")
        positives = gt.positives[qid]
        per_query[qid] = {
            k: any(img in positives for img in ranking.top(k)) for k in ks
        }
    n = len(per_query)
    recalls = {
        k: (sum(hits[k] for hits in per_query.values()) / n if n else 0.0)
        for k in ks
    }
    return RecallReport(
        recalls=recalls, per_query_hits=per_query, config=dict(config or {})
    )


def make_gt(
    manifest: DatasetManifest,
    mode: str,
    radius: float | None = None,
    pairs: dict[str, list[str]] | None = None,
) -> GroundTruth:
    """Deterministic ground truth from positions, frame indices, or pairs."""
    if mode == "pairs":
        if pairs is None:
            raise ValueError("pairs mode requires an explicit pair mapping")
        gt = GroundTruth({q: set(refs) for q, refs in pairs.items()})
        gt.validate(manifest)
        return gt
    if radius is None:
        raise ValueError(f"{mode} requires a radius")
    positives: dict[str, set[str]] = {}
    if mode == "metric_radius":
        for q in manifest.query_entries:
            if q.position is None:
                raise ValueError(f"query {q.image_id} lacks a position")
            qx, qy = q.position
            matches = set()
            for r in manifest.reference_entries:
                if r.position is None:
                    raise ValueError(f"reference {r.image_id} lacks a position")
                if math.hypot(qx - r.position[0], qy - r.position[1]) <= radius:
                    matches.add(r.image_id)
            positives[q.image_id] = matches
    elif mode == "frame_radius":
        for q in manifest.query_entries:
            if q.frame_index is None:
                raise ValueError(f"query {q.image_id} lacks a frame_index")
            matches = set()
            for r in manifest.reference_entries:
                if r.frame_index is None:
                    raise ValueError(f"reference {r.image_id} lacks a frame_index")
                if abs(q.frame_index - r.frame_index) <= radius:
                    matches.add(r.image_id)
            positives[q.image_id] = matches
    else:
        raise ValueError(f"unknown gt mode {mode!r}; expected one of {GT_MODES}")
    gt = GroundTruth(positives)
    gt.validate(manifest)
    return gt


@dataclass
class SynthSpec:
    num_refs: int = 64
    num_queries: int = 32
    segments_per_image: int = 10
    overlap_fraction: float = 0.3
    distractor_strength: float = 1.0
    seed: int = 42
    grid_w: int = 16
    grid_h: int = 16
    cell_pixels: int = 8
    feature_dim: int = 64
    noise: float = 0.02
    planted_classes: int = 3
    context_classes: int = 16


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _segment_layout(spec: SynthSpec) -> tuple[np.ndarray, int]:
    """Cell-to-segment map.

    The bottom ``overlap_fraction`` of the grid holds the planted segments,
    split into two stacked bands of column strips so the lower band's
    neighborhoods stay inside the planted region; the rest is two large
    context tiles.
    """
    if not 0.0 < spec.overlap_fraction <= 1.0:
        raise ValueError("overlap_fraction must be in (0, 1]")
    planted_rows = max(1, round(spec.overlap_fraction * spec.grid_h))
    ctx_rows = spec.grid_h - planted_rows
    n_ctx = 2 if ctx_rows > 0 else 0
    n_plant = spec.segments_per_image - n_ctx
    planted_cells = planted_rows * spec.grid_w
    if n_plant < 1 or n_plant > planted_cells:
        raise ValueError(
            f"infeasible spec: {n_plant} planted segments do not fit "
            f"{spec.segments_per_image} segments per image"
        )
    seg_of_cell = np.empty((spec.grid_h, spec.grid_w), dtype=int)
    n_top = n_plant // 2 if (planted_rows >= 2 and n_plant >= 2) else 0
    n_bottom = n_plant - n_top
    rows_top = planted_rows // 2 if n_top else 0
    top_band = np.arange(ctx_rows, ctx_rows + rows_top)
    bottom_band = np.arange(ctx_rows + rows_top, spec.grid_h)
    for j, cols in enumerate(np.array_split(np.arange(spec.grid_w), n_bottom)):
        seg_of_cell[np.ix_(bottom_band, cols)] = j
    for j, cols in enumerate(np.array_split(np.arange(spec.grid_w), max(1, n_top))):
        if n_top:
            seg_of_cell[np.ix_(top_band, cols)] = n_bottom + j
    if n_ctx:
        half = spec.grid_w // 2
        seg_of_cell[:ctx_rows, :half] = n_plant
        seg_of_cell[:ctx_rows, half:] = n_plant + 1
    return seg_of_cell, n_plant


def synth_generate(spec: SynthSpec, out_dir: str | Path) -> tuple[Path, GroundTruth]:
    """Write a planted-overlap dataset: manifest, masks, features, gt.json.

    Every image reuses a handful of per-image planted class prototypes on
    its planted strips and scatters many per-image context classes cell by
    cell over the context tiles. A query copies its target reference's
    planted classes in place, while its context cells blend query-unique
    patterns with the context classes of a different reference (weighted by
    ``distractor_strength``). Segment-level ranking is then dominated by the
    planted strips (few classes, many matching segments), whereas a
    whole-image descriptor is dominated by the distractor context (many
    classes, huge cell mass), which points at the wrong reference. At
    overlap_fraction 1.0 queries copy their reference feature tensor
    verbatim. Deterministic for a fixed seed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    seg_of_cell, n_plant = _segment_layout(spec)
    n_seg = int(seg_of_cell.max()) + 1
    has_ctx = n_seg > n_plant

    def proto() -> np.ndarray:
        return _unit(rng.standard_normal(spec.feature_dim))

    plant_protos = [
        [proto() for _ in range(spec.planted_classes)] for _ in range(spec.num_refs)
    ]
    ctx_protos = [
        [proto() for _ in range(spec.context_classes)] for _ in range(spec.num_refs)
    ]
    junk_protos = [
        [proto() for _ in range(spec.context_classes)]
        for _ in range(spec.num_queries)
    ]

    # references keep each context tile on its own class subset while
    # queries scatter every context class uniformly: image-level class
    # mass matches (fooling whole-image descriptors) but no query
    # SuperSegment concentrates on any reference SuperSegment's classes
    per_tile = max(1, spec.context_classes // 2)

    def render(planted: list[np.ndarray], ctx_cell_proto, grouped: bool) -> np.ndarray:
        feats = np.empty((spec.grid_h, spec.grid_w, spec.feature_dim), np.float64)
        for y in range(spec.grid_h):
            for x in range(spec.grid_w):
                seg = seg_of_cell[y, x]
                if seg < n_plant:
                    base = planted[seg % len(planted)]
                else:
                    if grouped:
                        tile = seg - n_plant
                        k = tile * per_tile + int(rng.integers(per_tile))
                        k = min(k, spec.context_classes - 1)
                    else:
                        k = int(rng.integers(spec.context_classes))
                    base = ctx_cell_proto(k)
                noisy = base + spec.noise * rng.standard_normal(spec.feature_dim)
                feats[y, x] = _unit(noisy)
        return feats.astype(np.float32)

    def masks_for_layout() -> SegmentMaskSet:
        h = spec.grid_h * spec.cell_pixels
        w = spec.grid_w * spec.cell_pixels
        dense = np.zeros((n_seg, h, w), dtype=bool)
        up = np.kron(seg_of_cell, np.ones((spec.cell_pixels, spec.cell_pixels), int))
        for s in range(n_seg):
            dense[s] = up == s
        return SegmentMaskSet.encode(dense.reshape(n_seg, -1), h, w)

    mask_set = masks_for_layout()
    ref_entries, query_entries = [], []
    ref_features: list[np.ndarray] = []
    pairs: dict[str, list[str]] = {}

    for r in range(spec.num_refs):
        image_id = f"ref{r:04d}"
        feats = render(plant_protos[r], lambda k, r=r: ctx_protos[r][k], grouped=True)
        ref_features.append(feats)
        write_tensor(out_dir / f"{image_id}.svt", feats)
        write_masks(out_dir / f"{image_id}.svm", mask_set)
        ref_entries.append(
            ManifestEntry(
                image_id=image_id,
                mask_path=f"{image_id}.svm",
                feature_path=f"{image_id}.svt",
                position=(10.0 * r, 0.0),
                frame_index=r,
            )
        )

    for q in range(spec.num_queries):
        t = q % spec.num_refs
        d = (t + max(1, spec.num_refs // 2)) % spec.num_refs
        image_id = f"qry{q:04d}"
        if not has_ctx:
            feats = ref_features[t].copy()
        else:
            s = spec.distractor_strength

            def ctx_blend(k: int, q=q, d=d, s=s) -> np.ndarray:
                return _unit((1.0 - s) * junk_protos[q][k] + s * ctx_protos[d][k])

            feats = render(plant_protos[t], ctx_blend, grouped=False)
        write_tensor(out_dir / f"{image_id}.svt", feats)
        write_masks(out_dir / f"{image_id}.svm", mask_set)
        query_entries.append(
            ManifestEntry(
                image_id=image_id,
                mask_path=f"{image_id}.svm",
                feature_path=f"{image_id}.svt",
                position=(10.0 * t, 1.0),
                frame_index=t,
            )
        )
        pairs[image_id] = [f"ref{t:04d}"]

    manifest = DatasetManifest(
        name=f"synth-seed{spec.seed}",
        reference_entries=ref_entries,
        query_entries=query_entries,
        root=out_dir,
    )
    write_manifest(out_dir / "manifest.json", manifest)
    (out_dir / "gt.json").write_text(
        json.dumps(pairs, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return out_dir / "manifest.json", GroundTruth({q: set(v) for q, v in pairs.items()})


def local_feature_baseline(
    manifest: DatasetManifest,
    gt: GroundTruth,
    per_image_samples: int,
    seed: int,
    k_prime: int,
    ks: list[int] | None = None,
) -> RecallReport:
    """Random raw feature cells as drop-in segment descriptors.

    Cells are L2-normalized and pushed through the identical index, search,
    and weighted ranking path as real segment descriptors.
    """
    ks = ks or [1, 5]
    rng = np.random.default_rng(seed)

    def sample_cells(entry: ManifestEntry) -> np.ndarray:
        feats = read_tensor(manifest.resolve(entry.feature_path))
        flat = np.asarray(feats, dtype=np.float64).reshape(-1, feats.shape[-1])
        take = min(per_image_samples, len(flat))
        idx = np.sort(rng.choice(len(flat), size=take, replace=False))
        return l2_normalize(flat[idx])

    from .aggregate import DescriptorSet
    from .retrieval import build_index

    db_sets = []
    for entry in manifest.reference_entries:
        cells = sample_cells(entry).astype(np.float32)
        db_sets.append(
            DescriptorSet(
                vectors=cells,
                image_id=entry.image_id,
                segment_ids=list(range(len(cells))),
                order=0,
                method="local",
            )
        )
    index = build_index(db_sets)

    rankings = {}
    for entry in manifest.query_entries:
        cells = sample_cells(entry)
        hits = search(index, cells, k_prime)
        rankings[entry.image_id] = rank_weighted(hits)
    return recall_at_k(
        rankings,
        gt,
        ks,
        config={
            "method": "local_baseline",
            "per_image_samples": per_image_samples,
            "seed": seed,
            "k_prime": k_prime,
        },
    )


def account_storage_time(
    index: FlatIndex,
    query_descriptors: list[np.ndarray],
    k_prime: int = 50,
    ranking: str = "weighted",
    repetitions: int = 32,
) -> dict:
    """Index size and retrieval-time accounting (extraction time excluded).

    Payload bytes are R*d*4 for float32 rows plus the serialized
    provenance; per-query time is the median over the repetitions.
    """
    provenance_bytes = len(
        json.dumps(
            [{"image_id": i, "segment_id": s} for i, s in index.provenance],
            sort_keys=True,
        ).encode()
    )
    payload = index.size * index.dim * 4
    if not query_descriptors or index.size == 0:
        return {
            "descriptor_count": index.size,
            "bytes": payload + provenance_bytes,
            "payload_bytes": payload,
            "mean_query_ms": 0.0,
        }
    per_rep_ms = []
    for _ in range(max(1, repetitions)):
        start = time.perf_counter()
        for q in query_descriptors:
            hits = search(index, q, k_prime)
            rank(hits, ranking)
        elapsed = time.perf_counter() - start
        per_rep_ms.append(1000.0 * elapsed / len(query_descriptors))
    return {
        "descriptor_count": index.size,
        "bytes": payload + provenance_bytes,
        "payload_bytes": payload,
        "mean_query_ms": float(np.median(per_rep_ms)),
    }
