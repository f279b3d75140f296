"""End-to-end glue: from mask/feature files to descriptor sets.

Each image is processed independently: masks are downsampled to the
feature grid, the segment graph is built from full-resolution centroids,
masks are neighborhood-expanded, and one descriptor per SuperSegment is
aggregated (or one per image for the whole-image methods).
"""

from __future__ import annotations

import numpy as np

from .aggregate import DescriptorSet, compute_descriptors
from .dimred import PcaModel, pca_transform
from .seggraph import (
    SuperSegmentMaskSet,
    build_graph,
    downsample_masks,
    expand_masks,
    patchify,
)
from .tensor_io import (
    DatasetManifest,
    ManifestEntry,
    SegmentMaskSet,
    read_masks,
    read_tensor,
)
from .vocab import Vocabulary


def load_features(path) -> np.ndarray:
    """Feature tensor as (H_f, W_f, D) float32."""
    feats = read_tensor(path)
    if feats.ndim != 3:
        raise ValueError(f"feature tensor must be (H_f, W_f, D), got {feats.shape}")
    return feats


def supersegment_masks(
    masks: SegmentMaskSet, grid: tuple[int, int], order: int
) -> SuperSegmentMaskSet:
    """Graph from full-res centroids, masks downsampled then expanded."""
    graph = build_graph(masks)
    grid_masks = downsample_masks(masks, grid)
    return expand_masks(graph, grid_masks, order)


def describe_image(
    masks: SegmentMaskSet,
    features: np.ndarray,
    image_id: str,
    order: int = 3,
    method: str = "segvlad",
    vocab: Vocabulary | None = None,
    gem_p: float = 3.0,
    patch: int | None = None,
) -> tuple[DescriptorSet, SuperSegmentMaskSet]:
    """Descriptors plus the SuperSegment grid masks they aggregate over."""
    h_f, w_f, d = features.shape
    flat = features.reshape(h_f * w_f, d).astype(np.float64)
    if patch is not None:
        masks, graph = patchify(masks.height, masks.width, patch)
        grid_masks = downsample_masks(masks, (w_f, h_f))
        expanded = expand_masks(graph, grid_masks, order)
    else:
        expanded = supersegment_masks(masks, (w_f, h_f), order)
    vectors = compute_descriptors(
        expanded.masks, flat, method=method, vocab=vocab, gem_p=gem_p
    )
    if method in ("gap", "global_vlad"):
        segment_ids = [0]
        expanded = SuperSegmentMaskSet(
            masks=np.ones((1, h_f * w_f), dtype=bool), order=order
        )
    else:
        segment_ids = list(range(len(vectors)))
    return (
        DescriptorSet(
            vectors=vectors,
            image_id=image_id,
            segment_ids=segment_ids,
            order=order,
            method=method,
        ),
        expanded,
    )


def describe_entries(
    manifest: DatasetManifest,
    entries: list[ManifestEntry],
    order: int = 3,
    method: str = "segvlad",
    vocab: Vocabulary | None = None,
    gem_p: float = 3.0,
    patch: int | None = None,
) -> tuple[list[DescriptorSet], dict[str, SuperSegmentMaskSet]]:
    descriptor_sets = []
    ss_masks = {}
    for entry in entries:
        masks = read_masks(manifest.resolve(entry.mask_path), image_id=entry.image_id)
        features = load_features(manifest.resolve(entry.feature_path))
        dset, expanded = describe_image(
            masks,
            features,
            image_id=entry.image_id,
            order=order,
            method=method,
            vocab=vocab,
            gem_p=gem_p,
            patch=patch,
        )
        descriptor_sets.append(dset)
        ss_masks[entry.image_id] = expanded
    return descriptor_sets, ss_masks


def apply_pca(
    descriptor_sets: list[DescriptorSet], model: PcaModel
) -> list[DescriptorSet]:
    out = []
    for dset in descriptor_sets:
        out.append(
            DescriptorSet(
                vectors=pca_transform(model, dset.vectors),
                image_id=dset.image_id,
                segment_ids=list(dset.segment_ids),
                order=dset.order,
                method=dset.method,
            )
        )
    return out
