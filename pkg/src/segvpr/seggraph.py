"""Per-image segment graphs and SuperSegment masks.

A segment graph connects segments whose pixel centroids share a Delaunay
edge. SuperSegment masks expand each segment by its graph neighborhood:
row s of the expanded matrix is the union of the masks of all segments
within graph distance <= order of s, computed as binarize((A+I)^o . M).
The identity is added so order >= 1 always keeps the central segment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .delaunay import delaunay_edges
from .tensor_io import SegmentMaskSet

log = logging.getLogger(__name__)


@dataclass
class SegmentGraph:
    """Symmetric adjacency over segments plus their pixel centroids."""

    adjacency: np.ndarray  # (S, S) bool, zero diagonal
    centroids: np.ndarray  # (S, 2) float, (x, y)

    @property
    def num_segments(self) -> int:
        return len(self.centroids)


@dataclass
class SuperSegmentMaskSet:
    """Binary SuperSegment masks on the feature grid."""

    masks: np.ndarray  # (S, N) bool
    order: int


def centroids(masks: SegmentMaskSet) -> np.ndarray:
    """Arithmetic-mean pixel centers, (S, 2) as (x, y). Segments must be nonempty."""
    w = masks.width
    out = np.empty((masks.num_segments, 2), dtype=float)
    for s, seg in enumerate(masks.runs):
        seg = np.asarray(seg, dtype=np.int64).reshape(-1, 2)
        if seg.size == 0 or seg[:, 1].sum() == 0:
            raise ValueError(f"segment {s} is empty; drop empty masks first")
        idx = np.concatenate([np.arange(a, a + n) for a, n in seg])
        out[s] = ((idx % w).mean(), (idx // w).mean())
    return out


def delaunay_adjacency(points: np.ndarray) -> SegmentGraph:
    """Segment graph from Delaunay triangulation of centroid points.

    Degenerate inputs never fail: a single point has no edges, two points
    one edge, collinear points form a chain in coordinate order.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 1:
        raise ValueError("need at least one point")
    s = len(points)
    adj = np.zeros((s, s), dtype=bool)
    for i, j in delaunay_edges(points):
        adj[i, j] = adj[j, i] = True
    return SegmentGraph(adjacency=adj, centroids=points)


def build_graph(masks: SegmentMaskSet) -> SegmentGraph:
    """Centroids at full image resolution, then Delaunay adjacency."""
    return delaunay_adjacency(centroids(masks))


def downsample_masks(masks: SegmentMaskSet, grid: tuple[int, int]) -> np.ndarray:
    """Coverage-OR downsampling of masks onto a (W_f, H_f) feature grid.

    Cell (u, v) is set for a segment iff any source pixel mapping to that
    cell belongs to it, so no nonempty segment ever vanishes. Returns an
    (S, N) bool matrix with N = W_f * H_f in row-major grid order.
    """
    wf, hf = grid
    h, w = masks.height, masks.width
    if wf > w or hf > h:
        raise ValueError(f"grid {grid} larger than image ({w}, {h})")
    # per-pixel cell index, row-major over the feature grid
    xs = (np.arange(w, dtype=np.int64) * wf) // w
    ys = (np.arange(h, dtype=np.int64) * hf) // h
    cell_of_pixel = (ys[:, None] * wf + xs[None, :]).ravel()
    out = np.zeros((masks.num_segments, wf * hf), dtype=bool)
    for s, seg in enumerate(masks.runs):
        seg = np.asarray(seg, dtype=np.int64).reshape(-1, 2)
        for a, length in seg:
            out[s, cell_of_pixel[a : a + length]] = True
        if seg.size and not out[s].any():
            raise AssertionError("coverage-OR cannot empty a nonempty mask")
    empty = np.flatnonzero(~out.any(axis=1))
    if empty.size:
        log.warning("downsample left %d empty mask rows: %s", empty.size, empty[:8])
    return out


def expand_masks(
    graph: SegmentGraph, masks: np.ndarray, order: int
) -> SuperSegmentMaskSet:
    """Neighborhood expansion: binarize((A+I)^order . M).

    Row s of the result is the union of the masks of all segments within
    graph distance <= order of s; entries stay binary so every cell
    contributes at most once downstream.
    """
    masks = np.asarray(masks)
    if order < 0:
        raise ValueError("order must be >= 0")
    s = graph.num_segments
    if masks.shape[0] != s:
        raise ValueError(
            f"mask rows ({masks.shape[0]}) do not match graph size ({s})"
        )
    reach = np.linalg.matrix_power(
        graph.adjacency.astype(np.int64) + np.eye(s, dtype=np.int64), order
    )
    expanded = (reach @ masks.astype(np.int64)) > 0
    return SuperSegmentMaskSet(masks=expanded, order=order)


def neighborhood_reach(graph: SegmentGraph, order: int) -> np.ndarray:
    """Binarized (A+I)^order: which segments fall inside each neighborhood."""
    s = graph.num_segments
    reach = np.linalg.matrix_power(
        graph.adjacency.astype(np.int64) + np.eye(s, dtype=np.int64), order
    )
    return reach > 0


def patchify(height: int, width: int, patch: int) -> tuple[SegmentMaskSet, SegmentGraph]:
    """Uniform square-patch baseline: non-overlapping tiles plus a grid graph.

    Produces ceil(H/p) * ceil(W/p) masks (edge tiles truncated) and
    4-neighborhood adjacency instead of Delaunay.
    """
    if patch < 1:
        raise ValueError("patch size must be >= 1")
    rows = (height + patch - 1) // patch
    cols = (width + patch - 1) // patch
    dense = np.zeros((rows * cols, height * width), dtype=bool)
    cents = np.empty((rows * cols, 2), dtype=float)
    pix = np.arange(height * width)
    tile = (pix // width // patch) * cols + (pix % width) // patch
    for s in range(rows * cols):
        members = pix[tile == s]
        dense[s, members] = True
        cents[s] = (float((members % width).mean()), float((members // width).mean()))
    masks = SegmentMaskSet.encode(dense, height, width)
    adj = np.zeros((rows * cols, rows * cols), dtype=bool)
    for r in range(rows):
        for c in range(cols):
            s = r * cols + c
            if c + 1 < cols:
                adj[s, s + 1] = adj[s + 1, s] = True
            if r + 1 < rows:
                adj[s, s + cols] = adj[s + cols, s] = True
    return masks, SegmentGraph(adjacency=adj, centroids=cents)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """|a & b| / |a | b| on same-shaped binary masks; 0.0 when both empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)
