"""SuperSegment descriptor aggregation.

All methods are instances of one factorization: a binary neighborhood
reach matrix times binary masks selects cells, and the selected rows of a
feature-derived matrix are summed per SuperSegment. Hard VLAD sums
per-cluster residuals (intra-normalized per cluster, concatenated, then
L2-normalized); SAP/GAP/GeM pool raw features.

Sums accumulate in double precision over ascending cell index and
descriptors are emitted in single precision. Zero aggregates are left as
zero vectors, never divided.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .vocab import Vocabulary, assign_hard

log = logging.getLogger(__name__)

METHODS = ("segvlad", "sap", "gap", "gem", "global_vlad")


@dataclass
class DescriptorSet:
    """Descriptors plus provenance for one image."""

    vectors: np.ndarray  # (S, dim) float32
    image_id: str
    segment_ids: list[int]
    order: int
    method: str


def l2_normalize(x: np.ndarray) -> np.ndarray:
    """Row-wise L2 normalization; zero rows stay zero."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    out = np.where(norms > 0, rows / np.where(norms > 0, norms, 1.0), 0.0)
    return out[0] if single else out


def aggregate_factorized(
    a_pow: np.ndarray, masks: np.ndarray, t: np.ndarray
) -> np.ndarray:
    """F = binarize(a_pow . masks) . t: per-SuperSegment cell-set sums.

    ``a_pow`` is the binarized neighborhood reach (S, S), ``masks`` the
    (S, N) binary masks, ``t`` the (N, D) matrix to aggregate. Each cell
    contributes once per SuperSegment regardless of multiplicity.
    """
    a_pow = np.asarray(a_pow)
    masks = np.asarray(masks)
    t = np.asarray(t, dtype=np.float64)
    if a_pow.shape[1] != masks.shape[0] or masks.shape[1] != t.shape[0]:
        raise ValueError(
            f"non-conformable shapes {a_pow.shape} x {masks.shape} x {t.shape}"
        )
    cells = (a_pow.astype(np.int64) @ masks.astype(np.int64)) > 0
    return cells.astype(np.float64) @ t


def _row_sums(mask_rows: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Sum ``values`` rows selected by each boolean mask row, ascending index.

    Shared by every descriptor method so that identical cell selections
    produce bit-identical sums regardless of how many rows are batched.
    """
    out = np.zeros((mask_rows.shape[0], values.shape[1]))
    for r in range(mask_rows.shape[0]):
        sel = mask_rows[r]
        if sel.any():
            out[r] = np.add.reduce(values[sel], axis=0)
    return out


def _row_sums_exact(mask_rows: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Exactly-rounded per-column sums (order-independent; cancellations
    that are exact in real arithmetic stay exactly zero)."""
    out = np.zeros((mask_rows.shape[0], values.shape[1]))
    for r in range(mask_rows.shape[0]):
        sel = values[mask_rows[r]]
        if len(sel):
            out[r] = [math.fsum(col) for col in sel.T]
    return out


def vlad_descriptors(
    masks: np.ndarray, features: np.ndarray, vocab: Vocabulary
) -> np.ndarray:
    """Hard-assignment VLAD per SuperSegment: (S, C*D) float32.

    Block k of SuperSegment s sums (f_p - c_k) over member cells assigned
    to cluster k; blocks are L2-normalized individually, concatenated in
    cluster order, and the full vector L2-normalized.
    """
    masks = np.asarray(masks, dtype=bool)
    features = np.asarray(features, dtype=np.float64)
    if masks.shape[1] != features.shape[0]:
        raise ValueError(
            f"mask cells ({masks.shape[1]}) do not match features ({features.shape[0]})"
        )
    assignments = assign_hard(features, vocab)
    blocks = _vlad_block_sums(masks, features, vocab, assignments)
    return _finalize_vlad(blocks, masks)


def _vlad_block_sums(
    masks: np.ndarray,
    features: np.ndarray,
    vocab: Vocabulary,
    assignments: np.ndarray,
) -> np.ndarray:
    s = masks.shape[0]
    c, d = vocab.centers.shape
    blocks = np.zeros((s, c, d))
    for k in range(c):
        sel = np.flatnonzero(assignments == k)
        if sel.size == 0:
            continue
        residuals = features[sel] - vocab.centers[k]
        blocks[:, k, :] = _row_sums(masks[:, sel], residuals)
    return blocks


def _finalize_vlad(blocks: np.ndarray, masks: np.ndarray) -> np.ndarray:
    s = blocks.shape[0]
    empty = np.flatnonzero(~masks.any(axis=1))
    if empty.size:
        log.warning(
            "%d empty SuperSegment rows produce zero descriptors: %s",
            empty.size,
            empty[:8],
        )
    norms = np.linalg.norm(blocks, axis=2, keepdims=True)
    blocks = np.where(norms > 0, blocks / np.where(norms > 0, norms, 1.0), 0.0)
    flat = blocks.reshape(s, -1)
    return l2_normalize(flat).astype(np.float32)


def global_vlad_single_shot(features: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    """Whole-image VLAD in one aggregation pass: (C*D,) float32.

    Uses cluster-membership rows as the mask matrix: row k selects the
    cells of cluster k, so one pass over the factorization yields every
    block. Equals the single all-ones-mask path exactly.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.size == 0:
        raise ValueError("empty feature map")
    assignments = assign_hard(features, vocab)
    c = vocab.num_clusters
    membership = assignments[None, :] == np.arange(c)[:, None]  # (C, N)
    blocks = _vlad_block_sums(membership, features, vocab, assignments)
    own = blocks[np.arange(c), np.arange(c), :]  # row k aggregates cluster k
    return _finalize_vlad(own[None, :, :], np.ones((1, features.shape[0]), bool))[0]


def _masked_mean(masks: np.ndarray, features: np.ndarray) -> np.ndarray:
    masks = np.asarray(masks, dtype=bool)
    features = np.asarray(features, dtype=np.float64)
    if masks.shape[1] != features.shape[0]:
        raise ValueError(
            f"mask cells ({masks.shape[1]}) do not match features ({features.shape[0]})"
        )
    counts = masks.sum(axis=1, keepdims=True).astype(np.float64)
    sums = _row_sums_exact(masks, features)
    empty = np.flatnonzero(counts[:, 0] == 0)
    if empty.size:
        log.warning("%d empty mask rows pooled to zero: %s", empty.size, empty[:8])
    return np.where(counts > 0, sums / np.where(counts > 0, counts, 1.0), 0.0)


def sap_descriptors(masks: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Segment average pooling: per-SuperSegment feature mean, L2-normalized."""
    return l2_normalize(_masked_mean(masks, features)).astype(np.float32)


def gap_descriptor(features: np.ndarray) -> np.ndarray:
    """Global average pooling: SAP with a single all-ones mask."""
    features = np.asarray(features, dtype=np.float64)
    ones = np.ones((1, features.shape[0]), dtype=bool)
    return sap_descriptors(ones, features)[0]


def gem_pool(masks: np.ndarray, features: np.ndarray, p: float) -> np.ndarray:
    """Generalized-mean pooling before normalization: (mean f^p)^(1/p).

    p=1 is exactly average pooling. Odd integer exponents on signed
    features use the real (sign-preserving) p-th root; fractional
    exponents require non-negative features.
    """
    if p < 1:
        raise ValueError("exponent p must be >= 1")
    features = np.asarray(features, dtype=np.float64)
    if float(p) != int(p) and np.any(features < 0):
        raise ValueError("negative features require an integer exponent")
    if p == 1:
        return _masked_mean(masks, features)
    pooled = _masked_mean(masks, np.power(features, float(p)))
    return np.sign(pooled) * np.power(np.abs(pooled), 1.0 / float(p))


def gem_descriptors(masks: np.ndarray, features: np.ndarray, p: float) -> np.ndarray:
    """GeM pooling per SuperSegment, L2-normalized; p=1 reproduces SAP."""
    return l2_normalize(gem_pool(masks, features, p)).astype(np.float32)


def compute_descriptors(
    masks: np.ndarray,
    features: np.ndarray,
    method: str,
    vocab: Vocabulary | None = None,
    gem_p: float = 3.0,
) -> np.ndarray:
    """Dispatch on aggregation method name.

    Segment-level methods return (S, dim); the whole-image methods (gap,
    global_vlad) ignore the masks and return a single (1, dim) row.
    """
    if method == "segvlad":
        if vocab is None:
            raise ValueError("segvlad requires a vocabulary")
        return vlad_descriptors(masks, features, vocab)
    if method == "sap":
        return sap_descriptors(masks, features)
    if method == "gap":
        return gap_descriptor(features)[None, :]
    if method == "gem":
        return gem_descriptors(masks, features, gem_p)
    if method == "global_vlad":
        if vocab is None:
            raise ValueError("global_vlad requires a vocabulary")
        return global_vlad_single_shot(features, vocab)[None, :]
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
