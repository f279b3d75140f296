"""VLAD vocabulary: deterministic k-means clustering and hard assignment.

Cluster centers can be built from the map (reference images of the dataset
being indexed) or from a domain corpus; the engine only records the source
tag. Fitting is k-means++ initialization followed by Lloyd iterations,
fully deterministic for a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor_io import DatasetManifest, read_tensor, write_tensor


@dataclass
class Vocabulary:
    centers: np.ndarray  # (C, D) float64
    source: str = "map"  # "map" or "domain"
    seed: int = 0
    inertia_history: list[float] = field(default_factory=list, repr=False)

    @property
    def num_clusters(self) -> int:
        return len(self.centers)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


def _squared_distances(features: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(N, C) squared euclidean distances computed by direct subtraction."""
    n = len(features)
    out = np.empty((n, len(centers)))
    step = max(1, 8_388_608 // max(1, centers.size))  # ~64MB working set
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        diff = features[lo:hi, None, :] - centers[None, :, :]
        out[lo:hi] = np.einsum("ncd,ncd->nc", diff, diff)
    return out


def kmeans_fit(
    features: np.ndarray,
    num_clusters: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-4,
    source: str = "map",
) -> Vocabulary:
    """Lloyd's algorithm from k-means++ initialization.

    Stops when the relative center shift drops below ``tol`` or after
    ``max_iters`` iterations. Empty clusters are re-seeded at the point
    farthest from the empty center, keeping the cluster count constant.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be (M, D)")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature values")
    m, _d = x.shape
    if m < num_clusters:
        raise ValueError(f"need at least {num_clusters} samples, got {m}")

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(x, num_clusters, rng)

    inertia_history: list[float] = []
    for _ in range(max_iters):
        d2 = _squared_distances(x, centers)
        labels = np.argmin(d2, axis=1)
        inertia_history.append(float(d2[np.arange(m), labels].sum()))

        new_centers = centers.copy()
        counts = np.bincount(labels, minlength=num_clusters)
        for k in np.flatnonzero(counts == 0):
            far = int(np.argmax(d2[:, k]))
            new_centers[k] = x[far]
        for k in np.flatnonzero(counts > 0):
            new_centers[k] = x[labels == k].mean(axis=0)

        shift = np.linalg.norm(new_centers - centers)
        scale = np.linalg.norm(centers)
        centers = new_centers
        if shift <= tol * max(scale, 1e-12):
            break

    vocab = Vocabulary(
        centers=centers, source=source, seed=seed, inertia_history=inertia_history
    )
    return vocab


def _kmeans_pp_init(x: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    m = len(x)
    centers = np.empty((c, x.shape[1]))
    first = int(rng.integers(m))
    centers[0] = x[first]
    diff = x - centers[0]
    best_d2 = np.einsum("md,md->m", diff, diff)
    for k in range(1, c):
        total = best_d2.sum()
        if total <= 0:
            # all remaining points coincide with chosen centers; pick any
            # unchosen point deterministically
            chosen = {tuple(centers[i]) for i in range(k)}
            idx = next(
                i for i in range(m) if tuple(x[i]) not in chosen
            )
        else:
            idx = int(rng.choice(m, p=best_d2 / total))
        centers[k] = x[idx]
        diff = x - centers[k]
        best_d2 = np.minimum(best_d2, np.einsum("md,md->m", diff, diff))
    return centers


def assign_hard(features: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    """Nearest-center index per feature row; ties go to the smallest index."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape[1] != vocab.dim:
        raise ValueError(
            f"feature dim {x.shape[1]} does not match vocabulary dim {vocab.dim}"
        )
    return np.argmin(_squared_distances(x, vocab.centers), axis=1)


def sample_for_vocab(
    manifest: DatasetManifest,
    split: str = "map",
    per_image: int = 256,
    seed: int = 0,
) -> np.ndarray:
    """Uniform per-image sample of feature cells, deterministic under seed.

    split="map" samples the reference entries; split="domain" treats the
    whole manifest (reference + query entries) as the domain corpus.
    """
    if split == "map":
        entries = manifest.reference_entries
    elif split == "domain":
        entries = manifest.reference_entries + manifest.query_entries
    else:
        raise ValueError(f"unknown split {split!r}")
    if not entries:
        raise ValueError(f"split {split!r} has no entries")
    rng = np.random.default_rng(seed)
    chunks = []
    for entry in entries:
        feats = read_tensor(manifest.resolve(entry.feature_path))
        feats = np.asarray(feats, dtype=np.float64).reshape(-1, feats.shape[-1])
        take = min(per_image, len(feats))
        if take > 0:
            idx = rng.choice(len(feats), size=take, replace=False)
            chunks.append(feats[np.sort(idx)])
    if not chunks:
        return np.empty((0, 0))
    return np.concatenate(chunks, axis=0)


def save_vocabulary(vocab: Vocabulary, centers_path: str | Path) -> None:
    """Persist centers as a tensor file plus a JSON sidecar."""
    centers_path = Path(centers_path)
    write_tensor(centers_path, vocab.centers.astype(np.float32))
    meta = {
        "source": vocab.source,
        "seed": vocab.seed,
        "num_clusters": vocab.num_clusters,
        "dim": vocab.dim,
    }
    centers_path.with_suffix(".json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_vocabulary(centers_path: str | Path) -> Vocabulary:
    centers_path = Path(centers_path)
    centers = read_tensor(centers_path).astype(np.float64)
    meta = json.loads(centers_path.with_suffix(".json").read_text(encoding="utf-8"))
    if centers.shape != (meta["num_clusters"], meta["dim"]):
        raise ValueError("vocabulary sidecar does not match centers tensor")
    return Vocabulary(centers=centers, source=meta["source"], seed=meta["seed"])
