"""PCA projection of SuperSegment descriptors.

The model is trained on database descriptors only; queries reuse it.
Projected vectors are re-L2-normalized so inner-product search stays a
cosine similarity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse.linalg

from .aggregate import l2_normalize
from .tensor_io import read_tensor, write_tensor

_EXACT_DIM_LIMIT = 4096
_RANK_RTOL = 1e-10


@dataclass
class PcaModel:
    mean: np.ndarray  # (F,)
    components: np.ndarray  # (d, F) orthonormal rows, descending variance
    explained_variance: np.ndarray  # (d,)
    whiten: bool = False

    @property
    def dim(self) -> int:
        return len(self.components)


def pca_fit(
    descriptors: np.ndarray,
    dim: int,
    whiten: bool = False,
    method: str = "auto",
    seed: int = 0,
) -> PcaModel:
    """Top-``dim`` principal directions of mean-centered descriptors.

    Uses a dense eigendecomposition of the covariance for input dims up to
    4096, otherwise a seeded iterative solver. Component signs follow a
    fixed convention (largest-magnitude coefficient positive) so fits are
    deterministic.
    """
    x = np.asarray(descriptors, dtype=np.float64)
    m, f = x.shape
    if dim < 1:
        raise ValueError("target dim must be >= 1")
    if m < dim:
        raise ValueError(f"need at least {dim} samples, got {m}")
    mean = x.mean(axis=0)
    centered = x - mean

    if method == "auto":
        method = "exact" if f <= _EXACT_DIM_LIMIT else "iterative"
    if method == "exact":
        cov = (centered.T @ centered) / max(1, m - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1][:dim]
        variances = eigvals[order]
        components = eigvecs[:, order].T
    elif method == "iterative":
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(f)
        # top singular vectors of the centered data; ARPACK with a fixed
        # start vector keeps the fit deterministic
        _u, s, vt = scipy.sparse.linalg.svds(
            centered, k=dim, v0=v0, tol=1e-6, return_singular_vectors="vh"
        )
        order = np.argsort(s)[::-1]
        variances = (s[order] ** 2) / max(1, m - 1)
        components = vt[order]
    else:
        raise ValueError(f"unknown method {method!r}")

    max_var = float(variances[0]) if len(variances) else 0.0
    rank = int(np.sum(variances > max(max_var * _RANK_RTOL, 0.0)))
    if max_var <= 0.0 or rank < dim:
        raise ValueError(
            f"data rank {rank} is below the requested dim {dim}; "
            f"reduce dim to at most {rank}"
        )

    for i in range(dim):
        pivot = int(np.argmax(np.abs(components[i])))
        if components[i, pivot] < 0:
            components[i] = -components[i]
    return PcaModel(
        mean=mean,
        components=np.ascontiguousarray(components),
        explained_variance=np.asarray(variances, dtype=np.float64),
        whiten=whiten,
    )


def pca_project(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Raw projection (no re-normalization): components . (x - mean)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.mean.shape[0]:
        raise ValueError(
            f"input dim {x.shape[-1]} does not match model dim {model.mean.shape[0]}"
        )
    y = (x - model.mean) @ model.components.T
    if model.whiten:
        y = y / np.sqrt(model.explained_variance)
    return y


def pca_transform(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project then re-L2-normalize (zero vectors stay zero)."""
    return l2_normalize(pca_project(model, x)).astype(np.float32)


def save_pca(model: PcaModel, prefix: str | Path) -> None:
    prefix = Path(prefix)
    write_tensor(prefix.parent / f"{prefix.name}.mean.svt", model.mean.astype(np.float32))
    write_tensor(
        prefix.parent / f"{prefix.name}.components.svt",
        model.components.astype(np.float32),
    )
    meta = {
        "dim": model.dim,
        "whiten": model.whiten,
        "explained_variance": [float(v) for v in model.explained_variance],
    }
    (prefix.parent / f"{prefix.name}.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_pca(prefix: str | Path) -> PcaModel:
    prefix = Path(prefix)
    mean = read_tensor(prefix.parent / f"{prefix.name}.mean.svt").astype(np.float64)
    components = read_tensor(
        prefix.parent / f"{prefix.name}.components.svt"
    ).astype(np.float64)
    meta = json.loads(
        (prefix.parent / f"{prefix.name}.json").read_text(encoding="utf-8")
    )
    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=np.asarray(meta["explained_variance"], dtype=np.float64),
        whiten=bool(meta["whiten"]),
    )
