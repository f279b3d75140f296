"""Binary tensor/mask file formats and dataset manifests.

Both formats are little-endian with fixed headers so that any external
extractor process can produce bit-identical files regardless of platform.

Tensor file ("SVT1"):
    magic(4) | version u8 | dtype u8 | ndim u8 | pad u8 | dims u64*ndim | payload
Mask file ("SVM1"):
    magic(4) | version u8 | H u32 | W u32 | S u32 |
    per segment: run_count u32 then (start u32, len u32) pairs

Masks are stored per segment as RLE over row-major pixel order because
open-set segment masks may overlap; a single label map cannot express that.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"SVT1"
MASK_MAGIC = b"SVM1"
FORMAT_VERSION = 1

_DTYPE_CODES = {
    np.dtype("<f4"): 1,
    np.dtype("u1"): 2,
    np.dtype("<u4"): 3,
}
_CODE_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("u1"), 3: np.dtype("<u4")}


class TensorIOError(Exception):
    """Malformed or unsupported tensor/mask file."""


def write_tensor(path: str | Path, tensor: np.ndarray) -> None:
    """Write an array to the fixed binary tensor format.

    Supported dtypes: float32, uint8, uint32. The payload is row-major
    little-endian; output bytes are identical across platforms.
    """
    arr = np.asarray(tensor)
    if arr.ndim == 0:
        raise TensorIOError("tensor must have at least one dimension")
    dtype = np.dtype(arr.dtype).newbyteorder("<")
    if dtype not in _DTYPE_CODES:
        raise TensorIOError(f"unsupported dtype {arr.dtype}; use f32, u8, or u32")
    header = TENSOR_MAGIC + struct.pack(
        "<BBBB", FORMAT_VERSION, _DTYPE_CODES[dtype], arr.ndim, 0
    )
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=dtype).tobytes()
    Path(path).write_bytes(header + dims + payload)


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a tensor file; exact inverse of :func:`write_tensor`."""
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != TENSOR_MAGIC:
        raise TensorIOError(f"bad magic in {path}")
    version, dtype_code, ndim, _pad = struct.unpack("<BBBB", raw[4:8])
    if version != FORMAT_VERSION:
        raise TensorIOError(f"unsupported version {version} in {path}")
    if dtype_code not in _CODE_DTYPES:
        raise TensorIOError(f"unknown dtype code {dtype_code} in {path}")
    dtype = _CODE_DTYPES[dtype_code]
    dims_end = 8 + 8 * ndim
    if len(raw) < dims_end:
        raise TensorIOError(f"truncated header in {path}")
    dims = struct.unpack(f"<{ndim}Q", raw[8:dims_end])
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 0
    expected = count * dtype.itemsize
    payload = raw[dims_end:]
    if len(payload) != expected:
        raise TensorIOError(
            f"truncated payload in {path}: expected {expected} bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


@dataclass
class SegmentMaskSet:
    """Per-image collection of binary segment masks (RLE, possibly overlapping).

    ``runs[s]`` is an (k, 2) uint32 array of (start, length) pairs over the
    row-major pixel order of an ``height`` x ``width`` image.
    """

    height: int
    width: int
    runs: list[np.ndarray] = field(default_factory=list)
    image_id: str | None = None

    @property
    def num_segments(self) -> int:
        return len(self.runs)

    def validate(self) -> None:
        n = self.height * self.width
        for s, seg in enumerate(self.runs):
            seg = np.asarray(seg)
            if seg.size == 0:
                continue
            if seg.ndim != 2 or seg.shape[1] != 2:
                raise TensorIOError(f"segment {s}: runs must be (k, 2) pairs")
            starts = seg[:, 0].astype(np.int64)
            lengths = seg[:, 1].astype(np.int64)
            if np.any(lengths <= 0):
                raise TensorIOError(f"segment {s}: non-positive run length")
            ends = starts + lengths
            if starts[0] < 0 or ends[-1] > n:
                raise TensorIOError(f"segment {s}: run out of range [0, {n})")
            if np.any(starts[1:] < ends[:-1]):
                raise TensorIOError(f"segment {s}: unsorted or overlapping runs")

    def decode(self) -> np.ndarray:
        """Decode to a dense (S, H*W) boolean matrix."""
        n = self.height * self.width
        out = np.zeros((len(self.runs), n), dtype=bool)
        for s, seg in enumerate(self.runs):
            for start, length in np.asarray(seg, dtype=np.int64).reshape(-1, 2):
                out[s, start : start + length] = True
        return out

    @classmethod
    def encode(
        cls,
        dense: np.ndarray,
        height: int,
        width: int,
        image_id: str | None = None,
    ) -> "SegmentMaskSet":
        """Encode a dense (S, H*W) or (S, H, W) boolean stack to RLE."""
        dense = np.asarray(dense, dtype=bool).reshape(len(dense), -1)
        if dense.shape[1] != height * width:
            raise TensorIOError("dense mask size does not match height*width")
        runs = []
        for row in dense:
            step = np.diff(np.concatenate(([0], row.astype(np.int8), [0])))
            starts = np.flatnonzero(step == 1)
            ends = np.flatnonzero(step == -1)
            runs.append(
                np.stack([starts, ends - starts], axis=1).astype(np.uint32)
            )
        return cls(height=height, width=width, runs=runs, image_id=image_id)


def write_masks(path: str | Path, masks: SegmentMaskSet) -> None:
    """Write a mask set to the fixed binary mask format."""
    masks.validate()
    parts = [
        MASK_MAGIC,
        struct.pack(
            "<BIII", FORMAT_VERSION, masks.height, masks.width, len(masks.runs)
        ),
    ]
    for seg in masks.runs:
        seg = np.ascontiguousarray(np.asarray(seg, dtype="<u4").reshape(-1, 2))
        parts.append(struct.pack("<I", seg.shape[0]))
        parts.append(seg.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_masks(path: str | Path, image_id: str | None = None) -> SegmentMaskSet:
    """Read a mask file; exact inverse of :func:`write_masks`."""
    raw = Path(path).read_bytes()
    if len(raw) < 17 or raw[:4] != MASK_MAGIC:
        raise TensorIOError(f"bad magic in {path}")
    version, height, width, count = struct.unpack("<BIII", raw[4:17])
    if version != FORMAT_VERSION:
        raise TensorIOError(f"unsupported version {version} in {path}")
    offset = 17
    runs = []
    for s in range(count):
        if len(raw) < offset + 4:
            raise TensorIOError(f"truncated segment table in {path}")
        (run_count,) = struct.unpack("<I", raw[offset : offset + 4])
        offset += 4
        end = offset + 8 * run_count
        if len(raw) < end:
            raise TensorIOError(f"truncated runs for segment {s} in {path}")
        seg = np.frombuffer(raw[offset:end], dtype="<u4").reshape(-1, 2).copy()
        runs.append(seg)
        offset = end
    out = SegmentMaskSet(height=height, width=width, runs=runs, image_id=image_id)
    out.validate()
    return out


@dataclass
class ManifestEntry:
    image_id: str
    mask_path: str
    feature_path: str
    position: tuple[float, float] | None = None
    frame_index: int | None = None


@dataclass
class DatasetManifest:
    """Dataset split description: reference (database) and query entries.

    Paths are stored relative to the manifest file and resolved at load time.
    """

    name: str
    reference_entries: list[ManifestEntry] = field(default_factory=list)
    query_entries: list[ManifestEntry] = field(default_factory=list)
    root: Path = field(default_factory=Path)

    def resolve(self, rel_path: str) -> Path:
        p = Path(rel_path)
        return p if p.is_absolute() else self.root / p

    def validate(self, check_paths: bool = True) -> None:
        for split_name, entries in (
            ("reference", self.reference_entries),
            ("query", self.query_entries),
        ):
            ids = [e.image_id for e in entries]
            if len(set(ids)) != len(ids):
                raise TensorIOError(f"duplicate image_id in {split_name} split")
            if check_paths:
                for e in entries:
                    for p in (e.mask_path, e.feature_path):
                        if not self.resolve(p).is_file():
                            raise TensorIOError(
                                f"{split_name} entry {e.image_id}: missing file {p}"
                            )


def _entry_to_json(e: ManifestEntry) -> dict:
    d: dict = {
        "image_id": e.image_id,
        "mask_path": e.mask_path,
        "feature_path": e.feature_path,
    }
    if e.position is not None:
        d["position"] = [float(e.position[0]), float(e.position[1])]
    if e.frame_index is not None:
        d["frame_index"] = int(e.frame_index)
    return d


def _entry_from_json(d: dict) -> ManifestEntry:
    pos = d.get("position")
    return ManifestEntry(
        image_id=d["image_id"],
        mask_path=d["mask_path"],
        feature_path=d["feature_path"],
        position=(float(pos[0]), float(pos[1])) if pos is not None else None,
        frame_index=int(d["frame_index"]) if "frame_index" in d else None,
    )


def write_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    doc = {
        "name": manifest.name,
        "reference": [_entry_to_json(e) for e in manifest.reference_entries],
        "query": [_entry_to_json(e) for e in manifest.query_entries],
    }
    Path(path).write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_manifest(path: str | Path, check_paths: bool = True) -> DatasetManifest:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    manifest = DatasetManifest(
        name=doc["name"],
        reference_entries=[_entry_from_json(d) for d in doc.get("reference", [])],
        query_entries=[_entry_from_json(d) for d in doc.get("query", [])],
        root=path.parent,
    )
    manifest.validate(check_paths=check_paths)
    return manifest
