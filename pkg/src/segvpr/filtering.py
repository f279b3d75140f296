"""IOU-based culling of database SuperSegments.

SuperSegments of an image are visited in descending pixel-area order
(ties by ascending segment id); a SuperSegment is removed when its IOU
with ANY earlier (larger) one exceeds the threshold. Checking against all
earlier segments, kept or removed, makes each segment's fate a threshold
test on a fixed statistic, so relaxing the threshold only ever keeps more
(kept sets are nested across thresholds) and retained pairs always have
IOU at or below the threshold. Queries are never culled, only database
images.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .seggraph import SuperSegmentMaskSet


@dataclass
class CullReport:
    threshold: float
    kept_ids: list[int] = field(default_factory=list)
    removed_ids: list[int] = field(default_factory=list)

    @property
    def retention_ratio(self) -> float:
        total = len(self.kept_ids) + len(self.removed_ids)
        return len(self.kept_ids) / total if total else 1.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "threshold": self.threshold,
                "kept_ids": self.kept_ids,
                "removed_ids": self.removed_ids,
                "retention_ratio": self.retention_ratio,
            },
            sort_keys=True,
        )


def cull_by_iou(
    supersegments: SuperSegmentMaskSet | np.ndarray, threshold: float
) -> CullReport:
    """Area-ordered culling; retained pairs all have IOU <= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    masks = (
        supersegments.masks
        if isinstance(supersegments, SuperSegmentMaskSet)
        else np.asarray(supersegments)
    ).astype(bool)
    areas = masks.sum(axis=1)
    order = np.lexsort((np.arange(len(masks)), -areas))

    kept: list[int] = []
    removed: list[int] = []
    for pos, s in enumerate(order):
        s = int(s)
        overlapping = False
        for e in order[:pos]:  # every larger segment, kept or removed
            inter = np.logical_and(masks[s], masks[e]).sum()
            if inter == 0:
                continue
            union = areas[s] + areas[e] - inter
            if inter / union > threshold:
                overlapping = True
                break
        (removed if overlapping else kept).append(s)
    return CullReport(
        threshold=float(threshold), kept_ids=sorted(kept), removed_ids=sorted(removed)
    )
