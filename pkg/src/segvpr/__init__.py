"""Segment-level visual place recognition engine.

Builds SuperSegment descriptors from precomputed segment masks and dense
feature maps, indexes them exactly, and retrieves/ranks reference images
for queries.
"""

__version__ = "0.1.0"
