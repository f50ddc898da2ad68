"""Voxel-count data quality indicators over a K x K x K box partition."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import BoundingBox

VALID_K = (1, 2, 3, 4)


@dataclass(frozen=True)
class QualityIndicator:
    counts: np.ndarray
    K: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if counts.size != self.K ** 3:
            raise ValueError(f"indicator for K={self.K} needs {self.K ** 3} counts, got {counts.size}")
        if np.any(counts < 0):
            raise ValueError("indicator counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def __add__(self, other: "QualityIndicator") -> "QualityIndicator":
        if other.K != self.K:
            raise ValueError(f"cannot add indicators with K={self.K} and K={other.K}")
        return QualityIndicator(self.counts + other.counts, self.K)

    def __eq__(self, other):
        return (isinstance(other, QualityIndicator) and other.K == self.K
                and np.array_equal(other.counts, self.counts))

    def __hash__(self):
        return hash((self.K, self.counts.tobytes()))

    @classmethod
    def zeros(cls, K: int) -> "QualityIndicator":
        return cls(np.zeros(K ** 3, dtype=np.int64), K)


def check_K(K: int) -> int:
    if K not in VALID_K:
        raise ValueError(f"partition resolution K must be one of {VALID_K}, got {K}")
    return int(K)


def voxel_index(points: np.ndarray, box: BoundingBox, K: int) -> np.ndarray:
    """Flat voxel index i_x + K*i_y + K^2*i_z of each point; upper faces clamp to K-1."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    lower = box.lower
    size = np.asarray(box.lengths) / K
    ijk = np.floor((points - lower) / size).astype(np.int64)
    ijk = np.clip(ijk, 0, K - 1)
    return ijk[:, 0] + K * ijk[:, 1] + K * K * ijk[:, 2]


def compute_indicator(points: np.ndarray, box: BoundingBox, K: int = 3) -> QualityIndicator:
    K = check_K(K)
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    outside = np.any((points < box.lower) | (points > box.upper), axis=1)
    if np.any(outside):
        raise ValueError(f"{int(outside.sum())} point(s) lie outside the bounding box; extract first")
    counts = np.bincount(voxel_index(points, box, K), minlength=K ** 3)
    return QualityIndicator(counts, K)


def fuse_indicators(selection, indicators) -> QualityIndicator:
    """Indicator of fused data: sum of the selected CAVs' indicators."""
    selection = np.asarray(selection).reshape(-1)
    indicators = list(indicators)
    if len(selection) != len(indicators):
        raise ValueError("selection and indicators must have one entry per CAV")
    if not indicators:
        raise ValueError("at least one indicator is required")
    K = indicators[0].K
    if any(z.K != K for z in indicators):
        raise ValueError("all indicators must share the same K")
    total = np.zeros(K ** 3, dtype=np.int64)
    for s, z in zip(selection, indicators):
        if s:
            total += z.counts
    return QualityIndicator(total, K)


def point_count(indicator: QualityIndicator) -> int:
    return int(indicator.counts.sum())
