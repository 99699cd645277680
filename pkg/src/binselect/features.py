"""Hand-designed statistical features for the feature-based selectors.

Ten per-instance statistics over the item-size distribution.  They are
deliberately order-blind: any permutation of the item sequence yields the
identical vector, which is exactly what the sequence-consuming selectors are
contrasted against.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .packing import Instance

FEATURE_NAMES = (
    "mean_over_c", "std_over_c", "max_over_c", "min_over_c", "median_over_c",
    "max_over_min", "ratio_small", "ratio_medium", "ratio_large", "ratio_huge",
)


@dataclass(frozen=True)
class FeatureVector:
    mean_over_c: float
    std_over_c: float
    max_over_c: float
    min_over_c: float
    median_over_c: float
    max_over_min: float
    ratio_small: float
    ratio_medium: float
    ratio_large: float
    ratio_huge: float

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=np.float64)


def extract_features(instance: Instance, ddof: int = 0) -> FeatureVector:
    """Compute the ten features of ``instance``.

    Size classes partition [1, C] with boundaries C/4, C/3, C/2; comparisons
    are done on integers (4w <= C etc.) so boundary items never land in the
    wrong class through float rounding.  Standard deviation is the population
    value by default (``ddof=0``); pass ``ddof=1`` for the sample convention.
    """
    n = instance.n
    if n == 0:
        raise ValueError("cannot extract features from an empty instance")
    c = instance.capacity
    # sorting first makes the vector exactly identical under permutation
    # (float summation order would otherwise leak into the last bits)
    w = np.sort(np.asarray(instance.items, dtype=np.float64))
    small = medium = large = huge = 0
    for wi in instance.items:
        if 4 * wi <= c:
            small += 1
        elif 3 * wi <= c:
            medium += 1
        elif 2 * wi <= c:
            large += 1
        else:
            huge += 1
    return FeatureVector(
        mean_over_c=float(np.mean(w)) / c,
        std_over_c=float(np.std(w, ddof=ddof)) / c,
        max_over_c=float(np.max(w)) / c,
        min_over_c=float(np.min(w)) / c,
        median_over_c=float(np.median(w)) / c,
        max_over_min=float(np.max(w)) / float(np.min(w)),
        ratio_small=small / n,
        ratio_medium=medium / n,
        ratio_large=large / n,
        ratio_huge=huge / n,
    )


def feature_matrix(instances, ddof: int = 0) -> np.ndarray:
    """Stack feature vectors for a sequence of instances into an (n, 10) array."""
    return np.stack([extract_features(inst, ddof).to_array() for inst in instances])
