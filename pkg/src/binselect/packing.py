"""Online 1D bin-packing heuristics, bounds, and solution-quality metrics.

Items arrive in a fixed order and every heuristic packs them in that order;
the sequence is never reordered.  Four deterministic rules are supported:

* ``FF`` (first fit): first feasible bin in opening order.
* ``BF`` (best fit): feasible bin leaving the least residual space;
  ties go to the earliest-opened bin.
* ``WF`` (worst fit): feasible bin with the most available space;
  ties go to the earliest-opened bin.
* ``NF`` (next fit): only the most recently opened bin is considered; a bin
  that cannot take the current item is closed permanently.

A bin is feasible iff its residual space is at least the item weight (exact
fills are allowed and close nothing; only NF closes bins).

The fill loops are provided by a compiled extension when available, with a
pure-Python fallback selected at import time (see ``BACKEND``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

if os.environ.get("BINSELECT_PURE"):
    from . import _fills_py as _kernels

    BACKEND = "python"
else:
    try:
        from . import _fills_cy as _kernels  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _fills_py as _kernels

        BACKEND = "python"

#: Canonical heuristic order; matches the one-hot class order used by the
#: selectors (BF, FF, NF, WF) and every confusion matrix / probability vector.
HEURISTICS = ("BF", "FF", "NF", "WF")

DEFAULT_CAPACITY = 150
DEFAULT_K = 2.0

_FILLS = {
    "FF": _kernels.first_fit_fills,
    "BF": _kernels.best_fit_fills,
    "WF": _kernels.worst_fit_fills,
    "NF": _kernels.next_fit_fills,
}


class PackingError(ValueError):
    """Raised on contract violations (empty packings, bound inversions)."""


@dataclass(frozen=True)
class Instance:
    """A fixed-order sequence of item weights plus a bin capacity."""

    id: str
    capacity: int
    items: tuple[int, ...]

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        object.__setattr__(self, "items", tuple(int(w) for w in self.items))
        if self.items and (min(self.items) < 1 or max(self.items) > self.capacity):
            bad = next(w for w in self.items if not 1 <= w <= self.capacity)
            raise ValueError(
                f"item weight {bad} outside [1, {self.capacity}] in instance {self.id!r}"
            )

    @property
    def n(self) -> int:
        return len(self.items)

    def total_weight(self) -> int:
        return sum(self.items)


@dataclass(frozen=True)
class PackingResult:
    """Ordered bin fill totals produced by one heuristic on one instance."""

    heuristic: str
    capacity: int
    fills: tuple[int, ...]

    @property
    def bins_used(self) -> int:
        return len(self.fills)


def pack(instance: Instance, heuristic: str) -> PackingResult:
    """Pack ``instance`` with one heuristic; deterministic and pure."""
    if heuristic not in HEURISTICS:
        raise ValueError(f"unknown heuristic {heuristic!r}, expected one of {HEURISTICS}")
    fills = _FILLS[heuristic](instance.items, instance.capacity)
    return PackingResult(heuristic=heuristic, capacity=instance.capacity,
                         fills=tuple(int(f) for f in fills))


def lower_bound(instance: Instance) -> int:
    """Lower bound on bins: ceil(total weight / capacity). Upper bound is n."""
    return -(-instance.total_weight() // instance.capacity)


def fitness_of_fills(fills, capacity: int, k: float = DEFAULT_K) -> float:
    """Mean of (fill/C)^k over a fill sequence (the single canonical
    implementation, so stored and recomputed values agree bit for bit)."""
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    a = np.asarray(fills, dtype=np.float64)
    if a.size == 0:
        raise PackingError("empty packing has undefined fitness")
    a = a / capacity
    return float(np.mean(a ** k))


def falkenauer_fitness(result: PackingResult, capacity: int | None = None,
                       k: float = DEFAULT_K) -> float:
    """Mean of (fill/C)^k over used bins; 1.0 iff every bin is exactly full."""
    if capacity is None:
        capacity = result.capacity
    return fitness_of_fills(result.fills, capacity, k)


def normalized_excess_bins(bins_used: int, lower: int) -> float:
    """Excess over the lower bound, as a fraction of the bound: (b' - b)/b."""
    if lower < 1:
        raise ValueError(f"lower bound must be >= 1, got {lower}")
    if bins_used < lower:
        raise PackingError(
            f"bins_used={bins_used} below lower bound {lower}; packing is inconsistent"
        )
    return (bins_used - lower) / lower


def evaluate_all(instance: Instance, k: float = DEFAULT_K) -> dict[str, float]:
    """Falkenauer fitness of all four heuristics, keyed by heuristic name."""
    arr = np.asarray(instance.items, dtype=np.int64)
    return {
        h: fitness_of_fills(_FILLS[h](arr, instance.capacity), instance.capacity, k)
        for h in HEURISTICS
    }


def bins_all(instance: Instance) -> dict[str, int]:
    """Bins used by all four heuristics, keyed by heuristic name."""
    arr = np.asarray(instance.items, dtype=np.int64)
    return {h: len(_FILLS[h](arr, instance.capacity)) for h in HEURISTICS}


def optimal_bins_exact(instance: Instance, limit: int = 15) -> int:
    """Exact minimum bin count by complete search; only for small instances.

    Branch-and-bound over item placements with capacity-feasibility pruning
    and identical-fill symmetry breaking.  Intended as a test oracle for the
    worst-case-ratio properties of the heuristics.
    """
    n = instance.n
    if n > limit:
        raise ValueError(f"exact search limited to n <= {limit}, got n = {n}")
    if n == 0:
        return 0
    capacity = instance.capacity
    # Descending order tightens pruning; the optimum is order-independent.
    items = sorted(instance.items, reverse=True)
    lb = lower_bound(instance)
    best = n  # one bin per item always works

    fills: list[int] = []

    def search(idx: int) -> None:
        nonlocal best
        if len(fills) >= best:
            return
        if idx == n:
            best = len(fills)
            return
        # Bound: even perfect packing of the rest cannot beat `best`.
        remaining = sum(items[idx:])
        slack = sum(capacity - f for f in fills)
        extra = max(0, -(-(remaining - slack) // capacity))
        if len(fills) + extra >= best:
            return
        w = items[idx]
        seen = set()
        for i, f in enumerate(fills):
            if f + w <= capacity and f not in seen:
                seen.add(f)
                fills[i] = f + w
                search(idx + 1)
                fills[i] = f
                if best == lb:
                    return
        if len(fills) + 1 < best:
            fills.append(w)
            search(idx + 1)
            fills.pop()

    search(0)
    return best
