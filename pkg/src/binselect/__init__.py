"""binselect: algorithm-selection workbench for online 1D bin packing."""

from .packing import (
    BACKEND,
    HEURISTICS,
    Instance,
    PackingResult,
    evaluate_all,
    falkenauer_fitness,
    lower_bound,
    normalized_excess_bins,
    optimal_bins_exact,
    pack,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "HEURISTICS",
    "Instance",
    "PackingResult",
    "evaluate_all",
    "falkenauer_fitness",
    "lower_bound",
    "normalized_excess_bins",
    "optimal_bins_exact",
    "pack",
    "__version__",
]
