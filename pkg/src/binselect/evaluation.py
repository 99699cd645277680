"""Selector evaluation against the single-best and virtual-best solvers,
dataset splitting, and the nonparametric significance machinery.

Per-instance distances to the oracle:

* ``d_p`` -- virtual-best Falkenauer fitness minus the predicted heuristic's
  fitness (>= 0; 0 means the prediction matched the oracle's quality).
* ``d_b`` -- bins used by the predicted heuristic minus the fewest bins any
  pooled heuristic uses (>= 0).  Its cumulative curve is reported over
  ``d_b / vbs_bins`` so the fraction-of-oracle thresholds are comparable
  across instance sizes.

The oracle ("virtual best") is evaluated per metric: best fitness for the
fitness distance, fewest bins for the bin distance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .generate import Dataset, stream_rng
from .packing import HEURISTICS, lower_bound, pack

#: reporting marks always present on cumulative-distance curves
CURVE_MARKS = (0.05, 0.10, 0.20, 0.30, 0.40)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # 4x4, rows true / cols predicted, canonical order
    total_bins_selector: int
    total_bins_sbs: int
    total_bins_vbs: int
    total_fitness: dict[str, float]  # selector / sbs / vbs
    dp_curve: list[tuple[float, float]]
    db_curve: list[tuple[float, float]]
    p_values: dict[str, float]  # Bonferroni-adjusted
    p_values_raw: dict[str, float] = field(default_factory=dict)
    sbs: str = ""
    per_instance: list[dict] = field(default_factory=list)


def _strata(dataset: Dataset) -> dict[tuple, list[int]]:
    groups: dict[tuple, list[int]] = {}
    for i, rec in enumerate(dataset.records):
        groups.setdefault(rec.label.winners, []).append(i)
    return groups


def _subset(dataset: Dataset, indices, tag: str) -> Dataset:
    meta = dict(dataset.meta)
    meta["split"] = tag
    return Dataset([dataset.records[i] for i in indices], meta, dataset.pool)


def split_dataset(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Disjoint, exhaustive train/test split; stratified keeps per-class
    proportions (each class needs >= 2 members)."""
    rng = stream_rng(spec.seed, 0x59117)
    if not spec.stratified:
        order = rng.permutation(len(dataset)).tolist()
        cut = int(round(spec.train_fraction * len(dataset)))
        cut = min(max(cut, 1), len(dataset) - 1)
        return _subset(dataset, order[:cut], "train"), _subset(dataset, order[cut:], "test")
    train_idx: list[int] = []
    test_idx: list[int] = []
    strata = _strata(dataset)
    for key in sorted(strata):
        idx = strata[key]
        if len(idx) < 2:
            raise ValueError(f"class {key} has {len(idx)} member(s); cannot stratify")
        perm = rng.permutation(len(idx))
        cut = int(round(spec.train_fraction * len(idx)))
        cut = min(max(cut, 1), len(idx) - 1)
        train_idx.extend(idx[j] for j in perm[:cut])
        test_idx.extend(idx[j] for j in perm[cut:])
    return _subset(dataset, sorted(train_idx), "train"), _subset(dataset, sorted(test_idx), "test")


def balanced_split(dataset: Dataset, train_per_class: int, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Exactly ``train_per_class`` instances of every class go to train; the
    remainder forms the test set (which keeps the original class imbalance)."""
    rng = stream_rng(seed, 0xBA7A)
    train_idx: list[int] = []
    test_idx: list[int] = []
    strata = _strata(dataset)
    for key in sorted(strata):
        idx = strata[key]
        if len(idx) <= train_per_class:
            raise ValueError(
                f"class {key} has {len(idx)} members; need more than {train_per_class}"
            )
        perm = rng.permutation(len(idx))
        train_idx.extend(idx[j] for j in perm[:train_per_class])
        test_idx.extend(idx[j] for j in perm[train_per_class:])
    return _subset(dataset, sorted(train_idx), "train"), _subset(dataset, sorted(test_idx), "test")


def kfold(dataset: Dataset, k: int, seed: int = 0) -> list[tuple[Dataset, Dataset]]:
    """Stratified k-fold; every instance validates exactly once."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(dataset) < k:
        raise ValueError(f"dataset of {len(dataset)} cannot be split into {k} folds")
    rng = stream_rng(seed, 0xF01D)
    assignment = np.empty(len(dataset), dtype=np.int64)
    strata = _strata(dataset)
    for key in sorted(strata):
        idx = strata[key]
        if len(idx) < k:
            raise ValueError(f"class {key} has {len(idx)} members, fewer than k={k}")
        perm = rng.permutation(len(idx))
        for pos, j in enumerate(perm):
            assignment[idx[j]] = pos % k
    folds = []
    for f in range(k):
        val = [i for i in range(len(dataset)) if assignment[i] == f]
        train = [i for i in range(len(dataset)) if assignment[i] != f]
        folds.append((_subset(dataset, train, f"fold{f}-train"),
                      _subset(dataset, val, f"fold{f}-val")))
    return folds


def single_best_solver(dataset: Dataset) -> str:
    """Pooled heuristic with the highest total Falkenauer fitness."""
    totals = {h: sum(rec.fitness[h] for rec in dataset.records) for h in dataset.pool}
    best = max(totals.values())
    return next(h for h in dataset.pool if totals[h] == best)


def _curve(values: np.ndarray) -> list[tuple[float, float]]:
    thresholds = sorted(set(values.tolist()) | set(CURVE_MARKS))
    n = len(values)
    return [(float(t), float((values <= t).sum()) / n) for t in thresholds]


def evaluate_selector(predictions, dataset: Dataset, alpha: float = 0.05) -> EvalReport:
    """Score per-instance predictions against the dataset's labels and the
    single-best / virtual-best references.

    A prediction inside the label's tie-set counts as correct (diagonal of
    the confusion matrix); otherwise the row is the tie-set's canonical-first
    winner.  The Wilcoxon pairs cover selector vs SBS and selector vs VBS on
    fitness and on the normalized bin excess, Bonferroni-adjusted together.
    """
    predictions = list(predictions)
    if len(predictions) != len(dataset):
        raise ValueError(
            f"{len(predictions)} predictions for {len(dataset)} instances")
    pool = dataset.pool
    sbs = single_best_solver(dataset)
    n = len(dataset)

    confusion = np.zeros((len(HEURISTICS), len(HEURISTICS)), dtype=np.int64)
    correct = 0
    dp = np.empty(n)
    db = np.empty(n)
    db_rel = np.empty(n)
    fit_sel = np.empty(n)
    fit_sbs = np.empty(n)
    fit_vbs = np.empty(n)
    neb_sel = np.empty(n)
    neb_sbs = np.empty(n)
    neb_vbs = np.empty(n)
    bins_sel_total = bins_sbs_total = bins_vbs_total = 0
    rows = []

    for i, (pred, rec) in enumerate(zip(predictions, dataset.records)):
        if pred not in HEURISTICS:
            raise ValueError(f"unknown predicted heuristic {pred!r}")
        label = rec.label
        ok = label.is_correct(pred)
        correct += ok
        true_h = pred if ok else label.winner
        confusion[HEURISTICS.index(true_h), HEURISTICS.index(pred)] += 1

        fitness = rec.fitness
        vbs_fit = max(fitness[h] for h in pool)
        bins = {h: pack(rec.instance, h).bins_used for h in set(pool) | {pred, sbs}}
        vbs_bins = min(bins[h] for h in pool)
        lb = lower_bound(rec.instance)

        fit_sel[i] = fitness[pred]
        fit_sbs[i] = fitness[sbs]
        fit_vbs[i] = vbs_fit
        dp[i] = vbs_fit - fitness[pred]
        db[i] = bins[pred] - vbs_bins
        db_rel[i] = db[i] / vbs_bins
        neb_sel[i] = (bins[pred] - lb) / lb
        neb_sbs[i] = (bins[sbs] - lb) / lb
        neb_vbs[i] = (vbs_bins - lb) / lb
        bins_sel_total += bins[pred]
        bins_sbs_total += bins[sbs]
        bins_vbs_total += vbs_bins
        rows.append(dict(id=rec.instance.id, label="|".join(label.winners),
                         prediction=pred, correct=int(ok),
                         fitness_pred=fitness[pred], fitness_vbs=vbs_fit,
                         d_p=dp[i], bins_pred=bins[pred], bins_vbs=vbs_bins,
                         d_b=int(db[i])))

    raw = {
        "fitness:selector_vs_sbs": wilcoxon_signed_rank(fit_sel, fit_sbs)[1],
        "fitness:selector_vs_vbs": wilcoxon_signed_rank(fit_sel, fit_vbs)[1],
        "bins:selector_vs_sbs": wilcoxon_signed_rank(neb_sel, neb_sbs)[1],
        "bins:selector_vs_vbs": wilcoxon_signed_rank(neb_sel, neb_vbs)[1],
    }
    adjusted = dict(zip(raw, bonferroni(list(raw.values()))))

    return EvalReport(
        accuracy=correct / n,
        confusion=confusion,
        total_bins_selector=bins_sel_total,
        total_bins_sbs=bins_sbs_total,
        total_bins_vbs=bins_vbs_total,
        total_fitness=dict(selector=float(fit_sel.sum()), sbs=float(fit_sbs.sum()),
                           vbs=float(fit_vbs.sum())),
        dp_curve=_curve(dp),
        db_curve=_curve(db_rel),
        p_values=adjusted,
        p_values_raw=raw,
        sbs=sbs,
        per_instance=rows,
    )


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank and Bonferroni


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with tied magnitudes sharing their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks


def _exact_two_sided_p(ranks: np.ndarray, w_min: float) -> float:
    """Exact tail probability over all sign assignments of the given ranks.

    Average ranks are multiples of 1/2, so doubling them yields integers and
    the null distribution of 2*W+ follows from subset-sum counting.
    """
    r2 = np.rint(ranks * 2.0).astype(np.int64)
    total = int(r2.sum())
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in r2.tolist():
        for s in range(total, r - 1, -1):
            if counts[s - r]:
                counts[s] += counts[s - r]
    w2 = int(round(w_min * 2.0))
    n_low = sum(counts[: w2 + 1])
    n_high = sum(counts[total - w2:])
    p = (n_low + n_high) / (1 << len(ranks))
    return min(1.0, p)


def _normal_two_sided_p(ranks: np.ndarray, w_min: float) -> float:
    """Normal approximation with continuity and tie corrections."""
    m = len(ranks)
    mu = m * (m + 1) / 4.0
    var = m * (m + 1) * (2 * m + 1) / 24.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= float((tie_counts ** 3 - tie_counts).sum()) / 48.0
    if var <= 0:
        return 1.0
    z = (w_min - mu + 0.5) / math.sqrt(var)
    return min(1.0, 2.0 * 0.5 * math.erfc(-z / math.sqrt(2.0)))


def wilcoxon_signed_rank(x, y, exact_limit: int = 25) -> tuple[float, float]:
    """Paired two-sided Wilcoxon signed-rank test.

    Zero differences are discarded (classical convention); tied magnitudes
    get average ranks.  The statistic is ``W = min(W+, W-)``.  The p-value is
    exact (all 2^m sign assignments) for m <= ``exact_limit`` pairs and a
    continuity-corrected normal approximation above.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 1:
        raise ValueError("x and y must be equal-length 1-D sequences")
    d = x - y
    d = d[d != 0]
    m = len(d)
    if m == 0:
        warnings.warn("all paired differences are zero; Wilcoxon test is degenerate",
                      RuntimeWarning, stacklevel=2)
        return 0.0, 1.0
    ranks = _average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if m <= exact_limit:
        p = _exact_two_sided_p(ranks, w)
    else:
        p = _normal_two_sided_p(ranks, w)
    return w, p


def bonferroni(p_values) -> list[float]:
    """Multiply each p by the number of comparisons, clamped to 1."""
    ps = list(p_values)
    for p in ps:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p-value {p} outside [0, 1]")
    return [min(1.0, p * len(ps)) for p in ps]
