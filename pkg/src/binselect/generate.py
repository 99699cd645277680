"""Instance generators: random sampling, threshold-structured filtering, and
an evolutionary search for instances that separate one heuristic from the
rest.  All generation is driven by explicit seeds; instance ``i`` of a run
draws from an independent stream derived from ``(base_seed, i)`` so output
never depends on generation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .packing import _FILLS, DEFAULT_K, HEURISTICS, Instance, evaluate_all, fitness_of_fills

DISTRIBUTIONS = ("uniform", "gaussian")

#: Benchmark generator presets (capacity 150 throughout).
PRESETS = {
    "ds1": dict(n_items=120, lower=40, upper=60, distribution="gaussian", capacity=150),
    "ds2": dict(n_items=120, lower=20, upper=100, distribution="uniform", capacity=150),
    "ds3": dict(n_items=250, lower=40, upper=60, distribution="gaussian", capacity=150),
    "ds4": dict(n_items=250, lower=20, upper=100, distribution="uniform", capacity=150),
}


class GenerationError(RuntimeError):
    """Raised when structured generation cannot reach the requested counts."""


@dataclass(frozen=True)
class GeneratorSpec:
    n_items: int
    lower: int
    upper: int
    distribution: str = "uniform"
    capacity: int = 150

    def __post_init__(self):
        if self.n_items < 1:
            raise ValueError("n_items must be >= 1")
        if not 1 <= self.lower <= self.upper <= self.capacity:
            raise ValueError(
                f"need 1 <= lower <= upper <= capacity, got "
                f"[{self.lower}, {self.upper}] with capacity {self.capacity}"
            )
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"distribution must be one of {DISTRIBUTIONS}")

    @classmethod
    def preset(cls, name: str) -> "GeneratorSpec":
        key = name.lower()
        if key not in PRESETS:
            raise ValueError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
        return cls(**PRESETS[key])

    def to_dict(self) -> dict:
        return dict(n_items=self.n_items, lower=self.lower, upper=self.upper,
                    distribution=self.distribution, capacity=self.capacity)


@dataclass(frozen=True)
class Label:
    """Best heuristic(s) for an instance plus the winning margin.

    ``winners`` holds every heuristic tied at the best fitness, in canonical
    order; ``margin`` is best fitness minus the second-best distinct fitness
    (0 exactly when there is a tie for first place).
    """

    winners: tuple[str, ...]
    margin: float

    def __post_init__(self):
        if not self.winners:
            raise ValueError("tie-set must be non-empty")

    @property
    def winner(self) -> str:
        return self.winners[0]

    def is_correct(self, prediction: str) -> bool:
        return prediction in self.winners


@dataclass(frozen=True)
class LabeledInstance:
    instance: Instance
    fitness: dict[str, float]
    label: Label


@dataclass
class Dataset:
    records: list[LabeledInstance]
    meta: dict = field(default_factory=dict)
    #: heuristics considered as solvers for labels / SBS / VBS
    pool: tuple[str, ...] = HEURISTICS

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def capacity(self) -> int:
        return self.records[0].instance.capacity


@dataclass(frozen=True)
class EAConfig:
    target: str
    population_size: int = 50
    generations: int = 200
    mutation_rate: float | None = None  # default 2/n per gene
    swap_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.target not in HEURISTICS:
            raise ValueError(f"target must be one of {HEURISTICS}")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.mutation_rate is not None and not 0 < self.mutation_rate <= 1:
            raise ValueError("mutation_rate must be in (0, 1]")


def stream_rng(base_seed: int, *path: int) -> np.random.Generator:
    """Independent generator for sub-stream ``path`` of ``base_seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), *map(int, path)]))


def _draw_items(rng: np.random.Generator, spec: GeneratorSpec, n: int) -> np.ndarray:
    if spec.distribution == "uniform":
        return rng.integers(spec.lower, spec.upper + 1, size=n).astype(np.int64)
    # gaussian: mean at the midpoint, std covering the range at ~3 sigma,
    # resampled per item until within bounds
    mean = (spec.lower + spec.upper) / 2.0
    std = (spec.upper - spec.lower) / 6.0
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        while True:
            w = int(round(rng.normal(mean, std))) if std > 0 else int(round(mean))
            if spec.lower <= w <= spec.upper:
                out[i] = w
                break
    return out


def sample_instance(spec: GeneratorSpec, seed, instance_id: str | None = None) -> Instance:
    """Draw one instance from ``spec``; deterministic given the seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    items = _draw_items(rng, spec, spec.n_items)
    if instance_id is None:
        instance_id = f"s{seed}" if isinstance(seed, int) else "s?"
    return Instance(id=instance_id, capacity=spec.capacity, items=tuple(items.tolist()))


def make_label(fitness: dict[str, float], pool: tuple[str, ...] = HEURISTICS) -> Label:
    """Argmax label over ``pool`` with exact-equality ties."""
    values = [fitness[h] for h in pool]
    best = max(values)
    winners = tuple(h for h in pool if fitness[h] == best)
    worse = [v for v in values if v != best]
    margin = best - max(worse) if worse else 0.0
    return Label(winners=winners, margin=margin)


def label_instance(instance: Instance, k: float = DEFAULT_K,
                   pool: tuple[str, ...] = HEURISTICS) -> tuple[dict[str, float], Label]:
    """Evaluate all heuristics and label by the best Falkenauer fitness."""
    fitness = evaluate_all(instance, k)
    return fitness, make_label(fitness, pool)


def generate_random(spec: GeneratorSpec, count: int, seed: int,
                    k: float = DEFAULT_K, id_prefix: str = "r") -> Dataset:
    """``count`` labeled instances sampled independently from ``spec``."""
    records = []
    for i in range(count):
        inst = sample_instance(spec, stream_rng(seed, i), f"{id_prefix}{seed}-{i:06d}")
        fitness, label = label_instance(inst, k)
        records.append(LabeledInstance(inst, fitness, label))
    meta = dict(kind="random", generator=spec.to_dict(), count=count, seed=seed, k=k)
    return Dataset(records, meta)


def generate_structured(spec: GeneratorSpec, tau: float, count_bf: int, count_ff: int,
                        seed: int, k: float = DEFAULT_K,
                        acceptance_floor: float = 1e-4,
                        floor_window: int = 20_000) -> Dataset:
    """Rejection-sample instances whose BF/FF fitness gap is at least ``tau``.

    Only BF and FF act as candidate solvers: an instance joins the BF class
    when ``BF - FF >= tau`` (strictly positive gap), the FF class when
    ``FF - BF >= tau``, and is discarded otherwise -- at ``tau = 0`` exact
    ties belong to neither class.  Sampling aborts with a diagnostic when the
    useful-acceptance rate drops below ``acceptance_floor``.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    pool = ("BF", "FF")
    bf_fills = _FILLS["BF"]
    ff_fills = _FILLS["FF"]
    taken_bf: list[LabeledInstance] = []
    taken_ff: list[LabeledInstance] = []
    drawn = 0
    i = 0
    while len(taken_bf) < count_bf or len(taken_ff) < count_ff:
        # cheap reject path: only the BF/FF pair is packed until acceptance
        items = _draw_items(stream_rng(seed, i), spec, spec.n_items)
        index = i
        i += 1
        drawn += 1
        gap = (fitness_of_fills(bf_fills(items, spec.capacity), spec.capacity, k)
               - fitness_of_fills(ff_fills(items, spec.capacity), spec.capacity, k))
        accept_bf = gap > 0 and gap >= tau and len(taken_bf) < count_bf
        accept_ff = gap < 0 and -gap >= tau and len(taken_ff) < count_ff
        if accept_bf or accept_ff:
            inst = Instance(id=f"t{seed}-{index:06d}", capacity=spec.capacity,
                            items=tuple(items.tolist()))
            fitness = evaluate_all(inst, k)
            if accept_bf:
                taken_bf.append(LabeledInstance(inst, fitness, Label(("BF",), gap)))
            else:
                taken_ff.append(LabeledInstance(inst, fitness, Label(("FF",), -gap)))
        if drawn % floor_window == 0:
            rate = (len(taken_bf) + len(taken_ff)) / drawn
            if rate < acceptance_floor:
                raise GenerationError(
                    f"acceptance rate {rate:.2e} below floor {acceptance_floor:.0e} "
                    f"after {drawn} draws (tau={tau}, got {len(taken_bf)}/{count_bf} BF, "
                    f"{len(taken_ff)}/{count_ff} FF); tau is too large for this distribution"
                )
    records = taken_bf + taken_ff
    meta = dict(kind="structured", generator=spec.to_dict(), tau=tau, seed=seed, k=k,
                count_bf=count_bf, count_ff=count_ff, draws=drawn)
    return Dataset(records, meta, pool=pool)


def _ea_fitness(items: np.ndarray, spec: GeneratorSpec, target: str, k: float) -> float:
    inst = Instance(id="ea", capacity=spec.capacity, items=tuple(items.tolist()))
    fit = evaluate_all(inst, k)
    return fit[target] - max(v for h, v in fit.items() if h != target)


def _evolve(spec: GeneratorSpec, config: EAConfig, rng: np.random.Generator,
            k: float) -> tuple[np.ndarray, float, list[float]]:
    n = spec.n_items
    mut = config.mutation_rate if config.mutation_rate is not None else 2.0 / n
    pop = [_draw_items(rng, spec, n) for _ in range(config.population_size)]
    scores = [_ea_fitness(g, spec, config.target, k) for g in pop]
    best_trace = [max(scores)]

    def mutate(genome: np.ndarray) -> np.ndarray:
        child = genome.copy()
        mask = rng.random(n) < mut
        if mask.any():
            child[mask] = _draw_items(rng, spec, int(mask.sum()))
        if rng.random() < config.swap_prob and n >= 2:
            a, b = rng.integers(0, n, size=2)
            child[a], child[b] = child[b], child[a]
        return child

    for _ in range(config.generations):
        children = [mutate(pop[rng.integers(0, config.population_size)])
                    for _ in range(config.population_size)]
        child_scores = [_ea_fitness(g, spec, config.target, k) for g in children]
        merged_scores = scores + child_scores
        merged_pop = pop + children
        # elitist truncation; stable sort keeps earlier (parent) genomes on ties
        order = sorted(range(len(merged_scores)), key=lambda j: -merged_scores[j])
        keep = order[: config.population_size]
        pop = [merged_pop[j] for j in keep]
        scores = [merged_scores[j] for j in keep]
        best_trace.append(max(scores))

    best = int(np.argmax(scores))
    return pop[best], scores[best], best_trace


def evolve_instance(spec: GeneratorSpec, config: EAConfig, k: float = DEFAULT_K,
                    return_trace: bool = False):
    """Search for an instance maximizing the target heuristic's fitness lead.

    (mu+lambda) evolution over fixed-length item sequences: per-gene resample
    mutation plus an occasional position swap (order matters to the packing
    rules), elitist truncation selection.  Returns the best genome found and
    its fitness gap; a non-positive gap is a valid outcome.  With
    ``return_trace`` the per-generation best gaps are appended to the result.
    """
    genome, gap, trace = _evolve(spec, config, stream_rng(config.seed, 0), k)
    inst = Instance(id=f"e{config.seed}-{config.target}", capacity=spec.capacity,
                    items=tuple(genome.tolist()))
    if return_trace:
        return inst, gap, trace
    return inst, gap


def generate_evolved(spec: GeneratorSpec, target: str, count: int, seed: int,
                     population_size: int = 50, generations: int = 200,
                     mutation_rate: float | None = None,
                     k: float = DEFAULT_K) -> Dataset:
    """``count`` instances evolved toward ``target``, labeled honestly.

    Each instance runs its own EA on the stream ``(seed, i)``; the stored
    label comes from re-evaluating the evolved instance, so a failed search
    (gap <= 0) yields an instance labeled with whatever actually won.
    """
    cfg = EAConfig(target=target, population_size=population_size,
                   generations=generations, mutation_rate=mutation_rate, seed=seed)
    records = []
    for i in range(count):
        genome, _, _ = _evolve(spec, cfg, stream_rng(seed, i), k)
        inst = Instance(id=f"e{seed}-{target}-{i:05d}", capacity=spec.capacity,
                        items=tuple(genome.tolist()))
        fitness, label = label_instance(inst, k)
        records.append(LabeledInstance(inst, fitness, label))
    meta = dict(kind="evolved", generator=spec.to_dict(), target=target, count=count,
                seed=seed, k=k, population_size=population_size, generations=generations)
    return Dataset(records, meta)


def merge_datasets(datasets: list[Dataset], take_per_class: int | None = None,
                   seed: int = 0) -> Dataset:
    """Mix datasets, optionally sampling ``take_per_class`` instances per
    label class from each source.  Ids are prefixed per source to stay unique."""
    records = []
    for s, ds in enumerate(datasets):
        if take_per_class is None:
            chosen = list(ds.records)
        else:
            by_class: dict[tuple, list] = {}
            for rec in ds.records:
                by_class.setdefault(rec.label.winners, []).append(rec)
            rng = stream_rng(seed, s)
            chosen = []
            for key in sorted(by_class):
                group = by_class[key]
                if len(group) < take_per_class:
                    raise GenerationError(
                        f"source {s}: class {key} has {len(group)} instances, "
                        f"need {take_per_class}"
                    )
                idx = rng.choice(len(group), size=take_per_class, replace=False)
                chosen.extend(group[j] for j in sorted(idx.tolist()))
        for rec in chosen:
            inst = rec.instance
            records.append(LabeledInstance(
                Instance(id=f"m{s}-{inst.id}", capacity=inst.capacity, items=inst.items),
                rec.fitness, rec.label))
    pools = {ds.pool for ds in datasets}
    pool = HEURISTICS if len(pools) != 1 else pools.pop()
    meta = dict(kind="merged", sources=[ds.meta.get("kind", "?") for ds in datasets],
                take_per_class=take_per_class, seed=seed)
    return Dataset(records, meta, pool=pool)
