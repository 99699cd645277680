"""Command-line workbench: generate -> label -> train -> evaluate -> report.

Exit codes: 0 success, 2 usage error (argparse), 3 data/generation error,
4 numeric divergence during training.  Every command takes explicit seeds;
nothing reads wall-clock entropy, so any command rerun with identical flags
produces byte-identical output files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .evaluation import balanced_split, bonferroni, evaluate_selector, kfold, wilcoxon_signed_rank
from .features import FEATURE_NAMES, feature_matrix
from .generate import (
    Dataset,
    GenerationError,
    GeneratorSpec,
    LabeledInstance,
    generate_evolved,
    generate_random,
    generate_structured,
    label_instance,
    merge_datasets,
)
from .packing import HEURISTICS
from .recurrent import DivergenceError, RecurrentNetwork, TrainConfig, init_network, predict, train_recurrent
from .tabular import KINDS, TabularModelSpec, fit_tabular, predict_batch

EXIT_DATA = 3
EXIT_DIVERGENCE = 4

RNN_SELECTORS = ("gru", "lstm")


def _spec_from_args(args) -> GeneratorSpec:
    if args.preset:
        return GeneratorSpec.preset(args.preset)
    missing = [f for f in ("items", "lower", "upper") if getattr(args, f) is None]
    if missing:
        raise ValueError(f"either --preset or --items/--lower/--upper required "
                         f"(missing {', '.join('--' + m for m in missing)})")
    return GeneratorSpec(n_items=args.items, lower=args.lower, upper=args.upper,
                         distribution=args.dist, capacity=args.capacity)


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted("ds1 ds2 ds3 ds4".split()),
                   help="named generator preset")
    p.add_argument("--capacity", type=int, default=150)
    p.add_argument("--items", type=int, help="items per instance")
    p.add_argument("--lower", type=int, help="smallest item weight")
    p.add_argument("--upper", type=int, help="largest item weight")
    p.add_argument("--dist", choices=["uniform", "gaussian"], default="uniform")


def _targets(dataset: Dataset) -> list[str]:
    return [rec.label.winner for rec in dataset.records]


# ---------------------------------------------------------------------------
# generate


def cmd_generate_random(args) -> int:
    spec = _spec_from_args(args)
    ds = generate_random(spec, args.count, args.seed, k=args.k)
    io.write_dataset(ds, args.out)
    print(f"wrote {len(ds)} random instances to {args.out}")
    return 0


def cmd_generate_structured(args) -> int:
    spec = _spec_from_args(args)
    ds = generate_structured(spec, args.tau, args.count_bf, args.count_ff,
                             args.seed, k=args.k,
                             acceptance_floor=args.acceptance_floor)
    io.write_dataset(ds, args.out)
    print(f"wrote {len(ds)} structured instances (tau={args.tau}, "
          f"{ds.meta['draws']} draws) to {args.out}")
    return 0


def cmd_generate_evolve(args) -> int:
    spec = _spec_from_args(args)
    ds = generate_evolved(spec, args.target, args.count, args.seed,
                          population_size=args.population,
                          generations=args.generations,
                          mutation_rate=args.mutation_rate, k=args.k)
    io.write_dataset(ds, args.out)
    hits = sum(rec.label.winners == (args.target,) for rec in ds.records)
    print(f"wrote {len(ds)} evolved instances to {args.out} "
          f"({hits} uniquely won by {args.target})")
    return 0


def cmd_generate_merge(args) -> int:
    sources = [io.read_dataset(p) for p in args.inputs]
    ds = merge_datasets(sources, take_per_class=args.take_per_class, seed=args.seed)
    io.write_dataset(ds, args.out)
    print(f"wrote {len(ds)} merged instances to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# label / features


def cmd_label(args) -> int:
    ds = io.read_dataset(args.dataset, require_labels=False, verify=args.verify)
    relabeled = []
    for rec in ds.records:
        fitness, label = label_instance(rec.instance, k=args.k, pool=ds.pool)
        relabeled.append(LabeledInstance(rec.instance, fitness, label))
    out = Dataset(relabeled, dict(ds.meta, k=args.k), ds.pool)
    io.write_dataset(out, args.out)
    print(f"labeled {len(out)} instances -> {args.out}")
    return 0


def cmd_features(args) -> int:
    ds = io.read_dataset(args.dataset, require_labels=False)
    X = feature_matrix([rec.instance for rec in ds.records])
    rows = []
    for rec, feats in zip(ds.records, X):
        label = "|".join(rec.label.winners) if rec.label else ""
        rows.append([rec.instance.id, *[repr(float(v)) for v in feats], label])
    io.write_csv(args.out, ["id", *FEATURE_NAMES, "label"], rows)
    print(f"wrote {len(rows)} feature rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# train


def _default_epochs(dataset: Dataset) -> int:
    longest = max(rec.instance.n for rec in dataset.records)
    return 300 if longest <= 120 else 700


def _train_rnn_once(dataset: Dataset, args, seed: int) -> tuple[RecurrentNetwork, list]:
    hidden = tuple(int(u) for u in args.units.split(","))
    net = init_network(args.cell, hidden=hidden, seed=seed)
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                         learning_rate=args.lr, seed=seed)
    return train_recurrent(net, [rec.instance for rec in dataset.records],
                           _targets(dataset), config)


def _cross_validate(dataset: Dataset, args, fit_fn) -> dict | None:
    if args.folds < 2:
        return None
    accs = []
    for f, (fold_train, fold_val) in enumerate(kfold(dataset, args.folds, args.seed)):
        preds = fit_fn(fold_train, seed_offset=f + 1)(fold_val)
        acc = float(np.mean([rec.label.is_correct(p)
                             for rec, p in zip(fold_val.records, preds)]))
        accs.append(acc)
        print(f"fold {f}: validation accuracy {acc:.2%}")
    mean, std = float(np.mean(accs)), float(np.std(accs))
    print(f"validation accuracy: {mean:.2%} (+/- {std:.2%})")
    return {"folds": args.folds, "mean_accuracy": mean, "std_accuracy": std,
            "per_fold": accs}


def cmd_train_rnn(args) -> int:
    dataset = io.read_dataset(args.dataset)
    if args.epochs is None:
        args.epochs = _default_epochs(dataset)

    def fit_fn(train_ds, seed_offset=0):
        net, _ = _train_rnn_once(train_ds, args, args.seed + seed_offset)

        def predictor(val_ds):
            return predict(net, [rec.instance for rec in val_ds.records])

        return predictor

    cv = _cross_validate(dataset, args, fit_fn)
    net, history = _train_rnn_once(dataset, args, args.seed)
    capacities = {rec.instance.capacity for rec in dataset.records}
    meta = {"dataset_meta": dataset.meta, "seed": args.seed, "epochs": args.epochs,
            "capacity": capacities.pop() if len(capacities) == 1 else None,
            "pool": list(dataset.pool)}
    if cv:
        meta["cross_validation"] = cv
    io.save_model(net, args.out, extra_meta=meta)
    io.write_history(history, str(args.out) + ".history.csv")
    print(f"final training accuracy {history[-1]['train_acc']:.2%} "
          f"after {args.epochs} epochs; snapshot -> {args.out}")
    return 0


def _parse_hyper(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"--hyper expects key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        try:
            value = int(raw)
        except ValueError:
            try:
                value = float(raw)
            except ValueError:
                value = raw
        out[key] = value
    return out


def cmd_train_tabular(args) -> int:
    dataset = io.read_dataset(args.dataset)
    spec = TabularModelSpec(args.kind, _parse_hyper(args.hyper))

    def fit_fn(train_ds, seed_offset=0):
        X = feature_matrix([rec.instance for rec in train_ds.records])
        model = fit_tabular(spec, X, _targets(train_ds), seed=args.seed + seed_offset)

        def predictor(val_ds):
            return predict_batch(model, feature_matrix(
                [rec.instance for rec in val_ds.records]))

        return predictor

    cv = _cross_validate(dataset, args, fit_fn)
    X = feature_matrix([rec.instance for rec in dataset.records])
    model = fit_tabular(spec, X, _targets(dataset), seed=args.seed)
    capacities = {rec.instance.capacity for rec in dataset.records}
    meta = {"dataset_meta": dataset.meta, "seed": args.seed,
            "capacity": capacities.pop() if len(capacities) == 1 else None,
            "pool": list(dataset.pool)}
    if cv:
        meta["cross_validation"] = cv
    io.save_model(model, args.out, extra_meta=meta)
    print(f"trained {args.kind} on {len(dataset)} instances; snapshot -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def _model_predictions(model, dataset: Dataset) -> list[str]:
    instances = [rec.instance for rec in dataset.records]
    if isinstance(model, RecurrentNetwork):
        return predict(model, instances)
    return predict_batch(model, feature_matrix(instances))


def cmd_evaluate(args) -> int:
    model = io.load_model(args.model)
    meta = io.model_meta(args.model)
    dataset = io.read_dataset(args.dataset)
    capacities = {rec.instance.capacity for rec in dataset.records}
    ds_capacity = capacities.pop() if len(capacities) == 1 else None
    if meta.get("capacity") is not None and ds_capacity is not None \
            and meta["capacity"] != ds_capacity:
        raise io.DataFormatError(
            f"model was trained at capacity {meta['capacity']} but dataset "
            f"has capacity {ds_capacity}")
    report = evaluate_selector(_model_predictions(model, dataset), dataset)
    io.write_report(report, args.outdir)
    print(Path(args.outdir, "summary.txt").read_text(), end="")
    return 0


# ---------------------------------------------------------------------------
# sweep


def _train_selector(name: str, train_ds: Dataset, seed: int, epochs: int | None):
    if name in RNN_SELECTORS:
        n_epochs = epochs if epochs is not None else _default_epochs(train_ds)
        net = init_network(name, seed=seed)
        config = TrainConfig(epochs=n_epochs, seed=seed)
        trained, _ = train_recurrent(net, [rec.instance for rec in train_ds.records],
                                     _targets(train_ds), config)
        return trained
    spec = TabularModelSpec(name)
    X = feature_matrix([rec.instance for rec in train_ds.records])
    return fit_tabular(spec, X, _targets(train_ds), seed=seed)


def _marker(total_selector, total_reference, p_adj, better_is_smaller) -> str:
    if total_selector == total_reference:
        direction = "equal"
    elif (total_selector < total_reference) == better_is_smaller:
        direction = "better"
    else:
        direction = "worse"
    return direction + ("+" if p_adj < 0.05 else "-")


def cmd_sweep(args) -> int:
    spec = _spec_from_args(args)
    taus = [float(t) for t in args.taus.split(",")]
    selectors = [s.strip() for s in args.selectors.split(",")]
    for s in selectors:
        if s not in RNN_SELECTORS and s not in KINDS:
            raise ValueError(f"unknown selector {s!r}")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for tau in taus:
        ds = generate_structured(spec, tau, args.count_bf, args.count_ff, args.seed,
                                 acceptance_floor=args.acceptance_floor)
        train_ds, test_ds = balanced_split(ds, args.train_per_class, args.seed)
        tau_dir = outdir / f"tau_{tau:g}"
        tau_dir.mkdir(parents=True, exist_ok=True)
        io.write_dataset(train_ds, tau_dir / "train.jsonl")
        io.write_dataset(test_ds, tau_dir / "test.jsonl")
        for name in selectors:
            model = _train_selector(name, train_ds, args.seed, args.epochs)
            report = evaluate_selector(_model_predictions(model, test_ds), test_ds)
            io.write_report(report, tau_dir / name)
            rows.append([
                tau, name, report.accuracy,
                report.total_bins_selector, report.total_bins_sbs, report.total_bins_vbs,
                report.total_fitness["selector"], report.total_fitness["sbs"],
                report.total_fitness["vbs"],
                report.p_values["fitness:selector_vs_sbs"],
                report.p_values["bins:selector_vs_sbs"],
                _marker(report.total_fitness["selector"], report.total_fitness["sbs"],
                        report.p_values["fitness:selector_vs_sbs"], False),
                _marker(report.total_bins_selector, report.total_bins_sbs,
                        report.p_values["bins:selector_vs_sbs"], True),
            ])
            print(f"tau={tau:g} {name}: accuracy {report.accuracy:.2%}, "
                  f"bins {report.total_bins_selector} vs SBS {report.total_bins_sbs} "
                  f"vs VBS {report.total_bins_vbs}")
    io.write_csv(outdir / "sweep.csv",
                 ["tau", "selector", "accuracy", "bins_selector", "bins_sbs", "bins_vbs",
                  "fitness_selector", "fitness_sbs", "fitness_vbs",
                  "p_fitness_vs_sbs", "p_bins_vs_sbs",
                  "fitness_vs_sbs", "bins_vs_sbs"],
                 rows)
    print(f"sweep table -> {outdir / 'sweep.csv'}")
    return 0


# ---------------------------------------------------------------------------
# stats


def cmd_stats(args) -> int:
    if not args.pair:
        raise ValueError("at least one --pair A B is required")
    results = []
    for a_path, b_path in args.pair:
        a = np.loadtxt(a_path, ndmin=1)
        b = np.loadtxt(b_path, ndmin=1)
        w, p = wilcoxon_signed_rank(a, b)
        results.append([f"{Path(a_path).name} vs {Path(b_path).name}", w, p])
    adjusted = bonferroni([r[2] for r in results])
    print(f"{'comparison':40s} {'W':>10s} {'p':>12s} {'p_adj':>12s} sig")
    rows = []
    for (name, w, p), padj in zip(results, adjusted):
        print(f"{name:40s} {w:10.2f} {p:12.6g} {padj:12.6g} {'+' if padj < 0.05 else '-'}")
        rows.append([name, w, p, padj, int(padj < 0.05)])
    if args.out:
        io.write_csv(args.out, ["comparison", "W", "p_raw", "p_bonferroni",
                                "significant_5pct"], rows)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binselect",
        description="algorithm-selection workbench for online 1D bin packing")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="create labeled datasets")
    gen_sub = gen.add_subparsers(dest="mode", required=True)

    g_random = gen_sub.add_parser("random", help="sample instances at random")
    _add_spec_flags(g_random)
    g_random.add_argument("--count", type=int, required=True)
    g_random.add_argument("--seed", type=int, required=True)
    g_random.add_argument("--k", type=float, default=2.0)
    g_random.add_argument("--out", required=True)
    g_random.set_defaults(func=cmd_generate_random)

    g_struct = gen_sub.add_parser("structured",
                                  help="rejection-sample by BF/FF fitness gap")
    _add_spec_flags(g_struct)
    g_struct.add_argument("--tau", type=float, required=True)
    g_struct.add_argument("--count-bf", type=int, required=True)
    g_struct.add_argument("--count-ff", type=int, required=True)
    g_struct.add_argument("--seed", type=int, required=True)
    g_struct.add_argument("--k", type=float, default=2.0)
    g_struct.add_argument("--acceptance-floor", type=float, default=1e-4)
    g_struct.add_argument("--out", required=True)
    g_struct.set_defaults(func=cmd_generate_structured)

    g_evolve = gen_sub.add_parser("evolve",
                                  help="evolve instances won by a target heuristic")
    _add_spec_flags(g_evolve)
    g_evolve.add_argument("--target", choices=list(HEURISTICS), required=True)
    g_evolve.add_argument("--count", type=int, required=True)
    g_evolve.add_argument("--population", type=int, default=50)
    g_evolve.add_argument("--generations", type=int, default=200)
    g_evolve.add_argument("--mutation-rate", type=float, default=None)
    g_evolve.add_argument("--seed", type=int, required=True)
    g_evolve.add_argument("--k", type=float, default=2.0)
    g_evolve.add_argument("--out", required=True)
    g_evolve.set_defaults(func=cmd_generate_evolve)

    g_merge = gen_sub.add_parser("merge", help="mix existing dataset files")
    g_merge.add_argument("--inputs", nargs="+", required=True)
    g_merge.add_argument("--take-per-class", type=int, default=None)
    g_merge.add_argument("--seed", type=int, default=0)
    g_merge.add_argument("--out", required=True)
    g_merge.set_defaults(func=cmd_generate_merge)

    lab = sub.add_parser("label", help="(re)compute fitness vectors and labels")
    lab.add_argument("--dataset", required=True)
    lab.add_argument("--out", required=True)
    lab.add_argument("--k", type=float, default=2.0)
    lab.add_argument("--verify", action="store_true",
                     help="check stored fitness against recomputation first")
    lab.set_defaults(func=cmd_label)

    feat = sub.add_parser("features", help="export the 10-feature table as CSV")
    feat.add_argument("--dataset", required=True)
    feat.add_argument("--out", required=True)
    feat.set_defaults(func=cmd_features)

    train = sub.add_parser("train", help="fit a selector")
    train_sub = train.add_subparsers(dest="model_family", required=True)

    t_rnn = train_sub.add_parser("rnn", help="recurrent feature-free selector")
    t_rnn.add_argument("--cell", choices=list(RNN_SELECTORS), required=True)
    t_rnn.add_argument("--dataset", required=True)
    t_rnn.add_argument("--epochs", type=int, default=None,
                       help="default: 300 for sequences up to 120 items, else 700")
    t_rnn.add_argument("--batch-size", type=int, default=32)
    t_rnn.add_argument("--lr", type=float, default=0.001)
    t_rnn.add_argument("--units", default="32,32")
    t_rnn.add_argument("--folds", type=int, default=10,
                       help="cross-validation folds (0 disables)")
    t_rnn.add_argument("--seed", type=int, required=True)
    t_rnn.add_argument("--out", required=True)
    t_rnn.set_defaults(func=cmd_train_rnn)

    t_tab = train_sub.add_parser("tabular", help="feature-based selector")
    t_tab.add_argument("--kind", choices=list(KINDS), required=True)
    t_tab.add_argument("--dataset", required=True)
    t_tab.add_argument("--hyper", action="append", metavar="KEY=VALUE",
                       help="hyperparameter override (repeatable)")
    t_tab.add_argument("--folds", type=int, default=10)
    t_tab.add_argument("--seed", type=int, required=True)
    t_tab.add_argument("--out", required=True)
    t_tab.set_defaults(func=cmd_train_tabular)

    ev = sub.add_parser("evaluate", help="score a snapshot on a test dataset")
    ev.add_argument("--model", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--outdir", required=True)
    ev.set_defaults(func=cmd_evaluate)

    sw = sub.add_parser("sweep", help="structure-threshold experiment")
    _add_spec_flags(sw)
    sw.add_argument("--taus", required=True, help="comma-separated thresholds")
    sw.add_argument("--selectors", default="gru",
                    help="comma-separated: gru,lstm,knn,gnb,tree,forest,mlp")
    sw.add_argument("--count-bf", type=int, default=400)
    sw.add_argument("--count-ff", type=int, default=300)
    sw.add_argument("--train-per-class", type=int, default=200)
    sw.add_argument("--epochs", type=int, default=None)
    sw.add_argument("--acceptance-floor", type=float, default=1e-4)
    sw.add_argument("--seed", type=int, required=True)
    sw.add_argument("--outdir", required=True)
    sw.set_defaults(func=cmd_sweep)

    st = sub.add_parser("stats", help="pairwise Wilcoxon + Bonferroni on value files")
    st.add_argument("--pair", nargs=2, action="append", metavar=("A", "B"),
                    help="two single-column files of paired values (repeatable)")
    st.add_argument("--out", default=None)
    st.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (io.DataFormatError, GenerationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
