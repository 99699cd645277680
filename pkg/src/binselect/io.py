"""Persistence: line-oriented dataset files, versioned model snapshots, and
CSV report writers.

Dataset files are JSON-lines: a self-describing header line followed by one
record per instance.  Fitness values are stored as decimal strings with 12
significant digits so files diff cleanly across platforms; weights stay
exact integers.  Model snapshots are a single JSON document of flat numeric
arrays with explicit shapes.  All writers emit sorted keys and fixed
separators, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .evaluation import EvalReport
from .generate import Dataset, Label, LabeledInstance
from .packing import HEURISTICS, Instance, evaluate_all
from .recurrent import RecurrentNetwork
from .tabular import TabularModelSpec, TrainedTabularModel

DATASET_FORMAT = "binselect-dataset"
MODEL_FORMAT = "binselect-model"
FORMAT_VERSION = 1

FITNESS_DIGITS = ".12g"


class DataFormatError(ValueError):
    """Raised on malformed or inconsistent files."""


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


# ---------------------------------------------------------------------------
# datasets


def write_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    capacities = {rec.instance.capacity for rec in dataset.records}
    header = {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "capacity": capacities.pop() if len(capacities) == 1 else None,
        "pool": list(dataset.pool),
        "meta": _json_safe(dataset.meta),
    }
    lines = [_dumps(header)]
    for rec in dataset.records:
        row = {
            "id": rec.instance.id,
            "capacity": rec.instance.capacity,
            "items": list(rec.instance.items),
        }
        if rec.fitness is not None:
            row["fitness"] = {h: format(rec.fitness[h], FITNESS_DIGITS)
                              for h in HEURISTICS if h in rec.fitness}
        if rec.label is not None:
            row["label"] = list(rec.label.winners)
            row["margin"] = rec.label.margin
        lines.append(_dumps(row))
    path.write_text("\n".join(lines) + "\n")


def read_dataset(path, require_labels: bool = True, verify: bool = False) -> Dataset:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: bad header: {exc}") from exc
    if header.get("format") != DATASET_FORMAT:
        raise DataFormatError(f"{path}: not a {DATASET_FORMAT} file")
    if header.get("version") != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported version {header.get('version')}")
    records = []
    seen_ids = set()
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}:{ln}: bad record: {exc}") from exc
        inst = Instance(id=row["id"], capacity=row["capacity"],
                        items=tuple(row["items"]))
        if inst.id in seen_ids:
            raise DataFormatError(f"{path}:{ln}: duplicate instance id {inst.id!r}")
        seen_ids.add(inst.id)
        fitness = None
        label = None
        if "fitness" in row:
            fitness = {h: float(v) for h, v in row["fitness"].items()}
            if verify:
                recomputed = evaluate_all(inst, header.get("meta", {}).get("k", 2.0))
                for h, stored in row["fitness"].items():
                    if format(recomputed[h], FITNESS_DIGITS) != stored:
                        raise DataFormatError(
                            f"{path}:{ln}: stored fitness {stored} for {h} does not "
                            f"match recomputed {format(recomputed[h], FITNESS_DIGITS)}"
                        )
        if "label" in row:
            label = Label(winners=tuple(row["label"]), margin=float(row["margin"]))
        if require_labels and (fitness is None or label is None):
            raise DataFormatError(f"{path}:{ln}: record lacks fitness/label "
                                  f"(run the label command first)")
        records.append(LabeledInstance(inst, fitness, label))
    if not records:
        raise DataFormatError(f"{path}: no records")
    return Dataset(records, meta=header.get("meta", {}),
                   pool=tuple(header.get("pool", HEURISTICS)))


# ---------------------------------------------------------------------------
# model snapshots


def _encode_array(a: np.ndarray) -> dict:
    a = np.asarray(a)
    kind = "i8" if a.dtype.kind in "iu" else "f8"
    data = a.astype(np.int64 if kind == "i8" else np.float64).ravel().tolist()
    return {"shape": list(a.shape), "dtype": kind, "data": data}


def _decode_array(spec: dict) -> np.ndarray:
    dtype = np.int64 if spec["dtype"] == "i8" else np.float64
    return np.array(spec["data"], dtype=dtype).reshape(spec["shape"])


def _tree_arrays(prefix: str, tree: dict) -> dict:
    return {f"{prefix}{name}": _encode_array(tree[name])
            for name in ("feature", "threshold", "left", "right", "counts")}


def _tree_from_arrays(prefix: str, arrays: dict) -> dict:
    return {name: _decode_array(arrays[f"{prefix}{name}"])
            for name in ("feature", "threshold", "left", "right", "counts")}


def save_model(model, path, extra_meta: dict | None = None) -> None:
    path = Path(path)
    doc: dict = {"format": MODEL_FORMAT, "version": FORMAT_VERSION,
                 "meta": _json_safe(extra_meta or {})}
    if isinstance(model, RecurrentNetwork):
        doc["model"] = "rnn"
        doc["cell_kind"] = model.cell_kind
        doc["hidden"] = list(model.hidden)
        doc["input_size"] = model.input_size
        doc["n_classes"] = model.n_classes
        doc["net_meta"] = _json_safe(model.meta)
        doc["arrays"] = {k: _encode_array(v) for k, v in model.params.items()}
    elif isinstance(model, TrainedTabularModel):
        doc["model"] = "tabular"
        doc["kind"] = model.kind
        doc["hyperparameters"] = _json_safe(model.spec.hyperparameters)
        doc["classes"] = list(model.classes)
        arrays: dict = {}
        state = model.state
        if model.kind == "knn":
            arrays["X"] = _encode_array(state["X"])
            arrays["y"] = _encode_array(state["y"])
        elif model.kind == "gnb":
            for name in ("means", "variances", "log_priors"):
                arrays[name] = _encode_array(state[name])
        elif model.kind == "tree":
            arrays.update(_tree_arrays("tree_", state["tree"]))
        elif model.kind == "forest":
            doc["n_trees"] = len(state["trees"])
            for t, tree in enumerate(state["trees"]):
                arrays.update(_tree_arrays(f"t{t}_", tree))
        else:  # mlp
            doc["sizes"] = list(state["sizes"])
            arrays = {k: _encode_array(v) for k, v in state["params"].items()}
        doc["arrays"] = arrays
    else:
        raise TypeError(f"cannot snapshot {type(model).__name__}")
    path.write_text(_dumps(doc) + "\n")


def load_model(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: bad snapshot: {exc}") from exc
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != FORMAT_VERSION:
        raise DataFormatError(f"{path}: not a {MODEL_FORMAT} v{FORMAT_VERSION} file")
    arrays = doc["arrays"]
    if doc["model"] == "rnn":
        return RecurrentNetwork(
            cell_kind=doc["cell_kind"], hidden=tuple(doc["hidden"]),
            input_size=doc["input_size"], n_classes=doc["n_classes"],
            params={k: _decode_array(v) for k, v in arrays.items()},
            meta=doc.get("net_meta", {}))
    if doc["model"] != "tabular":
        raise DataFormatError(f"{path}: unknown model type {doc['model']!r}")
    kind = doc["kind"]
    hp = doc["hyperparameters"]
    if kind == "knn":
        state = dict(X=_decode_array(arrays["X"]), y=_decode_array(arrays["y"]))
    elif kind == "gnb":
        state = {name: _decode_array(arrays[name])
                 for name in ("means", "variances", "log_priors")}
    elif kind == "tree":
        state = dict(tree=_tree_from_arrays("tree_", arrays))
    elif kind == "forest":
        state = dict(trees=[_tree_from_arrays(f"t{t}_", arrays)
                            for t in range(doc["n_trees"])])
    else:
        state = dict(sizes=doc["sizes"],
                     params={k: _decode_array(v) for k, v in arrays.items()})
    return TrainedTabularModel(spec=TabularModelSpec(kind, hp),
                               classes=tuple(doc["classes"]), state=state)


def model_meta(path) -> dict:
    """Snapshot metadata without materializing the model."""
    doc = json.loads(Path(path).read_text())
    return doc.get("meta", {})


# ---------------------------------------------------------------------------
# CSV / report writers


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_history(history, path) -> None:
    keys = list(history[0]) if history else ["epoch", "loss", "train_acc"]
    write_csv(path, keys, [[entry[k] for k in keys] for entry in history])


def write_report(report: EvalReport, outdir) -> None:
    """EvalReport -> summary.txt + confusion / curves / predictions / p-value CSVs."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    write_csv(outdir / "confusion.csv",
              ["true\\pred", *HEURISTICS],
              [[h, *report.confusion[i].tolist()] for i, h in enumerate(HEURISTICS)])
    write_csv(outdir / "dp_curve.csv", ["threshold", "fraction"],
              [[t, f] for t, f in report.dp_curve])
    write_csv(outdir / "db_curve.csv", ["threshold", "fraction"],
              [[t, f] for t, f in report.db_curve])
    if report.per_instance:
        keys = list(report.per_instance[0])
        write_csv(outdir / "predictions.csv", keys,
                  [[row[k] for k in keys] for row in report.per_instance])
    write_csv(outdir / "pvalues.csv",
              ["comparison", "p_raw", "p_bonferroni", "significant_5pct"],
              [[name, report.p_values_raw[name], report.p_values[name],
                int(report.p_values[name] < 0.05)] for name in report.p_values])

    lines = [
        f"instances: {report.confusion.sum()}",
        f"accuracy: {report.accuracy:.4f}",
        f"single best solver: {report.sbs}",
        f"total bins (selector / SBS / VBS): {report.total_bins_selector} / "
        f"{report.total_bins_sbs} / {report.total_bins_vbs}",
        f"total fitness (selector / SBS / VBS): {report.total_fitness['selector']:.4f} / "
        f"{report.total_fitness['sbs']:.4f} / {report.total_fitness['vbs']:.4f}",
        "p-values (Bonferroni-adjusted):",
    ]
    lines += [f"  {name}: {report.p_values[name]:.6g}" for name in report.p_values]
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
