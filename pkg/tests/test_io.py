import json

import numpy as np
import pytest

from binselect.features import feature_matrix
from binselect.generate import GeneratorSpec, generate_random, generate_structured
from binselect.io import (
    DataFormatError,
    load_model,
    read_dataset,
    save_model,
    write_dataset,
)
from binselect.recurrent import TrainConfig, init_network, predict_proba, train_recurrent
from binselect.tabular import TabularModelSpec, fit_tabular, predict_proba as tab_proba


@pytest.fixture(scope="module")
def small_ds():
    return generate_random(GeneratorSpec.preset("ds1"), 12, seed=21)


def test_dataset_roundtrip_bytes(tmp_path, small_ds):
    p1 = tmp_path / "a.jsonl"
    p2 = tmp_path / "b.jsonl"
    write_dataset(small_ds, p1)
    loaded = read_dataset(p1, verify=True)
    write_dataset(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert [r.instance.items for r in loaded.records] == \
        [r.instance.items for r in small_ds.records]
    assert loaded.pool == small_ds.pool
    assert [r.label for r in loaded.records] == [r.label for r in small_ds.records]


def test_dataset_verify_catches_tampering(tmp_path, small_ds):
    p = tmp_path / "t.jsonl"
    write_dataset(small_ds, p)
    lines = p.read_text().splitlines()
    row = json.loads(lines[3])
    row["fitness"]["BF"] = "0.123456789012"
    lines[3] = json.dumps(row, sort_keys=True, separators=(",", ":"))
    p.write_text("\n".join(lines) + "\n")
    read_dataset(p)  # verification off: loads fine
    with pytest.raises(DataFormatError, match="does not match"):
        read_dataset(p, verify=True)


def test_dataset_rejects_garbage(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text("not json\n")
    with pytest.raises(DataFormatError):
        read_dataset(p)
    p.write_text('{"format":"something-else","version":1}\n')
    with pytest.raises(DataFormatError, match="not a binselect-dataset"):
        read_dataset(p)


def test_dataset_rejects_duplicate_ids(tmp_path, small_ds):
    p = tmp_path / "dup.jsonl"
    write_dataset(small_ds, p)
    lines = p.read_text().splitlines()
    lines.append(lines[1])
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataFormatError, match="duplicate"):
        read_dataset(p)


def test_structured_metadata_survives(tmp_path):
    ds = generate_structured(GeneratorSpec.preset("ds2"), 0.01, 5, 5, seed=8)
    p = tmp_path / "s.jsonl"
    write_dataset(ds, p)
    loaded = read_dataset(p)
    assert loaded.pool == ("BF", "FF")
    assert loaded.meta["tau"] == 0.01
    assert loaded.meta["generator"]["distribution"] == "uniform"


@pytest.mark.parametrize("kind", ["knn", "gnb", "tree", "forest", "mlp"])
def test_tabular_snapshot_roundtrip(tmp_path, small_ds, kind):
    X = feature_matrix([r.instance for r in small_ds.records])
    y = [r.label.winner for r in small_ds.records]
    hyper = {"epochs": 5} if kind == "mlp" else \
        ({"n_estimators": 4} if kind == "forest" else {})
    model = fit_tabular(TabularModelSpec(kind, hyper), X, y, seed=9)
    path = tmp_path / f"{kind}.json"
    save_model(model, path, extra_meta={"capacity": 150})
    reloaded = load_model(path)
    np.testing.assert_array_equal(tab_proba(model, X), tab_proba(reloaded, X))
    assert reloaded.classes == model.classes
    # snapshot is itself byte-stable
    path2 = tmp_path / f"{kind}2.json"
    save_model(reloaded, path2, extra_meta={"capacity": 150})
    assert path.read_bytes() == path2.read_bytes()


def test_rnn_snapshot_roundtrip(tmp_path, small_ds):
    instances = [r.instance for r in small_ds.records]
    targets = [r.label.winner for r in small_ds.records]
    net = init_network("gru", hidden=(4, 4), seed=11)
    trained, _ = train_recurrent(net, instances, targets, TrainConfig(epochs=3, seed=11))
    path = tmp_path / "net.json"
    save_model(trained, path)
    reloaded = load_model(path)
    assert reloaded.cell_kind == "gru"
    assert reloaded.meta["input_scaling"] == trained.meta["input_scaling"]
    np.testing.assert_array_equal(predict_proba(trained, instances),
                                  predict_proba(reloaded, instances))


def test_model_loader_rejects_garbage(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{}")
    with pytest.raises(DataFormatError):
        load_model(p)
