"""Feature-based classifiers: KNN, Gaussian naive Bayes, decision tree,
random forest, and a small MLP.  All consume the ten-feature vectors and
predict a heuristic name; every model is deterministic given (spec, data,
seed) and argmax ties resolve to the canonical heuristic order.

Hyperparameter defaults follow the tuned values used for the benchmark
experiments; pass overrides through ``TabularModelSpec.hyperparameters``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .optim import AdamConfig, AdamState, adam_step
from .packing import HEURISTICS
from .recurrent import _glorot, log_softmax

KINDS = ("knn", "gnb", "tree", "forest", "mlp")

DEFAULT_HYPERPARAMETERS = {
    "knn": dict(n_neighbors=26, weights="distance", p=1),
    "gnb": dict(var_smoothing=1e-9),
    "tree": dict(max_depth=30, max_features=5, min_leaf=10, min_split=100),
    "forest": dict(n_estimators=64, max_depth=50, max_features=3, min_leaf=2,
                   min_split=50),
    "mlp": dict(hidden=(10, 15), epochs=3000, batch_size=32, learning_rate=0.001),
}


@dataclass(frozen=True)
class TabularModelSpec:
    kind: str
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        merged = dict(DEFAULT_HYPERPARAMETERS[self.kind])
        unknown = set(self.hyperparameters) - set(merged)
        if unknown:
            raise ValueError(f"unknown hyperparameters for {self.kind}: {sorted(unknown)}")
        merged.update(self.hyperparameters)
        object.__setattr__(self, "hyperparameters", merged)


@dataclass
class TrainedTabularModel:
    spec: TabularModelSpec
    classes: tuple[str, ...]  # canonical-order subset of HEURISTICS seen in training
    state: dict

    @property
    def kind(self) -> str:
        return self.spec.kind


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        X = features
    else:
        rows = [f.to_array() if hasattr(f, "to_array") else np.asarray(f, dtype=np.float64)
                for f in features]
        X = np.stack(rows)
    return np.asarray(X, dtype=np.float64)


def _encode_labels(labels) -> tuple[np.ndarray, tuple[str, ...]]:
    seen = set(labels)
    unknown = seen - set(HEURISTICS)
    if unknown:
        raise ValueError(f"unknown labels {sorted(unknown)}")
    classes = tuple(h for h in HEURISTICS if h in seen)
    lut = {h: i for i, h in enumerate(classes)}
    return np.array([lut[h] for h in labels], dtype=np.int64), classes


# ---------------------------------------------------------------------------
# decision trees


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - (p * p).sum())


def _build_tree(X, y, n_classes, rng, max_depth, max_features, min_leaf, min_split):
    """CART with Gini impurity on a feature subset per split.

    Returns parallel node arrays; ``feature == -1`` marks a leaf.  Thresholds
    are midpoints of consecutive distinct values of the sorted feature.
    """
    n_features = X.shape[1]
    m = min(max_features, n_features)
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=n_classes))
        return node

    def grow(idx, depth):
        node = new_node(idx)
        cnt = counts[node]
        if depth >= max_depth or len(idx) < min_split or _gini(cnt) == 0.0:
            return node
        cand = rng.permutation(n_features)[:m]
        parent_imp = _gini(cnt)
        best = None  # (impurity, feature, threshold, order, split_pos)
        for f in cand:
            vals = X[idx, f]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            sy = y[idx][order]
            left_cnt = np.zeros(n_classes)
            right_cnt = cnt.astype(np.float64).copy()
            n_tot = len(idx)
            for i in range(1, n_tot):
                c = sy[i - 1]
                left_cnt[c] += 1
                right_cnt[c] -= 1
                if sv[i] == sv[i - 1]:
                    continue
                if i < min_leaf or n_tot - i < min_leaf:
                    continue
                imp = (i * _gini(left_cnt) + (n_tot - i) * _gini(right_cnt)) / n_tot
                if best is None or imp < best[0]:
                    best = (imp, int(f), (sv[i - 1] + sv[i]) / 2.0, order, i)
        if best is None or best[0] >= parent_imp:
            return node
        _, f, thr, order, pos = best
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(idx[order[:pos]], depth + 1)
        right[node] = grow(idx[order[pos:]], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return dict(feature=np.array(feature, dtype=np.int64),
                threshold=np.array(threshold, dtype=np.float64),
                left=np.array(left, dtype=np.int64),
                right=np.array(right, dtype=np.int64),
                counts=np.stack(counts).astype(np.float64))


def _tree_proba(tree, X):
    out = np.empty((len(X), tree["counts"].shape[1]))
    for i, x in enumerate(X):
        node = 0
        while tree["feature"][node] >= 0:
            if x[tree["feature"][node]] <= tree["threshold"][node]:
                node = tree["left"][node]
            else:
                node = tree["right"][node]
        cnt = tree["counts"][node]
        out[i] = cnt / cnt.sum()
    return out


# ---------------------------------------------------------------------------
# MLP (shares the Adam implementation with the recurrent trainer)


def _fit_mlp(X, y, n_classes, hp, seed):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x317]))
    sizes = [X.shape[1], *hp["hidden"], n_classes]
    params = {}
    for j in range(len(sizes) - 1):
        params[f"W{j}"] = _glorot(rng, sizes[j], sizes[j + 1], (sizes[j], sizes[j + 1]))
        params[f"b{j}"] = np.zeros(sizes[j + 1])
    cfg = AdamConfig(learning_rate=hp["learning_rate"])
    state = AdamState.zeros_like(params)
    n = len(X)
    bs = hp["batch_size"]
    n_layers = len(sizes) - 1
    loss_history = []
    for _ in range(hp["epochs"]):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for s in range(0, n, bs):
            idx = order[s:s + bs]
            xb, yb = X[idx], y[idx]
            acts = [xb]
            a = xb
            for j in range(n_layers - 1):
                a = np.maximum(a @ params[f"W{j}"] + params[f"b{j}"], 0.0)
                acts.append(a)
            logits = a @ params[f"W{n_layers - 1}"] + params[f"b{n_layers - 1}"]
            logp = log_softmax(logits)
            epoch_loss += float(-logp[np.arange(len(idx)), yb].sum())
            delta = np.exp(logp)
            delta[np.arange(len(idx)), yb] -= 1.0
            delta /= len(idx)
            grads = {}
            for j in range(n_layers - 1, -1, -1):
                grads[f"W{j}"] = acts[j].T @ delta
                grads[f"b{j}"] = delta.sum(axis=0)
                if j > 0:
                    delta = (delta @ params[f"W{j}"].T) * (acts[j] > 0)
            params, state = adam_step(params, grads, state, cfg)
        loss_history.append(epoch_loss / n)
    # loss_history is a training artifact; snapshots keep only params + sizes
    return dict(params=params, sizes=sizes, loss_history=loss_history)


def _mlp_proba(state, X):
    params = state["params"]
    n_layers = len(state["sizes"]) - 1
    a = X
    for j in range(n_layers - 1):
        a = np.maximum(a @ params[f"W{j}"] + params[f"b{j}"], 0.0)
    logits = a @ params[f"W{n_layers - 1}"] + params[f"b{n_layers - 1}"]
    return np.exp(log_softmax(logits))


# ---------------------------------------------------------------------------
# fit / predict


def fit_tabular(spec: TabularModelSpec, features, labels, seed: int = 0) -> TrainedTabularModel:
    """Train one feature-based model; deterministic given (spec, data, seed)."""
    X = _as_matrix(features)
    y, classes = _encode_labels(list(labels))
    if len(X) != len(y) or len(X) == 0:
        raise ValueError("features and labels must be equal-length and non-empty")
    hp = spec.hyperparameters
    k = len(classes)

    if spec.kind in ("gnb", "mlp") and k < 2:
        raise ValueError(f"{spec.kind} needs at least 2 distinct labels, got {k}")

    if spec.kind == "knn":
        state = dict(X=X.copy(), y=y.copy())
    elif spec.kind == "gnb":
        means = np.empty((k, X.shape[1]))
        variances = np.empty((k, X.shape[1]))
        log_priors = np.empty(k)
        for c in range(k):
            rows = X[y == c]
            means[c] = rows.mean(axis=0)
            variances[c] = rows.var(axis=0) + hp["var_smoothing"]
            log_priors[c] = np.log(len(rows) / len(X))
        state = dict(means=means, variances=variances, log_priors=log_priors)
    elif spec.kind == "tree":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7E3]))
        state = dict(tree=_build_tree(X, y, k, rng, hp["max_depth"], hp["max_features"],
                                      hp["min_leaf"], hp["min_split"]))
    elif spec.kind == "forest":
        trees = []
        for t in range(hp["n_estimators"]):
            rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF0E, t]))
            boot = rng.integers(0, len(X), size=len(X))
            trees.append(_build_tree(X[boot], y[boot], k, rng, hp["max_depth"],
                                     hp["max_features"], hp["min_leaf"], hp["min_split"]))
        state = dict(trees=trees)
    else:  # mlp
        state = _fit_mlp(X, y, k, hp, seed)

    return TrainedTabularModel(spec=spec, classes=classes, state=state)


def predict_proba(model: TrainedTabularModel, features) -> np.ndarray:
    """Class probabilities (rows sum to 1; columns follow ``model.classes``)."""
    X = _as_matrix(features)
    if X.ndim == 1:
        X = X[None, :]
    kind = model.kind
    hp = model.spec.hyperparameters
    k = len(model.classes)

    if kind == "knn":
        Xt, yt = model.state["X"], model.state["y"]
        p = hp["p"]
        out = np.empty((len(X), k))
        for i, q in enumerate(X):
            diffs = np.abs(Xt - q)
            dists = diffs.sum(axis=1) if p == 1 else (diffs ** p).sum(axis=1) ** (1.0 / p)
            exact = dists == 0.0
            if exact.any():
                # exact feature match short-circuits inverse-distance weighting
                votes = np.bincount(yt[exact], minlength=k).astype(np.float64)
            else:
                nn = np.argsort(dists, kind="stable")[: min(hp["n_neighbors"], len(Xt))]
                w = 1.0 / dists[nn] if hp["weights"] == "distance" else np.ones(len(nn))
                votes = np.zeros(k)
                np.add.at(votes, yt[nn], w)
            out[i] = votes / votes.sum()
        return out

    if kind == "gnb":
        means = model.state["means"]
        variances = model.state["variances"]
        log_priors = model.state["log_priors"]
        # joint log-likelihood per class, normalized in log space
        jll = np.empty((len(X), k))
        for c in range(k):
            jll[:, c] = log_priors[c] - 0.5 * (
                np.log(2.0 * np.pi * variances[c])
                + (X - means[c]) ** 2 / variances[c]
            ).sum(axis=1)
        return np.exp(log_softmax(jll))

    if kind == "tree":
        return _tree_proba(model.state["tree"], X)

    if kind == "forest":
        probs = np.zeros((len(X), k))
        for tree in model.state["trees"]:
            probs += _tree_proba(tree, X)
        return probs / len(model.state["trees"])

    return _mlp_proba(model.state, X)


def predict_batch(model: TrainedTabularModel, features) -> list[str]:
    probs = predict_proba(model, features)
    return [model.classes[i] for i in probs.argmax(axis=1)]


def predict_tabular(model: TrainedTabularModel, features) -> tuple[str, dict[str, float]]:
    """Predict one feature vector: (heuristic, normalized class scores)."""
    probs = predict_proba(model, features)[0]
    label = model.classes[int(np.argmax(probs))]
    return label, {h: float(p) for h, p in zip(model.classes, probs)}
