"""Sequence-to-one recurrent classifier over raw item sequences.

Two stacked recurrent layers (GRU or LSTM cells, tanh activations) feed an
affine softmax head; the only input is the ordered sequence of item weights,
scaled by a constant factor (by default 1/capacity, since raw weights
saturate the tanh units).  Training is full backpropagation through time
with mean categorical cross-entropy and Adam updates.

Conventions, fixed so fixtures stay stable:

* GRU blend: ``h = (1 - z) * h_prev + z * h_tilde`` where ``z`` is the
  update gate and the candidate sees ``r * h_prev`` through the recurrent
  weights.
* LSTM: ``c = f * c_prev + i * c_tilde``; ``h = o * tanh(c)``; the forget
  gate bias starts at +1.
* Gate blocks are stacked ``[z, r, candidate]`` (GRU) and
  ``[i, f, candidate, o]`` (LSTM) inside the fused weight matrices.
* Class order is the canonical heuristic order BF, FF, NF, WF.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .optim import AdamConfig, AdamState, adam_step
from .packing import HEURISTICS, Instance


class DivergenceError(RuntimeError):
    """Raised when training hits a non-finite loss."""


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def one_hot(heuristic: str) -> np.ndarray:
    """4-component indicator in canonical heuristic order."""
    vec = np.zeros(len(HEURISTICS))
    vec[HEURISTICS.index(heuristic)] = 1.0
    return vec


def class_index(target) -> int:
    """Accepts a heuristic name, a class index, or a one-hot vector."""
    if isinstance(target, str):
        return HEURISTICS.index(target)
    arr = np.asarray(target)
    if arr.ndim == 0:
        return int(arr)
    if arr.ndim == 1 and arr.size == len(HEURISTICS):
        if not np.isclose(arr.sum(), 1.0) or (arr == 1.0).sum() != 1:
            raise ValueError(f"not a one-hot target: {arr}")
        return int(np.argmax(arr))
    raise ValueError(f"cannot interpret target {target!r}")


def cross_entropy(probs: np.ndarray, target) -> float:
    """Categorical cross-entropy -log p(true class) of one prediction."""
    idx = class_index(target)
    return float(-np.log(probs[idx]))


@dataclass
class RecurrentNetwork:
    cell_kind: str  # "gru" or "lstm"
    hidden: tuple[int, ...]
    input_size: int
    n_classes: int
    params: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def layer_params(self, j: int) -> dict[str, np.ndarray]:
        return {"W": self.params[f"l{j}_W"], "U": self.params[f"l{j}_U"],
                "b": self.params[f"l{j}_b"]}


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int,
            shape: tuple[int, ...]) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_network(cell_kind: str, hidden: tuple[int, ...] = (32, 32),
                 input_size: int = 1, n_classes: int = 4,
                 seed: int = 0) -> RecurrentNetwork:
    """Fresh network with Glorot-uniform weights and zero biases (LSTM
    forget-gate bias +1)."""
    if cell_kind not in ("gru", "lstm"):
        raise ValueError(f"cell_kind must be 'gru' or 'lstm', got {cell_kind!r}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC311]))
    n_gates = 3 if cell_kind == "gru" else 4
    params: dict[str, np.ndarray] = {}
    in_dim = input_size
    for j, units in enumerate(hidden):
        w_blocks = [_glorot(rng, in_dim, units, (in_dim, units)) for _ in range(n_gates)]
        u_blocks = [_glorot(rng, units, units, (units, units)) for _ in range(n_gates)]
        params[f"l{j}_W"] = np.concatenate(w_blocks, axis=1)
        params[f"l{j}_U"] = np.concatenate(u_blocks, axis=1)
        b = np.zeros(n_gates * units)
        if cell_kind == "lstm":
            b[units:2 * units] = 1.0  # forget gate
        params[f"l{j}_b"] = b
        in_dim = units
    params["out_W"] = _glorot(rng, in_dim, n_classes, (in_dim, n_classes))
    params["out_b"] = np.zeros(n_classes)
    return RecurrentNetwork(cell_kind=cell_kind, hidden=tuple(hidden),
                            input_size=input_size, n_classes=n_classes, params=params)


# ---------------------------------------------------------------------------
# cell steps


def _gru_step(x: np.ndarray, h_prev: np.ndarray, p: dict) -> tuple[np.ndarray, tuple]:
    """One GRU step on a (batch, dim) slice.

    z = sigma(W_z x + U_z h_prev + b_z)
    r = sigma(W_r x + U_r h_prev + b_r)
    h~ = tanh(W_c x + U_c (r * h_prev) + b_c)
    h = (1 - z) * h_prev + z * h~
    """
    units = h_prev.shape[1]
    W, U, b = p["W"], p["U"], p["b"]
    ax = x @ W + b
    azr = ax[:, : 2 * units] + h_prev @ U[:, : 2 * units]
    z = sigmoid(azr[:, :units])
    r = sigmoid(azr[:, units:])
    rh = r * h_prev
    ac = ax[:, 2 * units:] + rh @ U[:, 2 * units:]
    hbar = np.tanh(ac)
    h = (1.0 - z) * h_prev + z * hbar
    return h, (x, h_prev, z, r, rh, hbar)


def _lstm_step(x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray,
               p: dict) -> tuple[np.ndarray, np.ndarray, tuple]:
    """One LSTM step on a (batch, dim) slice.

    i, f, o = sigma(gate affine maps); c~ = tanh(candidate affine map)
    c = f * c_prev + i * c~ ; h = o * tanh(c)
    """
    units = h_prev.shape[1]
    W, U, b = p["W"], p["U"], p["b"]
    a = x @ W + h_prev @ U + b
    i = sigmoid(a[:, :units])
    f = sigmoid(a[:, units:2 * units])
    cbar = np.tanh(a[:, 2 * units:3 * units])
    o = sigmoid(a[:, 3 * units:])
    c = f * c_prev + i * cbar
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, o, cbar, c, tc)


def _as_batch(vec: np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(vec, dtype=np.float64)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


def gru_cell_forward(x, h_prev, params: dict) -> np.ndarray:
    """Public single-step GRU; accepts 1-D vectors or (batch, dim) arrays."""
    xb, squeeze = _as_batch(x)
    hb, _ = _as_batch(h_prev)
    h, _ = _gru_step(xb, hb, params)
    return h[0] if squeeze else h


def lstm_cell_forward(x, h_prev, c_prev, params: dict) -> tuple[np.ndarray, np.ndarray]:
    """Public single-step LSTM; accepts 1-D vectors or (batch, dim) arrays."""
    xb, squeeze = _as_batch(x)
    hb, _ = _as_batch(h_prev)
    cb, _ = _as_batch(c_prev)
    h, c, _ = _lstm_step(xb, hb, cb, params)
    return (h[0], c[0]) if squeeze else (h, c)


# ---------------------------------------------------------------------------
# sequence forward / backward


def _forward_batch(net: RecurrentNetwork, X: np.ndarray):
    """Run a (batch, T) input through both layers; returns logits and caches."""
    B, T = X.shape
    seq = X[:, :, None]  # (B, T, input_size=1)
    caches = []
    for j, units in enumerate(net.hidden):
        p = net.layer_params(j)
        h = np.zeros((B, units))
        c = np.zeros((B, units))
        layer_cache = []
        outputs = np.empty((B, T, units))
        for t in range(T):
            x_t = seq[:, t, :]
            if net.cell_kind == "gru":
                h, cache = _gru_step(x_t, h, p)
            else:
                h, c, cache = _lstm_step(x_t, h, c, p)
            layer_cache.append(cache)
            outputs[:, t, :] = h
        caches.append(layer_cache)
        seq = outputs
    h_last = seq[:, -1, :]
    logits = h_last @ net.params["out_W"] + net.params["out_b"]
    return logits, h_last, caches


def _gru_layer_backward(p: dict, layer_cache: list, dh_seq: np.ndarray):
    """BPTT through one GRU layer given upstream dL/dh at every timestep."""
    W, U = p["W"], p["U"]
    units = layer_cache[0][1].shape[1]
    B, T, in_dim = dh_seq.shape[0], len(layer_cache), layer_cache[0][0].shape[1]
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros_like(p["b"])
    dx_seq = np.empty((B, T, in_dim))
    dh = np.zeros((B, units))
    for t in range(T - 1, -1, -1):
        x, h_prev, z, r, rh, hbar = layer_cache[t]
        dh = dh + dh_seq[:, t, :]
        dz = dh * (hbar - h_prev)
        dhbar = dh * z
        dh_prev = dh * (1.0 - z)
        dac = dhbar * (1.0 - hbar * hbar)
        drh = dac @ U[:, 2 * units:].T
        dr = drh * h_prev
        dh_prev = dh_prev + drh * r
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        da_zr = np.concatenate([daz, dar], axis=1)
        da_full = np.concatenate([da_zr, dac], axis=1)
        dW += x.T @ da_full
        db += da_full.sum(axis=0)
        dU[:, : 2 * units] += h_prev.T @ da_zr
        dU[:, 2 * units:] += rh.T @ dac
        dx_seq[:, t, :] = da_full @ W.T
        dh = dh_prev + da_zr @ U[:, : 2 * units].T
    return {"W": dW, "U": dU, "b": db}, dx_seq


def _lstm_layer_backward(p: dict, layer_cache: list, dh_seq: np.ndarray):
    """BPTT through one LSTM layer given upstream dL/dh at every timestep."""
    W, U = p["W"], p["U"]
    units = layer_cache[0][1].shape[1]
    B, T, in_dim = dh_seq.shape[0], len(layer_cache), layer_cache[0][0].shape[1]
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros_like(p["b"])
    dx_seq = np.empty((B, T, in_dim))
    dh = np.zeros((B, units))
    dc = np.zeros((B, units))
    for t in range(T - 1, -1, -1):
        x, h_prev, c_prev, i, f, o, cbar, c, tc = layer_cache[t]
        dh = dh + dh_seq[:, t, :]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * cbar
        df = dc * c_prev
        dcbar = dc * i
        dc = dc * f  # becomes dc_prev for the next (earlier) step
        da = np.concatenate([di * i * (1.0 - i),
                             df * f * (1.0 - f),
                             dcbar * (1.0 - cbar * cbar),
                             do * o * (1.0 - o)], axis=1)
        dW += x.T @ da
        dU += h_prev.T @ da
        db += da.sum(axis=0)
        dx_seq[:, t, :] = da @ W.T
        dh = da @ U.T
    return {"W": dW, "U": dU, "b": db}, dx_seq


def loss_and_grads(net: RecurrentNetwork, X: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy over the batch and exact gradients for every
    parameter, via reverse accumulation through all timesteps of both layers."""
    B, T = X.shape
    logits, h_last, caches = _forward_batch(net, X)
    logp = log_softmax(logits)
    loss = float(-logp[np.arange(B), targets].mean())
    probs = np.exp(logp)

    dlogits = probs.copy()
    dlogits[np.arange(B), targets] -= 1.0
    dlogits /= B

    grads: dict[str, np.ndarray] = {}
    grads["out_W"] = h_last.T @ dlogits
    grads["out_b"] = dlogits.sum(axis=0)

    dh_top = np.zeros((B, T, net.hidden[-1]))
    dh_top[:, -1, :] = dlogits @ net.params["out_W"].T
    dh_seq = dh_top
    for j in range(len(net.hidden) - 1, -1, -1):
        p = net.layer_params(j)
        if net.cell_kind == "gru":
            layer_grads, dx_seq = _gru_layer_backward(p, caches[j], dh_seq)
        else:
            layer_grads, dx_seq = _lstm_layer_backward(p, caches[j], dh_seq)
        grads[f"l{j}_W"] = layer_grads["W"]
        grads[f"l{j}_U"] = layer_grads["U"]
        grads[f"l{j}_b"] = layer_grads["b"]
        dh_seq = dx_seq
    return loss, grads, probs


def instances_to_input(instances, scaling: float) -> np.ndarray:
    """Stack same-length instances into a scaled (batch, T) float array."""
    lengths = {inst.n for inst in instances}
    if len(lengths) != 1:
        raise ValueError(f"instances in one batch must share a length, got {sorted(lengths)}")
    return np.array([inst.items for inst in instances], dtype=np.float64) * scaling


def forward_sequence(net: RecurrentNetwork, instance: Instance,
                     scaling: float | None = None) -> np.ndarray:
    """Class probabilities for one instance (canonical heuristic order)."""
    if instance.n < 1:
        raise ValueError("cannot classify an empty instance")
    if scaling is None:
        scaling = net.meta.get("input_scaling", 1.0 / instance.capacity)
    X = instances_to_input([instance], scaling)
    logits, _, _ = _forward_batch(net, X)
    return softmax(logits)[0]


def backward_batch(net: RecurrentNetwork, batch, scaling: float | None = None):
    """Gradients of the mean loss over ``batch`` of (Instance, target) pairs."""
    if not batch:
        raise ValueError("batch must be non-empty")
    instances = [inst for inst, _ in batch]
    if scaling is None:
        scaling = net.meta.get("input_scaling", 1.0 / instances[0].capacity)
    X = instances_to_input(instances, scaling)
    targets = np.array([class_index(t) for _, t in batch])
    _, grads, _ = loss_and_grads(net, X, targets)
    return grads


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    input_scaling: float | None = None  # None -> 1/capacity

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        AdamConfig(self.learning_rate, self.beta1, self.beta2, self.eps)


def _length_batches(order: np.ndarray, lengths: np.ndarray, batch_size: int) -> list[np.ndarray]:
    """Slice a shuffled index order into batches of same-length sequences.

    Sequences are grouped by length rather than padded; batch boundaries
    follow the shuffled order within each length group.
    """
    batches = []
    for length in sorted(set(lengths.tolist())):
        idx = order[lengths[order] == length]
        for s in range(0, len(idx), batch_size):
            batches.append(idx[s:s + batch_size])
    return batches


def train_recurrent(net: RecurrentNetwork, instances, targets, config: TrainConfig,
                    validation: tuple | None = None):
    """Train in place-like fashion (returns a new network and history).

    ``targets`` may be heuristic names, class indices, or one-hot vectors.
    History records per-epoch mean loss and training accuracy (plus
    validation accuracy when a (instances, targets) pair is supplied).
    Raises :class:`DivergenceError` on a non-finite loss.
    """
    instances = list(instances)
    target_idx = np.array([class_index(t) for t in targets])
    if len(instances) != len(target_idx):
        raise ValueError("instances and targets must have equal length")
    scaling = config.input_scaling
    if scaling is None:
        scaling = 1.0 / instances[0].capacity
    lengths = np.array([inst.n for inst in instances])
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7124]))
    adam_cfg = AdamConfig(config.learning_rate, config.beta1, config.beta2, config.eps)
    params = dict(net.params)
    state = AdamState.zeros_like(params)
    work = RecurrentNetwork(net.cell_kind, net.hidden, net.input_size,
                            net.n_classes, params, dict(net.meta))
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(instances))
        batches = _length_batches(order, lengths, config.batch_size)
        batch_order = rng.permutation(len(batches))
        total_loss = 0.0
        correct = 0
        for bi in batch_order:
            idx = batches[bi]
            X = instances_to_input([instances[i] for i in idx], scaling)
            y = target_idx[idx]
            loss, grads, probs = loss_and_grads(work, X, y)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch} "
                    f"(learning_rate={config.learning_rate}); try a smaller rate"
                )
            total_loss += loss * len(idx)
            correct += int((probs.argmax(axis=1) == y).sum())
            work.params, state = adam_step(work.params, grads, state, adam_cfg)
        entry = {"epoch": epoch,
                 "loss": total_loss / len(instances),
                 "train_acc": correct / len(instances)}
        if validation is not None:
            val_inst, val_targets = validation
            preds = predict(work, val_inst, scaling)
            val_idx = [class_index(t) for t in val_targets]
            entry["val_acc"] = float(np.mean(
                [HEURISTICS.index(p) == t for p, t in zip(preds, val_idx)]))
        history.append(entry)
    work.meta["input_scaling"] = scaling
    return work, history


def predict_proba(net: RecurrentNetwork, instances, scaling: float | None = None,
                  batch_size: int = 256) -> np.ndarray:
    """Class probabilities for many instances (rows in input order)."""
    instances = list(instances)
    if scaling is None:
        scaling = net.meta.get("input_scaling")
        if scaling is None:
            scaling = 1.0 / instances[0].capacity
    lengths = np.array([inst.n for inst in instances])
    probs = np.empty((len(instances), net.n_classes))
    order = np.arange(len(instances))
    for idx in _length_batches(order, lengths, batch_size):
        X = instances_to_input([instances[i] for i in idx], scaling)
        logits, _, _ = _forward_batch(net, X)
        probs[idx] = softmax(logits)
    return probs


def predict(net: RecurrentNetwork, instances, scaling: float | None = None) -> list[str]:
    """Predicted heuristic names (argmax; ties resolve to canonical order)."""
    probs = predict_proba(net, instances, scaling)
    return [HEURISTICS[i] for i in probs.argmax(axis=1)]
