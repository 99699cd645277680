import math

import numpy as np
import pytest

from binselect.optim import AdamConfig, AdamState, adam_step
from binselect.packing import Instance
from binselect.recurrent import (
    DivergenceError,
    TrainConfig,
    backward_batch,
    cross_entropy,
    forward_sequence,
    gru_cell_forward,
    init_network,
    loss_and_grads,
    lstm_cell_forward,
    one_hot,
    predict,
    train_recurrent,
)
from oracles import scalar_gru, scalar_lstm


def zero_gru_params(in_dim, units):
    return {"W": np.zeros((in_dim, 3 * units)), "U": np.zeros((units, 3 * units)),
            "b": np.zeros(3 * units)}


def zero_lstm_params(in_dim, units):
    return {"W": np.zeros((in_dim, 4 * units)), "U": np.zeros((units, 4 * units)),
            "b": np.zeros(4 * units)}


def test_gru_zero_param_fixtures():
    p = zero_gru_params(2, 3)
    assert np.allclose(gru_cell_forward(np.zeros(2), np.zeros(3), p), 0.0)
    v = np.array([0.4, -0.2, 1.0])
    # sigma(0) = 0.5 and tanh(0) = 0 force h = 0.5 * h_prev
    np.testing.assert_allclose(gru_cell_forward(np.zeros(2), v, p), 0.5 * v, rtol=0)


def test_lstm_zero_param_fixtures():
    p = zero_lstm_params(2, 3)
    h, c = lstm_cell_forward(np.zeros(2), np.zeros(3), np.zeros(3), p)
    assert np.allclose(h, 0.0) and np.allclose(c, 0.0)
    v = np.array([0.4, -0.2, 1.0])
    h, c = lstm_cell_forward(np.zeros(2), np.zeros(3), v, p)
    np.testing.assert_allclose(c, 0.5 * v, rtol=0)
    np.testing.assert_allclose(h, 0.5 * np.tanh(0.5 * v), rtol=1e-15)


def test_single_unit_cells_match_scalar_oracle(rng):
    for _ in range(20):
        wz, uz, bz, wr, ur, br, wc, uc, bc = rng.normal(size=9)
        x, h_prev = rng.normal(size=2)
        p = {"W": np.array([[wz, wr, wc]]), "U": np.array([[uz, ur, uc]]),
             "b": np.array([bz, br, bc])}
        got = gru_cell_forward(np.array([x]), np.array([h_prev]), p)[0]
        want = scalar_gru(x, h_prev, wz, uz, bz, wr, ur, br, wc, uc, bc)
        assert got == pytest.approx(want, rel=1e-12)

    for _ in range(20):
        vals = rng.normal(size=12)
        wi, ui, bi, wf, uf, bf, wc, uc, bc, wo, uo, bo = vals
        x, h_prev, c_prev = rng.normal(size=3)
        p = {"W": np.array([[wi, wf, wc, wo]]), "U": np.array([[ui, uf, uc, uo]]),
             "b": np.array([bi, bf, bc, bo])}
        h, c = lstm_cell_forward(np.array([x]), np.array([h_prev]), np.array([c_prev]), p)
        want_h, want_c = scalar_lstm(x, h_prev, c_prev, wi, ui, bi, wf, uf, bf,
                                     wc, uc, bc, wo, uo, bo)
        assert h[0] == pytest.approx(want_h, rel=1e-12)
        assert c[0] == pytest.approx(want_c, rel=1e-12)


def test_forward_sequence_is_distribution():
    net = init_network("gru", hidden=(4, 4), seed=1)
    inst = Instance("a", 150, (30, 60, 90))
    probs = forward_sequence(net, inst)
    assert probs.shape == (4,)
    assert probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all((probs > 0) & (probs < 1))


def test_zero_network_outputs_uniform():
    net = init_network("lstm", hidden=(3, 3), seed=0)
    for k in net.params:
        net.params[k] = np.zeros_like(net.params[k])
    probs = forward_sequence(net, Instance("a", 150, (10, 140, 75)))
    np.testing.assert_allclose(probs, 0.25, rtol=0, atol=1e-15)


def test_forward_does_not_mutate_network():
    net = init_network("gru", hidden=(4, 4), seed=2)
    before = {k: v.copy() for k, v in net.params.items()}
    forward_sequence(net, Instance("a", 150, (30, 60, 90, 120)))
    for k, v in net.params.items():
        np.testing.assert_array_equal(v, before[k])


def test_reversed_sequence_changes_output():
    net = init_network("gru", hidden=(6, 6), seed=3)
    a = Instance("a", 150, (20, 140, 20, 140, 75))
    b = Instance("b", 150, tuple(reversed(a.items)))
    assert not np.allclose(forward_sequence(net, a), forward_sequence(net, b))


def test_cross_entropy_fixtures():
    uniform = np.full(4, 0.25)
    assert cross_entropy(uniform, "BF") == pytest.approx(math.log(4), rel=1e-12)
    assert cross_entropy(np.array([0.7, 0.1, 0.1, 0.1]), one_hot("BF")) == \
        pytest.approx(-math.log(0.7), rel=1e-12)
    near_one = np.array([1 - 3e-12, 1e-12, 1e-12, 1e-12])
    assert cross_entropy(near_one, 0) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("cell", ["gru", "lstm"])
def test_gradients_match_finite_differences(cell, rng):
    for trial in range(6):
        units = int(rng.integers(1, 5))
        T = int(rng.integers(2, 6))
        B = int(rng.integers(1, 4))
        net = init_network(cell, hidden=(units, units), seed=trial + 10)
        X = rng.normal(size=(B, T))
        y = rng.integers(0, 4, size=B)
        _, analytic, _ = loss_and_grads(net, X, y)
        eps = 1e-5
        for name, p in net.params.items():
            flat = p.ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + eps
                lp, _, _ = loss_and_grads(net, X, y)
                flat[idx] = orig - eps
                lm, _, _ = loss_and_grads(net, X, y)
                flat[idx] = orig
                numeric = (lp - lm) / (2 * eps)
                a = analytic[name].ravel()[idx]
                denom = max(abs(a), abs(numeric), 1e-5)
                assert abs(a - numeric) / denom < 1e-4, \
                    f"{cell} {name}[{idx}] analytic={a} numeric={numeric}"


def test_output_bias_gradient_closed_form(rng):
    net = init_network("gru", hidden=(3, 3), seed=5)
    X = rng.normal(size=(4, 5))
    y = np.array([0, 1, 2, 3])
    _, grads, probs = loss_and_grads(net, X, y)
    onehot = np.zeros((4, 4))
    onehot[np.arange(4), y] = 1.0
    np.testing.assert_allclose(grads["out_b"], (probs - onehot).mean(axis=0), rtol=1e-12)


def test_duplicated_batch_leaves_gradients_unchanged():
    net = init_network("lstm", hidden=(3, 3), seed=6)
    batch = [(Instance("a", 150, (30, 60, 90)), "BF"),
             (Instance("b", 150, (100, 20, 40)), "WF")]
    g1 = backward_batch(net, batch)
    g2 = backward_batch(net, batch * 2)
    for k in g1:
        np.testing.assert_allclose(g1[k], g2[k], rtol=1e-12, atol=1e-15)


# --- Adam -------------------------------------------------------------------

def test_adam_first_step_magnitude():
    params = {"w": np.array([0.5])}
    grads = {"w": np.array([1.0])}
    state = AdamState.zeros_like(params)
    cfg = AdamConfig(learning_rate=0.001)
    new, state = adam_step(params, grads, state, cfg)
    # bias correction makes the first update ~= lr for any gradient scale
    assert new["w"][0] == pytest.approx(0.5 - 0.001, abs=1e-8)
    assert state.t == 1


def test_adam_zero_gradient_is_noop():
    params = {"w": np.array([1.0, -2.0])}
    state = AdamState.zeros_like(params)
    cfg = AdamConfig()
    for _ in range(5):
        params, state = adam_step(params, {"w": np.zeros(2)}, state, cfg)
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])


def test_adam_update_opposes_first_moment(rng):
    params = {"w": rng.normal(size=8)}
    state = AdamState.zeros_like(params)
    cfg = AdamConfig()
    for _ in range(10):
        grads = {"w": rng.normal(size=8)}
        new, state = adam_step(params, grads, state, cfg)
        step = new["w"] - params["w"]
        nonzero = state.m["w"] != 0
        assert np.all(np.sign(step[nonzero]) == -np.sign(state.m["w"][nonzero]))
        params = new


# --- training ---------------------------------------------------------------

def toy_two_class(n_pairs=10):
    instances, targets = [], []
    for i in range(n_pairs):
        instances.append(Instance(f"s{i}", 150, (20 + i, 25 + i, 22, 24, 21)))
        targets.append("BF")
        instances.append(Instance(f"l{i}", 150, (120 + i, 125 - i, 130, 128, 122)))
        targets.append("FF")
    return instances, targets


def test_training_loss_decreases_and_history():
    instances, targets = toy_two_class()
    net = init_network("gru", hidden=(8, 8), seed=7)
    cfg = TrainConfig(epochs=30, seed=7)
    trained, history = train_recurrent(net, instances, targets, cfg)
    assert len(history) == 30
    assert all(np.isfinite(h["loss"]) for h in history)
    assert history[9]["loss"] < history[0]["loss"]


def test_training_determinism():
    instances, targets = toy_two_class()
    runs = []
    for _ in range(2):
        net = init_network("lstm", hidden=(4, 4), seed=8)
        cfg = TrainConfig(epochs=5, seed=8)
        _, history = train_recurrent(net, instances, targets, cfg)
        runs.append([(h["loss"], h["train_acc"]) for h in history])
    assert runs[0] == runs[1]


def test_training_aborts_on_nonfinite_loss():
    instances, targets = toy_two_class(3)
    net = init_network("gru", hidden=(4, 4), seed=9)
    net.params["out_b"][0] = np.nan
    with pytest.raises(DivergenceError, match="epoch 0"):
        train_recurrent(net, instances, targets, TrainConfig(epochs=2, seed=9))


def test_label_shuffle_gives_chance_accuracy():
    # no label leakage: random 4-class labels on random sequences train to
    # test accuracy statistically indistinguishable from 25%
    gen = np.random.default_rng(123)
    def make(n):
        instances = [Instance(f"i{j}", 150, tuple(gen.integers(20, 101, 15).tolist()))
                     for j in range(n)]
        targets = [["BF", "FF", "NF", "WF"][t] for t in gen.integers(0, 4, n)]
        return instances, targets
    train_inst, train_y = make(60)
    test_inst, test_y = make(40)
    net = init_network("gru", hidden=(8, 8), seed=11)
    trained, _ = train_recurrent(net, train_inst, train_y, TrainConfig(epochs=60, seed=11))
    acc = np.mean([p == t for p, t in zip(predict(trained, test_inst), test_y)])
    # two-sided binomial 95% band around 0.25 for n=40
    assert abs(acc - 0.25) <= 1.96 * math.sqrt(0.25 * 0.75 / 40) + 1e-9, acc


def test_variable_length_bucketing():
    instances = [Instance("a", 150, (30,) * 5), Instance("b", 150, (40,) * 7),
                 Instance("c", 150, (50,) * 5), Instance("d", 150, (60,) * 7)]
    targets = ["BF", "FF", "BF", "FF"]
    net = init_network("gru", hidden=(4, 4), seed=10)
    trained, history = train_recurrent(net, instances, targets,
                                       TrainConfig(epochs=3, seed=10))
    assert len(history) == 3
    preds = predict(trained, instances)
    assert len(preds) == 4
