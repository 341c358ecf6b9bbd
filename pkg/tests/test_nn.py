import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softik.nn import (
    MLP,
    Scaler,
    TrainConfig,
    evaluate,
    forward,
    input_jacobian,
    load_model,
    save_model,
    size_s2r,
    tansig,
    train,
)
from softik.robots import ValidationError

finite_floats = st.floats(min_value=-50, max_value=50, allow_nan=False)


def fd_jacobian(net, x, h=1e-5):
    steps = h * np.maximum((net.in_scaler.hi - net.in_scaler.lo) / 2.0, 1.0)
    J = np.zeros((net.out_dim, net.in_dim))
    for k in range(net.in_dim):
        e = np.zeros(net.in_dim)
        e[k] = steps[k]
        J[:, k] = (forward(net, x + e) - forward(net, x - e)) / (2 * steps[k])
    return J


def naive_forward(net, x):
    """Independent plain-loop reimplementation of the forward pass."""
    a = [(xi - lo) * 2.0 / (hi - lo) - 1.0
         for xi, lo, hi in zip(x, net.in_scaler.lo, net.in_scaler.hi)]
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = [sum(W[r][c] * a[c] for c in range(len(a))) + b[r]
             for r in range(W.shape[0])]
        a = z if i == last else [math.tanh(v) for v in z]
    return [(ai + 1.0) / 2.0 * (hi - lo) + lo
            for ai, lo, hi in zip(a, net.out_scaler.lo, net.out_scaler.hi)]


# -- activation ---------------------------------------------------------------

def test_tansig_zero():
    assert tansig(0.0) == 0.0


def test_tansig_frozen_value():
    # 2/(1+e^-1) - 1 evaluated at 40 decimal digits with mpmath
    assert tansig(0.5) == pytest.approx(0.4621171572600097585, abs=1e-15)


@given(finite_floats)
def test_tansig_odd_and_bounded(x):
    assert tansig(x) == pytest.approx(-tansig(-x), abs=1e-15)
    assert -1.0 <= tansig(x) <= 1.0


def test_tansig_saturates_safely():
    assert tansig(50.0) == pytest.approx(1.0)
    assert tansig(-1000.0) == pytest.approx(-1.0)
    assert np.isfinite(tansig(np.array([-1e6, 1e6]))).all()


@given(st.floats(min_value=-5, max_value=5, allow_nan=False))
@settings(max_examples=40)
def test_tansig_derivative_identity(x):
    h = 1e-6
    numeric = (tansig(x + h) - tansig(x - h)) / (2 * h)
    assert numeric == pytest.approx(1.0 - tansig(x) ** 2, abs=1e-8)


# -- scalers ------------------------------------------------------------------

def test_scaler_round_trip():
    rng = np.random.default_rng(0)
    data = rng.uniform(-40, 90, size=(30, 4))
    sc = Scaler.fit(data)
    assert np.allclose(sc.unscale(sc.scale(data)), data, atol=1e-12)
    assert np.all(sc.scale(data) >= -1.0 - 1e-12)
    assert np.all(sc.scale(data) <= 1.0 + 1e-12)


def test_scaler_handles_constant_column():
    sc = Scaler.fit(np.array([[1.0, 5.0], [2.0, 5.0]]))
    assert np.all(sc.hi > sc.lo)


# -- forward ------------------------------------------------------------------

def test_zero_net_outputs_midpoint():
    net = MLP.create([3, 8, 2], seed=0,
                     out_scaler=Scaler(lo=np.array([0.0, 10.0]),
                                       hi=np.array([4.0, 30.0])))
    for i in range(len(net.weights)):
        net.weights[i][:] = 0.0
        net.biases[i][:] = 0.0
    assert np.allclose(forward(net, [0.5, -0.5, 0.3]), [2.0, 20.0])


def test_single_linear_layer_is_identity():
    net = MLP(weights=[np.eye(3)], biases=[np.zeros(3)],
              in_scaler=Scaler.unit(3), out_scaler=Scaler.unit(3))
    x = np.array([0.2, -0.7, 0.9])
    assert np.allclose(forward(net, x), x, atol=1e-15)


def test_forward_matches_naive_reimplementation():
    net = MLP.create([3, 35, 35, 3], seed=42,
                     in_scaler=Scaler(lo=np.zeros(3), hi=np.full(3, 3.0)),
                     out_scaler=Scaler(lo=np.array([-60.0, -60.0, 50.0]),
                                       hi=np.array([60.0, 60.0, 90.0])))
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.uniform(0, 3, size=3)
        assert np.allclose(forward(net, x), naive_forward(net, x), atol=1e-12)


def test_forward_batch_matches_single():
    net = MLP.create([2, 6, 4], seed=3)
    X = np.random.default_rng(0).uniform(-1, 1, size=(7, 2))
    batched = forward(net, X)
    assert np.allclose(batched, [forward(net, x) for x in X], atol=1e-15)


def test_forward_rejects_dim_mismatch():
    net = MLP.create([3, 4, 2], seed=0)
    with pytest.raises(ValidationError):
        forward(net, [1.0, 2.0])


# -- input jacobian -----------------------------------------------------------

def test_linear_layer_jacobian_is_weight_matrix():
    W = np.array([[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]])
    net = MLP(weights=[W.copy()], biases=[np.zeros(2)],
              in_scaler=Scaler.unit(3), out_scaler=Scaler.unit(2))
    assert np.allclose(input_jacobian(net, np.zeros(3)), W, atol=1e-15)


def test_zero_hidden_weights_give_zero_jacobian():
    net = MLP.create([3, 5, 2], seed=0)
    net.weights[0][:] = 0.0
    assert np.array_equal(input_jacobian(net, np.array([0.3, 0.1, -0.2])),
                          np.zeros((2, 3)))


@pytest.mark.parametrize("sizes,seed", [([3, 35, 35, 3], 0), ([2, 30, 30, 30, 3], 1),
                                        ([3, 64, 64, 6], 2), ([4, 8, 5], 3)])
def test_jacobian_matches_finite_differences(sizes, seed):
    net = MLP.create(sizes, seed=seed,
                     in_scaler=Scaler(lo=-2 * np.ones(sizes[0]),
                                      hi=3 * np.ones(sizes[0])),
                     out_scaler=Scaler(lo=-50 * np.ones(sizes[-1]),
                                       hi=80 * np.ones(sizes[-1])))
    rng = np.random.default_rng(seed)
    for _ in range(4):
        x = rng.uniform(-2, 3, size=sizes[0])
        J = input_jacobian(net, x)
        Jfd = fd_jacobian(net, x)
        assert np.linalg.norm(J - Jfd) <= 1e-4 * max(np.linalg.norm(J), 1e-9)


# -- training -----------------------------------------------------------------

def linear_data(slope=2.5, intercept=-1.0, n=64):
    rng = np.random.default_rng(5)
    X = rng.uniform(-2, 2, size=(n, 1))
    Y = slope * X + intercept
    return X, Y


def test_lm_recovers_linear_regression():
    X, Y = linear_data()
    net = MLP.create([1, 1], seed=0)
    cfg = TrainConfig(max_epochs=30, batch_size=16, target_mse=1e-18, seed=0)
    train(net, (X, Y), (X, Y), cfg)
    # effective physical-space map: unscale(W*scale(x)+b)
    xs = np.array([[0.0], [1.0]])
    ys = forward(net, xs)
    intercept = ys[0, 0]
    slope = ys[1, 0] - ys[0, 0]
    assert slope == pytest.approx(2.5, abs=1e-6)
    assert intercept == pytest.approx(-1.0, abs=1e-6)


def test_training_is_deterministic():
    X, Y = linear_data(n=40)
    runs = []
    for _ in range(2):
        net = MLP.create([1, 6, 1], seed=9)
        cfg = TrainConfig(max_epochs=12, batch_size=20, seed=9)
        train(net, (X, Y), (X, Y), cfg)
        runs.append(np.concatenate([w.ravel() for w in net.weights]))
    assert np.array_equal(runs[0], runs[1])


def test_lm_accepted_losses_decrease():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, size=(120, 2))
    Y = np.stack([np.sin(2 * X[:, 0]), X[:, 1] ** 2], axis=1)
    net = MLP.create([2, 10, 2], seed=4)
    rep = train(net, (X, Y), (X, Y), TrainConfig(max_epochs=25, seed=4))
    losses = rep.accepted_losses
    assert all(b < a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0] * 1e-2


def test_lm_at_optimum_reports_damping_cap():
    X, Y = linear_data(n=16)
    net = MLP.create([1, 1], seed=0)
    cfg = TrainConfig(max_epochs=40, batch_size=16, seed=0, lm_damping_cap=1e8)
    train(net, (X, Y), (X, Y), cfg)
    rep = train(net, (X, Y), (X, Y), cfg)  # restart at the exact optimum
    assert rep.status == "damping_cap"


def test_high_damping_step_aligns_with_gradient():
    rng = np.random.default_rng(7)
    X = rng.uniform(-1, 1, size=(50, 2))
    Y = np.stack([X[:, 0] * X[:, 1], X.sum(axis=1)], axis=1)
    net = MLP.create([2, 8, 2], seed=1)
    from softik.nn import _flatten, _param_jacobian

    U = net.in_scaler.scale(X)
    V = net.out_scaler.scale(Y)
    out, J = _param_jacobian(net, U)
    r = (out - V).ravel()
    JtJ, Jtr = J.T @ J, J.T @ r
    lam = 1e9
    delta = np.linalg.solve(JtJ + lam * np.eye(len(Jtr)), -Jtr)
    cos = delta @ (-Jtr) / (np.linalg.norm(delta) * np.linalg.norm(Jtr))
    assert cos > 0.999999


def test_adam_path_reduces_loss():
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(200, 2))
    Y = np.stack([np.tanh(X[:, 0] + X[:, 1]), X[:, 0] - X[:, 1]], axis=1)
    net = MLP.create([2, 16, 2], seed=2)
    cfg = TrainConfig(max_epochs=60, batch_size=50, learning_rate=0.01,
                      optimizer="first_order", seed=2)
    rep = train(net, (X, Y), (X, Y), cfg)
    assert rep.train_mse < rep.accepted_losses[0] * 0.05


def test_train_rejects_empty_sets():
    net = MLP.create([1, 1], seed=0)
    with pytest.raises(ValidationError):
        train(net, (np.zeros((0, 1)), np.zeros((0, 1))),
              (np.zeros((1, 1)), np.zeros((1, 1))), TrainConfig(max_epochs=1))


# -- sizing and evaluation ------------------------------------------------------

def test_s2r_sizing():
    assert size_s2r(343) == 86
    assert size_s2r(620) == 155
    assert size_s2r(4) == 1
    with pytest.raises(ValidationError):
        size_s2r(3)


def test_evaluate_perfect_predictions():
    net = MLP(weights=[np.eye(2)], biases=[np.zeros(2)],
              in_scaler=Scaler.unit(2), out_scaler=Scaler.unit(2))
    X = np.random.default_rng(0).uniform(-1, 1, size=(20, 2))
    stats = evaluate(net, X, X, workspace_width=10.0)
    assert stats["mean_mm"] == 0.0 and stats["max_mm"] == 0.0


def test_evaluate_constant_net_equals_centroid_distances():
    rng = np.random.default_rng(8)
    Y = rng.normal(size=(40, 2))
    Y -= Y.mean(axis=0)  # centered targets
    net = MLP.create([2, 4, 2], seed=0)
    for i in range(len(net.weights)):
        net.weights[i][:] = 0.0
        net.biases[i][:] = 0.0
    X = rng.normal(size=(40, 2))
    stats = evaluate(net, X, Y, workspace_width=5.0)
    direct = float(np.linalg.norm(Y - 0.0, axis=1).mean())
    assert stats["mean_mm"] == pytest.approx(direct, rel=1e-12)


def test_evaluate_rejects_bad_width():
    net = MLP.create([2, 2], seed=0)
    with pytest.raises(ValidationError):
        evaluate(net, np.zeros((3, 2)), np.zeros((3, 2)), workspace_width=0.0)


# -- model files ----------------------------------------------------------------

def test_model_round_trip(tmp_path):
    net = MLP.create([3, 35, 35, 3], seed=11,
                     in_scaler=Scaler(lo=np.zeros(3), hi=np.full(3, 3.0)),
                     out_scaler=Scaler(lo=np.full(3, -50.0), hi=np.full(3, 90.0)))
    path = tmp_path / "net.json"
    save_model(net, path, meta={"seed": 11})
    back = load_model(path)
    x = np.array([1.0, 2.0, 0.5])
    assert np.array_equal(forward(back, x), forward(net, x))
    assert back.sizes == net.sizes


def test_load_rejects_broken_chain(tmp_path):
    net = MLP.create([2, 4, 2], seed=0)
    path = tmp_path / "net.json"
    save_model(net, path)
    import json

    doc = json.loads(path.read_text())
    doc["layers"][1]["weights"] = [[1.0, 2.0, 3.0]] * 2  # fan_in 3 != 4
    path.write_text(json.dumps(doc))
    with pytest.raises(ValidationError):
        load_model(path)
