import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcl.errors import DimensionError, InvalidInputError, SchemaError
from mcl.models import ModelParams, backward, forward, init_model, predict_logits


def test_init_deterministic():
    assert init_model("mlp", 4, 3, 7, seed=5) == init_model("mlp", 4, 3, 7, seed=5)
    assert init_model("mlp", 4, 3, 7, seed=5) != init_model("mlp", 4, 3, 7, seed=6)


def test_glorot_bound_linear():
    m = init_model("linear", 2, 3, seed=0)
    W = m.weights["W"]
    assert W.shape == (3, 2) and m.num_params() == 9
    assert np.all(np.abs(W) < np.sqrt(6 / 5))
    assert np.all(m.weights["b"] == 0)


def test_glorot_spread():
    W = init_model("linear", 200, 300, seed=1).weights["W"]
    a = np.sqrt(6 / 500)
    assert np.abs(W).max() <= a and np.abs(W).max() > 0.99 * a
    assert W.var() == pytest.approx(a * a / 3, rel=0.02)


def test_zero_weights_give_bias():
    m = init_model("linear", 3, 4, seed=0)
    m.weights["W"][:] = 0
    m.weights["b"][:] = [1, 2, 3, 4]
    np.testing.assert_array_equal(predict_logits(m, np.random.default_rng(0).normal(size=(5, 3))),
                                  np.tile([1, 2, 3, 4], (5, 1)))


def test_mlp_affine_when_relu_inactive():
    k = 3
    m = init_model("mlp", k, k, hidden=k, seed=0)
    m.weights["W1"][:] = np.eye(k)
    m.weights["b1"][:] = 0.5
    X = np.abs(np.random.default_rng(1).normal(size=(6, k)))
    expect = (X + 0.5) @ m.weights["W2"].T + m.weights["b2"]
    np.testing.assert_allclose(predict_logits(m, X), expect, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["linear", "mlp"]))
def test_forward_row_equivariant(seed, kind):
    rng = np.random.default_rng(seed)
    m = init_model(kind, 3, 4, hidden=5, seed=seed)
    X = rng.normal(size=(8, 3))
    perm = rng.permutation(8)
    np.testing.assert_array_equal(predict_logits(m, X)[perm], predict_logits(m, X[perm]))


@pytest.mark.parametrize("kind", ["linear", "mlp"])
def test_backward_zero_and_fd(kind):
    rng = np.random.default_rng(2)
    m = init_model(kind, 3, 4, hidden=6, seed=3)
    X = rng.normal(size=(5, 3))
    logits, cache = forward(m, X)
    for g in backward(m, cache, np.zeros_like(logits)).values():
        assert not g.any()
    G = rng.normal(size=logits.shape)
    grads = backward(m, cache, G)
    h = 1e-6
    for name, w in m.weights.items():
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + h
            up = (predict_logits(m, X) * G).sum()
            w[idx] = old - h
            down = (predict_logits(m, X) * G).sum()
            w[idx] = old
            assert grads[name][idx] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-7)


def test_shape_errors():
    m = init_model("linear", 3, 4, seed=0)
    with pytest.raises(DimensionError):
        forward(m, np.zeros((2, 5)))
    logits, cache = forward(m, np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        backward(m, cache, np.zeros((2, 5)))


def test_init_validation():
    with pytest.raises(InvalidInputError):
        init_model("cnn", 2, 3)
    with pytest.raises(InvalidInputError):
        init_model("mlp", 2, 3, hidden=0)


@pytest.mark.parametrize("kind", ["linear", "mlp"])
def test_json_round_trip_exact(tmp_path, kind):
    m = init_model(kind, 4, 3, hidden=5, seed=11)
    m.weights[next(iter(m.weights))][0, 0] = 0.1 + 0.2
    m.save(tmp_path / "m.json")
    assert ModelParams.load(tmp_path / "m.json") == m


def test_json_schema_errors():
    good = init_model("linear", 2, 3, seed=0).to_dict()
    bad = dict(good, weights={"W": good["weights"]["W"][:-1], "b": good["weights"]["b"]})
    with pytest.raises(SchemaError):
        ModelParams.from_dict(bad)
    with pytest.raises(SchemaError):
        ModelParams.from_dict({"kind": "linear"})
    with pytest.raises(SchemaError):
        ModelParams.from_dict(dict(good, weights={"W": [float("nan")] * 6, "b": [0.0] * 3}))
