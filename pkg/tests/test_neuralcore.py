import numpy as np
import pytest
from hypothesis import given, strategies as st

from tomoguard.errors import DimensionMismatch, InvariantViolation, NonFiniteOutput, NonFiniteValue
from tomoguard.neuralcore import (Adam, DenseLayer, DenseNet, ParamVector, forward, init_params,
                                  load_checkpoint, numeric_gradient, save_checkpoint)


def test_identity_layer():
    net = DenseNet([DenseLayer(np.eye(3), np.zeros(3), "identity")])
    assert forward(net, [1.0, -2.0, 3.0]).tolist() == [1.0, -2.0, 3.0]


def test_zero_weights_constant_bias():
    b = np.array([0.5, -1.5])
    net = DenseNet([DenseLayer(np.zeros((2, 4)), b, "identity")])
    assert forward(net, np.arange(4.0)).tolist() == b.tolist()


def test_hand_two_layer_forward():
    # relu(W1 @ (1, -1) + (2, 0)) = relu((1, -2)) = (1, 0); then 3 * 1 - 4 * 0 + 0.5
    l1 = DenseLayer(np.array([[1.0, 2.0], [-1.0, 1.0]]), np.array([2.0, 0.0]), "relu")
    l2 = DenseLayer(np.array([[3.0, -4.0]]), np.array([0.5]), "identity")
    assert forward(DenseNet([l1, l2]), [1.0, -1.0]).tolist() == [3.5]


def test_forward_errors():
    net = init_params([3, 2], 0)
    with pytest.raises(DimensionMismatch):
        forward(net, np.zeros(4))
    big = DenseNet([DenseLayer(np.full((1, 1), 1e308), np.zeros(1), "identity")])
    with np.errstate(over="ignore"), pytest.raises(NonFiniteOutput):
        forward(big, [1e308])


def test_batch_forward_matches_rows():
    net = init_params([5, 7, 3], 2)
    X = np.random.default_rng(0).normal(size=(4, 5))
    np.testing.assert_allclose(forward(net, X), np.stack([forward(net, x) for x in X]), rtol=1e-12)


def test_init_params():
    a, b = init_params([4, 8], 3), init_params([4, 8], 3)
    assert np.array_equal(a.layers[0].weight, b.layers[0].weight)
    assert np.all(np.abs(a.layers[0].weight) <= np.sqrt(6 / 12))
    assert not a.layers[0].bias.any()
    assert not np.array_equal(a.layers[0].weight, init_params([4, 8], 4).layers[0].weight)
    with pytest.raises(InvariantViolation):
        init_params([4], 0)


def test_gradient_examples():
    g = numeric_gradient(lambda t: float(t @ t), np.array([1.0, 2.0]), h=1e-4)
    np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-6)
    assert not numeric_gradient(lambda t: 3.0, np.zeros(5)).any()
    c = np.array([0.5, -2.0, 4.0])
    np.testing.assert_allclose(numeric_gradient(lambda t: float(c @ t), np.ones(3), h=0.25), c,
                               rtol=1e-14, atol=1e-14)
    with pytest.raises(NonFiniteValue):
        numeric_gradient(lambda t: float("nan"), np.zeros(2))


def test_spsa_unbiased_on_linear():
    c = np.arange(1.0, 6.0)
    g = numeric_gradient(lambda t: float(c @ t), np.zeros(5), h=0.1, method="spsa",
                         rng=np.random.default_rng(0), probes=4000)
    np.testing.assert_allclose(g, c, atol=0.5)


def _backprop(net, x, y):
    """Analytic gradient of 0.5 * |net(x) - y|^2 for ReLU-then-identity nets."""
    acts, pre = [np.asarray(x, float)], []
    for layer in net.layers:
        z = layer.weight @ acts[-1] + layer.bias
        pre.append(z)
        acts.append(np.maximum(z, 0) if layer.activation == "relu" else z)
    delta = acts[-1] - y
    grads = {}
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        if layer.activation == "relu":
            delta = delta * (pre[i] > 0)
        grads[f"{i}.weight"] = np.outer(delta, acts[i])
        grads[f"{i}.bias"] = delta
        delta = layer.weight.T @ delta
    return grads


@pytest.mark.parametrize("seed", range(10))
def test_numeric_matches_backprop(seed):
    rng = np.random.default_rng(seed)
    net = init_params([4, 6, 3], seed)
    x, y = rng.normal(size=4), rng.normal(size=3)
    pv = ParamVector.from_arrays(net.named_arrays())

    def loss(v):
        out = forward(net.load_arrays(pv.with_values(v).to_arrays()), x)
        return 0.5 * float((out - y) @ (out - y))

    num = pv.with_values(numeric_gradient(loss, pv.values, h=1e-6)).to_arrays()
    ana = _backprop(net, x, y)
    for k, g in ana.items():
        np.testing.assert_allclose(num[k], g, rtol=1e-4, atol=1e-7)


@given(st.lists(st.integers(1, 6), min_size=2, max_size=4), st.integers(0, 1000))
def test_param_vector_round_trip(dims, seed):
    net = init_params(dims, seed)
    arrays = net.named_arrays("net.")
    back = ParamVector.from_arrays(arrays).to_arrays()
    assert list(back) == list(arrays)
    for k in arrays:
        assert back[k].tobytes() == np.asarray(arrays[k], float).tobytes()
    rebuilt = net.load_arrays(back, "net.")
    x = np.ones(dims[0])
    assert forward(rebuilt, x).tobytes() == forward(net, x).tobytes()


def test_checkpoint_round_trip(tmp_path):
    pv = ParamVector.from_arrays(init_params([3, 5, 2], 9).named_arrays())
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, pv, {"note": "x"})
    back, meta = load_checkpoint(path)
    assert back.values.tobytes() == pv.values.tobytes()
    assert back.index == pv.index and meta == {"note": "x"}
    raw = path.read_bytes()
    head, _, body = raw.partition(b"\n")
    assert len(body) == 8 * pv.values.size
    assert np.frombuffer(body, "<f8").tobytes() == pv.values.astype("<f8").tobytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(DimensionMismatch):
        load_checkpoint(path)


def test_adam_descends_quadratic():
    opt = Adam(2, lr=0.1)
    t = np.array([3.0, -2.0])
    for _ in range(300):
        t = opt.step(t, 2 * t)
    assert np.linalg.norm(t) < 0.05
