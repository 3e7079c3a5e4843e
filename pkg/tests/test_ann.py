import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikenet import ann
from spikenet.ann import AnnModel, Layer, LabeledBatch


def _loop_forward(model, x):
    """Scalar reference: explicit sums, no matrix products."""
    a = list(map(float, x))
    for layer in model.layers:
        out = []
        for i in range(layer.fan_out):
            s = float(layer.bias[i])
            for j in range(layer.fan_in):
                s += float(layer.weight[i, j]) * a[j]
            out.append(max(s, 0.0) if layer.activation == "relu" else s)
        a = out
    return np.array(a)


def test_identity_single_layer():
    m = AnnModel([Layer(np.eye(3), np.zeros(3), "identity")])
    _, out = ann.forward(m, [0.2, 0.5, 0.9])
    assert out.tolist() == [0.2, 0.5, 0.9]


def test_relu_zeroes_negative():
    m = AnnModel([Layer(np.array([[1.0], [-1.0]]), np.zeros(2), "relu")])
    _, out = ann.forward(m, [0.5])
    assert out.tolist() == [0.5, 0.0]


def test_zero_input_gives_bias_path():
    m = AnnModel([Layer(np.ones((2, 3)), [0.3, -0.2], "relu"), Layer(np.ones((1, 2)), [0.1], "identity")])
    _, out = ann.forward(m, np.zeros(3))
    assert out.tolist() == [0.4]


def test_forward_matches_scalar_loop():
    rng = np.random.default_rng(0)
    for _ in range(10):
        m = ann.init_model([7, 5, 4, 3], seed=int(rng.integers(1000)))
        for layer in m.layers:
            layer.bias[:] = rng.normal(size=layer.fan_out)
        x = rng.random(7)
        np.testing.assert_allclose(ann.forward(m, x)[1], _loop_forward(m, x), atol=1e-12, rtol=0)


def test_batch_forward_is_rowwise():
    rng = np.random.default_rng(1)
    m = ann.init_model([6, 4, 3], seed=2)
    X = rng.random((5, 6))
    batch = ann.forward(m, X)[1]
    for i in range(5):
        np.testing.assert_allclose(batch[i], ann.forward(m, X[i])[1], atol=1e-14, rtol=0)


def test_shape_mismatch():
    with pytest.raises(ann.ModelError):
        AnnModel([Layer(np.ones((3, 4)), np.zeros(3)), Layer(np.ones((2, 5)), np.zeros(2))])
    with pytest.raises(ann.ModelError):
        ann.forward(ann.init_model([4, 2], seed=0), np.zeros(5))


@pytest.mark.parametrize("seed", range(5))
def test_gradient_check_random_models(seed):
    rng = np.random.default_rng(seed)
    m = ann.init_model([6, 5, 4], seed=seed)
    for layer in m.layers:
        layer.bias[:] = rng.normal(0, 0.5, size=layer.fan_out)
    assert ann.gradient_check(m, rng.random(6), int(rng.integers(4)), n_params=60, seed=seed) < 1e-4


def test_gradient_check_linear_model_is_tight():
    rng = np.random.default_rng(3)
    m = AnnModel([Layer(rng.normal(size=(3, 4)), rng.normal(size=3), "identity")])
    assert ann.gradient_check(m, rng.random(4), 1, n_params=15) < 1e-7


def test_dead_relu_gets_zero_gradient():
    W1 = np.array([[1.0, 1.0], [-1.0, -1.0]])
    m = AnnModel([Layer(W1, np.array([0.0, -1.0])), Layer(np.ones((2, 2)), np.zeros(2), "identity")])
    _, grads = ann.loss_and_gradients(m, [[0.5, 0.5]], [0])
    assert np.all(grads[0][0][1] == 0) and grads[0][1][1] == 0


def test_zero_learning_rate_leaves_parameters():
    rng = np.random.default_rng(0)
    m = ann.init_model([4, 3, 2], seed=1)
    data = LabeledBatch(rng.random((20, 4)), rng.integers(0, 2, 20))
    out = ann.train_sgd(m, data, epochs=2, learning_rate=0.0, seed=0)
    for a, b in zip(m.layers, out.layers):
        assert np.array_equal(a.weight, b.weight) and np.array_equal(a.bias, b.bias)


def test_separable_toy_problem():
    rng = np.random.default_rng(4)
    centers = np.array([[0.2, 0.2], [0.8, 0.8], [0.2, 0.8]])
    labels = rng.integers(0, 3, 300)
    X = np.clip(centers[labels] + rng.normal(0, 0.05, (300, 2)), 0, 1)
    data = LabeledBatch(X, labels)
    m = ann.train_sgd(ann.init_model([2, 16, 3], seed=0), data, epochs=50, learning_rate=0.5, seed=0)
    assert ann.accuracy(m, data) >= 0.99


def test_full_batch_descent_does_not_increase_loss():
    rng = np.random.default_rng(5)
    data = LabeledBatch(rng.random((40, 5)), rng.integers(0, 3, 40))
    m = ann.init_model([5, 8, 3], seed=3)
    losses = []
    for epoch in range(20):
        losses.append(ann.loss_and_gradients(m, data.inputs, data.labels)[0])
        m = ann.train_sgd(m, data, epochs=1, learning_rate=0.05, seed=epoch, batch_size=40)
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_training_is_deterministic_and_records_history():
    rng = np.random.default_rng(6)
    data = LabeledBatch(rng.random((30, 4)), rng.integers(0, 2, 30))
    h1, h2 = [], []
    a = ann.train_sgd(ann.init_model([4, 3, 2], seed=0), data, 3, 0.1, seed=9, test=data, history=h1)
    b = ann.train_sgd(ann.init_model([4, 3, 2], seed=0), data, 3, 0.1, seed=9, test=data, history=h2)
    assert h1 == h2 and [r["epoch"] for r in h1] == [1, 2, 3]
    assert all(np.array_equal(x.weight, y.weight) for x, y in zip(a.layers, b.layers))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergent_training_raises():
    data = LabeledBatch(np.ones((4, 2)), [0, 1, 0, 1])
    with pytest.raises(ann.TrainingError, match="epoch"):
        ann.train_sgd(ann.init_model([2, 4, 2], seed=0), data, 5, 1e300, seed=0)


def test_inputs_must_be_normalised():
    with pytest.raises(ValueError):
        LabeledBatch(np.array([[0.0, 255.0]]), [0])


class TestWeightFiles:
    def test_round_trip_is_exact(self, tmp_path):
        m = ann.init_model([5, 4, 3], seed=7)
        ann.save_weights(m, tmp_path / "w.json")
        back = ann.load_weights(tmp_path / "w.json")
        for a, b in zip(m.layers, back.layers):
            assert np.array_equal(a.weight, b.weight) and np.array_equal(a.bias, b.bias)
            assert a.activation == b.activation

    def test_truncated_file(self, tmp_path):
        m = ann.init_model([3, 2], seed=0)
        ann.save_weights(m, tmp_path / "w.json")
        text = (tmp_path / "w.json").read_text()
        (tmp_path / "w.json").write_text(text[: len(text) // 2])
        with pytest.raises(ann.WeightFileError, match="line"):
            ann.load_weights(tmp_path / "w.json")

    def test_nan_rejected(self, tmp_path):
        doc = ann.model_to_dict(ann.init_model([2, 2], seed=0))
        text = json.dumps(doc).replace(json.dumps(doc["layers"][0]["bias"]), "[NaN, 0.0]")
        (tmp_path / "w.json").write_text(text)
        with pytest.raises(ann.WeightFileError, match="non-finite"):
            ann.load_weights(tmp_path / "w.json")

    def test_shape_mismatch_located(self, tmp_path):
        doc = ann.model_to_dict(ann.init_model([3, 2, 2], seed=0))
        doc["layers"][1]["fan_in"] = 5
        (tmp_path / "w.json").write_text(json.dumps(doc))
        with pytest.raises(ann.WeightFileError, match=r"layers\[1\]"):
            ann.load_weights(tmp_path / "w.json")

    def test_wrong_format_tag(self, tmp_path):
        (tmp_path / "w.json").write_text('{"format": "other", "layers": []}')
        with pytest.raises(ann.WeightFileError, match="format"):
            ann.load_weights(tmp_path / "w.json")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.lists(st.integers(1, 6), min_size=2, max_size=4))
def test_dict_round_trip_property(seed, sizes):
    m = ann.init_model(sizes, seed=seed)
    back = ann.model_from_dict(json.loads(json.dumps(ann.model_to_dict(m))))
    assert all(np.array_equal(a.weight, b.weight) for a, b in zip(m.layers, back.layers))
