import numpy as np
import pytest

from leafnet.errors import ShapeError
from leafnet.gradcheck import numerical_gradient, relative_error
from leafnet.metrics import cross_entropy, softmax
from leafnet.model import ModelSpec, build_model, full_spec
from leafnet.optim import Optimizer, OptimizerConfig


def count_oracle(c, filters=(32, 64, 64, 64, 64, 64), k=3, cin=3, flat=256, units=64):
    total = 0
    for f in filters:
        total += k * k * cin * f + f
        cin = f
    return total + flat * units + units + 2 * units + units * c + c


def test_full_model_layer_counts():
    m = build_model(full_spec(10))
    counts = m.layer_counts()
    assert (counts["conv"], counts["pool"], counts["dense"]) == (6, 6, 2)
    assert counts["batchnorm"] == counts["dropout"] == counts["flatten"] == counts["softmax"] == 1
    kinds = [l.kind for l in m.layers]
    assert kinds[:3] == ["conv", "relu", "pool"]
    assert kinds[-7:] == ["flatten", "dense", "relu", "batchnorm", "dropout", "dense", "softmax"]


def test_full_parameter_count():
    m = build_model(full_spec(10))
    assert count_oracle(10) == 184330
    assert m.num_parameters() == 184330
    sizes = {k: v.size for k, v in m.parameters().items()}
    assert sizes["conv1.kernels"] + sizes["conv1.bias"] == 896
    assert sizes["conv2.kernels"] + sizes["conv2.bias"] == 18496
    assert sizes["bn.gamma"] + sizes["bn.beta"] == 128
    assert sizes["dense2.weights"] + sizes["dense2.bias"] == 650


def test_shape_chain_and_flatten():
    chain = [h for h, _ in full_spec(10).shape_chain()]
    assert chain == [256, 254, 127, 125, 62, 60, 30, 28, 14, 12, 6, 4, 2]
    assert full_spec(10).flatten_width() == 256
    assert full_spec(10, padding="same").flatten_width() == 4 * 4 * 64


def test_input_too_small_rejected():
    with pytest.raises(ShapeError):
        build_model(full_spec(3, input_size=64))
    with pytest.raises(ValueError):
        ModelSpec(num_classes=1)


def test_forward_rows_sum_to_one():
    spec = ModelSpec(5, (32, 32, 3), (4, 8))
    m = build_model(spec, seed=1)
    x = np.random.default_rng(0).random((3, 32, 32, 3)).astype(np.float32)
    p = m.forward(x)
    assert p.shape == (3, 5)
    np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-6)
    with pytest.raises(ShapeError):
        m.forward(x[:, :16])


def test_build_deterministic_from_seed():
    spec = ModelSpec(3, (16, 16, 3), (4,))
    a, b, c = build_model(spec, 7), build_model(spec, 7), build_model(spec, 8)
    for k, v in a.parameters().items():
        np.testing.assert_array_equal(v, b.parameters()[k])
    assert any(not np.array_equal(v, c.parameters()[k]) for k, v in a.parameters().items())


def test_full_forward_runs():
    m = build_model(full_spec(4))
    p = m.forward(np.random.default_rng(0).random((1, 256, 256, 3)))
    assert p.shape == (1, 4)


def test_end_to_end_gradient_check():
    spec = ModelSpec(3, (8, 8, 3), (2, 3), dense_units=4, dropout=0.25, padding="same")
    m = build_model(spec, seed=2, precision="float64")
    rng = np.random.default_rng(0)
    x = rng.random((4, 8, 8, 3))
    y = np.array([0, 1, 2, 1])

    def loss():
        logits = m.forward_logits(x, "train", np.random.default_rng(11))
        return cross_entropy(softmax(logits), y)

    _, dlogits = loss()
    m.backward(dlogits)
    grads = {k: v.copy() for k, v in m.gradients().items()}
    for name, param in m.parameters().items():
        num = numerical_gradient(lambda: loss()[0], param)
        assert relative_error(grads[name], num) < 1e-5, name


def test_lr_zero_step_changes_nothing():
    spec = ModelSpec(2, (16, 16, 3), (4,))
    m = build_model(spec, seed=0)
    before = {k: v.copy() for k, v in m.parameters().items()}
    x = np.random.default_rng(0).random((4, 16, 16, 3))
    _, dlogits = cross_entropy(m.forward(x, "train", np.random.default_rng(0)), [0, 1, 0, 1])
    m.backward(dlogits.astype(np.float32))
    Optimizer(OptimizerConfig("adam", 0.0)).step(m.parameters(), m.gradients())
    for k, v in m.parameters().items():
        np.testing.assert_array_equal(v, before[k])


def test_spec_dict_round_trip():
    spec = ModelSpec(4, (32, 32, 3), (8, 16), padding="same")
    assert ModelSpec.from_dict(spec.to_dict()) == spec
