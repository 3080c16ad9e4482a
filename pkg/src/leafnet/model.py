"""The leaf-classification CNN: specification, layer objects and builder.

The default :class:`ModelSpec` is the full architecture::

    6 x [conv 3x3 (32, then 64 filters) -> ReLU -> maxpool 2x2]
    -> flatten -> dense 64 -> ReLU -> batchnorm -> dropout 0.1
    -> dense C -> softmax

Shorter ``conv_filters`` tuples and smaller inputs give reduced variants for
tests and gradient checks.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L
from .errors import ShapeError
from .metrics import softmax
from .tensor import dtype_for

DEFAULT_FILTERS = (32, 64, 64, 64, 64, 64)


@dataclass
class ModelSpec:
    num_classes: int
    input_shape: tuple = (256, 256, 3)
    conv_filters: tuple = DEFAULT_FILTERS
    kernel_size: int = 3
    dense_units: int = 64
    dropout: float = 0.1
    padding: str = "valid"
    bn_epsilon: float = 1e-3
    bn_momentum: float = 0.99

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        self.conv_filters = tuple(int(f) for f in self.conv_filters)
        if self.num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.num_classes}")
        if self.padding not in ("valid", "same"):
            raise ValueError(f"padding must be 'valid' or 'same', got {self.padding!r}")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def shape_chain(self):
        """Spatial (h, w) after the input and after every conv and pool."""
        h, w, _ = self.input_shape
        shrink = 0 if self.padding == "same" else self.kernel_size - 1
        chain = [(h, w)]
        for i, _ in enumerate(self.conv_filters):
            h, w = h - shrink, w - shrink
            if h < 2 or w < 2:
                raise ShapeError(
                    f"input {self.input_shape[:2]} too small: conv {i + 1} leaves {h}x{w}, "
                    "pooling needs at least 2x2"
                )
            chain.append((h, w))
            h, w = h // 2, w // 2
            chain.append((h, w))
        return chain

    def flatten_width(self):
        h, w = self.shape_chain()[-1]
        last = self.conv_filters[-1] if self.conv_filters else self.input_shape[2]
        return h * w * last


def full_spec(num_classes, padding="valid", input_size=256):
    return ModelSpec(num_classes=num_classes, input_shape=(input_size, input_size, 3),
                     padding=padding)


class Layer:
    kind = "layer"

    def __init__(self, name):
        self.name = name
        self.grads = {}

    def params(self):
        return {}

    def buffers(self):
        return {}

    def forward(self, x, mode, rng):
        raise NotImplementedError

    def backward(self, upstream):
        raise NotImplementedError


class Conv2D(Layer):
    kind = "conv"

    def __init__(self, name, p):
        super().__init__(name)
        self.p = p

    def params(self):
        return {"kernels": self.p.kernels, "bias": self.p.bias}

    def forward(self, x, mode, rng):
        out, self._cache = L.conv2d_forward(x, self.p)
        return out

    def backward(self, upstream):
        g = L.conv2d_backward(self._cache, upstream)
        self.grads = {"kernels": g["kernels"], "bias": g["bias"]}
        return g["input"]


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, mode, rng):
        out, self._cache = L.relu_forward(x)
        return out

    def backward(self, upstream):
        return L.relu_backward(self._cache, upstream)


class MaxPool2D(Layer):
    kind = "pool"

    def forward(self, x, mode, rng):
        out, self._cache = L.maxpool2d_forward(x)
        return out

    def backward(self, upstream):
        return L.maxpool2d_backward(self._cache, upstream)


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, mode, rng):
        out, self._cache = L.flatten_forward(x)
        return out

    def backward(self, upstream):
        return L.flatten_backward(self._cache, upstream)


class Dense(Layer):
    kind = "dense"

    def __init__(self, name, p):
        super().__init__(name)
        self.p = p

    def params(self):
        return {"weights": self.p.weights, "bias": self.p.bias}

    def forward(self, x, mode, rng):
        out, self._cache = L.dense_forward(x, self.p)
        return out

    def backward(self, upstream):
        g = L.dense_backward(self._cache, upstream)
        self.grads = {"weights": g["weights"], "bias": g["bias"]}
        return g["input"]


class BatchNorm(Layer):
    kind = "batchnorm"

    def __init__(self, name, p):
        super().__init__(name)
        self.p = p

    def params(self):
        return {"gamma": self.p.gamma, "beta": self.p.beta}

    def buffers(self):
        return {"running_mean": self.p.running_mean, "running_var": self.p.running_var}

    def forward(self, x, mode, rng):
        out, self._cache = L.batchnorm_forward(x, self.p, mode)
        return out

    def backward(self, upstream):
        g = L.batchnorm_backward(self._cache, upstream)
        self.grads = {"gamma": g["gamma"], "beta": g["beta"]}
        return g["input"]


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, name, rate):
        super().__init__(name)
        self.rate = rate

    def forward(self, x, mode, rng):
        out, self._mask = L.dropout_forward(x, self.rate, mode, rng)
        return out

    def backward(self, upstream):
        return L.dropout_backward(self._mask, upstream)


class Softmax(Layer):
    """Terminal softmax. Training backpropagates from the logits instead."""

    kind = "softmax"

    def forward(self, x, mode, rng):
        return softmax(x)


class Model:
    def __init__(self, spec, layers, precision="float32"):
        self.spec = spec
        self.layers = layers
        self.precision = precision
        self.dtype = dtype_for(precision)

    def layer_counts(self):
        counts = {}
        for layer in self.layers:
            counts[layer.kind] = counts.get(layer.kind, 0) + 1
        return counts

    def parameters(self):
        """Trainable arrays as ``{"layer.param": array}`` in declaration order."""
        return {f"{l.name}.{k}": v for l in self.layers for k, v in l.params().items()}

    def gradients(self):
        return {f"{l.name}.{k}": v for l in self.layers for k, v in l.grads.items()}

    def buffers(self):
        return {f"{l.name}.{k}": v for l in self.layers for k, v in l.buffers().items()}

    def state_arrays(self):
        return {**self.parameters(), **self.buffers()}

    def load_state_arrays(self, arrays):
        own = self.state_arrays()
        if set(own) != set(arrays):
            raise ShapeError(f"state names differ: {sorted(set(own) ^ set(arrays))}")
        for key, value in arrays.items():
            if own[key].shape != value.shape:
                raise ShapeError(f"{key}: shape {value.shape} != model shape {own[key].shape}")
        for layer in self.layers:
            for k in list(layer.params()) + list(layer.buffers()):
                setattr(layer.p, k, np.array(arrays[f"{layer.name}.{k}"], dtype=self.dtype))

    def num_parameters(self):
        return int(sum(v.size for v in self.parameters().values()))

    def forward_logits(self, x, mode="infer", rng=None):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1:] != self.spec.input_shape:
            raise ShapeError(f"model expects [n, {', '.join(map(str, self.spec.input_shape))}] "
                             f"input, got {x.shape}")
        for layer in self.layers:
            if layer.kind == "softmax":
                break
            x = layer.forward(x, mode, rng)
        return x

    def forward(self, x, mode="infer", rng=None):
        return softmax(self.forward_logits(x, mode, rng))

    predict_proba = forward

    def backward(self, dlogits):
        """Backpropagate a gradient w.r.t. the logits; fills layer grads."""
        g = dlogits
        for layer in reversed(self.layers):
            if layer.kind == "softmax":
                continue
            g = layer.backward(g)
        return g


def build_model(spec, seed=0, precision="float32"):
    """Instantiate ``spec`` with He-uniform kernels and zero biases."""
    spec.shape_chain()  # validates the input size
    dtype = dtype_for(precision)
    rng = np.random.default_rng(seed)
    k = spec.kernel_size
    cin = spec.input_shape[2]
    layers = []
    for i, cout in enumerate(spec.conv_filters, start=1):
        fan_in = k * k * cin
        p = L.ConvParams(L.he_uniform(rng, (k, k, cin, cout), fan_in, dtype),
                         np.zeros(cout, dtype), spec.padding)
        layers += [Conv2D(f"conv{i}", p), ReLU(f"relu{i}"), MaxPool2D(f"pool{i}")]
        cin = cout
    flat = spec.flatten_width()
    u = spec.dense_units
    layers.append(Flatten("flatten"))
    layers.append(Dense("dense1", L.DenseParams(L.he_uniform(rng, (flat, u), flat, dtype),
                                                np.zeros(u, dtype))))
    layers.append(ReLU("relu_dense"))
    layers.append(BatchNorm("bn", L.BatchNormParams(
        np.ones(u, dtype), np.zeros(u, dtype), np.zeros(u, dtype), np.ones(u, dtype),
        spec.bn_epsilon, spec.bn_momentum)))
    layers.append(Dropout("dropout", spec.dropout))
    c = spec.num_classes
    layers.append(Dense("dense2", L.DenseParams(L.he_uniform(rng, (u, c), u, dtype),
                                                np.zeros(c, dtype))))
    layers.append(Softmax("softmax"))
    return Model(spec, layers, precision)
