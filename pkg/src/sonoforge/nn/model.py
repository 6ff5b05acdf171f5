"""The 13-layer convolutional classifier and its checkpoint format."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import functional as F

CONV_FILTERS = (64, 128, 256, 256)
DENSE_UNITS = 256
DROPOUT_RATE = 0.5
BN_EPS = 1e-3
BN_MOMENTUM = 0.99

CHECKPOINT_MAGIC = b"SFM1"


class GeometryError(ValueError):
    """A spatial dimension collapsed to zero inside the network."""


@dataclass(frozen=True)
class ModelSpec:
    """Input geometry and class count; the layer stack itself is fixed."""

    input_height: int
    input_width: int
    n_classes: int = 50

    def __post_init__(self):
        if self.input_height < 1 or self.input_width < 1:
            raise ValueError("input dimensions must be positive")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")


def geometry_chain(height: int, width: int, n_pools: int = 4):
    """Spatial dims after each 2x2 ceiling pool, input first."""
    dims = [(height, width)]
    for _ in range(n_pools):
        h, w = dims[-1]
        dims.append(((h + 1) // 2, (w + 1) // 2))
    return dims


class FreqNorm:
    """Batch normalization with statistics per frequency row."""

    def __init__(self, n_rows, dtype):
        self.gamma = np.ones(n_rows, dtype=dtype)
        self.beta = np.zeros(n_rows, dtype=dtype)
        self.running_mean = np.zeros(n_rows, dtype=dtype)
        self.running_var = np.ones(n_rows, dtype=dtype)
        self.d_gamma = np.zeros_like(self.gamma)
        self.d_beta = np.zeros_like(self.beta)
        self._cache = None

    def forward(self, x, train, rng=None):
        if train:
            mean, var = F.batchnorm_stats(x)
            y, xhat, inv_std = F.batchnorm_apply(
                x, mean, var, self.gamma, self.beta, BN_EPS
            )
            self._cache = (xhat, inv_std)
            self.running_mean = BN_MOMENTUM * self.running_mean + (
                1.0 - BN_MOMENTUM
            ) * mean.astype(self.running_mean.dtype)
            self.running_var = BN_MOMENTUM * self.running_var + (
                1.0 - BN_MOMENTUM
            ) * var.astype(self.running_var.dtype)
            return y
        y, _, _ = F.batchnorm_apply(
            x, self.running_mean, self.running_var, self.gamma, self.beta, BN_EPS
        )
        return y

    def backward(self, dy):
        xhat, inv_std = self._cache
        dx, self.d_gamma, self.d_beta = F.batchnorm_backward(
            dy, xhat, inv_std, self.gamma
        )
        self._cache = None
        return dx

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.d_gamma, "beta": self.d_beta}

    def extra_state(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}


class ConvRelu:
    """3x3 same-padding convolution with bias, followed by ReLU."""

    def __init__(self, cin, cout, rng, dtype):
        limit = np.sqrt(6.0 / (9 * cin + 9 * cout))
        self.kernel = rng.uniform(-limit, limit, (3, 3, cin, cout)).astype(dtype)
        self.bias = np.zeros(cout, dtype=dtype)
        self.d_kernel = np.zeros_like(self.kernel)
        self.d_bias = np.zeros_like(self.bias)
        self._cache = None

    def forward(self, x, train, rng=None):
        pre = F.conv2d(x, self.kernel, self.bias)
        self._cache = (x, pre > 0)
        return F.relu(pre)

    def backward(self, dy):
        x, positive = self._cache
        dpre = F.relu_backward(dy, positive)
        dx, self.d_kernel, self.d_bias = F.conv2d_backward(x, self.kernel, dpre)
        self._cache = None
        return dx

    def params(self):
        return {"kernel": self.kernel, "bias": self.bias}

    def grads(self):
        return {"kernel": self.d_kernel, "bias": self.d_bias}

    def extra_state(self):
        return {}


class MaxPool:
    def __init__(self):
        self._cache = None

    def forward(self, x, train, rng=None):
        y = F.maxpool2(x)
        self._cache = (x, y)
        return y

    def backward(self, dy):
        x, y = self._cache
        self._cache = None
        return F.maxpool2_backward(x, y, dy)

    def params(self):
        return {}

    def grads(self):
        return {}

    def extra_state(self):
        return {}


class Flatten:
    def __init__(self):
        self._shape = None

    def forward(self, x, train, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)

    def params(self):
        return {}

    def grads(self):
        return {}

    def extra_state(self):
        return {}


class DenseLayer:
    """Affine layer, optionally with ReLU."""

    def __init__(self, d_in, d_out, rng, dtype, activation):
        limit = np.sqrt(6.0 / (d_in + d_out))
        self.weights = rng.uniform(-limit, limit, (d_in, d_out)).astype(dtype)
        self.bias = np.zeros(d_out, dtype=dtype)
        self.d_weights = np.zeros_like(self.weights)
        self.d_bias = np.zeros_like(self.bias)
        self.activation = activation
        self._cache = None

    def forward(self, x, train, rng=None):
        pre = F.dense(x, self.weights, self.bias)
        if self.activation == "relu":
            self._cache = (x, pre > 0)
            return F.relu(pre)
        self._cache = (x, None)
        return pre

    def backward(self, dy):
        x, positive = self._cache
        if positive is not None:
            dy = F.relu_backward(dy, positive)
        dx, self.d_weights, self.d_bias = F.dense_backward(x, self.weights, dy)
        self._cache = None
        return dx

    def params(self):
        return {"weights": self.weights, "bias": self.bias}

    def grads(self):
        return {"weights": self.d_weights, "bias": self.d_bias}

    def extra_state(self):
        return {}


class Dropout:
    def __init__(self, rate):
        self.rate = rate
        self._mask = None

    def forward(self, x, train, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs a random generator")
        y, self._mask = F.dropout(x, self.rate, rng)
        return y

    def backward(self, dy):
        if self._mask is None:
            return dy
        return F.dropout_backward(dy, self._mask, self.rate)

    def params(self):
        return {}

    def grads(self):
        return {}

    def extra_state(self):
        return {}


class Model:
    """Ordered layer stack with dict-style parameter access."""

    def __init__(self, spec: ModelSpec, layers, dtype):
        self.spec = spec
        self.layers = layers  # list of (name, layer)
        self.dtype = dtype

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1:] != (
            self.spec.input_height,
            self.spec.input_width,
            1,
        ):
            raise ValueError(
                f"input shape {x.shape} does not match spec "
                f"(N, {self.spec.input_height}, {self.spec.input_width}, 1)"
            )
        for _, layer in self.layers:
            x = layer.forward(x, train, rng)
        return x

    def backward(self, dlogits):
        dy = dlogits
        for _, layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def params(self):
        out = {}
        for name, layer in self.layers:
            for key, value in layer.params().items():
                out[f"{name}/{key}"] = value
        return out

    def grads(self):
        out = {}
        for name, layer in self.layers:
            for key, value in layer.grads().items():
                out[f"{name}/{key}"] = value
        return out

    def set_param(self, name, value):
        layer_name, key = name.split("/")
        layer = dict(self.layers)[layer_name]
        if not hasattr(layer, _ATTR_OF[key]):
            raise KeyError(name)
        setattr(layer, _ATTR_OF[key], value)

    def state_tensors(self):
        """Trainable parameters plus running statistics, declaration order."""
        out = {}
        for name, layer in self.layers:
            for key, value in layer.params().items():
                out[f"{name}/{key}"] = value
            for key, value in layer.extra_state().items():
                out[f"{name}/{key}"] = value
        return out

    def parameter_count(self):
        return sum(int(p.size) for p in self.params().values())


_ATTR_OF = {
    "gamma": "gamma",
    "beta": "beta",
    "running_mean": "running_mean",
    "running_var": "running_var",
    "kernel": "kernel",
    "bias": "bias",
    "weights": "weights",
}


def build_model(spec: ModelSpec, rng=None, dtype=np.float32) -> Model:
    """Construct the fixed 13-layer stack for the given input geometry.

    Frequency-axis batch norm, four conv(3x3, ReLU) + maxpool(2x2)
    stages with 64/128/256/256 filters, flatten, dense 256 ReLU,
    dropout 0.5, dense softmax head. Weights are Glorot-uniform draws
    from ``rng``; biases start at zero.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    dims = geometry_chain(spec.input_height, spec.input_width)
    if any(h < 1 or w < 1 for h, w in dims):
        raise GeometryError(f"spatial chain collapsed: {dims}")
    h_out, w_out = dims[-1]
    flat = h_out * w_out * CONV_FILTERS[-1]
    layers = [
        ("freq_norm", FreqNorm(spec.input_height, dtype)),
        ("conv1", ConvRelu(1, CONV_FILTERS[0], rng, dtype)),
        ("pool1", MaxPool()),
        ("conv2", ConvRelu(CONV_FILTERS[0], CONV_FILTERS[1], rng, dtype)),
        ("pool2", MaxPool()),
        ("conv3", ConvRelu(CONV_FILTERS[1], CONV_FILTERS[2], rng, dtype)),
        ("pool3", MaxPool()),
        ("conv4", ConvRelu(CONV_FILTERS[2], CONV_FILTERS[3], rng, dtype)),
        ("pool4", MaxPool()),
        ("flatten", Flatten()),
        ("dense1", DenseLayer(flat, DENSE_UNITS, rng, dtype, "relu")),
        ("dropout", Dropout(DROPOUT_RATE)),
        ("dense2", DenseLayer(DENSE_UNITS, spec.n_classes, rng, dtype, None)),
    ]
    return Model(spec, layers, dtype)


def save_checkpoint(model: Model, path):
    """Write magic, a JSON manifest, then each tensor as little-endian f32."""
    tensors = model.state_tensors()
    manifest = {
        "format": "SFM1",
        "input_height": model.spec.input_height,
        "input_width": model.spec.input_width,
        "n_classes": model.spec.n_classes,
        "tensors": [[name, list(t.shape)] for name, t in tensors.items()],
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for tensor in tensors.values():
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


class CheckpointError(ValueError):
    """Malformed or truncated checkpoint file."""


def load_checkpoint(path, dtype=np.float32) -> Model:
    """Rebuild a model from an SFM1 file, restoring every tensor."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if len(raw) < 8:
        raise CheckpointError("truncated checkpoint header")
    (manifest_len,) = struct.unpack_from("<I", raw, 4)
    start = 8
    if len(raw) < start + manifest_len:
        raise CheckpointError("truncated checkpoint manifest")
    try:
        manifest = json.loads(raw[start : start + manifest_len])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"unreadable manifest: {exc}") from exc
    spec = ModelSpec(
        manifest["input_height"], manifest["input_width"], manifest["n_classes"]
    )
    model = build_model(spec, np.random.default_rng(0), dtype)
    tensors = model.state_tensors()
    declared = [name for name, _ in manifest["tensors"]]
    if declared != list(tensors.keys()):
        raise CheckpointError("manifest tensor list does not match the architecture")
    offset = start + manifest_len
    for name, shape in manifest["tensors"]:
        expect = tensors[name]
        if list(expect.shape) != shape:
            raise CheckpointError(f"tensor {name} has shape {shape}, want {list(expect.shape)}")
        nbytes = expect.size * 4
        if len(raw) < offset + nbytes:
            raise CheckpointError(f"truncated tensor data at {name}")
        flat = np.frombuffer(raw[offset : offset + nbytes], dtype="<f4")
        model.set_param(name, flat.reshape(expect.shape).astype(dtype))
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError("trailing bytes after final tensor")
    return model
