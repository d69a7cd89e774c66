"""Minimal dense/conv network engine with full activation tracing.

Every layer's post-activation output is traced; neuron ``i`` is a fixed
(layer, offset) slot that is identical for every input of the same model.
Gradients are reverse-mode, driven by a gradient with respect to the whole
trace vector, which lets objectives depend on any subset of neurons rather
than only the final output.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .rng import substream, STREAM_INIT, STREAM_TRAIN


def as_tensor(data, shape=None):
    """Coerce to a float64 array, rejecting non-finite values."""
    arr = np.asarray(data, dtype=np.float64)
    if shape is not None and tuple(arr.shape) != tuple(shape):
        raise ValueError(f"expected shape {tuple(shape)}, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("tensor contains non-finite values")
    return arr


# ---------------------------------------------------------------------------
# layers


class Dense:
    kind = "dense"

    def __init__(self, weight, bias):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("dense layer needs weight (out, in) and bias (out,)")

    def out_shape(self, in_shape):
        if in_shape != (self.weight.shape[1],):
            raise ValueError(
                f"dense layer expects input {( self.weight.shape[1],)}, got {in_shape}"
            )
        return (self.weight.shape[0],)

    def forward(self, x):
        return self.weight @ x + self.bias, x

    def backward(self, cache, g_out, need_param_grads=False):
        g_in = self.weight.T @ g_out
        if not need_param_grads:
            return g_in, None
        return g_in, [np.outer(g_out, cache), g_out.copy()]

    def param_arrays(self):
        return [self.weight, self.bias]

    def descriptor(self):
        return {"kind": "dense",
                "in_width": int(self.weight.shape[1]),
                "out_width": int(self.weight.shape[0])}


class Conv2d:
    kind = "conv2d"

    def __init__(self, kernel, bias, stride=1):
        self.kernel = np.asarray(kernel, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.stride = int(stride)
        if self.kernel.ndim != 4 or self.bias.shape != (self.kernel.shape[0],):
            raise ValueError("conv2d needs kernel (F, C, kh, kw) and bias (F,)")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    def out_shape(self, in_shape):
        f, c, kh, kw = self.kernel.shape
        if len(in_shape) != 3 or in_shape[0] != c:
            raise ValueError(f"conv2d expects (C={c}, H, W) input, got {in_shape}")
        h, w = in_shape[1], in_shape[2]
        if h < kh or w < kw:
            raise ValueError("input smaller than kernel (valid padding)")
        return (f, (h - kh) // self.stride + 1, (w - kw) // self.stride + 1)

    def forward(self, x):
        return kernels.conv2d_forward(x, self.kernel, self.bias, self.stride), x

    def backward(self, cache, g_out, need_param_grads=False):
        g_in = kernels.conv2d_input_grad(g_out, self.kernel, cache.shape, self.stride)
        if not need_param_grads:
            return g_in, None
        g_k, g_b = kernels.conv2d_param_grad(cache, g_out, self.kernel.shape, self.stride)
        return g_in, [g_k, g_b]

    def param_arrays(self):
        return [self.kernel, self.bias]

    def descriptor(self):
        f, c, kh, kw = self.kernel.shape
        return {"kind": "conv2d", "in_channels": int(c), "out_channels": int(f),
                "kernel_h": int(kh), "kernel_w": int(kw), "stride": self.stride}


class Relu:
    kind = "relu"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        return np.maximum(x, 0.0), x

    def backward(self, cache, g_out, need_param_grads=False):
        # subgradient 0 at the kink
        return np.where(cache > 0.0, g_out, 0.0), None

    def param_arrays(self):
        return []

    def descriptor(self):
        return {"kind": "relu"}


class MaxPool2x2:
    kind = "maxpool2x2"

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[1] % 2 or in_shape[2] % 2:
            raise ValueError(f"maxpool2x2 needs (C, even H, even W), got {in_shape}")
        return (in_shape[0], in_shape[1] // 2, in_shape[2] // 2)

    def forward(self, x):
        out, idx = kernels.maxpool2x2_forward(x)
        return out, (idx, x.shape)

    def backward(self, cache, g_out, need_param_grads=False):
        idx, in_shape = cache
        return kernels.maxpool2x2_backward(g_out, idx, in_shape), None

    def param_arrays(self):
        return []

    def descriptor(self):
        return {"kind": "maxpool2x2"}


class Flatten:
    kind = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        return x.reshape(-1), x.shape

    def backward(self, cache, g_out, need_param_grads=False):
        return g_out.reshape(cache), None

    def param_arrays(self):
        return []

    def descriptor(self):
        return {"kind": "flatten"}


class Softmax:
    kind = "softmax"

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ValueError(f"softmax expects a vector, got {in_shape}")
        return in_shape

    def forward(self, x):
        e = np.exp(x - np.max(x))
        p = e / np.sum(e)
        return p, p

    def backward(self, cache, g_out, need_param_grads=False):
        p = cache
        return p * g_out - p * np.dot(p, g_out), None

    def param_arrays(self):
        return []

    def descriptor(self):
        return {"kind": "softmax"}


LAYER_KINDS = {cls.kind: cls for cls in (Dense, Conv2d, Relu, MaxPool2x2, Flatten, Softmax)}


# ---------------------------------------------------------------------------
# model


@dataclass
class ActivationTrace:
    """Flat per-neuron activation snapshot of one forward pass."""

    values: np.ndarray
    output: np.ndarray


@dataclass
class ParamGrads:
    """Per-layer gradients; shapes mirror each layer's parameters."""

    layers: list


class Model:
    def __init__(self, layers, input_shape, arch_name="custom"):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.arch_name = arch_name
        shapes = []
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
            shapes.append(shape)
        self.layer_shapes = shapes
        sizes = [int(np.prod(s)) for s in shapes]
        self.segment_offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.num_neurons = int(self.segment_offsets[-1])

    @property
    def num_classes(self):
        return int(np.prod(self.layer_shapes[-1]))

    def segment(self, layer_idx):
        """Trace index range [start, end) holding layer ``layer_idx`` outputs."""
        return int(self.segment_offsets[layer_idx]), int(self.segment_offsets[layer_idx + 1])

    def copy(self):
        copied = []
        for layer in self.layers:
            if layer.kind == "dense":
                copied.append(Dense(layer.weight.copy(), layer.bias.copy()))
            elif layer.kind == "conv2d":
                copied.append(Conv2d(layer.kernel.copy(), layer.bias.copy(), layer.stride))
            else:
                copied.append(type(layer)())
        return Model(copied, self.input_shape, self.arch_name)

    def forward(self, x):
        trace, _, output = self._forward_cached(x)
        return ActivationTrace(values=trace, output=output)

    def predict(self, x):
        """Argmax class of the final output, lowest index on ties."""
        return int(np.argmax(self.forward(x).output))

    def _forward_cached(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape:
            raise ValueError(f"input shape {x.shape} != model input {self.input_shape}")
        caches = []
        outputs = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
            outputs.append(x)
        trace = np.concatenate([o.reshape(-1) for o in outputs])
        if not np.isfinite(trace).all():
            raise ValueError("non-finite activation value in forward pass")
        return trace, caches, outputs[-1]


# ---------------------------------------------------------------------------
# trace objectives and gradients


class TraceSum:
    """Sum of selected trace entries (all entries when ids is None)."""

    def __init__(self, ids=None):
        self.ids = None if ids is None else np.asarray(ids, dtype=int)

    def value(self, trace):
        if self.ids is None:
            return float(np.sum(trace))
        return float(np.sum(trace[self.ids]))

    def trace_grad(self, trace):
        g = np.zeros_like(trace)
        if self.ids is None:
            g[:] = 1.0
        else:
            g[self.ids] = 1.0
        return g


class AbsDiffSum:
    """Sum over selected neurons of |trace - baseline|; subgradient 0 at ties."""

    def __init__(self, baseline, ids):
        self.baseline = np.asarray(baseline, dtype=np.float64)
        self.ids = np.asarray(ids, dtype=int)
        if self.ids.size == 0:
            raise ValueError("empty neuron set")

    def value(self, trace):
        return float(np.sum(np.abs(trace[self.ids] - self.baseline[self.ids])))

    def trace_grad(self, trace):
        g = np.zeros_like(trace)
        g[self.ids] = np.sign(trace[self.ids] - self.baseline[self.ids])
        return g


class CrossEntropy:
    """Cross-entropy of the final softmax segment against an integer label."""

    def __init__(self, model, label):
        if model.layers[-1].kind != "softmax":
            raise ValueError("cross-entropy objective requires a softmax final layer")
        if not 0 <= label < model.num_classes:
            raise ValueError(f"label {label} out of range [0, {model.num_classes})")
        self.label = int(label)
        self.start, self.end = model.segment(len(model.layers) - 1)

    def value(self, trace):
        p = trace[self.start + self.label]
        return float(-np.log(max(p, 1e-300)))

    def trace_grad(self, trace):
        g = np.zeros_like(trace)
        p = trace[self.start + self.label]
        g[self.start + self.label] = -1.0 / max(p, 1e-12)
        return g


def input_gradient(model, x, objective):
    """d objective / d input via reverse accumulation through the trace."""
    trace, caches, _ = model._forward_cached(x)
    dtrace = objective.trace_grad(trace)
    g = None
    for idx in range(len(model.layers) - 1, -1, -1):
        start, end = model.segment(idx)
        seg = dtrace[start:end].reshape(model.layer_shapes[idx])
        g = seg if g is None else g + seg
        g, _ = model.layers[idx].backward(caches[idx], g)
    return g


def objective_value(model, x, objective):
    return objective.value(model.forward(x).values)


# ---------------------------------------------------------------------------
# training


def param_gradients(model, inputs, labels):
    """Mean cross-entropy loss and its parameter gradients over a batch.

    The softmax + cross-entropy pair is differentiated jointly, so the
    gradient entering the last non-softmax layer is (p - onehot) / batch.
    """
    if model.layers[-1].kind != "softmax":
        raise ValueError("param_gradients requires a softmax final layer")
    labels = np.asarray(labels, dtype=int)
    inputs = list(inputs)
    if len(inputs) == 0:
        raise ValueError("empty batch")
    if len(inputs) != len(labels):
        raise ValueError("inputs and labels length mismatch")
    n_classes = model.num_classes
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"label out of range [0, {n_classes})")

    batch = len(inputs)
    grads = [[np.zeros_like(a) for a in layer.param_arrays()] for layer in model.layers]
    total_loss = 0.0
    for x, y in zip(inputs, labels):
        _, caches, p = model._forward_cached(x)
        total_loss += -np.log(max(p[y], 1e-300))
        g = p.copy()
        g[y] -= 1.0
        g /= batch
        # softmax layer is the last; start below it
        for idx in range(len(model.layers) - 2, -1, -1):
            g, pg = model.layers[idx].backward(caches[idx], g, need_param_grads=True)
            if pg is not None:
                for acc, term in zip(grads[idx], pg):
                    acc += term
    return total_loss / batch, ParamGrads(layers=grads)


def sgd_train(model, dataset, epochs, learning_rate, batch_size, seed):
    """Plain SGD with seeded shuffling; returns an updated copy of the model."""
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    trained = model.copy()
    if epochs == 0:
        return trained
    rng = substream(seed, STREAM_TRAIN)
    n = len(dataset)
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            sel = order[lo : lo + batch_size]
            xs = [dataset.inputs[i] for i in sel]
            ys = dataset.labels[sel]
            _, pgrads = param_gradients(trained, xs, ys)
            for layer, layer_grads in zip(trained.layers, pgrads.layers):
                for arr, g in zip(layer.param_arrays(), layer_grads):
                    arr -= learning_rate * g
    return trained


def accuracy(model, dataset):
    hits = sum(1 for x, y in zip(dataset.inputs, dataset.labels) if model.predict(x) == y)
    return hits / len(dataset)


# ---------------------------------------------------------------------------
# builders


def build_mlp(widths, seed, arch_name=None):
    """Fully-connected ReLU net ending in softmax, e.g. widths=[784, 64, 10]."""
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    layers = []
    for i in range(len(widths) - 1):
        rng = substream(seed, STREAM_INIT, i)
        w = rng.normal(0.0, np.sqrt(2.0 / widths[i]), size=(widths[i + 1], widths[i]))
        layers.append(Dense(w, np.zeros(widths[i + 1])))
        if i < len(widths) - 2:
            layers.append(Relu())
    layers.append(Softmax())
    name = arch_name or "mlp:" + "-".join(str(w) for w in widths)
    return Model(layers, (widths[0],), name)


def build_convnet(seed, in_shape=(1, 28, 28), channels=(4, 8), kernel=5,
                  hidden=None, num_classes=10, init_scales=None,
                  arch_name="convnet"):
    """Small conv-pool stack in the LeNet-1 spirit; ~6.5k traced neurons at 28x28.

    ``hidden`` inserts a dense+relu block before the classifier head;
    ``init_scales`` multiplies each conv layer's He initialisation, which is
    useful for stress models with widely spread activation scales.
    """
    layers = []
    c_in = in_shape[0]
    shape = in_shape
    scales = init_scales or (1.0,) * len(channels)
    for i, c_out in enumerate(channels):
        rng = substream(seed, STREAM_INIT, 100 + i)
        fan_in = c_in * kernel * kernel
        k = rng.normal(0.0, scales[i] * np.sqrt(2.0 / fan_in),
                       size=(c_out, c_in, kernel, kernel))
        layers.append(Conv2d(k, np.zeros(c_out)))
        layers.append(Relu())
        layers.append(MaxPool2x2())
        shape = (c_out, (shape[1] - kernel + 1) // 2, (shape[2] - kernel + 1) // 2)
        c_in = c_out
    layers.append(Flatten())
    width = int(np.prod(shape))
    if hidden:
        rng = substream(seed, STREAM_INIT, 150)
        layers.append(Dense(rng.normal(0.0, np.sqrt(2.0 / width), size=(hidden, width)),
                            np.zeros(hidden)))
        layers.append(Relu())
        width = hidden
    rng = substream(seed, STREAM_INIT, 200)
    layers.append(Dense(rng.normal(0.0, np.sqrt(2.0 / width), size=(num_classes, width)),
                        np.zeros(num_classes)))
    layers.append(Softmax())
    return Model(layers, in_shape, arch_name)


def build_from_arch(arch, seed):
    """Parse an architecture string: ``mlp:784-64-10`` or ``convnet``."""
    if arch.startswith("mlp:"):
        widths = [int(w) for w in arch.split(":", 1)[1].split("-")]
        return build_mlp(widths, seed)
    if arch == "convnet":
        return build_convnet(seed)
    raise ValueError(f"unknown architecture {arch!r}")
