"""
Minimal numpy neural-network core.

Tensors are plain ``numpy.ndarray`` objects (float32 for training, float64
for gradient checking). Networks are described by a :class:`NetworkSpec`
(a body and a replaceable head, each an ordered list of :class:`LayerSpec`)
and a :class:`Model` bundles a spec with its named parameter arrays.

Backpropagation is written out by hand for every layer kind; there is no
graph tracing. The final ``softmax`` layer is fused with the loss so that
``backward_logits`` receives the gradient with respect to the logits.
"""

from __future__ import annotations

import copy
import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, FormatError, NumericError, ParameterError, SpecError

LAYER_KINDS = ("dense", "conv2d", "relu", "maxpool2d", "flatten", "softmax")
TRAINABLE = ("dense", "conv2d")
PRECISIONS = ("float32", "float64")
CE_EPS = 1e-12


# ----------------------------------------------------------------------------
# Specs
# ----------------------------------------------------------------------------


@dataclass
class LayerSpec:
    """One layer of a network: a kind plus its hyperparameters."""

    kind: str
    args: dict = field(default_factory=dict)

    def to_json(self):
        return {"kind": self.kind, **self.args}

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        kind = obj.pop("kind")
        return cls(kind, obj)


def dense(in_features, out_features):
    return LayerSpec("dense", {"in_features": int(in_features), "out_features": int(out_features)})


def conv2d(in_channels, out_channels, kernel=3, stride=1, padding=None):
    if padding is None:
        padding = kernel // 2
    return LayerSpec(
        "conv2d",
        {
            "in_channels": int(in_channels),
            "out_channels": int(out_channels),
            "kernel": int(kernel),
            "stride": int(stride),
            "padding": int(padding),
        },
    )


def relu():
    return LayerSpec("relu")


def maxpool2d(size=2):
    return LayerSpec("maxpool2d", {"size": int(size)})


def flatten():
    return LayerSpec("flatten")


def softmax():
    return LayerSpec("softmax")


@dataclass
class NetworkSpec:
    """Input shape ``(C, H, W)``, a feature-extracting body and a classification head."""

    input_shape: tuple
    body: list
    head: list
    name: str = "net"

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)

    @property
    def n_classes(self):
        return infer_shapes(self)[-1][0]

    def layers(self):
        """Yield ``(section, index, LayerSpec)`` in forward order."""
        for i, layer in enumerate(self.body):
            yield "body", i, layer
        for i, layer in enumerate(self.head):
            yield "head", i, layer

    def to_json(self):
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "body": [l.to_json() for l in self.body],
            "head": [l.to_json() for l in self.head],
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            input_shape=tuple(obj["input_shape"]),
            body=[LayerSpec.from_json(l) for l in obj["body"]],
            head=[LayerSpec.from_json(l) for l in obj["head"]],
            name=obj.get("name", "net"),
        )


def _layer_out_shape(layer, shape):
    kind, a = layer.kind, layer.args
    if kind not in LAYER_KINDS:
        raise SpecError(f"unknown layer kind {kind!r}")
    if kind == "dense":
        if a["in_features"] < 1 or a["out_features"] < 1:
            raise SpecError("dense features must be positive")
        if len(shape) != 1 or shape[0] != a["in_features"]:
            raise SpecError(f"dense expects ({a['in_features']},), got {shape}")
        return (a["out_features"],)
    if kind == "conv2d":
        k, s, p = a["kernel"], a["stride"], a["padding"]
        if min(a["in_channels"], a["out_channels"], k, s) < 1 or p < 0:
            raise SpecError("conv2d hyperparameters must be positive")
        if k % 2 == 0:
            raise SpecError(f"conv2d kernel must be odd, got {k}")
        if len(shape) != 3 or shape[0] != a["in_channels"]:
            raise SpecError(f"conv2d expects {a['in_channels']} input channels, got {shape}")
        h = (shape[1] + 2 * p - k) // s + 1
        w = (shape[2] + 2 * p - k) // s + 1
        if h < 1 or w < 1:
            raise SpecError("conv2d output would be empty")
        return (a["out_channels"], h, w)
    if kind == "maxpool2d":
        size = a["size"]
        if size < 1:
            raise SpecError("pool size must be positive")
        if len(shape) != 3 or shape[1] < size or shape[2] < size:
            raise SpecError(f"maxpool2d cannot pool {shape} with size {size}")
        return (shape[0], shape[1] // size, shape[2] // size)
    if kind == "flatten":
        return (int(np.prod(shape)),)
    # relu / softmax keep the shape
    if kind == "softmax" and len(shape) != 1:
        raise SpecError("softmax expects a flat input")
    return shape


def infer_shapes(spec):
    """Return the per-layer output shapes, raising :class:`SpecError` on mismatch."""
    shape = spec.input_shape
    if len(shape) != 3 or min(shape) < 1:
        raise SpecError(f"input shape must be positive (C, H, W), got {shape}")
    shapes = []
    for section, i, layer in spec.layers():
        try:
            shape = _layer_out_shape(layer, shape)
        except KeyError as exc:
            raise SpecError(f"{section}.{i} ({layer.kind}) missing hyperparameter {exc}") from None
        shapes.append(shape)
    if not spec.head or spec.head[-1].kind != "softmax":
        raise SpecError("head must end with a softmax classification layer")
    if shapes[-1][0] < 2:
        raise SpecError("classifier needs at least two outputs")
    for section, i, layer in spec.layers():
        if layer.kind == "softmax" and (section, i) != ("head", len(spec.head) - 1):
            raise SpecError("softmax may only appear as the last head layer")
    return shapes


def feature_shape(spec):
    """Shape of the body output (the head's input)."""
    shapes = infer_shapes(spec)
    return shapes[len(spec.body) - 1] if spec.body else spec.input_shape


def _conv_block_body(in_ch, widths):
    body = []
    for w in widths:
        body += [conv2d(in_ch, w, 3), relu(), maxpool2d(2)]
        in_ch = w
    return body


def conv_net(widths, n_classes, input_shape=(1, 32, 32), name="net"):
    """Stack of (conv3x3, relu, maxpool2) blocks followed by a single dense head."""
    body = _conv_block_body(input_shape[0], widths) + [flatten()]
    shape = tuple(input_shape)
    for layer in body:
        shape = _layer_out_shape(layer, shape)
    return NetworkSpec(input_shape, body, [dense(shape[0], n_classes), softmax()], name=name)


def compact_net(n_classes, input_shape=(1, 32, 32), widths=(8, 16)):
    """Reference small network: two conv blocks and one dense head."""
    return conv_net(widths, n_classes, input_shape, name="compact")


def standard_net(n_classes, input_shape=(1, 32, 32), widths=(32, 64, 64, 128)):
    """Reference larger network: four conv blocks and one dense head."""
    return conv_net(widths, n_classes, input_shape, name="standard")


# ----------------------------------------------------------------------------
# Model
# ----------------------------------------------------------------------------


def param_names(spec):
    """Parameter names in declaration order (weight then bias per trainable layer)."""
    names = []
    for section, i, layer in spec.layers():
        if layer.kind in TRAINABLE:
            names += [f"{section}.{i}.weight", f"{section}.{i}.bias"]
    return names


def param_shapes(spec):
    shapes = {}
    for section, i, layer in spec.layers():
        a = layer.args
        if layer.kind == "dense":
            shapes[f"{section}.{i}.weight"] = (a["in_features"], a["out_features"])
            shapes[f"{section}.{i}.bias"] = (a["out_features"],)
        elif layer.kind == "conv2d":
            k = a["kernel"]
            shapes[f"{section}.{i}.weight"] = (a["out_channels"], a["in_channels"], k, k)
            shapes[f"{section}.{i}.bias"] = (a["out_channels"],)
    return shapes


def _fan_in(layer):
    a = layer.args
    if layer.kind == "dense":
        return a["in_features"]
    return a["in_channels"] * a["kernel"] ** 2


# section ids keep head re-initialisation on a stream distinct from the first init
_STREAM = {"body": 0, "head": 1, "new_head": 2}


def _init_layer(layer, seed, stream, index, dtype):
    """Kaiming-uniform weights (gain sqrt(2)), zero biases."""
    rng = np.random.default_rng([seed, stream, index])
    bound = np.sqrt(6.0 / _fan_in(layer))
    a = layer.args
    if layer.kind == "dense":
        shape = (a["in_features"], a["out_features"])
        n_out = a["out_features"]
    else:
        k = a["kernel"]
        shape = (a["out_channels"], a["in_channels"], k, k)
        n_out = a["out_channels"]
    w = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return w, np.zeros(n_out, dtype=dtype)


@dataclass(eq=False)
class Model:
    """A network spec with its parameters.

    ``velocity`` holds optimizer momentum buffers; it is training state and
    is not serialized.
    """

    spec: NetworkSpec
    params: dict
    rng_seed: int = 0
    precision: str = "float32"
    velocity: dict = field(default_factory=dict, repr=False)

    @property
    def dtype(self):
        return np.dtype(self.precision)

    def copy(self):
        return Model(
            copy.deepcopy(self.spec),
            {k: v.copy() for k, v in self.params.items()},
            self.rng_seed,
            self.precision,
            {k: v.copy() for k, v in self.velocity.items()},
        )

    def astype(self, precision):
        if precision not in PRECISIONS:
            raise ParameterError(f"precision must be one of {PRECISIONS}")
        m = self.copy()
        m.precision = precision
        m.params = {k: v.astype(precision) for k, v in m.params.items()}
        m.velocity = {}
        return m

    def body_names(self):
        return [n for n in param_names(self.spec) if n.startswith("body.")]

    def head_names(self):
        return [n for n in param_names(self.spec) if n.startswith("head.")]

    def __eq__(self, other):
        if not isinstance(other, Model):
            return NotImplemented
        if (
            self.spec.to_json() != other.spec.to_json()
            or self.rng_seed != other.rng_seed
            or self.precision != other.precision
            or list(self.params) != list(other.params)
        ):
            return False
        return all(
            a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.params.values(), other.params.values())
        )


def init_model(spec, seed=0, precision="float32"):
    """Build a freshly initialised model for ``spec``."""
    if precision not in PRECISIONS:
        raise ParameterError(f"precision must be one of {PRECISIONS}")
    infer_shapes(spec)
    params = {}
    for section, i, layer in spec.layers():
        if layer.kind in TRAINABLE:
            w, b = _init_layer(layer, seed, _STREAM[section], i, precision)
            params[f"{section}.{i}.weight"] = w
            params[f"{section}.{i}.bias"] = b
    return Model(spec, params, int(seed), precision)


def param_hash(model, names=None):
    """SHA-256 over the raw bytes of the selected parameters."""
    h = hashlib.sha256()
    for name in names if names is not None else model.params:
        h.update(name.encode())
        h.update(np.ascontiguousarray(model.params[name]).tobytes())
    return h.hexdigest()


def replace_head(model, n_classes, seed=None):
    """New model sharing the body bitwise, with a freshly initialised ``n_classes`` head.

    Hidden head layers keep their sizes; only the final dense layer changes
    its output width.
    """
    if n_classes < 2:
        raise ParameterError("n_classes must be at least 2")
    seed = model.rng_seed if seed is None else int(seed)
    head = copy.deepcopy(model.spec.head)
    last_dense = max(i for i, l in enumerate(head) if l.kind == "dense")
    head[last_dense].args["out_features"] = int(n_classes)
    spec = NetworkSpec(model.spec.input_shape, copy.deepcopy(model.spec.body), head, model.spec.name)
    infer_shapes(spec)
    params = {k: v.copy() for k, v in model.params.items() if k.startswith("body.")}
    for i, layer in enumerate(head):
        if layer.kind in TRAINABLE:
            w, b = _init_layer(layer, seed, _STREAM["new_head"], i, model.precision)
            params[f"head.{i}.weight"] = w
            params[f"head.{i}.bias"] = b
    ordered = {n: params[n] for n in param_names(spec)}
    return Model(spec, ordered, seed, model.precision)


def count_params(spec_or_layers):
    """Exact number of trainable scalars."""
    layers = spec_or_layers
    if isinstance(spec_or_layers, NetworkSpec):
        infer_shapes(spec_or_layers)
        layers = list(spec_or_layers.body) + list(spec_or_layers.head)
    total = 0
    for layer in layers:
        a = layer.args
        if layer.kind == "dense":
            total += a["in_features"] * a["out_features"] + a["out_features"]
        elif layer.kind == "conv2d":
            total += a["out_channels"] * (a["in_channels"] * a["kernel"] ** 2 + 1)
        elif layer.kind not in LAYER_KINDS:
            raise SpecError(f"unknown layer kind {layer.kind!r}")
    return total


def count_flops(spec, input_shape=None):
    """Two times the multiply-accumulate count of dense/conv layers for one input."""
    if input_shape is not None:
        spec = NetworkSpec(tuple(input_shape), spec.body, spec.head, spec.name)
    shapes = infer_shapes(spec)
    macs = 0
    for (_, _, layer), out in zip(spec.layers(), shapes):
        a = layer.args
        if layer.kind == "dense":
            macs += a["in_features"] * a["out_features"]
        elif layer.kind == "conv2d":
            macs += a["out_channels"] * out[1] * out[2] * a["in_channels"] * a["kernel"] ** 2
    return 2 * macs


# ----------------------------------------------------------------------------
# Forward / backward
# ----------------------------------------------------------------------------


def softmax_rows(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _im2col(x, k, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    return cols, ho, wo


def _conv_forward(x, w, b, stride, pad):
    n = x.shape[0]
    cout, _, k, _ = w.shape
    cols, ho, wo = _im2col(x, k, stride, pad)
    out = cols @ w.reshape(cout, -1).T + b
    return out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2), cols


def _conv_backward(dout, x_shape, w, cols, stride, pad):
    n, c, h, wdt = x_shape
    cout, _, k, _ = w.shape
    ho, wo = dout.shape[2], dout.shape[3]
    dflat = dout.transpose(0, 2, 3, 1).reshape(-1, cout)
    dw = (dflat.T @ cols).reshape(w.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ w.reshape(cout, -1)).reshape(n, ho, wo, c, k, k)
    dxp = np.zeros((n, c, h + 2 * pad, wdt + 2 * pad), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    if pad:
        dxp = dxp[:, :, pad:-pad, pad:-pad]
    return dxp, dw, db


def _pool_forward(x, size):
    n, c, h, w = x.shape
    ho, wo = h // size, w // size
    xc = x[:, :, : ho * size, : wo * size]
    blocks = xc.reshape(n, c, ho, size, wo, size).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, -1)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_backward(dout, x_shape, idx, size):
    n, c, h, w = x_shape
    ho, wo = dout.shape[2], dout.shape[3]
    blocks = np.zeros((n, c, ho, wo, size * size), dtype=dout.dtype)
    np.put_along_axis(blocks, idx[..., None], dout[..., None], axis=-1)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, :, : ho * size, : wo * size] = (
        blocks.reshape(n, c, ho, wo, size, size).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * size, wo * size)
    )
    return dx


def _check_batch(model, batch):
    batch = np.asarray(batch)
    if batch.ndim != 4 or tuple(batch.shape[1:]) != model.spec.input_shape:
        raise DimensionError(f"expected batch of shape (N, {model.spec.input_shape}), got {batch.shape}")
    if batch.shape[0] == 0:
        raise DimensionError("empty batch")
    return batch.astype(model.dtype, copy=False)


def forward_train(model, batch):
    """Forward pass that keeps what ``backward_logits`` needs.

    Returns ``(probs, cache)``.
    """
    x = _check_batch(model, batch)
    cache = []
    for section, i, layer in model.spec.layers():
        a = layer.args
        if layer.kind == "dense":
            w = model.params[f"{section}.{i}.weight"]
            cache.append((x,))
            x = x @ w + model.params[f"{section}.{i}.bias"]
        elif layer.kind == "conv2d":
            w = model.params[f"{section}.{i}.weight"]
            shape = x.shape
            x, cols = _conv_forward(x, w, model.params[f"{section}.{i}.bias"], a["stride"], a["padding"])
            cache.append((shape, cols))
        elif layer.kind == "relu":
            cache.append((x > 0,))
            x = np.maximum(x, 0)
        elif layer.kind == "maxpool2d":
            shape = x.shape
            x, idx = _pool_forward(x, a["size"])
            cache.append((shape, idx))
        elif layer.kind == "flatten":
            cache.append((x.shape,))
            x = x.reshape(x.shape[0], -1)
        elif layer.kind == "softmax":
            cache.append(None)
            if not np.all(np.isfinite(x)):
                raise NumericError("non-finite logits")
            x = softmax_rows(x)
    return x, cache


def forward(model, batch):
    """Class-probability rows for a batch ``[N, C, H, W]``."""
    return forward_train(model, batch)[0]


def backward_logits(model, cache, dlogits):
    """Gradients of a scalar loss given its gradient with respect to the logits."""
    grads = {}
    g = np.asarray(dlogits, dtype=model.dtype)
    layers = list(model.spec.layers())
    for (section, i, layer), saved in zip(reversed(layers), reversed(cache)):
        a = layer.args
        if layer.kind == "softmax":
            continue
        if layer.kind == "dense":
            (x,) = saved
            w = model.params[f"{section}.{i}.weight"]
            grads[f"{section}.{i}.weight"] = x.T @ g
            grads[f"{section}.{i}.bias"] = g.sum(axis=0)
            g = g @ w.T
        elif layer.kind == "conv2d":
            shape, cols = saved
            w = model.params[f"{section}.{i}.weight"]
            g, dw, db = _conv_backward(g, shape, w, cols, a["stride"], a["padding"])
            grads[f"{section}.{i}.weight"] = dw
            grads[f"{section}.{i}.bias"] = db
        elif layer.kind == "relu":
            g = g * saved[0]
        elif layer.kind == "maxpool2d":
            shape, idx = saved
            g = _pool_backward(g, shape, idx, a["size"])
        elif layer.kind == "flatten":
            g = g.reshape(saved[0])
    return {n: grads[n] for n in model.params}


def _check_labels(labels, n, k):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"label out of range [0, {k})")
    return labels.astype(np.int64)


def cross_entropy(probs, labels):
    """Mean negative log-likelihood of the true class, with a 1e-12 clamp inside the log."""
    probs = np.asarray(probs)
    labels = _check_labels(labels, probs.shape[0], probs.shape[1])
    picked = probs[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.maximum(picked, CE_EPS))))


def soft_cross_entropy(probs, targets):
    """Mean over rows of ``-sum(q * log p)`` for soft target rows ``q``."""
    return float(np.mean(-(targets * np.log(np.maximum(probs, CE_EPS))).sum(axis=1)))


def ce_logit_grad(probs, labels):
    """Gradient of mean cross-entropy with respect to the logits: ``(p - onehot) / N``."""
    n, k = probs.shape
    labels = _check_labels(labels, n, k)
    g = probs.copy()
    g[np.arange(n), labels] -= 1
    return g / n


def backward(model, batch, labels):
    """Gradients of ``cross_entropy(forward(model, batch), labels)`` for every parameter."""
    probs, cache = forward_train(model, batch)
    return backward_logits(model, cache, ce_logit_grad(probs, labels))


def loss_and_grads(model, batch, labels):
    probs, cache = forward_train(model, batch)
    loss = cross_entropy(probs, labels)
    return loss, backward_logits(model, cache, ce_logit_grad(probs, labels))


def sgd_step(model, grads, lr, momentum=0.0):
    """In-place SGD with momentum: ``v <- momentum*v + g; p <- p - lr*v``.

    Only parameters present in ``grads`` are touched, which is how frozen
    layers are kept bitwise constant. Returns ``model``.
    """
    if lr < 0:
        raise ParameterError("learning rate must be non-negative")
    if not 0 <= momentum < 1:
        raise ParameterError("momentum must lie in [0, 1)")
    if lr == 0:
        return model
    updates = {}
    for name, g in grads.items():
        v = model.velocity.get(name)
        v = g.astype(model.dtype) if v is None else momentum * v + g
        new = model.params[name] - model.dtype.type(lr) * v
        if not np.all(np.isfinite(new)):
            raise NumericError(f"non-finite update for {name}")
        updates[name] = (new.astype(model.dtype, copy=False), v)
    for name, (p, v) in updates.items():
        model.params[name] = p
        model.velocity[name] = v
    return model


def _kink_signature(cache):
    """Hash of relu masks and pool argmax choices (the piecewise-linear 'region')."""
    h = hashlib.sha1()
    for saved in cache:
        if saved is None:
            continue
        if len(saved) == 1 and isinstance(saved[0], np.ndarray) and saved[0].dtype == bool:
            h.update(saved[0].tobytes())
        elif len(saved) == 2 and isinstance(saved[1], np.ndarray) and saved[1].dtype.kind == "i":
            h.update(saved[1].tobytes())
    return h.digest()


def grad_check(model, batch, labels, h=1e-5, n_samples=50, seed=0):
    """Max relative error between analytic gradients and central differences.

    Parameters are sampled uniformly (``n_samples`` per tensor, or all of a
    smaller tensor). A sample is skipped when the ``+h`` / ``-h`` probes
    land in a different relu/max-pool region than the base point, since the
    loss is not differentiable there.
    """
    if model.precision != "float64":
        raise ParameterError("grad_check requires a float64 model")
    if not 1e-7 <= h <= 1e-4:
        raise ParameterError("h must lie in [1e-7, 1e-4]")
    probe = model.copy()
    batch = np.asarray(batch, dtype=np.float64)
    _, analytic = loss_and_grads(probe, batch, labels)
    base_sig = _kink_signature(forward_train(probe, batch)[1])
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in probe.params.items():
        flat = p.reshape(-1)
        picks = np.arange(flat.size) if flat.size <= n_samples else rng.choice(flat.size, n_samples, replace=False)
        for idx in picks:
            orig = flat[idx]
            flat[idx] = orig + h
            pp, cp = forward_train(probe, batch)
            flat[idx] = orig - h
            pm, cm = forward_train(probe, batch)
            flat[idx] = orig
            if _kink_signature(cp) != base_sig or _kink_signature(cm) != base_sig:
                continue
            numeric = (cross_entropy(pp, labels) - cross_entropy(pm, labels)) / (2 * h)
            a = analytic[name].reshape(-1)[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


# ----------------------------------------------------------------------------
# Serialization
# ----------------------------------------------------------------------------

MAGIC = b"SSDM"
FORMAT_VERSION = 1
TAG_FLOAT32, TAG_FLOAT64, TAG_INT8 = 0, 1, 2
_TAG_OF = {"float32": TAG_FLOAT32, "float64": TAG_FLOAT64}
_DTYPE_OF = {TAG_FLOAT32: np.dtype("<f4"), TAG_FLOAT64: np.dtype("<f8")}


def encode_container(tag, header, payload):
    """Assemble a model file: magic, version, tag, length-prefixed JSON header, payload."""
    meta = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<HBI", FORMAT_VERSION, tag, len(meta)) + meta + payload


def decode_container(raw):
    """Split a model file into ``(tag, header, payload, payload_offset)``."""
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise FormatError("bad magic bytes", 0)
    if len(raw) < 11:
        raise FormatError("truncated header", len(raw))
    version, tag, meta_len = struct.unpack_from("<HBI", raw, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", 4)
    if tag not in (TAG_FLOAT32, TAG_FLOAT64, TAG_INT8):
        raise FormatError(f"unknown precision tag {tag}", 6)
    start = 11
    if start + meta_len > len(raw):
        raise FormatError("truncated spec section", len(raw))
    try:
        header = json.loads(raw[start : start + meta_len].decode("utf-8"))
        NetworkSpec.from_json(header["spec"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"invalid spec JSON: {exc}", start) from None
    return tag, header, raw[start + meta_len :], start + meta_len


def model_to_bytes(model):
    tag = _TAG_OF[model.precision]
    dt = _DTYPE_OF[tag]
    header = {"spec": model.spec.to_json(), "rng_seed": int(model.rng_seed)}
    payload = b"".join(np.ascontiguousarray(model.params[n], dtype=dt).tobytes() for n in param_names(model.spec))
    return encode_container(tag, header, payload)


def model_from_bytes(raw):
    tag, header, payload, offset = decode_container(raw)
    if tag == TAG_INT8:
        raise FormatError("file holds a quantized model; use quantize.load_quantized_model", 6)
    spec = NetworkSpec.from_json(header["spec"])
    dt = _DTYPE_OF[tag]
    params = {}
    pos = 0
    for name, shape in param_shapes(spec).items():
        nbytes = int(np.prod(shape)) * dt.itemsize
        if pos + nbytes > len(payload):
            raise FormatError(f"truncated parameter blob {name}", offset + len(payload))
        params[name] = np.frombuffer(payload, dtype=dt, count=int(np.prod(shape)), offset=pos).reshape(shape).copy()
        pos += nbytes
    if pos != len(payload):
        raise FormatError("trailing bytes after parameter blobs", offset + pos)
    precision = "float32" if tag == TAG_FLOAT32 else "float64"
    params = {k: v.astype(precision) for k, v in params.items()}
    return Model(spec, params, int(header["rng_seed"]), precision)


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))
    return path


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
