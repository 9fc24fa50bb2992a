"""
Post-training symmetric int8 weight quantization.

Weights are stored as int8 with one float32 scale per tensor; inference
dequantizes on the fly and runs the usual float forward pass (activations
are never quantized).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nncore as nn
from .errors import FormatError

QMAX = 127


@dataclass(eq=False)
class QuantizedTensor:
    values: np.ndarray  # int8
    scale: np.float32
    zero_point: int = 0

    @property
    def shape(self):
        return self.values.shape

    def __eq__(self, other):
        return (
            isinstance(other, QuantizedTensor)
            and self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
            and np.float32(self.scale).tobytes() == np.float32(other.scale).tobytes()
            and self.zero_point == other.zero_point
        )


@dataclass(eq=False)
class QuantizedModel:
    spec: nn.NetworkSpec
    qparams: dict
    rng_seed: int = 0

    def scales(self):
        return {k: float(q.scale) for k, q in self.qparams.items()}

    def __eq__(self, other):
        return (
            isinstance(other, QuantizedModel)
            and self.spec.to_json() == other.spec.to_json()
            and self.rng_seed == other.rng_seed
            and list(self.qparams) == list(other.qparams)
            and all(a == b for a, b in zip(self.qparams.values(), other.qparams.values()))
        )


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_tensor(t):
    """Symmetric per-tensor int8: ``scale = max|t| / 127`` (1 for an all-zero tensor)."""
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise ValueError("cannot quantize non-finite values")
    peak = float(np.max(np.abs(t))) if t.size else 0.0
    scale = np.float32(peak / QMAX) if peak > 0 else np.float32(1.0)
    if scale == 0:  # peak below float32 resolution
        scale = np.float32(np.finfo(np.float32).tiny)
    q = np.clip(round_half_away(t / np.float64(scale)), -QMAX, QMAX).astype(np.int8)
    return QuantizedTensor(q, scale, 0)


def dequantize_tensor(q):
    return (np.float64(q.scale) * q.values.astype(np.float64)).astype(np.float32)


def quantize_model(model):
    """Quantize every parameter tensor of a trained float model."""
    return QuantizedModel(
        model.spec,
        {name: quantize_tensor(p) for name, p in model.params.items()},
        model.rng_seed,
    )


def dequantize_model(qmodel, precision="float32"):
    params = {k: dequantize_tensor(q).astype(precision) for k, q in qmodel.qparams.items()}
    return nn.Model(qmodel.spec, params, qmodel.rng_seed, precision)


def quantized_forward(qmodel, batch):
    """Class probabilities using weights dequantized from int8."""
    return nn.forward(dequantize_model(qmodel), batch)


# Serialization ----------------------------------------------------------------


def quantized_to_bytes(qmodel):
    header = {"spec": qmodel.spec.to_json(), "rng_seed": int(qmodel.rng_seed)}
    blobs = []
    for name in nn.param_names(qmodel.spec):
        q = qmodel.qparams[name]
        blobs.append(np.float32(q.scale).astype("<f4").tobytes() + q.values.astype(np.int8).tobytes())
    return nn.encode_container(nn.TAG_INT8, header, b"".join(blobs))


def quantized_from_bytes(raw):
    tag, header, payload, offset = nn.decode_container(raw)
    if tag != nn.TAG_INT8:
        raise FormatError("not a quantized model file", 6)
    spec = nn.NetworkSpec.from_json(header["spec"])
    qparams = {}
    pos = 0
    for name, shape in nn.param_shapes(spec).items():
        size = int(np.prod(shape))
        if pos + 4 + size > len(payload):
            raise FormatError(f"truncated parameter blob {name}", offset + len(payload))
        scale = np.frombuffer(payload, dtype="<f4", count=1, offset=pos)[0]
        values = np.frombuffer(payload, dtype=np.int8, count=size, offset=pos + 4).reshape(shape).copy()
        qparams[name] = QuantizedTensor(values, np.float32(scale), 0)
        pos += 4 + size
    if pos != len(payload):
        raise FormatError("trailing bytes after parameter blobs", offset + pos)
    return QuantizedModel(spec, qparams, int(header["rng_seed"]))


def save_quantized_model(qmodel, path):
    with open(path, "wb") as fh:
        fh.write(quantized_to_bytes(qmodel))
    return path


def load_quantized_model(path):
    with open(path, "rb") as fh:
        return quantized_from_bytes(fh.read())


def load_any(path):
    """Float :class:`nncore.Model` or :class:`QuantizedModel`, depending on the file's precision tag."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tag = nn.decode_container(raw)[0]
    return quantized_from_bytes(raw) if tag == nn.TAG_INT8 else nn.model_from_bytes(raw)
