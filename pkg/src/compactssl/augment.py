"""
Image transforms, test-time augmentation sets and weak/strong policies.

Images are ``[C, H, W]`` float arrays with values in ``[0, 1]``. Every
transform is deterministic; the random policies draw from an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

TRANSFORM_KINDS = (
    "identity",
    "hflip",
    "vflip",
    "hvflip",
    "rotate",
    "zoom",
    "brightness",
    "gamma",
    "box_blur",
    "gaussian_blur",
    "translate",
    "contrast",
    "posterize",
)


@dataclass(frozen=True)
class Transform:
    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise ParameterError(f"unknown transform {self.kind!r}")
        _validate(self)

    def __str__(self):
        if not self.params:
            return self.kind
        return ":".join([self.kind] + [f"{p:g}" for p in self.params])


def _validate(t):
    p = t.params
    if t.kind == "gamma" and not p[0] > 0:
        raise ParameterError(f"gamma must be positive, got {p[0]}")
    if t.kind == "zoom" and not 0.5 <= p[0] <= 2:
        raise ParameterError(f"zoom factor must lie in [0.5, 2], got {p[0]}")
    if t.kind == "box_blur" and (p[0] < 1 or int(p[0]) != p[0] or int(p[0]) % 2 == 0):
        raise ParameterError(f"blur kernel must be a positive odd integer, got {p[0]}")
    if t.kind == "gaussian_blur":
        if not p[0] > 0:
            raise ParameterError("gaussian sigma must be positive")
        if int(p[1]) % 2 == 0 or p[1] < 1:
            raise ParameterError(f"blur kernel must be odd, got {p[1]}")
    if t.kind == "contrast" and p[0] < 0:
        raise ParameterError("contrast factor must be non-negative")
    if t.kind == "posterize" and not 1 <= p[0] <= 8:
        raise ParameterError("posterize bits must lie in [1, 8]")


# Constructors ---------------------------------------------------------------

def hflip():
    return Transform("hflip")


def vflip():
    return Transform("vflip")


def hvflip():
    return Transform("hvflip")


def rotate(degrees):
    return Transform("rotate", (float(degrees),))


def zoom(factor):
    return Transform("zoom", (float(factor),))


def brightness(delta):
    return Transform("brightness", (float(delta),))


def gamma(g):
    return Transform("gamma", (float(g),))


def box_blur(k=3):
    return Transform("box_blur", (int(k),))


def gaussian_blur(sigma=1.0, k=5):
    return Transform("gaussian_blur", (float(sigma), int(k)))


def translate(dx, dy):
    return Transform("translate", (int(dx), int(dy)))


def contrast(c):
    return Transform("contrast", (float(c),))


def posterize(bits):
    return Transform("posterize", (int(bits),))


# hflip, vflip, hvflip, blur, Gaussian blur, gamma correction
DEFAULT_TTA = (hflip(), vflip(), hvflip(), box_blur(3), gaussian_blur(1.0, 5), gamma(0.8))


# Kernels --------------------------------------------------------------------

def _bilinear(img, ys, xs):
    """Sample ``img`` at float coordinates with edge clamping."""
    _, h, w = img.shape
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(img.dtype)
    wx = (xs - x0).astype(img.dtype)
    top = img[:, y0, x0] * (1 - wx) + img[:, y0, x1] * wx
    bot = img[:, y1, x0] * (1 - wx) + img[:, y1, x1] * wx
    return top * (1 - wy) + bot * wy


def _affine(img, degrees=0.0, scale=1.0):
    """Rotate by ``degrees`` and scale by ``scale`` about the image centre (inverse mapping)."""
    _, h, w = img.shape
    cy, cx = (h - 1) / 2, (w - 1) / 2
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    th = math.radians(degrees)
    c, s = math.cos(th), math.sin(th)
    dy, dx = (yy - cy) / scale, (xx - cx) / scale
    src_x = c * dx + s * dy + cx
    src_y = -s * dx + c * dy + cy
    return _bilinear(img, src_y, src_x)


def _shift(img, dx, dy):
    _, h, w = img.shape
    pad = max(abs(dx), abs(dy))
    if pad == 0:
        return img.copy()
    p = np.pad(img, ((0, 0), (pad, pad), (pad, pad)), mode="edge")
    return p[:, pad - dy : pad - dy + h, pad - dx : pad - dx + w].copy()


def _filter_separable(img, kernel):
    r = len(kernel) // 2
    p = np.pad(img, ((0, 0), (r, r), (r, r)), mode="edge")
    _, h, w = img.shape
    tmp = sum(kernel[i] * p[:, :, i : i + w] for i in range(len(kernel)))
    return sum(kernel[i] * tmp[:, i : i + h, :] for i in range(len(kernel)))


def _box(img, k):
    if k == 1:
        return img.copy()
    r = k // 2
    p = np.pad(img, ((0, 0), (r, r), (r, r)), mode="edge")
    _, h, w = img.shape
    acc = np.zeros_like(img)
    for i in range(k):
        for j in range(k):
            acc += p[:, i : i + h, j : j + w]
    return acc / (k * k)


def _gauss_kernel(sigma, k):
    x = np.arange(k) - k // 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def apply(t, img):
    """Apply one transform; output has the input's shape and lies in [0, 1]."""
    img = np.asarray(img)
    if img.ndim != 3:
        raise ParameterError(f"expected image [C, H, W], got shape {img.shape}")
    k, p = t.kind, t.params
    if k == "identity":
        out = img.copy()
    elif k == "hflip":
        out = img[:, :, ::-1].copy()
    elif k == "vflip":
        out = img[:, ::-1, :].copy()
    elif k == "hvflip":
        out = img[:, ::-1, ::-1].copy()
    elif k == "rotate":
        quarter = p[0] / 90.0
        if quarter == int(quarter):
            out = np.rot90(img, int(quarter) % 4, axes=(1, 2)).copy()
            if out.shape != img.shape:
                out = _affine(img, p[0])
        else:
            out = _affine(img, p[0])
    elif k == "zoom":
        out = img.copy() if p[0] == 1 else _affine(img, 0.0, p[0])
    elif k == "brightness":
        out = img + img.dtype.type(p[0]) if img.dtype.kind == "f" else img + p[0]
    elif k == "gamma":
        out = img.copy() if p[0] == 1 else np.power(np.clip(img, 0, 1), p[0])
    elif k == "box_blur":
        out = _box(img, int(p[0]))
    elif k == "gaussian_blur":
        out = _filter_separable(img, _gauss_kernel(p[0], int(p[1])).astype(img.dtype))
    elif k == "translate":
        out = _shift(img, int(p[0]), int(p[1]))
    elif k == "contrast":
        mean = img.mean()
        out = (img - mean) * p[0] + mean
    else:  # posterize
        levels = 2 ** int(p[0]) - 1
        out = np.floor(img * levels + 0.5) / levels
    return np.clip(out, 0, 1).astype(img.dtype, copy=False)


def compose(transforms, img):
    img = np.array(img, copy=True)
    for t in transforms:
        img = apply(t, img)
    return img


def tta_variants(tta, img):
    """Identity copy of ``img`` followed by each transform of ``tta``."""
    return [np.asarray(img).copy()] + [apply(t, img) for t in tta]


# Parsing --------------------------------------------------------------------

_ALIASES = {
    "blur": "box_blur",
    "box": "box_blur",
    "boxblur": "box_blur",
    "gblur": "gaussian_blur",
    "gaussian": "gaussian_blur",
    "gaussianblur": "gaussian_blur",
    "rot": "rotate",
    "bright": "brightness",
    "shift": "translate",
}

_DEFAULT_ARGS = {
    "rotate": (15.0,),
    "zoom": (1.1,),
    "brightness": (0.1,),
    "gamma": (0.8,),
    "box_blur": (3,),
    "gaussian_blur": (1.0, 5),
    "translate": (2, 0),
    "contrast": (1.2,),
    "posterize": (4,),
}

_INT_ARGS = {"box_blur": (0,), "gaussian_blur": (1,), "translate": (0, 1), "posterize": (0,)}


def parse_transforms(text):
    """Parse a comma-separated list such as ``"hflip,vflip,blur,gblur:1.5,gamma:0.8"``.

    Grammar (case-insensitive): ``item ("," item)*`` with
    ``item = name (":" number)*``. Missing arguments take defaults; the
    empty string and ``"none"`` give an empty list.
    """
    text = (text or "").strip().lower()
    if text in ("", "none"):
        return []
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, *args = item.split(":")
        name = _ALIASES.get(name.replace("-", "").replace("_", ""), name.replace("-", "_"))
        if name not in TRANSFORM_KINDS:
            raise ParameterError(f"unknown transform {item!r}")
        defaults = _DEFAULT_ARGS.get(name, ())
        if len(args) > len(defaults):
            raise ParameterError(f"too many arguments for {name}")
        try:
            values = [float(a) for a in args] + list(defaults[len(args) :])
        except ValueError:
            raise ParameterError(f"non-numeric argument in {item!r}") from None
        for i in _INT_ARGS.get(name, ()):
            if values[i] != int(values[i]):
                raise ParameterError(f"{name} expects an integer argument")
            values[i] = int(values[i])
        out.append(Transform(name, tuple(values)))
    return out


def format_transforms(transforms):
    return ",".join(str(t) for t in transforms)


# Policies -------------------------------------------------------------------

STRONG_POOL = ("identity", "rotate", "translate", "brightness", "contrast", "gamma", "posterize", "zoom")


@dataclass
class AugmentPolicy:
    """Random augmentation policy.

    ``weak``: horizontal flip with p=0.5 and a translation of up to 12.5% of
    the width/height. ``strong``: ``strong_ops`` operations drawn uniformly
    from :data:`STRONG_POOL` at ``strong_magnitude``. ``none``: identity.
    """

    mode: str = "weak"
    strong_ops: int = 2
    strong_magnitude: float = 0.5
    seed: int = 0
    max_shift: float = 0.125
    pool: tuple = field(default=STRONG_POOL)

    def __post_init__(self):
        if self.mode not in ("weak", "strong", "none"):
            raise ParameterError(f"unknown policy mode {self.mode!r}")
        if self.strong_ops < 0:
            raise ParameterError("strong_ops must be non-negative")
        if not 0 <= self.strong_magnitude <= 1:
            raise ParameterError("strong_magnitude must lie in [0, 1]")
        self.pool = tuple(self.pool)

    def rng(self):
        return np.random.default_rng(self.seed)


def weak_augment(policy, img, rng=None):
    rng = policy.rng() if rng is None else rng
    _, h, w = img.shape
    bx, by = math.ceil(policy.max_shift * w), math.ceil(policy.max_shift * h)
    flip = rng.random() < 0.5
    dx = int(rng.integers(-bx, bx + 1))
    dy = int(rng.integers(-by, by + 1))
    out = img[:, :, ::-1] if flip else img
    return _shift(out, dx, dy).astype(img.dtype, copy=False)


def _strong_op(name, magnitude, rng, shape):
    sign = 1.0 if rng.random() < 0.5 else -1.0
    m = magnitude
    _, h, w = shape
    if name == "identity":
        return Transform("identity")
    if name == "rotate":
        return rotate(sign * 30.0 * m)
    if name == "translate":
        dx = int(round(sign * 0.3 * m * w))
        dy = int(round((1.0 if rng.random() < 0.5 else -1.0) * 0.3 * m * h))
        return translate(dx, dy)
    if name == "brightness":
        return brightness(sign * 0.4 * m)
    if name == "contrast":
        return contrast(1.0 + sign * 0.8 * m)
    if name == "gamma":
        return gamma(math.exp(sign * 0.7 * m))
    if name == "posterize":
        return posterize(max(1, 8 - int(round(6 * m))))
    if name == "zoom":
        return zoom(min(2.0, max(0.5, 1.0 + sign * 0.4 * m)))
    raise ParameterError(f"unknown strong op {name!r}")


def sample_strong_ops(policy, shape, rng=None):
    """The transforms a strong augmentation would apply, in order."""
    rng = policy.rng() if rng is None else rng
    picks = rng.integers(0, len(policy.pool), size=policy.strong_ops)
    return [_strong_op(policy.pool[i], policy.strong_magnitude, rng, shape) for i in picks]


def strong_augment(policy, img, rng=None):
    return compose(sample_strong_ops(policy, img.shape, rng), img)


def augment(policy, img, rng=None):
    """Dispatch on ``policy.mode``."""
    if policy.mode == "weak":
        return weak_augment(policy, img, rng)
    if policy.mode == "strong":
        return strong_augment(policy, img, rng)
    return img.copy()


def augment_batch(policy, batch, rng):
    if policy.mode == "none":
        return batch
    return np.stack([augment(policy, x, rng) for x in batch])


_CHANNEL_LOCAL = {"identity", "hflip", "vflip", "hvflip", "rotate", "zoom", "brightness", "gamma",
                  "box_blur", "gaussian_blur", "translate", "posterize"}


def apply_batch(t, batch):
    """``apply`` over a batch ``[N, C, H, W]``; same result as a per-image loop."""
    batch = np.asarray(batch)
    if t.kind in _CHANNEL_LOCAL:
        n, c, h, w = batch.shape
        return apply(t, batch.reshape(n * c, h, w)).reshape(batch.shape)
    return np.stack([apply(t, x) for x in batch])
