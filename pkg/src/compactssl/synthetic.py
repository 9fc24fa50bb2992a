"""Seeded synthetic shape datasets used as desk-scale stand-ins for image corpora."""

from __future__ import annotations

import numpy as np

from .data import LabelledData
from .errors import ParameterError

TARGET_SHAPES = ("disk", "ring", "cross", "square", "checker", "stripes")
SOURCE_SHAPES = ("triangle", "xcross", "frame", "dots")


def _mask(shape, yy, xx, r, t, rng):
    ay, ax = np.abs(yy), np.abs(xx)
    rad = np.hypot(yy, xx)
    if shape == "disk":
        return rad < r
    if shape == "ring":
        return (rad < r) & (rad > r - t)
    if shape == "cross":
        return ((ax < t / 2) & (ay < r)) | ((ay < t / 2) & (ax < r))
    if shape == "square":
        return (ax < r * 0.85) & (ay < r * 0.85)
    if shape == "checker":
        cell = max(2.0, r / 2.5)
        inside = (ax < r) & (ay < r)
        return inside & ((np.floor(xx / cell) + np.floor(yy / cell)) % 2 == 0)
    if shape == "stripes":
        period = max(3.0, r / 2)
        return (ax < r) & (ay < r) & ((np.floor((xx + yy) / period)) % 2 == 0)
    if shape == "triangle":
        return (yy < r * 0.7) & (yy > -r) & (ax < (yy + r) * 0.6)
    if shape == "xcross":
        u, v = (xx + yy) / np.sqrt(2), (xx - yy) / np.sqrt(2)
        return ((np.abs(u) < t / 2) & (np.abs(v) < r)) | ((np.abs(v) < t / 2) & (np.abs(u) < r))
    if shape == "frame":
        return (ax < r) & (ay < r) & ~((ax < r - t) & (ay < r - t))
    if shape == "dots":
        d = r * 0.55
        out = np.zeros_like(yy, dtype=bool)
        for sy in (-1, 1):
            for sx in (-1, 1):
                out |= np.hypot(yy - sy * d, xx - sx * d) < t
        return out
    raise ParameterError(f"unknown synthetic shape {shape!r}")


def render(shape, rng, size=32, noise=0.1):
    """One ``[1, size, size]`` image of ``shape`` with random placement, scale, contrast and noise."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = size / 2 - 0.5 + rng.uniform(-size * 0.12, size * 0.12)
    cx = size / 2 - 0.5 + rng.uniform(-size * 0.12, size * 0.12)
    r = size * rng.uniform(0.22, 0.36)
    t = max(2.0, r * rng.uniform(0.3, 0.45))
    m = _mask(shape, yy - cy, xx - cx, r, t, rng).astype(np.float64)
    bg = rng.uniform(0.05, 0.45)
    fg = bg + rng.uniform(0.25, 0.5) * (1 if rng.random() < 0.8 else -0.6)
    img = bg + (fg - bg) * m
    # low-frequency illumination gradient
    gy, gx = rng.uniform(-0.15, 0.15, size=2)
    img = img + gy * (yy / size - 0.5) + gx * (xx / size - 0.5)
    img = img + rng.normal(0.0, noise, size=img.shape)
    return np.clip(img, 0, 1)[None].astype(np.float32)


def generate(shapes, n_per_class, seed, size=32, noise=0.1, name="synthetic"):
    """Balanced labelled dataset with one class per entry of ``shapes``."""
    if n_per_class < 1:
        raise ParameterError("n_per_class must be >= 1")
    if len(shapes) < 2:
        raise ParameterError("need at least two classes")
    images, labels, ids = [], [], []
    for c, shape in enumerate(shapes):
        rng = np.random.default_rng([seed, c, 9173])
        for i in range(n_per_class):
            images.append(render(shape, rng, size, noise))
            labels.append(c)
            ids.append(f"{name}/{shape}/{i:05d}")
    return LabelledData(np.stack(images), np.array(labels), tuple(shapes), tuple(ids))
