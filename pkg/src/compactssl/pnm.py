"""Binary PGM (P5) / PPM (P6) reading and writing, 8-bit only."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def _tokens(raw, count):
    """First ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    out, i = [], 0
    n = len(raw)
    while len(out) < count:
        while i < n and raw[i : i + 1].isspace():
            i += 1
        if i < n and raw[i : i + 1] == b"#":
            while i < n and raw[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not raw[i : i + 1].isspace() and raw[i : i + 1] != b"#":
            i += 1
        if start == i:
            raise DataError("truncated PNM header")
        out.append(raw[start:i])
    # exactly one whitespace byte separates the header from the raster
    return out, i + 1


def decode(raw, name="<bytes>"):
    """Decode P5/P6 bytes to a ``[C, H, W]`` uint8 array."""
    if raw[:2] not in (b"P5", b"P6"):
        raise DataError(f"{name}: not a binary PGM/PPM file")
    try:
        (magic, w, h, maxval), offset = _tokens(raw, 4)
        w, h, maxval = int(w), int(h), int(maxval)
    except (ValueError, DataError) as exc:
        raise DataError(f"{name}: malformed header ({exc})") from None
    if maxval > 255:
        raise DataError(f"{name}: unsupported bit depth (maxval {maxval}); only 8-bit images are supported")
    if w < 1 or h < 1 or maxval < 1:
        raise DataError(f"{name}: invalid dimensions")
    c = 1 if magic == b"P5" else 3
    size = w * h * c
    body = raw[offset : offset + size]
    if len(body) != size:
        raise DataError(f"{name}: truncated raster ({len(body)} of {size} bytes)")
    arr = np.frombuffer(body, dtype=np.uint8).reshape(h, w, c).transpose(2, 0, 1)
    if maxval != 255:
        arr = np.round(arr.astype(np.float64) * (255.0 / maxval)).clip(0, 255).astype(np.uint8)
    return arr.copy()


def read(path):
    with open(path, "rb") as fh:
        return decode(fh.read(), str(path))


def encode(img):
    """Encode a ``[C, H, W]`` image (float in [0, 1] or uint8) with C in {1, 3}."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        img = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    c, h, w = img.shape
    if c not in (1, 3):
        raise DataError("PNM images need 1 or 3 channels")
    magic = b"P5" if c == 1 else b"P6"
    return magic + f"\n{w} {h}\n255\n".encode() + img.transpose(1, 2, 0).tobytes()


def write(path, img):
    with open(path, "wb") as fh:
        fh.write(encode(img))
    return path


def resize_bilinear(img, h, w):
    """Resize ``[C, H0, W0]`` float image to ``[C, h, w]`` (half-pixel centres, edge clamp)."""
    c, h0, w0 = img.shape
    if (h0, w0) == (h, w):
        return img.astype(np.float32)
    ys = np.clip((np.arange(h) + 0.5) * h0 / h - 0.5, 0, h0 - 1)
    xs = np.clip((np.arange(w) + 0.5) * w0 / w - 0.5, 0, w0 - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h0 - 1)
    x1 = np.minimum(x0 + 1, w0 - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]
    img = img.astype(np.float64)
    top = img[:, y0][:, :, x0] * (1 - wx) + img[:, y0][:, :, x1] * wx
    bot = img[:, y1][:, :, x0] * (1 - wx) + img[:, y1][:, :, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(np.float32)
