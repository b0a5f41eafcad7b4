"""Image and depth-map file input/output.

Color images are 8-bit RGB PNG. Depth maps use a small binary format
that keeps full float32 precision including infinities:

    bytes 0-3   magic ``DPTH``
    bytes 4-7   width, little-endian uint32
    bytes 8-11  height, little-endian uint32
    bytes 12-15 reserved, zero
    then height * width float32 values, row-major, little-endian
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

DEPTH_MAGIC = b"DPTH"


def save_png(path, rgb: np.ndarray):
    """Write an (H, W, 3) array of [0, 1] floats as 8-bit RGB."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[-1] != 3:
        raise ValueError("expected an (H, W, 3) array")
    q = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(q, mode="RGB").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    """Read an image file into (H, W, 3) floats in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_depth(path, depth: np.ndarray):
    depth = np.asarray(depth, dtype=np.float32)
    if depth.ndim != 2:
        raise ValueError("expected an (H, W) array")
    h, w = depth.shape
    with open(path, "wb") as fh:
        fh.write(DEPTH_MAGIC)
        fh.write(struct.pack("<III", w, h, 0))
        fh.write(depth.astype("<f4").tobytes())


def load_depth(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != DEPTH_MAGIC:
        raise ValueError("not a depth file (bad magic)")
    w, h, reserved = struct.unpack_from("<III", blob, 4)
    if reserved != 0:
        raise ValueError("bad reserved field")
    need = 16 + 4 * w * h
    if len(blob) != need:
        raise ValueError(f"expected {need} bytes, found {len(blob)}")
    return np.frombuffer(blob, dtype="<f4", offset=16).reshape(h, w).copy()


def depth_to_png(path, depth: np.ndarray):
    """Viewable grayscale rendering of a depth map.

    Finite depths span dark-near to light-far; background pixels (non
    finite) are black.
    """
    depth = np.asarray(depth, dtype=np.float64)
    finite = np.isfinite(depth)
    img = np.zeros(depth.shape, dtype=np.uint8)
    if finite.any():
        lo, hi = depth[finite].min(), depth[finite].max()
        span = hi - lo if hi > lo else 1.0
        img[finite] = np.round(
            40.0 + 215.0 * (depth[finite] - lo) / span).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path, format="PNG")


def normal_to_png(path, normals: np.ndarray):
    """Standard normal-map visualization: components mapped to [0, 1]."""
    save_png(path, (np.asarray(normals, dtype=np.float64) + 1.0) * 0.5)
