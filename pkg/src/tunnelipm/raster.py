"""Raster helpers: validation, PNG/PNM I/O and convex polygon masks.

Rasters are plain ``uint8`` numpy arrays shaped ``(height, width)`` or
``(height, width, 3)``. Pixel ``(col, row)`` has its center at integer
coordinates ``(x=col, y=row)``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import TunnelIPMError

# Inclusion slack for pixel centers lying exactly on a polygon edge.
EDGE_EPS = 1e-9


class ImageDecodeError(TunnelIPMError):
    """An image file could not be read."""

    def __init__(self, path, reason):
        super().__init__(f"cannot decode image {path}: {reason}")
        self.path = str(path)


def check_raster(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise ValueError(f"rasters are 8-bit, got dtype {img.dtype}")
    if img.ndim == 2 or (img.ndim == 3 and img.shape[2] == 3):
        if img.shape[0] >= 1 and img.shape[1] >= 1:
            return img
    raise ValueError(f"raster must be HxW or HxWx3 with H, W >= 1, got {img.shape}")


def read_image(path) -> np.ndarray:
    """Read a PNG/PGM/PPM file as gray (HxW) or RGB (HxWx3)."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if "A" in im.mode or im.mode == "P" else "L")
            return np.array(im, dtype=np.uint8)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise ImageDecodeError(path, exc) from exc


def write_image(path, img: np.ndarray) -> None:
    """Write a raster; the format follows the suffix (.png, .pgm, .ppm)."""
    img = check_raster(img)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img, mode="L" if img.ndim == 2 else "RGB").save(path)


def polygon_mask(shape, vertices, eps: float = EDGE_EPS) -> np.ndarray:
    """Boolean mask of pixel centers inside (or on) a convex polygon.

    Args:
        shape: ``(height, width)`` of the mask.
        vertices: polygon corners in either winding order.
    """
    height, width = shape[:2]
    v = np.asarray(vertices, dtype=float)
    mask = np.zeros((height, width), dtype=bool)
    if len(v) < 3:
        return mask
    x0 = max(int(np.floor(v[:, 0].min() - eps)), 0)
    x1 = min(int(np.ceil(v[:, 0].max() + eps)), width - 1)
    y0 = max(int(np.floor(v[:, 1].min() - eps)), 0)
    y1 = min(int(np.ceil(v[:, 1].max() + eps)), height - 1)
    if x0 > x1 or y0 > y1:
        return mask
    ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1].astype(float)
    area2 = 0.0
    for i in range(len(v)):
        (ax, ay), (bx, by) = v[i], v[(i + 1) % len(v)]
        area2 += ax * by - bx * ay
    sign = 1.0 if area2 >= 0 else -1.0
    inside = np.ones(xs.shape, dtype=bool)
    for i in range(len(v)):
        (ax, ay), (bx, by) = v[i], v[(i + 1) % len(v)]
        length = np.hypot(bx - ax, by - ay)
        if length == 0.0:
            continue
        cross = ((bx - ax) * (ys - ay) - (by - ay) * (xs - ax)) * sign / length
        inside &= cross >= -eps
    mask[y0:y1 + 1, x0:x1 + 1] = inside
    return mask


def fill_polygon(img: np.ndarray, vertices, value) -> None:
    """Paint a convex polygon into ``img`` in place."""
    img[polygon_mask(img.shape, vertices)] = value


def convex_hull(points) -> np.ndarray:
    """Monotone-chain convex hull, counter-clockwise, no repeated endpoint."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float).tolist())))
    if len(pts) <= 2:
        return np.array(pts)

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and (
                (out[-1][0] - out[-2][0]) * (p[1] - out[-2][1])
                - (out[-1][1] - out[-2][1]) * (p[0] - out[-2][0])
            ) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(reversed(pts))
    return np.array(lower[:-1] + upper[:-1])
