"""ROI-driven image preparation for the two experiment arms.

``crop_and_mask`` produces the masked original (case 1): the bounding
rectangle of the ROI with everything outside the ROI painted black.
``warp_image`` with a plan from ``plan_warp`` produces the inverse
perspective view (case 2), where the near ROI edge lands on the bottom row
and the far edge on the top row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import InvalidRoi, RoiOutOfBounds
from .geometry import (
    Homography,
    apply_homography_many,
    check_quad,
    homography_from_correspondences,
    invert_homography,
)
from .raster import EDGE_EPS, check_raster, polygon_mask

Fill = Union[int, Tuple[int, int, int]]


@dataclass(frozen=True)
class Roi:
    """Road-surface quadrilateral plus its real-world size.

    ``corners`` are ordered near-left, near-right, far-right, far-left in
    pixel coordinates of the image the ROI belongs to.
    """

    corners: Tuple[Tuple[float, float], ...]
    road_width_m: float
    length_m: float

    def __post_init__(self):
        corners = tuple((float(x), float(y)) for x, y in self.corners)
        object.__setattr__(self, "corners", corners)
        if not (self.road_width_m > 0 and self.length_m > 0):
            raise InvalidRoi(
                f"road_width_m and length_m must be positive, got "
                f"{self.road_width_m}, {self.length_m}"
            )
        # raises DegenerateCorrespondences naming the offending corners
        sign = check_quad(corners, "ROI")
        if sign > 0:
            raise InvalidRoi(
                "ROI corners must run near-left, near-right, far-right, far-left "
                "with the near edge below the far edge"
            )

    @property
    def near_left(self):
        return self.corners[0]

    @property
    def near_right(self):
        return self.corners[1]

    def near_edge_length(self) -> float:
        return math.dist(self.corners[0], self.corners[1])

    def world_corners(self):
        """Road-plane corners in meters: x across the road, y along it."""
        w, l = self.road_width_m, self.length_m
        return ((0.0, 0.0), (w, 0.0), (w, l), (0.0, l))

    def bounds(self):
        xs = [c[0] for c in self.corners]
        ys = [c[1] for c in self.corners]
        return min(xs), min(ys), max(xs), max(ys)

    def shifted(self, dx: float, dy: float) -> "Roi":
        return Roi(tuple((x + dx, y + dy) for x, y in self.corners), self.road_width_m, self.length_m)

    def to_dict(self) -> dict:
        return {
            "corners": [list(c) for c in self.corners],
            "road_width_m": self.road_width_m,
            "length_m": self.length_m,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Roi":
        return cls(tuple(tuple(c) for c in d["corners"]), float(d["road_width_m"]), float(d["length_m"]))


@dataclass(frozen=True)
class WarpPlan:
    h_src_to_dst: Homography
    out_width: int
    out_height: int
    fill: Fill = 0

    def __post_init__(self):
        if self.out_width < 1 or self.out_height < 1:
            raise ValueError(f"output size must be at least 1x1, got {self.out_width}x{self.out_height}")


def output_corners(out_width: int, out_height: int):
    """Destination rectangle in ROI corner order (near edge at the bottom)."""
    w, h = out_width - 1, out_height - 1
    return ((0.0, float(h)), (float(w), float(h)), (float(w), 0.0), (0.0, 0.0))


def default_output_size(roi: Roi) -> Tuple[int, int]:
    out_width = max(1, round(roi.near_edge_length()))
    out_height = max(1, round(out_width * roi.length_m / roi.road_width_m))
    return out_width, out_height


def plan_warp(roi: Roi, out_width: int = None, out_height: int = None, fill: Fill = 0) -> WarpPlan:
    """Homography taking the ROI onto an ``out_width`` x ``out_height`` image.

    Missing sizes default to the near-edge pixel length for the width and a
    height giving square road-plane pixels.
    """
    default_w, default_h = default_output_size(roi)
    if out_width is None and out_height is None:
        out_width, out_height = default_w, default_h
    elif out_height is None:
        out_height = max(1, round(out_width * roi.length_m / roi.road_width_m))
    elif out_width is None:
        out_width = max(1, round(out_height * roi.road_width_m / roi.length_m))
    if out_width < 2 or out_height < 2:
        raise ValueError("warp output must be at least 2x2 pixels")
    h = homography_from_correspondences(roi.corners, output_corners(out_width, out_height))
    return WarpPlan(h, int(out_width), int(out_height), fill)


def _fill_array(fill: Fill, channels: int) -> np.ndarray:
    f = np.atleast_1d(np.asarray(fill, dtype=float))
    if f.size == 1:
        f = np.repeat(f, channels)
    if f.size != channels:
        raise ValueError(f"fill has {f.size} values for a {channels}-channel raster")
    return f


def sample_bilinear(src: np.ndarray, xs: np.ndarray, ys: np.ndarray, valid: np.ndarray, fill: Fill = 0) -> np.ndarray:
    """Bilinear samples of ``src`` at float coordinates.

    Coordinates inside ``[-0.5, W-0.5) x [-0.5, H-0.5)`` interpolate with the
    neighbor indices clamped at the border; the rest take ``fill``.
    """
    src = check_raster(src)
    height, width = src.shape[:2]
    channels = 1 if src.ndim == 2 else src.shape[2]
    inside = valid & (xs >= -0.5) & (xs < width - 0.5) & (ys >= -0.5) & (ys < height - 0.5)
    xs = np.where(inside, xs, 0.0)
    ys = np.where(inside, ys, 0.0)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    xi0 = np.clip(x0.astype(np.int64), 0, width - 1)
    xi1 = np.clip(x0.astype(np.int64) + 1, 0, width - 1)
    yi0 = np.clip(y0.astype(np.int64), 0, height - 1)
    yi1 = np.clip(y0.astype(np.int64) + 1, 0, height - 1)
    img = src.astype(float).reshape(height, width, channels)
    p00 = img[yi0, xi0]
    p10 = img[yi0, xi1]
    p01 = img[yi1, xi0]
    p11 = img[yi1, xi1]
    fx = fx[..., None]
    fy = fy[..., None]
    value = (
        (1.0 - fx) * (1.0 - fy) * p00
        + fx * (1.0 - fy) * p10
        + (1.0 - fx) * fy * p01
        + fx * fy * p11
    )
    out = np.clip(np.floor(value + 0.5), 0, 255)
    out = np.where(inside[..., None], out, _fill_array(fill, channels))
    out = out.astype(np.uint8)
    return out[..., 0] if src.ndim == 2 else out


def warp_image(src: np.ndarray, plan: WarpPlan) -> np.ndarray:
    """Inverse-map every output pixel into ``src`` and sample bilinearly."""
    src = check_raster(src)
    inv = invert_homography(plan.h_src_to_dst)
    vs, us = np.mgrid[0:plan.out_height, 0:plan.out_width].astype(float)
    xs, ys, valid = apply_homography_many(inv, us, vs)
    return sample_bilinear(src, xs, ys, valid, plan.fill)


def crop_rect(roi: Roi, width: int, height: int) -> Tuple[int, int, int, int]:
    """Inclusive pixel rectangle ``(x0, y0, x1, y1)`` spanned by the ROI corners."""
    min_x, min_y, max_x, max_y = roi.bounds()
    if min_x < -EDGE_EPS or min_y < -EDGE_EPS or max_x > width - 1 + EDGE_EPS or max_y > height - 1 + EDGE_EPS:
        raise RoiOutOfBounds(
            f"ROI bounds ({min_x:g}, {min_y:g})-({max_x:g}, {max_y:g}) exceed the "
            f"{width}x{height} image"
        )
    x0 = max(int(math.floor(min_x + EDGE_EPS)), 0)
    y0 = max(int(math.floor(min_y + EDGE_EPS)), 0)
    x1 = min(int(math.ceil(max_x - EDGE_EPS)), width - 1)
    y1 = min(int(math.ceil(max_y - EDGE_EPS)), height - 1)
    return x0, y0, x1, y1


def crop_and_mask(src: np.ndarray, roi: Roi, fill: Fill = 0):
    """Crop to the ROI's bounding rectangle and black out pixels outside the ROI.

    Returns:
        tuple: ``(image, (offset_x, offset_y))``; subtract the offset from
        source-frame coordinates to get crop-frame coordinates.
    """
    src = check_raster(src)
    height, width = src.shape[:2]
    x0, y0, x1, y1 = crop_rect(roi, width, height)
    out = src[y0:y1 + 1, x0:x1 + 1].copy()
    local = roi.shifted(-x0, -y0)
    mask = polygon_mask(out.shape, local.corners)
    channels = 1 if out.ndim == 2 else out.shape[2]
    f = _fill_array(fill, channels).astype(np.uint8)
    out[~mask] = f[0] if out.ndim == 2 else f
    return out, (float(x0), float(y0))
