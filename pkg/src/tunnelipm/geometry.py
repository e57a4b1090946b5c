"""Planar homographies: four-point estimation, application and inversion.

A homography is stored as nine row-major coefficients with ``h33 == 1``.
Applying it to ``(x, y)`` produces the homogeneous triple
``(S*x', S*y', S)``; the scale ``S`` is recomputed for every point and
divided out, never stored.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from .errors import DegenerateCorrespondences, PointAtInfinity, SingularMatrix

Point2 = Tuple[float, float]

# |S| below this means the point sits on the vanishing line.
SCALE_TOLERANCE = 1e-12
# Relative pivot floor for the 8x8 elimination.
PIVOT_FLOOR = 1e-12
DET_FLOOR = 1e-14
# Collinearity: |cross| below this fraction of the squared point spread.
COLLINEAR_TOLERANCE = 1e-9

CORNER_NAMES = ("near-left", "near-right", "far-right", "far-left")


def _check_point(p) -> Point2:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"point coordinates must be finite, got {p!r}")
    return x, y


@dataclass(frozen=True)
class Homography:
    """3x3 projective map with ``h33`` normalized to 1."""

    coeffs: Tuple[float, ...]

    def __post_init__(self):
        if len(self.coeffs) != 9:
            raise ValueError("a homography has exactly 9 coefficients")
        coeffs = tuple(float(c) for c in self.coeffs)
        if not all(math.isfinite(c) for c in coeffs):
            raise SingularMatrix("homography coefficients must be finite")
        if coeffs[8] != 1.0:
            if abs(coeffs[8]) < SCALE_TOLERANCE:
                raise SingularMatrix("h33 is zero; cannot normalize to h33 == 1")
            coeffs = tuple(c / coeffs[8] for c in coeffs[:8]) + (1.0,)
        object.__setattr__(self, "coeffs", coeffs)
        if abs(np.linalg.det(self.matrix)) <= DET_FLOOR:
            raise SingularMatrix(f"homography is singular: {coeffs}")

    @classmethod
    def identity(cls) -> "Homography":
        return cls((1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0))

    @classmethod
    def from_matrix(cls, m) -> "Homography":
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
        return cls(tuple(m.ravel().tolist()))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Homography":
        return cls((1.0, 0.0, float(dx), 0.0, 1.0, float(dy), 0.0, 0.0, 1.0))

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.coeffs, dtype=float).reshape(3, 3)

    def to_list(self) -> list:
        return list(self.coeffs)

    def __matmul__(self, other: "Homography") -> "Homography":
        """Composition: ``(a @ b)`` applies ``b`` first, then ``a``."""
        return Homography.from_matrix(self.matrix @ other.matrix)


def apply_homography(h: Homography, p) -> Point2:
    """Map one point through ``h``.

    Raises:
        PointAtInfinity: if the homogeneous scale ``S`` is (numerically) zero.
    """
    x, y = _check_point(p)
    h11, h12, h13, h21, h22, h23, h31, h32, h33 = h.coeffs
    s = h31 * x + h32 * y + h33
    if abs(s) < SCALE_TOLERANCE:
        raise PointAtInfinity(f"point ({x}, {y}) maps to infinity (S={s})")
    return (h11 * x + h12 * y + h13) / s, (h21 * x + h22 * y + h23) / s


def apply_homography_many(h: Homography, xs, ys):
    """Vectorized :func:`apply_homography`.

    Uses the same arithmetic order as the scalar version, so results are
    bit-identical point by point. Points with ``|S|`` below tolerance come
    back as NaN and are flagged in the returned ``valid`` mask.

    Returns:
        tuple: ``(xs', ys', valid)`` arrays shaped like the inputs.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    h11, h12, h13, h21, h22, h23, h31, h32, h33 = h.coeffs
    s = h31 * xs + h32 * ys + h33
    valid = np.abs(s) >= SCALE_TOLERANCE
    safe = np.where(valid, s, 1.0)
    xo = (h11 * xs + h12 * ys + h13) / safe
    yo = (h21 * xs + h22 * ys + h23) / safe
    xo = np.where(valid, xo, np.nan)
    yo = np.where(valid, yo, np.nan)
    return xo, yo, valid


def invert_homography(h: Homography) -> Homography:
    m = h.matrix
    if abs(np.linalg.det(m)) <= DET_FLOOR:
        raise SingularMatrix("homography is not invertible")
    inv = np.linalg.inv(m)
    if abs(inv[2, 2]) < SCALE_TOLERANCE:
        raise SingularMatrix("inverse has h33 == 0 and cannot be normalized")
    return Homography.from_matrix(inv / inv[2, 2])


def _orientation(a: Point2, b: Point2, c: Point2) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def check_quad(points: Sequence[Point2], label: str = "points") -> int:
    """Validate four points as a non-degenerate convex quadrilateral.

    Returns the winding sign (+1 or -1) of the quad.

    Raises:
        DegenerateCorrespondences: on a collinear triple, or a quad that is
            self-intersecting or not convex.
    """
    pts = [_check_point(p) for p in points]
    if len(pts) != 4:
        raise DegenerateCorrespondences(f"{label}: need exactly 4 points, got {len(pts)}")
    spread = max(math.dist(a, b) for a, b in itertools.combinations(pts, 2))
    if spread == 0.0:
        raise DegenerateCorrespondences(f"{label}: all points coincide", CORNER_NAMES)
    for idx in itertools.combinations(range(4), 3):
        a, b, c = (pts[i] for i in idx)
        if abs(_orientation(a, b, c)) <= COLLINEAR_TOLERANCE * spread * spread:
            names = tuple(CORNER_NAMES[i] for i in idx)
            raise DegenerateCorrespondences(
                f"{label}: corners {', '.join(names)} are collinear", names
            )
    turns = [_orientation(pts[i], pts[(i + 1) % 4], pts[(i + 2) % 4]) for i in range(4)]
    signs = {math.copysign(1.0, t) for t in turns}
    if len(signs) != 1:
        raise DegenerateCorrespondences(
            f"{label}: corners do not form a convex quad in consistent winding order",
            CORNER_NAMES,
        )
    return int(signs.pop())


def _normalizing_transform(pts: np.ndarray) -> np.ndarray:
    # Hartley: centroid to origin, mean distance sqrt(2).
    centroid = pts.mean(axis=0)
    mean_dist = np.mean(np.hypot(*(pts - centroid).T))
    scale = math.sqrt(2.0) / mean_dist
    return np.array(
        [[scale, 0.0, -scale * centroid[0]], [0.0, scale, -scale * centroid[1]], [0.0, 0.0, 1.0]]
    )


def solve_linear(a: np.ndarray, b: np.ndarray, pivot_floor: float = PIVOT_FLOOR) -> np.ndarray:
    """Gaussian elimination with partial pivoting.

    Raises:
        DegenerateCorrespondences: when a pivot falls below ``pivot_floor``
            times the largest initial matrix entry.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = a.shape[0]
    reference = np.max(np.abs(a))
    if reference == 0.0:
        raise DegenerateCorrespondences("linear system is all zeros")
    for col in range(n):
        row = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[row, col]) < pivot_floor * reference:
            raise DegenerateCorrespondences("linear system is singular")
        if row != col:
            a[[col, row]] = a[[row, col]]
            b[[col, row]] = b[[row, col]]
        factors = a[col + 1:, col] / a[col, col]
        a[col + 1:, col:] -= np.outer(factors, a[col, col:])
        b[col + 1:] -= factors * b[col]
    x = np.zeros(n)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1:] @ x[row + 1:]) / a[row, row]
    return x


def dlt_system(src: np.ndarray, dst: np.ndarray):
    """Build the 8x8 system for h11..h32 with h33 fixed to 1."""
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u]
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v]
        b[2 * i] = u
        b[2 * i + 1] = v
    return a, b


def homography_from_correspondences(src: Iterable, dst: Iterable) -> Homography:
    """Estimate the homography taking four ``src`` points onto four ``dst`` points.

    Each point set must be a convex quad listed in order around its boundary
    (for an ROI: near-left, near-right, far-right, far-left). The two quads
    may differ in orientation, e.g. image (y down) to road plane (y up).
    Coordinates are conditioned before the exact 8x8 solve.
    """
    src = [_check_point(p) for p in src]
    dst = [_check_point(p) for p in dst]
    check_quad(src, "source")
    check_quad(dst, "destination")
    src_a = np.array(src)
    dst_a = np.array(dst)
    t_src = _normalizing_transform(src_a)
    t_dst = _normalizing_transform(dst_a)
    src_n = src_a * t_src[0, 0] + t_src[:2, 2]
    dst_n = dst_a * t_dst[0, 0] + t_dst[:2, 2]
    a, b = dlt_system(src_n, dst_n)
    h_n = np.append(solve_linear(a, b), 1.0).reshape(3, 3)
    m = np.linalg.inv(t_dst) @ h_n @ t_src
    if abs(m[2, 2]) < SCALE_TOLERANCE * np.max(np.abs(m)):
        raise DegenerateCorrespondences(
            "homography has h33 == 0 in these coordinates", CORNER_NAMES
        )
    return Homography.from_matrix(m / m[2, 2])
