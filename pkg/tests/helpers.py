"""Shared generators and reference implementations for the test suite."""

import math

import numpy as np

from tunnelipm.errors import DegenerateCorrespondences
from tunnelipm.geometry import check_quad


def random_quad(rng, scale=600.0):
    """Random convex quad with well-separated corners, in boundary order."""
    while True:
        center = rng.uniform(0.3, 0.7, 2) * scale
        angles = np.sort(rng.uniform(0, 2 * np.pi, 4))
        gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))
        if gaps.max() > 0.8 * np.pi or gaps.min() < 0.3:
            continue
        radii = rng.uniform(0.15, 0.3, 4) * scale
        quad = [tuple(center + r * np.array([math.cos(t), math.sin(t)])) for r, t in zip(radii, angles)]
        try:
            check_quad(quad)
        except DegenerateCorrespondences:
            continue
        return quad


def reference_warp(src, h_inv, out_w, out_h, fill=0):
    """Per-pixel inverse-mapping bilinear resampler written as plain loops.

    Shares no code with the package; the arithmetic order matches it so the
    two agree bit for bit.
    """
    h11, h12, h13, h21, h22, h23, h31, h32, h33 = (float(c) for c in h_inv.coeffs)
    height, width = src.shape[:2]
    out = np.zeros((out_h, out_w), dtype=np.uint8)
    for v in range(out_h):
        for u in range(out_w):
            x, y = float(u), float(v)
            s = h31 * x + h32 * y + h33
            if abs(s) < 1e-12:
                out[v, u] = fill
                continue
            x, y = (h11 * x + h12 * y + h13) / s, (h21 * x + h22 * y + h23) / s
            if not (-0.5 <= x < width - 0.5 and -0.5 <= y < height - 0.5):
                out[v, u] = fill
                continue
            x0 = math.floor(x)
            y0 = math.floor(y)
            fx = x - x0
            fy = y - y0
            xa, xb = min(max(x0, 0), width - 1), min(max(x0 + 1, 0), width - 1)
            ya, yb = min(max(y0, 0), height - 1), min(max(y0 + 1, 0), height - 1)
            p00 = float(src[ya, xa])
            p10 = float(src[ya, xb])
            p01 = float(src[yb, xa])
            p11 = float(src[yb, xb])
            val = (1.0 - fx) * (1.0 - fy) * p00 + fx * (1.0 - fy) * p10 + (1.0 - fx) * fy * p01 + fx * fy * p11
            out[v, u] = min(max(math.floor(val + 0.5), 0), 255)
    return out


def checkerboard(width, height, cell=17):
    ys, xs = np.mgrid[0:height, 0:width]
    return np.where(((xs // cell) + (ys // cell)) % 2 == 0, 230, 25).astype(np.uint8)


REFERENCE_COUNTS = {"images": (58, 55, 63, 70), "objects": (111, 87, 83, 92), "total": (106, 373)}


def reference_count_manifest(counts=REFERENCE_COUNTS, width=646, height=324):
    """Case-1 style manifest whose per-section counts follow ``counts``.

    Boxes are centered on road points at the middle of each 50 m section,
    projected into the image through a perspective ROI. Each section takes a
    contiguous (wrapping) run of images so that every image is used.
    """
    from tunnelipm.dataset import Annotation, BBox, DatasetManifest, ImageRecord, SectionMap
    from tunnelipm.geometry import apply_homography, invert_homography
    from tunnelipm.warp import Roi

    n_images, _ = counts["total"]
    roi = Roi(((60.0, 320.0), (590.0, 320.0), (335.0, 40.0), (311.0, 40.0)), 7.2, 200.0)
    to_image = invert_homography(SectionMap.from_roi(roi).h_image_to_world)
    images = tuple(ImageRecord(f"test_{i:03d}", f"images/test_{i:03d}.png", width, height) for i in range(n_images))
    annotations = []
    start = 0
    for k, (n_img, n_obj) in enumerate(zip(counts["images"], counts["objects"])):
        members = [(start + j) % n_images for j in range(n_img)]
        start = (start + n_img) % n_images
        per_image = [1] * n_img
        for extra in range(n_obj - n_img):
            per_image[extra % n_img] += 1
        for idx, count in zip(members, per_image):
            for c in range(count):
                cx, cy = apply_homography(to_image, (1.0 + 1.7 * c, 50.0 * k + 25.0))
                annotations.append(Annotation(images[idx].id, "car", BBox(cx - 3, cy - 1, cx + 3, cy + 1)))
    return DatasetManifest("case1", images, tuple(annotations), None, roi, {"fixture": "reference_counts"})


ACCEPTANCE_RESULTS = []


def report_criterion(name, passed, detail):
    """Record and print one acceptance line; the conftest echoes them at the end."""
    line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_RESULTS.append(line)
    print(line)
    return passed
