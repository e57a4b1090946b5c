import math

import numpy as np
import pytest

from tunnelipm.errors import DegenerateCorrespondences, InvalidRoi, RoiOutOfBounds
from tunnelipm.geometry import Homography, apply_homography, homography_from_correspondences, invert_homography
from tunnelipm.raster import ImageDecodeError, read_image, write_image
from tunnelipm.warp import Roi, WarpPlan, crop_and_mask, output_corners, plan_warp, warp_image

from helpers import checkerboard, random_quad, reference_warp

TRAPEZOID = ((100, 300), (540, 300), (380, 60), (260, 60))


def scanline_mask(shape, quad):
    """Closed pixel-center rasterization by intersecting each row with the edges."""
    height, width = shape
    mask = np.zeros(shape, dtype=bool)
    pts = list(quad)
    for row in range(height):
        xs = []
        for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
            if y0 == y1:
                if y0 == row:
                    xs += [x0, x1]
                continue
            if min(y0, y1) <= row <= max(y0, y1):
                xs.append(x0 + (row - y0) * (x1 - x0) / (y1 - y0))
        if xs:
            lo, hi = min(xs), max(xs)
            for col in range(max(0, math.ceil(lo - 1e-9)), min(width - 1, math.floor(hi + 1e-9)) + 1):
                mask[row, col] = True
    return mask


def shoelace(quad):
    return abs(sum(x0 * y1 - x1 * y0 for (x0, y0), (x1, y1) in zip(quad, quad[1:] + quad[:1]))) / 2


def test_roi_validation():
    with pytest.raises(InvalidRoi):
        Roi(TRAPEZOID, 0.0, 200.0)
    with pytest.raises(InvalidRoi):
        Roi(TRAPEZOID[::-1], 7.2, 200.0)
    with pytest.raises(DegenerateCorrespondences):
        Roi(((0, 10), (5, 10), (10, 10), (3, 0)), 7.2, 200.0)


def test_plan_identity_for_output_rectangle():
    plan = plan_warp(Roi(output_corners(64, 48), 7.2, 200.0), 64, 48)
    np.testing.assert_allclose(plan.h_src_to_dst.matrix, np.eye(3), atol=1e-12)


def test_plan_trapezoid_corners():
    plan = plan_warp(Roi(TRAPEZOID, 7.2, 200.0), 440, 600)
    targets = [(0, 599), (439, 599), (439, 0), (0, 0)]
    for src, dst in zip(TRAPEZOID, targets):
        assert math.dist(apply_homography(plan.h_src_to_dst, src), dst) < 1e-6
    assert apply_homography(plan.h_src_to_dst, TRAPEZOID[0]) == pytest.approx((0, 599), abs=1e-9)


def test_plan_default_size_gives_square_road_pixels():
    roi = Roi(TRAPEZOID, 7.2, 200.0)
    plan = plan_warp(roi)
    assert plan.out_width == 440
    assert plan.out_height == round(440 * 200.0 / 7.2)
    assert plan_warp(roi, 100).out_height == round(100 * 200 / 7.2)


def test_plan_is_deterministic():
    roi = Roi(TRAPEZOID, 7.2, 200.0)
    assert plan_warp(roi, 200, 300) == plan_warp(roi, 200, 300)


@pytest.mark.parametrize("img", [
    checkerboard(40, 30),
    np.random.default_rng(0).integers(0, 256, (30, 40, 3), dtype=np.uint8),
])
def test_identity_warp_is_byte_identical(img):
    out = warp_image(img, WarpPlan(Homography.identity(), 40, 30))
    assert out.dtype == np.uint8
    assert np.array_equal(out, img)


def test_translation_leaves_fill_band():
    img = np.random.default_rng(1).integers(1, 256, (20, 50), dtype=np.uint8)
    out = warp_image(img, WarpPlan(Homography.translation(10, 0), 50, 20, fill=0))
    assert np.all(out[:, :10] == 0)
    assert np.array_equal(out[:, 10:], img[:, :-10])


def test_rgb_fill_per_channel():
    img = np.full((10, 10, 3), 100, dtype=np.uint8)
    out = warp_image(img, WarpPlan(Homography.translation(3, 0), 10, 10, fill=(1, 2, 3)))
    assert tuple(out[0, 0]) == (1, 2, 3)
    assert tuple(out[0, 5]) == (100, 100, 100)


def test_perspective_warp_matches_reference_loop():
    rng = np.random.default_rng(7)
    img = checkerboard(90, 60, cell=7)
    h = homography_from_correspondences(random_quad(rng, 60), random_quad(rng, 80))
    plan = WarpPlan(h, 80, 50, fill=9)
    expected = reference_warp(img, invert_homography(h), 80, 50, fill=9)
    assert np.array_equal(warp_image(img, plan), expected)


def test_warp_round_trip_interior_error():
    ys, xs = np.mgrid[0:120, 0:160]
    img = (100 + 60 * np.sin(xs / 9.0) * np.cos(ys / 11.0)).astype(np.uint8)
    roi = Roi(((20, 110), (140, 110), (100, 20), (60, 20)), 7.2, 50.0)
    plan = plan_warp(roi, 160, 120)
    there = warp_image(img, plan)
    back = warp_image(there, WarpPlan(invert_homography(plan.h_src_to_dst), 160, 120))
    # interior of the ROI, away from its border, survives both resamplings
    from tunnelipm.raster import polygon_mask

    inner = Roi(((35, 100), (125, 100), (95, 30), (65, 30)), 7.2, 50.0)
    mask = polygon_mask(img.shape, inner.corners)
    err = np.abs(back.astype(int) - img.astype(int))[mask]
    assert err.mean() <= 2.0


def test_warp_is_deterministic():
    img = checkerboard(64, 48)
    plan = plan_warp(Roi(((5, 45), (60, 45), (40, 5), (20, 5)), 7.2, 200.0), 32, 64)
    assert np.array_equal(warp_image(img, plan), warp_image(img, plan))


def test_crop_full_image_is_unchanged():
    img = np.random.default_rng(2).integers(0, 256, (24, 32), dtype=np.uint8)
    out, offset = crop_and_mask(img, Roi(output_corners(32, 24), 7.2, 200.0))
    assert offset == (0.0, 0.0)
    assert np.array_equal(out, img)


def test_crop_masks_outside_and_keeps_inside():
    img = np.random.default_rng(3).integers(1, 256, (324, 646), dtype=np.uint8)
    roi = Roi(TRAPEZOID, 7.2, 200.0)
    out, (ox, oy) = crop_and_mask(img, roi)
    assert (ox, oy) == (100.0, 60.0)
    assert out.shape == (241, 441)
    local = [(x - ox, y - oy) for x, y in TRAPEZOID]
    inside = scanline_mask(out.shape, local)
    assert np.all(out[~inside] == 0)
    assert np.array_equal(out[inside], img[60:301, 100:541][inside])


def test_crop_pixel_count_near_shoelace_area():
    quad = [(50, 320), (600, 320), (380, 40), (270, 40)]
    img = np.full((324, 646), 255, dtype=np.uint8)
    out, (ox, oy) = crop_and_mask(img, Roi(quad, 7.2, 200.0))
    local = [(x - ox, y - oy) for x, y in quad]
    count = int(np.count_nonzero(out))
    assert count == int(np.count_nonzero(scanline_mask(out.shape, local)))
    # closed inclusion counts boundary pixel centers, ~half the perimeter extra
    assert abs(count - shoelace(quad)) <= 0.005 * shoelace(quad)


def test_crop_roi_out_of_bounds():
    with pytest.raises(RoiOutOfBounds):
        crop_and_mask(np.zeros((100, 100), np.uint8), Roi(((-5, 90), (90, 90), (60, 10), (30, 10)), 7.2, 200.0))


def test_image_io_round_trip(tmp_path):
    gray = checkerboard(20, 10)
    rgb = np.random.default_rng(4).integers(0, 256, (10, 20, 3), dtype=np.uint8)
    for name, img in (("a.png", gray), ("b.pgm", gray), ("c.ppm", rgb), ("d.png", rgb)):
        write_image(tmp_path / name, img)
        assert np.array_equal(read_image(tmp_path / name), img)


def test_image_decode_error(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(ImageDecodeError) as info:
        read_image(bad)
    assert "bad.png" in str(info.value)
