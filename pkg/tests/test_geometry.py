import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tunnelipm.errors import DegenerateCorrespondences, PointAtInfinity, SingularMatrix
from tunnelipm.geometry import (
    Homography,
    apply_homography,
    apply_homography_many,
    homography_from_correspondences,
    invert_homography,
    solve_linear,
)

from helpers import random_quad

UNIT_SQUARE = [(0, 0), (1, 0), (1, 1), (0, 1)]


def numpy_dlt(src, dst):
    """Reference: the raw h33=1 system solved by LAPACK, no conditioning."""
    a, b = [], []
    for (x, y), (u, v) in zip(src, dst):
        a.append([x, y, 1, 0, 0, 0, -x * u, -y * u])
        b.append(u)
        a.append([0, 0, 0, x, y, 1, -x * v, -y * v])
        b.append(v)
    return np.append(np.linalg.solve(np.array(a, float), np.array(b, float)), 1.0).reshape(3, 3)


def test_identity_correspondences():
    h = homography_from_correspondences(UNIT_SQUARE, UNIT_SQUARE)
    np.testing.assert_allclose(h.matrix, np.eye(3), atol=1e-12)
    assert h.coeffs[8] == 1.0


def test_pure_scaling():
    h = homography_from_correspondences(UNIT_SQUARE, [(2 * x, 2 * y) for x, y in UNIT_SQUARE])
    np.testing.assert_allclose(h.matrix, np.diag([2.0, 2.0, 1.0]), atol=1e-12)


def test_trapezoid_matches_numpy_oracle():
    dst = [(0, 0), (1, 0), (0.8, 0.6), (0.2, 0.6)]
    h = homography_from_correspondences(UNIT_SQUARE, dst)
    oracle = numpy_dlt(UNIT_SQUARE, dst)
    np.testing.assert_allclose(h.matrix, oracle, atol=1e-12)
    # closed form of the oracle's solution
    np.testing.assert_allclose(h.matrix, [[1, 1 / 3, 0], [0, 1, 0], [0, 2 / 3, 1]], atol=1e-12)
    for s, d in zip(UNIT_SQUARE, dst):
        assert np.allclose(apply_homography(h, s), d, atol=1e-9, rtol=0)


def test_solve_linear_agrees_with_lapack():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(8, 8))
    b = rng.normal(size=8)
    np.testing.assert_allclose(solve_linear(a, b), np.linalg.solve(a, b), rtol=1e-10, atol=1e-12)


def test_solve_linear_rejects_singular():
    a = np.ones((8, 8))
    with pytest.raises(DegenerateCorrespondences):
        solve_linear(a, np.ones(8))


@pytest.mark.parametrize("src", [
    [(0, 0), (1, 1), (2, 2), (0, 1)],
    [(0, 0), (1, 0), (2, 0), (3, 1)],
    [(5, 5), (5, 5), (6, 7), (1, 9)],
])
def test_collinear_triples_rejected(src):
    with pytest.raises(DegenerateCorrespondences) as info:
        homography_from_correspondences(src, UNIT_SQUARE)
    assert info.value.corners


def test_bowtie_order_rejected():
    with pytest.raises(DegenerateCorrespondences):
        homography_from_correspondences([(0, 0), (1, 1), (1, 0), (0, 1)], UNIT_SQUARE)


def test_apply_identity_and_scaling():
    assert apply_homography(Homography.identity(), (5, 7)) == (5.0, 7.0)
    assert apply_homography(Homography.from_matrix(np.diag([2.0, 2.0, 1.0])), (3, 4)) == (6.0, 8.0)


def test_apply_projective_hand_value():
    h = Homography((1, 0, 0, 0, 1, 0, 0.1, 0, 1))
    # S = 0.1 * 10 + 1 = 2
    assert apply_homography(h, (10, 5)) == (5.0, 2.5)


def test_point_on_vanishing_line():
    h = Homography((1, 0, 0, 0, 1, 0, 0.1, 0, 1))
    with pytest.raises(PointAtInfinity):
        apply_homography(h, (-10, 3))


def test_non_finite_points_rejected():
    with pytest.raises(ValueError):
        apply_homography(Homography.identity(), (math.nan, 0))


def test_invert_simple():
    assert invert_homography(Homography.identity()) == Homography.identity()
    inv = invert_homography(Homography.from_matrix(np.diag([2.0, 2.0, 1.0])))
    np.testing.assert_allclose(inv.matrix, np.diag([0.5, 0.5, 1.0]))


def test_singular_rejected():
    with pytest.raises(SingularMatrix):
        Homography((1, 2, 3, 2, 4, 6, 0, 0, 1))


def test_normalization_on_construction():
    h = Homography((2, 0, 0, 0, 2, 0, 0, 0, 2))
    assert h == Homography.identity()
    assert h.coeffs[8] == 1.0


def test_vectorized_matches_scalar_bitwise():
    rng = np.random.default_rng(11)
    src = random_quad(rng)
    h = homography_from_correspondences(src, random_quad(rng))
    xs, ys = rng.uniform(0, 600, (2, 200))
    xo, yo, valid = apply_homography_many(h, xs, ys)
    for i in range(200):
        assert valid[i]
        assert (xo[i], yo[i]) == apply_homography(h, (xs[i], ys[i]))


def test_round_trip_random_homography():
    rng = np.random.default_rng(5)
    src = random_quad(rng)
    h = homography_from_correspondences(src, random_quad(rng))
    inv = invert_homography(h)
    weights = rng.dirichlet(np.ones(4), size=100)
    for p in weights @ np.array(src):
        back = apply_homography(inv, apply_homography(h, p))
        assert math.dist(back, p) < 1e-9


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.floats(0.1, 10.0))
def test_scale_invariance_of_estimation(seed, k):
    rng = np.random.default_rng(seed)
    src, dst = random_quad(rng), random_quad(rng)
    h = homography_from_correspondences(src, dst)
    hk = homography_from_correspondences(src, [(k * x, k * y) for x, y in dst])
    for s, d in zip(src, dst):
        assert math.dist(apply_homography(hk, s), (k * d[0], k * d[1])) < 1e-6
    np.testing.assert_allclose(hk.matrix[:2], h.matrix[:2] * k, rtol=1e-8, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_reprojection_and_normalization(seed):
    rng = np.random.default_rng(seed)
    src, dst = random_quad(rng), random_quad(rng)
    h = homography_from_correspondences(src, dst)
    assert h.coeffs[8] == 1.0
    assert invert_homography(h).coeffs[8] == 1.0
    for s, d in zip(src, dst):
        assert math.dist(apply_homography(h, s), d) < 1e-6
