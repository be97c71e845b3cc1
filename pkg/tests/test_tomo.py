import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from shapely.geometry import LineString, box

from pbim.sparse import remove_zero_rows
from pbim.tomo import (
    ParallelGeometry,
    add_noise,
    build_projection_matrix,
    ellipse_sum,
    make_sinogram,
    make_tomo_problem,
    pixel_centers,
    ray_pixel_intersections,
    shepp_logan,
    square_support,
)


def chord_oracle(n, phi_deg, s):
    """Length of the ray inside the image square, by polygon clipping."""
    phi = math.radians(phi_deg)
    c, sn = math.cos(phi), math.sin(phi)
    p, d, L = np.array([s * c, s * sn]), np.array([-sn, c]), 4.0 * n
    line = LineString([p - L * d, p + L * d])
    return line.intersection(box(-n / 2, -n / 2, n / 2, n / 2)).length


@pytest.fixture(scope="module")
def small_geom():
    return ParallelGeometry(12, 7, 19, 0.9)


@pytest.fixture(scope="module")
def small_A(small_geom):
    return build_projection_matrix(small_geom)


def test_phantom_range_and_corners():
    ph = shepp_logan(32)
    img = ph.image.reshape(32, 32)
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert img[0, 0] == img[0, -1] == img[-1, 0] == img[-1, -1] == 0.0
    assert 0 < img.sum() < 32 * 32
    with pytest.raises(ValueError):
        shepp_logan(4)


def test_phantom_center_matches_membership_sum():
    ph = shepp_logan(64)
    x, y = pixel_centers(64)
    np.testing.assert_array_equal(ph.image, np.clip(ellipse_sum(x, y), 0, 1))
    # the four pixels around the origin lie in the same ellipses as the origin
    centre = ph.image.reshape(64, 64)[31:33, 31:33]
    assert ellipse_sum(0.0, 0.0) == pytest.approx(0.2, abs=1e-12)
    np.testing.assert_allclose(centre, 0.2, atol=1e-12)


def test_geometry():
    g = ParallelGeometry(8, 6, 5)
    assert np.all(np.diff(g.angles) > 0) and g.angles[0] == 0.0 and g.angles[-1] < 180.0
    np.testing.assert_array_equal(g.offsets, [-2.0, -1.0, 0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        ParallelGeometry(0, 1, 1)
    with pytest.raises(ValueError):
        ParallelGeometry(4, 1, 1, 0.0)


def test_horizontal_ray_2x2():
    pix, length = ray_pixel_intersections(2, 90.0, 0.5)
    assert sorted(pix.tolist()) == [0, 1]
    np.testing.assert_allclose(length, [1.0, 1.0], rtol=1e-15)


def test_edge_ray_charged_to_one_side():
    pix, length = ray_pixel_intersections(2, 90.0, 0.0)
    assert sorted(pix.tolist()) == [2, 3]
    np.testing.assert_allclose(length, 1.0, rtol=1e-15)
    pix, _ = ray_pixel_intersections(2, 0.0, 0.0)
    assert sorted(pix.tolist()) == [1, 3]
    assert ray_pixel_intersections(2, 0.0, 1.0)[0].size == 0


def test_diagonal_single_pixel():
    pix, length = ray_pixel_intersections(1, 45.0, 0.0)
    assert pix.tolist() == [0]
    assert length[0] == pytest.approx(math.sqrt(2), rel=1e-14)


def test_row_count(small_geom, small_A):
    assert small_A.shape == (7 * 19, 144)


def test_row_sums_match_chords(small_geom, small_A):
    sums = np.asarray(small_A.csr.sum(axis=1)).ravel()
    r = 0
    for phi in small_geom.angles:
        for s in small_geom.offsets:
            assert abs(sums[r] - chord_oracle(12, phi, s)) < 1e-9
            r += 1


@given(phi=st.floats(0.0, 179.99), s=st.floats(-9.0, 9.0))
def test_random_ray_chord(phi, s):
    _, length = ray_pixel_intersections(10, phi, s)
    assert abs(length.sum() - chord_oracle(10, phi, s)) < 1e-9


def test_zero_rows_match_support(small_geom, small_A):
    # a ray meets the open square iff |s| < (n/2)(|cos| + |sin|)
    expected = sum(abs(s) < square_support(12, phi) for phi in small_geom.angles for s in small_geom.offsets)
    B, _, kept = remove_zero_rows(small_A, np.zeros(small_A.n_rows))
    assert B.n_rows == int(np.count_nonzero(small_A.row_nnz())) == expected
    assert expected < small_A.n_rows


def test_zero_rows_desk_problem():
    tp = make_tomo_problem(16, 8, 31)
    g = tp.geometry
    direct = [i for i, (phi, s) in enumerate((a, o) for a in g.angles for o in g.offsets)
              if ray_pixel_intersections(16, phi, s)[0].size]
    np.testing.assert_array_equal(tp.kept_rows, direct)
    assert tp.A.n_rows < 8 * 31


def test_sinogram_basics(small_A):
    np.testing.assert_array_equal(make_sinogram(small_A, np.zeros(144)), 0.0)
    np.testing.assert_allclose(make_sinogram(small_A, np.ones(144)), np.asarray(small_A.csr.sum(axis=1)).ravel(),
                               rtol=1e-14)


def test_sinogram_mirror_symmetry():
    n, views = 16, 12
    g = ParallelGeometry(n, views, 21)
    A = build_projection_matrix(g)
    img = shepp_logan(n).image.reshape(n, n)
    sym = (img + img[:, ::-1]).ravel()
    sino = make_sinogram(A, sym).reshape(views, 21)
    for j in range(1, views):
        np.testing.assert_allclose(sino[j], sino[views - j], atol=1e-9)


def test_noise():
    b = np.linspace(1.0, 3.0, 50)
    bn, db = add_noise(b, 0.0, 1)
    assert not db.any() and np.array_equal(bn, b)
    bn, db = add_noise(b, 0.02, 1)
    assert abs(np.linalg.norm(db) / np.linalg.norm(b) - 0.02) < 1e-12
    np.testing.assert_array_equal(bn, b + db)
    assert np.array_equal(add_noise(b, 0.02, 1)[1], db)
    assert not np.array_equal(add_noise(b, 0.02, 2)[1], db)
    with pytest.raises(ValueError):
        add_noise(b, -0.1, 1)


def test_phantom_in_box():
    tp = make_tomo_problem(16, 6, 23)
    assert tp.x_exact.min() >= 0 and tp.x_exact.max() <= 1
    np.testing.assert_allclose(tp.b, tp.A.csr @ tp.x_exact, rtol=1e-14)
