import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pbim.sets import Box, HalfSpace, NonNegative, Singleton, WholeSpace, parse_set, project, relaxed_project

finite = st.floats(-1e3, 1e3, allow_nan=False)
vec3 = arrays(np.float64, 3, elements=finite)


def test_box_clamp():
    np.testing.assert_array_equal(project(Box(0.0, 1.0), [1.5, -0.2, 0.5]), [1.0, 0.0, 0.5])


def test_singleton():
    b = np.array([1.0, -2.0])
    np.testing.assert_array_equal(project(Singleton(b), [9.0, 9.0]), b)


def test_halfspace_formula():
    H = HalfSpace([1.0, 0.0], 1.0)
    x = np.array([3.0, 2.0])
    a = H.normal
    oracle = x - max(0.0, a @ x - 1.0) / (a @ a) * a
    np.testing.assert_array_equal(project(H, x), oracle)
    np.testing.assert_array_equal(oracle, [1.0, 2.0])


def test_whole_space_copy():
    x = np.array([1.0, 2.0])
    y = project(WholeSpace(), x)
    np.testing.assert_array_equal(y, x)
    assert y is not x


def test_relaxed():
    B = Box(0.0, 1.0)
    assert relaxed_project(B, np.array([2.0]), 0.5)[0] == 1.5
    x = np.array([3.0, -1.0])
    np.testing.assert_array_equal(relaxed_project(B, x, 1.0), project(B, x))
    inside = np.array([0.2, 0.7])
    for mu in (0.1, 1.0, 1.9):
        np.testing.assert_array_equal(relaxed_project(B, inside, mu), inside)
    for mu in (0.0, 2.0, -1.0):
        with pytest.raises(ValueError):
            relaxed_project(B, x, mu)


def test_invalid_sets():
    with pytest.raises(ValueError):
        Box([0.0, 2.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        HalfSpace([0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        project(Singleton([1.0, 2.0]), [1.0, 2.0, 3.0])


def test_parse_set():
    assert isinstance(parse_set("none"), WholeSpace)
    assert isinstance(parse_set("nonneg"), NonNegative)
    B = parse_set("box:-1,2")
    assert (B.lo, B.hi) == (-1.0, 2.0)
    with pytest.raises(ValueError):
        parse_set("ball")


SETS = {
    "box": Box(np.array([-1.0, 0.0, 0.5]), np.array([1.0, 2.0, 0.5])),
    "nonneg": NonNegative(),
    "singleton": Singleton([0.3, -0.4, 2.0]),
    "halfspace": HalfSpace([1.0, -2.0, 0.5], 0.7),
    "whole": WholeSpace(),
}


@pytest.mark.parametrize("name", SETS)
@given(x=vec3)
def test_idempotent(name, x):
    S = SETS[name]
    px = project(S, x)
    np.testing.assert_array_equal(project(S, px), px)


@pytest.mark.parametrize("name", SETS)
@given(x=vec3, y=vec3)
def test_nonexpansive_and_cutter(name, x, y):
    S = SETS[name]
    px, py = project(S, x), project(S, y)
    scale = 1.0 + np.abs(x).max() + np.abs(y).max()
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-12 * scale
    # py is a fixed point of the projection
    assert (x - px) @ (py - px) <= 1e-9 * scale**2
