import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nccz import dyadic
from nccz.dyadic import DyadicCube, GridSpec


def test_cube_of_examples():
    assert dyadic.cube_of(0.3, 1) == DyadicCube(1, (0,))
    q = dyadic.cube_of(0.3, 2)
    assert q == DyadicCube(2, (1,)) and q.lower[0] == 0.25 and q.upper[0] == 0.5
    assert dyadic.cube_of([0.7, 0.1], 0) == DyadicCube(0, (0, 0))
    with pytest.raises(ValueError):
        dyadic.cube_of(1.0, 2)


def test_centers():
    assert dyadic.center(DyadicCube(1, (0,)))[0] == 0.25
    np.testing.assert_allclose(dyadic.center(DyadicCube(0, (0, 0))), [0.5, 0.5])
    assert dyadic.center(DyadicCube(2, (1,)))[0] == 0.375


def test_dilation_interval():
    q = DyadicCube(2, (1,))
    xs = np.linspace(0, 1, 401, endpoint=False)
    inside = np.array([dyadic.in_dilated(x, q, 3) for x in xs])
    np.testing.assert_array_equal(inside, xs < 0.75)
    with pytest.raises(ValueError):
        dyadic.in_dilated(0.1, q, 4)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True),
       st.integers(0, 8), st.sampled_from([1, 3, 5, 7]))
def test_dilation_symmetry(x, y, k, i):
    assert dyadic.in_dilated(x, dyadic.cube_of(y, k), i) == dyadic.in_dilated(y, dyadic.cube_of(x, k), i)
    assert dyadic.in_dilated(x, dyadic.cube_of(x, k), i)


def test_cells_enumeration():
    g = GridSpec(n=1, K=3)
    assert [c.lower[0] for c in dyadic.cells(g, 1)] == [0.0, 0.5]
    assert dyadic.cells(GridSpec(n=2, K=2), 0) == [DyadicCube(0, (0, 0))]
    for n, k in [(1, 3), (2, 2), (3, 1)]:
        assert len(dyadic.cells(GridSpec(n=n, K=3), k)) == 2 ** (n * k)


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec(n=0)
    with pytest.raises(ValueError):
        GridSpec(n=3, K=8)  # above the cell budget
    assert GridSpec(n=2, K=3).volume(1) == 0.25


def test_flat_index_round_trip():
    for n, k in [(1, 4), (2, 3)]:
        idx = dyadic.multi_index(n, k)
        np.testing.assert_array_equal(dyadic.flat_index(idx, k), np.arange(2 ** (n * k)))


def test_dilation_mask_matches_pointwise_membership():
    n, K = 2, 3
    centers = dyadic.cell_centers(n, K)
    for k in range(K + 1):
        mask = dyadic.dilation_mask(n, k, 5, K)
        ref = np.array([[dyadic.in_dilated(x, dyadic.cube_of(y, k), 5) for y in centers] for x in centers])
        np.testing.assert_array_equal(mask, ref)


def test_box_sum_against_mask():
    rng = np.random.default_rng(0)
    n, k = 2, 3
    v = rng.standard_normal(2 ** (n * k))
    mask = dyadic.dilation_mask(n, k, 5, k)
    np.testing.assert_allclose(dyadic.box_sum(v, n, k, 2), mask @ v)


def test_quadrature_points_owned_by_their_cell():
    pts, owner = dyadic.quadrature_points(2, 2, 3)
    idx = dyadic.flat_index(dyadic.point_index(pts, 2), 2)
    np.testing.assert_array_equal(idx, owner)
