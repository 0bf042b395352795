import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nccz import kernels as kr
from nccz.dyadic import GridSpec, in_dilated, cube_of


def test_gamma_validation():
    with pytest.raises(ValueError):
        kr.builtin_power(1, gamma=0.0)
    with pytest.raises(ValueError):
        kr.builtin_power(1, gamma=1.5)
    with pytest.raises(ValueError):
        kr.builtin_hilbert(2)
    with pytest.raises(ValueError):
        kr.kernel_from_config("riesz")


def test_hilbert_values_and_antisymmetry():
    h = kr.builtin_hilbert()
    assert h(np.array([0.75]), np.array([0.25])) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    x, y = rng.uniform(size=(2, 200, 1))
    np.testing.assert_allclose(h(x, y), -h(y, x))
    np.testing.assert_allclose(h.adjoint()(x, y), h(y, x))


def test_power_n1_matches_hilbert():
    rng = np.random.default_rng(1)
    x, y = rng.uniform(size=(2, 300, 1))
    np.testing.assert_allclose(kr.builtin_power(1)(x, y), kr.builtin_hilbert()(x, y))


@pytest.mark.parametrize("kern", [kr.builtin_hilbert(), kr.builtin_power(1), kr.builtin_power(2),
                                  kr.builtin_power(3)], ids=["hilbert", "power1", "power2", "power3"])
def test_builtin_predicates(kern):
    assert kr.check_smoothness(kern)
    assert kr.check_size(kern)


def test_predicates_reject_scaled_kernel():
    big = kr.builtin_power(1, c=4.0)
    assert not kr.check_size(big)
    assert not kr.check_smoothness(big)


def test_zero_kernel():
    z = kr.zero_kernel(2)
    assert np.all(z(np.zeros((5, 2)), np.ones((5, 2))) == 0)
    assert kr.size_ratio(z) == 0.0


def test_truncate_far_vanishes_inside_dilation():
    h = kr.builtin_hilbert()
    tk = kr.truncate_far(h, 2)
    rng = np.random.default_rng(2)
    x, y = rng.uniform(size=(2, 500, 1))
    vals = tk(x, y)
    for xi, yi, v in zip(x, y, vals):
        if in_dilated(xi, cube_of(yi, 2), 5):
            assert v == 0
        else:
            assert v == pytest.approx(0.5 / (xi[0] - yi[0]))


def test_shift_difference_examples():
    h = kr.builtin_hilbert()
    ks = kr.shift_difference(h, 2, 1)
    # y at the centre of its level-2 cube: nothing to subtract
    assert ks(np.array([0.9]), np.array([0.125])) == 0.0
    x, y = np.array([0.9]), np.array([0.05])
    assert ks(x, y) == pytest.approx(0.5 / (0.9 - 0.05) - 0.5 / (0.9 - 0.125))
    with pytest.raises(ValueError):
        kr.shift_difference(h, 0, 0)


@pytest.mark.parametrize("k,s", [(2, 0), (2, 3), (3, 1), (4, 2)])
def test_pointwise_shift_bound(k, s):
    # |k(x, y) - k(x, c)| <= C 2^{-(k+s)} / |x - y|^2 away from 5Q with C at most 4
    assert kr.pointwise_shift_ratio(kr.builtin_hilbert(), k, s) <= 4.0


def test_dyadic_center():
    np.testing.assert_allclose(kr.dyadic_center(np.array([0.3, 0.8]), 1), [0.25, 0.75])


def test_annulus_mask():
    y = np.array([0.3])
    # level 3: Q = [1/4, 3/8), 3Q = [1/8, 1/2), 5Q = [0, 5/8)
    assert kr.annulus_mask(np.array([0.55]), y, 3)
    assert kr.annulus_mask(np.array([0.05]), y, 3)
    assert not kr.annulus_mask(np.array([0.4]), y, 3)
    assert not kr.annulus_mask(np.array([0.7]), y, 3)


@pytest.mark.parametrize("k,s", [(2, 0), (2, 2), (3, 1), (4, 4)])
def test_corrected_kernel_row_cancellation(k, s):
    grid = GridSpec(n=1, K=7, d=1, quad_refine=4)
    ck = kr.corrected_kernel(kr.builtin_hilbert(), k, s, grid)
    sums = ck.row_sums()
    live = ck.I_of_x > 0
    assert live.all()
    assert np.abs(sums).max() <= 1e-8 * (np.abs(ck.K_of_x).max() + 1e-300)
    assert np.all(ck.residual == 0)


def test_corrected_kernel_is_zero_for_zero_kernel():
    grid = GridSpec(n=1, K=6, d=1, quad_refine=2)
    ck = kr.corrected_kernel(kr.zero_kernel(), 2, 1, grid)
    assert np.all(ck.K_of_x == 0)
    x = np.full((10, 1), 0.3)
    y = np.linspace(0, 0.99, 10)[:, None]
    assert np.all(ck(x, y) == 0)


def test_corrected_kernel_guards():
    grid = GridSpec(n=1, K=4, d=1)
    with pytest.raises(ValueError):
        kr.corrected_kernel(kr.builtin_lp_family(2), 1, 1, grid)
    with pytest.raises(ValueError):
        kr.corrected_kernel(kr.builtin_hilbert(), 3, 3, grid)


def test_correction_bound_dominates():
    grid = GridSpec(n=1, K=8, d=1, quad_refine=4)
    for s in range(6):
        ck = kr.corrected_kernel(kr.builtin_hilbert(), 3, s, grid)
        assert np.abs(ck.K_of_x).max() <= kr.correction_bound(1, 1.0, 3, s)
    assert kr.correction_bound(1, 1.0, 3, 2) == pytest.approx(0.25)


def test_lp_bump_shape():
    xi = np.linspace(0, 3, 3001)
    b = kr.lp_bump(xi)
    assert np.all(b[(xi <= 1) | (xi >= 2)] == 0)
    np.testing.assert_allclose(b[(xi >= 1.25) & (xi <= 1.75)], 1.0)
    assert b.max() <= 1.0 and b.min() >= 0.0
    assert kr.lp_multiplier(3, 6.0) == pytest.approx(1.0)
    assert kr.lp_multiplier(3, 3.0) == 0.0


def test_lp_band_inside_plateau():
    for k in range(1, 8):
        lo, hi = kr.lp_band(k)
        xi = np.linspace(lo, hi, 50)
        np.testing.assert_allclose(kr.lp_multiplier(k, xi), 1.0)
        for j in range(1, 8):
            if j != k:
                assert np.all(kr.lp_multiplier(j, xi) == 0)


def test_bump_fourier_against_fft():
    # independent route: sample the bump on a fine grid and sum the exponentials directly
    u = np.array([0.0, 0.3, 1.7])
    xi = np.linspace(1, 2, 20001)
    w = kr.lp_bump(xi)
    direct = np.array([np.sum(w * np.exp(2j * np.pi * xi * ui)) * (xi[1] - xi[0]) for ui in u])
    np.testing.assert_allclose(kr._bump_fourier(u), direct, atol=1e-4)


def test_lp_family_is_vector_valued():
    fam = kr.builtin_lp_family(4)
    v = fam(np.array([[0.3]]), np.array([[0.1]]))
    assert v.shape == (1, 4)
    assert fam.components == 4
    with pytest.raises(ValueError):
        kr.builtin_lp_family(0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_supdist_symmetric(a, b):
    x, y = np.array([a, b]), np.array([b, a])
    assert kr.supdist(x, y) == kr.supdist(y, x) == pytest.approx(abs(a - b))
