import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nccz import funcspace as fs
from nccz.dyadic import GridSpec
from nccz.funcspace import OperatorField
from conftest import random_positive


def halves(a, b):
    return OperatorField.from_scalars(GridSpec(n=1, K=1, d=1), np.array([a, b], float))


def test_lp_norm_examples():
    g = GridSpec(n=1, K=3, d=2)
    assert fs.lp_norm(OperatorField.identity(g), 1) == pytest.approx(2.0)
    assert fs.lp_norm(halves(2, 0), 2) == pytest.approx(np.sqrt(2))
    with pytest.raises(ValueError):
        fs.lp_norm(halves(1, 1), 0.5)


def test_l2_norm_is_frobenius_sum(rng):
    g = GridSpec(n=1, K=4, d=3)
    vals = rng.standard_normal((16, 3, 3)) + 1j * rng.standard_normal((16, 3, 3))
    f = OperatorField(g, 4, vals)
    assert fs.lp_norm(f, 2) ** 2 == pytest.approx(np.sum(np.abs(vals) ** 2) / 16)


def test_distribution_examples():
    f = halves(3, 1)
    assert fs.distribution_lambda(f, 2.0) == pytest.approx(0.5)
    assert fs.distribution_lambda(f, 5.0) == 0.0


def test_chebyshev(rng):
    f = random_positive(GridSpec(n=1, K=5, d=3), rng)
    for t in np.geomspace(0.01, 100, 30):
        assert t * fs.distribution_lambda(f, t) <= fs.lp_norm(f, 1) + 1e-12


def test_weak_l1_constant_identity():
    g = GridSpec(n=1, K=2, d=3)
    f = OperatorField.constant(g, 0.7 * np.eye(3))
    assert fs.weak_l1(f) == pytest.approx(0.7 * 3)


def test_weak_l1_against_brute_force(rng):
    f = random_positive(GridSpec(n=1, K=4, d=2), rng)
    sv = np.linalg.svd(f.values, compute_uv=False).ravel()
    vol = f.volume
    # sup over t of t * #(sigma > t) * vol, approached from below each singular value
    brute = max(s * np.sum(sv >= s) * vol for s in sv)
    assert fs.weak_l1(f) == pytest.approx(brute)
    sampled = fs.weak_l1(f, t_samples=list(np.linspace(0.01, sv.max(), 500)))
    assert sampled <= fs.weak_l1(f) + 1e-12
    assert fs.weak_l1(halves(1, 1)) <= fs.lp_norm(halves(1, 1), 1)


def test_cond_expectation_examples(rng):
    assert fs.cond_expectation(halves(1, 3), 0).values[0, 0, 0] == pytest.approx(2.0)
    g = GridSpec(n=2, K=3, d=2)
    c = OperatorField.constant(g, np.array([[1, 2j], [-2j, 3]])).finest()
    np.testing.assert_allclose(fs.cond_expectation(c, 1).values[0], c.values[0])
    f = random_positive(g, rng)
    for k in range(4):
        assert fs.cond_expectation(f, k).trace_integral() == pytest.approx(f.trace_integral())
    with pytest.raises(ValueError):
        fs.cond_expectation(fs.cond_expectation(f, 1), 2)


def test_mart_diff_examples_and_telescoping(rng):
    d1 = fs.mart_diff(halves(1, 3), 1)
    np.testing.assert_allclose(d1.values[:, 0, 0], [-1, 1])
    g = GridSpec(n=1, K=5, d=2)
    assert np.abs(fs.mart_diff(OperatorField.identity(g).finest(), 3).values).max() == 0
    f = random_positive(g, rng)
    total = fs.cond_expectation(f, 0).finest()
    for k in range(1, 6):
        total = total + fs.mart_diff(f, k).finest()
    np.testing.assert_allclose(total.values, f.values, atol=1e-14)
    with pytest.raises(ValueError):
        fs.mart_diff(f, 0)


def test_sequence_norms(rng):
    g = GridSpec(n=1, K=3, d=3)
    vals = rng.standard_normal((8, 3, 3)) + 1j * rng.standard_normal((8, 3, 3))
    x = OperatorField(g, 3, vals)
    assert fs.seq_column_norm([x], 1.5) == pytest.approx(fs.lp_norm(x, 1.5))
    assert fs.seq_row_norm([x], 3) == pytest.approx(fs.lp_norm(x, 3))
    xs = [OperatorField(g, 3, rng.standard_normal((8, 3, 3))) for _ in range(4)]
    l2 = np.sqrt(sum(fs.lp_norm(v, 2) ** 2 for v in xs))
    assert fs.seq_column_norm(xs, 2) == pytest.approx(l2)
    assert fs.seq_row_norm(xs, 2) == pytest.approx(l2)
    with pytest.raises(ValueError):
        fs.seq_rc_norm(xs, 1.5)


def test_column_norm_of_matrix_unit_row(rng):
    g = GridSpec(n=1, K=3, d=3)
    gk = [rng.standard_normal(8) + 1j * rng.standard_normal(8) for _ in range(3)]
    xs = []
    for k in range(3):
        v = np.zeros((8, 3, 3), complex)
        v[:, 0, k] = gk[k]
        xs.append(OperatorField(g, 3, v))
    # (sum x_k* x_k)^{1/2} = diag(|g_k|), so the C_p norm is (sum_k ||g_k||_p^p)^{1/p}
    p = 3.0
    expect = np.mean(sum(np.abs(v) ** p for v in gk)) ** (1 / p)
    assert fs.seq_column_norm(xs, p) == pytest.approx(expect)


def test_json_round_trip(rng):
    f = random_positive(GridSpec(n=2, K=2, d=2), rng)
    back = OperatorField.from_json(f.to_json())
    np.testing.assert_allclose(back.values, f.values)
    doc = json.loads(f.to_json())
    assert doc["grid"]["n"] == 2 and len(doc["cells"]) == 16


def test_field_shape_validation():
    with pytest.raises(ValueError):
        OperatorField(GridSpec(n=1, K=2, d=2), 2, np.zeros((3, 2, 2)))


def test_dilated_join_single_cube():
    g = GridSpec(n=1, K=4, d=1)
    a1 = OperatorField.from_scalars(g, np.array([1.0, 0.0]), level=1)
    join = fs.dilated_join({1: a1}, 5, g)
    np.testing.assert_allclose(join.values[:, 0, 0], np.ones(16))
    a3 = OperatorField.from_scalars(g, np.eye(8)[3], level=3)
    join = fs.dilated_join({3: a3}, 5, g)
    # 5Q for Q = [3/8, 1/2) is [1/8, 3/4)
    x = (np.arange(16) + 0.5) / 16
    np.testing.assert_array_equal(join.values[:, 0, 0].real > 0.5, (x >= 1 / 8) & (x < 3 / 4))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([1, 1.5, 2, 4]))
def test_triangle_inequality(seed, p):
    rng = np.random.default_rng(seed)
    g = GridSpec(n=1, K=3, d=2)
    a = OperatorField(g, 3, rng.standard_normal((8, 2, 2)) + 1j * rng.standard_normal((8, 2, 2)))
    b = OperatorField(g, 3, rng.standard_normal((8, 2, 2)))
    assert fs.lp_norm(a + b, p) <= fs.lp_norm(a, p) + fs.lp_norm(b, p) + 1e-12
