import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nccz import czdecomp as cz
from nccz import matalg
from nccz.dyadic import GridSpec
from nccz.funcspace import OperatorField, lp_norm
from nccz.martingale import build_martingale, cuculescu
from conftest import quarter_spike, random_positive


def spike_parts():
    f = quarter_spike()
    fam = cuculescu(build_martingale(f), 1.5)
    return f, fam, cz.good_bad(f, fam)


def test_quarter_spike_decomposition():
    f, fam, parts = spike_parts()
    np.testing.assert_allclose(parts.g.finest().values[:, 0, 0], [2, 2, 0, 0])
    np.testing.assert_allclose(parts.b.finest().values[:, 0, 0], [2, -2, 0, 0])
    q, p, g, b = cz.scalar_cz_oracle(f.values[:, 0, 0].real, 1.5)
    np.testing.assert_allclose(g, [2, 2, 0, 0])
    np.testing.assert_allclose(b, [2, -2, 0, 0])
    # b_11 integrates to zero over [0, 1/2)
    assert cz.bij_mean_zero_check(parts)["worst"] == pytest.approx(0.0, abs=1e-15)


def test_quarter_spike_zeta():
    _, fam, _ = spike_parts()
    zp = cz.zeta(fam)
    assert np.abs(zp.zeta.values).max() == 0
    res = cz.check_zeta(zp)
    assert res["trace_zeta_perp"] == pytest.approx(1.0)
    assert res["bound"] == pytest.approx(5 * 2 / 3)


def test_no_stopping_means_no_bad_part():
    g = GridSpec(n=1, K=3, d=2)
    f = OperatorField.constant(g, np.diag([0.5, 1.0])).finest()
    fam = cuculescu(build_martingale(f), 2.0)
    parts = cz.good_bad(f, fam)
    assert lp_norm(parts.b, 1) == 0
    np.testing.assert_allclose(parts.g.values, f.values)
    np.testing.assert_allclose(cz.zeta(fam).zeta.values, np.broadcast_to(np.eye(2), (8, 2, 2)))


def test_abel_form_on_spike():
    _, _, parts = spike_parts()
    res = cz.gl_shift_form(parts)
    assert res["passed"]


def family(seed, d, K, u=1.5):
    rng = np.random.default_rng(seed)
    f = random_positive(GridSpec(n=1, K=K, d=d), rng)
    m = build_martingale(f)
    fam = cuculescu(m, u * float(matalg.lambda_max(m.at(0).values).max()))
    return f, fam


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([1, 2, 3]), st.integers(2, 5), st.floats(1.0, 3.0))
def test_decomposition_identities(seed, d, K, u):
    f, fam = family(seed, d, K, u)
    parts = cz.good_bad(f, fam)
    l1 = lp_norm(f, 1)
    assert lp_norm(parts.g + parts.b - f, 1) <= 1e-12 * (1 + l1)
    assert lp_norm(parts.g_d + parts.g_l + parts.g_r - parts.g, 1) <= 1e-12 * (1 + l1)
    np.testing.assert_allclose(parts.g_r.values, matalg.adjoint(parts.g_l.values), atol=1e-14)
    assert lp_norm(parts.g_d, 1) == pytest.approx(l1, rel=1e-10)
    assert lp_norm(parts.g_d, np.inf) <= 2 * fam.t * (1 + 1e-8)
    assert cz.bij_mean_zero_check(parts)["passed"]
    zp = cz.zeta(fam)
    zc = cz.check_zeta(zp)
    assert zc["cancellation"] <= 1e-8 and zc["trace_excess"] <= 1e-8
    assert cz.bij_zeta_check(parts, zp)["passed"]
    assert cz.gl_shift_form(parts)["passed"]
    for total in cz.bad_diagonal_l1(parts).values():
        assert total <= 2 * l1 * (1 + 1e-8)


def test_shift_pieces_have_square_control():
    ratios = []
    for seed in range(10):
        f, fam = family(seed, 2, 6)
        ratios.extend(cz.gl_shift_form(cz.good_bad(f, fam))["l2_ratio"].values())
    # the off-diagonal pieces are L2 controlled by t ||f||_1 up to a modest constant
    assert max(ratios) < 10


def test_shift_term_is_a_martingale_difference():
    f, fam = family(4, 2, 5)
    from nccz.funcspace import mart_diff

    for s in (1, 2):
        gs = cz.gl_shift(fam, s)
        for k in range(1, 6 - s):
            term = cz.gl_shift_term(fam, s, k)
            np.testing.assert_allclose(mart_diff(gs, k + s).finest().values, term.values, atol=1e-13)
    with pytest.raises(ValueError):
        cz.zeta(fam, 4)
