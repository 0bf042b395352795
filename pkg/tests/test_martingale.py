import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nccz import matalg
from nccz.dyadic import GridSpec
from nccz.funcspace import OperatorField, lp_norm
from nccz.martingale import (PreconditionError, build_martingale, check_cuculescu, cuculescu,
                             scalar_stopping_oracle)
from conftest import quarter_spike, random_positive


def test_constant_martingale():
    g = GridSpec(n=1, K=3, d=2)
    c = OperatorField.constant(g, np.diag([1.0, 2.0]))
    m = build_martingale(c)
    for k in range(4):
        np.testing.assert_allclose(m.at(k).finest().values, c.finest().values)


def test_quarter_spike_martingale():
    m = build_martingale(quarter_spike())
    np.testing.assert_allclose(m.at(1).values[:, 0, 0], [2, 0])
    np.testing.assert_allclose(m.at(0).values[:, 0, 0], [1])
    for k in range(3):
        assert lp_norm(m.at(k), 1) == pytest.approx(1.0)


def test_quarter_spike_cuculescu():
    fam = cuculescu(build_martingale(quarter_spike()), 1.5)
    assert fam.q[0].values[0, 0, 0] == 1
    np.testing.assert_allclose(fam.q[1].values[:, 0, 0], [0, 1])
    np.testing.assert_allclose(fam.p[1].values[:, 0, 0], [1, 0])
    np.testing.assert_allclose(fam.q[2].values[:, 0, 0], [0, 0, 1, 1])
    res = check_cuculescu(fam)
    assert res["trace_q_perp"] == pytest.approx(0.5)
    assert res["l1_over_t"] == pytest.approx(2 / 3)


def test_nothing_exceeds_threshold():
    g = GridSpec(n=1, K=3, d=2)
    f = OperatorField.constant(g, np.eye(2)).finest()
    fam = cuculescu(build_martingale(f), 2.0)
    for q in fam.q:
        np.testing.assert_array_equal(q.values, np.broadcast_to(np.eye(2), q.values.shape))
    assert check_cuculescu(fam)["trace_q_perp"] == 0.0


def test_precondition_error():
    with pytest.raises(PreconditionError) as err:
        cuculescu(build_martingale(quarter_spike()), 0.5)
    assert err.value.cell == 0 and err.value.excess == pytest.approx(0.5)
    with pytest.raises(ValueError):
        cuculescu(build_martingale(quarter_spike()), -1.0)


def test_scalar_oracle_agrees_with_cuculescu():
    rng = np.random.default_rng(3)
    for _ in range(30):
        K = int(rng.integers(1, 6))
        vals = rng.lognormal(0, 1.5, size=2**K)
        vals /= vals.mean()
        t = float(rng.uniform(1, 4))
        g = GridSpec(n=1, K=K, d=1)
        fam = cuculescu(build_martingale(OperatorField.from_scalars(g, vals)), t)
        q_ref, _ = scalar_stopping_oracle(vals, t)
        for k in range(K + 1):
            np.testing.assert_array_equal(fam.q[k].values[:, 0, 0].real, q_ref[k])


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([1, 2, 3]), st.integers(1, 5), st.floats(1.0, 3.0), st.integers(0, 2**31))
def test_cuculescu_properties(d, K, u, seed):
    rng = np.random.default_rng(seed)
    f = random_positive(GridSpec(n=1, K=K, d=d), rng)
    m = build_martingale(f)
    t = u * float(matalg.lambda_max(m.at(0).values).max())
    fam = cuculescu(m, t)
    res = check_cuculescu(fam)
    for key in ("measurable", "monotone", "commutes", "compressed", "final_compressed"):
        assert res[key] <= 1e-8, key
    assert res["trace_q_perp"] <= res["l1_over_t"] + 1e-8


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([1, 2]), st.integers(1, 3), st.integers(0, 2**31))
def test_doubling_inequality(n, d, seed):
    rng = np.random.default_rng(seed)
    K = 4 if n == 1 else 3
    m = build_martingale(random_positive(GridSpec(n=n, K=K, d=d), rng))
    for k in range(K):
        gap = 2**n * m.at(k).refine(k + 1).values - m.at(k + 1).values
        assert matalg.lambda_min(matalg.hermitize(gap)).min() >= -1e-9


def test_final_projection_compresses_every_level(rng):
    m = build_martingale(random_positive(GridSpec(n=1, K=6, d=3), rng))
    t = 1.5 * float(matalg.lambda_max(m.at(0).values).max())
    fam = cuculescu(m, t)
    q = fam.q_final.values
    for k in range(7):
        fk = m.at(k).finest().values
        assert matalg.lambda_max(matalg.hermitize(q @ fk @ q)).max() <= t + 1e-8
