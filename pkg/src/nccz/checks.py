"""Invariant suite run by ``nccz check``: one row per property at default sizes."""
from __future__ import annotations

import math
import time

import numpy as np

from . import czdecomp, kernels, matalg, sio
from .dyadic import GridSpec
from .funcspace import OperatorField, lp_norm
from .martingale import build_martingale, check_cuculescu, cuculescu, scalar_stopping_oracle
from .experiments import annulus_sweep, choose_threshold, random_positive_field


def _row(name, ok, detail):
    return {"name": name, "passed": bool(ok), "detail": detail}


def _families(seed, count, ds=(1, 2, 4), Ks=(4, 6)):
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]
    for j, rng in enumerate(rngs):
        d, K = ds[j % len(ds)], Ks[(j // len(ds)) % len(Ks)]
        grid = GridSpec(n=1, K=K, d=d)
        f = random_positive_field(grid, rng, "cascade", 1.0)
        m = build_martingale(f)
        top = float(matalg.lambda_max(m.levels[0].values).max())
        t = top * rng.uniform(1.0, 3.0)
        yield f, cuculescu(m, t)


def cuculescu_suite(seed=7, count=24):
    worst = {"measurable": 0.0, "monotone": 0.0, "commutes": 0.0, "compressed": 0.0,
             "final_compressed": 0.0, "trace_excess": 0.0}
    for _, fam in _families(seed, count):
        res = check_cuculescu(fam)
        for key in worst:
            worst[key] = max(worst[key], res[key])
    return _row("cuculescu properties", all(v <= 1e-8 for v in worst.values()), worst)


def decomposition_suite(seed=8, count=12):
    worst = {}

    def bump(key, val):
        worst[key] = max(worst.get(key, 0.0), float(val))

    for f, fam in _families(seed, count):
        parts = czdecomp.good_bad(f, fam)
        scale = 1.0 + lp_norm(f, 1)
        bump("f = g + b", lp_norm(parts.g + parts.b - f, 1) / scale)
        bump("g split", lp_norm(parts.g_d + parts.g_l + parts.g_r - parts.g, 1) / scale)
        bump("diag l1", abs(lp_norm(parts.g_d, 1) - lp_norm(f, 1)) / scale)
        bump("diag sup excess", max(0.0, lp_norm(parts.g_d, np.inf) / (2 * fam.t) - 1.0))
        bump("b_ij mean", czdecomp.bij_mean_zero_check(parts)["worst"])
        zp = czdecomp.zeta(fam)
        zc = czdecomp.check_zeta(zp)
        bump("zeta trace excess", max(0.0, zc["trace_excess"]))
        bump("zeta cancellation", zc["cancellation"])
        bump("zeta b_ij zeta", czdecomp.bij_zeta_check(parts, zp)["worst"])
        bump("abel", czdecomp.gl_shift_form(parts)["abel_error"])
    return _row("good/bad decomposition", all(v <= 1e-8 for v in worst.values()), worst)


def scalar_oracle_suite(seed=9, count=20):
    worst = 0.0
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]
    for rng in rngs:
        K = int(rng.integers(1, 6))
        grid = GridSpec(n=1, K=K, d=1)
        vals = rng.lognormal(0.0, 1.5, size=grid.num_cells())
        f = OperatorField.from_scalars(grid, vals / vals.mean())
        t = float(rng.uniform(1.0, 4.0))
        fam = cuculescu(build_martingale(f), t)
        q_ref, p_ref, g_ref, b_ref = czdecomp.scalar_cz_oracle(vals / vals.mean(), t)
        parts = czdecomp.good_bad(f, fam)
        q = np.stack([fam.q[k].finest().values[:, 0, 0].real for k in range(K + 1)])
        worst = max(worst, np.abs(q - q_ref).max(),
                    np.abs(parts.g.finest().values[:, 0, 0] - g_ref).max(),
                    np.abs(parts.b.finest().values[:, 0, 0] - b_ref).max())
    return _row("scalar stopping-time oracle", worst <= 1e-12, {"worst": float(worst)})


def kernel_suite(samples=10_000):
    detail = {}
    ok = True
    for kern in (kernels.builtin_hilbert(), kernels.builtin_power(1), kernels.builtin_power(2)):
        sm, sz = kernels.smoothness_ratio(kern, samples), kernels.size_ratio(kern, samples)
        detail[f"{kern.label}/n={kern.n}"] = {"smoothness": sm, "size": sz}
        ok &= sm <= 1.0 and sz <= 1.0
    return _row("kernel predicates", ok, detail)


def row_cancellation_suite(K=8):
    grid = GridSpec(n=1, K=K, d=1, quad_refine=4)
    worst = 0.0
    ker = kernels.builtin_hilbert()
    for k in (2, 3, 4):
        for s in (0, 1, 3, 5):
            ck = kernels.corrected_kernel(ker, k, s, grid)
            sums = ck.row_sums()
            scale = np.abs(ck.K_of_x).max() + 1e-300
            worst = max(worst, float(np.abs(sums[ck.I_of_x > 0]).max() / scale))
    return _row("corrected kernel row cancellation", worst <= 1e-8, {"worst_relative": worst})


def correction_bound_suite(K=8):
    """``sup |K(x)|`` never exceeds ``c_n 2^{-g s}`` for the Hilbert kernel."""
    grid = GridSpec(n=1, K=K, d=1, quad_refine=4)
    ker = kernels.builtin_hilbert()
    worst = 0.0
    for k in (2, 3, 4):
        for s in range(6):
            ck = kernels.corrected_kernel(ker, k, s, grid)
            # |y - c| <= 2^{-(k+s)} and |x - c| >= |x - y| / 2 give the pointwise constant 1
            bound = kernels.correction_bound(1, 1.0, k, s)
            worst = max(worst, float(np.abs(ck.K_of_x).max() / bound))
    return _row("correction size bound", worst <= 1.0, {"worst_ratio": worst})


def masking_suite(K=6):
    worst = 0
    for m in range(0, K + 1):
        worst = max(worst, sio.masking_deviation(GridSpec(n=1, K=K, d=1), m))
    return _row("Rademacher masking identity", worst == 0, {"max_deviation": worst})


def annulus_suite():
    res = annulus_sweep()
    return _row("annulus integral bound", res["bounded"] and res["spread"] <= 0.3,
                {"constant": res["constant"], "spread": res["spread"]})


def operator_suite(K=6, seed=10):
    grid = GridSpec(n=1, K=K, d=2)
    ker = kernels.builtin_hilbert()
    cache = sio._Cache(grid, ker)
    worst = 0.0
    for s in range(3):
        for i in range(4):
            for op in (sio.assemble_phi(grid, ker, i, s, cache),
                       sio.assemble_psi(grid, ker, max(i, 1), s, cache)):
                worst = max(worst, sio.opnorm2(op).value - sio.schur_bound(op))
    return _row("Schur bound dominates operator norm", worst <= 1e-8, {"worst_gap": worst})


def identity_suite(K=7, seed=11):
    """``T_k Delta_{k+s} = T_{k,s} Delta_{k+s}`` and the exact Phi/Psi split of ``zeta T h``."""
    grid = GridSpec(n=1, K=K, d=2)
    ker = kernels.builtin_hilbert()
    cache = sio._Cache(grid, ker)
    rng = np.random.default_rng(seed)
    f = random_positive_field(grid, rng, "cascade", 0.5)
    m = build_martingale(f)
    fam = cuculescu(m, choose_threshold(m, "adaptive", 3))
    z = czdecomp.zeta(fam).zeta.values
    shift_err = split_err = 0.0
    for s in (1, 2, 3):
        for k in range(1, K - s + 1):
            d = cache.delta(k + s)
            shift_err = max(shift_err, float(np.abs(cache.t_k(k) @ d - cache.t_ks(k, s) @ d).max()))
        h = czdecomp.gl_shift(fam, s).values
        nh = math.sqrt(np.sum(np.abs(h) ** 2) * grid.volume()) or 1.0
        total = sio.decomposition_operator(grid, ker, s, cache).matrix
        lhs = z @ np.einsum("ij,jab->iab", cache.base(), h)
        rhs = z @ np.einsum("ij,jab->iab", total, h)
        split_err = max(split_err, math.sqrt(np.sum(np.abs(lhs - rhs) ** 2) * grid.volume()) / nh)
    return _row("shift and decomposition identities", shift_err <= 1e-10 and split_err <= 1e-8,
                {"shift": shift_err, "split": split_err})


SUITES = (cuculescu_suite, decomposition_suite, scalar_oracle_suite, kernel_suite,
          row_cancellation_suite, correction_bound_suite, masking_suite, annulus_suite,
          operator_suite, identity_suite)


def run_checks():
    rows = []
    for suite in SUITES:
        start = time.perf_counter()
        row = suite()
        row["seconds"] = round(time.perf_counter() - start, 3)
        rows.append(row)
    return rows
