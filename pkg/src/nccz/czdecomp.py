"""Noncommutative Calderon-Zygmund decomposition built on Cuculescu projections.

Indices ``i, j`` run over ``1..K`` and ``INF``; ``p_INF`` is the final
Cuculescu projection and ``f_{i v INF} = f``. Every part is stored at the
finest level.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matalg
from .dyadic import dilation_mask
from .funcspace import OperatorField, cond_expectation, dilated_join, lp_norm

INF = "inf"


def _lvl(i):
    return np.inf if i == INF else i


@dataclass(eq=False)
class GoodBadParts:
    f: OperatorField
    family: object
    g: OperatorField
    b: OperatorField
    b_ij: dict
    g_d: OperatorField
    g_l: OperatorField
    g_r: OperatorField
    g_l_s: dict = field(default_factory=dict)

    @property
    def indices(self):
        return list(range(1, self.family.K + 1)) + [INF]


def _p(fam, i):
    """``p_i`` at the finest level."""
    if i == INF:
        return fam.q_final.finest().values
    return fam.p[i].finest().values


def _f_join(fam, i, j):
    m = fam.martingale
    if i == INF or j == INF:
        return m.source.values
    return m.at(max(i, j)).finest().values


def good_bad(f, fam):
    """Good and bad parts ``g = sum p_i f_{i v j} p_j``, ``b = sum p_i (f - f_{i v j}) p_j``."""
    m = fam.martingale
    if f.grid != m.source.grid:
        raise ValueError("field and Cuculescu family live on different grids")
    grid = f.grid
    top = f.finest().values
    idx = list(range(1, fam.K + 1)) + [INF]
    ps = {i: _p(fam, i) for i in idx}
    active = [i for i in idx if np.max(np.abs(ps[i]), initial=0.0) > 0.0]
    g = np.zeros_like(top)
    b = np.zeros_like(top)
    b_ij = {}
    for i in active:
        for j in active:
            fj = _f_join(fam, i, j)
            gij = ps[i] @ fj @ ps[j]
            g += gij
            if i == INF or j == INF:
                continue
            bij = ps[i] @ (top - fj) @ ps[j]
            b += bij
            b_ij[(i, j)] = OperatorField(grid, grid.K, bij)

    g_d = np.zeros_like(top)
    for i in active:
        fi = top if i == INF else m.at(i).finest().values
        g_d += ps[i] @ fi @ ps[i]

    qf = ps[INF]
    qperp = np.eye(grid.d) - qf
    g_l = qperp @ top @ qf
    for i in active:
        for j in active:
            if i == INF or j == INF or not i < j:
                continue
            g_l = g_l + ps[i] @ m.at(j).finest().values @ ps[j]
    g_r = matalg.adjoint(g_l)

    parts = GoodBadParts(
        f=f, family=fam,
        g=OperatorField(grid, grid.K, g), b=OperatorField(grid, grid.K, b), b_ij=b_ij,
        g_d=OperatorField(grid, grid.K, g_d), g_l=OperatorField(grid, grid.K, g_l),
        g_r=OperatorField(grid, grid.K, g_r),
    )
    for s in range(1, fam.K + 1):
        parts.g_l_s[s] = gl_shift(fam, s)
    return parts


def gl_shift_term(fam, s, k):
    """``g^{(l)}_{s,k} = p_k df_{k+s} q_{k+s-1}`` at the finest level."""
    m = fam.martingale
    grid = m.source.grid
    if k + s > fam.K:
        return OperatorField.zeros(grid)
    pk = fam.p[k].finest().values
    df = m.diff(k + s).finest().values
    q = fam.q[k + s - 1].finest().values
    return OperatorField(grid, grid.K, pk @ df @ q)


def gl_shift(fam, s):
    """``g^{(l)}_s = sum_k p_k df_{k+s} q_{k+s-1}`` over ``k >= 1``."""
    grid = fam.martingale.source.grid
    acc = np.zeros((grid.num_cells(), grid.d, grid.d), complex)
    for k in range(1, fam.K - s + 1):
        acc += gl_shift_term(fam, s, k).values
    return OperatorField(grid, grid.K, acc)


@dataclass(eq=False)
class ZetaProjection:
    d_param: int
    zeta: OperatorField
    family: object


def zeta(fam, d_param=5):
    """``zeta_d = (join over cubes Q of p_Q 1_{dQ})^perp`` at the finest level."""
    if d_param < 1 or d_param % 2 == 0:
        raise ValueError("d_param must be an odd positive integer")
    grid = fam.martingale.source.grid
    fields = {k: fam.p[k] for k in range(1, fam.K + 1)}
    join = dilated_join(fields, d_param, grid)
    z = OperatorField(grid, grid.K, np.eye(grid.d) - join.values)
    return ZetaProjection(d_param, z, fam)


def check_zeta(zp):
    """Worst ``||zeta(x) p_Q||`` over ``x in dQ`` and the trace bound margin."""
    fam = zp.family
    grid = fam.martingale.source.grid
    zv = zp.zeta.values
    worst = 0.0
    for k in range(1, fam.K + 1):
        pk = fam.p[k].finest().values
        mask = dilation_mask(grid.n, k, zp.d_param, grid.K)  # mask[x, y]: x in dQ_{y,k}
        xs, ys = np.nonzero(mask)
        if xs.size == 0:
            continue
        prod = zv[xs] @ pk[ys]
        worst = max(worst, float(np.max(matalg.opnorm(prod))))
    trace_perp = float(OperatorField(grid, grid.K, np.eye(grid.d) - zv).trace_integral().real)
    bound = zp.d_param**grid.n * lp_norm(fam.martingale.source, 1) / fam.t
    return {"cancellation": worst, "trace_zeta_perp": trace_perp, "bound": bound,
            "trace_excess": trace_perp - bound}


def bij_mean_zero_check(parts):
    """Largest ``||int_Q b_ij||`` over cubes ``Q`` at level ``i v j``."""
    l1 = lp_norm(parts.f, 1)
    worst, where = 0.0, None
    for (i, j), bij in parts.b_ij.items():
        lev = max(i, j)
        avg = cond_expectation(bij, lev)
        integrals = avg.values * avg.volume
        val = float(np.max(matalg.opnorm(integrals), initial=0.0))
        if val > worst:
            worst, where = val, (i, j)
    tol = 1e-9 * (1.0 + l1)
    return {"worst": worst, "pair": where, "tol": tol, "passed": worst <= tol}


def bij_zeta_check(parts, zp):
    """Largest ``||zeta(x) b_ij(y) zeta(x)||`` over ``y in 5Q_{x, i ^ j}``."""
    grid = parts.f.grid
    zv = zp.zeta.values
    worst = 0.0
    masks = {}
    for (i, j), bij in parts.b_ij.items():
        lev = min(i, j)
        if lev not in masks:
            masks[lev] = np.nonzero(dilation_mask(grid.n, lev, zp.d_param, grid.K))
        xs, ys = masks[lev]
        prod = zv[xs] @ bij.values[ys] @ zv[xs]
        worst = max(worst, float(np.max(matalg.opnorm(prod), initial=0.0)))
    tol = 1e-9 * (1.0 + lp_norm(parts.f, 1))
    return {"worst": worst, "tol": tol, "passed": worst <= tol}


def gl_shift_form(parts):
    """Compare ``g^{(l)}`` against the double sum of ``p_k df_{k+s} q_{k+s-1}``.

    Also checks ``Delta_{k+s}(g_s) = g_{s,k}`` for every term and records
    ``||g_s||_2^2 / (t ||f||_1)``.
    """
    fam = parts.family
    grid = parts.f.grid
    total = np.zeros((grid.num_cells(), grid.d, grid.d), complex)
    for gs in parts.g_l_s.values():
        total += gs.values
    recon = OperatorField(grid, grid.K, total)
    err = lp_norm(recon - parts.g_l, 2)
    l2 = lp_norm(parts.f, 2)
    diff_err = 0.0
    from .funcspace import mart_diff
    for s, gs in parts.g_l_s.items():
        for k in range(1, fam.K - s + 1):
            term = gl_shift_term(fam, s, k)
            dk = mart_diff(gs, k + s).finest()
            diff_err = max(diff_err, lp_norm(dk - term, 2))
    l1 = lp_norm(parts.f, 1)
    ratios = {s: lp_norm(gs, 2) ** 2 / (fam.t * l1) for s, gs in parts.g_l_s.items()}
    tol = 1e-8 * (1.0 + l2)
    return {"abel_error": err, "delta_error": diff_err, "tol": tol,
            "passed": err <= tol and diff_err <= tol, "l2_ratio": ratios}


def bad_diagonal_l1(parts):
    """``sum_{i - j = s} ||b_ij||_1`` for each shift ``s``."""
    out = {}
    for (i, j), bij in parts.b_ij.items():
        out[i - j] = out.get(i - j, 0.0) + lp_norm(bij, 1)
    return out


def scalar_cz_oracle(values, t):
    """Classical stopping-time decomposition of a nonnegative scalar array (n=1).

    Returns ``(q, p, g, b)`` as plain arrays at the finest level. On the
    stopping cube ``Q`` of level ``n`` the good part is the average ``f_n``;
    where the stopping never happens it is ``f`` itself.
    """
    from .martingale import scalar_stopping_oracle

    values = np.asarray(values, dtype=float)
    q, f_levels = scalar_stopping_oracle(values, t)
    K = len(q) - 1
    fine = lambda arr: np.repeat(arr, 2**K // arr.size)  # noqa: E731
    q_fine = [fine(qn) for qn in q]
    p_fine = [1.0 - q_fine[0]] + [q_fine[n - 1] - q_fine[n] for n in range(1, K + 1)]
    g = q_fine[K] * values
    for n in range(1, K + 1):
        g = g + p_fine[n] * fine(f_levels[n])
    return q_fine, p_fine, g, values - g
