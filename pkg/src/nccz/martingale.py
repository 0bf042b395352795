"""Dyadic martingales of positive fields and Cuculescu projections."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matalg
from .funcspace import OperatorField, cond_expectation, lp_norm

THRESHOLD_TOL = 1e-9


class PreconditionError(ValueError):
    """Raised when the coarsest average already exceeds the threshold."""

    def __init__(self, message, cell=None, excess=None):
        super().__init__(message)
        self.cell = cell
        self.excess = excess


@dataclass(frozen=True, eq=False)
class MartingaleSeq:
    source: OperatorField
    levels: list  # levels[k] = E_k(source), stored at level k

    @property
    def K(self):
        return len(self.levels) - 1

    def diff(self, k):
        """``df_k = f_k - f_{k-1}`` at level ``k``; zero beyond the finest level."""
        if k > self.K:
            return OperatorField.zeros(self.source.grid)
        if k < 1:
            raise ValueError("martingale differences start at level 1")
        return self.levels[k] - self.levels[k - 1]

    def at(self, k):
        """``f_k`` for any ``k >= 0``; ``f_k = f`` beyond the finest level."""
        return self.levels[min(k, self.K)]


def build_martingale(f):
    """All conditional expectations ``f_k = E_k f`` for ``k = 0..K``."""
    top = f.finest()
    levels = [cond_expectation(top, k) for k in range(top.grid.K + 1)]
    return MartingaleSeq(top, levels)


@dataclass(frozen=True, eq=False)
class CuculescuFamily:
    t: float
    q: list       # q[n] projection field at level n, n = 0..K
    p: list       # p[n] = q[n-1] - q[n] at level n, with q[-1] = 1 (so p[0] = 1 - q[0])
    martingale: MartingaleSeq

    @property
    def K(self):
        return len(self.q) - 1

    @property
    def q_final(self):
        return self.q[-1]

    @property
    def p_inf(self):
        return self.q[-1]


def cuculescu(m, t, tol=THRESHOLD_TOL):
    """Cuculescu projections of a positive dyadic martingale at threshold ``t``.

    ``q_n = q_{n-1} * 1_{[0, t]}(q_{n-1} f_n q_{n-1})`` cell by cell. The
    coarsest average must already satisfy ``f_0 <= t``.
    """
    if t <= 0:
        raise ValueError("threshold must be positive")
    grid = m.source.grid
    f0 = m.levels[0].values
    top = matalg.lambda_max(f0)
    bad = np.flatnonzero(top > t + tol)
    if bad.size:
        c = int(bad[0])
        raise PreconditionError(
            f"f_0 exceeds threshold t={t} on cell {c} (lambda_max={top[c]:.6g}); increase t",
            cell=c, excess=float(top[c] - t),
        )
    eye = np.eye(grid.d, dtype=complex)
    q0 = matalg.spectral_projection(f0, t, tol)
    q0[top <= t + tol] = eye
    q = [OperatorField(grid, 0, q0)]
    p = [OperatorField(grid, 0, eye - q[0].values)]
    for n in range(1, m.K + 1):
        prev = q[-1].refine(n).values
        a = matalg.hermitize(prev @ m.levels[n].values @ prev)
        chi = matalg.spectral_projection(a, t, tol)
        qn = matalg.range_projection(matalg.hermitize(prev @ chi @ prev), 0.5)
        # cells where nothing crosses the threshold keep q_{n-1} exactly
        calm = matalg.lambda_max(a) <= t + tol
        qn[calm] = prev[calm]
        q.append(OperatorField(grid, n, qn))
        p.append(OperatorField(grid, n, prev - qn))
    return CuculescuFamily(float(t), q, p, m)


def check_cuculescu(fam, tol=1e-8):
    """Worst violations of the Cuculescu properties, plus the trace bound.

    Keys: ``measurable``, ``monotone``, ``commutes``, ``compressed``,
    ``final_compressed``, ``trace_excess`` (all should be <= tol) and the
    raw quantities ``trace_q_perp`` and ``l1_over_t``.
    """
    m = fam.martingale
    t = fam.t
    out = {"measurable": 0.0, "monotone": 0.0, "commutes": 0.0,
           "compressed": 0.0, "final_compressed": 0.0}
    for n, qn in enumerate(fam.q):
        if qn.level != n:
            out["measurable"] = np.inf
        if n == 0:
            continue
        prev = fam.q[n - 1].refine(n).values
        cur = qn.values
        eye = np.eye(cur.shape[-1])
        out["monotone"] = max(out["monotone"], float(np.max(matalg.opnorm(cur @ (eye - prev)))))
        a = prev @ m.levels[n].values @ prev
        comm = matalg.opnorm(matalg.commutator(cur, a)) / (1.0 + matalg.opnorm(a))
        out["commutes"] = max(out["commutes"], float(np.max(comm)))
        top = matalg.lambda_max(cur @ m.levels[n].values @ cur)
        out["compressed"] = max(out["compressed"], float(np.max(top - t)))
    qf = fam.q_final.finest().values
    for fk in m.levels:
        top = matalg.lambda_max(qf @ fk.finest().values @ qf)
        out["final_compressed"] = max(out["final_compressed"], float(np.max(top - t)))
    qperp = OperatorField(fam.q_final.grid, fam.q_final.level,
                          np.eye(qf.shape[-1]) - fam.q_final.values)
    trace_q_perp = float(qperp.trace_integral().real)
    l1 = lp_norm(m.source, 1)
    out["trace_q_perp"] = trace_q_perp
    out["l1_over_t"] = l1 / t
    out["trace_excess"] = trace_q_perp - l1 / t
    return out


def scalar_stopping_oracle(values, t):
    """Classical dyadic stopping time for a nonnegative scalar array of length ``2**K`` (n=1).

    Returns ``(q, f_levels)`` where ``q[n]`` is the 0/1 indicator at level
    ``n`` that ``f_j <= t`` for every ``j <= n``. Works directly on nested
    averages with no matrix machinery.
    """
    values = np.asarray(values, dtype=float)
    K = int(round(np.log2(values.size)))
    f_levels = []
    for k in range(K + 1):
        f_levels.append(values.reshape(2**k, -1).mean(axis=1))
    q = []
    alive = np.ones(1, dtype=bool)
    for k in range(K + 1):
        alive = np.repeat(alive, 2) if k > 0 else alive
        alive = alive & (f_levels[k] <= t)
        q.append(alive.astype(float))
    return q, f_levels
