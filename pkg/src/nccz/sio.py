"""Discretised singular integral operators on the finest dyadic grid.

An operator is a ``cells x cells`` matrix with the volume weights folded in;
it acts on matrix-valued fields entrywise (tensored with the identity of
``M_d``). Conditional expectations and martingale differences are explicit
averaging matrices, so block operators are plain matrix products.
"""
from __future__ import annotations

import logging
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import matalg
from .dyadic import (GridSpec, ancestor, cell_centers, dilation_mask, multi_index,
                     quadrature_points)
from .funcspace import OperatorField, dilated_join
from .kernels import annulus_mask, corrected_kernel, shift_difference, supdist, truncate_far

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    grid: GridSpec
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        side = self.grid.num_cells()
        if self.matrix.shape != (side, side):
            raise ValueError(f"operator matrix must be {side}x{side}, got {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("operator matrix has non-finite entries")

    def __matmul__(self, other):
        if isinstance(other, DiscreteOperator):
            return DiscreteOperator(self.grid, self.matrix @ other.matrix, f"{self.label}*{other.label}")
        return apply(self, other)

    def __add__(self, other):
        return DiscreteOperator(self.grid, self.matrix + other.matrix, f"{self.label}+{other.label}")

    def __sub__(self, other):
        return DiscreteOperator(self.grid, self.matrix - other.matrix, f"{self.label}-{other.label}")

    def adjoint(self):
        return DiscreteOperator(self.grid, self.matrix.conj().T, self.label + "*")

    @classmethod
    def zeros(cls, grid, label="0"):
        return cls(grid, np.zeros((grid.num_cells(),) * 2), label)

    @classmethod
    def identity(cls, grid):
        return cls(grid, np.eye(grid.num_cells()), "1")


def _tabulate(func, grid, quad_refine=1):
    """``vol * func(center_c, y)`` averaged over ``y`` sub-samples of cell ``c'``; own cell zeroed."""
    xs = cell_centers(grid.n, grid.K)
    ys, _ = quadrature_points(grid.n, grid.K, quad_refine)
    sub = quad_refine**grid.n
    vol = grid.volume()
    ncell = xs.shape[0]
    out = None
    chunk = max(1, 2**21 // ys.shape[0])
    for start in range(0, ncell, chunk):
        xc = xs[start:start + chunk]
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = func(xc[:, None, :], ys[None, :, :])
        vals = np.asarray(vals).reshape(xc.shape[0], ncell, sub).mean(axis=-1) * vol
        if out is None:
            out = np.zeros((ncell, ncell), dtype=vals.dtype)
        out[start:start + chunk] = vals
    np.fill_diagonal(out, 0.0)
    if not np.all(np.isfinite(out)):
        raise ValueError("kernel produced non-finite values away from the diagonal")
    if np.iscomplexobj(out) and not np.any(out.imag):
        out = out.real.copy()
    return out


def discretize(kernel, grid, quad_refine=1, label=None):
    """Quadrature matrix ``vol * k(center(c), center(c'))`` with zero diagonal."""
    name = label or getattr(kernel, "label", "T")
    return DiscreteOperator(grid, _tabulate(kernel, grid, quad_refine), name)


def apply(op, f):
    if not isinstance(f, OperatorField):
        raise TypeError("operators act on OperatorField instances")
    if f.grid.n != op.grid.n or f.grid.K != op.grid.K:
        raise ValueError("field and operator live on different grids")
    vals = f.finest().values
    out = np.einsum("ij,jab->iab", op.matrix, vals)
    return OperatorField(f.grid, f.grid.K, out)


def schur_bound(op):
    a = np.abs(op.matrix)
    if a.size == 0:
        return 0.0
    return float(np.sqrt(a.sum(axis=1).max() * a.sum(axis=0).max()))


@dataclass(frozen=True)
class NormEstimate:
    value: float
    converged: bool
    iterations: int

    def __float__(self):
        return self.value


def opnorm2(op, iters=1000, tol=1e-10, seed=0):
    """Spectral norm by power iteration on ``M* M`` from a seeded start."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    m = op.matrix if isinstance(op, DiscreteOperator) else np.asarray(op)
    if not np.any(m):
        return NormEstimate(0.0, True, 0)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m.shape[1]) + 1j * rng.standard_normal(m.shape[1])
    v /= np.linalg.norm(v)
    prev = 0.0
    for it in range(1, iters + 1):
        w = m.conj().T @ (m @ v)
        lam = np.linalg.norm(w)
        if lam == 0.0:
            return NormEstimate(0.0, True, it)
        v = w / lam
        est = np.sqrt(lam)
        if abs(est - prev) <= tol * est:
            return NormEstimate(float(est), True, it)
        prev = est
    return NormEstimate(float(prev), False, iters)


# -- conditional expectations as matrices -------------------------------------------

def expectation_matrix(grid, m):
    """``E_m`` on finest-cell data: average over the level-``m`` ancestor."""
    if not 0 <= m <= grid.K:
        raise ValueError(f"level {m} outside [0, {grid.K}]")
    anc = ancestor(grid.n, grid.K, m)
    same = anc[:, None] == anc[None, :]
    return same / float(2 ** (grid.n * (grid.K - m)))


def difference_matrix(grid, m):
    """``Delta_m = E_m - E_{m-1}`` for ``m >= 1`` and ``Delta_0 = E_0``."""
    if m == 0:
        return expectation_matrix(grid, 0)
    return expectation_matrix(grid, m) - expectation_matrix(grid, m - 1)


class _Cache:
    """Per-grid memo of averaging matrices and surgered kernels."""

    def __init__(self, grid, kernel, psi_cancellation="row"):
        if psi_cancellation not in ("row", "column"):
            raise ValueError("psi_cancellation must be 'row' or 'column'")
        self.grid = grid
        self.kernel = kernel
        self.cancellation = psi_cancellation
        self._delta = {}
        self._far = {}
        self._base = None

    def delta(self, m):
        if m not in self._delta:
            self._delta[m] = difference_matrix(self.grid, m)
        return self._delta[m]

    def base(self):
        if self._base is None:
            self._base = _tabulate(self.kernel, self.grid)
        return self._base

    def far(self, k):
        if k not in self._far:
            self._far[k] = ~dilation_mask(self.grid.n, k, 5, self.grid.K)
        return self._far[k]

    def t_k(self, k):
        return np.where(self.far(k), self.base(), 0.0)

    def t_ks(self, k, s):
        return _tabulate(shift_difference(self.kernel, k, s), self.grid)

    def r_ks(self, k, s):
        """Correction block cancelling the row sums of ``t_ks`` exactly.

        With ``psi_cancellation="column"`` the column sums are cancelled
        instead; the support stays in the annulus either way.
        """
        g, grid = self.kernel.gamma, self.grid
        tks = self.t_ks(k, s)
        xs = cell_centers(grid.n, grid.K)
        ann = dilation_mask(grid.n, k, 5, grid.K) & ~dilation_mask(grid.n, k, 3, grid.K)
        with np.errstate(divide="ignore"):
            w = np.where(ann, supdist(xs[:, None, :], xs[None, :, :]) ** -(grid.n + g), 0.0)
        w *= grid.volume()
        axis = 1 if self.cancellation == "row" else 0
        K_of_x = -tks.sum(axis=axis)
        I_of_x = w.sum(axis=axis)
        scale = np.divide(K_of_x, I_of_x, out=np.zeros_like(K_of_x), where=I_of_x > 0)
        return w * (scale[:, None] if axis == 1 else scale[None, :])

    def s_ks(self, k, s):
        return self.t_ks(k, s) + self.r_ks(k, s)


def _phi_range(grid, i, s):
    return [k for k in range(0, grid.K + 1) if 0 <= k + i <= grid.K and 0 <= k + s <= grid.K]


def _psi_range(grid, i, s):
    return [k for k in range(0, grid.K + 1)
            if 0 <= k - i <= grid.K and 0 <= k + s <= grid.K and k + s >= 1]


def assemble_phi(grid, kernel, i, s, cache=None, ks=None):
    """``Phi_i = sum_k Delta_{k+i} T_k Delta_{k+s}`` over the retained level range."""
    if i < 0 or s < 0:
        raise ValueError("i and s must be >= 0")
    cache = cache or _Cache(grid, kernel)
    ks = _phi_range(grid, i, s) if ks is None else ks
    out = np.zeros((grid.num_cells(),) * 2)
    if not ks:
        log.warning("empty level range for Phi_%d at s=%d", i, s)
    for k in ks:
        out = out + cache.delta(k + i) @ cache.t_k(k) @ cache.delta(k + s)
    return DiscreteOperator(grid, out, f"Phi_{i}[s={s}]")


def assemble_psi(grid, kernel, i, s, cache=None, ks=None):
    """``Psi_i = sum_k Delta_{k-i} S_{k,s} Delta_{k+s}`` with the mean-zero corrected kernel."""
    if i < 0 or s < 0:
        raise ValueError("i and s must be >= 0")
    cache = cache or _Cache(grid, kernel)
    ks = _psi_range(grid, i, s) if ks is None else ks
    out = np.zeros((grid.num_cells(),) * 2)
    if not ks:
        log.warning("empty level range for Psi_%d at s=%d", i, s)
    for k in ks:
        out = out + cache.delta(k - i) @ cache.s_ks(k, s) @ cache.delta(k + s)
    return DiscreteOperator(grid, out, f"Psi_{i}[s={s}]")


def shift_block(grid, kernel, k, s):
    """``T_{k,s}`` as a matrix."""
    return DiscreteOperator(grid, _Cache(grid, kernel).t_ks(k, s), f"T_{k},{s}")


def corrected_block(grid, kernel, k, s):
    """``S_{k,s}`` as a matrix; row sums vanish to rounding."""
    return DiscreteOperator(grid, _Cache(grid, kernel).s_ks(k, s), f"S_{k},{s}")


def truncated_block(grid, kernel, k):
    return DiscreteOperator(grid, _Cache(grid, kernel).t_k(k), f"T_{k}")


# -- pseudo-localisation projections -------------------------------------------------

@dataclass(frozen=True, eq=False)
class PseudolocFamily:
    s: int
    A_k: dict
    A_fs: OperatorField
    dilation: int = 5

    @property
    def complement(self):
        return OperatorField.identity(self.A_fs.grid) - self.A_fs

    def dominance_error(self):
        """``max || A_Q (1 - A_fs(x)) ||`` over ``x`` in the dilated cubes ``5Q``."""
        grid = self.A_fs.grid
        perp = self.complement.values
        worst = 0.0
        for k, ak in self.A_k.items():
            mask = dilation_mask(grid.n, k, self.dilation, grid.K)
            anc = ancestor(grid.n, grid.K, k)
            aq = ak.values
            for q in range(aq.shape[0]):
                if not np.any(aq[q]):
                    continue
                cols = np.nonzero(mask[:, np.nonzero(anc == q)[0][0]])[0]
                prod = aq[q][None] @ perp[cols]
                worst = max(worst, float(matalg.opnorm(prod).max(initial=0.0)))
        return worst


def pseudoloc_family(source, s, grid=None, dilation=5):
    """Join of the dilated support projections.

    ``source`` is either a Cuculescu family (``A_k = p_k`` for ``k >= 1``) or a
    mapping from level to a field of projections constant on level-``k`` cubes.
    """
    if hasattr(source, "p"):
        grid = source.martingale.source.grid
        levels = {k: source.p[k] for k in range(1, len(source.p))}
    else:
        if grid is None:
            raise ValueError("grid is required when A_k are given explicitly")
        levels = dict(source)
    for k, ak in levels.items():
        if ak.level != k:
            raise ValueError(f"A_{k} must be a level-{k} field, got level {ak.level}")
        if not matalg.is_projection(ak.values, idem_tol=1e-8):
            raise ValueError(f"A_{k} is not a projection in every cell")
    a_fs = dilated_join(levels, dilation, grid)
    return PseudolocFamily(s, levels, a_fs, dilation)


def support_violation(A_k, df, k):
    """``max || A_k^perp df_{k+s} ||`` (projection on the left)."""
    perp = 1.0 * np.eye(df.values.shape[-1]) - A_k.refine(df.level).values
    return float(matalg.opnorm(perp @ df.values).max(initial=0.0))


# -- Rademacher masking ----------------------------------------------------------------

def _in_geometric_dilation(x, y, m, i=5):
    """``x in iQ_{y,m}`` from the cube centre and half-open box ``[c - i l/2, c + i l/2)``."""
    ell = 2.0 ** (-m)
    c = (np.floor(np.asarray(y) / ell) + 0.5) * ell
    lo, hi = c - 0.5 * i * ell, c + 0.5 * i * ell
    x = np.asarray(x)
    return np.all((lo <= x) & (x < hi), axis=-1)


def masking_expectation(kernel, m):
    """``E_omega[l_m(x) k(x, y) g_m(y)]`` with ``l_m = sum eps_Q 1_{5Q}``, ``g_m = sum eps_Q 1_Q``.

    Orthonormality of Rademacher signs leaves the single cube ``Q`` containing
    ``y``, so the expectation is ``1_{5Q_{y,m}}(x) k(x, y)``.
    """

    def func(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = kernel(x, y)
        return np.where(_in_geometric_dilation(x, y, m), val, 0.0)

    return func


def masking_matrices(grid, m):
    """0/1 matrices ``L[x, Q] = 1_{5Q}(x)`` and ``G[y, Q] = 1_Q(y)`` over finest centres."""
    xs = cell_centers(grid.n, grid.K)
    qc = cell_centers(grid.n, m)
    ell = 2.0 ** (-m)
    L = np.all(np.abs(xs[:, None, :] - qc[None, :, :]) < 2.5 * ell, axis=-1).astype(np.int64)
    anc = ancestor(grid.n, grid.K, m)
    G = (anc[:, None] == np.arange(qc.shape[0])[None, :]).astype(np.int64)
    return L, G


def masking_deviation(grid, m):
    """``max |L G^T - 1_{x in 5Q_{y,m}}|`` against the complement of the far-field mask."""
    L, G = masking_matrices(grid, m)
    lhs = L @ G.T
    far = ~dilation_mask(grid.n, m, 5, grid.K)
    return int(np.max(np.abs(lhs - (~far).astype(np.int64))))


def rademacher_enumeration(grid, m):
    """Average of ``l_m(x) g_m(y)`` over every sign pattern (small ``m`` only)."""
    L, G = masking_matrices(grid, m)
    ncube = L.shape[1]
    if ncube > 12:
        raise ValueError("exhaustive enumeration limited to 12 cubes")
    acc = np.zeros((L.shape[0], G.shape[0]))
    for bits in range(2**ncube):
        eps = np.array([1 if (bits >> j) & 1 else -1 for j in range(ncube)])
        acc += np.outer(L @ eps, G @ eps)
    return acc / 2**ncube


# -- annulus integral -------------------------------------------------------------------

def annulus_integral(k, i, gamma, n=1):
    """``int_{t in Q} int_{y not in Q} 1_{|t-y| > 2^{1-k}} |t-y|^{-(n+g)} dy dt`` with ``Q`` of level ``k - i``.

    One dimension only: the inner integral over the two half-lines is done in
    closed form and the outer one by adaptive quadrature.
    """
    if n != 1:
        raise NotImplementedError("annulus integral implemented for n = 1")
    if i < 0:
        raise ValueError("i must be >= 0")
    from scipy.integrate import quad

    length = 2.0 ** (-(k - i))
    a = 2.0 ** (1 - k)

    def inner(t):
        # y < 0 gives distance t + u, u > 0; y > L gives distance L - t + u
        return (max(t, a) ** -gamma + max(length - t, a) ** -gamma) / gamma

    pts = [p for p in (a, length - a) if 0.0 < p < length]
    val, _ = quad(inner, 0.0, length, points=sorted(set(pts)) or None, limit=200)
    return val


def annulus_bound(k, i, gamma, n=1):
    return (1 + i) * 2.0 ** ((gamma - n) * (k - i))


# -- export -------------------------------------------------------------------------------

def _atomic_write(path, data, mode="wb"):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def export_binary(op, path):
    """Row-major little-endian float64; complex matrices are written as (re, im) pairs."""
    m = op.matrix
    arr = np.stack([m.real, m.imag], axis=-1) if np.iscomplexobj(m) else m
    _atomic_write(path, np.ascontiguousarray(arr, dtype="<f8").tobytes())


def export_csv(op, path):
    import io

    buf = io.StringIO()
    m = op.matrix
    if np.iscomplexobj(m):
        np.savetxt(buf, m.real, delimiter=",", fmt="%.17g")
        buf.write("\n")
        np.savetxt(buf, m.imag, delimiter=",", fmt="%.17g")
    else:
        np.savetxt(buf, m, delimiter=",", fmt="%.17g")
    _atomic_write(path, buf.getvalue(), mode="w")


def load_binary(path, side, complex_values=False):
    raw = np.fromfile(path, dtype="<f8")
    if complex_values:
        raw = raw.reshape(side, side, 2)
        return raw[..., 0] + 1j * raw[..., 1]
    return raw.reshape(side, side)


def decomposition_operator(grid, kernel, s, cache=None):
    """``sum_k [sum_{j>k} Delta_j T_k + sum_{j<=k} Delta_j S_{k,s}] Delta_{k+s}`` over ``k = 1..K-s``.

    Composed with ``zeta`` on the left and applied to data satisfying the
    support condition, this reproduces ``zeta T`` exactly. The output level
    ``j = k`` carries the corrected kernel: the level-``k`` projection does not
    commute with ``Delta_k``, so the correction survives there.
    """
    cache = cache or _Cache(grid, kernel)
    out = np.zeros((grid.num_cells(),) * 2)
    for k in range(1, grid.K - s + 1):
        upper = sum(cache.delta(j) for j in range(k + 1, grid.K + 1)) if k < grid.K else 0.0
        lower = sum(cache.delta(j) for j in range(0, k + 1))
        out = out + (upper @ cache.t_k(k) + lower @ cache.s_ks(k, s)) @ cache.delta(k + s)
    return DiscreteOperator(grid, out, f"decomposition[s={s}]")


def literal_decomposition_operator(grid, kernel, s, cache=None):
    """``sum_{i>=0} Phi_i + sum_{i>=1} Psi_i`` with ``T_k`` in the ``i = 0`` block."""
    cache = cache or _Cache(grid, kernel)
    out = np.zeros((grid.num_cells(),) * 2)
    for i in range(0, grid.K + 1):
        out = out + assemble_phi(grid, kernel, i, s, cache, ks=[k for k in _phi_range(grid, i, s) if k >= 1]).matrix
    for i in range(1, grid.K + 1):
        out = out + assemble_psi(grid, kernel, i, s, cache, ks=[k for k in _psi_range(grid, i, s) if k >= 1]).matrix
    return DiscreteOperator(grid, out, f"literal-decomposition[s={s}]")
