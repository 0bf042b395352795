"""Calderon-Zygmund kernels with Lipschitz parameter gamma and their surgeries.

Kernels are scalar (or vector, for the Littlewood-Paley family) valued
functions of two point arrays broadcasting over ``(..., n)``. Distances use
the sup-norm. Scalar values commute with every matrix, so the kernels act
on matrix-valued fields by plain scalar multiplication.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dyadic import GridSpec, cell_centers, point_index, points_in_dilated, quadrature_points


def supdist(x, y):
    return np.max(np.abs(np.asarray(x) - np.asarray(y)), axis=-1)


@dataclass(frozen=True, eq=False)
class KernelModel:
    label: str
    n: int
    gamma: float
    func: object
    params: dict = field(default_factory=dict)
    components: int = 0  # 0 for scalar kernels

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"Lipschitz parameter must lie in (0, 1], got {self.gamma}")

    def __call__(self, x, y):
        return self.func(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def adjoint(self):
        """Kernel of the adjoint operator, ``(x, y) -> conj k(y, x)``."""
        f = self.func
        return KernelModel(self.label + "*", self.n, self.gamma,
                           lambda x, y: np.conj(f(y, x)), dict(self.params), self.components)


def builtin_hilbert(n=1):
    """``k(x, y) = 1 / (2 (x - y))``: smoothness and size constants at most 1, gamma = 1."""
    if n != 1:
        raise ValueError("the Hilbert kernel is one-dimensional")

    def func(x, y):
        with np.errstate(divide="ignore", invalid="ignore"):
            return 0.5 / (x[..., 0] - y[..., 0])

    return KernelModel("hilbert", 1, 1.0, func)


# Largest constant c for which c * u_1 / |u|^(n+1) passes both predicates at gamma = 1;
# values measured by adversarial sampling with a 10% safety margin (n = 1 is exact).
_POWER_CONSTANT = {1: 0.5, 2: 0.11, 3: 0.055}


def builtin_power(n=1, gamma=1.0, c=None):
    """``k(x, y) = c (x_1 - y_1) / |x - y|^(n+1)``, odd and homogeneous of degree ``-n``.

    For ``n = 1`` this is ``c sign(x - y) / |x - y|``. The kernel is
    Lipschitz away from the diagonal; on the unit domain that implies the
    smoothness estimate for every declared ``gamma <= 1``.
    """
    if c is None:
        if n not in _POWER_CONSTANT:
            raise ValueError(f"no tuned constant for n={n}; pass c explicitly")
        c = _POWER_CONSTANT[n]

    def func(x, y):
        u = x - y
        r = np.max(np.abs(u), axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return c * u[..., 0] / r ** (n + 1)

    return KernelModel(f"power", n, float(gamma), func, {"c": c})


def zero_kernel(n=1):
    return KernelModel("zero", n, 1.0, lambda x, y: np.zeros(np.broadcast_shapes(x.shape, y.shape)[:-1]))


# -- predicates ----------------------------------------------------------------

def _admissible_triples(rng, n, samples, box=1.0):
    y = rng.uniform(0.0, box, size=(samples, n))
    z = rng.uniform(0.0, box, size=(samples, n))
    r = supdist(y, z)
    # |x - z| <= |y - z| / 2, with many samples close to the boundary case
    frac = 0.5 * rng.uniform(0.0, 1.0, size=samples) ** 0.5
    direction = rng.uniform(-1.0, 1.0, size=(samples, n))
    direction /= np.max(np.abs(direction), axis=-1, keepdims=True)
    x = z + (frac * r)[:, None] * direction
    return x, y, z


def _value_norm(v):
    v = np.asarray(v)
    return np.abs(v) if v.ndim == 1 or v.ndim == 0 else np.linalg.norm(v, axis=-1)


def smoothness_ratio(kernel, samples=10_000, seed=0, box=1.0):
    """Worst ratio of both smoothness differences to ``|x-z|^g / |y-z|^(n+g)``."""
    rng = np.random.default_rng(seed)
    x, y, z = _admissible_triples(rng, kernel.n, samples, box)
    g, n = kernel.gamma, kernel.n
    rhs = supdist(x, z) ** g / supdist(y, z) ** (n + g)
    keep = (rhs > 0) & np.isfinite(rhs)
    first = _value_norm(kernel(x, y) - kernel(z, y))
    second = _value_norm(kernel(y, x) - kernel(y, z))
    ratio = np.maximum(first, second)[keep] / rhs[keep]
    return float(np.max(ratio, initial=0.0))


def size_ratio(kernel, samples=10_000, seed=1, box=1.0):
    """Worst ratio ``|k(x, y)| |x - y|^n``."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, box, size=(samples, kernel.n))
    y = rng.uniform(0.0, box, size=(samples, kernel.n))
    r = supdist(x, y)
    keep = r > 0
    return float(np.max(_value_norm(kernel(x, y))[keep] * r[keep] ** kernel.n, initial=0.0))


def check_smoothness(kernel, samples=10_000, seed=0):
    return smoothness_ratio(kernel, samples, seed) <= 1.0


def check_size(kernel, samples=10_000, seed=1):
    return size_ratio(kernel, samples, seed) <= 1.0


# -- surgeries -------------------------------------------------------------------

def truncate_far(kernel, k):
    """``k_k(x, y) = 1_{x not in 5Q_{y,k}} k(x, y)``."""

    def func(x, y):
        far = ~points_in_dilated(x, y, k, 5)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = kernel(x, y)
        far_b = far if np.ndim(val) == np.ndim(far) else far[..., None]
        return np.where(far_b, val, 0.0)

    return func


def dyadic_center(y, level):
    return (point_index(y, level) + 0.5) * 2.0 ** (-level)


def shift_difference(kernel, k, s):
    """``k_{k,s}(x, y) = 1_{x not in 5Q_{y,k}} (k(x, y) - k(x, c_{y,k+s-1}))``."""
    if k + s < 1:
        raise ValueError("the centring level k + s - 1 must be >= 0")
    m = k + s - 1

    def func(x, y):
        far = ~points_in_dilated(x, y, k, 5)
        c = dyadic_center(y, m)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = kernel(x, y) - kernel(x, c)
        far_b = far if np.ndim(val) == np.ndim(far) else far[..., None]
        return np.where(far_b, val, 0.0)

    return func


def annulus_mask(x, y, k):
    """``1_{A_k}(x, y)``: ``x in 5Q_{y,k}`` but not in ``3Q_{y,k}``."""
    return points_in_dilated(x, y, k, 5) & ~points_in_dilated(x, y, k, 3)


@dataclass(frozen=True, eq=False)
class CorrectedKernel:
    """Mean-zero modification ``s_{k,s} = k_{k,s} + r_{k,s}`` tabulated on a grid.

    ``K_of_x`` and ``I_of_x`` are indexed by finest cell; the kernel is
    evaluated with ``x`` taken at the centre of its finest cell. The
    correction uses the x-dependent normaliser ``I(x)`` so that the row
    integral vanishes exactly at quadrature resolution. Rows where the
    annulus is empty keep ``K(x)`` as an unabsorbed residual.
    """
    base: KernelModel
    grid: GridSpec
    k: int
    s: int
    K_of_x: np.ndarray
    I_of_x: np.ndarray
    residual: np.ndarray

    def _cell(self, x):
        idx = point_index(x, self.grid.K)
        side = 2**self.grid.K
        flat = np.zeros(idx.shape[:-1], dtype=np.int64)
        for j in range(idx.shape[-1]):
            flat = flat * side + idx[..., j]
        return flat

    def correction(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        cell = self._cell(x)
        g, n = self.base.gamma, self.base.n
        with np.errstate(divide="ignore", invalid="ignore"):
            weight = np.where(self.I_of_x[cell] > 0, self.K_of_x[cell] / self.I_of_x[cell], 0.0)
            val = weight / supdist(x, y) ** (n + g)
        return np.where(annulus_mask(x, y, self.k), val, 0.0)

    def __call__(self, x, y):
        x = np.asarray(x, float)
        return shift_difference(self.base, self.k, self.s)(x, y) + self.correction(x, y)

    def row_sums(self):
        """Quadrature row integrals ``sum_y vol * s_{k,s}(x, y)`` for every finest cell."""
        pts, _ = quadrature_points(self.grid.n, self.grid.K, self.grid.quad_refine)
        xs = cell_centers(self.grid.n, self.grid.K)
        vol = self.grid.volume() / self.grid.quad_refine**self.grid.n
        return np.array([np.sum(self(xc[None, :], pts)) * vol for xc in xs])


def corrected_kernel(kernel, k, s, grid):
    """Build ``s_{k,s}`` with ``K(x) = -int k_{k,s}(x, t) dt`` and ``I(x) = int_{A_k(x)} |x-t|^-(n+g) dt``."""
    if kernel.components:
        raise ValueError("corrected kernels are built for scalar kernels only")
    if k + s > grid.K + 1:
        raise ValueError("k + s exceeds the grid resolution")
    ks = shift_difference(kernel, k, s)
    pts, _ = quadrature_points(grid.n, grid.K, grid.quad_refine)
    vol = grid.volume() / grid.quad_refine**grid.n
    xs = cell_centers(grid.n, grid.K)
    g, n = kernel.gamma, kernel.n
    K_of_x = np.empty(xs.shape[0])
    I_of_x = np.empty(xs.shape[0])
    chunk = max(1, 2**20 // pts.shape[0])
    for start in range(0, xs.shape[0], chunk):
        xc = xs[start:start + chunk, None, :]
        vals = ks(xc, pts[None, :, :])
        K_of_x[start:start + chunk] = -np.real(np.sum(vals, axis=1)) * vol
        ann = annulus_mask(xc, pts[None, :, :], k)
        with np.errstate(divide="ignore"):
            w = np.where(ann, supdist(xc, pts[None, :, :]) ** -(n + g), 0.0)
        I_of_x[start:start + chunk] = np.sum(w, axis=1) * vol
    residual = np.where(I_of_x > 0, 0.0, K_of_x)
    return CorrectedKernel(kernel, grid, k, s, K_of_x, I_of_x, residual)


def correction_bound(n, gamma, k, s, pointwise=1.0):
    """Upper bound for ``sup |K(x)|`` from ``|k_{k,s}| <= C 2^{-(k+s) g} / |x-y|^(n+g)``.

    Points outside ``5Q_{y,k}`` sit at sup-distance at least ``2^{1-k}`` from
    ``y``; integrating the pointwise bound over that region (sup-norm polar
    coordinates) leaves ``C c_n 2^{-g s}``, independent of ``x`` and ``k``.
    """
    r0 = 2.0 ** (1 - k)
    shell = 2.0 * n * 2.0 ** (n - 1) * r0 ** (-gamma) / gamma
    return pointwise * 2.0 ** (-(k + s) * gamma) * shell


def pointwise_shift_ratio(kernel, k, s, samples=10_000, seed=2):
    """Worst ``|k_{k,s}(x, y)| |x-y|^(n+g) 2^{(k+s) g}`` over sampled pairs outside ``5Q_{y,k}``."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(samples, kernel.n))
    y = rng.uniform(0.0, 1.0, size=(samples, kernel.n))
    far = ~points_in_dilated(x, y, k, 5)
    vals = _value_norm(shift_difference(kernel, k, s)(x[far], y[far]))
    r = supdist(x[far], y[far])
    g = kernel.gamma
    return float(np.max(vals * r ** (kernel.n + g) * 2.0 ** ((k + s) * g), initial=0.0))


# -- Littlewood-Paley family -------------------------------------------------------

def _smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
    b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def lp_bump(xi):
    """Smooth bump supported in (1, 2), equal to 1 on [5/4, 7/4], bounded by 1."""
    xi = np.asarray(xi, dtype=float)
    return _smooth_step(4.0 * (xi - 1.0)) * _smooth_step(4.0 * (2.0 - xi))


def lp_multiplier(i, xi):
    """Dyadic dilation ``phi_i(xi) = psi(2^{1-i} xi)``, equal to 1 on ``[5/4 2^{i-1}, 7/4 2^{i-1}]``."""
    return lp_bump(2.0 ** (1 - i) * np.asarray(xi, dtype=float))


def lp_band(k):
    """Frequency band ``(5/4 2^{k-1}, 5/4 2^{k-1} + 1/2)`` carrying ``g_k``."""
    lo = 1.25 * 2.0 ** (k - 1)
    return lo, lo + 0.5


def _bump_fourier(u, grid_pts=4096):
    """``int psi(xi) e^{2 pi i xi u} d xi`` by the trapezoid rule (psi is smooth, compactly supported)."""
    xi = np.linspace(1.0, 2.0, grid_pts)
    w = lp_bump(xi)
    u = np.asarray(u, dtype=float)
    phase = np.exp(2j * np.pi * np.multiply.outer(u, xi))
    return np.trapezoid(phase * w, xi, axis=-1)


def builtin_lp_family(m):
    """Vector kernel ``k_i(x, y) = FT(phi_i)(x - y)`` for ``i = 1..m`` on the real line."""
    if m < 1:
        raise ValueError("need at least one component")

    def func(x, y):
        u = x[..., 0] - y[..., 0]
        comps = [2.0 ** (i - 1) * _bump_fourier(2.0 ** (i - 1) * u) for i in range(1, m + 1)]
        return np.stack(comps, axis=-1)

    return KernelModel("littlewood-paley", 1, 1.0, func, {"m": m}, components=m)


def kernel_from_config(label, n=1, gamma=1.0, **params):
    if label == "hilbert":
        return builtin_hilbert(n)
    if label == "power":
        return builtin_power(n, gamma, params.get("c"))
    if label == "zero":
        return zero_kernel(n)
    raise ValueError(f"unknown kernel label {label!r}")
