"""Truncated dyadic lattice on the unit cube [0, 1)^n with the sup-norm.

Cells at level ``k`` are stored in row-major order of their integer
multi-index, so a field at level ``k`` is an array whose leading axis has
length ``2**(n*k)``. Dilated cubes ``iQ`` are unions of ``i**n`` cubes of the
same level, clipped at the domain boundary.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DEFAULT_CELL_BUDGET = 2**16


@dataclass(frozen=True)
class GridSpec:
    n: int = 1
    K: int = 6
    d: int = 2
    quad_refine: int = 4
    cell_budget: int = DEFAULT_CELL_BUDGET

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("spatial dimension n must be >= 1")
        if not 0 <= self.K <= 24:
            raise ValueError("finest level K must lie in [0, 24]")
        if self.d < 1:
            raise ValueError("matrix dimension d must be >= 1")
        if self.quad_refine < 1:
            raise ValueError("quad_refine must be >= 1")
        if self.num_cells() > self.cell_budget:
            raise ValueError(
                f"grid has {self.num_cells()} finest cells, above the budget {self.cell_budget}"
            )

    def num_cells(self, k=None):
        k = self.K if k is None else k
        return 2 ** (self.n * k)

    def volume(self, k=None):
        k = self.K if k is None else k
        return 2.0 ** (-self.n * k)

    def side(self, k=None):
        k = self.K if k is None else k
        return 2**k


@dataclass(frozen=True)
class DyadicCube:
    level: int
    index: tuple

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("cube level must be >= 0")
        if any(not 0 <= i < 2**self.level for i in self.index):
            raise ValueError(f"index {self.index} out of range for level {self.level}")

    @property
    def n(self):
        return len(self.index)

    @property
    def edge(self):
        return 2.0 ** (-self.level)

    @property
    def volume(self):
        return self.edge**self.n

    @property
    def lower(self):
        return np.asarray(self.index, dtype=float) * self.edge

    @property
    def upper(self):
        return (np.asarray(self.index, dtype=float) + 1.0) * self.edge

    def contains(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all((self.lower <= x) & (x < self.upper)))

    def flat_index(self):
        return flat_index(np.asarray(self.index), self.level)


def _as_point(x, n=None):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if n is not None and x.shape[-1] != n:
        raise ValueError(f"point has dimension {x.shape[-1]}, expected {n}")
    return x


def cube_of(x, k):
    """The level-``k`` dyadic cube containing the point ``x`` of [0, 1)^n."""
    x = _as_point(x)
    if np.any(x < 0.0) or np.any(x >= 1.0):
        raise ValueError(f"point {x} lies outside [0, 1)^n")
    if k < 0:
        raise ValueError("level must be >= 0")
    idx = np.floor(x * 2**k).astype(int)
    return DyadicCube(k, tuple(int(i) for i in idx))


def center(q):
    return (np.asarray(q.index, dtype=float) + 0.5) * q.edge


def _check_odd(i):
    if i < 1 or i % 2 == 0:
        raise ValueError(f"dilation factor must be an odd positive integer, got {i}")


def in_dilated(x, q, i):
    """Whether ``x`` lies in the dilation ``iQ`` (clipped to the domain).

    ``iQ`` is the union of the level-``q.level`` cubes whose index differs
    from ``q.index`` by at most ``(i - 1) / 2`` in every coordinate, which
    keeps the membership relation symmetric on half-open cubes.
    """
    _check_odd(i)
    xq = cube_of(x, q.level)
    diff = np.abs(np.asarray(xq.index) - np.asarray(q.index))
    return bool(np.all(diff <= (i - 1) // 2))


def cells(g, k):
    """All level-``k`` cubes of the grid in row-major index order."""
    if not 0 <= k <= g.K:
        raise ValueError(f"level {k} outside [0, {g.K}]")
    return [DyadicCube(k, tuple(int(v) for v in row)) for row in multi_index(g.n, k)]


# -- vectorised helpers ------------------------------------------------------

@lru_cache(maxsize=64)
def _multi_index_cached(n, k):
    side = 2**k
    grids = np.meshgrid(*([np.arange(side)] * n), indexing="ij")
    out = np.stack([gi.reshape(-1) for gi in grids], axis=-1)
    out.setflags(write=False)
    return out


def multi_index(n, k):
    """Integer multi-indices ``(2**(n*k), n)`` of the level-``k`` cells."""
    return _multi_index_cached(n, k)


def flat_index(idx, k):
    idx = np.asarray(idx)
    side = 2**k
    out = np.zeros(idx.shape[:-1], dtype=np.int64)
    for j in range(idx.shape[-1]):
        out = out * side + idx[..., j]
    return out


def cell_centers(n, k):
    return (multi_index(n, k) + 0.5) * 2.0 ** (-k)


def quadrature_points(n, k, refine):
    """Midpoint sub-samples of every level-``k`` cell.

    Returns ``(points, owner)`` with ``points`` of shape
    ``(2**(n*k) * refine**n, n)`` and ``owner`` the flat index of the cell
    containing each point. Points are grouped by owning cell.
    """
    offsets = (np.stack(np.meshgrid(*([np.arange(refine)] * n), indexing="ij"), -1)
               .reshape(-1, n) + 0.5) / refine
    base = multi_index(n, k).astype(float)
    pts = (base[:, None, :] + offsets[None, :, :]) * 2.0 ** (-k)
    owner = np.repeat(np.arange(base.shape[0]), offsets.shape[0])
    return pts.reshape(-1, n), owner


def point_index(x, k):
    """Integer multi-index of the level-``k`` cube containing each point."""
    return np.floor(np.asarray(x, dtype=float) * 2**k).astype(np.int64)


def ancestor(n, K, k):
    """Flat level-``k`` index of the ancestor of every level-``K`` cell."""
    if k > K:
        raise ValueError("ancestor level must not exceed the cell level")
    return flat_index(multi_index(n, K) >> (K - k), k)


def dilation_mask(n, k, i, level):
    """Boolean matrix ``M[x, y] = (x in iQ_{y,k})`` over level-``level`` cells."""
    _check_odd(i)
    idx = multi_index(n, level) >> (level - k)
    diff = np.abs(idx[:, None, :] - idx[None, :, :]).max(axis=-1)
    return diff <= (i - 1) // 2


def points_in_dilated(x, y, k, i):
    """Vectorised ``x in iQ_{y,k}`` for point arrays broadcasting over ``(..., n)``."""
    _check_odd(i)
    diff = np.abs(point_index(x, k) - point_index(y, k)).max(axis=-1)
    return diff <= (i - 1) // 2


def box_sum(values, n, k, radius):
    """Sum over level-``k`` neighbours within index distance ``radius`` (clipped).

    ``values`` has leading axis ``2**(n*k)``; trailing axes are carried along.
    """
    side = 2**k
    tail = values.shape[1:]
    arr = values.reshape((side,) * n + tail)
    for axis in range(n):
        pad = [(0, 0)] * arr.ndim
        pad[axis] = (radius, radius)
        padded = np.pad(arr, pad)
        acc = np.zeros_like(arr)
        for shift in range(2 * radius + 1):
            sl = [slice(None)] * arr.ndim
            sl[axis] = slice(shift, shift + side)
            acc = acc + padded[tuple(sl)]
        arr = acc
    return arr.reshape((side**n,) + tail)
