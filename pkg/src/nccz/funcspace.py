"""Operator-valued step functions on the dyadic grid.

An :class:`OperatorField` is constant on the cells of one level and stores
one ``d x d`` complex matrix per cell. Norms integrate the matrix trace
against Lebesgue measure on [0, 1)^n.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import matalg
from .dyadic import GridSpec, box_sum


@dataclass(frozen=True, eq=False)
class OperatorField:
    grid: GridSpec
    level: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        expected = (self.grid.num_cells(self.level), self.grid.d, self.grid.d)
        if vals.shape != expected:
            raise ValueError(f"field values have shape {vals.shape}, expected {expected}")
        if not 0 <= self.level <= self.grid.K:
            raise ValueError(f"level {self.level} outside [0, {self.grid.K}]")
        object.__setattr__(self, "values", vals)

    # constructors
    @classmethod
    def constant(cls, grid, matrix, level=0):
        m = np.asarray(matrix, dtype=complex)
        vals = np.broadcast_to(m, (grid.num_cells(level), grid.d, grid.d)).copy()
        return cls(grid, level, vals)

    @classmethod
    def identity(cls, grid, level=0):
        return cls.constant(grid, np.eye(grid.d), level)

    @classmethod
    def zeros(cls, grid, level=None):
        level = grid.K if level is None else level
        return cls(grid, level, np.zeros((grid.num_cells(level), grid.d, grid.d), complex))

    @classmethod
    def from_scalars(cls, grid, scalars, level=None):
        """Field ``s * identity`` from a vector of per-cell scalars."""
        s = np.asarray(scalars, dtype=complex)
        level = int(round(np.log2(s.size) / grid.n)) if level is None else level
        return cls(grid, level, s[:, None, None] * np.eye(grid.d))

    @property
    def volume(self):
        return self.grid.volume(self.level)

    def refine(self, level):
        """Represent the field exactly at a finer level."""
        if level < self.level:
            raise ValueError("refine cannot coarsen a field; use cond_expectation")
        if level == self.level:
            return self
        n, r = self.grid.n, 2 ** (level - self.level)
        side = 2**self.level
        arr = self.values.reshape((side,) * n + self.values.shape[1:])
        for axis in range(n):
            arr = np.repeat(arr, r, axis=axis)
        return OperatorField(self.grid, level, arr.reshape((-1,) + self.values.shape[1:]))

    def finest(self):
        return self.refine(self.grid.K)

    def _aligned(self, other):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        lev = max(self.level, other.level)
        return self.refine(lev).values, other.refine(lev).values, lev

    def __add__(self, other):
        a, b, lev = self._aligned(other)
        return OperatorField(self.grid, lev, a + b)

    def __sub__(self, other):
        a, b, lev = self._aligned(other)
        return OperatorField(self.grid, lev, a - b)

    def __neg__(self):
        return OperatorField(self.grid, self.level, -self.values)

    def __mul__(self, scalar):
        return OperatorField(self.grid, self.level, self.values * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other):
        a, b, lev = self._aligned(other)
        return OperatorField(self.grid, lev, a @ b)

    def adjoint(self):
        return OperatorField(self.grid, self.level, matalg.adjoint(self.values))

    def integral(self):
        """Matrix-valued integral over the domain."""
        return self.values.sum(axis=0) * self.volume

    def trace_integral(self):
        return complex(np.sum(matalg.trace(self.values)) * self.volume)

    def max_abs(self):
        return float(np.max(np.abs(self.values), initial=0.0))

    # serialization
    def to_json(self):
        cells = [[[float(z.real), float(z.imag)] for z in cell.reshape(-1)] for cell in self.values]
        return json.dumps({
            "grid": {"n": self.grid.n, "K": self.grid.K, "d": self.grid.d,
                     "quad_refine": self.grid.quad_refine},
            "level": self.level,
            "cells": cells,
        })

    @classmethod
    def from_json(cls, text):
        rec = json.loads(text) if isinstance(text, str) else text
        grid = GridSpec(**rec["grid"])
        raw = np.asarray(rec["cells"], dtype=float)
        vals = (raw[..., 0] + 1j * raw[..., 1]).reshape(-1, grid.d, grid.d)
        return cls(grid, int(rec["level"]), vals)


def _common(fields):
    fields = list(fields)
    if not fields:
        raise ValueError("empty field sequence")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise ValueError("sequence entries live on different grids")
    lev = max(f.level for f in fields)
    return [f.refine(lev) for f in fields], lev


class FieldSequence(list):
    """A finite sequence of fields sharing one grid."""

    def __init__(self, entries=()):
        super().__init__(entries)
        if self:
            _common(self)


def _psd_power_trace(s, power):
    """``trace(s^power)`` for a stack of PSD matrices."""
    w = np.clip(np.linalg.eigvalsh(matalg.hermitize(s)), 0.0, None)
    return np.sum(w**power, axis=-1)


def lp_norm(f, p):
    """``(sum_cells vol * trace |f_c|^p)^{1/p}``; ``p = inf`` is the max operator norm."""
    if p < 1:
        raise ValueError(f"L_p exponent must be >= 1, got {p}")
    sv = matalg.singular_values(f.values)
    if np.isinf(p):
        return float(np.max(sv, initial=0.0))
    return float((f.volume * np.sum(sv**p)) ** (1.0 / p))


def distribution_lambda(f, t):
    """Trace of the spectral projection of ``|f|`` on ``(t, inf)``."""
    if t < 0:
        raise ValueError("threshold must be >= 0")
    sv = matalg.singular_values(f.values)
    return float(f.volume * np.count_nonzero(sv > t))


def weak_l1(f, t_samples=None):
    """``sup_t t * lambda_t(f)``.

    Without ``t_samples`` the supremum is evaluated exactly: it is attained
    as ``t`` increases to one of the singular values ``sigma``, where it
    equals ``sigma * vol * #{singular values >= sigma}``.
    """
    sv = matalg.singular_values(f.values).reshape(-1)
    if t_samples is not None:
        ts = np.asarray(t_samples, dtype=float)
        if ts.size == 0 or np.any(ts <= 0):
            raise ValueError("t_samples must be a nonempty list of positive reals")
        sv_sorted = np.sort(sv)
        above = sv.size - np.searchsorted(sv_sorted, ts, side="right")
        return float(np.max(ts * above) * f.volume)
    sv = np.sort(sv[sv > 0])[::-1]
    if sv.size == 0:
        return 0.0
    counts = np.arange(1, sv.size + 1)
    return float(np.max(sv * counts) * f.volume)


def cond_expectation(f, k):
    """Dyadic conditional expectation: average over level-``k`` cubes."""
    if k > f.level:
        raise ValueError(f"cannot take E_{k} of a field known only at level {f.level}")
    if k < 0:
        raise ValueError("level must be >= 0")
    if k == f.level:
        return f
    n, r, side = f.grid.n, 2 ** (f.level - k), 2**k
    shape = []
    for _ in range(n):
        shape += [side, r]
    arr = f.values.reshape(tuple(shape) + f.values.shape[1:])
    arr = arr.mean(axis=tuple(range(1, 2 * n, 2)))
    return OperatorField(f.grid, k, arr.reshape((-1,) + f.values.shape[1:]))


def mart_diff(f, k):
    """``E_k f - E_{k-1} f`` as a level-``k`` field."""
    if k < 1:
        raise ValueError("martingale differences start at level 1")
    return cond_expectation(f, k) - cond_expectation(f, k - 1)


def _column_square(fields):
    fields, _ = _common(fields)
    return sum(matalg.adjoint(x.values) @ x.values for x in fields), fields[0].volume


def _row_square(fields):
    fields, _ = _common(fields)
    return sum(x.values @ matalg.adjoint(x.values) for x in fields), fields[0].volume


def _sqrt_norm(s, vol, p):
    if p < 1:
        raise ValueError(f"L_p exponent must be >= 1, got {p}")
    if np.isinf(p):
        return float(np.sqrt(max(np.max(np.linalg.eigvalsh(matalg.hermitize(s))), 0.0)))
    return float((vol * np.sum(_psd_power_trace(s, p / 2.0))) ** (1.0 / p))


def seq_column_norm(x, p):
    """``|| (sum_k x_k* x_k)^{1/2} ||_p``."""
    s, vol = _column_square(x)
    return _sqrt_norm(s, vol, p)


def seq_row_norm(x, p):
    """``|| (sum_k x_k x_k*)^{1/2} ||_p``."""
    s, vol = _row_square(x)
    return _sqrt_norm(s, vol, p)


def seq_rc_norm(x, p):
    """``max`` of the column and row norms; only defined here for ``p >= 2``."""
    if p < 2:
        raise ValueError("RC_p norm for p < 2 needs an infimum over splittings; not supported")
    return max(seq_column_norm(x, p), seq_row_norm(x, p))


def inner_product(a, b):
    """``sum_cells vol * trace(a* b)``."""
    av, bv, lev = a._aligned(b)
    return complex(np.sum(np.conj(av) * bv) * a.grid.volume(lev))


def dilated_join(level_fields, dilation, grid):
    """Finest-level join of ``A_Q 1_{dQ}`` over every cube ``Q`` of every given level.

    ``level_fields`` maps a level ``k`` to a projection field at that level.
    The join of projections is the range projection of their sum, and the
    sum over cubes ``Q`` whose ``d``-dilation contains a cell is a clipped
    box sum over level-``k`` neighbours.
    """
    if dilation < 1 or dilation % 2 == 0:
        raise ValueError("dilation must be an odd positive integer")
    radius = (dilation - 1) // 2
    total = np.zeros((grid.num_cells(), grid.d, grid.d), dtype=complex)
    for k, field in level_fields.items():
        if field.level != k:
            raise ValueError(f"field for level {k} is stored at level {field.level}")
        spread = box_sum(field.values, grid.n, k, radius)
        total += OperatorField(grid, k, spread).finest().values
    joined = matalg.range_projection(total, matalg.JOIN_RANK_TOL)
    return OperatorField(grid, grid.K, joined)
