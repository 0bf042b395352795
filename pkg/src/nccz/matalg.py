"""Finite-dimensional stand-in for the von Neumann algebra: d x d complex matrices.

Every function accepts a single matrix or a stack ``(..., d, d)`` and acts
on the trailing two axes, so fields of matrices can be processed in one
call. The trace is the ordinary (unnormalised) matrix trace.
"""
from __future__ import annotations

import numpy as np

HERMITIAN_TOL = 1e-12
SPECTRAL_TOL = 1e-9
JOIN_RANK_TOL = 1e-8


def adjoint(a):
    return np.conj(np.swapaxes(a, -1, -2))


def hermitize(a):
    """Return ``(a + a*) / 2``."""
    a = np.asarray(a)
    return 0.5 * (a + adjoint(a))


def _check_square(a):
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")


def is_hermitian(a, tol=HERMITIAN_TOL):
    a = np.asarray(a)
    _check_square(a)
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    return bool(np.max(np.abs(a - adjoint(a)), initial=0.0) <= tol * scale * a.shape[-1])


def eig_hermitian(a, tol=HERMITIAN_TOL):
    """Eigenvalues (ascending) and unitary eigenvectors of a Hermitian matrix.

    Raises ValueError when ``a`` is not Hermitian within ``tol`` relative
    to its largest entry.
    """
    a = np.asarray(a)
    _check_square(a)
    if not is_hermitian(a, tol):
        raise ValueError("matrix is not Hermitian within tolerance")
    return np.linalg.eigh(hermitize(a))


def apply_function(a, fn):
    """Hermitian functional calculus ``fn(a)``."""
    w, u = eig_hermitian(a)
    return (u * fn(w)[..., None, :]) @ adjoint(u)


def spectral_projection(a, t, tol=SPECTRAL_TOL):
    """Projection onto the eigenspaces of ``a`` with eigenvalue in ``(-inf, t + tol]``.

    Ties at ``t`` are kept (closed threshold).
    """
    w, u = eig_hermitian(a)
    keep = (w <= t + tol).astype(u.dtype)
    return (u * keep[..., None, :]) @ adjoint(u)


def range_projection(a, tol=0.5):
    """Projection onto eigenvalues of the Hermitian ``a`` strictly above ``tol``."""
    w, u = eig_hermitian(a)
    keep = (w > tol).astype(u.dtype)
    return (u * keep[..., None, :]) @ adjoint(u)


def mat_abs(a):
    """``|a| = (a* a)^{1/2}``."""
    a = np.asarray(a)
    _check_square(a)
    return apply_function(adjoint(a) @ a, lambda w: np.sqrt(np.clip(w, 0.0, None)))


def singular_values(a):
    return np.linalg.svd(np.asarray(a), compute_uv=False)


def schatten_norm(a, p):
    """Schatten p-norm ``(sum sigma_i^p)^{1/p}``; ``p = inf`` gives the operator norm."""
    if p < 1:
        raise ValueError(f"Schatten exponent must be >= 1, got {p}")
    a = np.asarray(a)
    _check_square(a)
    s = singular_values(a)
    if np.isinf(p):
        return np.max(s, axis=-1)
    return np.sum(s**p, axis=-1) ** (1.0 / p)


def trace(a):
    return np.trace(np.asarray(a), axis1=-2, axis2=-1)


def is_projection(p, idem_tol=1e-10, sa_tol=HERMITIAN_TOL):
    p = np.asarray(p)
    _check_square(p)
    if np.max(np.abs(p - adjoint(p)), initial=0.0) > max(sa_tol, 1e-12) * p.shape[-1]:
        return False
    return bool(np.max(np.abs(p @ p - p), initial=0.0) <= idem_tol)


def proj_join(ps, dim=None, tol=JOIN_RANK_TOL):
    """Orthogonal projection onto the sum of the ranges of ``ps``.

    Computed as the range projection of ``sum(ps)`` with eigenvalue cutoff
    ``tol``. Stacks are joined along the first axis, so ``ps`` may be a list
    of matrices or a list of equally shaped stacks. An empty list gives the
    zero projection of size ``dim``.
    """
    ps = list(ps)
    if not ps:
        if dim is None:
            raise ValueError("dim is required to join an empty family")
        return np.zeros((dim, dim), dtype=complex)
    total = np.sum(np.stack([np.asarray(p, dtype=complex) for p in ps]), axis=0)
    return range_projection(total, tol)


def proj_complement(p):
    p = np.asarray(p)
    return np.eye(p.shape[-1], dtype=complex) - p


def opnorm(a):
    """Largest singular value."""
    return np.max(singular_values(a), axis=-1)


def lambda_max(a):
    """Largest eigenvalue of a Hermitian matrix (or stack)."""
    return np.linalg.eigvalsh(hermitize(a))[..., -1]


def lambda_min(a):
    return np.linalg.eigvalsh(hermitize(a))[..., 0]


def commutator(a, b):
    return a @ b - b @ a
