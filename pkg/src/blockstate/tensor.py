"""Dense tensor primitives.

Tensors are plain ``float64`` numpy arrays in C (row-major) order. This module
adds the axis-pair contraction used throughout the package plus the two
factorizations the Schmidt machinery relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, InputError, NotPSDError, NumericalError

DEFAULT_TOL = 1e-12


def as_tensor(data) -> np.ndarray:
    """Return ``data`` as a C-ordered float64 array with every axis length >= 1."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if any(d < 1 for d in arr.shape):
        raise DimensionError(f"all axis lengths must be >= 1, got shape {arr.shape}")
    return arr


def contract(
    a: np.ndarray, axes_a: Sequence[int], b: np.ndarray, axes_b: Sequence[int]
) -> np.ndarray:
    """Sum over paired axes of ``a`` and ``b``.

    The result carries the unpaired axes of ``a`` (in order) followed by the
    unpaired axes of ``b``.

    Raises:
        DimensionError: if the axis lists differ in length, or a paired axis
            pair has different lengths.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    axes_a = [int(ax) for ax in axes_a]
    axes_b = [int(ax) for ax in axes_b]
    if len(axes_a) != len(axes_b):
        raise DimensionError(
            f"axes_a has {len(axes_a)} entries but axes_b has {len(axes_b)}"
        )
    for ia, ib in zip(axes_a, axes_b):
        if not (-a.ndim <= ia < a.ndim) or not (-b.ndim <= ib < b.ndim):
            raise DimensionError(f"axis pair ({ia}, {ib}) out of range for ranks {a.ndim}, {b.ndim}")
        if a.shape[ia] != b.shape[ib]:
            raise DimensionError(
                f"axis pair (a[{ia}], b[{ib}]) has mismatched lengths "
                f"{a.shape[ia]} != {b.shape[ib]}"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


@dataclass(frozen=True)
class SVDResult:
    """Thin SVD ``m = u @ diag(s) @ vt`` with ``s`` sorted descending."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.vt


def svd(m: np.ndarray) -> SVDResult:
    """Thin singular value decomposition of a rank-2 tensor.

    ``k = min(rows, cols)`` singular triplets are returned. LAPACK
    non-convergence is raised as :class:`NumericalError` rather than being
    truncated away.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"svd needs a rank-2 tensor, got rank {m.ndim}")
    if not np.all(np.isfinite(m)):
        raise InputError("svd input has non-finite entries")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return SVDResult(u=u, s=s, vt=vt)


def eigh_truncated(
    x: np.ndarray, tol: float = DEFAULT_TOL
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric PSD matrix, keeping only the clearly positive part.

    Eigenvalues at or below ``tol * max(largest, 1)`` are discarded along with
    their eigenvectors, so the returned vectors form an isometry onto the
    numerical support of ``x``.

    Args:
        x: symmetric matrix, positive semi-definite up to ``-tol``.
        tol: relative truncation threshold.

    Returns:
        ``(eigvals, eigvecs)`` with eigvals descending and strictly positive,
        and ``eigvecs`` of shape ``(len(x), len(eigvals))``.

    Raises:
        InputError: ``x`` is not square or not symmetric to 1e-10.
        NotPSDError: an eigenvalue falls below the negative tolerance.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise InputError(f"eigh_truncated needs a square matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("eigh_truncated input has non-finite entries")
    scale = max(float(np.max(np.abs(x))), 1.0)
    if np.max(np.abs(x - x.T)) > 1e-10 * scale:
        raise InputError("matrix is not symmetric to 1e-10")
    try:
        w, v = np.linalg.eigh(x)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition did not converge: {exc}") from exc
    w = w[::-1]
    v = v[:, ::-1]
    cut = tol * max(float(w[0]), 1.0)
    if w[-1] < -cut:
        raise NotPSDError(f"eigenvalue {w[-1]:.3e} below -{cut:.3e}")
    keep = w > cut
    return np.ascontiguousarray(w[keep]), np.ascontiguousarray(v[:, keep])
