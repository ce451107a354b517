"""Schmidt spectra of sum states of product states, from region Gram matrices.

For ``|Sigma> = sum_i |x_A^(i)>|x_B^(i)>`` the Gram matrices
``(X_R)_ij = <x_R^(i)|x_R^(j)>`` fix the state up to local isometries.
Writing ``X_R = U_R D_R U_R^T`` (vanishing eigenvalues dropped), the matrix
``M = D_A^{1/2} U_A^T U_B D_B^{1/2}`` holds the coefficients of ``|Sigma>`` in
orthonormal bases of the two spans, so its singular values are the
(unnormalised) Schmidt values. The cost is cubic in the number of states and
linear in the number of sites.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import (
    DEFAULT_WINDOW,
    ImageSet,
    Partition,
    central_window_squares,
    top_half_partition,
)
from .embedding import (
    combine_parts,
    embed_images,
    is_quantized,
    log_overlap_parts,
    log_overlap_parts_pixels,
)
from .errors import ConfigurationError, DimensionError, InputError, NumericalError
from .tensor import DEFAULT_TOL, eigh_truncated, svd

MAX_DENSE_SITES = 20


@dataclass(frozen=True)
class GramPair:
    x_a: np.ndarray
    x_b: np.ndarray

    @property
    def n_states(self) -> int:
        return self.x_a.shape[0]

    def restrict(self, count: int) -> "GramPair":
        """Grams of the first ``count`` states."""
        return GramPair(self.x_a[:count, :count], self.x_b[:count, :count])

    def swapped(self) -> "GramPair":
        return GramPair(self.x_b, self.x_a)


@dataclass(frozen=True)
class SchmidtResult:
    """Normalised Schmidt values (descending), with the factorisation kept for the Schmidt vectors."""

    lambdas: np.ndarray
    rank: int
    entropy: float
    ranks_ab: tuple[int, int]
    raw_norm_sq: float  # <Sigma|Sigma> before normalisation
    tol: float
    _factors: tuple | None = None

    @property
    def lambda_sq(self) -> np.ndarray:
        return self.lambdas**2


def _as_states(states) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 3 or states.shape[-1] != 2:
        raise DimensionError(f"expected states of shape (count, n_sites, 2), got {states.shape}")
    return states


def _check_partition(partition: Partition, n_sites: int) -> None:
    if partition.n_sites != n_sites:
        raise DimensionError(f"partition covers {partition.n_sites} sites, states have {n_sites}")


def gram_matrices(states, partition: Partition, workers: int = 1) -> GramPair:
    """Region-restricted overlap matrices of a list of product states.

    Each entry is a product of per-site overlaps, accumulated as a sum of logs
    and exponentiated once; any exactly orthogonal site makes the entry 0.
    """
    states = _as_states(states)
    _check_partition(partition, states.shape[1])
    grams = []
    for region in (partition.region_a, partition.region_b):
        finite, zeros = log_overlap_parts(states[:, region], workers=workers)
        grams.append(np.exp(combine_parts(finite, zeros)))
    return GramPair(*grams)


def gram_matrices_pixels(pixels: np.ndarray, partition: Partition, workers: int = 1) -> GramPair:
    """:func:`gram_matrices` for 8-bit images given as ``(count, n_sites)`` pixel rows."""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(len(pixels), -1)
    _check_partition(partition, pixels.shape[1])
    grams = []
    for region in (partition.region_a, partition.region_b):
        finite, zeros = log_overlap_parts_pixels(pixels[:, region], workers=workers)
        grams.append(np.exp(combine_parts(finite, zeros)))
    return GramPair(*grams)


def schmidt_from_grams(grams: GramPair, tol: float = DEFAULT_TOL) -> SchmidtResult:
    """Schmidt values and entanglement entropy of ``sum_i |x_A^(i)>|x_B^(i)>``.

    Args:
        grams: the two region Gram matrices.
        tol: relative eigenvalue cut applied to both Grams; Schmidt values with
            ``lambda^2 <= tol * lambda_max^2`` are dropped as well.

    Raises:
        NumericalError: a Gram matrix or ``M`` vanishes entirely.
        NotPSDError: a Gram matrix has an eigenvalue below ``-tol``.
    """
    if grams.x_a.shape != grams.x_b.shape:
        raise DimensionError(f"Gram shapes differ: {grams.x_a.shape} vs {grams.x_b.shape}")
    w_a, u_a = eigh_truncated(grams.x_a, tol)
    w_b, u_b = eigh_truncated(grams.x_b, tol)
    if w_a.size == 0 or w_b.size == 0:
        raise NumericalError("degenerate input: a region Gram matrix is zero")
    sa, sb = np.sqrt(w_a), np.sqrt(w_b)
    m = (sa[:, None] * (u_a.T @ u_b)) * sb[None, :]
    dec = svd(m)
    s = dec.s
    if s.size == 0 or s[0] <= 0:
        raise NumericalError("degenerate input: the sum state vanishes")
    keep = s**2 > tol * s[0] ** 2
    s = s[keep]
    norm_sq = float(np.sum(s**2))
    lambdas = s / np.sqrt(norm_sq)
    factors = (u_a, sa, dec.u[:, keep], u_b, sb, dec.vt[keep].T)
    return SchmidtResult(
        lambdas=lambdas,
        rank=int(lambdas.size),
        entropy=entropy(lambdas),
        ranks_ab=(int(w_a.size), int(w_b.size)),
        raw_norm_sq=norm_sq,
        tol=tol,
        _factors=factors,
    )


def schmidt_vectors(grams: GramPair, result: SchmidtResult) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of the Schmidt vectors in the spanning sets ``{|x_A^(i)>}``, ``{|x_B^(i)>}``.

    Returns:
        ``(c_a, c_b)``, each ``(n_states, rank)``, with
        ``|phi_alpha^A> = sum_i c_a[i, alpha] |x_A^(i)>`` and likewise for B.
        They satisfy ``c_a.T @ X_A @ c_a = I``.
    """
    if result._factors is None:
        raise ConfigurationError("result carries no factorisation")
    u_a, sa, v_a, u_b, sb, v_b = result._factors
    if u_a.shape[0] != grams.n_states:
        raise DimensionError("result does not belong to these Gram matrices")
    c_a = (u_a / sa[None, :]) @ v_a
    c_b = (u_b / sb[None, :]) @ v_b
    return c_a, c_b


def entropy(lambdas) -> float:
    """``-sum lambda^2 log lambda^2`` in nats, with ``0 log 0 = 0``.

    Raises:
        InputError: ``sum lambda^2`` differs from 1 by more than 1e-8.
    """
    p = np.asarray(lambdas, dtype=np.float64) ** 2
    if abs(p.sum() - 1.0) > 1e-8:
        raise InputError(f"Schmidt values are not normalised (sum of squares {p.sum():.12g})")
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def dense_oracle(states, partition: Partition) -> SchmidtResult:
    """Schmidt decomposition by building the full ``2^N`` vector (small ``N`` only)."""
    states = _as_states(states)
    n_sites = states.shape[1]
    _check_partition(partition, n_sites)
    if n_sites > MAX_DENSE_SITES:
        raise ConfigurationError(f"dense oracle refuses {n_sites} > {MAX_DENSE_SITES} sites")
    order = np.concatenate([partition.region_a, partition.region_b])
    total = np.zeros(2**n_sites)
    for state in states:
        vec = np.ones(1)
        for site in order:
            vec = np.kron(vec, state[site])
        total += vec
    mat = total.reshape(2 ** partition.region_a.size, 2 ** partition.region_b.size)
    s = np.linalg.svd(mat, compute_uv=False)
    norm_sq = float(np.sum(s**2))
    if norm_sq == 0:
        raise NumericalError("degenerate input: the sum state vanishes")
    lambdas = s / np.sqrt(norm_sq)
    return SchmidtResult(
        lambdas=lambdas,
        rank=int(np.count_nonzero(lambdas**2 > DEFAULT_TOL * lambdas[0] ** 2)),
        entropy=entropy(lambdas),
        ranks_ab=(0, 0),
        raw_norm_sq=norm_sq,
        tol=0.0,
    )


# --- scans on image sets ---------------------------------------------------------------


def _class_pixels(images: ImageSet, count: int) -> np.ndarray:
    if count > len(images):
        raise ConfigurationError(f"{count} images requested, only {len(images)} available")
    return images.pixels[:count].reshape(count, -1)


def _region_parts(pixels: np.ndarray, region: np.ndarray, workers: int):
    if is_quantized(pixels):
        return log_overlap_parts_pixels(pixels[:, region], workers=workers)
    return log_overlap_parts(embed_images(pixels[:, region]), workers=workers)


@dataclass(frozen=True)
class SpectrumRow:
    n_sigma: int
    result: SchmidtResult


def half_partition_scan(
    images: ImageSet,
    sizes: Sequence[int],
    tol: float = DEFAULT_TOL,
    partition: Partition | None = None,
    workers: int = 1,
) -> list[SpectrumRow]:
    """Schmidt spectra of the sum of the first ``N_Sigma`` images, for each size.

    Images are taken in the order given (file order). The Grams are computed
    once for the largest size; smaller sizes use their leading blocks.
    """
    sizes = [int(s) for s in sizes]
    if not sizes or min(sizes) < 1:
        raise ConfigurationError("sizes must be positive")
    pixels = _class_pixels(images, max(sizes))
    if partition is None:
        partition = top_half_partition(images.dims)
    _check_partition(partition, pixels.shape[1])
    grams = GramPair(
        *(np.exp(combine_parts(*_region_parts(pixels, r, workers))) for r in (partition.region_a, partition.region_b))
    )
    return [SpectrumRow(n, schmidt_from_grams(grams.restrict(n), tol)) for n in sizes]


@dataclass(frozen=True)
class EntropyRow:
    L: int
    mean_S: float
    std_S: float
    n_partitions: int
    entropies: np.ndarray


def window_entropy_scan(
    images: ImageSet,
    n_sigma: int,
    Ls: Sequence[int],
    window: int = DEFAULT_WINDOW,
    tol: float = DEFAULT_TOL,
    workers: int = 1,
) -> list[EntropyRow]:
    """Mean entropy of every ``L x L`` square in the central window, per ``L``.

    The whole-image log-overlaps are computed once; the complement of each
    square then follows by subtracting the square's own contribution.
    """
    pixels = _class_pixels(images, n_sigma)
    all_sites = np.arange(pixels.shape[1])
    full_finite, full_zeros = _region_parts(pixels, all_sites, workers)
    rows = []
    for L in Ls:
        ents = []
        for part in central_window_squares(images.dims, window, L):
            fa, za = _region_parts(pixels, part.region_a, workers)
            x_a = np.exp(combine_parts(fa, za))
            x_b = np.exp(combine_parts(full_finite - fa, full_zeros - za))
            ents.append(schmidt_from_grams(GramPair(x_a, x_b), tol).entropy)
        ents = np.asarray(ents)
        rows.append(EntropyRow(int(L), float(ents.mean()), float(ents.std()), len(ents), ents))
    return rows
