"""Pixel-to-qubit feature map.

A pixel value ``x`` in ``[0, 1]`` becomes the qubit ``(cos(pi x / 2), sin(pi x / 2))``.
Both components are evaluated as sines, ``cos(t) = sin(pi/2 - t)``, so white
and black pixels map to exactly ``(1, 0)`` and ``(0, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Image, ImageSet
from .errors import InputError

HALF_PI = 0.5 * np.pi


def _check_unit_interval(x: np.ndarray, name: str = "pixel") -> None:
    if x.size and not (np.all(x >= 0.0) and np.all(x <= 1.0)):
        raise InputError(f"{name} values must lie in [0, 1]")


@dataclass(frozen=True)
class ProductState:
    """Per-site qubit amplitudes of an embedded image, shape ``(n_sites, 2)``."""

    site_vectors: np.ndarray

    @property
    def n_sites(self) -> int:
        return self.site_vectors.shape[0]

    def __len__(self) -> int:
        return self.n_sites


def embed_pixels(x) -> np.ndarray:
    """Vectorised feature map: appends a trailing axis of length 2."""
    x = np.asarray(x, dtype=np.float64)
    _check_unit_interval(x)
    return np.stack([np.sin(HALF_PI * (1.0 - x)), np.sin(HALF_PI * x)], axis=-1)


def embed_pixel(x: float) -> np.ndarray:
    return embed_pixels(np.float64(x))


def embed_image(img: Image) -> ProductState:
    """Row-major product state of one image."""
    return ProductState(embed_pixels(np.ravel(img.pixels)))


def embed_images(images: ImageSet | np.ndarray) -> np.ndarray:
    """Embed a batch: ``(count, H, W)`` pixels -> ``(count, H * W, 2)`` amplitudes."""
    pixels = images.pixels if isinstance(images, ImageSet) else np.asarray(images, dtype=np.float64)
    return embed_pixels(pixels.reshape(pixels.shape[0], -1))


def pixel_overlap(a, b) -> np.ndarray | float:
    """Inner product of two embedded pixels, ``cos(pi (a - b) / 2)``.

    Non-negative on ``[0, 1]``; exactly 0 for a white/black pair and exactly 1
    for equal pixels.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_unit_interval(a)
    _check_unit_interval(b)
    out = np.sin(HALF_PI * (1.0 - np.abs(a - b)))
    return float(out) if out.ndim == 0 else out


def log_pixel_overlap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``log pixel_overlap(a, b)`` without range checks; ``-inf`` for orthogonal pairs."""
    with np.errstate(divide="ignore"):
        return np.log(np.sin(HALF_PI * (1.0 - np.abs(a - b))))


PIXEL_LEVELS = 255


def is_quantized(pixels: np.ndarray, levels: int = PIXEL_LEVELS) -> bool:
    """True if every pixel is ``k / levels`` for an integer ``k`` (8-bit image data)."""
    scaled = np.asarray(pixels, dtype=np.float64) * levels
    return bool(np.all(np.abs(scaled - np.rint(scaled)) < 1e-9))


def _log_site_overlap_lut(levels: int = PIXEL_LEVELS) -> np.ndarray:
    """``log cos(pi k / (2 levels))`` for ``k = 0..levels``, with the orthogonal entry set to 0."""
    k = np.arange(levels + 1)
    lut = np.zeros(levels + 1)
    lut[:-1] = np.log(np.sin(HALF_PI * (1.0 - k[:-1] / levels)))
    return lut


def _row_chunks(n_rows: int, row_cost: int, budget: int) -> list[tuple[int, int]]:
    step = max(1, budget // max(1, row_cost))
    return [(s, min(s + step, n_rows)) for s in range(0, n_rows, step)]


def _run(chunks, work, workers: int) -> None:
    if workers > 1 and len(chunks) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda c: work(*c), chunks))
    else:
        for c in chunks:
            work(*c)


def log_overlap_parts(
    a: np.ndarray, b: np.ndarray | None = None, workers: int = 1, budget: int = 1 << 22
) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise overlaps of product states, split into a finite log part and a zero count.

    ``a`` is ``(P, n_sites, 2)``, ``b`` is ``(Q, n_sites, 2)`` (``b=None`` means
    ``a`` against itself, computing one triangle only). Returns
    ``(finite, zeros)``, both ``(P, Q)``: ``finite`` sums ``log <a_p|b_q>_j``
    over the sites where the site overlap is non-zero and ``zeros`` counts the
    sites where it is exactly zero. The full overlap is ``exp(finite)`` when
    ``zeros == 0`` and 0 otherwise. Every entry is reduced in site order, so
    the result does not depend on chunking or threads.
    """
    a = np.asarray(a, dtype=np.float64)
    sym = b is None
    b = a if sym else np.asarray(b, dtype=np.float64)
    if a.ndim != 3 or a.shape[1:] != b.shape[1:] or a.shape[-1] != 2:
        raise InputError(f"incompatible product-state shapes {a.shape} and {b.shape}")
    finite = np.zeros((a.shape[0], b.shape[0]))
    zeros = np.zeros((a.shape[0], b.shape[0]))

    def work(start: int, stop: int) -> None:
        lo = start if sym else 0
        bb = b[lo:]
        dots = a[start:stop, None, :, 0] * bb[None, :, :, 0]
        dots += a[start:stop, None, :, 1] * bb[None, :, :, 1]
        if np.any(dots < 0):
            raise InputError("site overlaps must be non-negative")
        dead = dots == 0
        dots[dead] = 1.0
        np.log(dots, out=dots)
        finite[start:stop, lo:] = dots.sum(axis=-1)
        zeros[start:stop, lo:] = dead.sum(axis=-1)

    _run(_row_chunks(a.shape[0], b.shape[0] * a.shape[1], budget), work, workers)
    if sym:
        _mirror(finite)
        _mirror(zeros)
    return finite, zeros


def log_overlap_parts_pixels(
    pa: np.ndarray,
    pb: np.ndarray | None = None,
    workers: int = 1,
    budget: int = 1 << 22,
    levels: int = PIXEL_LEVELS,
) -> tuple[np.ndarray, np.ndarray]:
    """Same as :func:`log_overlap_parts`, for 8-bit images given as pixel arrays.

    ``pa`` is ``(P, n_sites)`` with values ``k / levels``. Site overlaps depend
    only on ``|k_a - k_b|``, so they come from a lookup table; zero overlaps
    (a white pixel against a black one) are counted with indicator products.
    """
    pa = np.asarray(pa, dtype=np.float64)
    sym = pb is None
    pb = pa if sym else np.asarray(pb, dtype=np.float64)
    if pa.ndim != 2 or pa.shape[1] != pb.shape[1]:
        raise InputError(f"incompatible pixel shapes {pa.shape} and {pb.shape}")
    _check_unit_interval(pa)
    _check_unit_interval(pb)
    ka = np.rint(pa * levels).astype(np.int16)
    kb = ka if sym else np.rint(pb * levels).astype(np.int16)
    lut = _log_site_overlap_lut(levels)
    finite = np.zeros((pa.shape[0], pb.shape[0]))

    def work(start: int, stop: int) -> None:
        lo = start if sym else 0
        d = np.abs(ka[start:stop, None, :] - kb[None, lo:, :])
        finite[start:stop, lo:] = lut[d].sum(axis=-1)

    _run(_row_chunks(pa.shape[0], pb.shape[0] * pa.shape[1], budget), work, workers)
    if sym:
        _mirror(finite)
    white_a, black_a = (ka == 0).astype(np.float64), (ka == levels).astype(np.float64)
    white_b, black_b = (kb == 0).astype(np.float64), (kb == levels).astype(np.float64)
    zeros = white_a @ black_b.T + black_a @ white_b.T
    return finite, zeros


def _mirror(m: np.ndarray) -> None:
    """Copy the upper triangle onto the lower one, in place."""
    il = np.tril_indices(m.shape[0], -1)
    m[il] = m.T[il]


def combine_parts(finite: np.ndarray, zeros: np.ndarray) -> np.ndarray:
    """``log`` of the overlaps described by ``(finite, zeros)``; ``-inf`` where zeros > 0."""
    return np.where(zeros > 0, -np.inf, finite)


def log_overlap_matrix(a: np.ndarray, b: np.ndarray | None = None, workers: int = 1) -> np.ndarray:
    """``log <a_p|b_q>`` for two sets of product states (``-inf`` for orthogonal pairs)."""
    return combine_parts(*log_overlap_parts(a, b, workers=workers))
