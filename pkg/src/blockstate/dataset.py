"""IDX ingestion, block tilings and bipartitions of the pixel lattice.

Site indices are row-major: pixel ``(r, c)`` of an ``H x W`` image is site
``r * W + c``. Everything here works on that convention.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    BadMagicError,
    ConfigurationError,
    CountMismatchError,
    DataError,
    InputError,
    TruncatedFileError,
)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

SUPPORTED_BLOCK_SIZES = (1, 2, 3, 4)
DEFAULT_WINDOW = 10


@dataclass(frozen=True)
class Image:
    pixels: np.ndarray  # (height, width), values in [0, 1]
    label: int

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


class ImageSet(Sequence[Image]):
    """Array-backed sequence of :class:`Image`.

    ``pixels`` has shape ``(count, height, width)`` with values in ``[0, 1]``;
    ``labels`` is an integer array of length ``count``. Indexing with an
    integer gives an :class:`Image`, slicing or fancy indexing gives another
    :class:`ImageSet`.
    """

    def __init__(self, pixels: np.ndarray, labels: np.ndarray):
        pixels = np.asarray(pixels, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if pixels.ndim != 3:
            raise InputError(f"pixels must be (count, height, width), got {pixels.shape}")
        if labels.shape != (pixels.shape[0],):
            raise CountMismatchError(
                f"{pixels.shape[0]} images but labels have shape {labels.shape}"
            )
        if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
            raise InputError("pixel values must lie in [0, 1]")
        pixels.setflags(write=False)
        labels.setflags(write=False)
        self.pixels = pixels
        self.labels = labels

    @property
    def dims(self) -> tuple[int, int]:
        return self.pixels.shape[1], self.pixels.shape[2]

    def __len__(self) -> int:
        return self.pixels.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return Image(self.pixels[idx], int(self.labels[idx]))
        return ImageSet(self.pixels[idx], self.labels[idx])

    def __iter__(self) -> Iterator[Image]:
        for i in range(len(self)):
            yield self[i]

    def of_class(self, label: int, limit: int | None = None) -> "ImageSet":
        """Images with the given label, in file order."""
        idx = np.flatnonzero(self.labels == label)
        if limit is not None:
            idx = idx[:limit]
        return self[idx]

    def balanced(self, per_class: int, n_classes: int = 10) -> "ImageSet":
        """The first ``per_class`` images of every class, kept in file order."""
        idx = []
        for label in range(n_classes):
            found = np.flatnonzero(self.labels == label)[:per_class]
            if len(found) < per_class:
                raise ConfigurationError(
                    f"class {label} has only {len(found)} images, {per_class} requested"
                )
            idx.append(found)
        return self[np.sort(np.concatenate(idx))]


def _read_idx(path: str | os.PathLike, magic: int, ndim: int) -> tuple[tuple[int, ...], bytes]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError as exc:
        raise DataError(f"file not found: {path}") from exc
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    header = 4 + 4 * ndim
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: file shorter than the magic number")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagicError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims, dtype=np.int64))
    body = raw[header:]
    if len(body) < expected:
        raise TruncatedFileError(f"{path}: {len(body)} data bytes, expected {expected}")
    return dims, body[:expected]


def load_idx(images_path: str | os.PathLike, labels_path: str | os.PathLike) -> ImageSet:
    """Read an IDX image/label file pair (MNIST or Fashion-MNIST layout).

    Raw bytes are divided by 255.

    Raises:
        DataError: missing file.
        BadMagicError, TruncatedFileError, CountMismatchError: malformed input.
    """
    (count, rows, cols), img_bytes = _read_idx(images_path, IMAGES_MAGIC, 3)
    (n_labels,), lab_bytes = _read_idx(labels_path, LABELS_MAGIC, 1)
    if count != n_labels:
        raise CountMismatchError(f"{count} images but {n_labels} labels")
    pixels = np.frombuffer(img_bytes, dtype=np.uint8).reshape(count, rows, cols)
    labels = np.frombuffer(lab_bytes, dtype=np.uint8)
    return ImageSet(pixels / 255.0, labels.astype(np.int64))


def write_idx(images_path, labels_path, pixels_u8: np.ndarray, labels: np.ndarray) -> None:
    """Write an IDX pair; the inverse of :func:`load_idx` for byte-valued images."""
    pixels_u8 = np.asarray(pixels_u8, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    count, rows, cols = pixels_u8.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, count, rows, cols))
        fh.write(pixels_u8.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


@dataclass(frozen=True)
class BlockLayout:
    """Tiling of the (possibly cropped) lattice into ``n x n`` blocks.

    ``blocks[b]`` lists the site indices of block ``b`` in the *original*
    ``height x width`` image, row-major inside the block. Blocks are ordered
    row-major by block position.
    """

    image_height: int
    image_width: int
    grid_height: int
    grid_width: int
    n: int

    @property
    def blocks_down(self) -> int:
        return self.grid_height // self.n

    @property
    def blocks_across(self) -> int:
        return self.grid_width // self.n

    @property
    def n_blocks(self) -> int:
        return self.blocks_down * self.blocks_across

    @property
    def blocks(self) -> list[np.ndarray]:
        return list(self.block_sites())

    def block_sites(self) -> np.ndarray:
        """``(n_blocks, n * n)`` array of site indices."""
        n = self.n
        r = np.arange(self.grid_height).reshape(self.blocks_down, n)
        c = np.arange(self.grid_width).reshape(self.blocks_across, n)
        sites = r[:, None, :, None] * self.image_width + c[None, :, None, :]
        return sites.reshape(self.n_blocks, n * n)

    def gather(self, x: np.ndarray, axis: int = -2) -> np.ndarray:
        """Rearrange per-site data into blocks.

        The site axis ``axis`` of ``x`` (length ``height * width``) is replaced
        by three axes ``(n_blocks, n, n)``.
        """
        x = np.asarray(x)
        axis = axis % x.ndim
        if x.shape[axis] != self.image_height * self.image_width:
            raise InputError(
                f"expected {self.image_height * self.image_width} sites on axis {axis}, "
                f"got {x.shape[axis]}"
            )
        out = np.take(x, self.block_sites(), axis=axis)
        return out.reshape(*x.shape[:axis], self.n_blocks, self.n, self.n, *x.shape[axis + 1 :])


def tile(image_dims: tuple[int, int], n: int) -> BlockLayout:
    """Tile an image lattice into ``n x n`` blocks.

    Trailing rows and columns that do not fill a whole block are dropped, so a
    28 x 28 image with ``n = 3`` becomes a 27 x 27 lattice of 81 blocks.
    """
    if n not in SUPPORTED_BLOCK_SIZES:
        raise ConfigurationError(f"block size must be one of {SUPPORTED_BLOCK_SIZES}, got {n}")
    h, w = image_dims
    gh, gw = (h // n) * n, (w // n) * n
    if gh == 0 or gw == 0:
        raise ConfigurationError(f"image {h}x{w} is smaller than one {n}x{n} block")
    return BlockLayout(image_height=h, image_width=w, grid_height=gh, grid_width=gw, n=n)


@dataclass(frozen=True)
class Partition:
    region_a: np.ndarray  # sorted site indices
    region_b: np.ndarray

    @classmethod
    def from_region(cls, region_a: Sequence[int], n_sites: int) -> "Partition":
        a = np.unique(np.asarray(region_a, dtype=np.int64))
        if a.size == 0 or a.size >= n_sites or a[0] < 0 or a[-1] >= n_sites:
            raise ConfigurationError("region A must be a nonempty proper subset of the sites")
        mask = np.zeros(n_sites, dtype=bool)
        mask[a] = True
        return cls(region_a=a, region_b=np.flatnonzero(~mask))

    @property
    def n_sites(self) -> int:
        return self.region_a.size + self.region_b.size

    def swapped(self) -> "Partition":
        return Partition(region_a=self.region_b, region_b=self.region_a)


def top_half_partition(dims: tuple[int, int]) -> Partition:
    h, w = dims
    if h % 2:
        raise ConfigurationError(f"top/bottom split needs an even height, got {h}")
    return Partition.from_region(np.arange(h // 2 * w), h * w)


def window_origin(dims: tuple[int, int], window: int = DEFAULT_WINDOW) -> tuple[int, int]:
    """Top-left corner of the centred ``window x window`` region (rows/cols 9..18 for 28x28)."""
    h, w = dims
    if not (1 <= window <= min(h, w)):
        raise ConfigurationError(f"window {window} does not fit in {h}x{w}")
    return (h - window) // 2, (w - window) // 2


def square_partition(dims: tuple[int, int], top: int, left: int, size: int) -> Partition:
    h, w = dims
    rows = np.arange(top, top + size)
    cols = np.arange(left, left + size)
    return Partition.from_region((rows[:, None] * w + cols[None, :]).ravel(), h * w)


def central_square(dims: tuple[int, int], size: int, window: int = DEFAULT_WINDOW) -> Partition:
    """The ``size x size`` square at the middle of the central window."""
    if not (1 <= size <= window):
        raise ConfigurationError(f"square size must be in 1..{window}, got {size}")
    r0, c0 = window_origin(dims, window)
    off = (window - size) // 2
    return square_partition(dims, r0 + off, c0 + off, size)


def central_window_squares(
    dims: tuple[int, int], window: int = DEFAULT_WINDOW, L: int = 1
) -> list[Partition]:
    """Every ``L x L`` square inside the centred window, row-major by corner."""
    if not (1 <= L <= window):
        raise ConfigurationError(f"L must be in 1..{window}, got {L}")
    r0, c0 = window_origin(dims, window)
    return [
        square_partition(dims, r0 + dr, c0 + dc, L)
        for dr in range(window - L + 1)
        for dc in range(window - L + 1)
    ]
