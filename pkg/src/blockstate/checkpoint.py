"""Versioned binary container for model parameters.

Layout (all integers little-endian)::

    8 bytes   magic  b"BLKSTATE"
    u32       format version (currently 1)
    u32       header length H in bytes
    H bytes   UTF-8 JSON header
    ...       parameter arrays, raw float64 little-endian, C order,
              concatenated in manifest order

The header holds the model metadata (``kind``, ``n``, ``chi``, image dims,
``seed``, and SBPS ``splice`` / ``boundary_dim``), an optional training
config and free-form extras, and ``arrays``: a list of
``{"name", "shape", "offset", "nbytes"}`` with offsets relative to the first
byte after the header. Loading reproduces every array bit for bit.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .dataset import tile
from .errors import CheckpointError, DataError
from .models import NNBPSModel, ProductStateModel, SBPSModel, SumStateModel

MAGIC = b"BLKSTATE"
VERSION = 1
_PREFIX = struct.Struct("<8sII")
_DTYPE = np.dtype("<f8")


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    """Write ``data`` to a temp file in the target directory, then rename it into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    except OSError as exc:
        raise DataError(f"cannot write to {directory}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode(model, train_config: dict | None = None, extra: dict | None = None) -> bytes:
    arrays = model.params
    manifest, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        raw = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "model": model.header(),
        "train_config": train_config,
        "extra": extra or {},
        "arrays": manifest,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(head)) + head + b"".join(chunks)


def save(path, model, train_config: dict | None = None, extra: dict | None = None) -> None:
    atomic_write(path, encode(model, train_config, extra))


def decode(data: bytes):
    """Inverse of :func:`encode`; returns ``(model, header)``."""
    if len(data) < _PREFIX.size:
        raise CheckpointError("checkpoint is truncated")
    magic, version, head_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _PREFIX.size + head_len
    if len(data) < start:
        raise CheckpointError("checkpoint header is truncated")
    try:
        header = json.loads(data[_PREFIX.size : start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    try:
        params = {}
        for entry in header["arrays"]:
            lo = start + entry["offset"]
            hi = lo + entry["nbytes"]
            if hi > len(data):
                raise CheckpointError(f"array {entry['name']} is truncated")
            arr = np.frombuffer(data[lo:hi], dtype=_DTYPE).reshape(entry["shape"])
            params[entry["name"]] = arr.astype(np.float64)
        return _build(header["model"], params), header
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc!r}") from exc


def load(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode(data)


def _build(meta: dict, params: dict[str, np.ndarray]):
    kind = meta.get("kind")
    dims = (meta["image_height"], meta["image_width"])
    if kind == "sumstate":
        states = [params[f"class_{c}"] for c in range(meta["n_classes"])]
        return SumStateModel(states=states, image_height=dims[0], image_width=dims[1])
    common = dict(
        layout=tile(dims, meta["n"]),
        chi=meta["chi"],
        params=params,
        seed=meta["seed"],
        n_classes=meta["n_classes"],
    )
    if kind == "nnbps":
        return NNBPSModel(**common)
    if kind == "product":
        return ProductStateModel(**common)
    if kind == "sbps":
        return SBPSModel(**common, splice=meta["splice"], boundary_dim=meta["boundary_dim"])
    raise CheckpointError(f"unknown model kind {kind!r}")
