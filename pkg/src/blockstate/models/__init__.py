"""Classifier states ``|T_l>`` and the scores derived from them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import BlockLayout, tile
from ..errors import ConfigurationError
from .base import N_CLASSES, TensorNetworkModel
from .kernels import LOG_FLOOR
from .nnbps import NNBPSModel
from .sbps import SBPSModel, snake_order
from .sumstate import SumStateModel

MODEL_KINDS = ("nnbps", "sbps", "product", "sumstate")

# lower end of the uniform draw for tensor entries; the upper end is 1
INIT_RANGES = {"positive": 0.0, "symmetric": -1.0}


@dataclass
class ProductStateModel(NNBPSModel):
    """Unentangled baseline: an NNBPS with 1x1 blocks (two amplitudes per site and class)."""

    kind: str = field(default="product", init=False)


def init_model(
    kind: str,
    layout: BlockLayout,
    chi: int = 2,
    seed: int = 0,
    n_classes: int = N_CLASSES,
    init: str = "positive",
    **options,
) -> TensorNetworkModel:
    """Pseudo-random model with every block state normalised to 1 (so ``log Z_l`` = 0).

    Tensor entries are drawn i.i.d. uniform on [0, 1] (``init="positive"``)
    or [-1, 1] (``init="symmetric"``) from ``seed``, then each block is
    rescaled to unit norm. Non-negative entries keep every initial overlap
    positive, so no block starts near a sign cancellation. ``options`` go to
    the SBPS constructor (``splice``, ``boundary_dim``).
    """
    if init not in INIT_RANGES:
        raise ConfigurationError(f"unknown init {init!r}; expected one of {tuple(INIT_RANGES)}")
    low = INIT_RANGES[init]
    rng = np.random.default_rng([seed, 0])
    if kind == "nnbps":
        return NNBPSModel.random(layout, chi, rng, n_classes=n_classes, seed=seed, low=low)
    if kind == "product":
        if layout.n != 1:
            layout = tile((layout.image_height, layout.image_width), 1)
        return ProductStateModel.random(layout, 1, rng, n_classes=n_classes, seed=seed, low=low)
    if kind == "sbps":
        return SBPSModel.random(layout, chi, rng, n_classes=n_classes, seed=seed, low=low, **options)
    raise ConfigurationError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS[:3]}")


def log_overlap(model, state: np.ndarray, label: int) -> float:
    """``log |<T_label|x>|^2`` for a single embedded image ``(n_sites, 2)``."""
    return float(model.log_sq_overlaps(np.asarray(state)[None])[0, label])


def log_norm(model, label: int) -> float:
    """``log <T_label|T_label>``."""
    return float(model.log_norms()[label])


def classify(scores: np.ndarray) -> np.ndarray | int:
    """Arg-max of the log-scores over the class axis; the smallest label wins ties."""
    scores = np.asarray(scores)
    out = np.argmax(scores, axis=-1)
    return int(out) if out.ndim == 0 else out


__all__ = [
    "LOG_FLOOR",
    "INIT_RANGES",
    "MODEL_KINDS",
    "N_CLASSES",
    "NNBPSModel",
    "ProductStateModel",
    "SBPSModel",
    "SumStateModel",
    "TensorNetworkModel",
    "classify",
    "init_model",
    "log_norm",
    "log_overlap",
    "snake_order",
]
