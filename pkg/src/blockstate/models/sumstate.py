"""Sum-state classifier: class ``l`` is represented by the superposition of its training images."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..embedding import log_overlap_parts, combine_parts
from ..errors import ConfigurationError, DimensionError
from .kernels import LOG_FLOOR, LOG_TINY


def _logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m_safe), axis=axis, keepdims=True)) + m_safe
    return np.squeeze(out, axis=axis)


@dataclass
class SumStateModel:
    """``states[l]`` holds the embedded training images of class ``l``, shape ``(count, n_sites, 2)``."""

    states: list[np.ndarray]
    image_height: int
    image_width: int
    workers: int = 1
    kind: str = field(default="sumstate", init=False)

    @classmethod
    def from_images(cls, states: np.ndarray, labels: np.ndarray, dims, n_classes: int = 10, workers: int = 1):
        states = np.asarray(states, dtype=np.float64)
        labels = np.asarray(labels)
        per_class = [states[labels == c] for c in range(n_classes)]
        return cls(states=per_class, image_height=dims[0], image_width=dims[1], workers=workers)

    @property
    def n_classes(self) -> int:
        return len(self.states)

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {f"class_{c}": s for c, s in enumerate(self.states)}

    def _check(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        if states.ndim == 2:
            states = states[None]
        n_sites = self.image_height * self.image_width
        if states.shape[1:] != (n_sites, 2):
            raise DimensionError(f"expected {n_sites} sites, got shape {states.shape[1:]}")
        return states

    def log_overlaps(self, states: np.ndarray, label: int) -> np.ndarray:
        """``log <x|Sigma_l>`` via log-sum-exp over the stored images of class ``label``."""
        stored = self.states[label]
        if len(stored) == 0:
            raise ConfigurationError(f"class {label} has no stored images")
        log_terms = combine_parts(*log_overlap_parts(self._check(states), stored, workers=self.workers))
        return _logsumexp(log_terms, axis=1)

    def log_sq_overlaps(self, states: np.ndarray) -> np.ndarray:
        states = self._check(states)
        out = np.empty((states.shape[0], self.n_classes))
        for label in range(self.n_classes):
            lse = self.log_overlaps(states, label)
            out[:, label] = np.where(lse < LOG_TINY, LOG_FLOOR, 2.0 * lse)
        return out

    def log_norms(self) -> np.ndarray:
        """``log <Sigma_l|Sigma_l>`` from the full overlap matrix of each class."""
        out = np.empty(self.n_classes)
        for label, stored in enumerate(self.states):
            if len(stored) == 0:
                raise ConfigurationError(f"class {label} has no stored images")
            log_x = combine_parts(*log_overlap_parts(stored, workers=self.workers))
            out[label] = _logsumexp(log_x.ravel(), axis=0)
        return out

    def header(self) -> dict:
        return {
            "kind": self.kind,
            "image_height": self.image_height,
            "image_width": self.image_width,
            "n_classes": self.n_classes,
        }
