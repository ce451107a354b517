"""Shared behaviour of the trainable block-product-state models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._jax import jnp
from ..dataset import BlockLayout
from ..errors import DegenerateModelError, DimensionError
from .jitcache import jitted
from .kernels import LOG_FLOOR

N_CLASSES = 10


@dataclass
class TensorNetworkModel:
    """Base for models whose parameters are a dict of float64 arrays.

    Every parameter array has the block index as its leading axis, so the
    parameters of block ``b`` are ``{k: v[b] for k, v in params.items()}``.

    Subclasses provide the jax-traceable ``block_terms_fn`` / ``block_log_norm_fn`` pair
    used both for evaluation and for differentiation.
    """

    layout: BlockLayout
    chi: int
    params: dict[str, np.ndarray]
    seed: int | None = None
    n_classes: int = N_CLASSES
    kind: str = field(default="", init=False)

    # --- to be provided by subclasses -------------------------------------
    def static_config(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def block_terms_fn(params, xb, **static):
        """Per-block ``log |<psi_l^b|x_b>|^2``, shape ``(batch, n_blocks, n_classes)``."""
        raise NotImplementedError

    @staticmethod
    def block_log_norm_fn(params, **static):
        """Per-block ``log <psi_l^b|psi_l^b>``, shape ``(n_blocks, n_classes)``."""
        raise NotImplementedError

    # --- evaluation -----------------------------------------------------------
    def blocked_states(self, states: np.ndarray) -> np.ndarray:
        """``(batch, H*W, 2)`` embedded images -> ``(batch, n_blocks, n, n, 2)``."""
        states = np.asarray(states, dtype=np.float64)
        if states.ndim == 2:
            states = states[None]
        n_sites = self.layout.image_height * self.layout.image_width
        if states.shape[1:] != (n_sites, 2):
            raise DimensionError(
                f"model expects {n_sites} sites of dimension 2, got shape {states.shape[1:]}"
            )
        return self.layout.gather(states, axis=1)

    def block_log_sq_overlaps(self, states: np.ndarray) -> np.ndarray:
        xb = self.blocked_states(states)
        out = self._jit_block_terms()(self.jax_params(), jnp.asarray(xb))
        return np.asarray(out)

    def log_sq_overlaps(self, states: np.ndarray) -> np.ndarray:
        """``log |<T_l|x>|^2`` for every state and class, shape ``(batch, n_classes)``."""
        return self.block_log_sq_overlaps(states).sum(axis=1)

    def floored_blocks(self, states: np.ndarray) -> int:
        """How many block overlaps hit the log floor (diagnostic)."""
        return int(np.count_nonzero(self.block_log_sq_overlaps(states) == LOG_FLOOR))

    def block_log_norms(self) -> np.ndarray:
        return np.asarray(self._jit_block_norms()(self.jax_params()))

    def log_norms(self) -> np.ndarray:
        """``log Z_l`` for every class."""
        z = self.block_log_norms()
        if np.any(np.isneginf(z)):
            raise DegenerateModelError("a block state has exactly zero norm")
        return z.sum(axis=0)

    # --- plumbing ------------------------------------------------------------------
    def jax_params(self) -> dict:
        return {k: jnp.asarray(v) for k, v in self.params.items()}

    def _jit_block_terms(self):
        return jitted(type(self).block_terms_fn, self.static_config())

    def _jit_block_norms(self):
        return jitted(type(self).block_log_norm_fn, self.static_config())

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def copy(self) -> "TensorNetworkModel":
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.params = {k: v.copy() for k, v in self.params.items()}
        return clone

    def header(self) -> dict:
        """Structural metadata recorded in checkpoints."""
        return {
            "kind": self.kind,
            "n": self.layout.n,
            "chi": self.chi,
            "image_height": self.layout.image_height,
            "image_width": self.layout.image_width,
            "n_classes": self.n_classes,
            "seed": self.seed,
            **self.static_config(),
        }
