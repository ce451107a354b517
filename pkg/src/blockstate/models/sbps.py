"""Snake block product state.

Within each block the sites are visited left-to-right on even rows and
right-to-left on odd rows. Their MPS tensors are shared by all classes; the
class dependence sits in one extra label tensor spliced into the chain after
the first ``splice`` sites. The chain's two outer legs have length
``boundary_dim`` and are joined by a trace, so ``boundary_dim = 1`` is an
ordinary open chain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import BlockLayout
from ..errors import ConfigurationError
from .._jax import jnp
from .base import TensorNetworkModel
from .kernels import (
    boundary_identity,
    chain_product,
    floored_log_sq,
    rescale,
    transfer_left,
    transfer_right,
)


def snake_order(n: int) -> list[tuple[int, int]]:
    return [(i, j if i % 2 == 0 else n - 1 - j) for i in range(n) for j in range(n)]


def default_splice(n: int) -> int:
    return (n * n) // 2


def chain_dims(n_elements: int, chi: int, boundary_dim: int) -> list[int]:
    """Bond lengths of a chain of ``n_elements`` tensors, outer legs included."""
    return [boundary_dim] + [chi] * (n_elements - 1) + [boundary_dim]


def site_key(k: int) -> str:
    return f"site_{k}"


@dataclass
class SBPSModel(TensorNetworkModel):
    """Parameters: ``site_k`` of shape ``(n_blocks, 2, left, right)`` for chain position ``k``
    and ``label`` of shape ``(n_blocks, left, right, n_classes)``."""

    splice: int = 0
    boundary_dim: int = 1
    kind: str = field(default="sbps", init=False)

    def static_config(self) -> dict:
        return {"n": self.layout.n, "splice": self.splice}

    def header(self) -> dict:
        return {**super().header(), "boundary_dim": self.boundary_dim}

    @staticmethod
    def block_terms_fn(params, xb, *, n, splice):
        order = snake_order(n)
        mats = [
            jnp.einsum("kpab,zkp->zkab", params[site_key(k)], xb[:, :, i, j, :])
            for k, (i, j) in enumerate(order)
        ]
        label = params["label"]
        batch = xb.shape[:2]
        b_left = label.shape[1] if splice == 0 else mats[0].shape[-2]
        b_right = label.shape[2] if splice == len(order) else mats[-1].shape[-1]
        if splice > 0:
            left, ls_left = chain_product(mats[:splice])
        else:
            left = jnp.broadcast_to(jnp.eye(b_left), batch + (b_left, b_left))
            ls_left = jnp.zeros(batch)
        if splice < len(order):
            right, ls_right = chain_product(mats[splice:])
        else:
            right = jnp.broadcast_to(jnp.eye(b_right), batch + (b_right, b_right))
            ls_right = jnp.zeros(batch)
        value = jnp.einsum("zkad,kdel,zkea->zkl", left, label, right)
        log_scale = (ls_left + ls_right)[..., None]
        return floored_log_sq(value, log_scale)

    @staticmethod
    def block_log_norm_fn(params, *, n, splice):
        n_sites = n * n
        label = params["label"]
        n_blocks = label.shape[0]
        b = params[site_key(0)].shape[2] if splice > 0 else label.shape[1]

        env_l = boundary_identity((n_blocks,), b)
        ls = jnp.zeros(n_blocks)
        for k in range(splice):
            env_l, s = rescale(transfer_left(env_l, params[site_key(k)]), 4)
            ls = ls + s
        env_r = boundary_identity((n_blocks,), b)
        for k in reversed(range(splice, n_sites)):
            env_r, s = rescale(transfer_right(env_r, params[site_key(k)]), 4)
            ls = ls + s
        z = jnp.einsum("kxyac,kabl,kcdl,kbdxy->kl", env_l, label, label, env_r)
        return jnp.log(jnp.abs(z)) + ls[:, None]

    @classmethod
    def random(
        cls,
        layout: BlockLayout,
        chi: int,
        rng: np.random.Generator,
        n_classes: int = 10,
        seed: int | None = None,
        splice: int | None = None,
        boundary_dim: int = 1,
        low: float = 0.0,
    ) -> "SBPSModel":
        """Tensor entries i.i.d. uniform on ``[low, 1]``, then every block rescaled to unit norm."""
        n_sites = layout.n**2
        if splice is None:
            splice = default_splice(layout.n)
        if chi < 1 or boundary_dim < 1:
            raise ConfigurationError("bond dimensions must be >= 1")
        if not 0 <= splice <= n_sites:
            raise ConfigurationError(f"splice position must be in 0..{n_sites}, got {splice}")
        dims = chain_dims(n_sites + 1, chi, boundary_dim)
        k = layout.n_blocks
        params = {}
        for t in range(n_sites + 1):
            left, right = dims[t], dims[t + 1]
            if t == splice:
                params["label"] = rng.uniform(low, 1.0, size=(k, left, right, n_classes))
            else:
                s = t if t < splice else t - 1
                params[site_key(s)] = rng.uniform(low, 1.0, size=(k, 2, left, right))
        params = {key: params[key] for key in sorted(params, key=_param_order)}
        model = cls(
            layout=layout,
            chi=chi,
            params=params,
            seed=seed,
            n_classes=n_classes,
            splice=splice,
            boundary_dim=boundary_dim,
        )
        model.normalize_blocks()
        return model

    def normalize_blocks(self) -> None:
        """Unit-normalise every block state: shared sites by the class geometric mean, label slices exactly."""
        n_sites = self.layout.n**2
        log_z = self.block_log_norms()  # (blocks, classes)
        per_site = np.exp(-log_z.mean(axis=1) / (2 * n_sites))
        for k in range(n_sites):
            key = site_key(k)
            self.params[key] = self.params[key] * per_site[:, None, None, None]
        log_z = self.block_log_norms()
        self.params["label"] = self.params["label"] * np.exp(-0.5 * log_z)[:, None, None, :]


def _param_order(key: str) -> tuple[int, int]:
    if key == "label":
        return (1, 0)
    return (0, int(key.split("_")[1]))
