"""Nearest-neighbour block product state: one small open-boundary PEPS per block and class."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import BlockLayout
from ..errors import ConfigurationError
from .base import TensorNetworkModel
from .kernels import contract_grid, double_layer, floored_log_sq
from .._jax import jnp


def site_key(i: int, j: int) -> str:
    return f"site_{i}_{j}"


def bond_shape(n: int, chi: int, i: int, j: int) -> tuple[int, int, int, int]:
    """(up, down, left, right) bond lengths of site (i, j); 1 on the block edge."""
    return (
        1 if i == 0 else chi,
        1 if i == n - 1 else chi,
        1 if j == 0 else chi,
        1 if j == n - 1 else chi,
    )


@dataclass
class NNBPSModel(TensorNetworkModel):
    """Each parameter ``site_i_j`` has shape ``(n_blocks, n_classes, 2, up, down, left, right)``."""

    kind: str = field(default="nnbps", init=False)

    def static_config(self) -> dict:
        return {"n": self.layout.n}

    @staticmethod
    def block_terms_fn(params, xb, *, n):
        sites = [
            [
                jnp.einsum("kcpudlr,bkp->bkcudlr", params[site_key(i, j)], xb[:, :, i, j, :])
                for j in range(n)
            ]
            for i in range(n)
        ]
        value, log_scale = contract_grid(sites, n)
        return floored_log_sq(value, log_scale)

    @staticmethod
    def block_log_norm_fn(params, *, n):
        sites = [[double_layer(params[site_key(i, j)]) for j in range(n)] for i in range(n)]
        value, log_scale = contract_grid(sites, n)
        return jnp.log(jnp.abs(value)) + log_scale

    @classmethod
    def random(
        cls,
        layout: BlockLayout,
        chi: int,
        rng: np.random.Generator,
        n_classes: int = 10,
        seed: int | None = None,
        low: float = 0.0,
    ) -> "NNBPSModel":
        """Site entries i.i.d. uniform on ``[low, 1]``, then every block rescaled to unit norm."""
        if chi < 1:
            raise ConfigurationError(f"bond dimension must be >= 1, got {chi}")
        n, k = layout.n, layout.n_blocks
        params = {}
        for i in range(n):
            for j in range(n):
                shape = (k, n_classes, 2, *bond_shape(n, chi, i, j))
                params[site_key(i, j)] = rng.uniform(low, 1.0, size=shape)
        model = cls(layout=layout, chi=chi, params=params, seed=seed, n_classes=n_classes)
        model.normalize_blocks()
        return model

    def normalize_blocks(self) -> None:
        """Rescale every block state (per class) to unit norm, spreading the factor over its sites."""
        log_z = self.block_log_norms()  # (blocks, classes)
        per_site = np.exp(-log_z / (2 * self.layout.n**2))
        for key in self.params:
            self.params[key] = self.params[key] * per_site.reshape(per_site.shape + (1,) * 5)
