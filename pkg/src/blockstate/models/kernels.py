"""Batched exact contractions of small PEPS grids and MPS chains, in jax.numpy.

All routines carry a running scale factor in log space: after every row (grid)
or site (chain) the partial result is divided by its largest magnitude and the
log of that divisor is accumulated. The divisor is wrapped in
``stop_gradient``, which is exact because ``log v = log(v / s) + log s`` holds
for any constant ``s``.
"""

from __future__ import annotations

import math
import string

from .._jax import jax, jnp

LOG_FLOOR = -1382.0
LOG_TINY = math.log(1e-300)

_COLS = string.ascii_uppercase


def rescale(t, n_axes: int):
    """Divide ``t`` by its max-abs over the trailing ``n_axes`` axes."""
    axes = tuple(range(t.ndim - n_axes, t.ndim))
    s = jax.lax.stop_gradient(jnp.max(jnp.abs(t), axis=axes))
    s = jnp.where(s > 0, s, 1.0)
    return t / s.reshape(s.shape + (1,) * n_axes), jnp.log(s)


def floored_log_sq(value, log_scale):
    """``log(value**2)`` given ``value`` pre-divided by ``exp(log_scale)``.

    Overlaps below 1e-300 in magnitude (including exact zeros) map to
    ``LOG_FLOOR`` with zero gradient.
    """
    a = jnp.abs(value)
    safe = jnp.where(a > 0, a, 1.0)
    log_abs = jnp.log(safe) + log_scale
    dead = (a == 0) | (log_abs < LOG_TINY)
    return jnp.where(dead, LOG_FLOOR, 2.0 * log_abs)


def contract_grid(sites, n: int):
    """Contract an ``n x n`` grid of tensors with open boundaries, row by row.

    ``sites[i][j]`` has shape ``(*batch, up, down, left, right)``; bond legs on
    the outer edge must have length 1. The boundary carried between rows holds
    one leg per column.

    Returns:
        ``(value, log_scale)`` each of shape ``batch``; the contraction equals
        ``value * exp(log_scale)``.
    """
    batch = sites[0][0].shape[:-4]
    cols = _COLS[:n]
    env = jnp.ones(batch + (1,) * n)
    log_scale = jnp.zeros(batch)
    for i in range(n):
        env = env[..., None]
        for j in range(n):
            out = cols[:j] + "y" + cols[j + 1 :]
            env = jnp.einsum(f"...{cols}z,...{cols[j]}yzx->...{out}x", env, sites[i][j])
        env = env[..., 0]
        env, ls = rescale(env, n)
        log_scale = log_scale + ls
    return env.reshape(batch), log_scale


def double_layer(t):
    """Fuse a PEPS site tensor with itself over the physical leg.

    ``t`` has shape ``(*batch, p, u, d, l, r)``; the result has shape
    ``(*batch, u*u, d*d, l*l, r*r)``.
    """
    *batch, p, u, d, l, r = t.shape
    e = jnp.einsum("...pudlr,...pUDLR->...uUdDlLrR", t, t)
    return e.reshape(*batch, u * u, d * d, l * l, r * r)


def chain_product(mats):
    """Left-to-right product of a list of ``(*batch, a, b)`` matrices, rescaled per step.

    Returns ``(product, log_scale)``.
    """
    prod, log_scale = rescale(mats[0], 2)
    for m in mats[1:]:
        prod = prod @ m
        prod, ls = rescale(prod, 2)
        log_scale = log_scale + ls
    return prod, log_scale


def transfer_left(env, a):
    """Absorb MPS tensor ``a`` (``(*batch, p, l, r)``) into a left norm environment.

    ``env`` has shape ``(*batch, x, y, l, l')`` where ``x, y`` are the two copies
    of the chain's left boundary leg.
    """
    return jnp.einsum("...xyac,...pab,...pcd->...xybd", env, a, a)


def transfer_right(env, a):
    """Absorb MPS tensor ``a`` into a right norm environment of shape ``(*batch, r, r', x, y)``."""
    return jnp.einsum("...pab,...pcd,...bdxy->...acxy", a, a, env)


def boundary_identity(batch, b: int):
    """Delta environment ``(*batch, b, b, b, b)`` pairing leg copies."""
    eye = jnp.eye(b)
    e = jnp.einsum("xa,yc->xyac", eye, eye)
    return jnp.broadcast_to(e, tuple(batch) + e.shape)

