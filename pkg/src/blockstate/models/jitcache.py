from __future__ import annotations

import functools

from .._jax import jax


@functools.lru_cache(maxsize=None)
def _jitted(fn, frozen_static):
    static = dict(frozen_static)
    return jax.jit(functools.partial(fn, **static))


def jitted(fn, static: dict):
    """``jax.jit`` of ``fn`` with keyword-only structure arguments bound, cached per structure."""
    return _jitted(fn, tuple(sorted(static.items())))
