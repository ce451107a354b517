"""Independent reference computations used by the tests.

Everything here builds full ``2^k`` vectors with plain numpy, so it only
works for a handful of qubits.
"""

from __future__ import annotations

import itertools
import string

import numpy as np


def product_vector(site_vectors: np.ndarray) -> np.ndarray:
    """Kronecker product of ``(k, 2)`` site vectors, first site most significant."""
    vec = np.ones(1)
    for v in site_vectors:
        vec = np.kron(vec, v)
    return vec


def nnbps_block_vector(grid: list[list[np.ndarray]]) -> np.ndarray:
    """Dense state of one open PEPS block.

    ``grid[i][j]`` has shape ``(2, up, down, left, right)``. The result is
    indexed by the physical legs in row-major site order.
    """
    n = len(grid)
    letters = iter(string.ascii_letters)
    phys = [[next(letters) for _ in range(n)] for _ in range(n)]
    horiz = {(i, j): next(letters) for i in range(n) for j in range(-1, n)}  # bond right of (i, j)
    vert = {(i, j): next(letters) for i in range(-1, n) for j in range(n)}  # bond below (i, j)
    terms = []
    for i in range(n):
        for j in range(n):
            terms.append(phys[i][j] + vert[i - 1, j] + vert[i, j] + horiz[i, j - 1] + horiz[i, j])
    out = "".join(itertools.chain.from_iterable(phys))
    ops = [grid[i][j] for i in range(n) for j in range(n)]
    return np.einsum(",".join(terms) + "->" + out, *ops, optimize=True).ravel()


def sbps_block_vector(sites: list[np.ndarray], label: np.ndarray, splice: int, n: int) -> np.ndarray:
    """Dense state of one SBPS block for one class.

    ``sites[k]`` has shape ``(2, left, right)`` for snake position ``k``;
    ``label`` is the ``(left, right)`` class slice inserted after ``splice``
    sites; the chain is closed by a trace. The result is indexed by the
    physical legs in row-major site order.
    """
    chain = list(sites[:splice]) + [label[None]] + list(sites[splice:])
    # acc[x, a, b]: x runs over the physical legs so far, a is the outer left bond
    acc = np.eye(chain[0].shape[1])[None]
    for t in chain:
        acc = np.einsum("xab,pbc->xpac", acc, t).reshape(-1, acc.shape[1], t.shape[2])
    vec_snake = np.einsum("xaa->x", acc)
    order = [(i, j if i % 2 == 0 else n - 1 - j) for i in range(n) for j in range(n)]
    snake = vec_snake.reshape((2,) * (n * n))
    perm = np.argsort([i * n + j for i, j in order])
    return np.transpose(snake, perm).ravel()


def perturb_norms(model, rng, spread: float = 0.3) -> None:
    """Scale every block and class by a random factor, moving ``log Z`` away from 0."""
    for key, arr in model.params.items():
        factor = np.exp(rng.normal(0.0, spread, size=arr.shape[:1] + (1,) * (arr.ndim - 1)))
        model.params[key] = arr * factor


def central_difference(loss, params: dict, key: str, index: tuple, step: float = 1e-5) -> float:
    """``(f(p + h) - f(p - h)) / 2h`` on one parameter entry, restoring it afterwards."""
    arr = params[key]
    old = arr[index]
    arr[index] = old + step
    up = loss()
    arr[index] = old - step
    down = loss()
    arr[index] = old
    return (up - down) / (2 * step)


def gradient_errors(model, states, labels, config, grads, n_coords, rng, floor):
    """Relative errors ``|g - fd| / max(|fd|, floor)`` on randomly drawn coordinates."""
    from blockstate.training import nll_loss, quadratic_loss

    if config.loss_kind == "nll":
        def loss():
            return nll_loss(model, states, labels, config.alpha)
    else:
        def loss():
            return quadratic_loss(model, states, labels)

    keys = sorted(model.params)
    errs = []
    for _ in range(n_coords):
        key = keys[rng.integers(len(keys))]
        index = tuple(int(rng.integers(d)) for d in model.params[key].shape)
        fd = central_difference(loss, model.params, key, index)
        errs.append(abs(grads[key][index] - fd) / max(abs(fd), floor))
    return np.asarray(errs)
