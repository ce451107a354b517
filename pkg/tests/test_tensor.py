from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockstate.errors import DimensionError, InputError, NotPSDError, NumericalError
from blockstate.tensor import SVDResult, as_tensor, contract, eigh_truncated, svd


def nested_loop_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


class TestContract:
    def test_identity(self):
        v = np.array([0.3, -1.2])
        np.testing.assert_array_equal(contract(np.eye(2), [1], v, [0]), v)

    def test_inner_product(self):
        u, v = np.array([1.0, 2.0]), np.array([3.0, -4.0])
        assert contract(u, [0], v, [0]).shape == ()
        assert float(contract(u, [0], v, [0])) == pytest.approx(-5.0)

    def test_matches_nested_loops(self, rng):
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(3, 4))
        np.testing.assert_allclose(contract(a, [1], b, [0]), nested_loop_matmul(a, b), rtol=1e-14)

    def test_axis_order_of_result(self, rng):
        a, b = rng.normal(size=(2, 3, 5)), rng.normal(size=(5, 4, 3))
        out = contract(a, [1, 2], b, [2, 0])
        np.testing.assert_allclose(out, np.einsum("abc,cdb->ad", a, b), rtol=1e-12)

    def test_mismatch_names_axis_pair(self, rng):
        with pytest.raises(DimensionError, match=r"a\[1\], b\[0\]"):
            contract(rng.normal(size=(2, 3)), [1], rng.normal(size=(4, 2)), [0])

    def test_unequal_axis_lists(self):
        with pytest.raises(DimensionError):
            contract(np.ones((2, 2)), [0, 1], np.ones((2, 2)), [0])

    def test_bilinear(self, rng):
        a1, a2, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), rng.normal(size=(4, 5))
        lhs = contract(2.5 * a1 - 0.7 * a2, [1], b, [0])
        rhs = 2.5 * contract(a1, [1], b, [0]) - 0.7 * contract(a2, [1], b, [0])
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)

    def test_association_order(self, rng):
        a, b, c = rng.normal(size=(3, 4)), rng.normal(size=(4, 5)), rng.normal(size=(5, 2))
        left = contract(contract(a, [1], b, [0]), [1], c, [0])
        right = contract(a, [1], contract(b, [1], c, [0]), [0])
        np.testing.assert_allclose(left, right, rtol=1e-12)

    def test_as_tensor_rejects_empty_axis(self):
        with pytest.raises(DimensionError):
            as_tensor(np.zeros((0, 2)))


class TestSVD:
    def test_diagonal(self):
        np.testing.assert_allclose(svd(np.diag([3.0, 1.0])).s, [3.0, 1.0])

    def test_zero_matrix(self):
        res = svd(np.zeros((3, 2)))
        np.testing.assert_array_equal(res.s, 0.0)

    def test_matches_eigenvalues_of_gram(self, rng):
        m = rng.normal(size=(5, 3))
        w = np.sort(np.linalg.eigvalsh(m.T @ m))[::-1]
        np.testing.assert_allclose(svd(m).s, np.sqrt(w), rtol=1e-10)

    def test_non_finite_rejected(self):
        with pytest.raises(InputError):
            svd(np.array([[np.nan, 1.0], [0.0, 1.0]]))

    def test_non_convergence_surfaced(self, monkeypatch):
        def boom(*_, **__):
            raise np.linalg.LinAlgError("SVD did not converge")

        monkeypatch.setattr(np.linalg, "svd", boom)
        with pytest.raises(NumericalError):
            svd(np.eye(2))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**32 - 1))
    def test_invariants(self, rows, cols, seed):
        m = np.random.default_rng(seed).normal(size=(rows, cols))
        res = svd(m)
        k = min(rows, cols)
        assert isinstance(res, SVDResult) and res.s.shape == (k,)
        assert np.all(np.diff(res.s) <= 0) and np.all(res.s >= 0)
        np.testing.assert_allclose(res.u.T @ res.u, np.eye(k), atol=1e-10)
        np.testing.assert_allclose(res.vt @ res.vt.T, np.eye(k), atol=1e-10)
        err = np.linalg.norm(res.reconstruct() - m) / max(np.linalg.norm(m), 1e-300)
        assert err <= 1e-9


class TestEighTruncated:
    def test_identity(self):
        w, v = eigh_truncated(np.eye(3), 1e-12)
        np.testing.assert_allclose(w, [1.0, 1.0, 1.0])
        np.testing.assert_allclose(v.T @ v, np.eye(3), atol=1e-10)

    def test_rank_one(self):
        w, v = eigh_truncated(np.ones((4, 4)), 1e-12)
        np.testing.assert_allclose(w, [4.0])
        assert v.shape == (4, 1)

    def test_gram_of_known_vectors(self, rng):
        vecs = rng.normal(size=(4, 6))  # six vectors in dimension 4
        x = vecs.T @ vecs
        w, v = eigh_truncated(x, 1e-12)
        assert len(w) <= 4
        assert np.max(np.abs(v @ np.diag(w) @ v.T - x)) <= 1e-12 * max(w[0], 1) * 10

    def test_asymmetric_rejected(self):
        with pytest.raises(InputError):
            eigh_truncated(np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_not_psd(self):
        with pytest.raises(NotPSDError):
            eigh_truncated(np.diag([1.0, -0.5]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_reconstruction_on_retained_subspace(self, dim, count, seed):
        vecs = np.random.default_rng(seed).normal(size=(dim, count))
        x = vecs.T @ vecs
        tol = 1e-12
        w, v = eigh_truncated(x, tol)
        np.testing.assert_allclose(v.T @ v, np.eye(len(w)), atol=1e-10)
        assert np.all(np.diff(w) <= 0) and np.all(w > 0)
        assert np.max(np.abs(v @ np.diag(w) @ v.T - x)) <= 1e-10 * max(np.abs(x).max(), 1)
