import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nsn.errors import ShapeError
from nsn import tensor


def rand(rows, cols, seed=0):
    return np.random.default_rng(seed).random((rows, cols)).astype(np.float32)


class TestMatmul:
    def test_identity_is_bitwise_noop(self):
        m = rand(3, 3, seed=1)
        eye = np.eye(3, dtype=np.float32)
        assert np.array_equal(tensor.matmul(eye, m), m)

    def test_hand_case(self):
        a = tensor.matrix([[1, 2], [3, 4]])
        b = tensor.matrix([[0], [1]])
        np.testing.assert_array_equal(tensor.matmul(a, b),
                                      np.array([[2], [4]], dtype=np.float32))

    def test_against_double_precision_oracle(self):
        a = rand(5, 7, seed=2)
        b = rand(7, 3, seed=3)
        oracle = np.einsum("ik,kj->ij",
                           a.astype(np.float64), b.astype(np.float64))
        np.testing.assert_allclose(tensor.matmul(a, b), oracle, atol=1e-5)

    @settings(deadline=None, max_examples=50)
    @given(r=st.integers(1, 8), k=st.integers(1, 8), c=st.integers(1, 8),
           seed=st.integers(0, 2**31))
    def test_oracle_property_small_shapes(self, r, k, c, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-1, 1, (r, k)).astype(np.float32)
        b = rng.uniform(-1, 1, (k, c)).astype(np.float32)
        oracle = a.astype(np.float64) @ b.astype(np.float64)
        got = tensor.matmul(a, b)
        assert np.max(np.abs(got - oracle)) <= 1e-5
        assert np.all(np.isfinite(got))

    def test_dimension_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            tensor.matmul(rand(2, 3), rand(2, 2))

    def test_inputs_unmodified_and_output_fresh(self):
        a, b = rand(4, 4, seed=4), rand(4, 4, seed=5)
        a0, b0 = a.copy(), b.copy()
        out = tensor.matmul(a, b)
        assert np.array_equal(a, a0) and np.array_equal(b, b0)
        assert not np.shares_memory(out, a) and not np.shares_memory(out, b)


class TestTranspose:
    def test_involution(self):
        m = rand(3, 5)
        assert np.array_equal(tensor.transpose(tensor.transpose(m)), m)

    def test_single_element(self):
        m = tensor.matrix([[7.0]])
        assert np.array_equal(tensor.transpose(m), m)

    def test_row_to_column(self):
        got = tensor.transpose(tensor.matrix([[1, 2, 3]]))
        np.testing.assert_array_equal(got,
                                      np.array([[1], [2], [3]], np.float32))

    def test_output_is_fresh(self):
        m = rand(2, 3)
        out = tensor.transpose(m)
        assert not np.shares_memory(out, m)


class TestMapZip:
    def test_add_zero_identity(self):
        m = rand(3, 4)
        assert np.array_equal(tensor.add(m, np.zeros_like(m)), m)

    def test_hadamard_ones_identity(self):
        m = rand(3, 4)
        assert np.array_equal(tensor.hadamard(m, np.ones_like(m)), m)

    def test_axpy_hand_case(self):
        got = tensor.axpy(0.5, tensor.matrix([[2, 4]]), tensor.matrix([[1, 1]]))
        np.testing.assert_array_equal(got, np.array([[2, 3]], np.float32))

    def test_subtract(self):
        got = tensor.subtract(tensor.matrix([[3, 5]]), tensor.matrix([[1, 2]]))
        np.testing.assert_array_equal(got, np.array([[2, 3]], np.float32))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            tensor.map_zip(rand(2, 2), rand(2, 3), lambda x, y: x + y)

    def test_inputs_unmodified(self):
        a, b = rand(2, 2, seed=6), rand(2, 2, seed=7)
        a0 = a.copy()
        out = tensor.map_zip(a, b, lambda x, y: x * y + 1)
        assert np.array_equal(a, a0)
        assert not np.shares_memory(out, a)


class TestReduce:
    def test_sum_of_zeros(self):
        assert tensor.reduce(tensor.zeros(3, 3), "sum") == 0.0

    def test_mean_hand_case(self):
        assert tensor.reduce(tensor.matrix([[1, 2], [3, 4]]), "mean") == 2.5

    def test_argmax_tie_takes_lowest_index(self):
        got = tensor.reduce(tensor.matrix([[1, 3, 3]]), "argmax-per-row")
        np.testing.assert_array_equal(got, [1])

    def test_argmax_per_row(self):
        got = tensor.reduce(tensor.matrix([[0, 9], [8, 1]]), "argmax-per-row")
        np.testing.assert_array_equal(got, [1, 0])

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            tensor.reduce(np.zeros((0, 4), np.float32), "sum")

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            tensor.reduce(tensor.zeros(1, 1), "median")


class TestConstruction:
    def test_matrix_rejects_non_2d(self):
        with pytest.raises(ShapeError):
            tensor.matrix([1, 2, 3])

    def test_zeros_rejects_empty(self):
        with pytest.raises(ShapeError):
            tensor.zeros(0, 3)

    @settings(deadline=None, max_examples=30)
    @given(arrays(np.float32, (3, 3),
                  elements=st.floats(-1e3, 1e3, width=32)))
    def test_ops_finite_on_finite_inputs(self, m):
        for out in (tensor.matmul(m, m), tensor.transpose(m),
                    tensor.add(m, m), tensor.hadamard(m, m)):
            assert np.all(np.isfinite(out))
