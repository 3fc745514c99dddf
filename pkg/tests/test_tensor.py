"""Tensor op semantics, backward rules against finite differences, and the
gradient-checker oracle itself."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from client_ts import backend
from client_ts import tensor as T
from client_ts.errors import NumericError, ShapeError


def t(x, constant=False):
    return T.Tensor(np.asarray(x, dtype=np.float64), constant=constant)


class TestMatmul:
    def test_identity(self):
        a = np.arange(9.0).reshape(3, 3)
        assert np.array_equal(T.matmul(t(np.eye(3)), t(a)).data, a)

    def test_zero(self):
        z = T.matmul(t(np.zeros((2, 3))), t(np.ones((3, 4))))
        assert z.shape == (2, 4) and not z.data.any()

    def test_hand_case(self):
        out = T.matmul(t([[1, 2], [3, 4]]), t([[5, 6], [7, 8]]))
        assert np.array_equal(out.data, [[19, 22], [43, 50]])

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            T.matmul(t(np.ones((2, 3))), t(np.ones((4, 2))))

    def test_batched_times_shared_matrix(self):
        a = np.random.default_rng(0).normal(size=(4, 2, 3))
        w = np.random.default_rng(1).normal(size=(3, 5))
        out = T.matmul(t(a), t(w))
        assert out.shape == (4, 2, 5)
        assert np.allclose(out.data, a @ w)

    def test_shared_matrix_times_batched(self):
        m = np.random.default_rng(2).normal(size=(2, 2))
        b = np.random.default_rng(3).normal(size=(4, 2, 3))
        out = T.matmul(t(m), t(b))
        assert np.allclose(out.data, m @ b)


class TestSoftmax:
    def test_equal_values_row(self):
        out = T.softmax_rows(t([[2.0] * 5]))
        assert np.allclose(out.data, 0.2, atol=1e-15)

    def test_closed_form(self):
        out = T.softmax_rows(t([[0.0, np.log(3.0)]]))
        assert np.allclose(out.data, [[0.25, 0.75]], atol=1e-15)

    def test_rows_sum_to_one(self):
        x = np.random.default_rng(0).normal(scale=20, size=(5, 7))
        out = T.softmax_rows(t(x)).data
        assert np.max(np.abs(out.sum(axis=1) - 1)) < 1e-12
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_large_values_stable(self):
        out = T.softmax_rows(t([[1e5, 1e5 + 1]])).data
        assert np.all(np.isfinite(out))


class TestLayerNorm:
    def test_constant_row_absorbed_by_eps(self):
        out = T.layer_norm(t([[4.0] * 6]), t(np.ones(6)), t(np.zeros(6)), eps=1e-5)
        assert np.allclose(out.data, 0.0)

    def test_population_std(self):
        out = T.layer_norm(t([[1.0, 3.0]]), t(np.ones(2)), t(np.zeros(2)), eps=1e-14)
        assert np.allclose(out.data, [[-1.0, 1.0]], atol=1e-6)

    def test_affine(self):
        out = T.layer_norm(t([[1.0, 3.0]]), t([2.0, 2.0]), t([1.0, 1.0]), eps=1e-14)
        assert np.allclose(out.data, [[-1.0, 3.0]], atol=1e-6)

    def test_bad_gamma_shape(self):
        with pytest.raises(ShapeError):
            T.layer_norm(t(np.ones((2, 4))), t(np.ones(3)), t(np.zeros(4)))


class TestElementwise:
    def test_transpose_involution(self):
        a = np.random.default_rng(0).normal(size=(3, 5))
        assert np.array_equal(T.transpose_2d(T.transpose_2d(t(a))).data, a)

    def test_transpose_batched(self):
        a = np.random.default_rng(0).normal(size=(4, 3, 5))
        assert np.array_equal(T.transpose_2d(t(a)).data, np.swapaxes(a, 1, 2))

    def test_add_identity(self):
        a = np.random.default_rng(1).normal(size=(2, 3))
        assert np.array_equal(T.add(t(a), t(np.zeros((2, 3)))).data, a)

    def test_add_broadcast_bias(self):
        a = np.ones((2, 3, 4))
        b = np.arange(4.0)
        assert np.allclose(T.add(t(a), t(b)).data, a + b)

    def test_mse_identical_inputs(self):
        a = np.random.default_rng(2).normal(size=(3, 3))
        assert T.mse_reduce(t(a), t(a)).item() == 0.0

    def test_mse_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.mse_reduce(t(np.ones((2, 2))), t(np.ones((2, 3))))

    def test_slice_concat_roundtrip(self):
        a = np.random.default_rng(3).normal(size=(2, 6))
        parts = [T.slice_last(t(a), i, i + 2) for i in (0, 2, 4)]
        assert np.array_equal(T.concat_last(parts).data, a)

    def test_reshape(self):
        a = np.arange(6.0)
        assert T.reshape(t(a), (2, 3)).shape == (2, 3)
        with pytest.raises(ShapeError):
            T.reshape(t(a), (4, 2))


class TestBackward:
    def test_sum_of_squares(self):
        x = t(np.array([1.0, -2.0, 3.0]))
        T.backward(T.sum_all(T.mul(x, x)))
        assert np.allclose(x.grad, 2 * x.data)

    def test_matmul_grads_match_finite_differences(self):
        a = t(np.random.default_rng(0).normal(size=(2, 2)))
        b = t(np.random.default_rng(1).normal(size=(2, 2)))
        rep = T.grad_check(lambda: T.sum_all(T.matmul(a, b)), {"a": a, "b": b},
                           eps=1e-5, tol=1e-6)
        assert rep.passed, rep

    def test_constant_gets_no_grad(self):
        x = t(np.ones(3), constant=True)
        y = t(np.ones(3))
        T.backward(T.sum_all(T.mul(x, y)))
        assert x.grad is None and y.grad is not None

    def test_backward_requires_scalar(self):
        with pytest.raises(ShapeError):
            T.backward(t(np.ones((2, 2))))

    def test_repeated_backward_accumulates(self):
        x = t(np.array([2.0]))
        for _ in range(2):
            T.backward(T.sum_all(T.mul(x, x)))
        assert np.allclose(x.grad, 2 * 2 * x.data)

    def test_chain_rule_on_scalar_chain(self):
        x = t(np.array([1.7]))
        h = T.mul_scalar(x, 3.0)
        y = T.mul(h, h)  # y = 9 x^2, dy/dx = 18 x
        T.backward(y)
        assert np.allclose(x.grad, 18 * x.data)

    def test_graph_freed_after_backward(self):
        x = t(np.ones(2))
        y = T.sum_all(T.mul(x, x))
        T.backward(y)
        assert y._parents == () and y.grad is None


class TestGradCheck:
    def test_quadratic_nearly_exact(self):
        x = t(np.array([0.5, -1.5, 2.0]))
        rep = T.grad_check(lambda: T.sum_all(T.mul(x, x)), {"x": x},
                           eps=1e-4, tol=1e-8)
        assert rep.passed, rep

    def test_corrupted_backward_fails(self):
        original = backend.backend_name()
        backend.use("python")
        try:
            from client_ts import _kernels_py as KP
            true_bwd = KP.gelu_bwd
            KP.gelu_bwd = lambda x, gy: 1.5 * true_bwd(x, gy)
            try:
                x = t(np.array([0.3, -0.7, 1.2]))
                rep = T.grad_check(lambda: T.sum_all(T.gelu(x)), {"x": x},
                                   eps=1e-5, tol=1e-4)
                assert not rep.passed
            finally:
                KP.gelu_bwd = true_bwd
        finally:
            backend.use(original)

    def test_eps_bounds_enforced(self):
        x = t(np.ones(2))
        with pytest.raises(ValueError):
            T.grad_check(lambda: T.sum_all(x), {"x": x}, eps=1e-2)

    def test_non_finite_objective_diagnosed(self):
        x = t(np.array([1.0]))
        with pytest.raises(NumericError):
            T.grad_check(lambda: T.mul_scalar(T.sum_all(x), np.inf), {"x": x})

    def test_subsampling_deterministic(self):
        x = t(np.random.default_rng(0).normal(size=(6, 6)))
        f = lambda: T.sum_all(T.mul(x, x))
        r1 = T.grad_check(f, {"x": x}, max_coords=10, seed=42)
        r2 = T.grad_check(f, {"x": x}, max_coords=10, seed=42)
        assert r1.max_rel_err == r2.max_rel_err
        assert r1.checked_coords["x"] == 10


@st.composite
def small_matrix(draw, max_side=8):
    r = draw(st.integers(1, max_side))
    c = draw(st.integers(1, max_side))
    elems = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
    data = draw(st.lists(elems, min_size=r * c, max_size=r * c))
    return np.array(data).reshape(r, c)


class TestGradientProperties:
    """Every differentiable op matches central differences at 1e-4 over
    random shapes up to 8x8 (64-bit)."""

    @settings(max_examples=20, deadline=None)
    @given(small_matrix())
    def test_softmax_grad(self, a):
        x = t(a)
        w = t(np.random.default_rng(0).normal(size=a.shape), constant=True)
        rep = T.grad_check(lambda: T.sum_all(T.mul(T.softmax_rows(x), w)),
                           {"x": x}, eps=1e-5, tol=1e-4)
        assert rep.passed, rep

    @settings(max_examples=20, deadline=None)
    @given(small_matrix())
    def test_layer_norm_grad(self, a):
        x = t(a)
        d = a.shape[1]
        gamma = t(np.random.default_rng(1).normal(size=d))
        beta = t(np.random.default_rng(2).normal(size=d))
        tgt = t(np.random.default_rng(3).normal(size=a.shape), constant=True)
        rep = T.grad_check(
            lambda: T.mse_reduce(T.layer_norm(x, gamma, beta), tgt),
            {"x": x, "gamma": gamma, "beta": beta}, eps=1e-5, tol=1e-4)
        assert rep.passed, rep

    @settings(max_examples=20, deadline=None)
    @given(small_matrix(), st.integers(0, 2 ** 31 - 1))
    def test_matmul_grad(self, a, seed):
        b = np.random.default_rng(seed).normal(size=(a.shape[1], 3))
        ta, tb = t(a), t(b)
        rep = T.grad_check(lambda: T.sum_all(T.matmul(ta, tb)),
                           {"a": ta, "b": tb}, eps=1e-5, tol=1e-4)
        assert rep.passed, rep

    @settings(max_examples=20, deadline=None)
    @given(small_matrix())
    def test_gelu_grad(self, a):
        x = t(a)
        rep = T.grad_check(lambda: T.sum_all(T.gelu(x)), {"x": x},
                           eps=1e-5, tol=1e-4)
        assert rep.passed, rep

    @settings(max_examples=20, deadline=None)
    @given(small_matrix())
    def test_transpose_mul_grad(self, a):
        x = t(a)
        w = t(np.random.default_rng(4).normal(size=a.T.shape), constant=True)
        rep = T.grad_check(
            lambda: T.sum_all(T.mul(T.transpose_2d(x), w)), {"x": x},
            eps=1e-5, tol=1e-4)
        assert rep.passed, rep

    @settings(max_examples=20, deadline=None)
    @given(small_matrix())
    def test_softmax_rows_property(self, a):
        out = T.softmax_rows(t(a)).data
        assert np.max(np.abs(out.sum(axis=1) - 1)) < 1e-12
