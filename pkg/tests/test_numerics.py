import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from simvae.errors import ContractError, DimensionError, DomainError, NumericError
from simvae.numerics import (
    Rng,
    Tensor,
    concat,
    exp,
    get_dtype,
    grad_check,
    log,
    logsumexp,
    matmul,
    mean,
    no_grad,
    precision,
    relu,
    stack,
    sum_,
)

finite = st.floats(-3, 3, allow_nan=False, width=64)


def leaf(a):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


class TestForward:
    def test_matmul_example(self):
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
        np.testing.assert_array_equal(out.data, [[17.0], [39.0]])

    def test_matmul_zero(self):
        a = Tensor(np.arange(6.0).reshape(2, 3))
        np.testing.assert_array_equal(matmul(a, Tensor(np.zeros((3, 4)))).data, np.zeros((2, 4)))

    def test_matmul_shape_mismatch_names_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))

    def test_elementwise_examples(self):
        assert relu(Tensor(-1.0)).item() == 0.0
        assert relu(Tensor(2.0)).item() == 2.0
        assert exp(Tensor(0.0)).item() == 1.0
        np.testing.assert_array_equal((Tensor([1.0, 2.0]) + Tensor([3.0, 4.0])).data, [4.0, 6.0])

    def test_log_domain(self):
        with pytest.raises(DomainError):
            log(Tensor([1.0, 0.0]))
        with pytest.raises(DomainError):
            log(Tensor([-2.0]))

    def test_reductions(self):
        assert sum_(Tensor([1.0, 2.0, 3.0])).item() == 6.0
        np.testing.assert_allclose(mean(Tensor(np.full((3, 4), 2.5))).item(), 2.5)
        assert sum_(Tensor(np.zeros((0, 3))), axis=0).data.tolist() == [0.0, 0.0, 0.0]

    def test_invalid_axis(self):
        with pytest.raises(DimensionError):
            sum_(Tensor(np.ones((2, 2))), axis=3)

    def test_logsumexp_stable(self):
        x = np.array([[1000.0, 1000.0], [-1000.0, -1000.0]])
        with precision(np.float64):
            out = logsumexp(Tensor(x), axis=1).data
        np.testing.assert_allclose(out, [1000 + np.log(2), -1000 + np.log(2)])

    def test_default_dtype_and_precision_switch(self):
        assert get_dtype() is np.float32
        assert Tensor([1.0]).dtype == np.float32
        with precision(np.float64):
            assert Tensor([1.0]).dtype == np.float64
        assert get_dtype() is np.float32

    @given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (4,), elements=finite))
    def test_ops_do_not_mutate_inputs(self, a, b):
        a0, b0 = a.copy(), b.copy()
        with precision(np.float64):
            ta, tb = leaf(a), leaf(b)
            out = (ta * tb + ta.exp() - tb).sum()
            out.backward()
        np.testing.assert_array_equal(ta.data, a0)
        np.testing.assert_array_equal(tb.data, b0)


class TestBackward:
    def test_square(self):
        with precision(np.float64):
            x = leaf(3.0)
            (x * x).backward()
        assert x.grad == pytest.approx(6.0)

    def test_broadcast_gradient(self):
        with precision(np.float64):
            W = leaf(np.ones((3, 2)))
            v = np.array([2.0, -1.0])
            (W * v).sum().backward()
        np.testing.assert_array_equal(W.grad, np.broadcast_to(v, (3, 2)))

    def test_detached_parameter_gets_no_gradient(self):
        with precision(np.float64):
            p = leaf([1.0, 2.0])
            q = leaf([3.0])
            (p.detach() * q).sum().backward()
        assert p.grad is None or np.all(p.grad == 0)

    def test_non_scalar_loss(self):
        with pytest.raises(ContractError):
            leaf([1.0, 2.0]).backward()

    def test_graph_freed_after_backward(self):
        with precision(np.float64):
            x = leaf(2.0)
            y = x * x
            y.backward()
            y.backward()
        assert x.grad == pytest.approx(4.0)

    def test_retained_graph_accumulates(self):
        with precision(np.float64):
            x = leaf(2.0)
            y = x * x
            y.backward(retain_graph=True)
            y.backward()
        assert x.grad == pytest.approx(8.0)

    def test_no_grad(self):
        x = leaf([1.0])
        with no_grad():
            y = x * 3
        assert not y.requires_grad

    def test_non_finite_output(self):
        with pytest.raises(NumericError):
            exp(Tensor([1e4], dtype=np.float64))


class TestGradCheck:
    def test_square_example(self):
        with precision(np.float64):
            x = leaf([1.0])
            assert grad_check(lambda: (x * x).sum(), [x], 1e-5) < 1e-6

    def test_linear_round_off(self):
        with precision(np.float64):
            x = leaf([0.3, -1.2, 2.0])
            c = np.array([1.5, -2.0, 0.25])
            assert grad_check(lambda: (x * c).sum(), [x]) < 1e-8

    def test_two_layer_mlp_mse(self):
        r = np.random.default_rng(1)
        with precision(np.float64):
            W1, b1 = leaf(r.normal(size=(4, 6))), leaf(r.normal(size=6) * 0.1 + 0.5)
            W2, b2 = leaf(r.normal(size=(6, 2))), leaf(np.zeros(2))
            X, Y = r.normal(size=(5, 4)), r.normal(size=(5, 2))

            def f():
                h = relu(matmul(Tensor(X), W1) + b1)
                return ((matmul(h, W2) + b2 - Tensor(Y)).square()).mean()

            assert grad_check(f, [W1, b1, W2, b2]) < 1e-4

    def test_requires_float64(self):
        x = Tensor(np.ones(2, dtype=np.float32), requires_grad=True)
        with pytest.raises(ContractError):
            grad_check(lambda: x.sum(), [x])

    def test_non_finite(self):
        with precision(np.float64):
            x = leaf([-1.0])
            with pytest.raises((NumericError, DomainError)):
                grad_check(lambda: log(x).sum(), [x])

    @given(st.integers(0, 10**6))
    def test_every_op(self, seed):
        r = np.random.default_rng(seed)
        with precision(np.float64):
            a = leaf(r.normal(size=(3, 4)))
            b = leaf(r.uniform(0.5, 2.0, size=(4,)))
            c = leaf(r.normal(size=(4, 2)))

            def f():
                u = a * b + a / b - b.sqrt() + (a**2) * 0.1
                v = concat([u, stack([b, b], axis=0)], axis=0)
                w = logsumexp(matmul(v, c), axis=1) + log(b).sum()
                # keep |f| near 1: central differences lose eps*|f|/h absolute accuracy
                return (w * 0.1).exp().sum() + u[1:, ::2].mean() + v.T.reshape(-1).mean()

            assert grad_check(f, [a, b, c]) < 1e-4


class TestRng:
    def test_same_seed_same_stream(self):
        np.testing.assert_array_equal(Rng(7).stream("x", 3).normal(10), Rng(7).stream("x", 3).normal(10))

    def test_streams_independent_of_request_order(self):
        r = Rng(1)
        a1 = r.stream("a").normal(5)
        r.stream("b").normal(100)
        np.testing.assert_array_equal(a1, Rng(1).stream("a").normal(5))
        assert not np.array_equal(a1, Rng(1).stream("b").normal(5))

    def test_moments(self):
        x = Rng(0).stream("moments").normal(10**6)
        assert abs(x.mean()) < 0.01
        assert abs(x.var() - 1.0) < 0.01

    def test_negative_key(self):
        with pytest.raises(ValueError):
            Rng(0).stream(-1)
