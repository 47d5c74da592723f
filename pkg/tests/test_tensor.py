"""
Tests for the tensor engine: forward values, gradients against central
differences, and the error contract of every primitive the detectors use.
"""

import numpy as np
import pytest

from src.exceptions import ContractError, DegenerateVectorError, DimensionError, NonFiniteError
from src.tensor import Tensor, backward, check_gradients, ops, parameter, relative_error

GRAD_TOL = 1e-4
GRAD_SEEDS = range(20)


# =============================================================================
# Tensor basics
# =============================================================================

class TestTensor:

    def test_rejects_non_finite_values(self):
        with pytest.raises(NonFiniteError):
            Tensor([1.0, np.nan])
        with pytest.raises(NonFiniteError):
            Tensor([np.inf])

    def test_data_is_read_only(self):
        t = Tensor(np.ones(3))
        with pytest.raises(ValueError):
            t.data[0] = 2.0

    def test_numpy_returns_writable_copy(self):
        t = Tensor(np.ones(3))
        copy = t.numpy()
        copy[0] = 5.0
        assert t.data[0] == 1.0

    def test_item_requires_single_element(self):
        assert Tensor(3.5).item() == 3.5
        with pytest.raises(ContractError):
            Tensor([1.0, 2.0]).item()

    def test_backward_requires_scalar_root(self):
        x = parameter(np.ones(3))
        with pytest.raises(ContractError):
            backward(ops.scale(x, 2.0))

    def test_assign_keeps_shape(self):
        p = parameter(np.zeros((2, 2)))
        p.assign(np.ones((2, 2)))
        assert np.all(p.data == 1.0)
        with pytest.raises(ContractError):
            p.assign(np.ones(3))

    def test_assign_only_on_leaves(self):
        p = parameter(np.ones(2))
        with pytest.raises(ContractError):
            ops.scale(p, 2.0).assign(np.zeros(2))

    def test_gradient_accumulates_over_shared_inputs(self):
        x = parameter(np.array([1.0, 2.0]))
        y = ops.total(ops.add(ops.square(x), x))
        backward(y)
        np.testing.assert_allclose(x.grad, 2 * x.data + 1.0)

    def test_unreached_leaf_keeps_zero_grad(self):
        used, unused = parameter(np.array([1.0, -2.0])), parameter(np.ones((2, 2)))
        backward(ops.total(ops.square(used)))
        np.testing.assert_array_equal(unused.grad, np.zeros((2, 2)))
        np.testing.assert_array_equal(used.grad, [2.0, -4.0])

    def test_repeated_backward_is_bitwise_identical(self, rng):
        x = parameter(rng.normal(size=(3, 4)))
        w = parameter(rng.normal(size=(4, 2)))

        def loss():
            return ops.softmax_xent(ops.matmul(ops.tanh(x), w), [0, 1, 1])

        backward(loss())
        first = (x.grad.copy(), w.grad.copy())
        x.zero_grad()
        w.zero_grad()
        backward(loss())
        assert first[0].tobytes() == x.grad.tobytes()
        assert first[1].tobytes() == w.grad.tobytes()


# =============================================================================
# Forward values
# =============================================================================

class TestForward:

    def test_softmax_xent_batch_mean(self):
        logits = np.array([[2.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        loss = ops.softmax_xent(Tensor(logits), [0, 1]).item()
        expected = np.mean([
            -(2.0 - np.log(np.exp(2.0) + 2.0)),
            np.log(3.0),
        ])
        assert loss == pytest.approx(expected)

    @pytest.mark.parametrize("classes", [2, 5, 10])
    def test_softmax_xent_uniform_logits(self, classes):
        loss = ops.softmax_xent(Tensor(np.full((3, classes), 0.7)), [0, 1, classes - 1]).item()
        assert loss == pytest.approx(np.log(classes), abs=1e-12)

    def test_softmax_xent_saturated_logits(self):
        logits = parameter([[1000.0, 0.0, 0.0]])
        assert ops.softmax_xent(logits, [0]).item() == pytest.approx(0.0, abs=1e-12)
        loss = ops.softmax_xent(logits, [1])
        assert loss.item() == pytest.approx(1000.0)
        backward(loss)
        np.testing.assert_allclose(logits.grad, [[1.0, -1.0, 0.0]], atol=1e-12)

    def test_matmul_example(self):
        out = ops.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).numpy()
        np.testing.assert_array_equal(out, [[11.0]])

    def test_matmul_identity(self, rng):
        a = rng.normal(size=(4, 3))
        np.testing.assert_array_equal(ops.matmul(Tensor(a), Tensor(np.eye(3))).numpy(), a)
        np.testing.assert_array_equal(ops.matmul(Tensor(np.eye(4)), Tensor(a)).numpy(), a)

    def test_matmul_matches_loops(self, rng):
        a, b = rng.normal(size=(3, 5)), rng.normal(size=(5, 2))
        expected = np.zeros((3, 2))
        for i in range(3):
            for j in range(2):
                for k in range(5):
                    expected[i, j] += a[i, k] * b[k, j]
        np.testing.assert_allclose(ops.matmul(Tensor(a), Tensor(b)).numpy(), expected, rtol=1e-12)

    def test_l2_normalize_rows(self):
        out = ops.l2_normalize(Tensor([[3.0, 4.0], [0.0, 2.0]])).numpy()
        np.testing.assert_allclose(out, [[0.6, 0.8], [0.0, 1.0]])

    def test_l2_normalize_degenerate(self):
        with pytest.raises(DegenerateVectorError):
            ops.l2_normalize(Tensor([0.0, 0.0]))

    def test_arccos_requires_open_interval(self):
        with pytest.raises(ContractError):
            ops.arccos(Tensor([1.0]))

    def test_global_avg_pool(self):
        z = np.arange(2 * 3 * 2 * 2, dtype=float).reshape(2, 3, 2, 2)
        out = ops.global_avg_pool(Tensor(z)).numpy()
        np.testing.assert_allclose(out, z.mean(axis=(2, 3)))

    def test_conv1x1_matches_einsum(self, rng):
        z = rng.normal(size=(2, 3, 4, 4))
        w = rng.normal(size=(5, 3))
        b = rng.normal(size=5)
        out = ops.conv1x1(Tensor(z), Tensor(w), Tensor(b)).numpy()
        expected = np.einsum("dc,bchw->bdhw", w, z) + b[None, :, None, None]
        np.testing.assert_allclose(out, expected)

    def test_conv3x3_identity_kernel(self, rng):
        x = rng.normal(size=(1, 2, 5, 5))
        w = np.zeros((2, 2, 3, 3))
        w[0, 0, 1, 1] = 1.0
        w[1, 1, 1, 1] = 1.0
        out = ops.conv3x3(Tensor(x), Tensor(w), Tensor(np.zeros(2))).numpy()
        np.testing.assert_allclose(out, x)

    def test_avg_pool_halves_spatial(self):
        x = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
        out = ops.avg_pool2x2(Tensor(x)).numpy()
        np.testing.assert_allclose(out[0, 0], [[2.5, 4.5], [10.5, 12.5]])

    def test_max_pool_halves_spatial(self):
        x = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
        out = ops.max_pool2x2(Tensor(x)).numpy()
        np.testing.assert_allclose(out[0, 0], [[5.0, 7.0], [13.0, 15.0]])


class TestShapeErrors:

    def test_add_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ops.add(Tensor(np.ones(2)), Tensor(np.ones(3)))

    def test_matmul_inner_mismatch(self):
        with pytest.raises(DimensionError):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_conv1x1_channel_mismatch(self):
        with pytest.raises(DimensionError):
            ops.conv1x1(Tensor(np.ones((3, 2, 2))), Tensor(np.ones((4, 2))), Tensor(np.ones(4)))

    def test_softmax_xent_label_count(self):
        with pytest.raises(DimensionError):
            ops.softmax_xent(Tensor(np.zeros((2, 3))), [0])

    def test_reshape_size(self):
        with pytest.raises(DimensionError):
            ops.reshape(Tensor(np.ones(6)), (4, 2))


# =============================================================================
# Gradient checks
# =============================================================================

@pytest.mark.parametrize("seed", GRAD_SEEDS)
class TestGradients:

    def test_dense_relu(self, seed):
        rng = np.random.default_rng(seed)
        arrays = [rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=2)]
        report = check_gradients(lambda x, w, b: ops.total(ops.square(ops.relu(ops.dense(x, w, b)))), arrays)
        assert report["max"] < GRAD_TOL

    def test_conv3x3(self, seed):
        rng = np.random.default_rng(seed)
        arrays = [rng.normal(size=(2, 2, 4, 4)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)]
        report = check_gradients(lambda x, w, b: ops.total(ops.square(ops.conv3x3(x, w, b))), arrays)
        assert report["max"] < GRAD_TOL

    def test_aux_path(self, seed):
        """conv1x1 -> pool -> normalize -> cosine against normalized centers."""
        rng = np.random.default_rng(seed)
        arrays = [rng.normal(size=(2, 3, 4, 4)), rng.normal(size=(4, 3)), rng.normal(size=4),
                  rng.normal(size=(5, 4))]

        def fn(z, w, b, centers):
            p = ops.l2_normalize(ops.global_avg_pool(ops.conv1x1(z, w, b)))
            cs = ops.matmul(p, ops.transpose(ops.l2_normalize(centers)))
            return ops.total(ops.square(cs))

        assert check_gradients(fn, arrays)["max"] < GRAD_TOL

    def test_arcface_pieces(self, seed):
        rng = np.random.default_rng(seed)
        cs = rng.uniform(-0.9, 0.9, size=(3, 4))
        margin = np.zeros((3, 4))
        margin[np.arange(3), [0, 2, 1]] = 0.3

        def fn(c):
            angles = ops.add(ops.arccos(ops.clamp(c, -0.999, 0.999)), Tensor(margin))
            return ops.softmax_xent(ops.scale(ops.cos(angles), 8.0), [0, 2, 1])

        assert check_gradients(fn, [cs])["max"] < GRAD_TOL

    def test_pools_and_tanh(self, seed):
        rng = np.random.default_rng(seed)
        # distinct values keep max pooling differentiable at every perturbed point
        x = rng.permutation(32).reshape(1, 2, 4, 4) / 10.0

        def fn(a):
            return ops.total(ops.tanh(ops.add(ops.avg_pool2x2(a), ops.max_pool2x2(a))))

        assert check_gradients(fn, [x])["max"] < GRAD_TOL


def test_relative_error_floor():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 1.1)
