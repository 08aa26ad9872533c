"""
Tensor core tests
"""

import math
import unittest

import numpy as np

from esgnet.core.enums import (
    Activation,
    Padding,
    Precision
)
from esgnet.core.exceptions import (
    ConfigError,
    ContractError,
    DimensionError,
    NonFiniteError
)
from esgnet.tensor import ops
from esgnet.tensor.nn import (
    AttentionParams,
    Module,
    Linear,
    attention_mask,
    multi_head_attention
)
from esgnet.tensor.optim import (
    Adam,
    adam_step,
    clip_grad_norm
)
from esgnet.tensor.tensor import (
    Graph,
    Param,
    Tensor,
    backward,
    no_grad,
    precision
)


class LinearTest(unittest.TestCase):
    """
    Test the affine map
    """

    def test_identity_input(self):
        """
        Test that an identity input reproduces the weights
        """
        out = ops.linear(Tensor(np.eye(2)),
                         Tensor(np.array([[3.0, 0.0], [0.0, 5.0]])))
        np.testing.assert_array_equal(out.data, [[3, 0], [0, 5]])

    def test_bias(self):
        """
        Test the bias is added
        """
        out = ops.linear(Tensor([[1.0, 2.0]]), Tensor([[1.0], [1.0]]),
                         Tensor([1.0]))
        np.testing.assert_array_equal(out.data, [[4]])

    def test_shape_mismatch(self):
        """
        Test that incompatible shapes name both shapes
        """
        with self.assertRaises(DimensionError) as e:
            ops.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        self.assertIn('(2, 3)', str(e.exception))

    def test_input_gradient(self):
        """
        Test d sum(x @ w) / dx is the broadcast row sums of w
        """
        rng = np.random.default_rng(1)
        with precision(Precision.Float64):
            x = Param(rng.standard_normal((4, 3)))
            w = Tensor(rng.standard_normal((3, 2)))
            backward(ops.sum(ops.linear(x, w)))
        expected = np.broadcast_to(w.data.sum(axis=1), (4, 3))
        np.testing.assert_allclose(x.grad, expected, rtol=1e-12)


class SoftmaxTest(unittest.TestCase):
    """
    Test row softmax
    """

    def test_uniform(self):
        """
        Test equal inputs give a uniform row
        """
        out = ops.softmax_rows(Tensor([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]],
                                   rtol=1e-6)

    def test_large_values(self):
        """
        Test large logits do not overflow
        """
        out = ops.softmax_rows(Tensor([[1000.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[1.0, 0.0]])

    def test_values(self):
        """
        Test against direct exponentiation
        """
        out = ops.softmax_rows(Tensor([[1.0, 2.0, 3.0]]))
        np.testing.assert_allclose(out.data,
                                   [[0.09003, 0.24473, 0.66524]],
                                   atol=1e-5)

    def test_mask(self):
        """
        Test masked positions get zero probability and fully masked rows
        are zero
        """
        mask = np.array([[True, False, True], [False, False, False]])
        out = ops.softmax_rows(Tensor([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]),
                               mask)
        e1, e3 = math.exp(1), math.exp(3)
        np.testing.assert_allclose(out.data[0],
                                   [e1 / (e1 + e3), 0, e3 / (e1 + e3)],
                                   rtol=1e-6)
        np.testing.assert_array_equal(out.data[1], [0, 0, 0])

    def test_rows_sum_to_one(self):
        """
        Test every row sums to one
        """
        rng = np.random.default_rng(3)
        out = ops.softmax_rows(Tensor(rng.standard_normal((5, 7))))
        np.testing.assert_allclose(out.data.sum(axis=1), np.ones(5),
                                   atol=1e-6)


class AttentionTest(unittest.TestCase):
    """
    Test multi-head attention
    """

    @staticmethod
    def identity_params(width: int, heads: int) -> AttentionParams:
        """
        Attention with identity projections and zero biases
        """
        params = AttentionParams(np.random.default_rng(0), width, heads)
        for name in ('w_q', 'w_k', 'w_v', 'w_o'):
            getattr(params, name).data = np.eye(width, dtype=np.float32)
        for name in ('b_q', 'b_k', 'b_v', 'b_o'):
            getattr(params, name).data[:] = 0
        return params

    def test_single_position(self):
        """
        Test a single key returns its value row
        """
        params = self.identity_params(4, 2)
        v = Tensor([[1.0, -2.0, 3.0, 0.5]])
        q = Tensor([[0.3, 0.1, -0.2, 0.4]])
        out = multi_head_attention(q, q, v, params)
        np.testing.assert_allclose(out.data, v.data, rtol=1e-6)

    def test_uniform_keys(self):
        """
        Test identical keys average the value rows
        """
        params = self.identity_params(4, 2)
        rng = np.random.default_rng(5)
        q = Tensor(rng.standard_normal((3, 4)))
        k = Tensor(np.ones((5, 4)))
        v = Tensor(rng.standard_normal((5, 4)))
        out = multi_head_attention(q, k, v, params)
        np.testing.assert_allclose(
            out.data, np.broadcast_to(v.data.mean(axis=0), (3, 4)),
            rtol=1e-5, atol=1e-6)

    def test_recorded_weights(self):
        """
        Test the recorded head-averaged map has valid rows summing to one
        """
        params = AttentionParams(np.random.default_rng(2), 4, 2)
        rng = np.random.default_rng(6)
        x = Tensor(rng.standard_normal((5, 4)))
        valid = np.array([True, True, True, False, False])
        weights = []
        multi_head_attention(x, x, x, params, attention_mask(valid, valid),
                             valid, weights)
        self.assertEqual(weights[0].shape, (5, 5))
        np.testing.assert_allclose(weights[0].sum(axis=1), np.ones(5),
                                   atol=1e-6)
        np.testing.assert_array_equal(weights[0][:, 3:], 0)

    def test_empty_row_for_valid_query(self):
        """
        Test a valid query without keys is rejected
        """
        params = AttentionParams(np.random.default_rng(2), 4, 2)
        x = Tensor(np.ones((2, 4)))
        mask = np.array([[True, True], [False, False]])
        with self.assertRaises(ContractError):
            multi_head_attention(x, x, x, params, mask,
                                 np.array([True, True]))
        # an invalid query may have an empty row
        multi_head_attention(x, x, x, params, mask, np.array([True, False]))

    def test_heads_must_divide_width(self):
        """
        Test the head count must divide the width
        """
        with self.assertRaises(ConfigError):
            AttentionParams(np.random.default_rng(0), 6, 4)


class ConvolutionTest(unittest.TestCase):
    """
    Test temporal convolutions
    """

    def test_pointwise_identity(self):
        """
        Test a K=1 identity kernel
        """
        x = Tensor(np.random.default_rng(0).standard_normal((6, 3)))
        kernel = Tensor(np.eye(3)[None, :, :])
        np.testing.assert_allclose(ops.conv1d(x, kernel).data, x.data,
                                   rtol=1e-6)

    def test_hand_convolution(self):
        """
        Test an all-ones kernel with zero padding
        """
        x = Tensor(np.array([[1.0], [2.0], [3.0], [4.0]]))
        out = ops.conv1d(x, Tensor(np.ones((3, 1, 1))))
        np.testing.assert_array_equal(out.data[:, 0], [3, 6, 9, 7])

    def test_stride(self):
        """
        Test same padding with stride 2 halves the length
        """
        x = Tensor(np.ones((8, 2)))
        self.assertEqual(ops.conv1d(x, Tensor(np.ones((3, 2, 5))),
                                    stride=2).shape, (4, 5))
        self.assertEqual(ops.depthwise_conv1d(x, Tensor(np.ones((3, 2))),
                                              stride=2).shape, (4, 2))

    def test_valid_padding(self):
        """
        Test valid padding drops the border positions
        """
        x = Tensor(np.ones((8, 2)))
        out = ops.conv1d(x, Tensor(np.ones((3, 2, 1))),
                         padding=Padding.Valid)
        self.assertEqual(out.shape, (6, 1))
        np.testing.assert_array_equal(out.data[:, 0], 6)

    def test_even_kernel_same_padding(self):
        """
        Test same padding rejects even kernels
        """
        with self.assertRaises(ConfigError):
            ops.conv1d(Tensor(np.ones((4, 1))), Tensor(np.ones((2, 1, 1))))


class ActivationTest(unittest.TestCase):
    """
    Test activations
    """

    def test_values(self):
        """
        Test hand computed activation values
        """
        x = Tensor([-1.0, 2.0])
        np.testing.assert_array_equal(ops.relu(x).data, [0, 2])
        self.assertEqual(ops.sigmoid(Tensor([0.0])).item(), 0.5)
        self.assertAlmostEqual(
            ops.activation(Tensor([-2.0]), Activation.LeakyRelu, 0.1).item(),
            -0.2, places=6)
        self.assertAlmostEqual(ops.gelu(Tensor([0.0])).item(), 0.0)

    def test_prelu_needs_slope(self):
        """
        Test prelu requires a learned slope
        """
        with self.assertRaises(ConfigError):
            ops.activation(Tensor([1.0]), Activation.Prelu)

    def test_prelu(self):
        """
        Test prelu uses the learned slope on negative values
        """
        slope = Param([0.5])
        out = ops.activation(Tensor([-4.0, 3.0]), Activation.Prelu, slope)
        np.testing.assert_array_equal(out.data, [-2, 3])


class LayerNormTest(unittest.TestCase):
    """
    Test layer normalization
    """

    def test_constant_row(self):
        """
        Test a constant row normalizes to zero
        """
        out = ops.layer_norm(Tensor([[3.0, 3.0, 3.0]]), Tensor(np.ones(3)),
                             Tensor(np.zeros(3)))
        np.testing.assert_array_equal(out.data, [[0, 0, 0]])

    def test_unit_variance_row(self):
        """
        Test [1, -1] is already normalized
        """
        out = ops.layer_norm(Tensor([[1.0, -1.0]]), Tensor(np.ones(2)),
                             Tensor(np.zeros(2)))
        np.testing.assert_allclose(out.data, [[1, -1]], atol=1e-4)


class BackwardTest(unittest.TestCase):
    """
    Test reverse mode accumulation
    """

    def test_linear_case(self):
        """
        Test d sum(w * x) / dw = x
        """
        x = np.array([1.0, -2.0, 3.0], dtype=np.float32)
        w = Param(np.zeros(3))
        backward(ops.sum(w * x))
        np.testing.assert_array_equal(w.grad, x)

    def test_accumulation(self):
        """
        Test two backward calls without zeroing double the gradient
        """
        x = np.array([1.0, -2.0, 3.0], dtype=np.float32)
        w = Param(np.ones(3))
        backward(ops.sum(w * x))
        backward(ops.sum(w * x))
        np.testing.assert_array_equal(w.grad, 2 * x)
        w.zero_grad()
        np.testing.assert_array_equal(w.grad, 0)

    def test_shared_input(self):
        """
        Test a tensor used twice receives both contributions
        """
        w = Param([3.0])
        backward(ops.sum(w * w))
        np.testing.assert_array_equal(w.grad, [6.0])

    def test_repeated_index(self):
        """
        Test repeated indices accumulate gradient
        """
        w = Param([1.0, 2.0])
        backward(ops.sum(w[np.array([0, 0, 1])]))
        np.testing.assert_array_equal(w.grad, [2.0, 1.0])

    def test_non_scalar_loss(self):
        """
        Test backward requires a scalar
        """
        w = Param([1.0, 2.0])
        with self.assertRaises(ContractError):
            backward(w * 2)

    def test_no_grad(self):
        """
        Test nothing is recorded inside no_grad
        """
        w = Param([1.0])
        graph = Graph.reset()
        with no_grad():
            out = w * 2
        self.assertFalse(out.requires_grad)
        self.assertEqual(len(graph), 0)

    def test_non_finite_watchdog(self):
        """
        Test NaN/Inf results raise with the op name
        """
        with np.errstate(divide='ignore'):
            with self.assertRaises(NonFiniteError) as e:
                ops.log(Tensor([0.0]))
        self.assertEqual(e.exception.op, 'log')

    def test_gated_sum_one_hot(self):
        """
        Test a one-hot gate reproduces the selected value exactly
        """
        rng = np.random.default_rng(4)
        values = [Tensor(rng.standard_normal((3, 2)).astype(np.float32))
                  for _ in range(3)]
        gate = Tensor(np.array([0.0, 1.0, 0.0], dtype=np.float32))
        out = ops.gated_sum(gate, values)
        np.testing.assert_array_equal(out.data, values[1].data)

    def test_straight_through(self):
        """
        Test the forward value is hard and the gradient is the soft one
        """
        soft_in = Param([0.2, 0.8])
        soft = soft_in * 1.0
        hard = ops.straight_through(np.array([0.0, 1.0]), soft)
        np.testing.assert_array_equal(hard.data, [0, 1])
        backward(ops.sum(hard * np.array([2.0, 3.0], dtype=np.float32)))
        np.testing.assert_array_equal(soft_in.grad, [2, 3])


class _TwoLayers(Module):
    def __init__(self):
        rng = np.random.default_rng(0)
        self.first = Linear(rng, 2, 3)
        self.rest = [Linear(rng, 3, 3), Linear(rng, 3, 1, bias=False)]
        self._hidden = Param([1.0])


class ModuleTest(unittest.TestCase):
    """
    Test parameter discovery
    """

    def test_named_parameters(self):
        """
        Test names follow attribute paths, skipping private attributes
        """
        names = list(_TwoLayers().state())
        self.assertEqual(names, ['first.w', 'first.b', 'rest.0.w',
                                 'rest.0.b', 'rest.1.w'])

    def test_num_parameters(self):
        """
        Test scalar parameter counting
        """
        self.assertEqual(_TwoLayers().num_parameters(), 6 + 3 + 9 + 3 + 3)


class OptimizerTest(unittest.TestCase):
    """
    Test Adam and gradient clipping
    """

    def test_zero_gradient(self):
        """
        Test zero gradients and no decay leave parameters unchanged
        """
        param = Param([1.0, -2.0])
        adam_step([param], lr=1e-3)
        np.testing.assert_array_equal(param.data, [1.0, -2.0])

    def test_first_step(self):
        """
        Test the first step with gradient 1 moves by about -lr
        """
        with precision(Precision.Float64):
            param = Param([0.5])
        param.grad[:] = 1.0
        adam_step([param], lr=1e-3)
        self.assertAlmostEqual(param.data[0], 0.5 - 1e-3, places=9)
        np.testing.assert_array_equal(param.grad, [0.0])

    def test_decoupled_decay(self):
        """
        Test weight decay shrinks parameters by (1 - lr * decay)
        """
        with precision(Precision.Float64):
            param = Param([1.0])
        adam_step([param], lr=1e-3, weight_decay=1e-4)
        self.assertAlmostEqual(param.data[0], 1 - 1e-7, places=12)

    def test_optimizer_step_count(self):
        """
        Test Adam counts steps
        """
        param = Param([1.0])
        optimizer = Adam([param])
        optimizer.step(1e-3)
        optimizer.step(1e-3)
        self.assertEqual(optimizer.step_count(), 2)

    def test_clip(self):
        """
        Test clipping rescales to the maximum norm
        """
        with precision(Precision.Float64):
            param = Param([0.0, 0.0])
        param.grad[:] = [3.0, 4.0]
        norm = clip_grad_norm([param], 1.0)
        self.assertAlmostEqual(norm, 5.0)
        self.assertAlmostEqual(float(np.linalg.norm(param.grad)), 1.0,
                               places=5)

    def test_clip_disabled(self):
        """
        Test a zero maximum disables clipping
        """
        param = Param([0.0])
        param.grad[:] = 10.0
        clip_grad_norm([param], 0.0)
        np.testing.assert_array_equal(param.grad, [10.0])


if __name__ == '__main__':
    unittest.main()
