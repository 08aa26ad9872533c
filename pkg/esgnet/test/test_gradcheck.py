"""
Finite difference checks of every differentiable op and of the full
model, run in 64 bit
"""

import unittest

import numpy as np

from esgnet.core.dataset import EventAnnotation
from esgnet.core.enums import (
    GateMode,
    Precision
)
from esgnet.core.losses import (
    focal_loss,
    giou_loss_1d,
    total_loss
)
from esgnet.core.mode import gumbel_gate
from esgnet.core.model import ESGNet
from esgnet.tensor import ops
from esgnet.tensor.gradcheck import check_gradients
from esgnet.tensor.nn import (
    AttentionParams,
    CrossAttentionBlock,
    SelfAttentionBlock,
    attention_mask,
    multi_head_attention
)
from esgnet.tensor.tensor import (
    Param,
    Tensor,
    precision
)
from esgnet.test.utilities import (
    random_sample,
    toy_model_config
)

OP_TOLERANCE = 1e-4
MODEL_TOLERANCE = 1e-3


class OpGradientTest(unittest.TestCase):
    """
    Test analytic gradients of the primitives against central differences
    """

    def setUp(self):
        self._precision = precision(Precision.Float64)
        self._precision.__enter__()
        self.rng = np.random.default_rng(20)

    def tearDown(self):
        self._precision.__exit__(None, None, None)

    def param(self, *shape, low=None, high=None) -> Param:
        """
        A random float64 parameter
        """
        if low is not None:
            return Param(self.rng.uniform(low, high, size=shape))
        return Param(self.rng.standard_normal(shape))

    def weighted(self, out: Tensor) -> Tensor:
        """
        A scalar reduction sensitive to every output entry
        """
        if not hasattr(self, '_weights') or \
                self._weights.shape != out.shape:
            self._weights = np.random.default_rng(99).standard_normal(
                out.shape)
        return ops.sum(out * self._weights)

    def assert_gradients(self, fn, tensors, tolerance=OP_TOLERANCE):
        """
        Asserts the gradients of fn with respect to tensors are right
        """
        result = check_gradients(fn, tensors)
        self.assertTrue(result.passed(tolerance),
                        'max error {} in {} at {}'.format(
                            result.max_error, result.worst_tensor,
                            result.worst_index))

    def test_linear(self):
        """
        Test linear
        """
        x, w, b = self.param(4, 3), self.param(3, 2), self.param(2)
        self.assert_gradients(
            lambda: self.weighted(ops.linear(x, w, b)), [x, w, b], 1e-6)

    def test_arithmetic(self):
        """
        Test broadcasting arithmetic
        """
        a = self.param(3, 4)
        b = self.param(4, low=0.5, high=2.0)
        self.assert_gradients(
            lambda: self.weighted((a + b) * a - a / b - b), [a, b])

    def test_elementwise(self):
        """
        Test exp, log, power and softplus
        """
        a = self.param(5, low=0.5, high=2.0)
        self.assert_gradients(
            lambda: self.weighted(ops.exp(a) + ops.log(a)
                                  + ops.power(a, 2.5) + ops.softplus(a)),
            [a])

    def test_activations(self):
        """
        Test the activation kinds away from their kinks
        """
        a = Param(np.array([-1.5, -0.4, 0.3, 1.2, 2.0]))
        slope = Param(np.array([0.2]))
        self.assert_gradients(
            lambda: self.weighted(ops.relu(a) + ops.leaky_relu(a, 0.1)
                                  + ops.sigmoid(a) + ops.gelu(a)
                                  + ops.prelu(a, slope)),
            [a, slope])

    def test_minimum_maximum(self):
        """
        Test elementwise minimum and maximum without ties
        """
        a = Param(np.array([0.0, 2.0, -1.0]))
        b = Param(np.array([1.0, 1.0, -3.0]))
        self.assert_gradients(
            lambda: self.weighted(ops.minimum(a, b) * 2 + ops.maximum(a, b)),
            [a, b])

    def test_softmax(self):
        """
        Test masked row softmax
        """
        x = self.param(3, 4)
        mask = np.array([[True, True, False, True]] * 3)
        self.assert_gradients(
            lambda: self.weighted(ops.softmax_rows(x, mask)), [x])

    def test_layer_norm(self):
        """
        Test layer normalization
        """
        x, gain, bias = self.param(4, 5), self.param(5), self.param(5)
        self.assert_gradients(
            lambda: self.weighted(ops.layer_norm(x, gain, bias)),
            [x, gain, bias])

    def test_conv1d(self):
        """
        Test strided convolution with bias
        """
        x, kernel, bias = self.param(7, 3), self.param(3, 3, 2), \
            self.param(2)
        self.assert_gradients(
            lambda: self.weighted(ops.conv1d(x, kernel, 2, bias=bias)),
            [x, kernel, bias])

    def test_depthwise_conv1d(self):
        """
        Test depthwise convolution
        """
        x, kernel = self.param(8, 3), self.param(3, 3)
        self.assert_gradients(
            lambda: self.weighted(ops.depthwise_conv1d(x, kernel, 2)),
            [x, kernel])

    def test_indexing_and_concat(self):
        """
        Test indexing, concatenation, transpose and reshape
        """
        a, b = self.param(3, 2), self.param(2, 2)
        self.assert_gradients(
            lambda: self.weighted(
                ops.concat([a[np.array([2, 0, 2])], b.T], axis=0)
                .reshape(10)),
            [a, b])

    def test_masked_mean_rows(self):
        """
        Test the masked time mean
        """
        x = self.param(5, 3)
        valid = np.array([True, False, True, True, False])
        self.assert_gradients(
            lambda: self.weighted(ops.masked_mean_rows(x, valid)), [x])

    def test_attention(self):
        """
        Test multi-head attention, all projections included
        """
        params = AttentionParams(np.random.default_rng(3), 16, 4)
        x = self.param(6, 16)
        valid = np.array([True] * 5 + [False])
        mask = attention_mask(valid, valid)
        self.assert_gradients(
            lambda: self.weighted(multi_head_attention(x, x, x, params, mask,
                                                       valid)),
            [x] + params.parameters())

    def test_blocks(self):
        """
        Test the self and cross attention blocks
        """
        rng = np.random.default_rng(4)
        self_block = SelfAttentionBlock(rng, 8, 2, 2)
        cross_block = CrossAttentionBlock(rng, 8, 2, 2)
        x, y = self.param(5, 8), self.param(5, 8)
        valid = np.array([True] * 4 + [False])
        mask = attention_mask(valid, valid)
        self.assert_gradients(
            lambda: self.weighted(cross_block(self_block(x, mask, valid), y,
                                              mask, valid)),
            [x, y] + self_block.parameters() + cross_block.parameters())

    def test_focal_loss(self):
        """
        Test the focal loss on logits
        """
        logits = self.param(5, 3)
        targets = (self.rng.random((5, 3)) > 0.5).astype(np.float64)
        valid = np.array([True, True, True, False, True])
        self.assert_gradients(
            lambda: focal_loss(logits, targets, 0.25, 2.0, valid), [logits])

    def test_giou_loss(self):
        """
        Test the 1D gIoU loss on overlapping intervals
        """
        start = Param(np.array([0.0, 3.0, 5.0]))
        end = Param(np.array([2.0, 8.0, 9.0]))
        self.assert_gradients(
            lambda: giou_loss_1d(start, end, np.array([1.0, 4.0, 0.0]),
                                 np.array([3.0, 6.0, 10.0])),
            [start, end])

    def test_soft_gate(self):
        """
        Test the Gumbel-Softmax mixture with fixed noise
        """
        logits = self.param(2)
        values = [self.param(4, 3), self.param(4, 3)]

        def loss():
            gate, _ = gumbel_gate(logits, 1.0, True,
                                  np.random.default_rng(0), GateMode.Soft)
            return self.weighted(ops.gated_sum(gate, values))

        self.assert_gradients(loss, [logits] + values)


class ModelGradientTest(unittest.TestCase):
    """
    Test the gradient of the full training loss
    """

    def test_full_model(self):
        """
        Test every parameter of a toy model, sampling a few entries of
        each
        """
        cfg = toy_model_config(embed_dim=16,
                               heads=4,
                               max_length=16,
                               pyramid_levels=2,
                               num_classes=4,
                               moe_layers=2,
                               experts=2,
                               gate_mode='soft')
        rng = np.random.default_rng(8)
        with precision(Precision.Float64):
            model = ESGNet(cfg)
            sample = random_sample(rng, 12, 4, [
                EventAnnotation(1, 2.0, 7.0),
                EventAnnotation(3, 0.0, 12.0)])
            padded, valid = model.prepare(sample)
            targets = model.targets(padded, valid)

            def loss():
                model.mode.set_noise_seed(11)
                outputs = model(padded.audio, padded.visual, valid,
                                training=True, tau=1.0)
                value, _ = total_loss(outputs.heads, outputs.guidance,
                                      targets, cfg.alphas)
                return value

            state = model.state()
            result = check_gradients(loss, list(state.values()),
                                     list(state.keys()), max_entries=2)
        self.assertGreater(result.entries_checked, 100)
        self.assertTrue(result.passed(MODEL_TOLERANCE),
                        'max error {} in {} at {}'.format(
                            result.max_error, result.worst_tensor,
                            result.worst_index))


if __name__ == '__main__':
    unittest.main()
