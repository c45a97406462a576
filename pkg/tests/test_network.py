# -*- coding: utf-8 -*-

"""
Tests the full segmentation network: shapes, initialization, capacity accounting and state handling.
"""
import unittest
from unittest import TestCase

import numpy as np

from tests.context import SLOW_TESTS
from tests.utils import tiny_model_config
from tumorseg.seglib.config import ModelConfig
from tumorseg.seglib.errors import ConfigError, ShapeError
from tumorseg.seglib.nn.layers import Conv3d, GroupNorm
from tumorseg.seglib.nn import gradcheck
from tumorseg.seglib.nn.blocks import ConvBlock, DualResBlock
from tumorseg.seglib.nn.network import SegmentationNetwork, flops_estimate, init_params, param_count
from tumorseg.seglib.optim import Adam, soft_dice_loss

# reported cost of the published model for a 128^3 input
REPORTED_FLOPS = 86.58e9


class TestSegmentationNetwork(TestCase):
    """
    Tests the forward pass and input validation.
    """

    @classmethod
    def setUpClass(cls):
        cls.config = tiny_model_config()
        cls.network = init_params(cls.config)

    def test_output(self):
        """
        Ensure the output has one probability channel per class, strictly inside (0, 1).
        """
        x = np.random.default_rng(0).normal(size=(2, 4, 8, 8, 8)).astype(np.float32)
        probs = self.network.forward(x)
        self.assertEqual(probs.shape, (2, 3, 8, 8, 8))
        self.assertEqual(probs.dtype, np.float32)
        self.assertTrue(((probs > 0) & (probs < 1)).all())

        with self.subTest(msg="Non-cubic extents."):
            probs = self.network.forward(np.zeros((1, 4, 4, 8, 12), dtype=np.float32))
            self.assertEqual(probs.shape, (1, 3, 4, 8, 12))

    def test_backward_shapes(self):
        """
        Ensure backward fills a gradient for every parameter.
        """
        network = init_params(self.config)
        x = np.random.default_rng(1).normal(size=(1, 4, 8, 8, 8)).astype(np.float32)
        probs = network.forward(x)
        dx = network.backward(np.ones_like(probs))
        self.assertEqual(dx.shape, x.shape)
        for name, p in network.named_parameters():
            with self.subTest(msg=name):
                self.assertIsNotNone(p.grad)
                self.assertEqual(p.grad.shape, p.value.shape)

    def test_backward_matches_numeric(self):
        """
        Ensure the input gradient of a three-level network agrees with finite differences.
        """
        config = tiny_model_config(levels=3)
        network = init_params(config, dtype=np.float64)
        rng = np.random.default_rng(4)
        x = rng.normal(size=(1, 4, 8, 8, 8))
        cotangent = rng.normal(size=(1, 3, 8, 8, 8))
        network.zero_grad()
        network.forward(x)
        dx = network.backward(cotangent)
        indices = rng.choice(x.size, size=12, replace=False)
        numeric = gradcheck.sampled_numeric_gradient(lambda: float((network.forward(x) * cotangent).sum()),
                                                     x, indices, state=gradcheck.branch_state(network))
        self.assertLess(gradcheck.rel_error(dx.reshape(-1)[indices], numeric), 1e-4)

    def test_training_steps(self):
        """
        Ensure a few Adam steps on one batch lower the soft Dice loss of a two-level network.
        """
        network = init_params(self.config)
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 4, 8, 8, 8)).astype(np.float32)
        target = np.zeros((2, 3, 8, 8, 8), dtype=np.float32)
        target[:, :, 2:6, 2:6, 2:6] = 1.0
        optimizer = Adam(network.named_parameters(), lr=1e-2)
        losses = []
        for _ in range(8):
            optimizer.zero_grad()
            loss, grad = soft_dice_loss(network.forward(x), target)
            network.backward(grad)
            optimizer.step()
            losses.append(loss)
        self.assertTrue(np.isfinite(losses).all())
        self.assertLess(losses[-1], losses[0])

    def test_invalid_input(self):
        """
        Ensure the wrong channel count or an indivisible extent raises ShapeError.
        """
        with self.subTest(msg="Three channels."):
            with self.assertRaises(ShapeError):
                self.network.forward(np.zeros((1, 3, 8, 8, 8), dtype=np.float32))
        with self.subTest(msg="Extent not divisible by 2 ** levels."):
            with self.assertRaises(ShapeError):
                self.network.forward(np.zeros((1, 4, 8, 10, 8), dtype=np.float32))
        with self.subTest(msg="Invalid config."):
            with self.assertRaises(ConfigError):
                SegmentationNetwork(tiny_model_config(levels=0))

    @unittest.skipUnless(SLOW_TESTS, "set TUMORSEG_SLOW_TESTS=1 to run the full-resolution pass")
    def test_full_resolution(self):
        """
        Ensure the default network maps a 128^3 four-modality volume to three 128^3 probability maps.
        """
        network = init_params(ModelConfig())
        x = np.random.default_rng(2).normal(size=(1, 4, 128, 128, 128)).astype(np.float32)
        probs = network.forward(x)
        self.assertEqual(probs.shape, (1, 3, 128, 128, 128))
        self.assertTrue(np.isfinite(probs).all())


class TestInitialization(TestCase):
    """
    Tests seeded parameter initialization.
    """

    def test_deterministic(self):
        """
        Ensure the same seed reproduces every tensor and a different seed changes them.
        """
        config = tiny_model_config()
        a = init_params(config).state_dict()
        b = init_params(config).state_dict()
        c = init_params(config, seed=1).state_dict()
        self.assertEqual(list(a), list(b))
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])
        self.assertTrue(any(not np.array_equal(a[n], c[n]) for n in a if n.endswith("weight")))

    def test_defaults(self):
        """
        Ensure biases start at zero and group norms at unit scale and zero shift.
        """
        network = init_params(tiny_model_config())
        for module in network.modules():
            if isinstance(module, GroupNorm):
                np.testing.assert_array_equal(module.gamma.value, 1.0)
                np.testing.assert_array_equal(module.beta.value, 0.0)
            elif isinstance(module, Conv3d):
                np.testing.assert_array_equal(module.bias.value, 0.0)
                self.assertGreater(np.abs(module.weight.value).max(), 0.0)


class TestCapacity(TestCase):
    """
    Tests parameter counting and the FLOPs estimate.
    """

    def test_param_count(self):
        """
        Ensure the default configuration lands in the few-million parameter range.
        """
        count = param_count(ModelConfig())
        self.assertGreaterEqual(count, 2_000_000)
        self.assertLessEqual(count, 4_500_000)
        with self.subTest(msg="Count is the sum of tensor sizes."):
            network = SegmentationNetwork(tiny_model_config())
            self.assertEqual(param_count(tiny_model_config()),
                             sum(v.size for v in network.state_dict().values()))

    def test_bottleneck_width(self):
        """
        Ensure a null bottleneck width doubles the deepest encoder width.
        """
        self.assertEqual(tiny_model_config().bottleneck, 16)
        self.assertEqual(ModelConfig().bottleneck, 128)
        self.assertLess(param_count(tiny_model_config()), param_count(tiny_model_config(bottleneck_filters=32)))

    def test_flops(self):
        """
        Ensure the 128^3 estimate is within a factor of three of the reported cost.
        """
        flops = flops_estimate(ModelConfig(), 128)
        self.assertGreater(flops, REPORTED_FLOPS / 3)
        self.assertLess(flops, REPORTED_FLOPS * 3)
        with self.subTest(msg="Scales with the voxel count."):
            small = flops_estimate(tiny_model_config(), 16)
            large = flops_estimate(tiny_model_config(), 32)
            self.assertAlmostEqual(large / small, 8.0, places=6)
        with self.subTest(msg="Indivisible extent."):
            with self.assertRaises(ShapeError):
                flops_estimate(ModelConfig(), 100)


class TestStateDict(TestCase):
    """
    Tests exporting and restoring parameter values.
    """

    def test_roundtrip(self):
        """
        Ensure loading one network's state into another reproduces its outputs.
        """
        config = tiny_model_config()
        source = init_params(config, seed=5)
        target = init_params(config, seed=6)
        target.load_state_dict({k: v.copy() for k, v in source.state_dict().items()})
        x = np.random.default_rng(3).normal(size=(1, 4, 8, 8, 8)).astype(np.float32)
        np.testing.assert_array_equal(source.forward(x), target.forward(x))

    def test_mismatch(self):
        """
        Ensure missing tensors or wrong shapes raise ShapeError.
        """
        network = init_params(tiny_model_config())
        state = network.state_dict()
        with self.subTest(msg="Missing tensor."):
            partial = dict(state)
            partial.pop("head.bias")
            with self.assertRaises(ShapeError):
                network.load_state_dict(partial)
        with self.subTest(msg="Wrong shape."):
            wrong = dict(state)
            wrong["head.bias"] = np.zeros(4, dtype=np.float32)
            with self.assertRaises(ShapeError):
                network.load_state_dict(wrong)


class TestVariants(TestCase):
    """
    Tests the plain U-Net baseline against the attention network.
    """

    def test_unet_structure(self):
        """
        Ensure the baseline has no attention parameters, plain stages and fewer parameters.
        """
        config = tiny_model_config(variant="unet")
        network = init_params(config)
        self.assertIsInstance(network.bottleneck, ConvBlock)
        self.assertIsInstance(init_params(tiny_model_config()).bottleneck, DualResBlock)
        names = list(network.state_dict())
        self.assertFalse(any(".gate." in n or ".msa." in n for n in names))
        self.assertLess(param_count(config), param_count(tiny_model_config()))
        self.assertLess(flops_estimate(config, 16), flops_estimate(tiny_model_config(), 16))

    def test_unet_forward_backward(self):
        """
        Ensure the baseline maps inputs to probabilities and fills every gradient.
        """
        network = init_params(tiny_model_config(variant="unet"))
        x = np.random.default_rng(6).normal(size=(1, 4, 8, 8, 8)).astype(np.float32)
        probs = network.forward(x)
        self.assertEqual(probs.shape, (1, 3, 8, 8, 8))
        self.assertTrue(((probs > 0) & (probs < 1)).all())
        self.assertEqual(network.backward(np.ones_like(probs)).shape, x.shape)
        for name, p in network.named_parameters():
            with self.subTest(msg=name):
                self.assertEqual(p.grad.shape, p.value.shape)

    def test_unknown_variant(self):
        """
        Ensure an unknown variant is a configuration error.
        """
        with self.assertRaises(ConfigError):
            tiny_model_config(variant="transformer").validate()
        with self.assertRaises(ConfigError):
            ModelConfig.from_dict({"variant": "transformer"})
