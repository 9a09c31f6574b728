import math
import unittest

import numpy as np

from hybridnas.core import tensorcore as tc
from hybridnas.core.tensorcore import Rng
from hybridnas.utils.exceptions import TensorShapeError, ERROR_CODES


def naive_conv2d(x, w, b, stride, pad, groups=1):
    bsz, cin, h, wd = x.shape
    cout, cin_g, kh, kw = w.shape
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((bsz, cout, ho, wo))
    per_group = cout // groups
    for n in range(bsz):
        for o in range(cout):
            g = o // per_group
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(cin_g):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[n, g * cin_g + c, i * stride + u, j * stride + v] * w[o, c, u, v]
                    out[n, o, i, j] = acc + (b[o] if b is not None else 0.0)
    return out


class TestConv2d(unittest.TestCase):
    def test_output_shape(self):
        """步长2填充1时分辨率减半"""
        x = np.zeros((1, 10, 64, 64), dtype=np.float32)
        w = np.zeros((16, 10, 3, 3), dtype=np.float32)
        self.assertEqual(tc.conv2d(x, w, stride=2, pad=1).shape, (1, 16, 32, 32))

    def test_identity_kernel(self):
        x = np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3)
        w = np.ones((1, 1, 1, 1), dtype=np.float32)
        np.testing.assert_array_equal(tc.conv2d(x, w), x)

    def test_all_ones_sum(self):
        x = np.ones((1, 1, 4, 4), dtype=np.float32)
        w = np.ones((1, 1, 3, 3), dtype=np.float32)
        y = tc.conv2d(x, w)
        self.assertEqual(y.shape, (1, 1, 2, 2))
        self.assertTrue(np.all(y == 9.0))

    def test_matches_naive_loops(self):
        """与逐元素循环参考实现一致（含步长、填充、分组）"""
        rng = Rng(3)
        cases = [(2, 4, 9, 6, 3, 1, 1, 1), (1, 6, 8, 4, 3, 2, 1, 2), (2, 8, 7, 8, 1, 1, 0, 1),
                 (1, 4, 6, 4, 3, 1, 1, 4)]
        for bsz, cin, hw, cout, k, stride, pad, groups in cases:
            x = rng.normal((bsz, cin, hw, hw))
            w = rng.normal((cout, cin // groups, k, k))
            b = rng.normal((cout,))
            got = tc.conv2d(x, w, b, stride=stride, pad=pad, groups=groups)
            want = naive_conv2d(x, w, b, stride, pad, groups)
            np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-4)

    def test_channel_mismatch_names_dimension(self):
        x = np.zeros((1, 3, 8, 8), dtype=np.float32)
        w = np.zeros((4, 5, 3, 3), dtype=np.float32)
        with self.assertRaises(TensorShapeError) as ctx:
            tc.conv2d(x, w)
        self.assertEqual(ctx.exception.error_code, ERROR_CODES["TENSOR_SHAPE_MISMATCH"])
        self.assertEqual(ctx.exception.details["dimension"], "Cin")

    def test_kernel_larger_than_input(self):
        x = np.zeros((1, 1, 2, 2), dtype=np.float32)
        w = np.zeros((1, 1, 3, 3), dtype=np.float32)
        with self.assertRaises(TensorShapeError):
            tc.conv2d(x, w)

    def test_mac_counter(self):
        """conv2d与linear的乘法次数按权重作用计数"""
        x = np.zeros((1, 3, 8, 8), dtype=np.float32)
        w = np.zeros((4, 3, 3, 3), dtype=np.float32)
        with tc.mac_counter() as counter:
            tc.conv2d(x, w, pad=1)
            tc.linear(np.zeros((5, 6), dtype=np.float32), np.zeros((7, 6), dtype=np.float32))
        self.assertEqual(counter.macs, 4 * 8 * 8 * 3 * 9 + 5 * 6 * 7)

    def test_mac_counter_nested(self):
        with tc.mac_counter() as outer:
            tc.linear(np.zeros((1, 2), dtype=np.float32), np.zeros((3, 2), dtype=np.float32))
            with tc.mac_counter() as inner:
                tc.linear(np.zeros((1, 2), dtype=np.float32), np.zeros((3, 2), dtype=np.float32))
        self.assertEqual(inner.macs, 6)
        self.assertEqual(outer.macs, 12)

    def test_conv1d_depthwise(self):
        x = np.ones((1, 2, 5), dtype=np.float32)
        w = np.ones((2, 1, 3), dtype=np.float32)
        y = tc.conv1d(x, w, pad=1, groups=2)
        np.testing.assert_array_equal(y[0, 0], [2, 3, 3, 3, 2])


class TestBatchnorm(unittest.TestCase):
    def test_symmetric_channel(self):
        x = np.array([-1.0, 1.0], dtype=np.float32).reshape(2, 1, 1, 1)
        y, sigmas = tc.batchnorm(x)
        np.testing.assert_allclose(y.ravel(), [-1.0, 1.0], atol=1e-4)
        self.assertAlmostEqual(sigmas[0], math.sqrt(1 + 1e-5), places=9)

    def test_constant_channel(self):
        x = np.full((2, 1, 2, 2), 5.0, dtype=np.float32)
        y, sigmas = tc.batchnorm(x)
        self.assertTrue(np.all(y == 0.0))
        self.assertAlmostEqual(sigmas[0], math.sqrt(1e-5), places=12)

    def test_hand_sigma(self):
        x = np.array([0.0, 2.0], dtype=np.float32).reshape(1, 1, 1, 2)
        _, sigmas = tc.batchnorm(x)
        self.assertAlmostEqual(sigmas[0], math.sqrt(1 + 1e-5), places=9)

    def test_normalized_statistics(self):
        x = Rng(0).normal((4, 3, 5, 5)) * 3.0 + 2.0
        y, _ = tc.batchnorm(x)
        self.assertTrue(np.all(np.abs(y.mean(axis=(0, 2, 3))) < 1e-5))
        self.assertTrue(np.all(np.abs(y.var(axis=(0, 2, 3)) - 1.0) < 1e-3))

    def test_too_few_values(self):
        with self.assertRaises(TensorShapeError):
            tc.batchnorm(np.zeros((1, 2, 1, 1), dtype=np.float32))


class TestElementwise(unittest.TestCase):
    def test_softmax_symmetric(self):
        np.testing.assert_allclose(tc.softmax(np.zeros(2, dtype=np.float32)), [0.5, 0.5])

    def test_softmax_rows_sum_to_one(self):
        y = tc.softmax(Rng(1).normal((6, 9)) * 10.0, axis=1)
        np.testing.assert_allclose(y.sum(axis=1), np.ones(6), atol=1e-6)

    def test_axis_out_of_range(self):
        with self.assertRaises(TensorShapeError) as ctx:
            tc.softmax(np.zeros((2, 2), dtype=np.float32), axis=2)
        self.assertEqual(ctx.exception.error_code, ERROR_CODES["TENSOR_AXIS_OUT_OF_RANGE"])

    def test_silu_zero(self):
        self.assertEqual(float(tc.silu(np.zeros(1, dtype=np.float32))[0]), 0.0)

    def test_layernorm(self):
        y = tc.layernorm(Rng(2).normal((3, 16)) * 4.0 + 1.0)
        self.assertTrue(np.all(np.abs(y.mean(axis=-1)) < 1e-5))

    def test_maxpool_keeps_shape(self):
        x = -np.ones((1, 1, 8, 8), dtype=np.float32)
        y = tc.maxpool2d(x, 5, 1, 2)
        self.assertEqual(y.shape, (1, 1, 8, 8))
        # 填充值不参与取最大
        self.assertTrue(np.all(y == -1.0))

    def test_add_rejects_nonconforming(self):
        with self.assertRaises(TensorShapeError):
            tc.add(np.zeros((2, 3), dtype=np.float32), np.zeros((4,), dtype=np.float32))

    def test_split_and_concat(self):
        x = np.arange(10, dtype=np.float32).reshape(1, 10)
        parts = tc.split(x, 1, [3, 7])
        self.assertEqual([p.shape[1] for p in parts], [3, 7])
        np.testing.assert_array_equal(tc.concat(parts, axis=1), x)
        with self.assertRaises(TensorShapeError):
            tc.split(x, 1, 3)

    def test_avgpool_global(self):
        x = np.arange(8, dtype=np.float32).reshape(1, 2, 2, 2)
        np.testing.assert_allclose(tc.avgpool_global(x), [[1.5, 5.5]])

    def test_frobenius(self):
        self.assertEqual(tc.frobenius_norm(np.zeros(3, dtype=np.float32)), 0.0)
        self.assertEqual(tc.frobenius_norm(np.array([3.0, 4.0], dtype=np.float32)), 5.0)
        self.assertAlmostEqual(tc.frobenius_norm(np.ones((2, 2, 2), dtype=np.float32)), math.sqrt(8))


class TestRng(unittest.TestCase):
    def test_reproducible(self):
        a = Rng(42).normal((10000,))
        b = Rng(42).normal((10000,))
        np.testing.assert_array_equal(a, b)
        self.assertEqual(a.dtype, np.float32)

    def test_spawn_is_deterministic_and_distinct(self):
        root = Rng(7)
        np.testing.assert_array_equal(root.spawn(1).normal((5,)), Rng(7).spawn(1).normal((5,)))
        self.assertFalse(np.array_equal(root.spawn(1).normal((5,)), root.spawn(2).normal((5,))))

    def test_integers_range(self):
        rng = Rng(0)
        values = {rng.integers(0, 3) for _ in range(200)}
        self.assertEqual(values, {0, 1, 2})


if __name__ == "__main__":
    unittest.main()
