try:
    import unittest2 as unittest
except ImportError:
    import unittest
import hypothesis.strategies as st
from hypothesis import given, example
import numpy as np
import pytest

from .quant import (
    QTensor,
    QuantizationError,
    activation_codes,
    quantize_activations,
    quantize_weights,
)
from .util import keyed_rng


class TestQuantizeWeights(unittest.TestCase):
    def test_matches_nearest_level(self):
        w = keyed_rng("test", "weights").uniform(-1, 1, 1000)
        for bits in (2, 4, 8):
            qt = quantize_weights(w, bits)
            s = np.max(np.abs(w))
            grid = -s + np.arange(2 ** bits) * (2 * s / (2 ** bits - 1))
            brute = np.argmin(np.abs(w[:, None] - grid[None, :]), axis=1)
            self.assertTrue(np.array_equal(qt.codes, brute))

    def test_extremes(self):
        qt = quantize_weights([-2.0, 0.5, 2.0], 4)
        self.assertEqual(qt.codes[0], 0)
        self.assertEqual(qt.codes[2], 15)
        self.assertEqual(qt.scale, 2.0)

    def test_zero_ties_to_larger_code(self):
        qt = quantize_weights([-1.0, 0.0, 1.0], 2)
        # 0 sits halfway between codes 1 and 2
        self.assertEqual(list(qt.codes), [0, 2, 3])
        self.assertEqual(qt.zero_code, 2)

    def test_all_zero_weights(self):
        qt = quantize_weights(np.zeros((3, 4)), 8)
        self.assertEqual(qt.scale, 1.0)
        self.assertTrue(np.all(qt.codes == qt.zero_code))

    def test_mid_rise_values(self):
        qt = quantize_weights([-1.0, 1.0], 2)
        values = qt.dequantize()
        self.assertAlmostEqual(values[0], -1.0)
        self.assertAlmostEqual(values[1], 1.0)
        # no level at exactly zero
        grid = QTensor((4,), np.arange(4), 2, 1.0).dequantize()
        self.assertFalse(np.any(grid == 0))
        self.assertTrue(np.allclose(grid, [-1, -1 / 3, 1 / 3, 1]))

    def test_readout_values(self):
        qt = QTensor((4,), np.arange(4), 2, 1.0)
        self.assertTrue(np.allclose(qt.readout(), [-4 / 3, -2 / 3, 0, 2 / 3]))
        diff = qt.dequantize() - qt.readout()
        self.assertTrue(np.allclose(diff, qt.step / 2))
        zeros = quantize_weights(np.zeros(5), 4)
        self.assertTrue(np.all(zeros.readout() == 0))
        codes = QTensor((2,), [0, 200], 8, 3.0, signed=False)
        self.assertTrue(np.array_equal(codes.readout(), codes.dequantize()))

    def test_shape_kept(self):
        qt = quantize_weights(np.ones((2, 3, 3, 3)), 4)
        self.assertEqual(qt.array().shape, (2, 3, 3, 3))

    def test_empty(self):
        with self.assertRaises(QuantizationError):
            quantize_weights([], 4)

    def test_bits_out_of_range(self):
        for bits in (1, 9):
            with self.assertRaises(QuantizationError):
                quantize_weights([0.5], bits)


@given(
    st.lists(
        st.integers(min_value=-(10 ** 6), max_value=10 ** 6).map(
            lambda i: i / 1000.0
        ),
        min_size=1,
        max_size=50,
    ),
    st.integers(min_value=2, max_value=8),
)
@example([0.0], 2)
@example([1e-9, -3.0], 8)
def test_requantize_is_identity(values, bits):
    qt = quantize_weights(values, bits)
    again = quantize_weights(qt.dequantize(), bits, qt.scale)
    assert again == qt


class TestQTensor(unittest.TestCase):
    def test_rejects_out_of_range_codes(self):
        with self.assertRaises(QuantizationError):
            QTensor((2,), [0, 4], 2, 1.0)

    def test_rejects_wrong_size(self):
        with self.assertRaises(QuantizationError):
            QTensor((3,), [0, 1], 2, 1.0)

    def test_rejects_bad_scale(self):
        with self.assertRaises(QuantizationError):
            QTensor((1,), [0], 2, 0.0)

    def test_equality(self):
        a = QTensor((2,), [0, 1], 2, 1.0)
        self.assertEqual(a, QTensor((2,), [0, 1], 2, 1.0))
        self.assertNotEqual(a, QTensor((2,), [0, 2], 2, 1.0))
        self.assertNotEqual(a, "codes")

    def test_unsigned_step(self):
        qt = quantize_activations([0.0, 1.0, 2.0])
        self.assertAlmostEqual(qt.step, 2.0 / 255)
        self.assertEqual(qt.zero_code, 0)


class TestActivations(unittest.TestCase):
    def test_codes(self):
        qt = quantize_activations([0.0, 0.5, 1.0])
        self.assertEqual(list(qt.codes), [0, 128, 255])

    def test_negative(self):
        with self.assertRaises(QuantizationError):
            quantize_activations([0.1, -0.1])
        with self.assertRaises(QuantizationError):
            activation_codes(np.array([[0.1, -0.1]]))

    def test_empty(self):
        with self.assertRaises(QuantizationError):
            quantize_activations([])

    def test_per_sample_scale(self):
        batch = np.array([[0.0, 0.5, 1.0], [0.0, 1.0, 2.0]])
        codes, step = activation_codes(batch)
        self.assertEqual(codes.dtype, np.uint8)
        self.assertTrue(np.array_equal(codes[0], codes[1]))
        self.assertTrue(np.allclose(step, [1 / 255, 2 / 255]))

    def test_all_zero_sample(self):
        codes, step = activation_codes(np.zeros((2, 4)))
        self.assertTrue(np.all(codes == 0))
        self.assertTrue(np.allclose(step, 1 / 255))


@pytest.mark.parametrize("index", [0, 1, 2])
def test_sample_codes_ignore_batch(index):
    batch = keyed_rng("test", "batch").random((3, 2, 4, 4))
    codes, step = activation_codes(batch)
    alone, alone_step = activation_codes(batch[index : index + 1])
    assert np.array_equal(codes[index], alone[0])
    assert step[index] == alone_step[0]
