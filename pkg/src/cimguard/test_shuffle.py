try:
    import unittest2 as unittest
except ImportError:
    import unittest
import os
import tempfile
from collections import Counter

import hypothesis.strategies as st
from hypothesis import given, settings
import numpy as np
import pytest

from .crossbar import map_conventional
from .layers import CONV, FC, LayerSpec
from .quant import quantize_weights
from .shuffle import (
    ZERO,
    KeyMismatchError,
    MalformedKeyFileError,
    ShuffleKey,
    ShuffleKeyError,
    apply_key_to_weights,
    decode_keys,
    encode_keys,
    gen_key,
    gen_layer_key,
    key_with_matches,
    matched_digits,
    matches_possible,
    one_hot,
    random_key_like,
    read_keys,
    remove_key,
    shuffle_input,
    write_keys,
)


EXAMPLE = ShuffleKey(([2, 0, ZERO, 1],))


class TestShuffleKey(unittest.TestCase):
    def test_sizes(self):
        self.assertEqual((EXAMPLE.N, EXAMPLE.k, EXAMPLE.M), (3, 1, 4))
        self.assertEqual(EXAMPLE.block_sizes, (3,))

    def test_shuffle_input(self):
        routed = shuffle_input(np.array([10, 20, 30]), EXAMPLE)
        self.assertEqual(routed.tolist(), [30, 10, 0, 20])

    def test_shuffle_input_carries_trailing_axes(self):
        x = np.arange(6).reshape(3, 2)
        routed = shuffle_input(x, EXAMPLE)
        self.assertEqual(routed.tolist(), [[4, 5], [0, 1], [0, 0], [2, 3]])

    def test_one_hot(self):
        matrix = one_hot(EXAMPLE)
        self.assertEqual(
            matrix.tolist(), [[0, 0, 1], [1, 0, 0], [0, 0, 0], [0, 1, 0]]
        )
        x = np.array([4, 5, 6])
        self.assertEqual((matrix @ x).tolist(), [6, 4, 0, 5])

    def test_wrong_channel_count(self):
        with self.assertRaises(KeyMismatchError):
            shuffle_input(np.zeros(4), EXAMPLE)

    def test_invalid(self):
        with self.assertRaises(ShuffleKeyError):
            ShuffleKey(([0, 0, 1],))
        with self.assertRaises(ShuffleKeyError):
            ShuffleKey(([0, 2],))
        with self.assertRaises(ShuffleKeyError):
            ShuffleKey(([0, -3, 1],))
        with self.assertRaises(ShuffleKeyError):
            ShuffleKey(([0, ZERO], [0, 1]))
        with self.assertRaises(ShuffleKeyError):
            ShuffleKey(())

    def test_equality(self):
        self.assertEqual(EXAMPLE, ShuffleKey(([2, 0, ZERO, 1],)))
        self.assertNotEqual(EXAMPLE, ShuffleKey(([0, 2, ZERO, 1],)))
        self.assertNotEqual(EXAMPLE, EXAMPLE.with_layer(3))
        self.assertFalse(EXAMPLE == "key")

    def test_read_only(self):
        with self.assertRaises(ValueError):
            EXAMPLE.blocks[0][0] = 1

    def test_source_index_offsets_blocks(self):
        key = ShuffleKey(([1, 0], [ZERO, 0]))
        self.assertEqual(key.source_index().tolist(), [1, 0, ZERO, 2])

    def test_planes(self):
        key = EXAMPLE.with_layer(1, [0, 2])
        self.assertTrue(key.shuffles_plane(2))
        self.assertFalse(key.shuffles_plane(1))
        self.assertTrue(EXAMPLE.shuffles_plane(7))


class TestGenKey(unittest.TestCase):
    def test_deterministic(self):
        self.assertEqual(gen_key(5, 20, 3), gen_key(5, 20, 3))
        self.assertNotEqual(gen_key(5, 20, 3), gen_key(6, 20, 3))

    def test_layout(self):
        key = gen_key(1, 16, 4)
        self.assertEqual((key.N, key.k, key.M), (16, 4, 20))

    def test_uniform(self):
        counts = Counter(
            tuple(gen_key(seed, 3).blocks[0]) for seed in range(3000)
        )
        self.assertEqual(len(counts), 6)
        for count in counts.values():
            self.assertTrue(400 <= count <= 600, counts)

    def test_invalid(self):
        with self.assertRaises(ShuffleKeyError):
            gen_key(1, 1)
        with self.assertRaises(ShuffleKeyError):
            gen_key(1, 5, -1)

    def test_layer_key_blocks(self):
        key = gen_layer_key(3, 300, 2, layer=4)
        self.assertEqual(key.block_sizes, (128, 128, 44))
        self.assertEqual(key.k, 2)
        self.assertEqual(key.M, 306)
        self.assertEqual(key.layer, 4)
        with self.assertRaises(ShuffleKeyError):
            gen_layer_key(3, 0)

    def test_random_key_like(self):
        key = gen_layer_key(3, 200, 1, layer=2)
        guess = random_key_like(key, 9)
        self.assertTrue(guess.same_shape(key))
        self.assertNotEqual(guess, key)


class TestMatchedDigits(unittest.TestCase):
    def test_identity(self):
        key = gen_key(2, 30, 5)
        self.assertEqual(matched_digits(key, key), 30)

    def test_zero_slots_do_not_count(self):
        a = ShuffleKey(([0, 1, ZERO],))
        b = ShuffleKey(([1, 0, ZERO],))
        self.assertEqual(matched_digits(a, b), 0)

    def test_layout_mismatch(self):
        with self.assertRaises(KeyMismatchError):
            matched_digits(gen_key(1, 5), gen_key(1, 6))


@settings(max_examples=40)
@given(st.integers(0, 2 ** 32), st.integers(0, 20))
def test_key_with_matches(seed, matches):
    key = gen_key(seed, 20, 2, layer=1)
    other = key_with_matches(key, matches, seed)
    assert matched_digits(key, other) == matches
    assert other.same_shape(key)


def test_key_with_matches_impossible():
    key = gen_key(0, 5)
    with pytest.raises(ShuffleKeyError):
        key_with_matches(key, 4, 0)
    with pytest.raises(ShuffleKeyError):
        key_with_matches(key, 6, 0)


def test_matches_possible():
    key = gen_key(0, 5)
    assert [matches_possible(key, n) for n in range(-1, 7)] == [
        False, True, True, True, True, False, True, False
    ]
    assert matches_possible(gen_key(0, 5, 1), 4)
    # a lone channel in its own block can never move
    tail = gen_layer_key(0, 129)
    assert tail.block_sizes == (128, 1)
    assert not matches_possible(tail, 0)
    assert not matches_possible(tail, 128)
    assert matches_possible(tail, 1)
    assert matches_possible(tail, 127)


@settings(max_examples=40)
@given(st.integers(0, 2 ** 32), st.integers(0, 300))
def test_key_with_matches_across_blocks(seed, matches):
    key = gen_layer_key(seed, 300, layer=2)
    if not matches_possible(key, matches):
        assert matches == 299
        with pytest.raises(ShuffleKeyError):
            key_with_matches(key, matches, seed)
        return
    other = key_with_matches(key, matches, seed)
    assert matched_digits(key, other) == matches
    assert other.same_shape(key)


@settings(max_examples=20)
@given(st.integers(0, 2 ** 32), st.integers(0, 129))
def test_key_with_matches_around_a_lone_channel(seed, matches):
    key = gen_layer_key(seed, 129)
    if matches_possible(key, matches):
        other = key_with_matches(key, matches, seed)
        assert matched_digits(key, other) == matches
    else:
        with pytest.raises(ShuffleKeyError):
            key_with_matches(key, matches, seed)


class TestProgramming(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.layer = LayerSpec(CONV, 6, 4, 3, 3, 4, 4, weight_bits=4)
        w = np.random.default_rng(1).standard_normal(cls.layer.weight_shape)
        cls.tile_map = map_conventional(cls.layer, quantize_weights(w, 4))

    def test_round_trip(self):
        key = gen_key(4, 6, 2, layer=1)
        shuffled = apply_key_to_weights(self.tile_map, key, fake_seed=3)
        self.assertEqual(shuffled.channels, (8, 8, 8, 8))
        restored = remove_key(shuffled, key)
        self.assertTrue(
            np.array_equal(restored.codes(), self.tile_map.codes())
        )

    def test_partial_planes(self):
        key = gen_key(4, 6, 2, layer=1, bit_planes=[3])
        shuffled = apply_key_to_weights(self.tile_map, key)
        self.assertEqual(shuffled.channels, (6, 6, 6, 8))
        self.assertTrue(
            np.array_equal(
                shuffled.plane_matrix(0), self.tile_map.plane_matrix(0)
            )
        )

    def test_shuffles_cancel(self):
        key = gen_key(8, 6, 3, layer=1)
        shuffled = apply_key_to_weights(self.tile_map, key, fake_seed=1)
        x = np.random.default_rng(2).integers(0, 2, (9, 6))
        routed = shuffle_input(x.T, key).T
        for j in range(4):
            plain = x.reshape(-1) @ self.tile_map.plane_matrix(j)
            keyed = routed.reshape(-1) @ shuffled.plane_matrix(j)
            self.assertTrue(np.array_equal(plain, keyed))

    def test_fake_rows_are_filled(self):
        key = gen_key(8, 6, 3, layer=1)
        shuffled = apply_key_to_weights(self.tile_map, key, fake_seed=1)
        fake = key.source_index() == ZERO
        rows = shuffled.plane_matrix(0).reshape(9, 9, 4)[:, fake, :]
        self.assertTrue(rows.any())

    def test_key_for_other_layer(self):
        with self.assertRaises(KeyMismatchError):
            apply_key_to_weights(self.tile_map, gen_key(1, 7))

    def test_fc_layer(self):
        layer = LayerSpec(FC, 5, 3, relu=False)
        w = np.random.default_rng(3).standard_normal(layer.weight_shape)
        tile_map = map_conventional(layer, quantize_weights(w, 2))
        key = gen_key(0, 5, 1)
        restored = remove_key(apply_key_to_weights(tile_map, key), key)
        self.assertTrue(np.array_equal(restored.codes(), tile_map.codes()))


class TestKeyFile(unittest.TestCase):
    def setUp(self):
        self.keys = {
            1: gen_layer_key(7, 130, 2, layer=1),
            3: gen_key(8, 4, 0, layer=3, bit_planes=[0, 1]),
        }

    def test_encoding(self):
        text = encode_keys({0: ShuffleKey(([2, 0, ZERO, 1],), 0)})
        self.assertEqual(
            text,
            "cimguard-keys 1\nlayer 0 planes all blocks 1\n"
            "block 0 2,0,-,1\nend\n",
        )

    def test_round_trip(self):
        self.assertEqual(decode_keys(encode_keys(self.keys)), self.keys)

    def test_file(self):
        fd, path = tempfile.mkstemp()
        os.close(fd)
        try:
            write_keys(path, self.keys)
            self.assertEqual(read_keys(path), self.keys)
        finally:
            os.remove(path)

    def test_malformed(self):
        good = encode_keys(self.keys)
        bad = [
            "",
            good.replace("cimguard-keys 1", "cimguard-keys 2"),
            good.replace("end\n", ""),
            good.replace("blocks 2", "blocks 3"),
            good.replace("block 1 ", "block 5 "),
            good.replace("layer 3", "layer 1"),
            "cimguard-keys 1\nlayer 0 planes all blocks 1\n"
            "block 0 0,0,1\nend\n",
            "cimguard-keys 1\nsomething else\nend\n",
        ]
        for text in bad:
            with self.assertRaises(MalformedKeyFileError):
                decode_keys(text)
