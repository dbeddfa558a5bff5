try:
    import unittest2 as unittest
except ImportError:
    import unittest
import hypothesis.strategies as st
from hypothesis import given, settings
import numpy as np
import pytest

from .adc import SAR, AdcConfig, ChipFingerprint
from .attacks import (
    BIT_PLANES,
    LAYER_COUNT,
    LAYER_LOCATION,
    MATCHED_DIGITS,
    ChipPopulation,
    ExperimentError,
    SweepResult,
    clone_attack,
    default_matches,
    evaluate_hw,
    make_keys,
    offset_sensitivity,
    random_key_attack,
    retrain_on_chip,
    sweep_shuffle_config,
)
from .datasets import synthetic_dataset
from .engine import Accelerator
from .layers import (
    CNN_SYNTH,
    CONV,
    FC,
    MLP_SYNTH,
    LayerSpec,
    NetworkSpec,
    presets,
)
from .shuffle import key_with_matches, matched_digits
from .training import Hyperparams, init_model, train_float


TEST_CNN = NetworkSpec(
    "test-cnn",
    [
        LayerSpec(CONV, 1, 4, 3, 3, 6, 6, weight_bits=4),
        LayerSpec(CONV, 4, 6, 3, 3, 6, 6, weight_bits=4, pool=True),
        LayerSpec(CONV, 6, 6, 3, 3, 3, 3, weight_bits=4),
        LayerSpec(FC, 54, 4, weight_bits=4, relu=False),
    ],
    "synthetic",
    (1, 6, 6),
)

ADC = AdcConfig(SAR, 5, label="WL4")
# reads of at most 31 rows convert losslessly at 5 bits
IDEAL_READS = AdcConfig(SAR, 5, label="IDEAL", rows=31)


def setUpModule():
    global DATA, MODEL, TRUE_ACCURACY
    DATA = synthetic_dataset((1, 6, 6), classes=4, train=200, test=40)
    hp = Hyperparams(learning_rate=0.05, epochs=6, batch_size=16, seed=1)
    MODEL = train_float(TEST_CNN, DATA, hp)[0]
    TRUE_ACCURACY = evaluate_hw(
        Accelerator(TEST_CNN, MODEL), DATA.test_x, DATA.test_y
    )


class TestChipPopulation(unittest.TestCase):
    def test_seeds(self):
        population = ChipPopulation(3, 4, ADC, victim=2)
        self.assertEqual(population.clones(), [0, 1, 3])
        seeds = set(population.chip_seed(i) for i in range(4))
        self.assertEqual(len(seeds), 4)
        again = ChipPopulation(3, 4, ADC)
        self.assertEqual(again.chip_seed(1), population.chip_seed(1))

    def test_fingerprints_differ(self):
        population = ChipPopulation(3, 2, ADC)
        a = population.fingerprint(0, 2)
        b = population.fingerprint(1, 2)
        self.assertFalse(np.array_equal(a.offsets, b.offsets))

    def test_invalid(self):
        with self.assertRaises(ExperimentError):
            ChipPopulation(0, 0, ADC)
        with self.assertRaises(ExperimentError):
            ChipPopulation(0, 3, ADC, victim=3)


class TestSweepResult(unittest.TestCase):
    def test_accumulates(self):
        result = SweepResult("x")
        result.add(2, [0.5, 0.1], baseline=0.9, extra=[3, 4])
        result.add(1, [0.2])
        result.add(2, [0.3], extra=[5])
        self.assertEqual(result.points, [2, 1])
        self.assertEqual(result.samples[2], [0.5, 0.1, 0.3])
        self.assertEqual(result.extra[2], [3, 4, 5])
        self.assertEqual(result.baseline, {2: 0.9})
        self.assertEqual(
            result.summary(2), {"min": 0.1, "median": 0.3, "max": 0.5}
        )
        self.assertEqual(result.median(1), 0.2)


class TestMakeKeys(unittest.TestCase):
    def test_most_significant_planes(self):
        keys = make_keys(TEST_CNN, [1, 2], 5, zeros=2, bit_planes=2)
        self.assertEqual(sorted(keys), [1, 2])
        self.assertEqual(keys[1].bit_planes, frozenset([2, 3]))
        self.assertEqual((keys[2].N, keys[2].k), (6, 2))
        self.assertEqual(keys[1].layer, 1)

    def test_all_planes(self):
        keys = make_keys(TEST_CNN, [1], 5)
        self.assertIsNone(keys[1].bit_planes)

    def test_too_many_planes(self):
        with self.assertRaises(ExperimentError):
            make_keys(TEST_CNN, [1], 5, bit_planes=5)


class TestRandomKeyAttack(unittest.TestCase):
    def test_guesses_lose_accuracy(self):
        keys = make_keys(TEST_CNN, [1, 2], 7, zeros=2)
        result = random_key_attack(MODEL, TEST_CNN, None, keys, DATA, 9)
        self.assertEqual(result.points, ["true", "random"])
        self.assertEqual(result.samples["true"], [TRUE_ACCURACY])
        self.assertEqual(len(result.samples["random"]), 9)
        self.assertLess(result.median("random"), TRUE_ACCURACY)
        for matched in result.extra["random"]:
            self.assertTrue(0 <= matched <= 10)

    def test_workers_do_not_change_results(self):
        keys = make_keys(TEST_CNN, [2], 7)
        serial = random_key_attack(MODEL, TEST_CNN, None, keys, DATA, 4)
        threaded = random_key_attack(
            MODEL, TEST_CNN, None, keys, DATA, 4, workers=3
        )
        self.assertEqual(serial, threaded)

    def test_errors(self):
        with self.assertRaises(ExperimentError):
            random_key_attack(MODEL, TEST_CNN, None, {}, DATA, 3)
        keys = make_keys(TEST_CNN, [1], 7)
        with self.assertRaises(ExperimentError):
            random_key_attack(MODEL, TEST_CNN, None, keys, DATA, 0)


class TestSweeps(unittest.TestCase):
    def test_layer_count(self):
        result = sweep_shuffle_config(
            MODEL, TEST_CNN, None, LAYER_COUNT, DATA, 2
        )
        self.assertEqual(result.points, [1, 2])
        self.assertEqual(result.baseline[1], TRUE_ACCURACY)

    def test_layer_location(self):
        result = sweep_shuffle_config(
            MODEL, TEST_CNN, None, LAYER_LOCATION, DATA, 2, layers=[2, 1]
        )
        self.assertEqual(result.points, [2, 1])

    def test_bit_planes(self):
        result = sweep_shuffle_config(
            MODEL, TEST_CNN, None, BIT_PLANES, DATA, 2, zeros=1
        )
        self.assertEqual(result.points, [1, 2, 3, 4])

    def test_full_match_is_exact(self):
        result = sweep_shuffle_config(
            MODEL,
            TEST_CNN,
            None,
            MATCHED_DIGITS,
            DATA,
            3,
            layers=[2],
            zeros=2,
            matches=[0, 6],
        )
        self.assertEqual(result.points, [0, 6])
        self.assertEqual(result.samples[6], [TRUE_ACCURACY] * 3)

    def test_default_matches(self):
        result = sweep_shuffle_config(
            MODEL, TEST_CNN, None, MATCHED_DIGITS, DATA, 1, zeros=2
        )
        self.assertEqual(result.points, [0, 1, 2, 3, 4])

    def test_default_points_on_a_zero_free_key(self):
        model = init_model(CNN_SYNTH)
        data = synthetic_dataset((1, 8, 8), classes=10, train=20, test=10)
        result = sweep_shuffle_config(
            model, CNN_SYNTH, None, MATCHED_DIGITS, data, 1
        )
        self.assertEqual(result.points, [0, 2, 4, 6, 8])
        self.assertEqual(result.samples[8], [result.baseline[8]])

    def test_impossible_match(self):
        with self.assertRaises(ExperimentError):
            sweep_shuffle_config(
                MODEL,
                TEST_CNN,
                None,
                MATCHED_DIGITS,
                DATA,
                1,
                layers=[1],
                matches=[3],
            )

    def test_unknown_axis(self):
        with self.assertRaises(ExperimentError):
            sweep_shuffle_config(MODEL, TEST_CNN, None, "depth", DATA, 1)

    def test_nothing_to_shuffle(self):
        model = init_model(MLP_SYNTH)
        with self.assertRaises(ExperimentError):
            sweep_shuffle_config(model, MLP_SYNTH, None, LAYER_COUNT, DATA, 1)


class TestIdealReadout(unittest.TestCase):
    def test_matches_software_accuracy(self):
        accelerator = Accelerator(TEST_CNN, MODEL, IDEAL_READS)
        chip = ChipFingerprint.ideal(IDEAL_READS, accelerator.tile_count)
        accuracy = evaluate_hw(accelerator, DATA.test_x, DATA.test_y, chip)
        self.assertEqual(accuracy, TRUE_ACCURACY)

    def test_retraining_stays_finite(self):
        tiles = Accelerator(TEST_CNN, MODEL, IDEAL_READS).tile_count
        chip = ChipFingerprint.ideal(IDEAL_READS, tiles)
        result = retrain_on_chip(MODEL, TEST_CNN, chip, DATA, epochs=1)
        self.assertEqual(result.curve[0], TRUE_ACCURACY)
        for w in result.model.weights:
            self.assertTrue(np.all(np.isfinite(w)))


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(0, 3))
def test_programmed_keys_keep_accuracy(key_seed, zeros):
    keys = make_keys(TEST_CNN, [1, 2], key_seed, zeros)
    accelerator = Accelerator(TEST_CNN, MODEL, keys=keys)
    accuracy = evaluate_hw(accelerator, DATA.test_x, DATA.test_y)
    assert accuracy == TRUE_ACCURACY


class TestRetrain(unittest.TestCase):
    def test_curve_and_copy(self):
        population = ChipPopulation(1, 2, ADC)
        tiles = Accelerator(TEST_CNN, MODEL, ADC).tile_count
        chip = population.fingerprint(0, tiles)
        before = [w.copy() for w in MODEL.weights]
        result = retrain_on_chip(MODEL, TEST_CNN, chip, DATA, epochs=2)
        self.assertEqual(len(result.curve), 3)
        for w, b in zip(MODEL.weights, before):
            self.assertTrue(np.array_equal(w, b))
        self.assertNotEqual(result.model, MODEL)

    def test_needs_an_epoch(self):
        with self.assertRaises(ExperimentError):
            retrain_on_chip(MODEL, TEST_CNN, None, DATA, epochs=0)


class TestCloneAttack(unittest.TestCase):
    def test_points(self):
        population = ChipPopulation(4, 3, ADC, victim=1)
        result = clone_attack(MODEL, TEST_CNN, population, DATA, seed=2)
        self.assertEqual(result.points, ["victim", "clone"])
        self.assertEqual(len(result.samples["clone"]), 2)
        self.assertEqual(
            result.baseline["victim"], result.baseline["clone"]
        )

    def test_identical_chips_leave_nothing_to_clone(self):
        population = ChipPopulation(4, 3, IDEAL_READS, victim=1)
        result = clone_attack(MODEL, TEST_CNN, population, DATA, seed=2)
        self.assertEqual(result.baseline["victim"], TRUE_ACCURACY)
        victim = result.samples["victim"][0]
        self.assertEqual(result.samples["clone"], [victim, victim])

    def test_needs_two_chips(self):
        with self.assertRaises(ExperimentError):
            clone_attack(MODEL, TEST_CNN, ChipPopulation(4, 1, ADC), DATA)


@pytest.mark.parametrize("workers", [None, 2])
def test_offset_sensitivity(workers):
    cells = [
        (AdcConfig(SAR, 5, label="IDEAL"), 4),
        (AdcConfig(SAR, 5, label="WL4"), 2),
    ]
    result = offset_sensitivity(
        MODEL, TEST_CNN, DATA, cells, 3, seed=1, workers=workers
    )
    assert result.points == ["sar/IDEAL/w4", "sar/WL4/w2"]
    assert all(len(result.samples[p]) == 3 for p in result.points)
    ideal = result.samples["sar/IDEAL/w4"]
    assert ideal == [ideal[0]] * 3


@pytest.mark.parametrize("net", presets, ids=lambda n: n.name)
@pytest.mark.parametrize("zeros", [0, 2])
def test_default_matches_are_reachable(net, zeros):
    layers = net.shuffle_candidates()
    if not layers:
        pytest.skip("%s has no layer to shuffle" % net.name)
    key = make_keys(net, layers[:1], 3, zeros)[layers[0]]
    points = default_matches(key)
    assert points[0] == 0
    assert points[-1] == key.N
    for n in points:
        guess = key_with_matches(key, n, 5)
        assert matched_digits(key, guess) == n


def test_default_matches_skip_a_lone_unmatched_channel():
    key = make_keys(CNN_SYNTH, [1], 3)[1]
    assert key.N == 8
    assert default_matches(key) == [0, 2, 4, 6, 8]
    padded = make_keys(CNN_SYNTH, [1], 3, zeros=1)[1]
    assert default_matches(padded) == [0, 2, 4, 6, 7, 8]
