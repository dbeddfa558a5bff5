"""
Threat scenarios against a programmed accelerator.

* Clone attack: weights retrained on the victim chip are copied to other
  chips, whose ADC fingerprints differ.
* Random-key attack: an adversary who has the weights but not the shuffle
  keys guesses keys.
* Shuffle sweeps: how much protection the number, position and bit planes
  of the shuffled layers buy, and how accuracy recovers as a guessed key
  shares more digits with the real one.

Every scenario returns a :class:`SweepResult` holding one accuracy per
sample at every point of its axis.
"""

from __future__ import division

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adc import gen_fingerprint
from .crossbar import CONVENTIONAL
from .engine import Accelerator, forward_quantized
from .shuffle import (
    ShuffleKeyError,
    gen_layer_key,
    key_with_matches,
    matched_digits,
    possible_matches,
    random_key_like,
)
from .training import (
    SGD,
    TrainingDivergedError,
    backward,
    evaluate,
    forward,
    iterate_minibatches,
    softmax_cross_entropy,
)
from .util import derive_seed


__all__ = [
    "ExperimentError",
    "ChipPopulation",
    "SweepResult",
    "RetrainResult",
    "LAYER_COUNT",
    "LAYER_LOCATION",
    "BIT_PLANES",
    "MATCHED_DIGITS",
    "evaluate_hw",
    "retrain_on_chip",
    "clone_attack",
    "make_keys",
    "default_matches",
    "random_key_attack",
    "sweep_shuffle_config",
    "offset_sensitivity",
]


logger = logging.getLogger(__name__)


LAYER_COUNT = "layer-count"
LAYER_LOCATION = "layer-location"
BIT_PLANES = "bit-planes"
MATCHED_DIGITS = "matched-digits"

sweep_axes = (LAYER_COUNT, LAYER_LOCATION, BIT_PLANES, MATCHED_DIGITS)

# share of a key's channels a guess matches, by default
MATCH_FRACTIONS = (0.0, 0.25, 0.5, 0.75, 0.9, 1.0)


class ExperimentError(ValueError):
    """Raised for threat scenarios that cannot be set up as asked."""

    pass


class ChipPopulation(object):
    """
    Chips manufactured from one master seed.

    Chip ``i`` draws its fingerprint from ``derive_seed(master, "chip",
    i)``; chip ``victim`` is the one the weights are retrained on.
    """

    def __init__(self, master_seed, size, config, victim=0):
        if size < 1:
            raise ExperimentError("a population needs at least one chip")
        if not 0 <= victim < size:
            raise ExperimentError("victim index outside the population")
        self.master_seed = master_seed
        self.size = size
        self.config = config
        self.victim = victim

    def __repr__(self):
        return "ChipPopulation(seed={0!r}, size={1}, victim={2})".format(
            self.master_seed, self.size, self.victim
        )

    def chip_seed(self, index):
        return derive_seed(self.master_seed, "chip", index)

    def fingerprint(self, index, tile_count):
        return gen_fingerprint(self.chip_seed(index), self.config, tile_count)

    def clones(self):
        return [i for i in range(self.size) if i != self.victim]


@dataclass
class SweepResult(object):
    """
    Accuracies along one experiment axis.

    :ivar str axis: name of the swept quantity
    :ivar list points: axis values, in sweep order
    :ivar dict samples: point to list of per-sample accuracies
    :ivar dict baseline: point to the reference accuracy the samples are
        compared with, where one exists
    :ivar dict extra: point to list of per-sample side metrics (for
        instance matched digits of a guessed key)
    """

    axis: str
    points: list = field(default_factory=list)
    samples: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def add(self, point, values, baseline=None, extra=None):
        if point not in self.samples:
            self.points.append(point)
            self.samples[point] = []
        self.samples[point].extend(float(v) for v in values)
        if baseline is not None:
            self.baseline[point] = float(baseline)
        if extra is not None:
            self.extra.setdefault(point, []).extend(extra)

    def summary(self, point):
        """min, median and max accuracy at a point."""
        values = np.asarray(self.samples[point])
        return {
            "min": float(values.min()),
            "median": float(np.median(values)),
            "max": float(values.max()),
        }

    def median(self, point):
        return float(np.median(self.samples[point]))


@dataclass
class RetrainResult(object):
    model: object
    curve: list


def _map(function, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(function, items))
    return [function(i) for i in items]


def evaluate_hw(
    accelerator, images, labels, chip=None, keys=None, batch_size=128
):
    """Top-1 accuracy of a programmed accelerator."""

    def forward_fn(batch):
        return accelerator.forward(batch, chip, keys)

    return evaluate(
        accelerator.net,
        accelerator.model,
        images,
        labels,
        forward_fn,
        batch_size,
    )


def retrain_on_chip(
    model,
    net,
    chip,
    dataset,
    epochs=1,
    learning_rate=0.005,
    batch_size=32,
    seed=0,
    mapping=CONVENTIONAL,
    keys=None,
):
    """
    Fine-tune weights against one chip's ADCs.

    Each step reprograms the current weights, runs the batch through the
    chip and applies the float gradient at the observed activations.

    :raises TrainingDivergedError: the loss became NaN or infinite

    :return: :class:`RetrainResult` with the retrained copy and the test
        accuracy on the chip before training and after every epoch
    """
    if epochs < 1:
        raise ExperimentError("retraining needs at least one epoch")
    model = model.copy()
    hp = model.hyperparams
    optimizer = SGD(model, learning_rate, hp.momentum, hp.weight_decay)

    def accuracy():
        accelerator = Accelerator(net, model, chip.config, mapping, keys)
        return evaluate_hw(accelerator, dataset.test_x, dataset.test_y, chip)

    curve = [accuracy()]
    labels = dataset.train_y
    for epoch in range(epochs):
        batches = iterate_minibatches(len(labels), batch_size, seed, epoch)
        for idx in batches:
            accelerator = Accelerator(net, model, chip.config, mapping, keys)
            logits, caches = forward(
                net,
                model,
                dataset.train_x[idx],
                accelerator.linear(chip),
                keep=True,
            )
            loss, dlogits = softmax_cross_entropy(logits, labels[idx])
            if not np.isfinite(loss):
                logger.error("retraining loss %r in epoch %d", loss, epoch)
                raise TrainingDivergedError(
                    "retraining diverged in epoch %d" % epoch
                )
            optimizer.step(*backward(net, model, caches, dlogits))
        curve.append(accuracy())
        logger.info(
            "retrain epoch %d/%d on chip %r: accuracy %.4f",
            epoch + 1,
            epochs,
            chip.chip_seed,
            curve[-1],
        )
    return RetrainResult(model, curve)


def clone_attack(
    model,
    net,
    population,
    dataset,
    epochs=1,
    learning_rate=0.005,
    seed=0,
    mapping=CONVENTIONAL,
    workers=None,
):
    """
    Retrain on the victim chip, then run the retrained weights on every
    chip of the population.

    :return: :class:`SweepResult` on axis ``chip`` with points ``victim``
        and ``clone``; the baseline of both is the victim's accuracy before
        retraining
    """
    if population.size < 2:
        raise ExperimentError("a clone attack needs at least two chips")
    tile_count = Accelerator(net, model, population.config, mapping).tile_count
    victim = population.fingerprint(population.victim, tile_count)
    retrained = retrain_on_chip(
        model,
        net,
        victim,
        dataset,
        epochs,
        learning_rate,
        seed=seed,
        mapping=mapping,
    )
    accelerator = Accelerator(net, retrained.model, population.config, mapping)

    def run(index):
        chip = population.fingerprint(index, tile_count)
        return evaluate_hw(accelerator, dataset.test_x, dataset.test_y, chip)

    result = SweepResult("chip")
    before = retrained.curve[0]
    result.add("victim", [retrained.curve[-1]], baseline=before)
    clones = _map(run, population.clones(), workers)
    result.add("clone", clones, baseline=before)
    logger.info(
        "clone attack: victim %.4f, clone median %.4f",
        result.median("victim"),
        result.median("clone"),
    )
    return result


def make_keys(net, layers, key_seed, zeros=0, bit_planes=None):
    """
    Programmed keys for a set of layers.

    :param bit_planes: planes stored in key order, None for all; an int
        selects that many most significant planes
    """
    keys = {}
    for index in layers:
        layer = net.layers[index]
        planes = bit_planes
        if isinstance(bit_planes, int):
            if not 1 <= bit_planes <= layer.weight_bits:
                raise ExperimentError("cannot shuffle %d planes" % bit_planes)
            planes = range(layer.weight_bits - bit_planes, layer.weight_bits)
        keys[index] = gen_layer_key(
            key_seed, layer.c_in, zeros, index, planes
        )
    return keys


def default_matches(key):
    """
    Matched-digit counts swept when none are given: ``MATCH_FRACTIONS`` of
    the key's channels, each moved to the closest lower count a guess can
    share with ``key`` (or the closest higher one if there is none).
    """
    possible = possible_matches(key)
    points = set()
    for fraction in MATCH_FRACTIONS:
        target = int(round(key.N * fraction))
        lower = [n for n in possible if n <= target]
        points.add(lower[-1] if lower else possible[0])
    return sorted(points)


def _eligible(net, layers):
    if layers is None:
        layers = net.shuffle_candidates()
    layers = list(layers)
    if not layers:
        raise ExperimentError("%s has no layer to shuffle" % net.name)
    return layers


def random_key_attack(
    model,
    net,
    chip,
    real_keys,
    dataset,
    trials,
    seed=0,
    mapping=CONVENTIONAL,
    workers=None,
):
    """
    Run the network with ``trials`` uniformly guessed key sets.

    :param chip: fingerprint reading the tiles, exact partial sums if None
    :param real_keys: the programmed keys per layer

    :return: :class:`SweepResult` on axis ``key`` with points ``true`` and
        ``random``; matched digits of every guess go to ``extra``
    """
    if trials < 1:
        raise ExperimentError("at least one trial is needed")
    if not real_keys:
        raise ExperimentError("no layer is shuffled")
    adc = chip.config if chip is not None else None
    accelerator = Accelerator(net, model, adc, mapping, real_keys)
    true = evaluate_hw(accelerator, dataset.test_x, dataset.test_y, chip)

    def run(trial):
        guess = dict(
            (index, random_key_like(key, derive_seed(seed, "trial", trial)))
            for index, key in real_keys.items()
        )
        matched = sum(
            matched_digits(real_keys[i], guess[i]) for i in real_keys
        )
        acc = evaluate_hw(
            accelerator, dataset.test_x, dataset.test_y, chip, guess
        )
        return acc, matched

    runs = _map(run, range(trials), workers)
    result = SweepResult("key")
    result.add("true", [true], baseline=true)
    result.add(
        "random",
        [acc for acc, _ in runs],
        baseline=true,
        extra=[matched for _, matched in runs],
    )
    logger.info(
        "random keys: true %.4f, median guess %.4f",
        true,
        result.median("random"),
    )
    return result


def sweep_shuffle_config(
    model,
    net,
    chip,
    axis,
    dataset,
    trials,
    seed=0,
    layers=None,
    zeros=0,
    bit_planes=None,
    matches=None,
    mapping=CONVENTIONAL,
    workers=None,
):
    """
    Accuracy under random keys along one configuration axis.

    * ``layer-count``: the first 1, 2, ... eligible layers are shuffled
    * ``layer-location``: each eligible layer alone
    * ``bit-planes``: the 1, 2, ... most significant planes of every
      eligible layer
    * ``matched-digits``: one layer, guesses sharing exactly n digits with
      its key for every n in ``matches``

    :param layers: eligible layers, by default every convolution after the
        first
    """
    layers = _eligible(net, layers)
    if axis == MATCHED_DIGITS:
        return _sweep_matches(
            model,
            net,
            chip,
            dataset,
            trials,
            seed,
            layers[0],
            zeros,
            bit_planes,
            matches,
            mapping,
            workers,
        )
    if axis == LAYER_COUNT:
        configs = [
            (n, layers[:n], bit_planes) for n in range(1, len(layers) + 1)
        ]
    elif axis == LAYER_LOCATION:
        configs = [(i, [i], bit_planes) for i in layers]
    elif axis == BIT_PLANES:
        bits = min(net.layers[i].weight_bits for i in layers)
        configs = [(n, layers, n) for n in range(1, bits + 1)]
    else:
        raise ExperimentError(
            "unknown sweep axis {0!r}, known ones: {1}".format(
                axis, sweep_axes
            )
        )
    result = SweepResult(axis)
    for point, chosen, planes in configs:
        key_seed = derive_seed(seed, "keys", axis, point)
        keys = make_keys(net, chosen, key_seed, zeros, planes)
        sub = random_key_attack(
            model,
            net,
            chip,
            keys,
            dataset,
            trials,
            derive_seed(seed, axis, point),
            mapping,
            workers,
        )
        result.add(
            point,
            sub.samples["random"],
            baseline=sub.baseline["true"],
            extra=sub.extra["random"],
        )
        logger.debug("%s %s: median %.4f", axis, point, result.median(point))
    return result


def _sweep_matches(
    model,
    net,
    chip,
    dataset,
    trials,
    seed,
    layer,
    zeros,
    bit_planes,
    matches,
    mapping,
    workers,
):
    key_seed = derive_seed(seed, "keys", MATCHED_DIGITS)
    real = make_keys(net, [layer], key_seed, zeros, bit_planes)[layer]
    if matches is None:
        matches = default_matches(real)
    adc = chip.config if chip is not None else None
    accelerator = Accelerator(net, model, adc, mapping, {layer: real})
    true = evaluate_hw(accelerator, dataset.test_x, dataset.test_y, chip)
    result = SweepResult(MATCHED_DIGITS)
    for n in matches:

        def run(trial, n=n):
            trial_seed = derive_seed(seed, MATCHED_DIGITS, n, trial)
            try:
                guess = key_with_matches(real, n, trial_seed)
            except ShuffleKeyError as e:
                raise ExperimentError(str(e))
            return evaluate_hw(
                accelerator,
                dataset.test_x,
                dataset.test_y,
                chip,
                {layer: guess},
            )

        result.add(n, _map(run, range(trials), workers), baseline=true)
        logger.debug("matched digits %d: median %.4f", n, result.median(n))
    return result


def offset_sensitivity(
    model,
    net,
    dataset,
    cells,
    population_size,
    seed=0,
    mapping=CONVENTIONAL,
    workers=None,
):
    """
    Accuracy of unretrained weights on chips with ADC offsets.

    :param cells: iterable of (AdcConfig, weight_bits) pairs
    :return: :class:`SweepResult` on axis ``adc``; points are labels like
        ``sar/WL5/w4`` and the baseline is the quantized software accuracy
        at that weight width
    """
    result = SweepResult("adc")
    for config, weight_bits in cells:
        cell_net = net.with_weight_bits(weight_bits)
        point = "{0}/{1}/w{2}".format(config.kind, config.label, weight_bits)
        baseline = evaluate(
            cell_net,
            model,
            dataset.test_x,
            dataset.test_y,
            lambda batch: forward_quantized(cell_net, model, batch),
        )
        accelerator = Accelerator(cell_net, model, config, mapping)
        population = ChipPopulation(
            derive_seed(seed, point), population_size, config
        )

        def run(index, accelerator=accelerator, population=population):
            chip = population.fingerprint(index, accelerator.tile_count)
            return evaluate_hw(
                accelerator, dataset.test_x, dataset.test_y, chip
            )

        result.add(
            point,
            _map(run, range(population_size), workers),
            baseline=baseline,
        )
        logger.info(
            "%s: quantized %.4f, median on chip %.4f",
            point,
            baseline,
            result.median(point),
        )
    return result
