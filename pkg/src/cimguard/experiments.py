"""
Runners behind ``cimguard run``: one per experiment kind.

Each runner takes an :class:`~cimguard.config.ExperimentConfig` and a
:class:`~cimguard.results.ResultSink`, records its rows in the sink and
returns an :class:`Outcome` with the evaluated acceptance checks.
"""

from __future__ import division

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import attacks
from .adc import AdcConfig, passrate_preset, read_curve, resample_curve
from .attacks import (
    ChipPopulation,
    clone_attack,
    evaluate_hw,
    make_keys,
    offset_sensitivity,
    random_key_attack,
    retrain_on_chip,
    sweep_shuffle_config,
)
from .bounds import (
    bound_no_insert,
    bound_with_insert,
    exact_match_distribution,
    log2_key_space,
    monte_carlo_match,
)
from .crossbar import TILE_ROWS
from .datasets import load_dataset
from .engine import Accelerator, forward_quantized
from .hwcost import (
    CostModel,
    energy_linearity,
    overhead_by_location,
    shuffle_overhead,
)
from .modelfile import load_model
from .results import ResultSink, write_run
from .shuffle import encode_keys
from .training import Hyperparams, evaluate, train_float
from .util import derive_seed


__all__ = ["Outcome", "run_experiment", "runners"]


logger = logging.getLogger(__name__)


@dataclass
class Outcome(object):
    """
    What a runner produced besides the result rows.

    :ivar list checks: check outcomes, dicts with name, threshold, value
        and passed
    :ivar dict extra: further summary entries
    :ivar list bounds_rows: rows of ``bounds.csv``, bounds runs only
    :ivar dict files: additional files of the run directory, name to text
    """

    checks: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    bounds_rows: list = None
    files: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks)


def _check(outcome, config, name, value, at_least):
    # only checks declared in the config are evaluated
    if name not in config.checks:
        return
    threshold = config.checks[name]
    value = float(value)
    passed = value >= threshold if at_least else value <= threshold
    outcome.checks.append(
        {
            "name": name,
            "threshold": threshold,
            "value": value,
            "passed": bool(passed),
        }
    )
    logger.info(
        "check %s: %.6g %s %.6g: %s",
        name,
        value,
        ">=" if at_least else "<=",
        threshold,
        "pass" if passed else "FAIL",
    )


def _read_rows(config):
    # "auto" reads as many rows at once as the ADC has levels
    rows = config.adc.rows
    if rows == "auto":
        return min(2 ** config.adc.bits - 1, TILE_ROWS)
    return rows


def _adc_config(config):
    adc = config.adc
    rows = _read_rows(config)
    if adc.curve:
        curve = resample_curve(read_curve(adc.curve), 2 ** adc.bits - 1)
        label = os.path.splitext(os.path.basename(adc.curve))[0]
        return AdcConfig(adc.kind, adc.bits, curve, label, rows=rows)
    return AdcConfig.from_preset(adc.kind, adc.preset, adc.bits, rows)


def _planes(value):
    return None if value == "all" else value


def _layers(value):
    return None if value == "auto" else list(value)


class Workbench(object):
    """Network, data and float model of one run, built on first use."""

    def __init__(self, config):
        self.config = config
        self.net = config.network_spec()
        self.seed = config.experiment.seed
        self._dataset = None
        self._model = None
        self.float_accuracy = None

    @property
    def dataset(self):
        if self._dataset is None:
            cfg = self.config.dataset
            self._dataset = load_dataset(
                cfg.id,
                cfg.path or None,
                input_shape=self.net.input_shape,
                seed=self.seed,
                train_limit=cfg.train_samples or None,
                test_limit=cfg.test_samples or None,
            )
        return self._dataset

    @property
    def model(self):
        if self._model is None:
            cfg = self.config.network
            if cfg.model:
                self._model = load_model(cfg.model, self.net)
                self.float_accuracy = evaluate(
                    self.net,
                    self._model,
                    self.dataset.test_x,
                    self.dataset.test_y,
                )
            else:
                hp = Hyperparams(
                    learning_rate=cfg.learning_rate,
                    batch_size=cfg.batch_size,
                    epochs=cfg.epochs,
                    seed=self.seed,
                )
                self._model, self.float_accuracy = train_float(
                    self.net, self.dataset, hp
                )
        return self._model

    def quantized_accuracy(self, net=None):
        net = net or self.net
        model = self.model
        return evaluate(
            net,
            model,
            self.dataset.test_x,
            self.dataset.test_y,
            lambda batch: forward_quantized(net, model, batch),
        )

    def population(self, adc):
        pop = self.config.population
        return ChipPopulation(
            derive_seed(self.seed, "population"), pop.size, adc, pop.victim
        )


def run_baseline(config, sink):
    bench = Workbench(config)
    adc = _adc_config(config)
    model = bench.model
    quantized = bench.quantized_accuracy()
    accelerator = Accelerator(bench.net, model, adc, config.network.mapping)
    data = bench.dataset
    hardware = evaluate_hw(accelerator, data.test_x, data.test_y)
    population = bench.population(adc)
    chip = population.fingerprint(population.victim, accelerator.tile_count)
    on_chip = evaluate_hw(accelerator, data.test_x, data.test_y, chip)
    sink.add("model", "float", "accuracy", bench.float_accuracy)
    sink.add("model", "quantized", "accuracy", quantized)
    sink.add("model", "hardware", "accuracy", hardware)
    sink.add("model", "victim-chip", "accuracy", on_chip)
    outcome = Outcome()
    outcome.extra["tiles"] = accelerator.tile_count
    _check(outcome, config, "min_accuracy", quantized, True)
    return outcome


def _strength(label, bits):
    return float(np.mean(passrate_preset(label, bits)))


def _ordering_violation(medians, baselines, cfg, bits):
    """
    Largest amount by which the drop orderings are broken: drops grow as
    the preset weakens and shrink as weight bits grow, and SAR drops at
    least as much as Flash.
    """
    drop = dict((cell, baselines[cell] - medians[cell]) for cell in medians)
    worst = -math.inf
    labels = sorted(cfg.presets, key=lambda label: _strength(label, bits))
    weights = sorted(cfg.weight_bits)
    for kind in cfg.kinds:
        for wb in weights:
            for weak, strong in zip(labels, labels[1:]):
                worst = max(
                    worst, drop[(kind, strong, wb)] - drop[(kind, weak, wb)]
                )
        for label in labels:
            for low, high in zip(weights, weights[1:]):
                worst = max(
                    worst, drop[(kind, label, high)] - drop[(kind, label, low)]
                )
    if "flash" in cfg.kinds and "sar" in cfg.kinds:
        for label in labels:
            for wb in weights:
                worst = max(
                    worst,
                    drop[("flash", label, wb)] - drop[("sar", label, wb)],
                )
    return 0.0 if worst == -math.inf else worst


def run_offset_sensitivity(config, sink):
    bench = Workbench(config)
    cfg = config.offsets
    bits = config.adc.bits
    rows = _read_rows(config)
    cells = []
    index = {}
    for kind in cfg.kinds:
        for label in cfg.presets:
            for wb in cfg.weight_bits:
                adc = AdcConfig.from_preset(kind, label, bits, rows)
                cells.append((adc, wb))
                index["{0}/{1}/w{2}".format(kind, label, wb)] = (
                    kind,
                    label,
                    wb,
                )
    result = offset_sensitivity(
        bench.model,
        bench.net,
        bench.dataset,
        cells,
        config.population.size,
        bench.seed,
        config.network.mapping,
        config.experiment.workers,
    )
    sink.add_sweep(result)
    medians = dict((index[p], result.median(p)) for p in result.points)
    baselines = dict((index[p], result.baseline[p]) for p in result.points)
    outcome = Outcome()
    _check(
        outcome,
        config,
        "order_tolerance",
        _ordering_violation(medians, baselines, cfg, bits),
        False,
    )
    _check(
        outcome,
        config,
        "min_median_accuracy",
        min(medians.values()),
        True,
    )
    return outcome


def run_retrain(config, sink):
    bench = Workbench(config)
    adc = _adc_config(config)
    population = bench.population(adc)
    mapping = config.network.mapping
    tiles = Accelerator(bench.net, bench.model, adc, mapping).tile_count
    chip = population.fingerprint(population.victim, tiles)
    retrained = retrain_on_chip(
        bench.model,
        bench.net,
        chip,
        bench.dataset,
        config.population.retrain_epochs,
        config.population.retrain_learning_rate,
        config.network.batch_size,
        bench.seed,
        mapping,
    )
    for epoch, accuracy in enumerate(retrained.curve):
        sink.add("epoch", epoch, "accuracy", accuracy)
    quantized = bench.quantized_accuracy()
    sink.add("model", "quantized", "accuracy", quantized)
    outcome = Outcome()
    _check(
        outcome,
        config,
        "max_victim_gap",
        quantized - retrained.curve[-1],
        False,
    )
    return outcome


def run_clone_attack(config, sink):
    bench = Workbench(config)
    adc = _adc_config(config)
    result = clone_attack(
        bench.model,
        bench.net,
        bench.population(adc),
        bench.dataset,
        config.population.retrain_epochs,
        config.population.retrain_learning_rate,
        bench.seed,
        config.network.mapping,
        config.experiment.workers,
    )
    sink.add_sweep(result)
    quantized = bench.quantized_accuracy()
    sink.add("model", "quantized", "accuracy", quantized)
    victim = result.median("victim")
    outcome = Outcome()
    outcome.extra["clone"] = result.summary("clone")
    _check(
        outcome,
        config,
        "min_median_drop",
        victim - result.median("clone"),
        True,
    )
    _check(outcome, config, "max_victim_gap", quantized - victim, False)
    return outcome


def _key_chip(config, bench):
    if config.keys.readout == "exact":
        return None
    adc = _adc_config(config)
    population = bench.population(adc)
    tiles = Accelerator(
        bench.net, bench.model, adc, config.network.mapping
    ).tile_count
    return population.fingerprint(population.victim, tiles)


def run_key_attack(config, sink):
    bench = Workbench(config)
    cfg = config.keys
    layers = _layers(cfg.layers) or bench.net.shuffle_candidates()
    keys = make_keys(
        bench.net,
        layers,
        derive_seed(bench.seed, "keys"),
        cfg.zeros,
        _planes(cfg.bit_planes),
    )
    result = random_key_attack(
        bench.model,
        bench.net,
        _key_chip(config, bench),
        keys,
        bench.dataset,
        cfg.trials,
        derive_seed(bench.seed, "guesses"),
        config.network.mapping,
        config.experiment.workers,
    )
    sink.add_sweep(result)
    outcome = Outcome()
    outcome.files["keys.txt"] = encode_keys(keys)
    outcome.extra["log2_key_space"] = dict(
        (str(i), sum(log2_key_space(n, key.k) for n in key.block_sizes))
        for i, key in keys.items()
    )
    _check(
        outcome,
        config,
        "max_median_accuracy",
        result.median("random"),
        False,
    )
    return outcome


def _monotone_violation(result):
    medians = [result.median(p) for p in result.points]
    if result.axis == attacks.MATCHED_DIGITS:
        # accuracy recovers as more digits match
        steps = [a - b for a, b in zip(medians, medians[1:])]
    else:
        steps = [b - a for a, b in zip(medians, medians[1:])]
    return max(steps) if steps else 0.0


def run_sweep(config, sink):
    bench = Workbench(config)
    cfg = config.keys
    matches = None if cfg.matches == "auto" else list(cfg.matches)
    result = sweep_shuffle_config(
        bench.model,
        bench.net,
        _key_chip(config, bench),
        cfg.axis,
        bench.dataset,
        cfg.trials,
        bench.seed,
        _layers(cfg.layers),
        cfg.zeros,
        _planes(cfg.bit_planes),
        matches,
        config.network.mapping,
        config.experiment.workers,
    )
    sink.add_sweep(result)
    outcome = Outcome()
    final = result.points[-1]
    _check(
        outcome, config, "max_final_median", result.median(final), False
    )
    _check(
        outcome,
        config,
        "max_first_median",
        result.median(result.points[0]),
        False,
    )
    _check(
        outcome,
        config,
        "monotone_tolerance",
        _monotone_violation(result),
        False,
    )
    if result.axis == attacks.MATCHED_DIGITS:
        _check(
            outcome,
            config,
            "exact_at_full_match",
            abs(result.median(final) - result.baseline[final]),
            False,
        )
    return outcome


def _tails(probabilities):
    # P(at least n) from P(exactly n)
    return np.cumsum(np.asarray(probabilities, dtype=np.float64)[::-1])[::-1]


def run_bounds(config, sink):
    cfg = config.bounds
    seed = config.experiment.seed
    N, k = cfg.n, cfg.zeros
    exact = _tails([float(p) for p in exact_match_distribution(N)])
    plain = _tails(
        monte_carlo_match(N, 0, cfg.trials, derive_seed(seed, "plain"))
    )
    inserted = _tails(
        monte_carlo_match(N, k, cfg.trials, derive_seed(seed, "inserted"))
    )
    rows = []
    worst_eq1 = 0.0
    beyond_bound = 0
    for n in range(cfg.max_matches + 1):
        eq1 = bound_no_insert(N, n)
        eq2 = bound_with_insert(N, N + k, k, n)
        sigma = math.sqrt(eq1 * (1 - eq1) / cfg.trials)
        # tails summed from frequencies may overshoot 1 by rounding
        if plain[n] > eq1 + 3 * sigma + 1e-12:
            beyond_bound += 1
        worst_eq1 = max(worst_eq1, abs(eq1 * math.factorial(n) - 1.0))
        rows.append(
            {
                "n": n,
                "eq1_bound": eq1,
                "eq2_bound": eq2,
                "exact_prob": float(exact[n]),
                "mc_freq": float(plain[n]),
            }
        )
        for metric, value in (
            ("eq1_bound", eq1),
            ("eq2_bound", eq2),
            ("exact_prob", exact[n]),
            ("mc_freq", plain[n]),
            ("mc_freq_inserted", inserted[n]),
        ):
            sink.add("matched", n, metric, value)
    for size in range(1, cfg.enumerate_max + 1):
        closed = exact_match_distribution(size)
        brute = exact_match_distribution(size, "enumerate")
        mismatches = sum(1 for a, b in zip(closed, brute) if a != b)
        sink.add("enumeration", size, "mismatches", mismatches)
    outcome = Outcome(bounds_rows=rows)
    outcome.extra["log2_key_space"] = {
        "plain": log2_key_space(N),
        "inserted": log2_key_space(N, k),
    }
    outcome.extra["mc_beyond_bound"] = beyond_bound
    _check(outcome, config, "mc_beyond_bound", beyond_bound, False)
    last = cfg.max_matches
    _check(outcome, config, "eq1_tolerance", worst_eq1, False)
    if last >= 2:
        _check(
            outcome,
            config,
            "mc_tolerance",
            abs(plain[2] - exact[2]),
            False,
        )
    _check(
        outcome,
        config,
        "insert_not_weaker",
        max(
            [inserted[n] - plain[n] for n in range(1, last + 1)] or [0.0]
        ),
        False,
    )
    return outcome


def run_cost(config, sink):
    cfg = config.cost
    net = config.network_spec()
    table = CostModel.load(cfg.table) if cfg.table else CostModel.from_table()
    table.check()
    layers = _layers(cfg.layers)
    planes = _planes(cfg.bit_planes)
    total = shuffle_overhead(
        net, cfg.weight_bits, layers, planes, cfg.sharing, table
    )
    for metric in ("area", "energy", "latency"):
        sink.add("total", "all", metric, getattr(total, metric))
    sink.add("total", "all", "shuffle_arrays", total.shuffle_arrays)
    sink.add("total", "all", "weight_tiles", total.weight_tiles)
    by_location = overhead_by_location(
        net, cfg.weight_bits, planes, cfg.sharing
    )
    for index, overhead in sorted(by_location.items()):
        for metric in ("area", "energy", "latency"):
            sink.add("location", index, metric, getattr(overhead, metric))
    for n in range(1, cfg.weight_bits + 1):
        overhead = shuffle_overhead(
            net, cfg.weight_bits, layers, n, cfg.sharing, table
        )
        sink.add("bit-planes", n, "energy", overhead.energy)
        sink.add("bit-planes", n, "area", overhead.area)
    r2 = energy_linearity(net, cfg.weight_bits, layers)
    outcome = Outcome()
    outcome.extra["rram_area"] = {
        "stated": table.rram.area,
        "component_sum": table.rram_area_sum(),
    }
    outcome.extra["energy_r2"] = r2
    _check(outcome, config, "area_min", total.area, True)
    _check(outcome, config, "area_max", total.area, False)
    _check(outcome, config, "energy_r2_min", r2, True)
    if by_location:
        ordered = [by_location[i] for i in sorted(by_location)]
        _check(
            outcome,
            config,
            "shallow_cheaper",
            ordered[0].area - ordered[-1].area,
            False,
        )
    return outcome


runners = {
    "baseline": run_baseline,
    "offset-sensitivity": run_offset_sensitivity,
    "retrain": run_retrain,
    "clone-attack": run_clone_attack,
    "key-attack": run_key_attack,
    "sweep": run_sweep,
    "bounds": run_bounds,
    "cost": run_cost,
}


def run_experiment(config, directory):
    """
    Run the experiment a configuration names and write its result files.

    :return: the :class:`Outcome`; ``outcome.passed`` tells whether every
        declared check passed
    """
    kind = config.experiment.kind
    sink = ResultSink(config.name, config.config_hash, config.experiment.seed)
    logger.info(
        "running %s (%s), config %s", config.name, kind, sink.config_hash
    )
    outcome = runners[kind](config, sink)
    write_run(
        directory,
        config,
        sink,
        outcome.checks,
        outcome.extra,
        outcome.bounds_rows,
    )
    for name, text in sorted(outcome.files.items()):
        with open(os.path.join(directory, name), "w") as f:
            f.write(text)
    return outcome
