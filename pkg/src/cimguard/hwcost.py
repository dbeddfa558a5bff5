"""
Area, latency and energy overhead of the shuffle arrays.

Costs are per 128x128 array and come from a component table: an RRAM
weight tile with its switch matrices, SAR ADCs and shift-adders, and the
8T SRAM array (with its drivers and sense amplifiers) that implements one
shuffle block. Overheads are reported relative to the weight tiles of the
whole network.

The per-array RRAM area total of the table (7029.7) is smaller than the
sum of its listed components (7676.696). Both are kept: the stated total
is the denominator of every overhead, :meth:`CostModel.rram_area_sum`
exposes the component sum.
"""

from __future__ import division

import logging
import math
from dataclasses import dataclass

from scipy.stats import linregress

from .crossbar import TILE_COLS, TILE_ROWS
from .layers import CONV


__all__ = [
    "CostTableError",
    "UnknownComponentError",
    "CostRecord",
    "CostModel",
    "Overhead",
    "TABLE",
    "layer_tiles",
    "tile_count",
    "shuffle_arrays",
    "shuffle_overhead",
    "overhead_by_location",
    "energy_linearity",
]


logger = logging.getLogger(__name__)


class CostTableError(Exception):
    """Raised for a malformed or inconsistent cost table."""

    pass


class UnknownComponentError(KeyError):
    """Raised when a component is not in the cost table."""

    pass


# component, area (um^2), latency (ns), energy (pJ); "-" for not listed
TABLE = """\
rram/array,855.436,32.027,55.2594
rram/wswitchmatrix,350.644,-,-
rram/sswitchmatrix,236.357,-,-
rram/sar-adc,5221.339,112.945,85.174
rram/shiftadd,1012.92,0.84,10.07
rram/total,7029.7,145.813,150.5
sram/array,5994.12,1.251,3.3
sram/wswitchmatrix,1293.773,-,2.825
sram/precharger,511.527,-,5.176
sram/writedriver,511.527,-,0
sram/senseamp,334.705,0.12,23.552
sram/total,8645.652,1.371,34.853
"""


@dataclass(frozen=True)
class CostRecord(object):
    name: str
    area: float
    latency: float
    energy: float

    def __post_init__(self):
        if min(self.area, self.latency, self.energy) < 0:
            raise CostTableError("negative cost for %s" % self.name)


def _number(text, name):
    text = text.strip()
    if text == "-":
        return 0.0
    try:
        return float(text)
    except ValueError:
        raise CostTableError("bad number {0!r} for {1}".format(text, name))


class CostModel(object):
    """Component costs of one RRAM tile and one SRAM shuffle array."""

    def __init__(self, records):
        self.records = dict((r.name, r) for r in records)
        for name in ("rram/total", "sram/total"):
            if name not in self.records:
                raise CostTableError("cost table lacks %s" % name)

    @classmethod
    def from_table(cls, text=TABLE):
        records = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise CostTableError("line %d: expected 4 fields" % lineno)
            name = parts[0].strip().lower()
            records.append(
                CostRecord(
                    name,
                    _number(parts[1], name),
                    _number(parts[2], name),
                    _number(parts[3], name),
                )
            )
        return cls(records)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_table(f.read())

    def lookup(self, component):
        """
        Costs of one component, e.g. ``rram/sar-adc`` or ``SRAM/total``.

        :raises UnknownComponentError: unknown component
        """
        try:
            return self.records[component.lower()]
        except KeyError:
            raise UnknownComponentError(
                "unknown component %r, known: %s"
                % (component, sorted(self.records))
            )

    def components(self, prefix):
        return [
            r
            for name, r in sorted(self.records.items())
            if name.startswith(prefix + "/") and not name.endswith("/total")
        ]

    @property
    def rram(self):
        return self.records["rram/total"]

    @property
    def sram(self):
        return self.records["sram/total"]

    def rram_area_sum(self):
        return sum(r.area for r in self.components("rram"))

    def check(self, tolerance=0.01):
        """
        Verify the totals against their components.

        The SRAM area and every latency and energy total must match the
        component sums; the RRAM area total is allowed to differ and only
        logged.

        :raises CostTableError: a total does not match
        """
        sram = self.components("sram")
        if abs(sum(r.area for r in sram) - self.sram.area) > tolerance:
            raise CostTableError("SRAM area total disagrees with components")
        for prefix in ("rram", "sram"):
            parts = self.components(prefix)
            total = self.records[prefix + "/total"]
            if abs(sum(r.latency for r in parts) - total.latency) > tolerance:
                raise CostTableError("%s latency total disagrees" % prefix)
            if abs(sum(r.energy for r in parts) - total.energy) > tolerance:
                raise CostTableError("%s energy total disagrees" % prefix)
        if abs(self.rram_area_sum() - self.rram.area) > tolerance:
            logger.info(
                "RRAM area: stated total %.3f, component sum %.3f",
                self.rram.area,
                self.rram_area_sum(),
            )


@dataclass(frozen=True)
class Overhead(object):
    """Shuffle array costs relative to the weight tiles, in percent."""

    area: float
    energy: float
    latency: float
    shuffle_arrays: int
    weight_tiles: int


def layer_tiles(layer, weight_bits=None):
    """
    Weight tiles of one layer: row tiles x column tiles x bit planes.
    """
    bits = weight_bits or layer.weight_bits
    rows = math.ceil(layer.rows / TILE_ROWS)
    cols = math.ceil(layer.c_out / TILE_COLS)
    return rows * cols * bits


def tile_count(net, weight_bits=None):
    """Per-layer tile counts and their total."""
    counts = [layer_tiles(layer, weight_bits) for layer in net.layers]
    return counts, sum(counts)


def _plane_count(layer, bits, bit_planes):
    if bit_planes is None:
        return bits
    if isinstance(bit_planes, int):
        return min(bit_planes, bits)
    return len(set(bit_planes))


def shuffle_arrays(layer, weight_bits, bit_planes=None, sharing=1):
    """
    Shuffle arrays needed by one layer: one per shuffled weight tile,
    divided among ``sharing`` tiles.
    """
    if sharing < 1:
        raise ValueError("sharing factor must be at least 1")
    bits = weight_bits or layer.weight_bits
    per_plane = layer_tiles(layer, bits) // bits
    shuffled = per_plane * _plane_count(layer, bits, bit_planes)
    return math.ceil(shuffled / sharing), shuffled


def _reads(layer):
    # crossbar reads per inference: one per output pixel and input bit
    positions = layer.out_positions if layer.kind == CONV else 1
    return positions * 8


def shuffle_overhead(
    net,
    weight_bits=None,
    layers=None,
    bit_planes=None,
    sharing=1,
    model=None,
):
    """
    Overhead of shuffling ``layers`` (default every convolution after the
    first) of ``net``.

    * area: shuffle arrays x SRAM area over weight tiles x RRAM tile area
    * energy: every shuffled tile activation also fires a shuffle array
    * latency: shared arrays serialise over the tiles they serve

    :raises ValueError: a layer is not one of the shuffle candidates
    :rtype: Overhead
    """
    model = model or CostModel.from_table()
    candidates = net.shuffle_candidates()
    if layers is None:
        layers = candidates
    layers = set(layers)
    if not layers <= set(candidates):
        raise ValueError(
            "layers {0} of {1} cannot be shuffled".format(
                sorted(layers - set(candidates)), net.name
            )
        )
    counts, total_tiles = tile_count(net, weight_bits)
    arrays = 0
    base_energy = 0.0
    shuffle_energy = 0.0
    base_latency = 0.0
    shuffle_latency = 0.0
    for index, layer in enumerate(net.layers):
        reads = _reads(layer)
        base_energy += counts[index] * reads * model.rram.energy
        base_latency += reads * model.rram.latency
        if index not in layers:
            continue
        needed, shuffled = shuffle_arrays(
            layer, weight_bits, bit_planes, sharing
        )
        arrays += needed
        shuffle_energy += shuffled * reads * model.sram.energy
        shuffle_latency += reads * model.sram.latency * min(sharing, shuffled)
    area = arrays * model.sram.area / (total_tiles * model.rram.area)
    return Overhead(
        100.0 * area,
        100.0 * shuffle_energy / base_energy,
        100.0 * shuffle_latency / base_latency,
        arrays,
        total_tiles,
    )


def overhead_by_location(net, weight_bits=None, bit_planes=None, sharing=1):
    """Overhead of shuffling each eligible layer alone."""
    return dict(
        (
            index,
            shuffle_overhead(net, weight_bits, [index], bit_planes, sharing),
        )
        for index in net.shuffle_candidates()
    )


def energy_linearity(net, weight_bits, layers=None):
    """
    Coefficient of determination of energy overhead against the number of
    shuffled planes.
    """
    xs = list(range(1, weight_bits + 1))
    ys = [
        shuffle_overhead(net, weight_bits, layers, n).energy for n in xs
    ]
    if max(ys) == min(ys):
        return 1.0
    return linregress(xs, ys).rvalue ** 2
