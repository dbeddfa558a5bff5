"""
Column ADCs with per-chip reference offsets.

Every ADC compares a column's partial sum against ``levels`` reference
points. Process variation shifts each reference by a chip-specific amount
drawn once at manufacturing time; the set of shifts of a chip is its
fingerprint. The spread of the shift at a reference level follows from
the measured probability that the ADC senses a partial sum on the
correct side of that reference (its pass rate).
"""

from __future__ import division

import logging
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .crossbar import TILE_COLS, TILE_ROWS
from .layers import UnknownPresetError
from .util import derive_seed, keyed_rng


__all__ = [
    "AdcConfigError",
    "PartialSumRangeError",
    "PassRateError",
    "FingerprintMismatchError",
    "UnknownPresetError",
    "FLASH",
    "SAR",
    "AdcConfig",
    "ChipFingerprint",
    "passrate_presets",
    "passrate_preset",
    "resample_curve",
    "read_curve",
    "write_curve",
    "pass_rate_to_sigma",
    "sigma_curve",
    "gen_fingerprint",
    "quantize_adc",
    "empirical_pass_rate",
    "output_spread",
]


logger = logging.getLogger(__name__)


FLASH = "flash"
SAR = "sar"


class AdcConfigError(ValueError):
    """Raised for an inconsistent ADC description."""

    pass


class PartialSumRangeError(AdcConfigError):
    """Raised for a partial sum no read of the tile can produce."""

    pass


class PassRateError(ValueError):
    """Raised for a pass rate that no Gaussian offset can produce."""

    pass


class FingerprintMismatchError(Exception):
    """Raised when a fingerprint does not belong to the accelerator it is
    used with."""

    pass


# pass rate at the first and the last reference level, measured for three
# write-verify word-line settings; intermediate levels interpolate
passrate_presets = {
    "WL4": (0.990, 0.760),
    "WL5": (0.995, 0.840),
    "WL6": (0.999, 0.900),
    "IDEAL": (1.0, 1.0),
}


def passrate_preset(label, bits):
    """
    Per-level pass rates of a named preset for a given ADC resolution.

    :raises UnknownPresetError: unknown label
    :rtype: tuple of float
    """
    try:
        first, last = passrate_presets[label]
    except KeyError:
        raise UnknownPresetError(
            "I don't know about the pass rate preset %s. "
            "I only know about these: %s" % (label, sorted(passrate_presets))
        )
    levels = 2 ** bits - 1
    return tuple(float(i) for i in np.linspace(first, last, levels))


def resample_curve(pass_rate, levels):
    """Linearly resample a per-level curve to another level count."""
    pass_rate = np.asarray(pass_rate, dtype=np.float64)
    if len(pass_rate) == levels:
        return tuple(float(i) for i in pass_rate)
    if len(pass_rate) == 1:
        return (float(pass_rate[0]),) * levels
    source = np.linspace(0, 1, len(pass_rate))
    target = np.linspace(0, 1, levels)
    return tuple(float(i) for i in np.interp(target, source, pass_rate))


def write_curve(path, pass_rate):
    """Write a curve as ``level,pass_rate`` rows."""
    with open(path, "w") as f:
        f.write("# level,pass_rate\n")
        for level, p in enumerate(pass_rate, 1):
            f.write("{0},{1!r}\n".format(level, float(p)))


def read_curve(path):
    """
    Read a ``level,pass_rate`` table. Levels must run 1, 2, 3...

    :raises AdcConfigError: malformed rows or levels out of sequence
    """
    curve = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            try:
                level, p = int(parts[0]), float(parts[1])
            except (ValueError, IndexError):
                raise AdcConfigError(
                    "{0}:{1}: expected 'level,pass_rate'".format(path, lineno)
                )
            if len(parts) != 2 or level != len(curve) + 1:
                raise AdcConfigError(
                    "{0}:{1}: level {2} out of sequence".format(
                        path, lineno, level
                    )
                )
            curve.append(p)
    if not curve:
        raise AdcConfigError("%s holds no pass rates" % path)
    return tuple(curve)


@dataclass(frozen=True)
class AdcConfig(object):
    """
    Resolution, architecture and variation of the column ADCs.

    :ivar str kind: ``flash`` (independent comparator per reference) or
        ``sar`` (one comparator shared by every reference)
    :ivar int bits: ADC resolution
    :ivar tuple pass_rate: pass rate per reference level, ``2**bits - 1``
        entries
    :ivar str label: name of the pass rate curve, for reports
    :ivar int rows: word lines driven together in one conversion; taller
        tiles are read in several groups whose results add digitally
    """

    kind: str = SAR
    bits: int = 5
    pass_rate: tuple = field(default=None)
    label: str = "WL5"
    adcs_per_tile: int = 16
    columns_per_adc: int = 8
    rows: int = TILE_ROWS

    def __post_init__(self):
        if self.kind not in (FLASH, SAR):
            raise AdcConfigError("unknown ADC kind %r" % (self.kind,))
        if not 1 <= self.bits <= 8:
            raise AdcConfigError("ADC bits must be between 1 and 8")
        if not 1 <= self.rows <= TILE_ROWS:
            raise AdcConfigError(
                "a read drives between 1 and %d rows" % TILE_ROWS
            )
        if self.adcs_per_tile * self.columns_per_adc != TILE_COLS:
            raise AdcConfigError(
                "{0} ADCs of {1} columns do not cover a {2}-column "
                "tile".format(
                    self.adcs_per_tile, self.columns_per_adc, TILE_COLS
                )
            )
        if self.pass_rate is None:
            object.__setattr__(
                self, "pass_rate", passrate_preset(self.label, self.bits)
            )
        object.__setattr__(
            self, "pass_rate", tuple(float(p) for p in self.pass_rate)
        )
        if len(self.pass_rate) != self.levels:
            raise AdcConfigError(
                "{0} pass rates for {1} reference levels".format(
                    len(self.pass_rate), self.levels
                )
            )
        for p in self.pass_rate:
            if not 0.5 < p <= 1:
                raise AdcConfigError("pass rate %r outside (0.5, 1]" % p)

    @classmethod
    def from_preset(cls, kind, label, bits, rows=TILE_ROWS):
        return cls(kind, bits, passrate_preset(label, bits), label, rows=rows)

    @property
    def levels(self):
        return 2 ** self.bits - 1

    @property
    def delta(self):
        """Partial-sum units per code step of a full read."""
        return self.read_delta(self.rows)

    def read_delta(self, rows):
        """
        Code step of a read that drives ``rows`` word lines.

        The reference ladder spans the largest partial sum of the read but
        never gets finer than one cell current, so reads of at most
        ``levels`` rows are lossless.

        :raises PartialSumRangeError: more rows than one read drives
        """
        if not 1 <= rows <= self.rows:
            raise PartialSumRangeError(
                "a read drives 1 to {0} rows, not {1}".format(self.rows, rows)
            )
        return max(rows, self.levels) / self.levels

    def references(self, rows=None):
        """Nominal reference points of a read, one per level."""
        if rows is None:
            rows = self.rows
        return (np.arange(self.levels) + 0.5) * self.read_delta(rows)

    def adc_of_column(self, column):
        """ADC serving a weight column of a tile."""
        if not 0 <= column < TILE_COLS:
            raise AdcConfigError(
                "column %d is not a weight column; the dummy column is "
                "counted, not converted" % column
            )
        return column // self.columns_per_adc


def pass_rate_to_sigma(p, half_step):
    """
    Standard deviation of a Gaussian reference shift that keeps a partial
    sum half a step away on the correct side with probability ``p``.

    :param float p: pass rate, in (0.5, 1]
    :param float half_step: distance between the partial sum and the
        reference

    :raises PassRateError: p is 0.5 or below (or above 1)

    :return: sigma, 0.0 for p == 1
    :rtype: float
    """
    if not 0.5 < p <= 1:
        raise PassRateError("pass rate %r outside (0.5, 1]" % (p,))
    if p == 1:
        return 0.0
    return half_step / norm.ppf(p)


def sigma_curve(config):
    """Reference shift sigma of every level of an ADC."""
    return np.array(
        [pass_rate_to_sigma(p, config.delta / 2) for p in config.pass_rate]
    )


def _thermometer(psums, refs):
    # refs (adcs, levels), psums (n,) -> codes (adcs, n)
    return (refs[:, None, :] < psums[None, :, None]).sum(axis=-1)


def _successive_approximation(psums, refs, bits):
    codes = np.zeros((refs.shape[0], len(psums)), dtype=np.int64)
    for bit in range(bits - 1, -1, -1):
        trial = codes | (1 << bit)
        ref = np.take_along_axis(refs, trial - 1, axis=1)
        codes = np.where(psums[None, :] > ref, trial, codes)
    return codes


def _convert(config, psums, refs):
    psums = np.asarray(psums, dtype=np.float64)
    if config.kind == FLASH:
        return _thermometer(psums, refs)
    return _successive_approximation(psums, refs, config.bits)


class ChipFingerprint(object):
    """
    Reference shifts of every ADC of one chip.

    The shifts are stored in units of a full read's ladder and scale with
    the ladder of shorter reads, so every read sees the same pass rates.
    Conversion tables for full reads are built up front; tables of
    shorter reads are built on first use under a lock, so lookups from
    several threads are safe.

    :ivar chip_seed: seed the shifts were drawn from, None for ideal chips
    :ivar AdcConfig config: the ADC the shifts belong to
    :ivar offsets: array (tile_count, adcs_per_tile, levels)
    """

    def __init__(self, chip_seed, config, offsets):
        offsets = np.asarray(offsets, dtype=np.float64)
        if offsets.ndim != 3 or offsets.shape[1:] != (
            config.adcs_per_tile,
            config.levels,
        ):
            raise FingerprintMismatchError(
                "offsets of shape {0} do not fit the ADC".format(offsets.shape)
            )
        self.chip_seed = chip_seed
        self.config = config
        self.offsets = offsets
        self.offsets.setflags(write=False)
        self._lock = threading.Lock()
        self._short = {}
        self._tables = self._build(config.rows)

    def __repr__(self):
        return "ChipFingerprint(seed={0!r}, tiles={1}, {2})".format(
            self.chip_seed, self.tile_count, self.config.label
        )

    def _build(self, rows):
        grid = np.arange(rows + 1)
        tables = np.zeros(
            (self.tile_count, self.config.adcs_per_tile, rows + 1),
            dtype=np.int64,
        )
        for tile in range(self.tile_count):
            tables[tile] = _convert(
                self.config, grid, self.references(tile, rows)
            )
        tables.setflags(write=False)
        return tables

    @classmethod
    def ideal(cls, config, tile_count):
        """A chip whose references all sit at their nominal points."""
        return cls(
            None,
            config,
            np.zeros((tile_count, config.adcs_per_tile, config.levels)),
        )

    @property
    def tile_count(self):
        return self.offsets.shape[0]

    def references(self, tile, rows=None):
        """Shifted reference points of a tile's read, (adcs, levels)."""
        config = self.config
        if rows is None:
            rows = config.rows
        scale = config.read_delta(rows) / config.delta
        return config.references(rows) + self.offsets[tile] * scale

    def table(self, tile, rows=None):
        """
        Output codes of every ADC of a tile for integer partial sums
        0..rows of a read driving ``rows`` word lines (a full read when
        None), array (adcs, rows + 1).
        """
        if rows is None or rows == self.config.rows:
            return self._tables[tile]
        with self._lock:
            tables = self._short.get(rows)
            if tables is None:
                tables = self._build(rows)
                self._short[rows] = tables
        return tables[tile]


def gen_fingerprint(chip_seed, config, tile_count):
    """
    Draw the reference shifts of one chip.

    Shifts are zero-mean Gaussians whose sigma at each level comes from
    the level's pass rate. A flash ADC draws every comparator independently.
    A SAR ADC reuses one comparator for every reference, so its shifts at
    all levels scale a single deviate. Every tile draws from its own stream
    keyed on the chip seed and the tile id.

    :rtype: ChipFingerprint
    """
    if tile_count < 1:
        raise FingerprintMismatchError("a chip needs at least one tile")
    sigma = sigma_curve(config)
    offsets = np.empty((tile_count, config.adcs_per_tile, config.levels))
    for tile in range(tile_count):
        rng = keyed_rng("fingerprint", chip_seed, tile)
        if config.kind == FLASH:
            draws = rng.standard_normal((config.adcs_per_tile, config.levels))
            offsets[tile] = draws * sigma[None, :]
        else:
            deviate = rng.standard_normal(config.adcs_per_tile)
            offsets[tile] = deviate[:, None] * sigma[None, :]
    logger.debug(
        "chip %r: %d tiles, max |shift| %.3f",
        chip_seed,
        tile_count,
        float(np.max(np.abs(offsets))),
    )
    return ChipFingerprint(chip_seed, config, offsets)


def quantize_adc(psum, tile, adc_index, config, fingerprint=None, rows=None):
    """
    Convert one partial sum.

    :param psum: partial sum of the read, 0..rows
    :param int tile: tile id on the chip
    :param int adc_index: ADC within the tile
    :param fingerprint: the chip, ideal references when None
    :param int rows: word lines driven by the read, ``config.rows`` when
        None

    :raises PartialSumRangeError: psum below 0 or above ``rows``

    :return: output code in [0, levels]; the reconstructed partial sum is
        ``code * config.read_delta(rows)``
    :rtype: int
    """
    if rows is None:
        rows = config.rows
    if not 0 <= adc_index < config.adcs_per_tile:
        raise AdcConfigError("ADC index %d out of range" % adc_index)
    if not 0 <= psum <= rows:
        raise PartialSumRangeError(
            "partial sum {0!r} outside 0..{1}".format(psum, rows)
        )
    refs = config.references(rows)
    if fingerprint is not None:
        if fingerprint.config != config:
            raise FingerprintMismatchError("fingerprint is for another ADC")
        refs = fingerprint.references(tile, rows)[adc_index]
    refs = np.asarray(refs)[None, :]
    return int(_convert(config, [psum], refs)[0, 0])


def empirical_pass_rate(config, level, trials, seed=0):
    """
    Fraction of simulated chips that sense a partial sum half a step below
    reference ``level`` (1-based) on the correct side.
    """
    if not 1 <= level <= config.levels:
        raise AdcConfigError("level %d out of range" % level)
    sigma = sigma_curve(config)[level - 1]
    rng = keyed_rng("pass-rate", seed, level)
    shifts = rng.standard_normal(trials) * sigma
    reference = (level - 0.5) * config.delta
    psum = (level - 1) * config.delta
    return float(np.mean(psum < reference + shifts))


def output_spread(config, psum, chips, seed=0, tile=0, adc_index=0):
    """Output codes of one ADC for the same partial sum on many chips."""
    codes = []
    for chip in range(chips):
        chip_seed = derive_seed(seed, "spread", chip)
        fp = gen_fingerprint(chip_seed, config, tile + 1)
        codes.append(quantize_adc(psum, tile, adc_index, config, fp))
    return np.array(codes)
