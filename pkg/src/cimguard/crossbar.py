"""
Bit-sliced crossbar tiles.

A layer's unrolled weight matrix (rows ordered kernel position first,
input channel fastest) is split into bit planes, one binary matrix per
weight bit, and every plane is cut into 128x128 tiles. Each tile also
carries a dummy column that stores the zero-reference code; its partial
sums let the periphery subtract the offset of the unsigned weight codes.

The dummy is a 129th physical column next to the 128 weight columns. It
is not wired to the shared ADCs: its partial sum is the number of active
rows on the plane that holds the zero code, so the row driver counts it
digitally and the weight columns keep all of the converter budget.
"""

from __future__ import division

from dataclasses import dataclass

import numpy as np

from .layers import CONV
from .training import weight_matrix


__all__ = [
    "MappingError",
    "TILE_ROWS",
    "TILE_COLS",
    "CONVENTIONAL",
    "SUBKERNEL",
    "Tile",
    "TileMap",
    "bit_planes",
    "row_partition",
    "map_conventional",
    "map_subkernel",
    "map_layer",
    "tile_vmm",
    "shift_add",
]


TILE_ROWS = 128
TILE_COLS = 128

CONVENTIONAL = "conventional"
SUBKERNEL = "subkernel"


class MappingError(ValueError):
    """Raised for layers or partial sums that cannot be laid out on
    tiles."""

    pass


@dataclass(frozen=True, eq=False)
class Tile(object):
    """
    One 128x128 binary crossbar holding part of one bit plane.

    :ivar int tile_id: index of the tile inside its map; the accelerator
        renumbers tiles globally across layers
    :ivar int plane: weight bit held by the tile, 0 is the LSB
    :ivar matrix: (TILE_ROWS, TILE_COLS) uint8 conductance states, zero
        padded past the used rows and columns
    :ivar dummy: (TILE_ROWS,) uint8 states of the dummy column
    :ivar group: kernel position of a sub-kernel tile, None otherwise
    """

    tile_id: int
    plane: int
    row_start: int
    row_stop: int
    col_start: int
    col_stop: int
    matrix: np.ndarray
    dummy: np.ndarray
    group: object = None

    # 129th column, past the ADC-shared ones; read by the digital row count
    dummy_column = TILE_COLS

    @property
    def used_rows(self):
        return self.row_stop - self.row_start

    @property
    def used_cols(self):
        return self.col_stop - self.col_start

    def active(self):
        """The used part of the conductance matrix."""
        return self.matrix[: self.used_rows, : self.used_cols]


def bit_planes(codes, bits):
    """Split unsigned codes into ``bits`` binary arrays, LSB first."""
    codes = np.asarray(codes, dtype=np.int64)
    return [((codes >> j) & 1).astype(np.uint8) for j in range(bits)]


def row_partition(mode, positions, channels):
    """
    Row ranges of the tiles of one plane.

    Conventional mapping packs the unrolled rows contiguously into 128-row
    tiles, so a tile may span kernel positions. Sub-kernel mapping gives
    every kernel position its own tiles.

    :return: list of (start, stop, group) tuples
    """
    if mode == CONVENTIONAL:
        total = positions * channels
        return [
            (start, min(start + TILE_ROWS, total), None)
            for start in range(0, total, TILE_ROWS)
        ]
    if mode == SUBKERNEL:
        parts = []
        for pos in range(positions):
            base = pos * channels
            for start in range(0, channels, TILE_ROWS):
                parts.append(
                    (
                        base + start,
                        base + min(start + TILE_ROWS, channels),
                        pos,
                    )
                )
        return parts
    raise MappingError("unknown mapping mode %r" % (mode,))


class TileMap(object):
    """
    All tiles of one layer.

    Planes are tiled independently, so a plane whose rows were shuffled
    (and padded with fake rows) may hold more rows than the others.

    :ivar str mode: ``conventional`` or ``subkernel``
    :ivar int bits: weight bit width
    :ivar int c_out: output columns
    :ivar int positions: kernel positions k1*k2
    :ivar tuple channels: input channels per plane (grows when fake rows
        are inserted)
    :ivar float scale: weight quantization half range
    :ivar list tiles: ordered by plane, then row tile, then column tile
    """

    def __init__(self, mode, bits, c_out, positions, channels, scale, tiles):
        self.mode = mode
        self.bits = bits
        self.c_out = c_out
        self.positions = positions
        self.channels = tuple(channels)
        self.scale = scale
        self.tiles = list(tiles)

    def __repr__(self):
        return "TileMap({0}, bits={1}, tiles={2})".format(
            self.mode, self.bits, len(self.tiles)
        )

    @classmethod
    def from_planes(cls, mode, planes, positions, channels, scale):
        """
        Tile a list of binary plane matrices.

        :param planes: list of (positions * channels[j], c_out) arrays, LSB
            first
        :param channels: input channels of every plane
        """
        bits = len(planes)
        c_out = planes[0].shape[1]
        tiles = []
        for j, plane in enumerate(planes):
            if plane.shape != (positions * channels[j], c_out):
                raise MappingError(
                    "plane {0} has shape {1}, expected {2}".format(
                        j, plane.shape, (positions * channels[j], c_out)
                    )
                )
            dummy_bit = 1 if j == bits - 1 else 0
            parts = row_partition(mode, positions, channels[j])
            for start, stop, group in parts:
                for col in range(0, c_out, TILE_COLS):
                    col_stop = min(col + TILE_COLS, c_out)
                    matrix = np.zeros((TILE_ROWS, TILE_COLS), dtype=np.uint8)
                    matrix[: stop - start, : col_stop - col] = plane[
                        start:stop, col:col_stop
                    ]
                    dummy = np.zeros(TILE_ROWS, dtype=np.uint8)
                    dummy[: stop - start] = dummy_bit
                    tiles.append(
                        Tile(
                            len(tiles),
                            j,
                            start,
                            stop,
                            col,
                            col_stop,
                            matrix,
                            dummy,
                            group,
                        )
                    )
        return cls(mode, bits, c_out, positions, channels, scale, tiles)

    @property
    def zero_code(self):
        return 2 ** (self.bits - 1)

    @property
    def tile_count(self):
        return len(self.tiles)

    def plane_tiles(self, plane):
        return [t for t in self.tiles if t.plane == plane]

    def plane_matrix(self, plane):
        """Reassemble the binary matrix of one plane from its tiles."""
        rows = self.positions * self.channels[plane]
        out = np.zeros((rows, self.c_out), dtype=np.uint8)
        for tile in self.plane_tiles(plane):
            rows = slice(tile.row_start, tile.row_stop)
            out[rows, tile.col_start : tile.col_stop] = tile.active()
        return out

    def codes(self):
        """
        Reassemble the unsigned weight codes as a (rows, c_out) matrix.

        :raises MappingError: planes hold different row counts
        """
        if len(set(self.channels)) != 1:
            raise MappingError("planes of a shuffled map have different rows")
        total = np.zeros(
            (self.positions * self.channels[0], self.c_out), dtype=np.int64
        )
        for j in range(self.bits):
            total += self.plane_matrix(j).astype(np.int64) << j
        return total

    def renumbered(self, first_id):
        """Copy of the map whose tile ids start at ``first_id``."""
        tiles = [
            Tile(
                first_id + i,
                t.plane,
                t.row_start,
                t.row_stop,
                t.col_start,
                t.col_stop,
                t.matrix,
                t.dummy,
                t.group,
            )
            for i, t in enumerate(self.tiles)
        ]
        return TileMap(
            self.mode,
            self.bits,
            self.c_out,
            self.positions,
            self.channels,
            self.scale,
            tiles,
        )


def _layer_planes(layer, qw):
    if tuple(qw.shape) != layer.weight_shape:
        raise MappingError(
            "weights {0} do not fit layer {1}".format(
                qw.shape, layer.weight_shape
            )
        )
    codes = weight_matrix(qw.array())
    return bit_planes(codes, qw.bits)


def map_conventional(layer, qw):
    """
    Lay a quantized layer out with conventional mapping.

    :param layer: the :class:`~cimguard.layers.LayerSpec`
    :param qw: its weights as a :class:`~cimguard.quant.QTensor`

    :rtype: TileMap
    """
    planes = _layer_planes(layer, qw)
    return TileMap.from_planes(
        CONVENTIONAL,
        planes,
        layer.positions,
        [layer.c_in] * qw.bits,
        qw.scale,
    )


def map_subkernel(layer, qw):
    """
    Lay a convolution out with one group of tiles per kernel position.

    :raises MappingError: the layer is not a convolution
    """
    if layer.kind != CONV:
        raise MappingError("sub-kernel mapping needs a convolution layer")
    planes = _layer_planes(layer, qw)
    return TileMap.from_planes(
        SUBKERNEL,
        planes,
        layer.positions,
        [layer.c_in] * qw.bits,
        qw.scale,
    )


def map_layer(layer, qw, mode=CONVENTIONAL):
    if mode == CONVENTIONAL:
        return map_conventional(layer, qw)
    if mode == SUBKERNEL:
        return map_subkernel(layer, qw)
    raise MappingError("unknown mapping mode %r" % (mode,))


def tile_vmm(input_bits, matrix):
    """
    One read cycle of a tile: count the rows where input and cell are both
    1, per column.

    :param input_bits: binary vector (rows,) or batch (n, rows)
    :param matrix: binary (rows, cols) matrix, e.g. :meth:`Tile.active`

    :return: integer partial sums, each within [0, rows]
    """
    input_bits = np.asarray(input_bits)
    matrix = np.asarray(matrix)
    if input_bits.shape[-1] != matrix.shape[0]:
        raise MappingError(
            "{0} input bits for a tile with {1} rows".format(
                input_bits.shape[-1], matrix.shape[0]
            )
        )
    return input_bits.astype(np.int64) @ matrix.astype(np.int64)


def shift_add(psums, planes=None, dummy=None, zero_code=0):
    """
    Combine per-cycle partial sums into signed integer dot products.

    The result is ``sum over i, j, t of 2**(i + plane_j) * psums[i, j, t]``
    minus ``zero_code * sum over i, t of 2**i * dummy[i, t]``.

    :param psums: array (input_bits, planes, tiles, ..., cols) of partial
        sums (raw or ADC reconstructed), input bits and planes LSB first
    :param planes: significance of every entry on the plane axis, defaults
        to 0, 1, 2...
    :param dummy: optional array (input_bits, tiles, ...) of dummy column
        partial sums
    :param int zero_code: weight code held by the dummy column

    :raises MappingError: missing cycle data

    :return: float64 array (..., cols) holding exact integers
    """
    psums = np.asarray(psums, dtype=np.float64)
    if psums.ndim < 3 or not psums.size:
        raise MappingError("partial sums need input bit, plane and tile axes")
    if np.isnan(psums).any():
        raise MappingError("missing cycle data in partial sums")
    if planes is None:
        planes = range(psums.shape[1])
    planes = list(planes)
    if len(planes) != psums.shape[1]:
        raise MappingError("plane significances do not match the plane axis")
    total = np.zeros(psums.shape[3:], dtype=np.float64)
    for i in range(psums.shape[0]):
        for j, significance in enumerate(planes):
            for t in range(psums.shape[2]):
                total += psums[i, j, t] * float(2 ** (i + significance))
    if dummy is not None:
        dummy = np.asarray(dummy, dtype=np.float64)
        if np.isnan(dummy).any():
            raise MappingError("missing cycle data in dummy partial sums")
        offset = np.zeros(dummy.shape[2:], dtype=np.float64)
        for i in range(dummy.shape[0]):
            for t in range(dummy.shape[1]):
                offset += dummy[i, t] * float(2 ** i)
        total = total - zero_code * offset[..., None]
    return total
