"""
Bit-serial inference on simulated crossbar tiles.

Activations enter one bit per cycle (8 cycles, LSB first). Every tile is
read in groups of at most ``AdcConfig.rows`` word lines; the ADC converts
each group's column partial sums (with the chip's reference shifts) and the
periphery shift-adds the results over groups, cycles, planes and tiles.
The dummy column conducts on every driven row, so its partial sum is a
popcount of the input bits; the periphery counts it digitally and
subtracts ``zero_code`` times the input-code sum from the accumulators.

The rescaling from integer accumulators to real outputs is shared with the
software reference in :func:`forward_quantized`, so with exact partial
sums the hardware path reproduces it bit for bit.
"""

from __future__ import division

import logging

import numpy as np

from .crossbar import CONVENTIONAL, TILE_COLS, map_layer, shift_add
from .adc import FingerprintMismatchError
from .layers import CONV
from .quant import ACTIVATION_BITS, activation_codes, quantize_weights
from .shuffle import KeyMismatchError, apply_key_to_weights, shuffle_input
from .training import forward, unroll, weight_matrix


__all__ = [
    "Accelerator",
    "forward_hw",
    "forward_quantized",
    "rescale",
]


logger = logging.getLogger(__name__)


# upper bound on elements of one (input bits, rows, crossbar rows) slab
CHUNK_ELEMENTS = 1 << 22

_SHIFTS = np.arange(ACTIVATION_BITS, dtype=np.uint8)


def rescale(acc, dsum, row_step, w_step, bias, zero_code):
    """
    Real layer output from integer accumulators.

    :param acc: (rows, cols) sum of ``2**(i+j)`` weighted partial sums
    :param dsum: (rows, 1) or (rows, cols) input-code sum, the shift-added
        dummy column
    :param row_step: (rows,) activation step of each row's sample
    :param float w_step: weight step
    :param bias: (cols,) bias
    :param int zero_code: code held by the dummy column

    Weight code ``c`` reads as ``c - zero_code`` steps, so all-zero
    weights give exactly the bias.
    """
    value = acc - zero_code * dsum
    return value * (row_step[:, None] * w_step) + bias


def _shuffle_channels(codes, key):
    # channel axis is axis 1 for both (B, C, H, W) and (B, F)
    moved = np.moveaxis(codes, 1, 0)
    return np.moveaxis(shuffle_input(moved, key), 0, 1)


class Accelerator(object):
    """
    A network programmed onto crossbar tiles.

    Tile ids run globally over the layers, then over each layer's planes,
    row tiles and column tiles; a chip fingerprint must cover at least
    :attr:`tile_count` tiles.

    :param net: the :class:`~cimguard.layers.NetworkSpec`
    :param model: the :class:`~cimguard.training.FloatModel` to program
    :param adc: :class:`~cimguard.adc.AdcConfig` of the column ADCs, None
        for a chip read out without ADCs
    :param str mapping: ``conventional`` or ``subkernel``; fully connected
        layers are always mapped conventionally
    :param dict keys: layer index to the :class:`~cimguard.shuffle.ShuffleKey`
        the weights are programmed with
    :param int fake_seed: seed of the fake rows behind ZERO slots
    """

    def __init__(
        self,
        net,
        model,
        adc=None,
        mapping=CONVENTIONAL,
        keys=None,
        fake_seed=0,
    ):
        model.check_against(net)
        self.net = net
        self.model = model
        self.adc = adc
        self.mapping = mapping
        self.keys = dict(keys or {})
        for index, key in self.keys.items():
            if not 0 <= index < len(net.layers):
                raise KeyMismatchError("no layer %d to shuffle" % index)
            layer = net.layers[index]
            if key.N != layer.c_in:
                raise KeyMismatchError(
                    "key for layer {0} routes {1} channels, layer has "
                    "{2}".format(index, key.N, layer.c_in)
                )
            if key.bit_planes is not None and not all(
                0 <= j < layer.weight_bits for j in key.bit_planes
            ):
                raise KeyMismatchError(
                    "key for layer %d names no plane" % index
                )
        self.qweights = []
        self.tilemaps = []
        self._dense = []
        next_id = 0
        for index, layer in enumerate(net.layers):
            qw = quantize_weights(model.weights[index], layer.weight_bits)
            mode = mapping if layer.kind == CONV else CONVENTIONAL
            tilemap = map_layer(layer, qw, mode)
            if index in self.keys:
                tilemap = apply_key_to_weights(
                    tilemap, self.keys[index], fake_seed
                )
            tilemap = tilemap.renumbered(next_id)
            next_id += tilemap.tile_count
            self.qweights.append(qw)
            self.tilemaps.append(tilemap)
            self._dense.append(
                [
                    tilemap.plane_matrix(j).astype(np.float32)
                    for j in range(tilemap.bits)
                ]
            )
        self.tile_count = next_id
        logger.debug(
            "programmed %s on %d tiles (%s mapping, %d shuffled layers)",
            net.name,
            self.tile_count,
            mapping,
            len(self.keys),
        )

    def __repr__(self):
        return "Accelerator({0}, tiles={1})".format(
            self.net.name, self.tile_count
        )

    def layer_tiles(self, index):
        """Global tile ids of one layer."""
        return [t.tile_id for t in self.tilemaps[index].tiles]

    def _check_chip(self, chip):
        if chip is None:
            return
        if self.adc is None:
            raise FingerprintMismatchError("accelerator has no ADCs")
        if chip.config != self.adc:
            raise FingerprintMismatchError(
                "fingerprint is for a different ADC configuration"
            )
        if chip.tile_count < self.tile_count:
            raise FingerprintMismatchError(
                "fingerprint covers {0} tiles, network needs {1}".format(
                    chip.tile_count, self.tile_count
                )
            )

    def _resolve_keys(self, keys):
        if keys is None:
            return self.keys
        keys = dict(keys)
        if set(keys) != set(self.keys):
            raise KeyMismatchError(
                "keys given for layers {0}, programmed for {1}".format(
                    sorted(keys), sorted(self.keys)
                )
            )
        for index, key in keys.items():
            if not key.same_shape(self.keys[index]):
                raise KeyMismatchError(
                    "key for layer %d has the wrong layout" % index
                )
        return keys

    def linear(self, chip=None, keys=None):
        """
        Layer callback for :func:`~cimguard.training.forward`.

        :param chip: the :class:`~cimguard.adc.ChipFingerprint` reading the
            tiles, exact partial sums when None
        :param keys: input keys per shuffled layer, the programmed ones
            when None
        """
        self._check_chip(chip)
        keys = self._resolve_keys(keys)

        def layer_op(index, layer, a):
            return self.layer_output(index, a, chip, keys.get(index))

        return layer_op

    def forward(self, batch, chip=None, keys=None):
        """Logits of a batch, see :meth:`linear`."""
        return forward(self.net, self.model, batch, self.linear(chip, keys))[0]

    def layer_output(self, index, a, chip=None, key=None):
        """Pre-activation output of one layer, (B * positions, C_out)."""
        layer = self.net.layers[index]
        tilemap = self.tilemaps[index]
        codes, a_step = activation_codes(a)
        plain = unroll(layer, codes)
        shuffled = None
        if key is not None:
            shuffled = unroll(layer, _shuffle_channels(codes, key))
        inputs = []
        for j in range(tilemap.bits):
            keyed = key is not None and key.shuffles_plane(j)
            inputs.append(shuffled if keyed else plain)
        acc, dsum = self._accumulate(index, inputs, chip)
        row_step = np.repeat(a_step, plain.shape[0] // a.shape[0])
        qw = self.qweights[index]
        bias = np.asarray(self.model.biases[index], dtype=np.float64)
        return rescale(acc, dsum, row_step, qw.step, bias, qw.zero_code)

    def _accumulate(self, index, inputs, chip):
        tilemap = self.tilemaps[index]
        rows = inputs[0].shape[0]
        acc = np.zeros((rows, tilemap.c_out))
        dsum = np.zeros((rows, 1))
        last = tilemap.bits - 1
        widest = max(x.shape[1] for x in inputs)
        chunk = max(1, CHUNK_ELEMENTS // (ACTIVATION_BITS * widest))
        for start in range(0, rows, chunk):
            stop = min(start + chunk, rows)
            for j in range(tilemap.bits):
                bits = (
                    (inputs[j][None, start:stop] >> _SHIFTS[:, None, None]) & 1
                ).astype(np.float32)
                if chip is None:
                    self._exact_plane(index, j, bits, acc[start:stop])
                else:
                    self._converted_plane(
                        index, j, bits, acc[start:stop], chip
                    )
                if j == last:
                    # the dummy only conducts on the MSB plane
                    dummy = bits.sum(axis=-1)
                    dsum[start:stop] += shift_add(
                        dummy[:, None, None, :, None]
                    )
        return acc, dsum

    def _exact_plane(self, index, plane, bits, acc):
        # the sum over row tiles of exact partial sums is one matmul
        psum = bits @ self._dense[index][plane]
        acc += shift_add(psum[:, None, None], planes=[plane])

    def _converted_plane(self, index, plane, bits, acc, chip):
        tilemap = self.tilemaps[index]
        config = chip.config
        column_adc = np.arange(TILE_COLS) // config.columns_per_adc
        for tile in tilemap.plane_tiles(plane):
            active = tile.active().astype(np.float32)
            used = column_adc[None, None, : tile.used_cols]
            values = np.zeros(bits.shape[:2] + (tile.used_cols,))
            for first in range(0, tile.used_rows, config.rows):
                stop = min(first + config.rows, tile.used_rows)
                x = bits[:, :, tile.row_start + first : tile.row_start + stop]
                psum = (x @ active[first:stop]).astype(np.int64)
                table = chip.table(tile.tile_id, stop - first)
                step = config.read_delta(stop - first)
                values += table[used, psum] * step
            cols = slice(tile.col_start, tile.col_stop)
            acc[:, cols] += shift_add(values[:, None, None], planes=[plane])


def forward_hw(
    net,
    model,
    batch,
    chip=None,
    keys=None,
    mapping=CONVENTIONAL,
    programmed_keys=None,
    adc=None,
):
    """
    One-shot hardware inference.

    Programs ``model`` (with ``programmed_keys``, or ``keys`` when those
    are not given) and runs the batch through it, reading the tiles with
    ``chip``. Prefer :class:`Accelerator` when running many batches.

    :return: logits (B, classes)
    """
    if programmed_keys is None:
        programmed_keys = keys
    if adc is None and chip is not None:
        adc = chip.config
    accelerator = Accelerator(net, model, adc, mapping, programmed_keys)
    return accelerator.forward(batch, chip, keys)


def forward_quantized(net, model, batch):
    """
    Software reference: integer matmuls of the quantized codes, no
    crossbars, rescaled exactly like the hardware path.
    """
    model.check_against(net)
    qweights = [
        quantize_weights(w, layer.weight_bits)
        for w, layer in zip(model.weights, net.layers)
    ]

    def layer_op(index, layer, a):
        qw = qweights[index]
        codes, a_step = activation_codes(a)
        cols = unroll(layer, codes).astype(np.float64)
        acc = cols @ weight_matrix(qw.array()).astype(np.float64)
        dsum = cols.sum(axis=1)[:, None]
        row_step = np.repeat(a_step, cols.shape[0] // a.shape[0])
        bias = np.asarray(model.biases[index], dtype=np.float64)
        return rescale(acc, dsum, row_step, qw.step, bias, qw.zero_code)

    return forward(net, model, batch, layer_op)[0]
