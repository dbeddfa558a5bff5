"""
Fixed-point tensors for weights and activations.

Weights are quantized to unsigned b-bit codes on a mid-rise grid over
[-s, +s]; code ``2**(b-1)`` is the zero reference that the crossbar's
dummy column holds. Activations are unsigned 8-bit codes over [0, max].

.. glossary::

    mid-rise grid
        Levels ``-s + code * step`` with ``step = 2s / (2**b - 1)``. Both
        range endpoints are representable, zero is not: a zero weight sits
        half a step below the zero-reference code's level.

    readout value
        What the crossbar makes of a weight code: ``(code - 2**(b-1))``
        steps, half a step below its grid level, so the zero-reference
        code reads as exactly zero.
"""

from __future__ import division

import numpy as np


__all__ = [
    "QuantizationError",
    "QTensor",
    "ACTIVATION_BITS",
    "quantize_weights",
    "quantize_activations",
    "activation_codes",
]


ACTIVATION_BITS = 8
MIN_WEIGHT_BITS = 2
MAX_WEIGHT_BITS = 8


class QuantizationError(ValueError):
    """Raised for empty inputs, unsupported bit widths or negative
    activations."""

    pass


class QTensor(object):
    """
    Fixed-point tensor: unsigned integer codes plus a real scale.

    :ivar tuple shape: dimension sizes
    :ivar numpy.ndarray codes: flat array of unsigned codes
    :ivar int bits: bit width of every code
    :ivar float scale: for signed (weight) tensors the half range ``s``, for
        unsigned (activation) tensors the full range ``max``
    :ivar bool signed: True for weights (mid-rise grid around the zero
        reference), False for activations
    """

    def __init__(self, shape, codes, bits, scale, signed=True):
        shape = tuple(int(i) for i in shape)
        codes = np.asarray(codes).reshape(-1)
        if not scale > 0:
            raise QuantizationError("scale must be positive, got %r" % scale)
        if codes.size != int(np.prod(shape, dtype=np.int64)):
            raise QuantizationError(
                "{0} codes do not fill shape {1}".format(codes.size, shape)
            )
        if codes.size and (codes.min() < 0 or codes.max() >= 2 ** bits):
            raise QuantizationError(
                "codes outside of the {0}-bit range".format(bits)
            )
        self.shape = shape
        self.codes = codes.astype(np.int64)
        self.bits = int(bits)
        self.scale = float(scale)
        self.signed = bool(signed)

    def __repr__(self):
        return "QTensor(shape={0}, bits={1}, scale={2!r}, signed={3})".format(
            self.shape, self.bits, self.scale, self.signed
        )

    def __eq__(self, other):
        if isinstance(other, QTensor):
            return (
                self.shape == other.shape
                and self.bits == other.bits
                and self.scale == other.scale
                and self.signed == other.signed
                and np.array_equal(self.codes, other.codes)
            )
        return NotImplemented

    def __ne__(self, other):
        ret = self.__eq__(other)
        if ret is NotImplemented:
            return ret
        return not ret

    @property
    def levels(self):
        return 2 ** self.bits - 1

    @property
    def step(self):
        """Real value of one code step."""
        if self.signed:
            return 2 * self.scale / self.levels
        return self.scale / self.levels

    @property
    def zero_code(self):
        """Code held by the dummy (zero-reference) column."""
        if self.signed:
            return 2 ** (self.bits - 1)
        return 0

    def array(self):
        """Return the codes reshaped to :attr:`shape`."""
        return self.codes.reshape(self.shape)

    def dequantize(self):
        """Return the real values the codes stand for."""
        codes = self.array().astype(np.float64)
        if self.signed:
            return -self.scale + codes * self.step
        return codes * self.step

    def readout(self):
        """Return the values the crossbar computes with."""
        if not self.signed:
            return self.dequantize()
        return (self.array() - self.zero_code) * self.step


def _round_half_up(values):
    return np.floor(values + 0.5)


def quantize_weights(w, bits, scale=None):
    """
    Quantize real weights to unsigned b-bit codes on the mid-rise grid.

    :param w: real weight array, any shape
    :param int bits: weight bit width, 2 to 8 inclusive
    :param float scale: half range ``s``; defaults to ``max(abs(w))`` or 1.0
        for an all-zero array. Passing the scale of an existing QTensor
        requantizes its dequantized values to the very same codes.

    :raises QuantizationError: empty array or bit width out of range

    :rtype: QTensor
    """
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise QuantizationError("Cannot quantize an empty weight array")
    if not MIN_WEIGHT_BITS <= bits <= MAX_WEIGHT_BITS:
        raise QuantizationError(
            "weight bits must be between {0} and {1}, got {2}".format(
                MIN_WEIGHT_BITS, MAX_WEIGHT_BITS, bits
            )
        )
    if scale is None:
        scale = float(np.max(np.abs(w))) or 1.0
    levels = 2 ** bits - 1
    # (w + s) / step written so that w == 0 lands exactly on a tie
    codes = _round_half_up((w + scale) * levels / (2 * scale))
    codes = np.clip(codes, 0, levels)
    return QTensor(w.shape, codes, bits, scale, signed=True)


def quantize_activations(a, scale=None):
    """
    Quantize non-negative activations to unsigned 8-bit codes over
    [0, max].

    :raises QuantizationError: negative or empty input

    :rtype: QTensor
    """
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        raise QuantizationError("Cannot quantize an empty activation array")
    if np.any(a < 0):
        raise QuantizationError("activations must be non-negative (post-ReLU)")
    if scale is None:
        scale = float(np.max(a)) or 1.0
    levels = 2 ** ACTIVATION_BITS - 1
    codes = np.clip(_round_half_up(a * levels / scale), 0, levels)
    return QTensor(a.shape, codes, ACTIVATION_BITS, scale, signed=False)


def activation_codes(batch):
    """
    Quantize every sample of a batch as its own tensor.

    Per-sample scaling keeps a sample's codes independent of whatever else
    shares its batch.

    :param batch: array of shape (B, ...) with non-negative values

    :return: tuple of codes (same shape, uint8) and per-sample step (B,)
    """
    batch = np.asarray(batch, dtype=np.float64)
    if np.any(batch < 0):
        raise QuantizationError("activations must be non-negative (post-ReLU)")
    levels = 2 ** ACTIVATION_BITS - 1
    flat = batch.reshape(batch.shape[0], -1)
    scale = flat.max(axis=1) if flat.shape[1] else np.ones(batch.shape[0])
    scale = np.where(scale > 0, scale, 1.0)
    expand = (slice(None),) + (None,) * (batch.ndim - 1)
    codes = np.clip(
        _round_half_up(batch * levels / scale[expand]), 0, levels
    )
    return codes.astype(np.uint8), scale / levels
