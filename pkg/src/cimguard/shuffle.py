"""
Input-channel shuffling keys.

A key reorders the input channels of a layer block by block and may
insert ZERO slots. Weights are programmed with their rows in key order
(fake rows with random states fill the ZERO slots), and the shuffle array
in front of the crossbar routes each input channel to its row. With the
programmed key the two permutations cancel exactly; with any other key
the wrong inputs meet the wrong weights.

.. glossary::

    block
        Up to 128 consecutive input channels of a layer, shuffled among
        themselves (one shuffle array's width).

    matched digit
        A slot where two keys route the same real channel.
"""

from __future__ import division

import logging
import re
from dataclasses import dataclass

import numpy as np

from .crossbar import TileMap
from .util import keyed_rng


__all__ = [
    "ShuffleKeyError",
    "KeyMismatchError",
    "MalformedKeyFileError",
    "ZERO",
    "BLOCK_SIZE",
    "ShuffleKey",
    "gen_key",
    "gen_layer_key",
    "random_key_like",
    "possible_matches",
    "matches_possible",
    "key_with_matches",
    "shuffle_input",
    "one_hot",
    "apply_key_to_weights",
    "remove_key",
    "matched_digits",
    "encode_keys",
    "decode_keys",
    "write_keys",
    "read_keys",
]


logger = logging.getLogger(__name__)


ZERO = -1
BLOCK_SIZE = 128


class ShuffleKeyError(ValueError):
    """Raised for keys that are not a valid channel arrangement."""

    pass


class KeyMismatchError(Exception):
    """Raised when a key does not fit the layer or the other key it is
    used with."""

    pass


class MalformedKeyFileError(Exception):
    pass


def _block_arrangement(rng, n, k):
    # slot perm[i] gets channel i for i < n, the remaining k slots are ZERO
    perm = rng.permutation(n + k)
    assignment = np.full(n + k, ZERO, dtype=np.int64)
    assignment[perm[:n]] = np.arange(n)
    return assignment


@dataclass(frozen=True, eq=False)
class ShuffleKey(object):
    """
    Channel arrangement of one layer.

    :ivar tuple blocks: one int64 array per block; entry ``s`` is the
        block-local source channel routed to slot ``s``, or ZERO
    :ivar layer: index of the layer the key belongs to, None if unbound
    :ivar bit_planes: weight planes stored in key order, None for all
    """

    blocks: tuple
    layer: object = None
    bit_planes: object = None

    def __post_init__(self):
        blocks = tuple(np.array(b, dtype=np.int64) for b in self.blocks)
        if not blocks:
            raise ShuffleKeyError("a key needs at least one block")
        zeros = None
        for index, block in enumerate(blocks):
            real = block[block != ZERO]
            if np.any(block < ZERO):
                raise ShuffleKeyError("negative entry in block %d" % index)
            if not np.array_equal(np.sort(real), np.arange(len(real))):
                raise ShuffleKeyError(
                    "block {0} does not route every channel exactly "
                    "once".format(index)
                )
            if zeros is None:
                zeros = len(block) - len(real)
            elif len(block) - len(real) != zeros:
                raise ShuffleKeyError("blocks insert different zero counts")
            block.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)
        if self.bit_planes is not None:
            object.__setattr__(
                self, "bit_planes", frozenset(int(j) for j in self.bit_planes)
            )

    def __eq__(self, other):
        if isinstance(other, ShuffleKey):
            return (
                self.layer == other.layer
                and self.bit_planes == other.bit_planes
                and len(self.blocks) == len(other.blocks)
                and all(
                    np.array_equal(a, b)
                    for a, b in zip(self.blocks, other.blocks)
                )
            )
        return NotImplemented

    def __ne__(self, other):
        ret = self.__eq__(other)
        if ret is NotImplemented:
            return ret
        return not ret

    def __hash__(self):
        return hash(tuple(tuple(b) for b in self.blocks))

    def __repr__(self):
        return "ShuffleKey(layer={0}, N={1}, k={2}, blocks={3})".format(
            self.layer, self.N, self.k, len(self.blocks)
        )

    @property
    def N(self):
        """Real channels covered by the key."""
        return sum(int(np.sum(b != ZERO)) for b in self.blocks)

    @property
    def k(self):
        """ZERO slots per block."""
        return int(np.sum(self.blocks[0] == ZERO))

    @property
    def M(self):
        """Slots, real and ZERO, over all blocks."""
        return sum(len(b) for b in self.blocks)

    @property
    def block_sizes(self):
        return tuple(int(np.sum(b != ZERO)) for b in self.blocks)

    def shuffles_plane(self, plane):
        return self.bit_planes is None or plane in self.bit_planes

    def source_index(self):
        """
        Layer-wide source channel of every slot, ZERO kept as -1.

        :rtype: numpy.ndarray of length M
        """
        out = []
        base = 0
        for block in self.blocks:
            out.append(np.where(block == ZERO, ZERO, block + base))
            base += int(np.sum(block != ZERO))
        return np.concatenate(out)

    def same_shape(self, other):
        return self.block_sizes == other.block_sizes and self.k == other.k

    def with_layer(self, layer, bit_planes=None):
        return ShuffleKey(self.blocks, layer, bit_planes)


def gen_key(key_seed, N, k=0, layer=None, bit_planes=None):
    """
    Draw a single-block key uniformly from all arrangements of N channels
    and k ZERO slots.

    :raises ShuffleKeyError: N < 2 or k < 0
    """
    if N < 2:
        raise ShuffleKeyError("shuffling needs at least two channels")
    if k < 0:
        raise ShuffleKeyError("zero count must not be negative")
    rng = keyed_rng("shuffle-key", key_seed, layer, 0)
    return ShuffleKey((_block_arrangement(rng, N, k),), layer, bit_planes)


def gen_layer_key(key_seed, channels, k=0, layer=None, bit_planes=None):
    """
    Draw a key for a layer with ``channels`` inputs: one independent block
    per 128 channels, each with k ZERO slots.
    """
    if channels < 1:
        raise ShuffleKeyError("a layer needs at least one input channel")
    if k < 0:
        raise ShuffleKeyError("zero count must not be negative")
    blocks = []
    for index, start in enumerate(range(0, channels, BLOCK_SIZE)):
        n = min(BLOCK_SIZE, channels - start)
        rng = keyed_rng("shuffle-key", key_seed, layer, index)
        blocks.append(_block_arrangement(rng, n, k))
    return ShuffleKey(tuple(blocks), layer, bit_planes)


def random_key_like(key, seed):
    """A uniformly random key with the same block layout as ``key``."""
    blocks = []
    for index, n in enumerate(key.block_sizes):
        rng = keyed_rng("guess", seed, key.layer, index)
        blocks.append(_block_arrangement(rng, n, key.k))
    return ShuffleKey(tuple(blocks), key.layer, key.bit_planes)


def possible_matches(key):
    """
    Every count of real channels some key can share with ``key``, sorted.

    A block without ZERO slots cannot leave exactly one of its channels
    unmatched, since that channel has no other slot to go to.
    """
    unmatched = set([0])
    for real in key.block_sizes:
        allowed = [u for u in range(real + 1) if key.k or u != 1]
        unmatched = set(t + u for t in unmatched for u in allowed)
    return sorted(key.N - u for u in unmatched)


def matches_possible(key, matches):
    """Whether some key shares exactly ``matches`` channels with ``key``."""
    return matches in possible_matches(key)


def key_with_matches(key, matches, seed, tries=1000):
    """
    A key that routes exactly ``matches`` real channels like ``key`` does
    and every other real channel somewhere else.

    The matched channels are drawn uniformly among the choices that leave
    no block of a zero-free key with a single unmatched channel.

    :raises ShuffleKeyError: no such key exists (for instance one unmatched
        channel in a block without ZERO slots)
    """
    if not 0 <= matches <= key.N:
        raise ShuffleKeyError("matches must lie in [0, %d]" % key.N)
    if not matches_possible(key, matches):
        raise ShuffleKeyError(
            "no key shares exactly {0} of {1} channels without ZERO "
            "slots".format(matches, key.N)
        )
    rng = keyed_rng("matches", seed, key.layer, matches)
    real = [
        (b, s)
        for b, block in enumerate(key.blocks)
        for s in np.flatnonzero(block != ZERO)
    ]
    for _ in range(tries):
        picked = rng.choice(len(real), size=matches, replace=False)
        keep = set(real[i] for i in picked)
        unmatched = np.zeros(len(key.blocks), dtype=np.int64)
        for b, s in real:
            if (b, s) not in keep:
                unmatched[b] += 1
        if key.k or not np.any(unmatched == 1):
            break
    else:
        raise ShuffleKeyError(
            "no admissible choice of %d matched channels found" % matches
        )
    blocks = []
    for b, block in enumerate(key.blocks):
        new = np.full(len(block), ZERO, dtype=np.int64)
        free = []
        moving = []
        for s, source in enumerate(block):
            if (b, s) in keep:
                new[s] = source
            else:
                free.append(s)
                if source != ZERO:
                    moving.append(source)
        true_slot = dict((int(block[s]), s) for s in free if block[s] != ZERO)
        while moving:
            slots = rng.permutation(free)[: len(moving)]
            if all(true_slot[int(c)] != s for c, s in zip(moving, slots)):
                new[slots] = moving
                break
        blocks.append(new)
    return ShuffleKey(tuple(blocks), key.layer, key.bit_planes)


def shuffle_input(activations, key):
    """
    Route input channels to crossbar rows.

    :param activations: array whose first axis holds the layer's N input
        channels (extra trailing axes are carried along)

    :return: array with M rows on the first axis; ZERO slots hold zeros
    """
    activations = np.asarray(activations)
    if activations.shape[0] != key.N:
        raise KeyMismatchError(
            "key routes {0} channels, input has {1}".format(
                key.N, activations.shape[0]
            )
        )
    blank = np.zeros((1,) + activations.shape[1:], activations.dtype)
    padded = np.concatenate([activations, blank])
    # ZERO is -1, which picks the appended zero row
    return padded[key.source_index()]


def one_hot(key):
    """The (M, N) routing matrix of a key."""
    source = key.source_index()
    matrix = np.zeros((key.M, key.N), dtype=np.int64)
    rows = np.flatnonzero(source != ZERO)
    matrix[rows, source[rows]] = 1
    return matrix


def apply_key_to_weights(tilemap, key, fake_seed=0):
    """
    Program a layer's tiles in key order.

    Rows of every shuffled plane are reordered within each kernel position
    and ZERO slots receive fake rows of random states. Planes the key does
    not cover keep their plain layout.

    :param TileMap tilemap: the plainly mapped layer
    :param ShuffleKey key: the programmed key

    :rtype: TileMap
    """
    if len(set(tilemap.channels)) != 1 or tilemap.channels[0] != key.N:
        raise KeyMismatchError(
            "key routes {0} channels, layer has {1}".format(
                key.N, tilemap.channels
            )
        )
    source = key.source_index()
    fake = source == ZERO
    planes = []
    channels = []
    for j in range(tilemap.bits):
        plane = tilemap.plane_matrix(j)
        if not key.shuffles_plane(j):
            planes.append(plane)
            channels.append(key.N)
            continue
        rng = keyed_rng("fake-rows", fake_seed, key.layer, j)
        per_pos = plane.reshape(tilemap.positions, key.N, tilemap.c_out)
        out = per_pos[:, np.where(fake, 0, source), :].copy()
        out[:, fake, :] = rng.integers(
            0, 2, size=(tilemap.positions, int(fake.sum()), tilemap.c_out)
        )
        planes.append(out.reshape(-1, tilemap.c_out).astype(np.uint8))
        channels.append(key.M)
    return TileMap.from_planes(
        tilemap.mode, planes, tilemap.positions, channels, tilemap.scale
    )


def remove_key(tilemap, key):
    """Undo :func:`apply_key_to_weights`, dropping the fake rows."""
    source = key.source_index()
    real = np.flatnonzero(source != ZERO)
    order = np.argsort(source[real])
    planes = []
    for j in range(tilemap.bits):
        plane = tilemap.plane_matrix(j)
        if key.shuffles_plane(j):
            per_pos = plane.reshape(tilemap.positions, key.M, tilemap.c_out)
            plane = per_pos[:, real[order], :].reshape(-1, tilemap.c_out)
        planes.append(plane)
    return TileMap.from_planes(
        tilemap.mode,
        planes,
        tilemap.positions,
        [key.N] * tilemap.bits,
        tilemap.scale,
    )


def matched_digits(key_a, key_b):
    """
    Count slots where both keys route the same real channel. Slots that
    are ZERO in both keys do not count.

    :raises KeyMismatchError: the keys have different layouts
    """
    if not key_a.same_shape(key_b):
        raise KeyMismatchError("keys have different block layouts")
    a = key_a.source_index()
    b = key_b.source_index()
    return int(np.sum((a == b) & (a != ZERO)))


def encode_keys(keys):
    """
    Text form of a set of layer keys::

        cimguard-keys 1
        layer 2 planes 0,1 blocks 1
        block 0 3,-,5,0,...
        end
    """
    lines = ["cimguard-keys 1"]
    for layer in sorted(keys):
        key = keys[layer]
        planes = (
            "all"
            if key.bit_planes is None
            else ",".join(str(j) for j in sorted(key.bit_planes))
        )
        lines.append(
            "layer {0} planes {1} blocks {2}".format(
                layer, planes, len(key.blocks)
            )
        )
        for index, block in enumerate(key.blocks):
            lines.append(
                "block {0} {1}".format(
                    index,
                    ",".join("-" if s == ZERO else str(int(s)) for s in block),
                )
            )
    lines.append("end")
    return "\n".join(lines) + "\n"


_layer_re = re.compile(r"^layer (\d+) planes (all|[\d,]+) blocks (\d+)$")
_block_re = re.compile(r"^block (\d+) ([\d,\-]+)$")


def decode_keys(text):
    """
    Parse :func:`encode_keys` output.

    :raises MalformedKeyFileError: any deviation from the format
    :rtype: dict mapping layer index to :class:`ShuffleKey`
    """
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines or lines[0] != "cimguard-keys 1":
        raise MalformedKeyFileError("not a version 1 key file")
    if lines[-1] != "end":
        raise MalformedKeyFileError("key file truncated, no end marker")
    keys = {}
    pos = 1
    while pos < len(lines) - 1:
        match = _layer_re.match(lines[pos])
        if not match:
            raise MalformedKeyFileError(
                "expected a layer line: %r" % lines[pos]
            )
        layer = int(match.group(1))
        planes = (
            None
            if match.group(2) == "all"
            else [int(j) for j in match.group(2).split(",")]
        )
        count = int(match.group(3))
        blocks = []
        for index in range(count):
            pos += 1
            if pos >= len(lines) - 1:
                raise MalformedKeyFileError("layer %d lacks blocks" % layer)
            block = _block_re.match(lines[pos])
            if not block or int(block.group(1)) != index:
                raise MalformedKeyFileError("bad block line %r" % lines[pos])
            blocks.append(
                [
                    ZERO if s == "-" else int(s)
                    for s in block.group(2).split(",")
                ]
            )
        if layer in keys:
            raise MalformedKeyFileError("layer %d listed twice" % layer)
        try:
            keys[layer] = ShuffleKey(tuple(blocks), layer, planes)
        except (ShuffleKeyError, ValueError) as e:
            raise MalformedKeyFileError("layer %d: %s" % (layer, e))
        pos += 1
    return keys


def write_keys(path, keys):
    with open(path, "w") as f:
        f.write(encode_keys(keys))


def read_keys(path):
    with open(path) as f:
        return decode_keys(f.read())
