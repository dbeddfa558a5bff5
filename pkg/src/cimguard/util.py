"""
Keyed, counter-based seeding shared by every simulation module.

Nothing in the package draws from global random state. Every random
quantity (chip fingerprints, shuffle keys, fake rows, Monte-Carlo trials,
training order) comes from a numpy generator whose key is derived from a
tuple of labels, so a value depends only on *what* it is (for example
``("fingerprint", chip_seed, tile)``) and never on evaluation order or
threading.
"""

from __future__ import division

from hashlib import sha256

import numpy as np


__all__ = [
    "derive_seed",
    "keyed_rng",
    "PRNG",
    "digest_text",
    "natural_key",
]


def _label_bytes(labels):
    return "/".join(str(label) for label in labels).encode("utf-8")


def derive_seed(*labels):
    """
    Turn an arbitrary tuple of labels into a 128-bit integer seed.

    The labels are joined and hashed, so ``derive_seed(7, "tile", 3)`` and
    ``derive_seed(7, "tile", 4)`` are unrelated even though they differ in
    one position only.

    :param labels: ints, strings or anything with a stable ``str()``

    :return: seed in range [0, 2**128)
    :rtype: int
    """
    digest = sha256(b"cimguard-seed-" + _label_bytes(labels)).digest()
    return int.from_bytes(digest[:16], "big")


def keyed_rng(*labels):
    """
    Return a numpy Generator keyed on the labels.

    The bit generator is Philox, a counter-based generator: the key selects
    the stream and the stream position is a plain counter, so two streams
    with different labels never interact.

    :rtype: numpy.random.Generator
    """
    return np.random.Generator(np.random.Philox(key=derive_seed(*labels)))


class PRNG(object):
    # this returns a callable which, when invoked with an integer N, will
    # return N pseudorandom bytes. It hashes a counter together with the
    # seed, so the stream for one seed can be regenerated at will. Used
    # where raw bytes are more convenient than numpy arrays (corrupting
    # model blobs and fuzzing parsers).
    def __init__(self, seed):
        self.generator = self.block_generator(seed)

    def __call__(self, numbytes):
        return bytes(next(self.generator) for _ in range(numbytes))

    def block_generator(self, seed):
        counter = 0
        while True:
            for byte in sha256(
                ("prng-%d-%s" % (counter, seed)).encode()
            ).digest():
                yield byte
            counter += 1


def digest_text(text, length=16):
    """Return a short hex digest of a text (config hashes)."""
    if not isinstance(text, bytes):
        text = text.encode("utf-8")
    return sha256(text).hexdigest()[:length]


def natural_key(value):
    """Sort key that orders numeric strings numerically."""
    text = str(value)
    try:
        return (0, float(text), text)
    except ValueError:
        return (1, 0.0, text)
