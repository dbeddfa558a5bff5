"""
Dataset readers: CIFAR-10 binary batches, MNIST IDX files and a seeded
synthetic task.

The binary readers are strict. A truncated record, a bad magic number or
an out-of-range label is reported as :class:`MalformedDatasetError`
instead of being silently padded or skipped.
"""

from __future__ import division

import logging
import os
import struct

import numpy as np

from .util import keyed_rng


__all__ = [
    "DatasetError",
    "MalformedDatasetError",
    "DatasetNotFoundError",
    "Dataset",
    "DATA_ENV",
    "CIFAR_RECORD",
    "read_cifar_batch",
    "read_idx",
    "load_cifar10",
    "load_mnist",
    "synthetic_dataset",
    "load_dataset",
    "dataset_ids",
]


logger = logging.getLogger(__name__)


DATA_ENV = "CIMGUARD_DATA"
CIFAR_RECORD = 1 + 3 * 32 * 32
CIFAR_BATCH_RECORDS = 10000
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DatasetError(Exception):
    """Base class for dataset loading problems."""

    pass


class MalformedDatasetError(DatasetError):
    """Raised when a data file does not follow its binary format."""

    pass


class DatasetNotFoundError(DatasetError):
    """Raised when the files of a dataset cannot be located."""

    pass


class Dataset(object):
    """
    Train and test splits of an image classification task.

    Images are float32 arrays scaled to [0, 1], channel first. Labels are
    int64 class indices.
    """

    def __init__(self, name, train_x, train_y, test_x, test_y, classes=10):
        if len(train_x) != len(train_y) or len(test_x) != len(test_y):
            raise DatasetError("image and label counts differ")
        self.name = name
        self.train_x = train_x
        self.train_y = train_y
        self.test_x = test_x
        self.test_y = test_y
        self.classes = classes

    def __repr__(self):
        return "Dataset({0!r}, train={1}, test={2})".format(
            self.name, len(self.train_y), len(self.test_y)
        )

    @property
    def input_shape(self):
        return tuple(self.train_x.shape[1:])

    def subset(self, train=None, test=None):
        """Return the first ``train``/``test`` samples of each split."""
        return Dataset(
            self.name,
            self.train_x[:train],
            self.train_y[:train],
            self.test_x[:test],
            self.test_y[:test],
            self.classes,
        )


def _read_file(path):
    try:
        with open(path, "rb") as f:
            return f.read()
    except (IOError, OSError) as e:
        raise DatasetNotFoundError("Cannot read {0}: {1}".format(path, e))


def read_cifar_batch(data, expected_records=None):
    """
    Parse one CIFAR-10 binary batch.

    Every record is one label byte followed by 3072 pixel bytes (red,
    green and blue planes of a 32x32 image).

    :param bytes data: file contents
    :param int expected_records: record count the file must hold

    :raises MalformedDatasetError: truncated record, wrong record count or
        label outside 0..9

    :return: tuple of images (n, 3, 32, 32) uint8 and labels (n,) int64
    """
    if not data or len(data) % CIFAR_RECORD:
        raise MalformedDatasetError(
            "CIFAR batch of {0} bytes is not a whole number of {1}-byte "
            "records".format(len(data), CIFAR_RECORD)
        )
    records = len(data) // CIFAR_RECORD
    if expected_records is not None and records != expected_records:
        raise MalformedDatasetError(
            "CIFAR batch holds {0} records, expected {1}".format(
                records, expected_records
            )
        )
    raw = np.frombuffer(data, dtype=np.uint8).reshape(records, CIFAR_RECORD)
    labels = raw[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise MalformedDatasetError(
            "CIFAR label {0} out of range".format(int(labels.max()))
        )
    images = raw[:, 1:].reshape(records, 3, 32, 32)
    return images, labels


def read_idx(data, magic):
    """
    Parse an IDX file (big-endian MNIST container).

    :param bytes data: file contents
    :param int magic: expected magic number, 0x803 for images, 0x801 for
        labels

    :raises MalformedDatasetError: bad magic, short header or a payload
        that does not match the declared dimensions

    :rtype: numpy.ndarray
    """
    if len(data) < 4:
        raise MalformedDatasetError("IDX header truncated")
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise MalformedDatasetError(
            "IDX magic 0x{0:08x}, expected 0x{1:08x}".format(found, magic)
        )
    dims = found & 0xFF
    header = 4 + 4 * dims
    if len(data) < header:
        raise MalformedDatasetError("IDX dimension list truncated")
    shape = struct.unpack(">" + "I" * dims, data[4:header])
    size = 1
    for i in shape:
        size *= i
    if len(data) - header != size:
        raise MalformedDatasetError(
            "IDX payload is {0} bytes, dimensions {1} need {2}".format(
                len(data) - header, shape, size
            )
        )
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(shape)


def _data_root(path, name):
    if path:
        return path
    root = os.environ.get(DATA_ENV)
    if not root:
        raise DatasetNotFoundError(
            "No path given for {0} and ${1} is not set".format(name, DATA_ENV)
        )
    return os.path.join(root, name)


def load_cifar10(path=None):
    """
    Load CIFAR-10 from the directory holding ``data_batch_1.bin`` to
    ``data_batch_5.bin`` and ``test_batch.bin``.
    """
    root = _data_root(path, "cifar10")
    train = [
        read_cifar_batch(
            _read_file(os.path.join(root, "data_batch_%d.bin" % i)),
            CIFAR_BATCH_RECORDS,
        )
        for i in range(1, 6)
    ]
    test_x, test_y = read_cifar_batch(
        _read_file(os.path.join(root, "test_batch.bin")), CIFAR_BATCH_RECORDS
    )
    train_x = np.concatenate([x for x, _ in train])
    train_y = np.concatenate([y for _, y in train])
    logger.info("loaded CIFAR-10 from %s", root)
    return Dataset(
        "cifar10",
        train_x.astype(np.float32) / 255,
        train_y,
        test_x.astype(np.float32) / 255,
        test_y,
    )


def _mnist_split(root, prefix):
    images = read_idx(
        _read_file(os.path.join(root, prefix + "-images-idx3-ubyte")),
        IDX_IMAGES_MAGIC,
    )
    labels = read_idx(
        _read_file(os.path.join(root, prefix + "-labels-idx1-ubyte")),
        IDX_LABELS_MAGIC,
    )
    if len(images) != len(labels):
        raise MalformedDatasetError(
            "{0} images but {1} labels in the {2} split".format(
                len(images), len(labels), prefix
            )
        )
    if labels.size and labels.max() > 9:
        raise MalformedDatasetError("MNIST label out of range")
    images = images.reshape(len(images), 1, 28, 28).astype(np.float32) / 255
    return images, labels.astype(np.int64)


def load_mnist(path=None):
    """Load MNIST from the directory holding the four IDX files."""
    root = _data_root(path, "mnist")
    train_x, train_y = _mnist_split(root, "train")
    test_x, test_y = _mnist_split(root, "t10k")
    logger.info("loaded MNIST from %s", root)
    return Dataset("mnist", train_x, train_y, test_x, test_y)


def synthetic_dataset(
    input_shape, classes=10, train=2000, test=500, seed=0, noise=0.05
):
    """
    Seeded classification task: one random prototype per class, samples are
    the prototype plus Gaussian noise, clipped to [0, 1].

    The same arguments always produce the same arrays.
    """
    shape = tuple(input_shape)
    rng = keyed_rng("synthetic", seed, "prototypes")
    prototypes = rng.random((classes,) + shape)

    def split(name, count):
        rng = keyed_rng("synthetic", seed, name)
        labels = rng.integers(0, classes, count)
        images = prototypes[labels] + noise * rng.standard_normal(
            (count,) + shape
        )
        images = np.clip(images, 0, 1).astype(np.float32)
        return images, labels.astype(np.int64)

    train_x, train_y = split("train", train)
    test_x, test_y = split("test", test)
    return Dataset("synthetic", train_x, train_y, test_x, test_y, classes)


_loaders = {
    "cifar10": load_cifar10,
    "mnist": load_mnist,
}


def dataset_ids():
    return sorted(list(_loaders) + ["synthetic"])


def load_dataset(
    name,
    path=None,
    input_shape=None,
    seed=0,
    train_limit=None,
    test_limit=None,
):
    """
    Load a dataset by id.

    :param str name: ``cifar10``, ``mnist`` or ``synthetic``
    :param str path: directory of the binary files; defaults to
        ``$CIMGUARD_DATA/<name>``
    :param tuple input_shape: sample shape of the synthetic task
    :param int train_limit: keep only this many training samples
    :param int test_limit: keep only this many test samples

    :raises DatasetError: unknown id, missing or malformed files

    :rtype: Dataset
    """
    if name == "synthetic":
        if input_shape is None:
            raise DatasetError("the synthetic dataset needs an input shape")
        dataset = synthetic_dataset(
            input_shape,
            train=train_limit or 2000,
            test=test_limit or 500,
            seed=seed,
        )
    elif name in _loaders:
        dataset = _loaders[name](path)
    else:
        raise DatasetError(
            "Unknown dataset {0!r}, known ones: {1}".format(
                name, dataset_ids()
            )
        )
    if train_limit or test_limit:
        dataset = dataset.subset(train_limit or None, test_limit or None)
    return dataset
