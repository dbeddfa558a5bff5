"""
Checkpoint format for trained float models.

A checkpoint is a text manifest followed by one binary blob::

    cimguard-model 1
    network vgg8-desk
    hyperparams learning_rate=0.05 momentum=0.9 ...
    tensors 16
    tensor 0 weight 32,3,3,3 bits 8 scale 0.41...
    tensor 0 bias 32
    ...
    blob 1234 sha256 9f86...
    <empty line>
    <blob: every tensor as little-endian float32, in manifest order>

The manifest is parsed strictly: unknown versions, tensor sizes that do
not add up to the blob, truncated blobs and checksum mismatches are all
errors.
"""

from __future__ import division

import hashlib
from dataclasses import asdict, fields

import numpy as np

from .training import FloatModel, Hyperparams


__all__ = [
    "ModelFileError",
    "UnsupportedVersionError",
    "ChecksumError",
    "FORMAT_VERSION",
    "encode_model",
    "decode_model",
    "save_model",
    "load_model",
]


FORMAT_VERSION = 1
MAGIC = "cimguard-model"


class ModelFileError(Exception):
    """Raised for checkpoints that cannot be parsed."""

    pass


class UnsupportedVersionError(ModelFileError):
    pass


class ChecksumError(ModelFileError):
    pass


def _dims(shape):
    return ",".join(str(i) for i in shape)


def _weight_scale(w):
    # the default half range of quantize_weights, taken on the stored floats
    return (float(np.max(np.abs(w))) if w.size else 0.0) or 1.0


def _parse_quantization(parts, line):
    if len(parts) != 4 or parts[0] != "bits" or parts[2] != "scale":
        raise ModelFileError("malformed tensor line %r" % line)
    bits = _parse_int(parts[1], "weight bits")
    if not 2 <= bits <= 8:
        raise ModelFileError("weight bits %d outside [2, 8]" % bits)
    try:
        scale = float(parts[3])
    except ValueError:
        raise ModelFileError("weight scale is not a number: %r" % parts[3])
    return bits, scale


def encode_model(model, net):
    """
    Serialise a model trained for ``net``.

    :rtype: bytes
    """
    model.check_against(net)
    hp = " ".join(
        "{0}={1!r}".format(k, v) for k, v in asdict(model.hyperparams).items()
    )
    lines = [
        "%s %d" % (MAGIC, FORMAT_VERSION),
        "network %s" % net.name,
        "hyperparams %s" % hp,
        "tensors %d" % (2 * len(net.layers)),
    ]
    chunks = []
    for index, layer in enumerate(net.layers):
        w = np.asarray(model.weights[index], dtype="<f4")
        scale = _weight_scale(w)
        lines.append(
            "tensor {0} weight {1} bits {2} scale {3!r}".format(
                index, _dims(w.shape), layer.weight_bits, scale
            )
        )
        lines.append(
            "tensor {0} bias {1}".format(
                index, _dims(model.biases[index].shape)
            )
        )
        chunks.append(w.tobytes())
        chunks.append(np.asarray(model.biases[index], dtype="<f4").tobytes())
    blob = b"".join(chunks)
    lines.append(
        "blob {0} sha256 {1}".format(
            len(blob), hashlib.sha256(blob).hexdigest()
        )
    )
    return ("\n".join(lines) + "\n\n").encode("ascii") + blob


def remove_line(data):
    """Split the first manifest line off ``data``."""
    end = data.find(b"\n")
    if end < 0:
        raise ModelFileError("Manifest truncated, no end of line")
    try:
        line = data[:end].decode("ascii")
    except UnicodeDecodeError:
        raise ModelFileError("Manifest is not ASCII text")
    return line, data[end + 1 :]


def _expect(line, keyword):
    parts = line.split()
    if not parts or parts[0] != keyword:
        raise ModelFileError(
            "wanted manifest line {0!r}, got {1!r}".format(keyword, line)
        )
    return parts[1:]


def _parse_int(text, what):
    try:
        value = int(text)
    except ValueError:
        raise ModelFileError("{0} is not an integer: {1!r}".format(what, text))
    if value < 0:
        raise ModelFileError("{0} is negative".format(what))
    return value


def _parse_hyperparams(parts):
    types = dict((f.name, f.type) for f in fields(Hyperparams))
    values = {}
    for item in parts:
        key, sep, text = item.partition("=")
        if not sep or key not in types:
            raise ModelFileError("unknown hyperparameter %r" % item)
        cast = int if types[key] in (int, "int") else float
        try:
            values[key] = cast(text)
        except ValueError:
            raise ModelFileError("malformed hyperparameter %r" % item)
    return Hyperparams(**values)


def decode_model(data, net=None):
    """
    Parse a checkpoint.

    :param bytes data: checkpoint contents
    :param net: when given, the network the tensors must fit

    :raises UnsupportedVersionError: format version other than 1
    :raises ChecksumError: blob does not match its sha256
    :raises ModelFileError: any other malformation

    :return: tuple of the :class:`FloatModel` and the recorded network name
    """
    line, data = remove_line(data)
    header = _expect(line, MAGIC)
    if len(header) != 1:
        raise ModelFileError("malformed format line %r" % line)
    version = _parse_int(header[0], "format version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            "model file version {0} is not supported (only {1})".format(
                version, FORMAT_VERSION
            )
        )
    line, data = remove_line(data)
    name = " ".join(_expect(line, "network"))
    line, data = remove_line(data)
    hyperparams = _parse_hyperparams(_expect(line, "hyperparams"))
    line, data = remove_line(data)
    count = _parse_int(" ".join(_expect(line, "tensors")), "tensor count")
    tensors = []
    for _ in range(count):
        line, data = remove_line(data)
        parts = _expect(line, "tensor")
        if len(parts) < 3 or parts[1] not in ("weight", "bias"):
            raise ModelFileError("malformed tensor line %r" % line)
        shape = tuple(_parse_int(i, "dimension") for i in parts[2].split(","))
        quantization = None
        if parts[1] == "weight":
            quantization = _parse_quantization(parts[3:], line)
        elif len(parts) != 3:
            raise ModelFileError("malformed tensor line %r" % line)
        index = _parse_int(parts[0], "layer index")
        tensors.append((index, parts[1], shape, quantization))
    line, data = remove_line(data)
    parts = _expect(line, "blob")
    if len(parts) != 3 or parts[1] != "sha256":
        raise ModelFileError("malformed blob line %r" % line)
    length = _parse_int(parts[0], "blob length")
    checksum = parts[2]
    line, blob = remove_line(data)
    if line:
        raise ModelFileError("manifest must end with an empty line")

    declared = sum(4 * int(np.prod(t[2])) for t in tensors)
    if declared != length:
        raise ModelFileError(
            "tensors need {0} bytes but the manifest declares {1}".format(
                declared, length
            )
        )
    if len(blob) != length:
        raise ModelFileError(
            "blob is {0} bytes, manifest declares {1}".format(
                len(blob), length
            )
        )
    if hashlib.sha256(blob).hexdigest() != checksum:
        raise ChecksumError("model blob does not match its sha256 checksum")

    weights = []
    biases = []
    offset = 0
    for index, kind, shape, quantization in tensors:
        size = int(np.prod(shape))
        array = np.frombuffer(blob, dtype="<f4", count=size, offset=offset)
        offset += 4 * size
        array = array.reshape(shape).astype(np.float32)
        if quantization is not None:
            found = _weight_scale(array)
            if quantization[1] != found:
                raise ModelFileError(
                    "weight {0} records scale {1!r}, its values give {2!r}"
                    .format(index, quantization[1], found)
                )
        expected = 2 * index + (kind == "bias")
        if expected != len(weights) + len(biases):
            raise ModelFileError("tensors are out of order")
        (biases if kind == "bias" else weights).append(array)

    if len(weights) != len(biases):
        raise ModelFileError("every weight tensor needs a bias tensor")
    model = FloatModel(weights, biases, hyperparams)
    if net is not None:
        if name != net.name:
            raise ModelFileError(
                "checkpoint is for {0}, not {1}".format(name, net.name)
            )
        try:
            model.check_against(net)
        except ValueError as e:
            raise ModelFileError(str(e))
    return model, name


def save_model(path, model, net):
    with open(path, "wb") as f:
        f.write(encode_model(model, net))


def load_model(path, net=None):
    """Read a checkpoint file, see :func:`decode_model`."""
    with open(path, "rb") as f:
        return decode_model(f.read(), net)[0]
