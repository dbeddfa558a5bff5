from __future__ import division

from dataclasses import dataclass, replace


__all__ = [
    "UnknownPresetError",
    "NetworkError",
    "CONV",
    "FC",
    "LayerSpec",
    "NetworkSpec",
    "LINEAR_SYNTH",
    "MLP_SYNTH",
    "CNN_SYNTH",
    "MLP_MNIST",
    "VGG8_DESK",
    "presets",
    "find_preset",
]


CONV = "conv"
FC = "fc"


class UnknownPresetError(Exception):
    pass


class NetworkError(ValueError):
    """Raised for layer stacks whose shapes do not chain."""

    pass


@dataclass(frozen=True)
class LayerSpec(object):
    """
    One layer of a network.

    Convolutions use "same" padding and stride 1, so a conv layer's output
    has the spatial size of its input; ``pool`` adds a 2x2 max-pool after
    the activation. For fully connected layers ``c_in`` is the flattened
    input length and k1 = k2 = h_in = w_in = 1.
    """

    kind: str
    c_in: int
    c_out: int
    k1: int = 1
    k2: int = 1
    h_in: int = 1
    w_in: int = 1
    weight_bits: int = 8
    relu: bool = True
    pool: bool = False

    def __post_init__(self):
        if self.kind not in (CONV, FC):
            raise NetworkError("unknown layer kind %r" % (self.kind,))
        if min(self.c_in, self.c_out, self.k1, self.k2) < 1:
            raise NetworkError("layer dimensions must be positive")
        if self.kind == FC and (self.k1, self.k2, self.h_in, self.w_in) != (
            1,
            1,
            1,
            1,
        ):
            raise NetworkError("fully connected layers have unit kernels")
        if self.pool and (self.h_in % 2 or self.w_in % 2):
            raise NetworkError("2x2 pooling needs even spatial dimensions")

    @property
    def positions(self):
        """Kernel positions, k1 * k2."""
        return self.k1 * self.k2

    @property
    def rows(self):
        """Logical crossbar rows of the unrolled weight matrix."""
        return self.c_in * self.k1 * self.k2

    @property
    def out_positions(self):
        """Output pixels computed per sample (one crossbar read each)."""
        return self.h_in * self.w_in

    @property
    def output_shape(self):
        """Per-sample shape after activation and pooling."""
        if self.kind == FC:
            return (self.c_out,)
        if self.pool:
            return (self.c_out, self.h_in // 2, self.w_in // 2)
        return (self.c_out, self.h_in, self.w_in)

    @property
    def output_size(self):
        size = 1
        for i in self.output_shape:
            size *= i
        return size

    @property
    def weight_shape(self):
        return (self.c_out, self.c_in, self.k1, self.k2)


class NetworkSpec(object):
    """
    Ordered layer stack plus the dataset it is meant for.

    :ivar str name: preset name
    :ivar tuple layers: :class:`LayerSpec` instances, input first
    :ivar str dataset: dataset id the network expects
    :ivar tuple input_shape: per-sample input shape, channel first
    """

    def __init__(self, name, layers, dataset, input_shape):
        self.name = name
        self.layers = tuple(layers)
        self.dataset = dataset
        self.input_shape = tuple(input_shape)
        self.validate()

    def __repr__(self):
        return self.name

    def __eq__(self, other):
        if isinstance(other, NetworkSpec):
            return (
                self.name == other.name
                and self.layers == other.layers
                and self.dataset == other.dataset
                and self.input_shape == other.input_shape
            )
        return NotImplemented

    def __ne__(self, other):
        ret = self.__eq__(other)
        if ret is NotImplemented:
            return ret
        return not ret

    def __hash__(self):
        return hash((self.name, self.layers))

    def validate(self):
        if not self.layers:
            raise NetworkError("network has no layers")
        shape = self.input_shape
        for index, layer in enumerate(self.layers):
            if layer.kind == CONV:
                expected = (layer.c_in, layer.h_in, layer.w_in)
                if shape != expected:
                    raise NetworkError(
                        "layer {0} expects input {1}, got {2}".format(
                            index, expected, shape
                        )
                    )
            else:
                size = 1
                for i in shape:
                    size *= i
                if size != layer.c_in:
                    raise NetworkError(
                        "layer {0} expects {1} inputs, got {2}".format(
                            index, layer.c_in, size
                        )
                    )
            shape = layer.output_shape
        if self.layers[-1].relu:
            raise NetworkError("the last layer produces logits, no ReLU")

    @property
    def classes(self):
        return self.layers[-1].c_out

    def with_weight_bits(self, bits):
        """Return a copy with every layer quantized to ``bits``."""
        return NetworkSpec(
            self.name,
            (replace(layer, weight_bits=bits) for layer in self.layers),
            self.dataset,
            self.input_shape,
        )

    def conv_layers(self):
        return [i for i, layer in enumerate(self.layers) if layer.kind == CONV]

    def shuffle_candidates(self):
        """
        Layers eligible for shuffling by default: every convolution but
        the first. The first layer's three input channels and the fully
        connected layers are left in the clear.
        """
        return self.conv_layers()[1:]


def _conv(c_in, c_out, size, bits, pool=False):
    return LayerSpec(CONV, c_in, c_out, 3, 3, size, size, bits, True, pool)


def _fc(c_in, c_out, bits, relu=True):
    return LayerSpec(FC, c_in, c_out, weight_bits=bits, relu=relu)


LINEAR_SYNTH = NetworkSpec(
    "linear-synth", [_fc(64, 10, 8, relu=False)], "synthetic", (64,)
)


MLP_SYNTH = NetworkSpec(
    "mlp-synth",
    [_fc(64, 32, 8), _fc(32, 10, 8, relu=False)],
    "synthetic",
    (64,),
)


CNN_SYNTH = NetworkSpec(
    "cnn-synth",
    [
        _conv(1, 8, 8, 8),
        _conv(8, 8, 8, 8, pool=True),
        _fc(128, 10, 8, relu=False),
    ],
    "synthetic",
    (1, 8, 8),
)


MLP_MNIST = NetworkSpec(
    "mlp-mnist",
    [_fc(784, 128, 8), _fc(128, 10, 8, relu=False)],
    "mnist",
    (1, 28, 28),
)


# six 3x3 convolutions and two fully connected layers, the
# laptop-scale stand-in for a CIFAR-10 VGG
VGG8_DESK = NetworkSpec(
    "vgg8-desk",
    [
        _conv(3, 32, 32, 8),
        _conv(32, 32, 32, 8, pool=True),
        _conv(32, 64, 16, 8),
        _conv(64, 64, 16, 8, pool=True),
        _conv(64, 128, 8, 8),
        _conv(128, 128, 8, 8, pool=True),
        _fc(2048, 256, 8),
        _fc(256, 10, 8, relu=False),
    ],
    "cifar10",
    (3, 32, 32),
)


presets = [LINEAR_SYNTH, MLP_SYNTH, CNN_SYNTH, MLP_MNIST, VGG8_DESK]


def find_preset(name):
    for net in presets:
        if net.name == name:
            return net
    raise UnknownPresetError(
        "I don't know about the network preset %s. "
        "I only know about these: %s" % (name, [n.name for n in presets])
    )
