from .layers import (
    LINEAR_SYNTH,
    MLP_SYNTH,
    CNN_SYNTH,
    MLP_MNIST,
    VGG8_DESK,
    LayerSpec,
    NetworkSpec,
    UnknownPresetError,
    find_preset,
)
from .adc import (
    FLASH,
    SAR,
    AdcConfig,
    ChipFingerprint,
    FingerprintMismatchError,
    gen_fingerprint,
    quantize_adc,
)
from .crossbar import CONVENTIONAL, SUBKERNEL, MappingError
from .engine import Accelerator, forward_hw, forward_quantized
from .shuffle import (
    ZERO,
    ShuffleKey,
    KeyMismatchError,
    gen_key,
    gen_layer_key,
)
from .training import FloatModel, Hyperparams, train_float

__version__ = "0.1.0"

__all__ = [
    "adc",
    "attacks",
    "bounds",
    "cli",
    "config",
    "crossbar",
    "datasets",
    "engine",
    "experiments",
    "hwcost",
    "layers",
    "modelfile",
    "quant",
    "results",
    "shuffle",
    "training",
    "util",
]

_hush_pyflakes = [
    LINEAR_SYNTH,
    MLP_SYNTH,
    CNN_SYNTH,
    MLP_MNIST,
    VGG8_DESK,
    LayerSpec,
    NetworkSpec,
    UnknownPresetError,
    find_preset,
    FLASH,
    SAR,
    AdcConfig,
    ChipFingerprint,
    FingerprintMismatchError,
    gen_fingerprint,
    quantize_adc,
    CONVENTIONAL,
    SUBKERNEL,
    MappingError,
    Accelerator,
    forward_hw,
    forward_quantized,
    ZERO,
    ShuffleKey,
    KeyMismatchError,
    gen_key,
    gen_layer_key,
    FloatModel,
    Hyperparams,
    train_float,
]
del _hush_pyflakes
