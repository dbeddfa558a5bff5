"""
Float training and inference for the small networks in :mod:`layers`.

The forward pass is written once and takes the layer's linear operation
as a callback, so the same code runs the float network, the quantized
software reference and the simulated accelerator. When asked to keep its
activations the forward pass records the *observed* layer inputs; the
backward pass then differentiates the float network at those points
(straight-through estimation), which is how weights are retrained against
a particular chip.
"""

from __future__ import division

import logging
from dataclasses import dataclass

import numpy as np

from .layers import CONV, FC
from .util import keyed_rng


__all__ = [
    "TrainingDivergedError",
    "Hyperparams",
    "FloatModel",
    "LayerCache",
    "init_model",
    "im2col",
    "col2im",
    "weight_matrix",
    "unroll",
    "maxpool2",
    "unpool2",
    "forward",
    "backward",
    "softmax_cross_entropy",
    "SGD",
    "evaluate",
    "iterate_minibatches",
    "train_float",
]


logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Raised when the loss stops being a finite number."""

    pass


@dataclass(frozen=True)
class Hyperparams(object):
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 5
    weight_decay: float = 0.0
    seed: int = 0


class FloatModel(object):
    """
    Trained float weights and biases for one network.

    Weights are kept as (C_out, C_in, k1, k2) arrays, fully connected
    layers included (k1 = k2 = 1).
    """

    def __init__(self, weights, biases, hyperparams=None):
        if len(weights) != len(biases):
            raise ValueError("every layer needs a weight and a bias tensor")
        self.weights = [np.asarray(w) for w in weights]
        self.biases = [np.asarray(b) for b in biases]
        self.hyperparams = hyperparams or Hyperparams()

    def __eq__(self, other):
        if isinstance(other, FloatModel):
            return (
                len(self.weights) == len(other.weights)
                and all(
                    np.array_equal(a, b)
                    for a, b in zip(self.weights, other.weights)
                )
                and all(
                    np.array_equal(a, b)
                    for a, b in zip(self.biases, other.biases)
                )
                and self.hyperparams == other.hyperparams
            )
        return NotImplemented

    def __ne__(self, other):
        ret = self.__eq__(other)
        if ret is NotImplemented:
            return ret
        return not ret

    @property
    def dtype(self):
        return self.weights[0].dtype

    def copy(self):
        return FloatModel(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hyperparams,
        )

    def check_against(self, net):
        """Raise ValueError unless the tensors fit the network."""
        if len(self.weights) != len(net.layers):
            raise ValueError(
                "model has {0} layers, network {1} has {2}".format(
                    len(self.weights), net.name, len(net.layers)
                )
            )
        for index, layer in enumerate(net.layers):
            if self.weights[index].shape != layer.weight_shape:
                raise ValueError(
                    "layer {0} weights are {1}, expected {2}".format(
                        index, self.weights[index].shape, layer.weight_shape
                    )
                )
            if self.biases[index].shape != (layer.c_out,):
                raise ValueError("layer %d bias has the wrong shape" % index)


def init_model(net, seed=0, dtype=np.float32, hyperparams=None):
    """He-initialised weights and zero biases for a network."""
    weights = []
    biases = []
    for index, layer in enumerate(net.layers):
        rng = keyed_rng("init", seed, index)
        std = np.sqrt(2.0 / layer.rows)
        weights.append(
            (rng.standard_normal(layer.weight_shape) * std).astype(dtype)
        )
        biases.append(np.zeros(layer.c_out, dtype=dtype))
    return FloatModel(weights, biases, hyperparams)


def im2col(x, k1, k2):
    """
    Unroll "same" convolution windows into rows.

    :param x: array (B, C, H, W)

    :return: array (B*H*W, k1*k2*C), columns ordered (ky, kx, c) with the
        channel varying fastest
    """
    if not (k1 % 2 and k2 % 2):
        raise ValueError("only odd kernel sizes are supported")
    b, c, h, w = x.shape
    p1, p2 = k1 // 2, k2 // 2
    padded = np.pad(x, ((0, 0), (0, 0), (p1, p1), (p2, p2)))
    cols = np.empty((b, h, w, k1, k2, c), dtype=x.dtype)
    for ky in range(k1):
        for kx in range(k2):
            cols[:, :, :, ky, kx, :] = padded[
                :, :, ky : ky + h, kx : kx + w
            ].transpose(0, 2, 3, 1)
    return cols.reshape(b * h * w, k1 * k2 * c)


def col2im(cols, shape, k1, k2):
    """Adjoint of :func:`im2col`: scatter-add rows back into (B, C, H, W)."""
    b, c, h, w = shape
    p1, p2 = k1 // 2, k2 // 2
    windows = cols.reshape(b, h, w, k1, k2, c)
    padded = np.zeros((b, c, h + 2 * p1, w + 2 * p2), dtype=cols.dtype)
    for ky in range(k1):
        for kx in range(k2):
            padded[:, :, ky : ky + h, kx : kx + w] += windows[
                :, :, :, ky, kx, :
            ].transpose(0, 3, 1, 2)
    return padded[:, :, p1 : p1 + h, p2 : p2 + w]


def weight_matrix(weights):
    """(C_out, C_in, k1, k2) to the (k1*k2*C_in, C_out) crossbar layout."""
    c_out = weights.shape[0]
    return weights.transpose(2, 3, 1, 0).reshape(-1, c_out)


def unroll(layer, a):
    """Layer input to the row-per-output-pixel matrix fed to the weights."""
    if layer.kind == CONV:
        return im2col(a, layer.k1, layer.k2)
    return a.reshape(a.shape[0], -1)


def _fold(layer, y, batch):
    if layer.kind == CONV:
        return y.reshape(batch, layer.h_in, layer.w_in, layer.c_out).transpose(
            0, 3, 1, 2
        )
    return y


def _flatten_grad(layer, g):
    if layer.kind == CONV:
        return g.transpose(0, 2, 3, 1).reshape(-1, layer.c_out)
    return g


def maxpool2(x):
    """2x2 max pooling; returns the pooled array and the winner indices."""
    b, c, h, w = x.shape
    windows = (
        x.reshape(b, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h // 2, w // 2, 4)
    )
    arg = windows.argmax(axis=-1)
    pooled = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    return pooled, arg


def unpool2(g, arg, shape):
    """Route pooled gradients back to the window winners."""
    b, c, h, w = shape
    windows = np.zeros((b, c, h // 2, w // 2, 4), dtype=g.dtype)
    np.put_along_axis(windows, arg[..., None], g[..., None], axis=-1)
    return (
        windows.reshape(b, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h, w)
    )


@dataclass
class LayerCache(object):
    input_shape: tuple
    cols: object
    pre: object
    arg: object


def forward(net, model, x, linear=None, keep=False):
    """
    Run the network on a batch.

    :param x: batch of shape (B,) + net.input_shape
    :param linear: ``linear(index, layer, a)`` returning the layer's
        pre-activation as a (B*positions, C_out) matrix, bias included.
        ``None`` computes it in float with the model's weights.
    :param bool keep: record what :func:`backward` needs

    :return: tuple of logits (B, classes) and the list of layer caches
        (empty unless ``keep``)
    """
    a = np.asarray(x)
    if linear is None:
        a = a.astype(model.dtype, copy=False)
    batch = a.shape[0]
    caches = []
    for index, layer in enumerate(net.layers):
        if layer.kind == FC:
            a = a.reshape(batch, -1)
        cols = None
        if linear is None:
            cols = unroll(layer, a)
            w2d = weight_matrix(model.weights[index])
            y = cols @ w2d + model.biases[index]
        else:
            y = np.asarray(linear(index, layer, a), dtype=model.dtype)
            if keep:
                cols = unroll(layer, a.astype(model.dtype, copy=False))
        pre = _fold(layer, y, batch)
        z = np.maximum(pre, 0) if layer.relu else pre
        arg = None
        if layer.pool:
            z, arg = maxpool2(z)
        if keep:
            caches.append(LayerCache(a.shape, cols, pre, arg))
        a = z
    return a, caches


def backward(net, model, caches, dlogits):
    """
    Gradients of the loss with respect to every weight and bias.

    :return: tuple of weight gradient list and bias gradient list
    """
    grads_w = [None] * len(net.layers)
    grads_b = [None] * len(net.layers)
    g = dlogits
    batch = dlogits.shape[0]
    for index in reversed(range(len(net.layers))):
        layer = net.layers[index]
        cache = caches[index]
        if layer.pool:
            g = unpool2(g, cache.arg, cache.pre.shape)
        if layer.relu:
            g = g * (cache.pre > 0)
        dy = _flatten_grad(layer, g)
        dw = cache.cols.T @ dy
        grads_w[index] = dw.reshape(
            layer.k1, layer.k2, layer.c_in, layer.c_out
        ).transpose(3, 2, 0, 1)
        grads_b[index] = dy.sum(axis=0)
        if index:
            dcols = dy @ weight_matrix(model.weights[index]).T
            if layer.kind == CONV:
                g = col2im(dcols, cache.input_shape, layer.k1, layer.k2)
            else:
                g = dcols
            g = g.reshape((batch,) + net.layers[index - 1].output_shape)
    return grads_w, grads_b


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy loss and its gradient with respect to logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    batch = logits.shape[0]
    picked = probs[np.arange(batch), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-30))))
    grad = probs
    grad[np.arange(batch), labels] -= 1
    return loss, grad / batch


class SGD(object):
    """Momentum SGD over a :class:`FloatModel`, updating it in place."""

    def __init__(self, model, learning_rate, momentum=0.9, weight_decay=0.0):
        self.model = model
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity_w = [np.zeros_like(w) for w in model.weights]
        self.velocity_b = [np.zeros_like(b) for b in model.biases]

    def step(self, grads_w, grads_b):
        model = self.model
        for i in range(len(model.weights)):
            g = grads_w[i] + self.weight_decay * model.weights[i]
            self.velocity_w[i] = (
                self.momentum * self.velocity_w[i] - self.learning_rate * g
            ).astype(model.weights[i].dtype)
            model.weights[i] += self.velocity_w[i]
            self.velocity_b[i] = (
                self.momentum * self.velocity_b[i]
                - self.learning_rate * grads_b[i]
            ).astype(model.biases[i].dtype)
            model.biases[i] += self.velocity_b[i]


def evaluate(net, model, images, labels, forward_fn=None, batch_size=256):
    """
    Top-1 accuracy on a labelled set.

    :param forward_fn: callable mapping a batch to logits; defaults to the
        float network
    """
    if forward_fn is None:

        def forward_fn(batch):
            return forward(net, model, batch)[0]

    correct = 0
    for start in range(0, len(labels), batch_size):
        logits = forward_fn(images[start : start + batch_size])
        predicted = np.argmax(logits, axis=1)
        correct += int(np.sum(predicted == labels[start : start + batch_size]))
    return correct / len(labels)


def iterate_minibatches(count, batch_size, seed, epoch):
    order = keyed_rng("order", seed, epoch).permutation(count)
    for start in range(0, count, batch_size):
        yield order[start : start + batch_size]


def train_float(net, dataset, hyperparams=None, model=None):
    """
    Train a network with cross-entropy and momentum SGD.

    :param net: the :class:`~cimguard.layers.NetworkSpec`
    :param dataset: a :class:`~cimguard.datasets.Dataset` matching the
        network's input shape
    :param Hyperparams hyperparams: training settings, seed included
    :param FloatModel model: starting point, fresh initialisation if None

    :raises TrainingDivergedError: the loss became NaN or infinite

    :return: tuple of the trained model and its final test accuracy
    """
    hp = hyperparams or Hyperparams()
    if model is None:
        model = init_model(net, hp.seed, hyperparams=hp)
    else:
        model = model.copy()
        model.hyperparams = hp
    model.check_against(net)
    optimizer = SGD(model, hp.learning_rate, hp.momentum, hp.weight_decay)
    images = dataset.train_x.astype(model.dtype, copy=False)
    labels = dataset.train_y
    for epoch in range(hp.epochs):
        losses = []
        batches = iterate_minibatches(
            len(labels), hp.batch_size, hp.seed, epoch
        )
        for idx in batches:
            logits, caches = forward(net, model, images[idx], keep=True)
            loss, dlogits = softmax_cross_entropy(logits, labels[idx])
            if not np.isfinite(loss):
                logger.error("%s: loss %r in epoch %d", net.name, loss, epoch)
                raise TrainingDivergedError(
                    "loss diverged in epoch {0} of {1}".format(epoch, net.name)
                )
            losses.append(loss)
            optimizer.step(*backward(net, model, caches, dlogits))
        logger.info(
            "%s epoch %d/%d loss %.4f",
            net.name,
            epoch + 1,
            hp.epochs,
            float(np.mean(losses)) if losses else float("nan"),
        )
    accuracy = evaluate(net, model, dataset.test_x, dataset.test_y)
    logger.info("%s float test accuracy %.4f", net.name, accuracy)
    return model, accuracy
