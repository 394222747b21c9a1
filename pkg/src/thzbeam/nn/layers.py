"""Layers operating on float64 numpy arrays with a leading batch axis.

Image tensors are channel-last: ``(batch, height, width, channels)``.
Every layer caches what its backward pass needs during ``forward`` and, in
``backward``, returns the input gradient and fills ``self.grads`` in the same
order as ``self.params``.
"""

import math

import numpy as np

from .. import kernels
from ..errors import ShapeError


class Layer:
    kind = 0
    params: list
    grads: list

    def __init__(self):
        self.params = []
        self.grads = []

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def hyper(self):
        """Numeric hyperparameters needed to rebuild the layer from a weight file."""
        return []

    def __repr__(self):
        h = ", ".join(f"{v:g}" for v in self.hyper())
        return f"{type(self).__name__}({h})"


def he_uniform(rng, shape, fan_in):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Conv2D(Layer):
    kind = 1

    def __init__(self, in_channels, out_channels, kernel=(2, 2), rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        kh, kw = kernel
        self.kernel = (int(kh), int(kw))
        self.in_channels, self.out_channels = int(in_channels), int(out_channels)
        w = he_uniform(rng, (kh, kw, in_channels, out_channels), kh * kw * in_channels)
        self.params = [w, np.zeros(out_channels)]

    def hyper(self):
        return [*self.kernel, self.in_channels, self.out_channels]

    def forward(self, x, training=False):
        kh, kw = self.kernel
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ShapeError(f"conv2d expects (B,H,W,{self.in_channels}), got {x.shape}")
        if x.shape[1] < kh or x.shape[2] < kw:
            raise ShapeError(f"kernel {self.kernel} larger than input {x.shape[1:3]}")
        self._x = x
        return kernels.conv2d_forward(x, *self.params)

    def backward(self, grad):
        dx, dw, db = kernels.conv2d_backward(self._x, self.params[0], grad)
        self.grads = [dw, db]
        return dx


class ZeroPad2D(Layer):
    """Append zero rows/columns at the bottom/right edge."""

    kind = 8

    def __init__(self, rows, cols):
        super().__init__()
        self.rows, self.cols = int(rows), int(cols)

    def hyper(self):
        return [self.rows, self.cols]

    def forward(self, x, training=False):
        return np.pad(x, ((0, 0), (0, self.rows), (0, self.cols), (0, 0)))

    def backward(self, grad):
        return grad[:, : grad.shape[1] - self.rows, : grad.shape[2] - self.cols, :]


class MaxPool2D(Layer):
    """Non-overlapping max pooling (stride equals the kernel)."""

    kind = 2

    def __init__(self, kernel=(2, 2)):
        super().__init__()
        self.kernel = (int(kernel[0]), int(kernel[1]))

    def hyper(self):
        return list(self.kernel)

    def forward(self, x, training=False):
        kh, kw = self.kernel
        if x.shape[1] % kh or x.shape[2] % kw:
            raise ShapeError(f"input {x.shape[1:3]} not divisible by pool kernel {self.kernel}")
        out, self._idx = kernels.maxpool2d_forward(x, kh, kw)
        return out

    def backward(self, grad):
        return kernels.maxpool2d_backward(grad, self._idx, *self.kernel)


class InstanceNorm(Layer):
    """Per-sample, per-channel normalization over the spatial axes."""

    kind = 3

    def __init__(self, channels, eps=1e-5):
        super().__init__()
        self.channels, self.eps = int(channels), float(eps)
        self.params = [np.ones(channels), np.zeros(channels)]

    def hyper(self):
        return [self.channels, self.eps]

    def forward(self, x, training=False):
        mu = x.mean(axis=(1, 2), keepdims=True)
        var = x.var(axis=(1, 2), keepdims=True)
        self._inv = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - mu) * self._inv
        gamma, beta = self.params
        return self._xhat * gamma + beta

    def backward(self, grad):
        gamma = self.params[0]
        xhat, inv = self._xhat, self._inv
        self.grads = [(grad * xhat).sum(axis=(0, 1, 2)), grad.sum(axis=(0, 1, 2))]
        dxhat = grad * gamma
        m = xhat.shape[1] * xhat.shape[2]
        return (inv / m) * (
            m * dxhat
            - dxhat.sum(axis=(1, 2), keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=(1, 2), keepdims=True)
        )


class ReLU(Layer):
    kind = 4

    def forward(self, x, training=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return grad * self._mask


class Dropout(Layer):
    """Inverted dropout: scale kept units by 1/(1-rate) in training, identity in eval."""

    kind = 5

    def __init__(self, rate=0.2, rng=None):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = float(rate)
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def hyper(self):
        return [self.rate]

    def forward(self, x, training=False):
        if not training or self.rate == 0:
            self._scale = None
            return x
        keep = self.rng.random(x.shape) >= self.rate
        self._scale = keep / (1.0 - self.rate)
        return x * self._scale

    def backward(self, grad):
        return grad if self._scale is None else grad * self._scale


class GlobalAvgPool(Layer):
    """Average over every axis except batch and channel."""

    kind = 6

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.mean(axis=tuple(range(1, x.ndim - 1)))

    def backward(self, grad):
        spatial = int(np.prod(self._shape[1:-1]))
        expand = grad.reshape(grad.shape[0], *([1] * (len(self._shape) - 2)), grad.shape[-1])
        return np.broadcast_to(expand / spatial, self._shape).copy()


class Dense(Layer):
    kind = 7

    def __init__(self, in_features, out_features, rng=None, init="he"):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features, self.out_features = int(in_features), int(out_features)
        if init == "he":
            w = he_uniform(rng, (in_features, out_features), in_features)
        else:
            w = glorot_uniform(rng, (in_features, out_features), in_features, out_features)
        self.params = [w, np.zeros(out_features)]

    def hyper(self):
        return [self.in_features, self.out_features]

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"dense expects (B,{self.in_features}), got {x.shape}")
        self._x = x
        return x @ self.params[0] + self.params[1]

    def backward(self, grad):
        self.grads = [self._x.T @ grad, grad.sum(axis=0)]
        return grad @ self.params[0].T


LAYER_KINDS = {cls.kind: cls for cls in (Conv2D, MaxPool2D, InstanceNorm, ReLU, Dropout,
                                         GlobalAvgPool, Dense, ZeroPad2D)}


def build_layer(kind, hyper, rng=None):
    """Inverse of ``(layer.kind, layer.hyper())``; parameters are left at their init values."""
    cls = LAYER_KINDS[kind]
    h = list(hyper)
    if cls is Conv2D:
        return Conv2D(int(h[2]), int(h[3]), (int(h[0]), int(h[1])), rng)
    if cls is MaxPool2D:
        return MaxPool2D((int(h[0]), int(h[1])))
    if cls is InstanceNorm:
        return InstanceNorm(int(h[0]), h[1])
    if cls is Dropout:
        return Dropout(h[0], rng)
    if cls is Dense:
        return Dense(int(h[0]), int(h[1]), rng)
    if cls is ZeroPad2D:
        return ZeroPad2D(int(h[0]), int(h[1]))
    return cls()
