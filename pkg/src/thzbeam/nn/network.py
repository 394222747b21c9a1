"""Sequential container, finite-difference gradient check and the THZNN1 weight file."""

import io
import json
import struct

import numpy as np

from ..errors import DimensionMismatchError, ThzBeamError
from .layers import Dropout, build_layer

WEIGHTS_MAGIC = b"THZNN1\0"
WEIGHTS_VERSION = 1

# Set to True to trip a FloatingPointError on any non-finite activation.
CHECK_FINITE = False


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training)
            if CHECK_FINITE and not np.all(np.isfinite(x)):
                raise FloatingPointError(f"non-finite output from {layer!r}")
        return x

    __call__ = forward

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        return [p for layer in self.layers for p in layer.params]

    def gradients(self):
        return [g for layer in self.layers for g in layer.grads]

    def reseed_dropout(self, rng):
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = rng

    def __repr__(self):
        return "Sequential(\n  " + ",\n  ".join(map(repr, self.layers)) + "\n)"


def gradient_check(network, x, loss_fn, step=1e-6, check_input=True, max_entries=None, seed=0):
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn(output) -> (loss, grad)``. The network is evaluated in eval mode
    (dropout off). For each tensor the error is the largest absolute
    deviation divided by the largest gradient magnitude in that tensor.
    With ``max_entries`` set, tensors larger than that are checked on a
    seeded random subset of their coordinates.
    """

    def loss_at():
        return loss_fn(network.forward(x, training=False))[0]

    out = network.forward(x, training=False)
    _, g = loss_fn(out)
    dx = network.backward(g)
    analytic = [gr.copy() for gr in network.gradients()]
    tensors = list(network.parameters())
    if check_input:
        tensors.append(x)
        analytic.append(dx)

    pick = np.random.default_rng(seed)
    numerics = []
    for p, a in zip(tensors, analytic):
        flat = p.reshape(-1)
        coords = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            coords = np.sort(pick.choice(flat.size, max_entries, replace=False))
        nflat = np.empty(len(coords))
        for j, i in enumerate(coords):
            orig = flat[i]
            h = step * max(1.0, abs(orig))
            flat[i] = orig + h
            fp = loss_at()
            flat[i] = orig - h
            fm = loss_at()
            flat[i] = orig
            nflat[j] = (fp - fm) / (2 * h)
        numerics.append((a.reshape(-1)[coords], nflat, np.abs(a).max()))
    # Tensors whose gradient is identically zero are compared against the
    # network-wide gradient scale instead of their own.
    floor = 1e-3 * max(max(amax, np.abs(n).max()) for _, n, amax in numerics)
    worst = 0.0
    for a, n, amax in numerics:
        scale = max(amax, np.abs(n).max(), floor, 1e-12)
        worst = max(worst, float(np.abs(a - n).max() / scale))
    return worst


# ---------------------------------------------------------------------------
# Weight file: magic, u32 version, u32 layer count, per layer
#   u16 kind, u16 n_hyper, f64[n_hyper], u16 n_params,
#   per param: u16 ndim, u32[ndim] dims, f64 payload
# then u32 metadata length + UTF-8 JSON metadata.


def save_weights(path, network, metadata=None):
    buf = io.BytesIO()
    buf.write(WEIGHTS_MAGIC)
    buf.write(struct.pack("<II", WEIGHTS_VERSION, len(network.layers)))
    for layer in network.layers:
        hyper = layer.hyper()
        buf.write(struct.pack("<HH", layer.kind, len(hyper)))
        buf.write(struct.pack(f"<{len(hyper)}d", *hyper))
        buf.write(struct.pack("<H", len(layer.params)))
        for p in layer.params:
            buf.write(struct.pack("<H", p.ndim))
            buf.write(struct.pack(f"<{p.ndim}I", *p.shape))
            buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    meta = json.dumps(metadata or {}, sort_keys=True).encode()
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_weights(path, rng=None):
    """Returns ``(network, metadata)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(WEIGHTS_MAGIC):
        raise ThzBeamError(f"{path}: not a THZNN1 weight file")
    off = len(WEIGHTS_MAGIC)

    def take(fmt):
        nonlocal off
        vals = struct.unpack_from(fmt, data, off)
        off += struct.calcsize(fmt)
        return vals

    version, n_layers = take("<II")
    if version != WEIGHTS_VERSION:
        raise DimensionMismatchError({"version": WEIGHTS_VERSION}, {"version": version}, "weight file")
    layers = []
    for _ in range(n_layers):
        kind, n_hyper = take("<HH")
        hyper = take(f"<{n_hyper}d")
        layer = build_layer(kind, hyper, rng)
        (n_params,) = take("<H")
        params = []
        for _ in range(n_params):
            (ndim,) = take("<H")
            shape = take(f"<{ndim}I")
            count = int(np.prod(shape))
            params.append(np.frombuffer(data, "<f8", count, off).reshape(shape).astype(np.float64))
            off += 8 * count
        if [p.shape for p in params] != [p.shape for p in layer.params]:
            raise DimensionMismatchError(
                {"params": [p.shape for p in layer.params]}, {"params": [p.shape for p in params]}, "layer"
            )
        layer.params = params
        layers.append(layer)
    (n_meta,) = take("<I")
    metadata = json.loads(data[off:off + n_meta].decode()) if n_meta else {}
    return Sequential(layers), metadata
