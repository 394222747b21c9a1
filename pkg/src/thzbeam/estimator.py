"""CNN estimator: formatted sub-6GHz channel image -> THz per-path factors."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import (AOA_AZ, AOA_EL, AOD_AZ, AOD_EL, NUM_FACTORS, PATHLOSS, PHASE, TOA,
                      FrequencyChannel, wrap_angle)
from .dataset import Dataset
from .errors import DomainError, ShapeError, ThzBeamError
from .nn import (Conv2D, Dense, Dropout, GlobalAvgPool, InstanceNorm, MaxPool2D, OptimizerConfig, ReLU,
                 Sequential, ZeroPad2D, load_weights, mse_loss, save_weights)
from .training import batched_forward, fit, stream


def format_input(h) -> np.ndarray:
    """Magnitude and phase planes: ``(K, N)`` complex -> ``(K, N, 2)``; stacks map to ``(S, K, N, 2)``."""
    e = h.entries if isinstance(h, FrequencyChannel) else np.asarray(h, dtype=complex)
    return np.stack([np.abs(e), wrap_angle(np.angle(e))], axis=-1)


@dataclass
class FactorNormalizer:
    """Per-column map to zero mean, unit variance.

    Columns flagged in ``periodic`` are centred on their circular mean and
    wrapped to [-pi, pi) before scaling, so targets never straddle the
    +-pi seam.
    """

    mean: np.ndarray
    scale: np.ndarray
    periodic: np.ndarray = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        if self.periodic is None:
            self.periodic = np.zeros(self.mean.shape, dtype=bool)
        self.periodic = np.asarray(self.periodic, dtype=bool)

    @classmethod
    def fit(cls, x, periodic=None) -> "FactorNormalizer":
        x = np.asarray(x, dtype=float)
        x = x.reshape(len(x), -1)
        if len(x) == 0:
            raise DomainError("cannot fit a normalizer on an empty set")
        periodic = np.zeros(x.shape[1], bool) if periodic is None else np.asarray(periodic, bool)
        mean = x.mean(axis=0)
        if periodic.any():
            p = x[:, periodic]
            mean[periodic] = np.arctan2(np.sin(p).mean(axis=0), np.cos(p).mean(axis=0))
        dev = x - mean
        dev[:, periodic] = wrap_angle(dev[:, periodic])
        scale = np.sqrt(np.mean(dev**2, axis=0))
        flat = scale <= 1e-12 * np.maximum(1.0, np.abs(mean))
        if np.any(flat):
            warnings.warn(f"{int(flat.sum())} zero-variance column(s); scale clamped to 1", stacklevel=2)
            scale = np.where(flat, 1.0, scale)
        return cls(mean, scale, periodic)

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        dev = x.reshape(len(x), -1) - self.mean
        dev[:, self.periodic] = wrap_angle(dev[:, self.periodic])
        return (dev / self.scale).reshape(x.shape)

    def invert(self, z):
        z = np.asarray(z, dtype=float)
        x = z.reshape(len(z), -1) * self.scale + self.mean
        x[:, self.periodic] = wrap_angle(x[:, self.periodic])
        return x.reshape(z.shape)


def periodic_mask(num_paths):
    """Flattened ``(L*7,)`` mask of the azimuth and phase columns."""
    mask = np.zeros((num_paths, NUM_FACTORS), dtype=bool)
    mask[:, [PHASE, AOA_AZ, AOD_AZ]] = True
    return mask.ravel()


@dataclass(frozen=True)
class EstimatorArchitecture:
    widths: tuple = (16, 32)
    kernel: tuple = (2, 2)
    pool: tuple = (2, 2)
    dropout: float = 0.2
    num_paths: int = 4


def build_estimator_network(input_shape, arch: EstimatorArchitecture, rng) -> Sequential:
    """Conv blocks (pad, conv, maxpool, IN, ReLU, dropout) -> GAP -> dense(L*7).

    Each conv sees its input zero-padded at the bottom/right so the spatial
    size is preserved; pooling along an axis shrinks to kernel 1 once that
    axis has length 1, and odd lengths are padded to the pool kernel.
    """
    h, w, c = input_shape
    kh, kw = arch.kernel
    layers = []
    for width in arch.widths:
        pad_h, pad_w = (kh - 1, kw - 1)
        if pad_h or pad_w:
            layers.append(ZeroPad2D(pad_h, pad_w))
        layers.append(Conv2D(c, width, arch.kernel, rng))
        ph = arch.pool[0] if h > 1 else 1
        pw = arch.pool[1] if w > 1 else 1
        if h % ph or w % pw:
            layers.append(ZeroPad2D((-h) % ph, (-w) % pw))
            h, w = h + (-h) % ph, w + (-w) % pw
        layers.append(MaxPool2D((ph, pw)))
        h, w, c = h // ph, w // pw, width
        layers += [InstanceNorm(width), ReLU(), Dropout(arch.dropout, rng)]
    layers += [GlobalAvgPool(), Dense(c, arch.num_paths * NUM_FACTORS, rng, init="glorot")]
    return Sequential(layers)


@dataclass
class EstimatorModel:
    network: Sequential
    normalizer: FactorNormalizer
    magnitude_scale: float
    num_paths: int
    input_shape: tuple
    arch: EstimatorArchitecture = field(default_factory=EstimatorArchitecture)

    def prepare(self, h):
        x = format_input(h)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != tuple(self.input_shape):
            raise ShapeError(f"estimator expects input {tuple(self.input_shape)}, got {x.shape[1:]}")
        x[..., 0] /= self.magnitude_scale
        return x

    def predict_normalized(self, h):
        return batched_forward(self.network, self.prepare(h))

    def predict(self, h) -> np.ndarray:
        """Physical factors ``(S, L, 7)`` projected onto their valid ranges."""
        z = self.predict_normalized(h)
        f = self.normalizer.invert(z).reshape(len(z), self.num_paths, NUM_FACTORS)
        f[..., PATHLOSS] = np.maximum(f[..., PATHLOSS], 0.0)
        f[..., TOA] = np.maximum(f[..., TOA], 0.0)
        for col in (PHASE, AOA_AZ, AOD_AZ):
            f[..., col] = wrap_angle(f[..., col])
        for col in (AOA_EL, AOD_EL):
            f[..., col] = np.clip(f[..., col], -math.pi / 2, math.pi / 2)
        return f

    def save(self, path):
        save_weights(path, self.network, {
            "model": "estimator",
            "normalizer_mean": self.normalizer.mean.tolist(),
            "normalizer_scale": self.normalizer.scale.tolist(),
            "normalizer_periodic": self.normalizer.periodic.tolist(),
            "magnitude_scale": self.magnitude_scale,
            "num_paths": self.num_paths,
            "input_shape": list(self.input_shape),
            "arch": {"widths": list(self.arch.widths), "kernel": list(self.arch.kernel),
                     "pool": list(self.arch.pool), "dropout": self.arch.dropout},
        })

    @classmethod
    def load(cls, path) -> "EstimatorModel":
        net, meta = load_weights(path)
        if meta.get("model") != "estimator":
            raise ThzBeamError(f"{path} does not hold an estimator model")
        a = meta["arch"]
        arch = EstimatorArchitecture(tuple(a["widths"]), tuple(a["kernel"]), tuple(a["pool"]), a["dropout"],
                                     meta["num_paths"])
        norm = FactorNormalizer(np.array(meta["normalizer_mean"]), np.array(meta["normalizer_scale"]),
                                np.array(meta["normalizer_periodic"]))
        return cls(net, norm, meta["magnitude_scale"], meta["num_paths"], tuple(meta["input_shape"]), arch)


def magnitude_scale(h):
    """RMS channel magnitude; brings magnitude planes to order one."""
    rms = float(np.sqrt(np.mean(np.abs(h) ** 2)))
    return rms if rms > 0 else 1.0


ESTIMATOR_OPTIMIZER = OptimizerConfig("sgd_momentum", 1e-3, 0.8, 0.1, 80)


def train_estimator(train: Dataset, test: Dataset | None = None, arch=EstimatorArchitecture(),
                    optimizer=ESTIMATOR_OPTIMIZER, epochs=100, batch_size=128, seed=0,
                    target_loss=None, eval_train=False):
    """Fit the CNN on ``train`` (MSE on normalized targets). Returns ``(model, trace)``."""
    if len(train) == 0:
        raise DomainError("empty training set")
    if train.dims["L"] != arch.num_paths:
        raise ShapeError(f"dataset carries {train.dims['L']} paths, architecture expects {arch.num_paths}")
    normalizer = FactorNormalizer.fit(train.thz_factors.reshape(len(train), -1), periodic_mask(arch.num_paths))
    scale = magnitude_scale(train.h_sub6)
    input_shape = train.h_sub6.shape[1:] + (2,)
    net = build_estimator_network(input_shape, arch, stream(seed, 1))
    model = EstimatorModel(net, normalizer, scale, arch.num_paths, input_shape, arch)

    x = model.prepare(train.h_sub6)
    y = normalizer.apply(train.thz_factors.reshape(len(train), -1))
    x_test = y_test = None
    if test is not None and len(test):
        x_test = model.prepare(test.h_sub6)
        y_test = normalizer.apply(test.thz_factors.reshape(len(test), -1))
    trace = fit(net, x, y, mse_loss, optimizer, epochs, batch_size, seed, x_test, y_test,
                eval_train=eval_train, target_loss=target_loss)
    return model, trace


# ---------------------------------------------------------------------------
# Error report

REPORT_ROWS = (
    ("AoD φ (deg)", AOD_AZ), ("AoD θ (deg)", AOD_EL), ("AoA φ (deg)", AOA_AZ), ("AoA θ (deg)", AOA_EL),
    ("Phase (deg)", PHASE), ("ToA (s)", TOA), ("Pathloss", PATHLOSS),
)
_DEGREE_COLUMNS = {AOD_AZ, AOD_EL, AOA_AZ, AOA_EL, PHASE}
_WRAPPED_COLUMNS = {AOD_AZ, AOA_AZ, PHASE}


def absolute_errors(pred, true):
    """Elementwise absolute error, wrapped for periodic columns and in degrees for angles."""
    err = np.abs(np.asarray(pred, float) - np.asarray(true, float))
    for col in _WRAPPED_COLUMNS:
        err[..., col] = np.abs(wrap_angle(pred[..., col] - true[..., col]))
    for col in _DEGREE_COLUMNS:
        err[..., col] = np.degrees(err[..., col])
    return err


@dataclass
class ErrorReport:
    """Per-factor mean of per-path MAE and its spread across paths."""

    rows: list  # (name, mean, std)

    def as_dict(self):
        return {name: (mean, std) for name, mean, std in self.rows}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["factor", "mean", "std"])
        for name, mean, std in self.rows:
            w.writerow([name, repr(float(mean)), repr(float(std))])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'Average Absolute Error':<24}{'Mean':>14}{'Std':>14}"]
        for name, mean, std in self.rows:
            lines.append(f"{name:<24}{mean:>14.4g}{std:>14.4g}")
        return "\n".join(lines) + "\n"


def error_report(pred, true) -> ErrorReport:
    """``pred``/``true`` are ``(S, L, 7)``; padded (inactive) true paths are excluded."""
    pred, true = np.asarray(pred, float), np.asarray(true, float)
    err = absolute_errors(pred, true)
    active = true[..., PATHLOSS] > 0
    rows = []
    for name, col in REPORT_ROWS:
        per_path = []
        for l in range(true.shape[1]):
            mask = active[:, l]
            if mask.any():
                per_path.append(err[mask, l, col].mean())
        per_path = np.array(per_path) if per_path else np.zeros(1)
        rows.append((name, float(per_path.mean()), float(per_path.std())))
    return ErrorReport(rows)


def evaluate_estimator(model: EstimatorModel, test: Dataset, baseline_mean=None):
    """Error report of the model and, alongside, of the blind mean predictor.

    ``baseline_mean`` defaults to the normalizer mean (the training-set mean,
    circular for periodic columns).
    Returns ``(model_report, blind_report, predictions)``.
    """
    pred = model.predict(test.h_sub6)
    mean = model.normalizer.mean if baseline_mean is None else np.asarray(baseline_mean)
    blind = np.broadcast_to(mean.reshape(1, model.num_paths, NUM_FACTORS), test.thz_factors.shape)
    return error_report(pred, test.thz_factors), error_report(blind, test.thz_factors), pred
