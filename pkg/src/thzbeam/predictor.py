"""Beam classifiers: dense net on THz factors, and the THz-matrix CNN baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import AOA_AZ, AOA_EL, AOD_AZ, AOD_EL, NUM_FACTORS, PATHLOSS, PHASE, TOA, FrequencyChannel, pilot_estimate
from .codebook import Codebook, codebook_rates, exhaustive_search
from .dataset import Dataset
from .errors import DomainError, ShapeError, ThzBeamError
from .estimator import FactorNormalizer, format_input, magnitude_scale
from .nn import (Conv2D, Dense, Dropout, GlobalAvgPool, OptimizerConfig, ReLU, Sequential,
                 cross_entropy_loss, load_weights, save_weights, softmax)
from .training import batched_forward, fit, stream


@dataclass(frozen=True)
class PredictorArchitecture:
    hidden: tuple = (256, 256, 128, 128)
    dropout: float = 0.2


@dataclass(frozen=True)
class BaselineArchitecture:
    filters: int = 32
    kernel: tuple = (2, 2)
    hidden: tuple = (256, 256, 128, 128)
    dropout: float = 0.2


PREDICTOR_OPTIMIZER = OptimizerConfig("adam", 1e-3, 0.0, 0.1, 80)

# Pathloss below this (padding rows, or non-positive estimates) is clamped before the log.
PATHLOSS_FLOOR = 1e-12


def _direction(az, el):
    return [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]


def factor_features(factors):
    """Classifier features for ``(S, L, 7)`` factor arrays, shape ``(S, L*10)``.

    Per path: log pathloss, ToA, sin/cos of the phase, and the unit direction
    vectors of arrival and departure. Angles enter only through smooth
    functions, so the features have no wrap-around seam, and beam directions
    of a DFT codebook are close to linear in the direction cosines.
    """
    f = np.asarray(factors, dtype=float)
    f = f.reshape(len(f), -1, NUM_FACTORS)
    cols = [np.log(np.maximum(f[..., PATHLOSS], PATHLOSS_FLOOR)), f[..., TOA],
            np.sin(f[..., PHASE]), np.cos(f[..., PHASE])]
    cols += _direction(f[..., AOA_AZ], f[..., AOA_EL]) + _direction(f[..., AOD_AZ], f[..., AOD_EL])
    return np.stack(cols, axis=2).reshape(len(f), -1)


def _dense_stack(in_dim, hidden, dropout, num_classes, rng):
    layers = []
    for width in hidden:
        layers += [Dense(in_dim, width, rng), ReLU(), Dropout(dropout, rng)]
        in_dim = width
    layers.append(Dense(in_dim, num_classes, rng, init="glorot"))
    return layers


def build_predictor_network(in_dim, num_classes, arch: PredictorArchitecture, rng) -> Sequential:
    return Sequential(_dense_stack(in_dim, arch.hidden, arch.dropout, num_classes, rng))


def build_baseline_network(input_shape, num_classes, arch: BaselineArchitecture, rng) -> Sequential:
    c = input_shape[2]
    layers = [Conv2D(c, arch.filters, arch.kernel, rng), GlobalAvgPool(), ReLU()]
    return Sequential(layers + _dense_stack(arch.filters, arch.hidden, arch.dropout, num_classes, rng))


@dataclass
class BeamModel:
    """A trained classifier plus the input transform it was trained with.

    ``kind`` is ``"factors"`` (input: ``(S, L, 7)`` factor arrays) or
    ``"baseline"`` (input: ``(S, K, N)`` complex THz channel estimates).
    """

    kind: str
    network: Sequential
    num_classes: int
    input_shape: tuple
    normalizer: FactorNormalizer | None = None
    magnitude_scale: float = 1.0
    arch: dict = field(default_factory=dict)

    def prepare(self, inputs):
        if self.kind == "factors":
            x = np.asarray(inputs, dtype=float).reshape(len(inputs), -1)
            if x.shape[1:] != tuple(self.input_shape):
                raise ShapeError(f"predictor expects {tuple(self.input_shape)} features, got {x.shape[1:]}")
            return self.normalizer.apply(factor_features(x))
        x = format_input(inputs)
        if x.shape[1:] != tuple(self.input_shape):
            raise ShapeError(f"baseline expects input {tuple(self.input_shape)}, got {x.shape[1:]}")
        x[..., 0] /= self.magnitude_scale
        return x

    def logits(self, inputs):
        return batched_forward(self.network, self.prepare(inputs))

    def predict_proba(self, inputs):
        return softmax(self.logits(inputs))

    def save(self, path):
        meta = {"model": self.kind, "num_classes": self.num_classes, "input_shape": list(self.input_shape),
                "magnitude_scale": self.magnitude_scale, "arch": self.arch}
        if self.normalizer is not None:
            meta["normalizer_mean"] = self.normalizer.mean.tolist()
            meta["normalizer_scale"] = self.normalizer.scale.tolist()
            meta["normalizer_periodic"] = self.normalizer.periodic.tolist()
        save_weights(path, self.network, meta)

    @classmethod
    def load(cls, path) -> "BeamModel":
        net, meta = load_weights(path)
        if meta.get("model") not in ("factors", "baseline"):
            raise ThzBeamError(f"{path} does not hold a beam classifier")
        norm = None
        if "normalizer_mean" in meta:
            norm = FactorNormalizer(np.array(meta["normalizer_mean"]), np.array(meta["normalizer_scale"]),
                                   np.array(meta["normalizer_periodic"]))
        return cls(meta["model"], net, meta["num_classes"], tuple(meta["input_shape"]), norm,
                   meta["magnitude_scale"], meta.get("arch", {}))


# ---------------------------------------------------------------------------
# Labels


def make_labels(dataset: Dataset, codebook: Codebook, snr) -> Dataset:
    """Exhaustive-search label for every sample (lowest index on ties)."""
    if dataset.dims["N_t"] != codebook.num_elements:
        raise ShapeError(f"dataset THz array has {dataset.dims['N_t']} elements, "
                         f"codebook {codebook.num_elements}")
    if len(dataset) == 0:
        return dataset.with_labels(np.zeros(0, np.int64))
    rates = codebook_rates(dataset.h_thz_true, codebook, snr)
    return dataset.with_labels(np.argmax(rates, axis=1))


def _check_labels(labels, num_classes):
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise DomainError("empty training set")
    if np.any(labels < 0):
        raise DomainError("dataset is unlabeled; run the label step first")
    if np.any(labels >= num_classes):
        raise DomainError(f"label {int(labels.max())} >= codebook size {num_classes}")


def train_predictor(factors, labels, num_classes, arch=PredictorArchitecture(), optimizer=PREDICTOR_OPTIMIZER,
                    epochs=100, batch_size=128, seed=0, test_factors=None, test_labels=None,
                    target_loss=None, eval_train=False):
    """Dense classifier on flattened factors (ground truth or CNN estimates). Returns ``(model, trace)``."""
    _check_labels(labels, num_classes)
    factors = np.asarray(factors, dtype=float)
    x_raw = factors.reshape(len(factors), -1)
    features = factor_features(x_raw)
    model = BeamModel("factors", build_predictor_network(features.shape[1], num_classes, arch, stream(seed, 1)),
                      num_classes, (x_raw.shape[1],), FactorNormalizer.fit(features),
                      arch={"hidden": list(arch.hidden), "dropout": arch.dropout})
    return model, _fit(model, factors, labels, optimizer, epochs, batch_size, seed, test_factors, test_labels,
                       target_loss, eval_train)


def baseline_inputs(h_thz_true, noise_variance, seed):
    """Noisy LS estimates of the THz channels; per-sample streams keyed by index."""
    h = np.asarray(h_thz_true)
    if noise_variance == 0:
        return h.copy()
    out = np.empty_like(h)
    for i, hi in enumerate(h):
        est = pilot_estimate(FrequencyChannel(hi, "thz", 1.0, 1.0), noise_variance, 1.0, stream(seed, 1000 + i))
        out[i] = est.entries
    return out


def baseline_noise_variance(h_thz_true, snr_db):
    """Noise variance giving the stated mean per-element pilot SNR."""
    power = float(np.mean(np.abs(h_thz_true) ** 2))
    return power / 10.0 ** (snr_db / 10.0)


def train_baseline(h_inputs, labels, num_classes, arch=BaselineArchitecture(), optimizer=PREDICTOR_OPTIMIZER,
                   epochs=100, batch_size=128, seed=0, test_inputs=None, test_labels=None,
                   target_loss=None, eval_train=False):
    """CNN baseline on (noisy) THz channel matrices. Returns ``(model, trace)``."""
    _check_labels(labels, num_classes)
    h_inputs = np.asarray(h_inputs)
    shape = h_inputs.shape[1:] + (2,)
    model = BeamModel("baseline", build_baseline_network(shape, num_classes, arch, stream(seed, 1)),
                      num_classes, shape, None, magnitude_scale(h_inputs),
                      arch={"filters": arch.filters, "kernel": list(arch.kernel), "hidden": list(arch.hidden),
                            "dropout": arch.dropout})
    return model, _fit(model, h_inputs, labels, optimizer, epochs, batch_size, seed, test_inputs, test_labels,
                       target_loss, eval_train)


def _fit(model, inputs, labels, optimizer, epochs, batch_size, seed, test_inputs, test_labels,
         target_loss, eval_train):
    x = model.prepare(inputs)
    y = np.asarray(labels, dtype=np.int64)
    xt = yt = None
    metrics = {"train_top1": lambda net: float(np.mean(batched_forward(net, x).argmax(1) == y))}
    if test_inputs is not None and len(test_inputs):
        xt, yt = model.prepare(test_inputs), np.asarray(test_labels, dtype=np.int64)
        metrics["test_top1"] = lambda net: float(np.mean(batched_forward(net, xt).argmax(1) == yt))
    return fit(model.network, x, y, cross_entropy_loss, optimizer, epochs, batch_size, seed, xt, yt,
               eval_train=eval_train, target_loss=target_loss, metrics=metrics)


# ---------------------------------------------------------------------------
# Evaluation

EVAL_COLUMNS = ("snr_db", "ub_rate", "proposed_top1", "proposed_top3_mean", "baseline_top1",
                "baseline_top3_mean", "proposed_top1_acc", "baseline_top1_acc")


def default_snr_grid():
    return list(range(-17, 26, 3))


def ranked_beams(prob, k):
    """Per-row indices of the ``k`` most probable beams, ties to the lower index."""
    prob = np.asarray(prob, dtype=float)
    order = np.argsort(-prob, axis=1, kind="stable")
    return order[:, :k]


def evaluate_beamforming(h_thz, codebook: Codebook, snr_db_grid, predictions: dict, k=3):
    """Rate table over the SNR grid.

    ``predictions`` maps a model name to its ``(S, |P|)`` probability matrix.
    For every SNR and model the result holds the mean top-1 rate, mean and
    best-of top-k rates, and top-1 accuracy against the exhaustive-search
    index at that SNR; ``ub_rate`` is the exhaustive-search mean. Returns a
    list of dicts plus per-sample arrays (``per_sample[snr_db][name]`` is an
    ``(S, 3)`` array of top-1, top-k mean, top-k best) for pointwise checks.
    """
    h = h_thz.entries[None] if isinstance(h_thz, FrequencyChannel) else np.asarray(h_thz)
    picks = {}
    for name, prob in predictions.items():
        prob = np.asarray(prob)
        if prob.shape != (len(h), len(codebook)):
            raise ShapeError(f"{name}: probabilities {prob.shape}, expected {(len(h), len(codebook))}")
        picks[name] = ranked_beams(prob, k)
    rows, per_sample = [], {}
    rows_idx = np.arange(len(h))[:, None]
    for snr_db in snr_db_grid:
        rates = codebook_rates(h, codebook, 10.0 ** (snr_db / 10.0))
        best = rates.argmax(axis=1)
        row = {"snr_db": snr_db, "ub_rate": float(rates.max(axis=1).mean())}
        per_sample[snr_db] = {"ub": rates.max(axis=1)}
        for name, idx in picks.items():
            chosen = rates[rows_idx, idx]
            top = np.stack([chosen[:, 0], chosen.mean(axis=1), chosen.max(axis=1)], axis=1)
            per_sample[snr_db][name] = top
            row[f"{name}_top1"] = float(top[:, 0].mean())
            row[f"{name}_top{k}_mean"] = float(top[:, 1].mean())
            row[f"{name}_top{k}_best"] = float(top[:, 2].mean())
            row[f"{name}_top1_acc"] = float(np.mean(idx[:, 0] == best))
        rows.append(row)
    return rows, per_sample


def oracle_probabilities(h_thz, codebook, snr):
    """One-hot probabilities at the exhaustive-search index (a perfect classifier)."""
    h = np.asarray(h_thz)
    prob = np.zeros((len(h), len(codebook)))
    for i, hi in enumerate(h):
        prob[i, exhaustive_search(hi, codebook, snr).best_index] = 1.0
    return prob


def accuracy(prob, labels):
    return float(np.mean(np.argmax(prob, axis=1) == np.asarray(labels)))


def uniform_probabilities(num_samples, num_classes):
    return np.full((num_samples, num_classes), 1.0 / num_classes)

