"""Quantized analog beamforming codebook and exhaustive beam search."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .channel import ArrayGeometry, FrequencyChannel
from .errors import ConfigError, DomainError, ShapeError

MAX_CODEBOOK_SIZE = 1 << 24


@dataclass(frozen=True, eq=False)
class Codebook:
    """``beams`` is ``(|P|, N)``; beam ``(a, b, c)`` sits at row ``a + Qx*(b + Qy*c)``."""

    beams: np.ndarray
    quantization: tuple
    geometry: ArrayGeometry

    def __len__(self):
        return self.beams.shape[0]

    @property
    def num_elements(self):
        return self.beams.shape[1]


@dataclass(frozen=True)
class BeamSearchResult:
    best_index: int
    best_rate: float
    rates: Optional[np.ndarray] = None


def generate_codebook(geometry: ArrayGeometry, quantization) -> Codebook:
    q = tuple(int(v) for v in quantization)
    if len(q) != 3 or min(q) < 1:
        raise ConfigError(f"quantization must be three integers >= 1, got {quantization}")
    # A singleton array axis cannot distinguish phase gradients: collapse it.
    effective = tuple(1 if n == 1 else qa for n, qa in zip(geometry.elements, q))
    if effective != q:
        warnings.warn(
            f"quantization {q} on array {geometry.elements} yields duplicate beams; "
            f"deduplicated to {effective}",
            stacklevel=2,
        )
    size = math.prod(effective)
    if size > MAX_CODEBOOK_SIZE or size * geometry.num_elements > MAX_CODEBOOK_SIZE * 64:
        raise ConfigError(f"codebook of {size} beams is too large")

    qx, qy, qz = effective
    cz, cy, cx = np.meshgrid(np.arange(qz), np.arange(qy), np.arange(qx), indexing="ij")
    gradients = np.stack([cx.ravel() / qx, cy.ravel() / qy, cz.ravel() / qz], axis=1)  # (|P|, 3)
    phase = gradients @ geometry.positions().T
    beams = np.exp(2j * math.pi * phase) / math.sqrt(geometry.num_elements)
    beams.setflags(write=False)
    return Codebook(beams, effective, geometry)


def _entries(h):
    return h.entries if isinstance(h, FrequencyChannel) else np.asarray(h, dtype=complex)


def spectral_efficiency(h, beam, snr) -> float:
    """``sum_k log2(1 + snr |h[k]^H p|^2)`` in bits/s/Hz."""
    hk = _entries(h)
    beam = np.asarray(beam, dtype=complex)
    if beam.ndim != 1 or hk.shape[1] != beam.shape[0]:
        raise ShapeError(f"beam of length {beam.shape} does not match channel {hk.shape}")
    if snr < 0:
        raise DomainError("snr must be nonnegative")
    gain = np.abs(np.conj(hk) @ beam) ** 2
    return float(np.log1p(snr * gain).sum() / math.log(2.0))


def codebook_rates(h, codebook: Codebook, snr) -> np.ndarray:
    """Rate of every beam; ``h`` may be one ``(K, N)`` channel or a stack ``(S, K, N)``."""
    hk = _entries(h)
    if hk.shape[-1] != codebook.num_elements:
        raise ShapeError(f"channel has {hk.shape[-1]} antennas, codebook {codebook.num_elements}")
    if snr < 0:
        raise DomainError("snr must be nonnegative")
    single = hk.ndim == 2
    rates = kernels.beam_rates(hk[None] if single else hk, codebook.beams, snr)
    return rates[0] if single else rates


def exhaustive_search(h, codebook: Codebook, snr, keep_rates=False) -> BeamSearchResult:
    if len(codebook) == 0:
        raise ConfigError("empty codebook")
    rates = codebook_rates(h, codebook, snr)
    best = int(np.argmax(rates))  # first index on ties
    return BeamSearchResult(best, float(rates[best]), rates if keep_rates else None)


def top_k_indices(prob, k):
    """Indices of the ``k`` largest probabilities, ties broken by lower index."""
    prob = np.asarray(prob, dtype=float)
    order = np.lexsort((np.arange(prob.shape[-1]), -prob))
    return order[:k]


def top_k_evaluate(prob, k, h, codebook: Codebook, snr, rates=None):
    """Returns ``(top1_rate, topk_mean_rate, topk_best_rate)``.

    ``rates`` may carry precomputed per-beam rates for ``h`` at ``snr``.
    """
    prob = np.asarray(prob, dtype=float)
    if prob.shape != (len(codebook),):
        raise ShapeError(f"probability vector of shape {prob.shape} for {len(codebook)} beams")
    if abs(prob.sum() - 1.0) > 1e-6:
        raise DomainError("probabilities must sum to 1")
    if not 1 <= k <= len(codebook):
        raise DomainError(f"k={k} outside [1, {len(codebook)}]")
    idx = top_k_indices(prob, k)
    if rates is None:
        rates = codebook_rates(h, codebook, snr)
    chosen = rates[idx]
    return float(chosen[0]), float(chosen.mean()), float(chosen.max())
