"""Array-backed dataset and the THZDS1 binary file format.

Layout (little endian): magic ``THZDS1\\0``; header ``u32 version, u64
num_samples, u32 K_s, N_s, K_t, N_t, L``; then per sample ``h_sub6`` (f32
interleaved re/im, K_s x N_s), ``h_sub6_true`` (same), ``thz_factors`` (f32,
L x 7), ``h_thz_true`` (f32 interleaved, K_t x N_t), ``beam_label`` (u32,
0xFFFFFFFF when unset), ``position`` (3 x f32).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .channel import NUM_FACTORS, PATHLOSS, DualBandSample
from .errors import DimensionMismatchError, ThzBeamError

MAGIC = b"THZDS1\0"
VERSION = 1
UNSET_LABEL = 0xFFFFFFFF
_HEADER = struct.Struct("<IQIIIII")


@dataclass(eq=False)
class Dataset:
    h_sub6: np.ndarray        # (S, K_s, N_s) complex, pilot estimate
    h_sub6_true: np.ndarray   # (S, K_s, N_s) complex
    thz_factors: np.ndarray   # (S, L, 7)
    h_thz_true: np.ndarray    # (S, K_t, N_t) complex
    beam_label: np.ndarray    # (S,) int64, -1 when unset
    position: np.ndarray      # (S, 3)

    def __len__(self):
        return self.h_sub6.shape[0]

    @property
    def dims(self):
        return {
            "K_s": self.h_sub6.shape[1], "N_s": self.h_sub6.shape[2],
            "K_t": self.h_thz_true.shape[1], "N_t": self.h_thz_true.shape[2],
            "L": self.thz_factors.shape[1],
        }

    @property
    def active_counts(self):
        return (self.thz_factors[:, :, PATHLOSS] > 0).sum(axis=1)

    @property
    def has_labels(self):
        return len(self) > 0 and bool(np.all(self.beam_label >= 0))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.h_sub6[idx], self.h_sub6_true[idx], self.thz_factors[idx],
                       self.h_thz_true[idx], self.beam_label[idx], self.position[idx])

    def with_labels(self, labels) -> "Dataset":
        return replace(self, beam_label=np.asarray(labels, dtype=np.int64).copy())

    def require_dims(self, **expected):
        found = {k: self.dims[k] for k in expected}
        if found != expected:
            raise DimensionMismatchError(expected, found, "dataset")

    @classmethod
    def empty(cls, k_s, n_s, k_t, n_t, L):
        return cls(np.zeros((0, k_s, n_s), complex), np.zeros((0, k_s, n_s), complex),
                   np.zeros((0, L, NUM_FACTORS)), np.zeros((0, k_t, n_t), complex),
                   np.zeros(0, np.int64), np.zeros((0, 3)))

    @classmethod
    def from_samples(cls, samples: list[DualBandSample], dims=None) -> "Dataset":
        if not samples:
            return cls.empty(*(dims or (1, 1, 1, 1, 1)))
        return cls(
            np.stack([s.h_sub6.entries for s in samples]),
            np.stack([s.h_sub6_true.entries for s in samples]),
            np.stack([s.thz_factors.values for s in samples]),
            np.stack([s.h_thz_true.entries for s in samples]),
            np.full(len(samples), -1, dtype=np.int64),
            np.array([s.user_position for s in samples], dtype=float),
        )

    # -- binary I/O --------------------------------------------------------

    def to_bytes(self) -> bytes:
        d = self.dims
        n = len(self)
        record = np.dtype([
            ("h_sub6", "<f4", (d["K_s"] * d["N_s"] * 2,)),
            ("h_sub6_true", "<f4", (d["K_s"] * d["N_s"] * 2,)),
            ("thz_factors", "<f4", (d["L"] * NUM_FACTORS,)),
            ("h_thz_true", "<f4", (d["K_t"] * d["N_t"] * 2,)),
            ("beam_label", "<u4"),
            ("position", "<f4", (3,)),
        ])
        rec = np.zeros(n, dtype=record)
        rec["h_sub6"] = _interleave(self.h_sub6)
        rec["h_sub6_true"] = _interleave(self.h_sub6_true)
        rec["thz_factors"] = self.thz_factors.reshape(n, d["L"] * NUM_FACTORS)
        rec["h_thz_true"] = _interleave(self.h_thz_true)
        rec["beam_label"] = np.where(self.beam_label < 0, UNSET_LABEL, self.beam_label).astype(np.uint32)
        rec["position"] = self.position
        header = _HEADER.pack(VERSION, n, d["K_s"], d["N_s"], d["K_t"], d["N_t"], d["L"])
        return MAGIC + header + rec.tobytes()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, source="<bytes>") -> "Dataset":
        if not data.startswith(MAGIC):
            raise ThzBeamError(f"{source}: not a THZDS1 dataset")
        off = len(MAGIC)
        version, n, k_s, n_s, k_t, n_t, L = _HEADER.unpack_from(data, off)
        if version != VERSION:
            raise DimensionMismatchError({"version": VERSION}, {"version": version}, "dataset header")
        off += _HEADER.size
        record = np.dtype([
            ("h_sub6", "<f4", (k_s * n_s * 2,)),
            ("h_sub6_true", "<f4", (k_s * n_s * 2,)),
            ("thz_factors", "<f4", (L * NUM_FACTORS,)),
            ("h_thz_true", "<f4", (k_t * n_t * 2,)),
            ("beam_label", "<u4"),
            ("position", "<f4", (3,)),
        ])
        if len(data) - off != n * record.itemsize:
            raise ThzBeamError(f"{source}: expected {n} records of {record.itemsize} bytes")
        rec = np.frombuffer(data, dtype=record, count=n, offset=off)
        labels = rec["beam_label"].astype(np.int64)
        labels[labels == UNSET_LABEL] = -1
        return cls(
            _deinterleave(rec["h_sub6"], k_s, n_s),
            _deinterleave(rec["h_sub6_true"], k_s, n_s),
            rec["thz_factors"].astype(np.float64).reshape(n, L, NUM_FACTORS),
            _deinterleave(rec["h_thz_true"], k_t, n_t),
            labels,
            rec["position"].astype(np.float64),
        )

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), str(path))


def read_header(path):
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC) + _HEADER.size)
    if not head.startswith(MAGIC) or len(head) < len(MAGIC) + _HEADER.size:
        raise ThzBeamError(f"{path}: not a THZDS1 dataset")
    version, n, k_s, n_s, k_t, n_t, L = _HEADER.unpack_from(head, len(MAGIC))
    return {"version": version, "num_samples": n, "K_s": k_s, "N_s": n_s, "K_t": k_t, "N_t": n_t, "L": L}


def _interleave(h):
    out = np.empty(h.shape + (2,), dtype=np.float64)
    out[..., 0] = h.real
    out[..., 1] = h.imag
    return out.reshape(h.shape[0], int(np.prod(h.shape[1:])) * 2)


def _deinterleave(flat, k, n):
    a = flat.astype(np.float64).reshape(-1, k, n, 2)
    return a[..., 0] + 1j * a[..., 1]


def split_indices(n, seed, train_fraction=0.8):
    """Seeded shuffle into train/test index arrays (80/20 by default)."""
    perm = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0xD5,))).permutation(n)
    cut = int(round(train_fraction * n))
    return np.sort(perm[:cut]), np.sort(perm[cut:])
