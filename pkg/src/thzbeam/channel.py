"""Dual-band geometric multipath channel model.

Both bands are derived from one shared set of propagation paths per user
(line of sight, specular wall/ground reflections and point scatterers).
Each band evaluates its own pathloss and carrier phase on that geometry, so
the THz factor set is a deterministic function of the same scene that
produces the sub-6GHz channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DelayWindowError, DomainError, ShapeError

SPEED_OF_LIGHT = 299_792_458.0

# Column layout of a factor row.
FACTOR_NAMES = ("pathloss", "toa", "phase", "aoa_az", "aoa_el", "aod_az", "aod_el")
NUM_FACTORS = len(FACTOR_NAMES)
PATHLOSS, TOA, PHASE, AOA_AZ, AOA_EL, AOD_AZ, AOD_EL = range(NUM_FACTORS)
ANGLE_COLUMNS = (PHASE, AOA_AZ, AOA_EL, AOD_AZ, AOD_EL)


def wrap_angle(a):
    """Wrap angles to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class PathFactors:
    pathloss: float
    toa: float
    phase: float
    aoa_az: float
    aoa_el: float
    aod_az: float
    aod_el: float

    def __post_init__(self):
        if self.pathloss < 0 or self.toa < 0:
            raise DomainError("pathloss and toa must be nonnegative")
        for name in ("phase", "aoa_az", "aod_az"):
            v = getattr(self, name)
            if not -math.pi <= v < math.pi:
                raise DomainError(f"{name}={v} outside [-pi, pi)")
        for name in ("aoa_el", "aod_el"):
            v = getattr(self, name)
            if not -math.pi / 2 <= v <= math.pi / 2:
                raise DomainError(f"{name}={v} outside [-pi/2, pi/2]")

    def as_row(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FACTOR_NAMES], dtype=float)


@dataclass(frozen=True, eq=False)
class ChannelFactorSet:
    """Per-path factors for a fixed path budget ``L``.

    ``values`` is an ``(L, 7)`` array sorted by descending pathloss; rows at or
    beyond ``active_count`` are zero padding.
    """

    values: np.ndarray
    active_count: int

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != NUM_FACTORS:
            raise ShapeError(f"factor array must be (L, {NUM_FACTORS}), got {v.shape}")
        if not 0 <= self.active_count <= v.shape[0]:
            raise DomainError("active_count out of range")
        if np.any(v[self.active_count:] != 0):
            raise DomainError("padding rows must be all zero")
        if np.any(np.diff(v[: self.active_count, PATHLOSS]) > 0):
            raise DomainError("paths must be sorted by descending pathloss")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_paths(cls, paths: Sequence[PathFactors], budget: int) -> "ChannelFactorSet":
        """Keep the ``budget`` strongest paths, zero-padding if fewer exist."""
        rows = sorted((p.as_row() for p in paths), key=lambda r: -r[PATHLOSS])[:budget]
        values = np.zeros((budget, NUM_FACTORS))
        if rows:
            values[: len(rows)] = rows
        return cls(values, len(rows))

    @property
    def budget(self) -> int:
        return self.values.shape[0]

    @property
    def paths(self) -> list[PathFactors]:
        return [PathFactors(*map(float, row)) for row in self.values[: self.active_count]]

    def __eq__(self, other):
        return (
            isinstance(other, ChannelFactorSet)
            and self.active_count == other.active_count
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform 3-D lattice array; element index runs fastest along x, then y, then z."""

    elements: tuple = (1, 1, 1)
    spacing: float = 0.5

    def __post_init__(self):
        elems = tuple(int(e) for e in self.elements)
        if len(elems) != 3 or min(elems) < 1:
            raise ConfigError(f"array elements must be three integers >= 1, got {self.elements}")
        if not self.spacing > 0:
            raise ConfigError("array spacing must be positive")
        object.__setattr__(self, "elements", elems)

    @property
    def num_elements(self) -> int:
        nx, ny, nz = self.elements
        return nx * ny * nz

    def positions(self) -> np.ndarray:
        """Integer lattice positions, shape ``(N, 3)``."""
        nx, ny, nz = self.elements
        pz, py, px = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
        return np.stack([px.ravel(), py.ravel(), pz.ravel()], axis=1)


@dataclass(frozen=True, eq=False)
class FrequencyChannel:
    entries: np.ndarray
    band: str
    carrier_hz: float
    bandwidth_hz: float

    def __post_init__(self):
        h = np.array(self.entries, dtype=complex)
        if h.ndim != 2 or min(h.shape) < 1:
            raise ShapeError(f"channel must be a nonempty K x N matrix, got {h.shape}")
        if not np.all(np.isfinite(h)):
            raise DomainError("channel entries must be finite")
        if self.band not in ("sub6", "thz"):
            raise DomainError(f"unknown band {self.band!r}")
        h.setflags(write=False)
        object.__setattr__(self, "entries", h)

    @property
    def shape(self):
        return self.entries.shape


# ---------------------------------------------------------------------------
# Scenario configuration


@dataclass(frozen=True)
class BandConfig:
    carrier_hz: float
    bandwidth_hz: float
    num_subcarriers: int
    array: ArrayGeometry
    max_paths: int
    noise_variance: float = 0.0

    def problems(self, name: str) -> list[str]:
        out = []
        if not self.carrier_hz > 0:
            out.append(f"{name}.carrier_hz must be positive")
        if not self.bandwidth_hz > 0:
            out.append(f"{name}.bandwidth_hz must be positive")
        if self.num_subcarriers < 1:
            out.append(f"{name}.num_subcarriers must be >= 1")
        if self.max_paths < 1:
            out.append(f"{name}.max_paths must be >= 1")
        if self.noise_variance < 0:
            out.append(f"{name}.noise_variance must be >= 0")
        return out


@dataclass(frozen=True)
class Region:
    """Street-like box ``[0, length] x [0, width]`` with the BS at ``bs_position``."""

    length: float = 60.0
    width: float = 20.0
    bs_position: tuple = (0.0, 10.0, 8.0)
    user_height: float = 2.0

    def diameter(self) -> float:
        top = max(self.bs_position[2], self.user_height)
        return math.sqrt(self.length**2 + self.width**2 + top**2)


@dataclass(frozen=True)
class ScattererConfig:
    num_random: int = 4
    wall_reflections: bool = True
    ground_reflection: bool = True
    wall_loss: float = 0.5
    ground_loss: float = 0.7
    scattering_loss: float = 0.2
    max_height: float = 8.0


def _default_sub6():
    return BandConfig(2.4e9, 20e6, 32, ArrayGeometry((1, 4, 1)), 8, 0.0)


def _default_thz():
    return BandConfig(100e9, 50e6, 32, ArrayGeometry((2, 8, 2)), 4, 0.0)


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    num_users: int = 5000
    region: Region = field(default_factory=Region)
    sub6: BandConfig = field(default_factory=_default_sub6)
    thz: BandConfig = field(default_factory=_default_thz)
    absorption_coeff: float = 0.0005
    pathloss_exponent: float = 2.0
    scatterers: ScattererConfig = field(default_factory=ScattererConfig)
    pilot_symbol: complex = 1.0 + 0.0j

    def problems(self) -> list[str]:
        out = []
        if self.num_users < 0:
            out.append("num_users must be >= 0")
        r = self.region
        if not (r.length > 0 and r.width > 0):
            out.append("region must have positive area")
        else:
            bx, by, bz = r.bs_position
            if not (0 <= bx <= r.length and 0 <= by <= r.width and bz >= 0):
                out.append("bs_position must lie within the region footprint")
            if r.user_height < 0:
                out.append("region.user_height must be >= 0")
        out += self.sub6.problems("sub6") + self.thz.problems("thz")
        if self.sub6.max_paths < self.thz.max_paths:
            out.append("sub6.max_paths must be >= thz.max_paths")
        if self.absorption_coeff < 0:
            out.append("absorption_coeff must be >= 0")
        if self.pathloss_exponent < 2:
            out.append("pathloss_exponent must be >= 2")
        if self.scatterers.num_random < 0:
            out.append("scatterers.num_random must be >= 0")
        if self.pilot_symbol == 0:
            out.append("pilot_symbol must be nonzero")
        if r.length > 0 and r.width > 0:
            # Every path is at most one bounce inside the box, so its length is
            # bounded by twice the box diameter.
            box = math.sqrt(r.length**2 + r.width**2
                            + max(r.bs_position[2], r.user_height, self.scatterers.max_height) ** 2)
            for name, band in (("sub6", self.sub6), ("thz", self.thz)):
                span = 2.0 * box * band.bandwidth_hz / SPEED_OF_LIGHT
                if span >= band.num_subcarriers:
                    out.append(
                        f"{name}: worst-case delay spread {span:.1f} subcarrier periods "
                        f"exceeds the {band.num_subcarriers}-subcarrier window"
                    )
        return out

    def validate(self) -> "ScenarioConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self


@dataclass(frozen=True)
class DualBandSample:
    h_sub6: FrequencyChannel
    h_sub6_true: FrequencyChannel
    thz_factors: ChannelFactorSet
    h_thz_true: FrequencyChannel
    user_position: tuple
    sub6_factors: Optional[ChannelFactorSet] = None


# ---------------------------------------------------------------------------
# Formulas


def pathloss(distance, pathloss_exponent=2.0, absorption_coeff=0.0, carrier_hz=100e9):
    """Amplitude gain: free-space reference at 1 m, power-law decay, molecular absorption."""
    d = np.asarray(distance, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("distance must be positive")
    reference = SPEED_OF_LIGHT / (4.0 * math.pi * carrier_hz)
    out = reference * d ** (-pathloss_exponent / 2.0) * np.exp(-absorption_coeff * d / 2.0)
    return float(out) if out.ndim == 0 else out


def steering_vector(geometry: ArrayGeometry, az, el) -> np.ndarray:
    """Unnormalized plane-wave response of every element (all entries have modulus 1)."""
    direction = np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
    return np.exp(2j * math.pi * geometry.spacing * (geometry.positions() @ direction))


def synthesize_channel(factors: ChannelFactorSet, geometry: ArrayGeometry, num_subcarriers: int,
                       bandwidth_hz: float, band: str = "thz", carrier_hz: float = 100e9) -> FrequencyChannel:
    if num_subcarriers < 1:
        raise DomainError("num_subcarriers must be >= 1")
    active = factors.values[: factors.active_count]
    delay_taps = active[:, TOA] * bandwidth_hz
    if np.any(delay_taps >= num_subcarriers):
        raise DelayWindowError(
            f"path delay of {delay_taps.max():.2f} samples exceeds the {num_subcarriers}-sample window"
        )
    k = np.arange(num_subcarriers)
    gains = active[:, PATHLOSS] * np.exp(1j * active[:, PHASE])
    ramps = np.exp(-2j * math.pi * np.outer(k, delay_taps) / num_subcarriers)  # (K, L)
    steer = np.array([steering_vector(geometry, p[AOA_AZ], p[AOA_EL]) for p in active])
    steer = steer.reshape(len(active), geometry.num_elements)
    h = (ramps * gains) @ steer
    return FrequencyChannel(h, band, carrier_hz, bandwidth_hz)


def pilot_estimate(h_true: FrequencyChannel, noise_variance: float, pilot_symbol: complex,
                   rng: np.random.Generator) -> FrequencyChannel:
    """Least-squares per-subcarrier estimate from one noisy pilot observation."""
    if pilot_symbol == 0:
        raise DomainError("pilot symbol must be nonzero")
    if noise_variance < 0:
        raise DomainError("noise variance must be nonnegative")
    h = h_true.entries
    y = h * pilot_symbol
    if noise_variance > 0:
        sigma = math.sqrt(noise_variance / 2.0)
        y = y + sigma * (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape))
    return FrequencyChannel(y / pilot_symbol, h_true.band, h_true.carrier_hz, h_true.bandwidth_hz)


# ---------------------------------------------------------------------------
# Scenario sampling


@dataclass(frozen=True)
class _Path:
    length: float
    aoa: np.ndarray   # unit vector BS -> first interaction point
    aod: np.ndarray   # unit vector user -> first interaction point
    bounces: int
    loss: float


def _direction_angles(v) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    az = float(wrap_angle(math.atan2(v[1], v[0])))
    el = math.asin(max(-1.0, min(1.0, v[2] / np.linalg.norm(v))))
    return az, el


def _unit(v):
    return v / np.linalg.norm(v)


def _scene_paths(bs: np.ndarray, user: np.ndarray, scatter_points: np.ndarray,
                 cfg: ScenarioConfig) -> list[_Path]:
    sc = cfg.scatterers
    paths = [_Path(float(np.linalg.norm(user - bs)), _unit(user - bs), _unit(bs - user), 0, 1.0)]

    mirrors = []
    if sc.wall_reflections:
        mirrors += [(1, 0.0, sc.wall_loss), (1, cfg.region.width, sc.wall_loss)]
    if sc.ground_reflection:
        mirrors.append((2, 0.0, sc.ground_loss))
    for axis, plane, loss in mirrors:
        image = user.copy()
        image[axis] = 2.0 * plane - user[axis]
        denom = image[axis] - bs[axis]
        if denom == 0:
            continue
        t = (plane - bs[axis]) / denom
        if not 0 < t < 1:
            continue
        hit = bs + t * (image - bs)
        paths.append(_Path(float(np.linalg.norm(image - bs)), _unit(hit - bs), _unit(hit - user), 1, loss))

    for s in scatter_points:
        length = float(np.linalg.norm(s - bs) + np.linalg.norm(user - s))
        paths.append(_Path(length, _unit(s - bs), _unit(s - user), 1, sc.scattering_loss))
    return paths


def _band_factors(paths: list[_Path], band: BandConfig, cfg: ScenarioConfig, absorption: float) -> list[PathFactors]:
    out = []
    for p in paths:
        toa = p.length / SPEED_OF_LIGHT
        gain = p.loss * pathloss(p.length, cfg.pathloss_exponent, absorption, band.carrier_hz)
        phase = float(wrap_angle(2.0 * math.pi * band.carrier_hz * toa + math.pi * p.bounces))
        aoa_az, aoa_el = _direction_angles(p.aoa)
        aod_az, aod_el = _direction_angles(p.aod)
        out.append(PathFactors(gain, toa, phase, aoa_az, aoa_el, aod_az, aod_el))
    return out


def user_rng(seed: int, user_index: int) -> np.random.Generator:
    """Independent per-user stream; serial and parallel generation agree bit-for-bit."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(user_index),)))


def sample_user(cfg: ScenarioConfig, user_index: int) -> DualBandSample:
    rng = user_rng(cfg.seed, user_index)
    r = cfg.region
    bs = np.array(r.bs_position, dtype=float)
    user = np.array([rng.uniform(0, r.length), rng.uniform(0, r.width), r.user_height])
    n = cfg.scatterers.num_random
    scatter = np.column_stack([
        rng.uniform(0, r.length, n), rng.uniform(0, r.width, n), rng.uniform(0, cfg.scatterers.max_height, n),
    ]) if n else np.zeros((0, 3))

    paths = _scene_paths(bs, user, scatter, cfg)
    # Molecular absorption is negligible below 6 GHz.
    sub6_set = ChannelFactorSet.from_paths(_band_factors(paths, cfg.sub6, cfg, 0.0), cfg.sub6.max_paths)
    thz_set = ChannelFactorSet.from_paths(_band_factors(paths, cfg.thz, cfg, cfg.absorption_coeff),
                                          cfg.thz.max_paths)

    s6, th = cfg.sub6, cfg.thz
    h_sub6_true = synthesize_channel(sub6_set, s6.array, s6.num_subcarriers, s6.bandwidth_hz, "sub6", s6.carrier_hz)
    h_thz_true = synthesize_channel(thz_set, th.array, th.num_subcarriers, th.bandwidth_hz, "thz", th.carrier_hz)
    h_sub6 = pilot_estimate(h_sub6_true, s6.noise_variance, cfg.pilot_symbol, rng)
    return DualBandSample(h_sub6, h_sub6_true, thz_set, h_thz_true, tuple(float(v) for v in user), sub6_set)


def sample_scenario(cfg: ScenarioConfig, rng: Optional[np.random.Generator] = None,
                    threads: int = 1) -> list[DualBandSample]:
    """Generate ``cfg.num_users`` samples.

    Randomness comes from per-user streams keyed by ``(cfg.seed, user_index)``;
    ``rng`` is accepted for interface symmetry and only used to draw a seed
    when ``cfg.seed`` is None.
    """
    if cfg.seed is None:
        if rng is None:
            raise ConfigError("either cfg.seed or rng is required")
        from dataclasses import replace
        cfg = replace(cfg, seed=int(rng.integers(2**63)))
    cfg.validate()
    if threads > 1 and cfg.num_users > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda i: sample_user(cfg, i), range(cfg.num_users)))
    return [sample_user(cfg, i) for i in range(cfg.num_users)]
