"""Post-division OFDM echo channel, UPA snapshots and structured search vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .scene import SPEED_OF_LIGHT, ArrayGeometry, RadialParams, direction_cosines


@dataclass(frozen=True)
class WaveformConfig:
    n_subcarriers: int = 128
    n_symbols: int = 256
    carrier_hz: float = 24e9
    subcarrier_spacing_hz: float = 240e3
    symbol_duration_s: float = 5.208e-6
    initial_phase_rad: float = 0.0  # cancels once the echo is divided by the data
    light_speed_mps: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.n_subcarriers < 2 or self.n_symbols < 2:
            raise DomainError("need at least 2 subcarriers and 2 symbols")
        if self.subcarrier_spacing_hz <= 0:
            raise DomainError("subcarrier spacing must be positive")
        # tolerate rounding in the quoted Ts
        if self.symbol_duration_s * self.subcarrier_spacing_hz < 1.0 - 1e-9:
            raise DomainError("symbol duration must include the useful symbol 1/df")

    @property
    def wavelength(self) -> float:
        return self.light_speed_mps / self.carrier_hz

    @property
    def max_unambiguous_range(self) -> float:
        return self.light_speed_mps / (2.0 * self.subcarrier_spacing_hz)

    @property
    def max_unambiguous_speed(self) -> float:
        """Doppler period; speeds are unambiguous on [-P/2, P/2)."""
        return self.light_speed_mps / (2.0 * self.carrier_hz * self.symbol_duration_s)


@dataclass(frozen=True)
class NoiseModel:
    sigma2: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.sigma2 < 0:
            raise DomainError("noise variance must be non-negative")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class ChannelMatrix:
    entries: np.ndarray
    amplitude: float = 1.0

    @property
    def shape(self):
        return self.entries.shape


@dataclass(frozen=True)
class ArraySnapshots:
    entries: np.ndarray
    source_row: int


def snr_to_sigma2(snr_db, amplitude: float = 1.0):
    if amplitude <= 0:
        raise DomainError("amplitude must be positive")
    return amplitude**2 * 10.0 ** (-np.asarray(snr_db, dtype=float) / 10.0)


def complex_gaussian(rng: np.random.Generator, shape, sigma2: float) -> np.ndarray:
    """Circularly symmetric complex Gaussian with total variance ``sigma2``."""
    scale = np.sqrt(sigma2 / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _range_phase_step(cfg: WaveformConfig, rng_m):
    return 2.0 * np.pi * cfg.subcarrier_spacing_hz * 2.0 * np.asarray(rng_m, dtype=float) / cfg.light_speed_mps


def _doppler_phase_step(cfg: WaveformConfig, speed):
    return (2.0 * np.pi * cfg.carrier_hz * 2.0 * np.asarray(speed, dtype=float)
            / cfg.light_speed_mps * cfg.symbol_duration_s)


def range_vector(rng_m, cfg: WaveformConfig) -> np.ndarray:
    """Delay steering vector(s); trailing axis has length ``n_subcarriers``."""
    m = np.arange(cfg.n_subcarriers)
    return np.exp(-1j * _range_phase_step(cfg, rng_m)[..., None] * m)


def velocity_vector(speed, cfg: WaveformConfig) -> np.ndarray:
    """Doppler steering vector(s); trailing axis has length ``n_symbols``."""
    mu = np.arange(cfg.n_symbols)
    return np.exp(1j * _doppler_phase_step(cfg, speed)[..., None] * mu)


def synthesize_channel(radial: RadialParams, cfg: WaveformConfig, noise: NoiseModel | None = None,
                       amplitude: float = 1.0, rng: np.random.Generator | None = None) -> ChannelMatrix:
    """N_c x N_s channel matrix for one target plus complex Gaussian noise.

    ``rng`` overrides ``noise.seed`` so callers can draw several quantities
    from one stream.
    """
    if radial.range <= 0:
        raise DomainError("range must be positive")
    entries = amplitude * np.outer(range_vector(radial.range, cfg), velocity_vector(radial.radial_speed, cfg))
    if noise is not None and noise.sigma2 > 0:
        rng = noise.generator() if rng is None else rng
        entries = entries + complex_gaussian(rng, entries.shape, noise.sigma2)
    return ChannelMatrix(entries, amplitude)


def steering_vector(azimuth, elevation, geom: ArrayGeometry, convention: str = "physical") -> np.ndarray:
    """UPA steering vector(s), trailing axis of length ``rows * cols``.

    Element order follows :meth:`ArrayGeometry.element_indices` (row index
    fastest); the reference element is always ``1 + 0j``.
    """
    u, v = direction_cosines(azimuth, elevation, convention)
    f, g = geom.element_indices()
    k0 = 2.0 * np.pi / geom.wavelength
    phase = k0 * (np.asarray(u)[..., None] * (f * geom.col_spacing) + np.asarray(v)[..., None] * (g * geom.row_spacing))
    return np.exp(1j * phase)


def array_snapshots(channel: ChannelMatrix, row: int, steering: np.ndarray, noise: NoiseModel | None = None,
                    rng: np.random.Generator | None = None) -> ArraySnapshots:
    """Outer product of the steering vector with subcarrier ``row`` plus array noise."""
    n_rows = channel.entries.shape[0]
    if not 0 <= row < n_rows:
        raise IndexError(f"row {row} outside [0, {n_rows})")
    y = np.outer(steering, channel.entries[row])
    if noise is not None and noise.sigma2 > 0:
        rng = noise.generator() if rng is None else rng
        y = y + complex_gaussian(rng, y.shape, noise.sigma2)
    return ArraySnapshots(y, row)
