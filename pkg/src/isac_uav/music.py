"""Noise-subspace estimation, superposed MUSIC spectra and peak search.

Each BS condenses its echoes into three accumulated noise-subspace Gram
matrices ``G = sum U U^H`` (angle, range, velocity).  The spectra are
``1 / (k^H G k)`` for the matching structured vector ``k``; the Grams are
also what gets shipped to the fusion stage.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import DomainError
from .scene import ArrayGeometry, wrap_angle
from .waveform import (
    ArraySnapshots,
    ChannelMatrix,
    NoiseModel,
    WaveformConfig,
    _doppler_phase_step,
    _range_phase_step,
    array_snapshots,
    steering_vector,
)

KINDS = ("angle", "range", "velocity")
DENOMINATOR_FLOOR = 1e-15
LOW_CONFIDENCE_RATIO = 2.0


class DegenerateSpectrumWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class NoiseSubspaceGram:
    matrix: np.ndarray
    kind: str
    count: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gram kind {self.kind!r}")
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError("gram must be a square matrix")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def scaled(self, alpha: float) -> "NoiseSubspaceGram":
        return NoiseSubspaceGram(self.matrix * alpha, self.kind, self.count)


@dataclass(frozen=True)
class AxisGrid:
    """One search axis: a coarse scan on [lo, hi) followed by a local refine."""

    lo: float
    hi: float
    coarse_step: float
    refine_step: float
    refine_half_window: float
    periodic: bool = False

    def __post_init__(self):
        if not self.refine_step < self.coarse_step:
            raise DomainError("refine step must be smaller than coarse step")
        if self.hi <= self.lo:
            raise DomainError("empty search interval")

    def coarse_points(self) -> np.ndarray:
        n = int(np.ceil((self.hi - self.lo) / self.coarse_step - 1e-9))
        return self.lo + self.coarse_step * np.arange(n)

    def refine_points(self, center: float) -> np.ndarray:
        n = int(round(self.refine_half_window / self.refine_step))
        pts = center + self.refine_step * np.arange(-n, n + 1)
        if self.periodic:
            period = self.hi - self.lo
            return (pts - self.lo) % period + self.lo
        return pts[(pts >= self.lo) & (pts < self.hi)]


@dataclass(frozen=True)
class PreprocessConfig:
    """Superposition depths and search grids (angles in degrees)."""

    n_rows_angle: int = 100
    n_cols_range_velocity: int = 20
    azimuth_grid: AxisGrid = AxisGrid(-180.0, 180.0, 1.0, 0.02, 1.5, periodic=True)
    elevation_grid: AxisGrid = AxisGrid(-89.5, 0.0, 1.0, 0.02, 1.5)
    range_grid: AxisGrid | None = None  # defaults to [0, c / (2 df))
    velocity_grid: AxisGrid = AxisGrid(-60.0, 60.0, 0.5, 0.02, 1.0)
    steering_convention: str = "physical"
    normalize_covariance: bool = True

    def resolved_range_grid(self, wcfg: WaveformConfig) -> AxisGrid:
        if self.range_grid is not None:
            return self.range_grid
        return AxisGrid(0.0, wcfg.max_unambiguous_range, 1.0, 0.05, 2.0)

    def validate(self, wcfg: WaveformConfig) -> None:
        if not 1 <= self.n_rows_angle <= wcfg.n_subcarriers:
            raise DomainError(f"n_rows_angle must lie in [1, {wcfg.n_subcarriers}]")
        if not 1 <= self.n_cols_range_velocity <= min(wcfg.n_subcarriers, wcfg.n_symbols):
            raise DomainError("n_cols_range_velocity exceeds the channel dimensions")


@dataclass
class BsEstimate:
    bs_id: int
    azimuth: float
    elevation: float
    range: float
    radial_speed: float
    angle_gram: NoiseSubspaceGram
    range_gram: NoiseSubspaceGram
    velocity_gram: NoiseSubspaceGram
    diagnostics: dict = field(default_factory=dict)

    @property
    def grams(self) -> dict[str, NoiseSubspaceGram]:
        return {"angle": self.angle_gram, "range": self.range_gram, "velocity": self.velocity_gram}

    def with_grams(self, **grams) -> "BsEstimate":
        kw = dict(self.grams)
        kw.update(grams)
        return BsEstimate(self.bs_id, self.azimuth, self.elevation, self.range, self.radial_speed,
                          kw["angle"], kw["range"], kw["velocity"], dict(self.diagnostics))


@dataclass(frozen=True)
class Peak:
    location: tuple
    peak_to_mean: float

    @property
    def low_confidence(self) -> bool:
        return self.peak_to_mean < LOW_CONFIDENCE_RATIO


# -- covariance and eigen-structure ---------------------------------------------------------


def autocorrelation(snapshots, wcfg: WaveformConfig | None = None, normalize: bool = True) -> np.ndarray:
    """``Y Y^H / (N_c N_s)``; the normalisation does not move any estimate."""
    y = snapshots.entries if isinstance(snapshots, ArraySnapshots) else np.asarray(snapshots)
    if y.size == 0:
        raise DomainError("empty snapshot matrix")
    r = y @ y.conj().T
    if normalize:
        if wcfg is None:
            raise ValueError("normalisation needs the waveform dimensions")
        r = r / (wcfg.n_subcarriers * wcfg.n_symbols)
    return r


def hermitian_eig(matrix, atol: float = 1e-10):
    """Eigenvalues in descending order with the matching orthonormal eigenvectors.

    Accepts a stack ``(..., n, n)``. Raises :class:`DomainError` when the
    input is not Hermitian to ``atol`` relative to its largest entry.
    """
    a = np.asarray(matrix)
    scale = max(np.max(np.abs(a)), 1.0) if a.size else 1.0
    if np.max(np.abs(a - np.conj(np.swapaxes(a, -1, -2)))) > atol * scale:
        raise DomainError("matrix is not Hermitian")
    w, v = np.linalg.eigh(a)
    # stable descending sort: tied eigenvalues keep ascending index order
    order = np.argsort(-w, axis=-1, kind="stable")
    return np.take_along_axis(w, order, -1), np.take_along_axis(v, order[..., None, :], -1)


def noise_gram_from_covariance(cov, signal_dim: int = 1, kind: str = "angle") -> NoiseSubspaceGram:
    if signal_dim != 1:
        raise NotImplementedError("only a single target is supported")
    w, v = hermitian_eig(cov)
    if w.shape[-1] > 1 and abs(w[0] - w[1]) <= 1e-12 * max(abs(w[0]), 1.0):
        # the stable sort in hermitian_eig puts the lowest index first
        warnings.warn("top eigenvalues tie; signal subspace is ill-defined", DegenerateSpectrumWarning)
    noise = v[:, signal_dim:]
    return NoiseSubspaceGram(noise @ noise.conj().T, kind, 1)


def rank1_noise_gram(snapshot, kind: str = "range") -> NoiseSubspaceGram:
    """Noise projector of ``y y^H`` without an eigendecomposition: ``I - y y^H / |y|^2``."""
    y = np.asarray(snapshot, dtype=complex).ravel()
    nrm2 = np.vdot(y, y).real
    if nrm2 == 0.0:
        raise DomainError("zero snapshot has no signal subspace")
    return NoiseSubspaceGram(np.eye(y.size) - np.outer(y, y.conj()) / nrm2, kind, 1)


def rank1_noise_gram_sum(columns, kind: str) -> NoiseSubspaceGram:
    """Sum of :func:`rank1_noise_gram` over the columns of ``columns``."""
    y = np.asarray(columns, dtype=complex)
    nrm = np.linalg.norm(y, axis=0)
    if np.any(nrm == 0.0):
        raise DomainError("zero snapshot has no signal subspace")
    yn = y / nrm
    n = y.shape[1]
    return NoiseSubspaceGram(n * np.eye(y.shape[0]) - yn @ yn.conj().T, kind, n)


def accumulate_grams(grams: Sequence[NoiseSubspaceGram]) -> NoiseSubspaceGram:
    grams = list(grams)
    if not grams:
        raise ValueError("nothing to accumulate")
    kind, dim = grams[0].kind, grams[0].dim
    for g in grams[1:]:
        if g.kind != kind or g.dim != dim:
            raise DomainError(f"cannot add {g.kind}/{g.dim} gram to {kind}/{dim}")
    total = np.sum([g.matrix for g in grams], axis=0)
    return NoiseSubspaceGram(total, kind, sum(g.count for g in grams))


# -- spectra ----------------------------------------------------------------------------------


def quadratic_form(gram, vectors) -> np.ndarray:
    """Real part of ``k^H G k`` for every row ``k`` of ``vectors`` (reference path)."""
    g = gram.matrix if isinstance(gram, NoiseSubspaceGram) else np.asarray(gram)
    k = np.asarray(vectors)
    return np.real(np.sum((k.conj() @ g) * k, axis=-1))


def _diagonal_sums(g: np.ndarray) -> np.ndarray:
    """``s[d] = sum_m G[m + d, m]`` for d = 0..n-1 (lower diagonals)."""
    n = g.shape[0]
    return np.array([np.trace(g, offset=-d) for d in range(n)])


class ToeplitzForm:
    """Evaluates ``k^H G k`` for ``k_m = exp(j w m)`` in O(n) per point.

    ``k^H G k = s_0 + 2 Re sum_{d>=1} s_d exp(-j w d)`` where ``s_d`` is the
    sum of the d-th lower diagonal of the Hermitian ``G``.
    """

    def __init__(self, g: np.ndarray):
        self.sums = _diagonal_sums(np.asarray(g))

    def __call__(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        z = np.exp(-1j * w)
        acc = np.zeros(w.shape, dtype=complex)
        for s in self.sums[:0:-1]:
            acc = (acc + s) * z
        return self.sums[0].real + 2.0 * acc.real


class AngleForm:
    """Evaluates ``k_a^H G k_a`` through the 2-D difference co-array.

    For a UPA the quadratic form only depends on element index differences,
    so it collapses to a (2M_r-1) x (2M_c-1) coefficient table.
    """

    def __init__(self, g: np.ndarray, geom: ArrayGeometry, convention: str = "physical"):
        f, gi = geom.element_indices()
        df = f[:, None] - f[None, :]
        dg = gi[:, None] - gi[None, :]
        coef = np.zeros((2 * geom.rows - 1, 2 * geom.cols - 1), dtype=complex)
        np.add.at(coef, (df + geom.rows - 1, dg + geom.cols - 1), np.asarray(g))
        self.coef = coef
        self.df = np.arange(-(geom.rows - 1), geom.rows)
        self.dg = np.arange(-(geom.cols - 1), geom.cols)
        self.ax = 2.0 * np.pi * geom.col_spacing / geom.wavelength
        self.ay = 2.0 * np.pi * geom.row_spacing / geom.wavelength
        self.convention = convention

    def __call__(self, azimuth, elevation) -> np.ndarray:
        from .scene import direction_cosines

        u, v = direction_cosines(azimuth, elevation, self.convention)
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        shape = u.shape
        ef = np.exp(-1j * self.ax * u.reshape(-1, 1) * self.df)
        eg = np.exp(-1j * self.ay * v.reshape(-1, 1) * self.dg)
        val = np.sum((ef @ self.coef) * eg, axis=-1)
        return val.real.reshape(shape)


def _reciprocal(denominator):
    return 1.0 / np.maximum(denominator, DENOMINATOR_FLOOR)


def angle_spectrum(gram: NoiseSubspaceGram, azimuth, elevation, geom: ArrayGeometry,
                   convention: str = "physical"):
    if gram.kind != "angle":
        raise DomainError("angle spectrum needs an angle gram")
    k = steering_vector(azimuth, elevation, geom, convention)
    return _reciprocal(quadratic_form(gram, k))


def range_spectrum(gram: NoiseSubspaceGram, rng_m, wcfg: WaveformConfig):
    if gram.kind != "range":
        raise DomainError("range spectrum needs a range gram")
    # k_d = exp(-j w m): evaluate the form at -w
    return _reciprocal(ToeplitzForm(gram.matrix)(-_range_phase_step(wcfg, rng_m)))


def velocity_spectrum(gram: NoiseSubspaceGram, speed, wcfg: WaveformConfig):
    if gram.kind != "velocity":
        raise DomainError("velocity spectrum needs a velocity gram")
    return _reciprocal(ToeplitzForm(gram.matrix)(_doppler_phase_step(wcfg, speed)))


# -- peak search ----------------------------------------------------------------------------------


def _peak_to_mean(denominators) -> float:
    p = _reciprocal(denominators)
    return float(p.max() / p.mean())


def _search_1d(denominator, grid: AxisGrid) -> Peak:
    coarse = grid.coarse_points()
    d0 = denominator(coarse)
    center = coarse[int(np.argmin(d0))]
    fine = grid.refine_points(center)
    best = float(fine[int(np.argmin(denominator(fine)))])
    return Peak((best,), _peak_to_mean(d0))


def search_range(gram: NoiseSubspaceGram, wcfg: WaveformConfig, grid: AxisGrid | None = None) -> Peak:
    """Peak of the superposed range spectrum.

    Ranges beyond ``c / (2 df)`` alias to ``R mod c / (2 df)``.
    """
    if gram.kind != "range":
        raise DomainError("range search needs a range gram")
    grid = grid or PreprocessConfig().resolved_range_grid(wcfg)
    form = ToeplitzForm(gram.matrix)
    return _search_1d(lambda r: form(-_range_phase_step(wcfg, r)), grid)


def search_velocity(gram: NoiseSubspaceGram, wcfg: WaveformConfig, grid: AxisGrid | None = None) -> Peak:
    if gram.kind != "velocity":
        raise DomainError("velocity search needs a velocity gram")
    grid = grid or PreprocessConfig().velocity_grid
    form = ToeplitzForm(gram.matrix)
    return _search_1d(lambda v: form(_doppler_phase_step(wcfg, v)), grid)


def search_angle(gram: NoiseSubspaceGram, geom: ArrayGeometry, azimuth_grid: AxisGrid | None = None,
                 elevation_grid: AxisGrid | None = None, convention: str = "physical") -> Peak:
    """2-D coarse scan then local refine; returns ``Peak((azimuth, elevation))`` in radians."""
    if gram.kind != "angle":
        raise DomainError("angle search needs an angle gram")
    defaults = PreprocessConfig()
    az_grid = azimuth_grid or defaults.azimuth_grid
    el_grid = elevation_grid or defaults.elevation_grid
    form = AngleForm(gram.matrix, geom, convention)

    def scan(az_deg, el_deg):
        az, el = np.meshgrid(np.deg2rad(az_deg), np.deg2rad(el_deg), indexing="ij")
        d = form(az, el)
        i, j = np.unravel_index(int(np.argmin(d)), d.shape)
        return az_deg[i], el_deg[j], d

    az0, el0, d0 = scan(az_grid.coarse_points(), el_grid.coarse_points())
    az1, el1, _ = scan(az_grid.refine_points(az0), el_grid.refine_points(el0))
    return Peak((float(wrap_angle(np.deg2rad(az1))), float(np.deg2rad(el1))), _peak_to_mean(d0))


# -- per-BS preprocessing -----------------------------------------------------------------------------


def angle_gram_from_snapshots(snapshots: Sequence, wcfg: WaveformConfig, normalize: bool = True) -> NoiseSubspaceGram:
    """Accumulated angle gram over a stack of per-row snapshot matrices."""
    ys = np.stack([s.entries if isinstance(s, ArraySnapshots) else np.asarray(s) for s in snapshots])
    cov = ys @ np.conj(np.swapaxes(ys, -1, -2))
    if normalize:
        cov = cov / (wcfg.n_subcarriers * wcfg.n_symbols)
    w, v = hermitian_eig(cov)
    if np.any(np.abs(w[..., 0] - w[..., 1]) <= 1e-12 * np.maximum(np.abs(w[..., 0]), 1.0)):
        warnings.warn("top eigenvalues tie; signal subspace is ill-defined", DegenerateSpectrumWarning)
    noise = v[..., 1:]
    g = np.sum(noise @ np.conj(np.swapaxes(noise, -1, -2)), axis=0)
    return NoiseSubspaceGram(g, "angle", len(ys))


def build_row_snapshots(channel: ChannelMatrix, steering: np.ndarray, n_rows: int,
                        noise: NoiseModel | None = None, rng: np.random.Generator | None = None):
    if noise is not None and rng is None:
        rng = noise.generator()
    return [array_snapshots(channel, r, steering, noise, rng) for r in range(n_rows)]


def preprocess_bs(channel: ChannelMatrix, geom: ArrayGeometry, wcfg: WaveformConfig,
                  cfg: PreprocessConfig | None = None, *, snapshots=None, steering=None,
                  noise: NoiseModel | None = None, rng: np.random.Generator | None = None,
                  bs_id: int = 0) -> BsEstimate:
    """Single-BS estimation with spectral superposition.

    Angle grams come from ``cfg.n_rows_angle`` per-row UPA snapshot
    matrices: pass them as ``snapshots`` or let them be synthesised from the
    true ``steering`` vector with array noise ``noise``.  Range and velocity
    grams use the first ``n_cols_range_velocity`` columns and rows of the
    channel through the rank-1 fast path.
    """
    cfg = cfg or PreprocessConfig()
    cfg.validate(wcfg)
    c = channel.entries
    if c.shape != (wcfg.n_subcarriers, wcfg.n_symbols):
        raise DomainError(f"channel shape {c.shape} does not match the waveform config")
    if snapshots is None:
        if steering is None:
            raise ValueError("need either array snapshots or the steering vector to build them")
        snapshots = build_row_snapshots(channel, steering, cfg.n_rows_angle, noise, rng)
    elif len(snapshots) < cfg.n_rows_angle:
        raise DomainError("fewer snapshot rows than n_rows_angle")
    g_a = angle_gram_from_snapshots(snapshots[: cfg.n_rows_angle], wcfg, cfg.normalize_covariance)

    nd = cfg.n_cols_range_velocity
    g_d = rank1_noise_gram_sum(c[:, :nd], "range")
    g_v = rank1_noise_gram_sum(c[:nd, :].T, "velocity")

    pa = search_angle(g_a, geom, cfg.azimuth_grid, cfg.elevation_grid, cfg.steering_convention)
    pd = search_range(g_d, wcfg, cfg.resolved_range_grid(wcfg))
    pv = search_velocity(g_v, wcfg, cfg.velocity_grid)
    diagnostics = {
        "angle_peak_to_mean": pa.peak_to_mean,
        "range_peak_to_mean": pd.peak_to_mean,
        "velocity_peak_to_mean": pv.peak_to_mean,
    }
    return BsEstimate(bs_id, pa.location[0], pa.location[1], pd.location[0], pv.location[0],
                      g_a, g_d, g_v, diagnostics)


# -- gram artefact files ----------------------------------------------------------------------------

_HEADER = struct.Struct("<III")


def gram_to_bytes(gram: NoiseSubspaceGram) -> bytes:
    """Header ``<kind, dim, count>`` as uint32 LE, then row-major complex128 LE."""
    header = _HEADER.pack(KINDS.index(gram.kind), gram.dim, gram.count)
    return header + np.ascontiguousarray(gram.matrix, dtype="<c16").tobytes()


def gram_from_bytes(data: bytes) -> NoiseSubspaceGram:
    if len(data) < _HEADER.size:
        raise DomainError("truncated gram header")
    kind, dim, count = _HEADER.unpack_from(data)
    if kind >= len(KINDS):
        raise DomainError(f"unknown gram kind code {kind}")
    payload = data[_HEADER.size:]
    if len(payload) != dim * dim * 16:
        raise DomainError(f"gram payload holds {len(payload)} bytes, expected {dim * dim * 16}")
    m = np.frombuffer(payload, dtype="<c16").reshape(dim, dim).astype(complex)
    return NoiseSubspaceGram(m, KINDS[kind], count)


def write_gram(path, gram: NoiseSubspaceGram) -> None:
    Path(path).write_bytes(gram_to_bytes(gram))


def read_gram(path) -> NoiseSubspaceGram:
    return gram_from_bytes(Path(path).read_bytes())
