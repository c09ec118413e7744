"""Multi-BS fusion: symbol-level lattice search and the two baselines.

The symbol-level weight of a lattice point sums each BS's spectra (built
from its noise-subspace Grams) evaluated at the parameters that point
would induce at that BS; the point with the largest weight wins.  The
data-level baseline instead accumulates absolute differences to each
BS's point estimates and keeps the smallest; the average baseline is a
plain componentwise mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import DomainError
from .geolocate import SingleBsFix, VelocitySolution, velocity_to_spherical
from .music import DENOMINATOR_FLOOR, AngleForm, BsEstimate, ToeplitzForm
from .scene import ArrayGeometry, BsSite, los_unit_vector, radial_params_batch, wrap_angle
from .waveform import WaveformConfig, _doppler_phase_step, _range_phase_step

CHUNK = 1 << 16


@dataclass(frozen=True)
class Lattice:
    """Cubic grid ``center + spacing * (i - n)`` with ``i = 0..2n`` per axis."""

    center: np.ndarray
    half_counts: tuple[int, int, int]
    spacing: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        object.__setattr__(self, "spacing", np.broadcast_to(np.asarray(self.spacing, dtype=float), (3,)).copy())
        object.__setattr__(self, "half_counts", tuple(int(n) for n in self.half_counts))
        if np.any(self.spacing <= 0):
            raise DomainError("lattice spacing must be positive")
        if any(n < 0 for n in self.half_counts):
            raise DomainError("negative lattice extent")

    @classmethod
    def from_half_width(cls, center, half_width, spacing) -> "Lattice":
        hw = np.broadcast_to(np.asarray(half_width, dtype=float), (3,))
        sp = np.broadcast_to(np.asarray(spacing, dtype=float), (3,))
        n = np.ceil(hw / sp - 1e-9).astype(int)
        return cls(center, tuple(n), sp)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(2 * n + 1 for n in self.half_counts)

    @property
    def half_width(self) -> np.ndarray:
        return self.spacing * np.array(self.half_counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> list[np.ndarray]:
        return [c + s * np.arange(-n, n + 1) for c, s, n in zip(self.center, self.spacing, self.half_counts)]

    def point(self, index: int) -> np.ndarray:
        idx = np.unravel_index(index, self.shape)
        return np.array([ax[i] for ax, i in zip(self.axes(), idx)])

    def points(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Points ``start..stop`` in row-major order from the most negative corner."""
        stop = self.size if stop is None else min(stop, self.size)
        idx = np.unravel_index(np.arange(start, stop), self.shape)
        return np.stack([ax[i] for ax, i in zip(self.axes(), idx)], axis=-1)

    def contains(self, p, atol: float = 1e-9) -> bool:
        return bool(np.all(np.abs(np.asarray(p) - self.center) <= self.half_width + atol))

    def nearest_index(self, p) -> int:
        rel = np.rint((np.asarray(p, dtype=float) - self.center) / self.spacing).astype(int)
        rel = np.clip(rel, -np.array(self.half_counts), np.array(self.half_counts))
        return int(np.ravel_multi_index(tuple(rel + np.array(self.half_counts)), self.shape))


@dataclass(frozen=True)
class LatticePolicy:
    spacing: float = 0.1
    margin: float = 0.5
    floor: float = 1.0
    two_stage: bool = False
    refine_factor: int = 5


POSITION_POLICY = LatticePolicy(0.1, 0.5, 1.0)
VELOCITY_POLICY = LatticePolicy(0.05, 0.5, 0.5)


@dataclass
class FusionResult:
    method: str
    position: np.ndarray | None = None
    velocity: np.ndarray | None = None
    weight: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def velocity_spherical(self) -> tuple[float, float, float] | None:
        return None if self.velocity is None else velocity_to_spherical(self.velocity)

    def record(self) -> dict:
        """Flat record ``{method, x, y, z, v, theta_deg, phi_deg, weight}``."""
        nan = float("nan")
        x, y, z = self.position if self.position is not None else (nan, nan, nan)
        v, th, ph = self.velocity_spherical or (nan, nan, nan)
        return {"method": self.method, "x": float(x), "y": float(y), "z": float(z), "v": float(v),
                "theta_deg": float(np.rad2deg(th)), "phi_deg": float(np.rad2deg(ph)),
                "weight": float(self.weight)}


def build_lattice(estimates: Sequence, spacing: float, policy: LatticePolicy | None = None,
                  half_width=None) -> Lattice:
    """Cube centred on the mean estimate.

    Per-axis half-width is ``max(spread + margin, floor)`` where ``spread``
    is the largest deviation of any estimate from the mean, unless
    ``half_width`` is given explicitly.
    """
    pts = np.atleast_2d(np.asarray(estimates, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("need at least one estimate")
    center = pts.mean(axis=0)
    if half_width is None:
        policy = policy or LatticePolicy(spacing=spacing)
        spread = np.max(np.abs(pts - center), axis=0)
        half_width = np.maximum(spread + policy.margin, policy.floor)
    return Lattice.from_half_width(center, half_width, spacing)


def _argbest(lattice: Lattice, weight_fn, maximize: bool):
    """Chunked scan; ties resolve to the lowest enumeration index."""
    best_val, best_idx = None, -1
    lo, hi = np.inf, -np.inf
    for start in range(0, lattice.size, CHUNK):
        w = weight_fn(lattice.points(start, start + CHUNK))
        i = int(np.argmax(w) if maximize else np.argmin(w))
        lo, hi = min(lo, float(w.min())), max(hi, float(w.max()))
        v = float(w[i])
        if best_val is None or (v > best_val if maximize else v < best_val):
            best_val, best_idx = v, start + i
    return best_idx, best_val, {"weight_min": lo, "weight_max": hi, "n_points": lattice.size}


def _search(lattice: Lattice, weight_fn, maximize: bool, policy: LatticePolicy | None):
    idx, val, diag = _argbest(lattice, weight_fn, maximize)
    winner = lattice.point(idx)
    diag["index"] = idx
    if policy is not None and policy.two_stage:
        fine = Lattice(winner, (policy.refine_factor,) * 3, lattice.spacing / policy.refine_factor)
        fidx, val, fdiag = _argbest(fine, weight_fn, maximize)
        winner = fine.point(fidx)
        diag["refined"] = fdiag
    return winner, val, diag


def _check_dims(est: BsEstimate, geom: ArrayGeometry | None, wcfg: WaveformConfig, need_angle: bool):
    if need_angle and est.angle_gram.dim != geom.n_elements:
        raise DomainError(f"BS {est.bs_id}: angle gram is {est.angle_gram.dim}, array has {geom.n_elements}")
    if need_angle and est.range_gram.dim != wcfg.n_subcarriers:
        raise DomainError(f"BS {est.bs_id}: range gram does not match {wcfg.n_subcarriers} subcarriers")
    if not need_angle and est.velocity_gram.dim != wcfg.n_symbols:
        raise DomainError(f"BS {est.bs_id}: velocity gram does not match {wcfg.n_symbols} symbols")


def _pair(sites: Sequence[BsSite], estimates: Sequence[BsEstimate]):
    by_id = {s.id: s for s in sites}
    try:
        return [(by_id[e.bs_id], e) for e in estimates]
    except KeyError as exc:
        raise DomainError(f"no site for BS {exc.args[0]}") from None


def symbol_level_localize(lattice: Lattice, sites: Sequence[BsSite], estimates: Sequence[BsEstimate],
                          geom: ArrayGeometry, wcfg: WaveformConfig, convention: str = "physical",
                          policy: LatticePolicy | None = None) -> FusionResult:
    """Lattice point maximising the summed range and angle spectra over BSs."""
    terms = []
    for site, est in _pair(sites, estimates):
        _check_dims(est, geom, wcfg, need_angle=True)
        terms.append((site.position, ToeplitzForm(est.range_gram.matrix), AngleForm(est.angle_gram.matrix, geom, convention)))

    def weight(pts):
        w = np.zeros(len(pts))
        for pos, rform, aform in terms:
            r, az, el = radial_params_batch(pos, pts)
            w += 1.0 / np.maximum(rform(-_range_phase_step(wcfg, r)), DENOMINATOR_FLOOR)
            w += 1.0 / np.maximum(aform(az, el), DENOMINATOR_FLOOR)
        return w

    winner, val, diag = _search(lattice, weight, True, policy)
    return FusionResult("symbol_level", position=winner, weight=val, diagnostics=diag)


def _projection_matrix(sites: Sequence[BsSite], anchor) -> np.ndarray:
    """Rows ``-u_n`` so that ``rows @ v`` gives closing speeds."""
    return -np.array([los_unit_vector(s, anchor) for s in sites])


def symbol_level_velocity(lattice: Lattice, sites: Sequence[BsSite], anchor, estimates: Sequence[BsEstimate],
                          wcfg: WaveformConfig, policy: LatticePolicy | None = None) -> FusionResult:
    """Velocity-terminal lattice point maximising the summed Doppler spectra."""
    pairs = _pair(sites, estimates)
    for _, est in pairs:
        _check_dims(est, None, wcfg, need_angle=False)
    proj = _projection_matrix([s for s, _ in pairs], anchor)
    forms = [ToeplitzForm(e.velocity_gram.matrix) for _, e in pairs]

    def weight(pts):
        speeds = pts @ proj.T
        w = np.zeros(len(pts))
        for n, form in enumerate(forms):
            w += 1.0 / np.maximum(form(_doppler_phase_step(wcfg, speeds[:, n])), DENOMINATOR_FLOOR)
        return w

    if policy is not None and policy.two_stage:
        winner, val, diag = _search(lattice, weight, True, policy)
    else:
        field_ = _separable_velocity_weights(lattice, proj, forms, wcfg)
        idx = int(np.argmax(field_))
        winner, val = lattice.point(idx), float(field_.ravel()[idx])
        diag = {"weight_min": float(field_.min()), "weight_max": val, "n_points": lattice.size, "index": idx}
    return FusionResult("symbol_level", velocity=winner, weight=val, diagnostics=diag)


def _separable_velocity_weights(lattice: Lattice, proj: np.ndarray, forms, wcfg: WaveformConfig) -> np.ndarray:
    """Whole weight field of :func:`symbol_level_velocity` via matrix products.

    A radial speed is affine in the lattice indices, so every Doppler term
    ``exp(-j w d s)`` factors into per-axis tables and the Toeplitz sum
    becomes a (nx*ny, n) @ (n, nz) product.
    """
    ax, ay, az = lattice.axes()
    nx, ny, nz = lattice.shape
    out = np.zeros(lattice.shape)
    rows_per_chunk = max(1, CHUNK // max(ny, 1))
    for form, a in zip(forms, proj):
        s = form.sums
        d = np.arange(1, len(s))
        step = _doppler_phase_step(wcfg, 1.0)
        ex = np.exp(-1j * step * np.outer(a[0] * ax, d))
        ey = np.exp(-1j * step * np.outer(a[1] * ay, d))
        ez = np.exp(-1j * step * np.outer(a[2] * az, d)) * s[1:]
        for i0 in range(0, nx, rows_per_chunk):
            exy = (ex[i0:i0 + rows_per_chunk, None, :] * ey[None, :, :]).reshape(-1, len(d))
            val = s[0].real + 2.0 * (exy @ ez.T).real
            out[i0:i0 + rows_per_chunk] += 1.0 / np.maximum(val.reshape(-1, ny, nz), DENOMINATOR_FLOOR)
    return out


def data_level_localize(lattice: Lattice, estimates: Sequence, sites: Sequence[BsSite],
                        unit_weights=(1.0, 1.0, 1.0), policy: LatticePolicy | None = None) -> FusionResult:
    """Lattice point minimising ``sum |dR| + |d_theta| + |d_phi|`` (metres and radians).

    ``unit_weights`` scales the three terms; the default adds them as-is.
    Azimuth differences are wrapped to [-pi, pi).
    """
    wr, wa, we = unit_weights
    pairs = _pair(sites, estimates)

    def weight(pts):
        w = np.zeros(len(pts))
        for site, est in pairs:
            r, az, el = radial_params_batch(site.position, pts)
            w += wr * np.abs(est.range - r)
            w += wa * np.abs(wrap_angle(est.azimuth - az))
            w += we * np.abs(est.elevation - el)
        return w

    winner, val, diag = _search(lattice, weight, False, policy)
    return FusionResult("data_level", position=winner, weight=val, diagnostics=diag)


def data_level_velocity(lattice: Lattice, estimates: Sequence, sites: Sequence[BsSite], anchor,
                        policy: LatticePolicy | None = None) -> FusionResult:
    pairs = _pair(sites, estimates)
    proj = _projection_matrix([s for s, _ in pairs], anchor)
    measured = np.array([e.radial_speed for _, e in pairs])

    def weight(pts):
        return np.abs(pts @ proj.T - measured).sum(axis=1)

    winner, val, diag = _search(lattice, weight, False, policy)
    return FusionResult("data_level", velocity=winner, weight=val, diagnostics=diag)


def average_fusion_position(fixes: Sequence[SingleBsFix]) -> FusionResult:
    if not fixes:
        raise ValueError("no fixes to average")
    return FusionResult("average", position=np.mean([f.position for f in fixes], axis=0))


def average_fusion_velocity(solutions: Sequence[VelocitySolution]) -> FusionResult:
    if not solutions:
        raise ValueError("no velocity solutions to average")
    return FusionResult("average", velocity=np.mean([s.vector for s in solutions], axis=0))
