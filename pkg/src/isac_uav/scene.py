"""Scenario geometry: base-station sites, UAV state and radial parameters.

Conventions used throughout the package:

* azimuth ``theta`` is measured anticlockwise from +x, wrapped to [-pi, pi);
* the receive elevation of a target above the BS is negative,
  ``phi = -asin(dz / R)``, so ``phi`` lies in (-pi/2, 0);
* radial speed is positive for an approaching target (closing speed);
* the UAV velocity elevation is positive upward (a descending UAV has a
  negative velocity elevation).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import DomainError

SPEED_OF_LIGHT = 299_792_458.0


def wrap_angle(angle):
    """Wrap an angle (scalar or array) into [-pi, pi)."""
    return (np.asarray(angle, dtype=float) + np.pi) % (2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class BsSite:
    id: int
    position: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise DomainError(f"BS {self.id} has non-finite coordinates")
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class UavState:
    """Ground-truth UAV position and velocity (magnitude, azimuth, elevation)."""

    position: np.ndarray
    speed: float = 0.0
    azimuth: float = 0.0
    elevation: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise DomainError("UAV position must be finite")
        if not -np.pi / 2 < self.elevation < np.pi / 2 and self.speed != 0:
            raise DomainError("UAV velocity elevation must lie in (-pi/2, pi/2)")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "azimuth", float(wrap_angle(self.azimuth)))

    @property
    def velocity(self) -> np.ndarray:
        return spherical_to_cartesian(self.speed, self.azimuth, self.elevation)


@dataclass(frozen=True)
class RadialParams:
    range: float
    azimuth: float
    elevation: float
    radial_speed: float = 0.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array placed parallel to the xoy plane.

    ``col_spacing`` pairs with the row index and ``row_spacing`` with the
    column index in the path-difference formula; both default to half a
    wavelength so the distinction rarely matters.
    """

    rows: int = 4
    cols: int = 4
    wavelength: float = SPEED_OF_LIGHT / 24e9
    row_spacing: float | None = None
    col_spacing: float | None = None

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise DomainError("array needs at least 2 rows and 2 columns")
        if self.row_spacing is None:
            object.__setattr__(self, "row_spacing", self.wavelength / 2)
        if self.col_spacing is None:
            object.__setattr__(self, "col_spacing", self.wavelength / 2)

    @property
    def n_elements(self) -> int:
        return self.rows * self.cols

    @classmethod
    def for_carrier(cls, carrier_hz: float, rows: int = 4, cols: int = 4) -> "ArrayGeometry":
        return cls(rows=rows, cols=cols, wavelength=SPEED_OF_LIGHT / carrier_hz)

    def element_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Zero-based (row, col) offsets in steering-vector order.

        The row index varies fastest: (1,1), (2,1), ..., (M_r,1), (1,2), ...
        """
        g, f = np.meshgrid(np.arange(self.cols), np.arange(self.rows), indexing="ij")
        return f.ravel(), g.ravel()


@dataclass(frozen=True)
class Scenario:
    sites: tuple[BsSite, ...]
    uav: UavState
    name: str = field(default="custom")

    def __post_init__(self):
        sites = tuple(self.sites)
        ids = [s.id for s in sites]
        if len(set(ids)) != len(ids):
            raise DomainError(f"duplicate BS ids: {ids}")
        for s in sites:
            if self.uav.position[2] <= s.position[2]:
                raise DomainError(f"UAV must fly above BS {s.id}")
        object.__setattr__(self, "sites", sites)

    def site(self, bs_id: int) -> BsSite:
        for s in self.sites:
            if s.id == bs_id:
                return s
        raise KeyError(bs_id)


TABLE1_BS_XY = ((80.0, 50.0), (-30.0, 85.0), (40.0, -60.0), (-10.0, -70.0))
TABLE1_BS_HEIGHT = 20.0
TABLE1_UAV_POSITION = (-7.2873, 6.8487, 39.2624)
TABLE1_UAV_VELOCITY = (23.0, np.deg2rad(70.0), np.deg2rad(-40.0))


def table1_scenario() -> Scenario:
    """Four BSs at 20 m height and the reference UAV state."""
    sites = tuple(
        BsSite(i + 1, np.array([x, y, TABLE1_BS_HEIGHT])) for i, (x, y) in enumerate(TABLE1_BS_XY)
    )
    speed, az, el = TABLE1_UAV_VELOCITY
    uav = UavState(np.array(TABLE1_UAV_POSITION), speed, az, el)
    return Scenario(sites, uav, name="table1")


def spherical_to_cartesian(magnitude, azimuth, elevation) -> np.ndarray:
    """Velocity-style spherical to Cartesian (elevation positive upward)."""
    ce = np.cos(elevation)
    return magnitude * np.array([np.cos(azimuth) * ce, np.sin(azimuth) * ce, np.sin(elevation)])


def los_unit_vector(bs: BsSite, point) -> np.ndarray:
    """Unit vector pointing from the BS towards ``point``."""
    d = np.asarray(point, dtype=float) - bs.position
    norm = np.linalg.norm(d)
    if norm == 0.0:
        raise DomainError(f"point coincides with BS {bs.id}")
    return d / norm


def direction_from_angles(azimuth, elevation) -> np.ndarray:
    """BS-to-target unit vector for receive angles (elevation negative upward)."""
    ce = np.cos(elevation)
    return np.array([np.cos(azimuth) * ce, np.sin(azimuth) * ce, -np.sin(elevation)])


def radial_params(bs: BsSite, uav: UavState) -> RadialParams:
    d = uav.position - bs.position
    rng = float(np.linalg.norm(d))
    if rng == 0.0:
        raise DomainError(f"UAV coincides with BS {bs.id}")
    azimuth = float(wrap_angle(np.arctan2(d[1], d[0])))
    elevation = float(-np.arctan2(d[2], np.hypot(d[0], d[1])))
    radial_speed = float(-np.dot(d / rng, uav.velocity))
    return RadialParams(rng, azimuth, elevation, radial_speed)


def radial_params_batch(bs_position, points):
    """Vectorised (range, azimuth, elevation) for an (..., 3) array of points."""
    d = np.asarray(points, dtype=float) - np.asarray(bs_position, dtype=float)
    rng = np.linalg.norm(d, axis=-1)
    azimuth = wrap_angle(np.arctan2(d[..., 1], d[..., 0]))
    with np.errstate(invalid="ignore", divide="ignore"):
        elevation = -np.arctan2(d[..., 2], np.hypot(d[..., 0], d[..., 1]))
    return rng, azimuth, elevation


def quadrant_map(azimuth, elevation):
    """Quadrant branch table of the UPA steering model.

    Returns ``(k, theta, phi)``; works elementwise on arrays. Branch
    endpoints go to the branch whose lower bound is inclusive.
    """
    az = wrap_angle(azimuth)
    el = np.asarray(elevation, dtype=float)
    az, el = np.broadcast_arrays(az, el)
    half = np.pi / 2
    q1 = (az >= 0) & (az < half)
    q2 = az >= half
    q3 = az < -half
    k = np.where(q2 | q3, -1, 1)
    theta = np.select([q1, q2, q3], [az, np.pi - az, np.pi + az], default=-az)
    phi = np.select([q1, q2, q3], [el, np.pi - el, np.pi + el], default=-el)
    if k.ndim == 0:
        return int(k), float(theta), float(phi)
    return k, theta, phi


def direction_cosines(azimuth, elevation, convention: str = "physical"):
    """Signed (u, v) such that the element phase is 2*pi*(f*dx*u + g*dy*v)/lambda.

    ``"physical"`` evaluates cos/sin of the true angles. ``"paper"`` applies
    :func:`quadrant_map` literally, which folds every azimuth onto the first
    quadrant (u, v >= 0) and therefore cannot tell the four quadrants apart.
    """
    if convention == "physical":
        az = np.asarray(azimuth, dtype=float)
        ce = np.cos(np.asarray(elevation, dtype=float))
        return np.cos(az) * ce, np.sin(az) * ce
    if convention == "paper":
        k, theta, phi = quadrant_map(azimuth, elevation)
        cp = np.cos(phi)
        return k * np.cos(theta) * cp, k * np.sin(theta) * cp
    raise ValueError(f"unknown steering convention {convention!r}")


def element_path_difference(f: int, g: int, azimuth, elevation, geom: ArrayGeometry,
                            convention: str = "physical") -> float:
    """Path difference (metres) of element (f, g), 1-based, w.r.t. element (1, 1).

    For the ``"paper"`` convention the branch sign ``k`` is folded in, so the
    element phase is always ``2*pi*dd/lambda``.
    """
    if not (1 <= f <= geom.rows and 1 <= g <= geom.cols):
        raise IndexError(f"element ({f}, {g}) outside {geom.rows}x{geom.cols} array")
    u, v = direction_cosines(azimuth, elevation, convention)
    return (f - 1) * geom.col_spacing * u + (g - 1) * geom.row_spacing * v


def sites_from_xyz(coords: Sequence[Sequence[float]]) -> tuple[BsSite, ...]:
    return tuple(BsSite(i + 1, np.asarray(c, dtype=float)) for i, c in enumerate(coords))
