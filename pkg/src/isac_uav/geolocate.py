"""Single-BS position fixes and velocity recovery from three radial speeds."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import DegenerateGeometryError
from .scene import BsSite, direction_from_angles, los_unit_vector, wrap_angle

MAX_CONDITION = 1e8


@dataclass(frozen=True)
class SingleBsFix:
    bs_id: int
    position: np.ndarray


@dataclass(frozen=True)
class VelocitySolution:
    bs_triple: tuple[int, int, int]
    vector: np.ndarray

    @property
    def spherical(self) -> tuple[float, float, float]:
        return velocity_to_spherical(self.vector)


@dataclass
class VelocitySolutionSet:
    """Solutions for every non-degenerate BS triple, plus the skipped ones."""

    solutions: list[VelocitySolution]
    skipped: list[tuple[tuple[int, ...], str]] = field(default_factory=list)

    def __len__(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)

    def __getitem__(self, i):
        return self.solutions[i]


def localize_single(bs: BsSite, est) -> SingleBsFix:
    """Project the estimated range along the estimated receive direction."""
    pos = bs.position + est.range * direction_from_angles(est.azimuth, est.elevation)
    return SingleBsFix(bs.id, pos)


def velocity_to_spherical(v) -> tuple[float, float, float]:
    """Magnitude, azimuth in [-pi, pi) and elevation (positive upward).

    The zero vector maps to ``(0, 0, 0)``.
    """
    v = np.asarray(v, dtype=float)
    mag = float(np.linalg.norm(v))
    if mag == 0.0:
        return 0.0, 0.0, 0.0
    az = float(wrap_angle(np.arctan2(v[1], v[0])))
    el = float(np.arcsin(np.clip(v[2] / mag, -1.0, 1.0)))
    return mag, az, el


def solve_velocity(sites: Sequence[BsSite], anchor, radial_speeds: Sequence[float]) -> VelocitySolution:
    """Intersect the three planes ``-u_n . v = v_n``.

    ``u_n`` points from BS ``n`` to ``anchor`` (the UAV position estimate);
    the minus sign makes approaching targets carry positive radial speed.
    ``anchor`` may be one point or one point per BS.
    """
    if len(sites) != 3 or len(radial_speeds) != 3:
        raise ValueError("velocity solve needs exactly three BSs")
    anchors = np.broadcast_to(np.asarray(anchor, dtype=float), (3, 3))
    a = -np.array([los_unit_vector(s, p) for s, p in zip(sites, anchors)])
    ids = tuple(s.id for s in sites)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise DegenerateGeometryError(f"BS triple {ids} is degenerate (cond={cond:.3g})", ids)
    v = np.linalg.solve(a, np.asarray(radial_speeds, dtype=float))
    return VelocitySolution(ids, v)


def enumerate_velocity_solutions(sites: Sequence[BsSite], fixes: Sequence[SingleBsFix],
                                 estimates: Sequence) -> VelocitySolutionSet:
    """One velocity solution per 3-combination of BSs, in lexicographic id order.

    The LoS anchor of each triple is the mean of its three single-BS fixes.
    Degenerate triples are skipped and listed in ``skipped``.
    """
    if len(sites) < 3:
        raise ValueError("need at least three BSs")
    fix_by_id = {f.bs_id: f for f in fixes}
    speed_by_id = {e.bs_id: e.radial_speed for e in estimates}
    ordered = sorted(sites, key=lambda s: s.id)
    out = VelocitySolutionSet([])
    for triple in itertools.combinations(ordered, 3):
        anchor = np.mean([fix_by_id[s.id].position for s in triple], axis=0)
        try:
            sol = solve_velocity(triple, anchor, [speed_by_id[s.id] for s in triple])
        except DegenerateGeometryError as exc:
            warnings.warn(str(exc), RuntimeWarning)
            out.skipped.append((exc.bs_ids, str(exc)))
            continue
        out.solutions.append(sol)
    return out
