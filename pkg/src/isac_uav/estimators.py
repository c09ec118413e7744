"""scikit-learn style front ends for per-BS preprocessing and multi-BS fusion.

``BsPreprocessor`` fits one BS's channel matrix (plus its UPA snapshots)
and exposes the superposed-MUSIC estimates as fitted attributes;
``MultiBsFusion`` fits a list of those estimates and exposes the fused
position and velocity.  Both get ``get_params``/``set_params``/``clone``
from :class:`sklearn.base.BaseEstimator`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_complex_matrix, check_positions, check_snapshot_stack
from .fusion import (
    LatticePolicy,
    average_fusion_position,
    average_fusion_velocity,
    build_lattice,
    data_level_localize,
    data_level_velocity,
    symbol_level_localize,
    symbol_level_velocity,
)
from .geolocate import enumerate_velocity_solutions, localize_single
from .music import PreprocessConfig, preprocess_bs
from .scene import ArrayGeometry, BsSite
from .waveform import ChannelMatrix, WaveformConfig


class BsPreprocessor(BaseEstimator):
    """Single-BS angle, range and radial-speed estimation.

    Parameters mirror :class:`~isac_uav.waveform.WaveformConfig` and
    :class:`~isac_uav.music.PreprocessConfig`. After :meth:`fit`:

    ``azimuth_``, ``elevation_`` (rad), ``range_`` (m), ``radial_speed_`` (m/s)
        Peak locations of the superposed spectra.
    ``estimate_``
        The full :class:`~isac_uav.music.BsEstimate`, Grams included.
    """

    def __init__(self, carrier_hz=24e9, subcarrier_spacing_hz=240e3, symbol_duration_s=5.208e-6,
                 array_rows=4, array_cols=4, n_rows_angle=100, n_cols_range_velocity=20,
                 steering_convention="physical", bs_id=0):
        self.carrier_hz = carrier_hz
        self.subcarrier_spacing_hz = subcarrier_spacing_hz
        self.symbol_duration_s = symbol_duration_s
        self.array_rows = array_rows
        self.array_cols = array_cols
        self.n_rows_angle = n_rows_angle
        self.n_cols_range_velocity = n_cols_range_velocity
        self.steering_convention = steering_convention
        self.bs_id = bs_id

    def _configs(self, shape):
        wcfg = WaveformConfig(shape[0], shape[1], self.carrier_hz, self.subcarrier_spacing_hz, self.symbol_duration_s)
        pcfg = PreprocessConfig(n_rows_angle=self.n_rows_angle, n_cols_range_velocity=self.n_cols_range_velocity,
                                steering_convention=self.steering_convention)
        geom = ArrayGeometry.for_carrier(self.carrier_hz, self.array_rows, self.array_cols)
        return wcfg, pcfg, geom

    def fit(self, X, y=None, snapshots=None):
        """Fit on an ``(N_c, N_s)`` channel matrix.

        ``snapshots`` is a sequence of at least ``n_rows_angle`` UPA snapshot
        matrices of shape ``(array_rows * array_cols, N_s)``.
        """
        X = check_complex_matrix(X, "channel")
        wcfg, pcfg, geom = self._configs(X.shape)
        if snapshots is None:
            raise ValueError("BsPreprocessor.fit needs the UPA snapshots for angle estimation")
        ys = check_snapshot_stack(snapshots, geom.n_elements, X.shape[1])
        est = preprocess_bs(ChannelMatrix(X), geom, wcfg, pcfg, snapshots=list(ys), bs_id=self.bs_id)
        self.estimate_ = est
        self.azimuth_ = est.azimuth
        self.elevation_ = est.elevation
        self.range_ = est.range
        self.radial_speed_ = est.radial_speed
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X=None):
        """``[azimuth, elevation, range, radial_speed]`` of the fitted channel."""
        check_is_fitted(self, "estimate_")
        return np.array([self.azimuth_, self.elevation_, self.range_, self.radial_speed_])


class MultiBsFusion(BaseEstimator):
    """Fuse per-BS estimates into one position and velocity.

    ``method`` is ``"symbol_level"`` (lattice search over summed spectra),
    ``"data_level"`` (lattice search over summed absolute errors) or
    ``"average"``.
    """

    def __init__(self, method="symbol_level", n_fusion_position=3, n_fusion_velocity=4,
                 position_spacing=0.1, velocity_spacing=0.05, margin=0.5, position_floor=1.0,
                 velocity_floor=0.5, carrier_hz=24e9, subcarrier_spacing_hz=240e3,
                 symbol_duration_s=5.208e-6, array_rows=4, array_cols=4, steering_convention="physical"):
        self.method = method
        self.n_fusion_position = n_fusion_position
        self.n_fusion_velocity = n_fusion_velocity
        self.position_spacing = position_spacing
        self.velocity_spacing = velocity_spacing
        self.margin = margin
        self.position_floor = position_floor
        self.velocity_floor = velocity_floor
        self.carrier_hz = carrier_hz
        self.subcarrier_spacing_hz = subcarrier_spacing_hz
        self.symbol_duration_s = symbol_duration_s
        self.array_rows = array_rows
        self.array_cols = array_cols
        self.steering_convention = steering_convention

    def fit(self, X, y=None, sites=None):
        """``X`` is a list of :class:`~isac_uav.music.BsEstimate`, ``sites`` the matching BSs."""
        if self.method not in ("symbol_level", "data_level", "average"):
            raise ValueError(f"unknown fusion method {self.method!r}")
        estimates = list(X)
        if sites is None:
            raise ValueError("MultiBsFusion.fit needs the BS sites")
        sites = [s if isinstance(s, BsSite) else BsSite(i + 1, check_positions(s)[0]) for i, s in enumerate(sites)]
        by_id = {s.id: s for s in sites}
        if len(estimates) < max(self.n_fusion_velocity, self.n_fusion_position):
            raise ValueError("fewer estimates than fusion BSs")
        n_c = estimates[0].range_gram.dim
        n_s = estimates[0].velocity_gram.dim
        wcfg = WaveformConfig(n_c, n_s, self.carrier_hz, self.subcarrier_spacing_hz, self.symbol_duration_s)
        geom = ArrayGeometry.for_carrier(self.carrier_hz, self.array_rows, self.array_cols)

        fixes = [localize_single(by_id[e.bs_id], e) for e in estimates]
        pos_est, pos_fixes = estimates[: self.n_fusion_position], fixes[: self.n_fusion_position]
        vel_est = estimates[: self.n_fusion_velocity]
        vel_sites = [by_id[e.bs_id] for e in vel_est]
        pos_policy = LatticePolicy(self.position_spacing, self.margin, self.position_floor)
        vel_policy = LatticePolicy(self.velocity_spacing, self.margin, self.velocity_floor)

        solutions = list(enumerate_velocity_solutions(vel_sites, fixes[: self.n_fusion_velocity], vel_est))
        if self.method == "average":
            self.position_ = average_fusion_position(pos_fixes).position
            self.velocity_ = average_fusion_velocity(solutions).velocity
        else:
            lat = build_lattice([f.position for f in pos_fixes], self.position_spacing, pos_policy)
            vlat = build_lattice([s.vector for s in solutions], self.velocity_spacing, vel_policy)
            if self.method == "symbol_level":
                self.position_ = symbol_level_localize(lat, sites, pos_est, geom, wcfg, self.steering_convention).position
                self.velocity_ = symbol_level_velocity(vlat, vel_sites, self.position_, vel_est, wcfg).velocity
            else:
                self.position_ = data_level_localize(lat, pos_est, sites).position
                self.velocity_ = data_level_velocity(vlat, vel_est, vel_sites, self.position_).velocity
        self.single_fixes_ = fixes
        self.velocity_solutions_ = solutions
        return self

    def predict(self, X=None):
        """Fused ``[x, y, z, vx, vy, vz]``."""
        check_is_fitted(self, "position_")
        return np.concatenate([self.position_, self.velocity_])
