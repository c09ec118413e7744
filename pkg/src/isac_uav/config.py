"""Experiment configuration, presets and YAML ingestion."""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from .exceptions import ConfigError, DomainError
from .fusion import POSITION_POLICY, VELOCITY_POLICY, LatticePolicy
from .music import AxisGrid, PreprocessConfig
from .scene import ArrayGeometry, BsSite, Scenario, UavState, table1_scenario
from .waveform import WaveformConfig

ALL_METHODS = ("symbol_level", "data_level", "average", "single")
ALL_QUANTITIES = ("x", "y", "z", "v", "theta", "phi", "direction")
SWEEP_MODES = ("all", "third-bs")
DEFAULT_SWEEP_SNR_DB = {
    "all": (-15.0, -14.0, -13.0, -12.0, -11.0, -10.0),
    "third-bs": (-16.0, -15.0, -14.0, -13.0, -12.0, -11.0),
}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario = field(default_factory=table1_scenario)
    waveform: WaveformConfig = WaveformConfig(64, 64)
    preprocess: PreprocessConfig = PreprocessConfig(n_rows_angle=32)
    array_rows: int = 4
    array_cols: int = 4
    position_policy: LatticePolicy = POSITION_POLICY
    velocity_policy: LatticePolicy = VELOCITY_POLICY
    amplitude: float = 1.0
    snr_db: tuple[float, ...] = (-12.0,)
    sweep_mode: str = "all"
    sweep_snr_db: tuple[float, ...] | None = None  # None picks the mode's default points
    third_bs_base_snr_db: tuple[float, ...] = (-10.0, -12.0, -10.0, -10.0)
    varied_bs_index: int = 2
    n_trials: int = 50
    seed: int = 0
    methods: tuple[str, ...] = ALL_METHODS
    quantities: tuple[str, ...] = ALL_QUANTITIES
    n_fusion_position: int = 3
    n_fusion_velocity: int = 4
    workers: int = 1

    def __post_init__(self):
        if self.n_trials < 1:
            raise ConfigError("n_trials must be at least 1")
        if self.sweep_mode not in SWEEP_MODES:
            raise ConfigError(f"sweep_mode must be one of {SWEEP_MODES}")
        bad = set(self.methods) - set(ALL_METHODS)
        if bad:
            raise ConfigError(f"unknown methods {sorted(bad)}")
        bad = set(self.quantities) - set(ALL_QUANTITIES)
        if bad:
            raise ConfigError(f"unknown quantities {sorted(bad)}")
        n_bs = len(self.scenario.sites)
        if not 1 <= self.n_fusion_position <= n_bs:
            raise ConfigError("n_fusion_position exceeds the number of BSs")
        if not 3 <= self.n_fusion_velocity <= n_bs:
            raise ConfigError("velocity fusion needs at least 3 BSs")
        if self.n_fusion_velocity < 4:
            warnings.warn("fewer than 4 BSs give a single velocity triple", UserWarning, stacklevel=3)
        if len(self.snr_db) not in (1, n_bs):
            raise ConfigError("snr_db must be a scalar or one value per BS")
        try:
            self.preprocess.validate(self.waveform)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry.for_carrier(self.waveform.carrier_hz, self.array_rows, self.array_cols)

    def per_bs_snr(self, snr=None) -> tuple[float, ...]:
        snr = self.snr_db if snr is None else tuple(np.atleast_1d(np.asarray(snr, dtype=float)))
        n_bs = len(self.scenario.sites)
        if len(snr) == 1:
            return tuple(float(snr[0]) for _ in range(n_bs))
        if len(snr) != n_bs:
            raise ConfigError(f"need 1 or {n_bs} SNR values, got {len(snr)}")
        return tuple(float(s) for s in snr)

    @property
    def sweep_points(self) -> tuple[float, ...]:
        if self.sweep_snr_db is None:
            return DEFAULT_SWEEP_SNR_DB[self.sweep_mode]
        return tuple(float(p) for p in self.sweep_snr_db)

    def sweep_assignments(self) -> list[tuple[float, tuple[float, ...]]]:
        """``(x-axis SNR, per-BS SNRs)`` for every sweep point."""
        n_bs = len(self.scenario.sites)
        out = []
        for point in self.sweep_points:
            if self.sweep_mode == "all":
                out.append((float(point), tuple(float(point) for _ in range(n_bs))))
            else:
                base = list(self.third_bs_base_snr_db) + [-10.0] * max(0, n_bs - len(self.third_bs_base_snr_db))
                base = base[:n_bs]
                base[self.varied_bs_index] = float(point)
                out.append((float(point), tuple(base)))
        return out


def paper_preset(**overrides) -> ExperimentConfig:
    """Full reference parameters (128 x 256 channel, 100 angle rows, 300 trials)."""
    kw = dict(waveform=WaveformConfig(), preprocess=PreprocessConfig(n_rows_angle=100), n_trials=300)
    kw.update(overrides)
    return ExperimentConfig(**kw)


def desk_preset(**overrides) -> ExperimentConfig:
    """Reduced 64 x 64 channel, 32 angle rows and 50 trials."""
    kw = dict(waveform=WaveformConfig(64, 64), preprocess=PreprocessConfig(n_rows_angle=32), n_trials=50)
    kw.update(overrides)
    return ExperimentConfig(**kw)


PRESETS = {"paper": paper_preset, "desk": desk_preset}


def _tuple(value) -> tuple:
    return tuple(np.atleast_1d(np.asarray(value, dtype=float)).tolist())


def _grid(spec: dict, default: AxisGrid | None) -> AxisGrid:
    return AxisGrid(**spec) if default is None else replace(default, **spec)


def scenario_from_dict(d: dict) -> Scenario:
    try:
        coords = d["base_stations"]
        uav = d["uav"]
        sites = tuple(BsSite(i + 1, np.asarray(c, dtype=float)) for i, c in enumerate(coords))
        state = UavState(
            np.asarray(uav["position"], dtype=float),
            float(uav.get("speed", 0.0)),
            np.deg2rad(float(uav.get("azimuth_deg", 0.0))),
            np.deg2rad(float(uav.get("elevation_deg", 0.0))),
        )
        return Scenario(sites, state, name=str(d.get("name", "custom")))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario: {exc}") from None


def config_from_dict(d: dict[str, Any], preset: str = "desk") -> ExperimentConfig:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    base = PRESETS[preset]()
    kw: dict[str, Any] = {}
    d = dict(d or {})
    try:
        if "scenario" in d:
            kw["scenario"] = scenario_from_dict(d.pop("scenario"))
        wave = dict(d.pop("waveform", {}) or {})
        if "snr_db" in wave:
            kw["snr_db"] = _tuple(wave.pop("snr_db"))
        if "seed" in wave:
            kw["seed"] = int(wave.pop("seed"))
        if wave:
            kw["waveform"] = replace(base.waveform, **wave)
        arr = dict(d.pop("array", {}) or {})
        if "rows" in arr:
            kw["array_rows"] = int(arr.pop("rows"))
        if "cols" in arr:
            kw["array_cols"] = int(arr.pop("cols"))
        if arr:
            raise ConfigError(f"unknown array keys {sorted(arr)}")
        pre = dict(d.pop("preprocess", {}) or {})
        if pre:
            grids = {k: _grid(pre.pop(k), getattr(base.preprocess, k))
                     for k in ("azimuth_grid", "elevation_grid", "range_grid", "velocity_grid") if k in pre}
            kw["preprocess"] = replace(base.preprocess, **pre, **grids)
        fus = dict(d.pop("fusion", {}) or {})
        if "position" in fus:
            kw["position_policy"] = replace(base.position_policy, **fus.pop("position"))
        if "velocity" in fus:
            kw["velocity_policy"] = replace(base.velocity_policy, **fus.pop("velocity"))
        for key in ("n_fusion_position", "n_fusion_velocity"):
            if key in fus:
                kw[key] = int(fus.pop(key))
        if fus:
            raise ConfigError(f"unknown fusion keys {sorted(fus)}")
        exp = dict(d.pop("experiment", {}) or {})
        for key in ("sweep_snr_db", "third_bs_base_snr_db"):
            if key in exp:
                value = exp.pop(key)
                kw[key] = None if value is None else _tuple(value)
        for key in ("methods", "quantities"):
            if key in exp:
                kw[key] = tuple(exp.pop(key))
        for key, cast in (("n_trials", int), ("seed", int), ("workers", int), ("sweep_mode", str),
                          ("amplitude", float), ("varied_bs_index", int)):
            if key in exp:
                kw[key] = cast(exp.pop(key))
        if exp:
            raise ConfigError(f"unknown experiment keys {sorted(exp)}")
        if d:
            raise ConfigError(f"unknown top-level keys {sorted(d)}")
        return dataclasses.replace(base, **kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None, preset: str = "desk") -> ExperimentConfig:
    if path is None:
        return config_from_dict({}, preset)
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return config_from_dict(data or {}, preset)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return dataclasses.replace(cfg, **kw) if kw else cfg


def method_list(text: str | Sequence[str]) -> tuple[str, ...]:
    items = text.split(",") if isinstance(text, str) else list(text)
    return tuple(m.strip() for m in items if m.strip())


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Inverse of :func:`config_from_dict` (plain YAML/JSON types only)."""
    uav = cfg.scenario.uav
    pre = {k: v for k, v in dataclasses.asdict(cfg.preprocess).items() if v is not None}
    wave = dataclasses.asdict(cfg.waveform)
    wave.update(snr_db=list(cfg.snr_db), seed=cfg.seed)
    return {
        "scenario": {
            "name": cfg.scenario.name,
            "base_stations": [s.position.tolist() for s in cfg.scenario.sites],
            "uav": {"position": uav.position.tolist(), "speed": float(uav.speed),
                    "azimuth_deg": float(np.rad2deg(uav.azimuth)), "elevation_deg": float(np.rad2deg(uav.elevation))},
        },
        "waveform": wave,
        "array": {"rows": cfg.array_rows, "cols": cfg.array_cols},
        "preprocess": pre,
        "fusion": {
            "position": dataclasses.asdict(cfg.position_policy),
            "velocity": dataclasses.asdict(cfg.velocity_policy),
            "n_fusion_position": cfg.n_fusion_position,
            "n_fusion_velocity": cfg.n_fusion_velocity,
        },
        "experiment": {
            "n_trials": cfg.n_trials, "sweep_mode": cfg.sweep_mode, "sweep_snr_db": None if cfg.sweep_snr_db is None else list(cfg.sweep_snr_db),
            "third_bs_base_snr_db": list(cfg.third_bs_base_snr_db), "varied_bs_index": cfg.varied_bs_index,
            "methods": list(cfg.methods), "quantities": list(cfg.quantities), "workers": cfg.workers,
            "amplitude": cfg.amplitude,
        },
    }
