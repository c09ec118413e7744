"""Monte Carlo trials, RMSE aggregation and result emission."""

from __future__ import annotations

import csv
import io
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ALL_QUANTITIES, ExperimentConfig
from .exceptions import DegenerateGeometryError, DomainError
from .fusion import (
    average_fusion_position,
    average_fusion_velocity,
    build_lattice,
    data_level_localize,
    data_level_velocity,
    symbol_level_localize,
    symbol_level_velocity,
)
from .geolocate import enumerate_velocity_solutions, localize_single, velocity_to_spherical
from .music import BsEstimate, preprocess_bs
from .scene import radial_params, wrap_angle
from .waveform import NoiseModel, snr_to_sigma2, steering_vector, synthesize_channel

POSITION_QUANTITIES = ("x", "y", "z")
VELOCITY_QUANTITIES = ("v", "theta", "phi", "direction")
UNITS = {"x": "m", "y": "m", "z": "m", "v": "m/s", "theta": "deg", "phi": "deg", "direction": "deg"}
CSV_COLUMNS = ("snr_db", "method", "quantity", "rmse", "n_trials")


@dataclass
class BsSummary:
    bs_id: int
    snr_db: float
    range: float
    azimuth: float
    elevation: float
    radial_speed: float


@dataclass
class TrialResult:
    trial_index: int
    snr_db: tuple[float, ...]
    estimates: list[BsSummary] = field(default_factory=list)
    position_errors: dict[str, np.ndarray] = field(default_factory=dict)
    velocity_errors: dict[str, np.ndarray] = field(default_factory=dict)
    fusion: dict[str, dict] = field(default_factory=dict)
    failed: bool = False
    message: str = ""


@dataclass(frozen=True)
class RmseRow:
    snr_db: float
    method: str
    quantity: str
    rmse: float
    n_trials: int


@dataclass
class RmseTable:
    rows: list[RmseRow] = field(default_factory=list)
    n_failed: dict[float, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def get(self, snr_db: float, method: str, quantity: str) -> float:
        for r in self.rows:
            if r.snr_db == snr_db and r.method == method and r.quantity == quantity:
                return r.rmse
        raise KeyError((snr_db, method, quantity))

    def methods(self) -> list[str]:
        return list(dict.fromkeys(r.method for r in self.rows))

    def quantities(self) -> list[str]:
        return list(dict.fromkeys(r.quantity for r in self.rows))


def rmse(errors: Sequence[float]) -> float:
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise ValueError("RMSE of an empty sample")
    return float(np.sqrt(np.mean(e**2)))


def trial_seed(master_seed: int, snr_index: int, trial_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(snr_index, trial_index))


def bs_generator(seed: np.random.SeedSequence, bs_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (bs_id,)))


def _as_seed(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def velocity_error(estimate, truth) -> np.ndarray:
    """``(dv, d_theta, d_phi, angle between directions)``; angles in degrees."""
    v, th, ph = velocity_to_spherical(estimate)
    tv, tth, tph = velocity_to_spherical(truth)
    a, b = np.asarray(estimate, float), np.asarray(truth, float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    cosang = np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0) if na > 0 and nb > 0 else 1.0
    return np.array([v - tv, np.rad2deg(wrap_angle(th - tth)), np.rad2deg(ph - tph), np.rad2deg(np.arccos(cosang))])


def estimate_all(cfg: ExperimentConfig, snr_db: Sequence[float], seed, preprocess=None) -> list[BsEstimate]:
    """Synthesise and preprocess every BS of the scenario for one trial."""
    seed = _as_seed(seed)
    geom = cfg.geometry
    preprocess = preprocess or cfg.preprocess
    out = []
    for site, snr in zip(cfg.scenario.sites, cfg.per_bs_snr(snr_db)):
        rng = bs_generator(seed, site.id)
        truth = radial_params(site, cfg.scenario.uav)
        noise = NoiseModel(float(snr_to_sigma2(snr, cfg.amplitude)))
        channel = synthesize_channel(truth, cfg.waveform, noise, cfg.amplitude, rng=rng)
        steer = steering_vector(truth.azimuth, truth.elevation, geom, preprocess.steering_convention)
        out.append(preprocess_bs(channel, geom, cfg.waveform, preprocess, steering=steer,
                                 noise=noise, rng=rng, bs_id=site.id))
    return out


def fuse_estimates(cfg: ExperimentConfig, estimates: Sequence[BsEstimate], methods=None) -> dict:
    """All enabled fusion outputs for one set of per-BS estimates.

    Returns ``{"position": {method: xyz}, "velocity": {method: vec}, "records": [...]}``.
    """
    methods = tuple(methods or cfg.methods)
    sites = cfg.scenario.sites
    site_by_id = {s.id: s for s in sites}
    fixes = [localize_single(site_by_id[e.bs_id], e) for e in estimates]
    pos_est = list(estimates[: cfg.n_fusion_position])
    pos_fixes = fixes[: cfg.n_fusion_position]
    vel_est = list(estimates[: cfg.n_fusion_velocity])
    vel_sites = [site_by_id[e.bs_id] for e in vel_est]

    position: dict[str, np.ndarray] = {}
    velocity: dict[str, np.ndarray] = {}
    records = []
    lattice = build_lattice([f.position for f in pos_fixes], cfg.position_policy.spacing, cfg.position_policy)

    sym_pos = None
    if "symbol_level" in methods or "data_level" in methods:
        sym = symbol_level_localize(lattice, sites, pos_est, cfg.geometry, cfg.waveform,
                                    cfg.preprocess.steering_convention, cfg.position_policy)
        sym_pos = sym.position
        if "symbol_level" in methods:
            position["symbol_level"] = sym.position
    if "data_level" in methods:
        position["data_level"] = data_level_localize(lattice, pos_est, sites, policy=cfg.position_policy).position
    if "average" in methods:
        position["average"] = average_fusion_position(pos_fixes).position
    if "single" in methods:
        for f in pos_fixes:
            position[f"single_bs{f.bs_id}"] = f.position

    solutions = enumerate_velocity_solutions(vel_sites, fixes[: cfg.n_fusion_velocity], vel_est)
    if len(solutions) == 0:
        raise DegenerateGeometryError("no non-degenerate BS triple for velocity", [s.id for s in vel_sites])
    anchor = sym_pos if sym_pos is not None else np.mean([f.position for f in pos_fixes], axis=0)
    vlattice = build_lattice([s.vector for s in solutions], cfg.velocity_policy.spacing, cfg.velocity_policy)
    if "symbol_level" in methods:
        velocity["symbol_level"] = symbol_level_velocity(vlattice, vel_sites, anchor, vel_est, cfg.waveform,
                                                         cfg.velocity_policy).velocity
    if "data_level" in methods:
        velocity["data_level"] = data_level_velocity(vlattice, vel_est, vel_sites, anchor, cfg.velocity_policy).velocity
    if "average" in methods:
        velocity["average"] = average_fusion_velocity(list(solutions)).velocity
    if "single" in methods:
        for s in solutions:
            velocity["single_bs" + "-".join(str(i) for i in s.bs_triple)] = s.vector

    for m in dict.fromkeys(list(position) + list(velocity)):
        rec = {"method": m}
        p = position.get(m)
        rec.update(zip(("x", "y", "z"), p.tolist() if p is not None else (float("nan"),) * 3))
        vv = velocity.get(m)
        sph = velocity_to_spherical(vv) if vv is not None else (float("nan"),) * 3
        rec.update(v=sph[0], theta_deg=float(np.rad2deg(sph[1])), phi_deg=float(np.rad2deg(sph[2])))
        records.append(rec)
    return {"position": position, "velocity": velocity, "records": records,
            "skipped_triples": solutions.skipped}


def run_trial(cfg: ExperimentConfig, snr_db: Sequence[float], seed, trial_index: int = 0) -> TrialResult:
    """One Monte Carlo trial: synthesis, preprocessing, fusion and errors.

    Deterministic for a given ``seed`` (int or ``SeedSequence``).
    """
    snr = cfg.per_bs_snr(snr_db)
    result = TrialResult(trial_index, snr)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            estimates = estimate_all(cfg, snr, seed)
            fused = fuse_estimates(cfg, estimates)
    except (DegenerateGeometryError, DomainError) as exc:
        result.failed, result.message = True, str(exc)
        return result
    result.estimates = [BsSummary(e.bs_id, s, e.range, e.azimuth, e.elevation, e.radial_speed)
                        for e, s in zip(estimates, snr)]
    truth_p = cfg.scenario.uav.position
    truth_v = cfg.scenario.uav.velocity
    result.position_errors = {m: p - truth_p for m, p in fused["position"].items()}
    result.velocity_errors = {m: velocity_error(v, truth_v) for m, v in fused["velocity"].items()}
    result.fusion = {r["method"]: r for r in fused["records"]}
    return result


def _task(args):
    cfg, snr, snr_index, trial_index = args
    return run_trial(cfg, snr, trial_seed(cfg.seed, snr_index, trial_index), trial_index)


def run_trials(cfg: ExperimentConfig, snr: Sequence[float], snr_index: int = 0,
               workers: int | None = None) -> list[TrialResult]:
    tasks = [(cfg, tuple(snr), snr_index, t) for t in range(cfg.n_trials)]
    return _map(tasks, workers or cfg.workers)


def _map(tasks, workers: int):
    if workers <= 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _method_order(names) -> list[str]:
    head = [m for m in ("symbol_level", "data_level", "average") if m in names]
    return head + sorted(m for m in names if m not in head)


def aggregate(trials: Sequence[TrialResult], snr_point: float, quantities=ALL_QUANTITIES) -> list[RmseRow]:
    ok = [t for t in trials if not t.failed]
    rows = []
    if not ok:
        return rows
    methods = _method_order(dict.fromkeys(m for t in ok for m in list(t.position_errors) + list(t.velocity_errors)))
    for m in methods:
        for q in quantities:
            if q in POSITION_QUANTITIES:
                vals = [t.position_errors[m][POSITION_QUANTITIES.index(q)] for t in ok if m in t.position_errors]
            else:
                vals = [t.velocity_errors[m][VELOCITY_QUANTITIES.index(q)] for t in ok if m in t.velocity_errors]
            if vals:
                rows.append(RmseRow(snr_point, m, q, rmse(vals), len(vals)))
    return rows


def run_sweep(cfg: ExperimentConfig, workers: int | None = None) -> RmseTable:
    """RMSE table over the configured SNR sweep.

    All (SNR point, trial) tasks are independent; results are folded in
    task order, so the table does not depend on ``workers``.
    """
    assignments = cfg.sweep_assignments()
    if not assignments:
        raise ValueError("empty SNR sweep")
    tasks = [(cfg, snr, i, t) for i, (_, snr) in enumerate(assignments) for t in range(cfg.n_trials)]
    results = _map(tasks, workers or cfg.workers)
    table = RmseTable()
    for i, (point, _) in enumerate(assignments):
        chunk = results[i * cfg.n_trials:(i + 1) * cfg.n_trials]
        table.n_failed[point] = sum(t.failed for t in chunk)
        table.rows.extend(aggregate(chunk, point, cfg.quantities))
    return table


# -- emission ---------------------------------------------------------------------------------------------


def units_comment() -> str:
    return "# units: " + ", ".join(f"{q}={u}" for q, u in UNITS.items()) + "; snr_db=dB"


def table_to_csv(table: RmseTable, comment: bool = True) -> str:
    if not table.rows:
        raise ValueError("empty RMSE table")
    buf = io.StringIO()
    if comment:
        buf.write(units_comment() + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in table.rows:
        w.writerow([repr(r.snr_db), r.method, r.quantity, repr(r.rmse), r.n_trials])
    return buf.getvalue()


def emit_csv(table: RmseTable, path, comment: bool = True) -> Path:
    path = Path(path)
    path.write_text(table_to_csv(table, comment))
    return path


def read_csv(path) -> RmseTable:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV columns {reader.fieldnames}")
    return RmseTable([RmseRow(float(r["snr_db"]), r["method"], r["quantity"], float(r["rmse"]), int(r["n_trials"]))
                      for r in reader])


def emit_plot(table: RmseTable, out_dir) -> list[Path]:
    """One SVG per quantity: RMSE versus SNR, a line per method."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not table.rows:
        raise ValueError("empty RMSE table")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    with matplotlib.rc_context({"svg.hashsalt": "isac-uav", "svg.fonttype": "path"}):
        for q in table.quantities():
            fig, ax = plt.subplots(figsize=(6, 4))
            for m in table.methods():
                pts = sorted((r.snr_db, r.rmse) for r in table.rows if r.method == m and r.quantity == q)
                if pts:
                    x, y = zip(*pts)
                    ax.plot(x, y, marker="o", label=m)
            ax.set_xlabel("SNR (dB)")
            ax.set_ylabel(f"RMSE of {q} ({UNITS.get(q, '')})")
            ax.grid(True, alpha=0.3)
            ax.legend(fontsize=7)
            path = out_dir / f"rmse_{q}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            paths.append(path)
    return paths
