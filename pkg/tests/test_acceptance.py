"""Acceptance criteria, one test each.

Every test prints a single ``[PASS]``/``[FAIL]`` line with the measured
numbers before asserting, so ``pytest -v`` output doubles as a report.
"""

import math
import os
import time

import numpy as np
import pytest
from scipy.stats import binomtest

from isac_uav.config import desk_preset, paper_preset
from isac_uav.fusion import Lattice, symbol_level_localize, symbol_level_velocity
from isac_uav.geolocate import enumerate_velocity_solutions, localize_single
from isac_uav.harness import estimate_all, rmse, run_sweep, run_trials, table_to_csv, trial_seed
from isac_uav.music import (
    PreprocessConfig,
    build_row_snapshots,
    noise_gram_from_covariance,
    preprocess_bs,
    rank1_noise_gram,
    search_angle,
    search_range,
    search_velocity,
)
from isac_uav.scene import radial_params
from isac_uav.waveform import (
    ChannelMatrix,
    NoiseModel,
    WaveformConfig,
    range_vector,
    snr_to_sigma2,
    steering_vector,
    synthesize_channel,
    velocity_vector,
)


@pytest.fixture
def verdict(capsys):
    def _report(tag, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {tag}: {detail}")
        assert ok, detail

    return _report


# -- 1. noiseless roundtrip ------------------------------------------------------------------------


def test_c1_noiseless_roundtrip(verdict):
    t0 = time.perf_counter()
    cfg = paper_preset()
    sc = cfg.scenario
    estimates = estimate_all(cfg, (math.inf,), trial_seed(0, 0, 0))
    worst = np.zeros(4)
    fix_err = []
    for est in estimates:
        rp = radial_params(sc.site(est.bs_id), sc.uav)
        worst = np.maximum(worst, np.abs([est.range - rp.range, est.azimuth - rp.azimuth,
                                          est.elevation - rp.elevation, est.radial_speed - rp.radial_speed]))
        fix_err.append(np.linalg.norm(localize_single(sc.site(est.bs_id), est).position - sc.uav.position))
    fixes = [localize_single(sc.site(e.bs_id), e) for e in estimates]
    sols = enumerate_velocity_solutions(sc.sites, fixes, estimates)
    sph = np.array([s.spherical for s in sols])
    dv = np.max(np.abs(sph[:, 0] - 23.0))
    dang = np.max(np.abs(np.rad2deg(sph[:, 1:]) - [70.0, -40.0]))
    elapsed = time.perf_counter() - t0
    step = np.deg2rad(0.02)
    ok = (worst[0] <= 0.05 and worst[1] <= step and worst[2] <= step and worst[3] <= 0.02
          and max(fix_err) < 0.2 and len(sols) == 4 and dv < 0.05 and dang < 0.1 and elapsed < 120)
    verdict("C1 noiseless roundtrip", ok,
            f"max |dR|={worst[0]:.4f} m, |dθ|={np.rad2deg(worst[1]):.4f}°, |dφ|={np.rad2deg(worst[2]):.4f}°, "
            f"|dv|={worst[3]:.4f} m/s; fix error ≤ {max(fix_err):.4f} m; velocity sets {len(sols)} "
            f"within {dv:.4f} m/s and {dang:.4f}°; {elapsed:.1f} s")


# -- 2. preprocessing benefit ----------------------------------------------------------------------


def test_c2_superposition_benefit(verdict):
    cfg = desk_preset(snr_db=(-12.0,))
    deep = PreprocessConfig(n_rows_angle=32, n_cols_range_velocity=20)
    shallow = PreprocessConfig(n_rows_angle=1, n_cols_range_velocity=1)
    sc = cfg.scenario
    truth = {s.id: radial_params(s, sc.uav) for s in sc.sites}
    errs = {"deep": [], "shallow": []}
    for t in range(100):
        seed = trial_seed(cfg.seed, 0, t)
        for name, pre in (("deep", deep), ("shallow", shallow)):
            for e in estimate_all(cfg, cfg.snr_db, seed, pre):
                rp = truth[e.bs_id]
                errs[name].append([e.range - rp.range, e.radial_speed - rp.radial_speed,
                                   np.rad2deg(e.azimuth - rp.azimuth), np.rad2deg(e.elevation - rp.elevation)])
    deep_e, shallow_e = np.abs(errs["deep"]), np.abs(errs["shallow"])
    parts, ok = [], True
    for i, name in enumerate(("range", "velocity", "azimuth", "elevation")):
        ratio = rmse(deep_e[:, i]) / rmse(shallow_e[:, i])
        wins = int(np.sum(deep_e[:, i] < shallow_e[:, i]))
        n = int(np.sum(deep_e[:, i] != shallow_e[:, i]))
        p = binomtest(wins, n, 0.5, alternative="greater").pvalue
        ok &= ratio <= 0.8 and p < 0.01
        parts.append(f"{name} ratio {ratio:.3f} p={p:.1e}")
    verdict("C2 superposition benefit (400 paired BS-trials)", ok, "; ".join(parts))


# -- 3 and 4. fusion ordering ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def paper_trials():
    cfg = paper_preset(snr_db=(-12.0,), n_trials=300, seed=0)
    return run_trials(cfg, cfg.snr_db, workers=os.cpu_count() or 1)


def _rmse_by(trials, attr, methods, idx):
    ok = [t for t in trials if not t.failed]
    return {m: rmse([getattr(t, attr)[m][idx] for t in ok]) for m in methods}


def test_c3_localization_ordering(verdict, paper_trials):
    singles = [m for m in paper_trials[0].position_errors if m.startswith("single_bs")]
    parts, ok = [], True
    for i, axis in enumerate("xyz"):
        r = _rmse_by(paper_trials, "position_errors", ["symbol_level", "data_level", "average"] + singles, i)
        best_single = min(r[m] for m in singles)
        ok &= r["symbol_level"] < min(r["data_level"], r["average"], best_single)
        parts.append(f"{axis}: sym {r['symbol_level']:.4f} data {r['data_level']:.4f} "
                     f"avg {r['average']:.4f} single {best_single:.4f}")
    n = sum(not t.failed for t in paper_trials)
    verdict(f"C3 localization ordering (paper preset, {n} trials)", ok, "; ".join(parts))


def test_c4_velocity_ordering(verdict, paper_trials):
    singles = [m for m in paper_trials[0].velocity_errors if m.startswith("single_bs")]
    parts, ok = [], True
    for i, q in enumerate(("v", "theta", "phi")):
        r = _rmse_by(paper_trials, "velocity_errors", ["symbol_level", "data_level", "average"] + singles, i)
        best_single = min(r[m] for m in singles)
        ok &= r["symbol_level"] < min(r["data_level"], r["average"], best_single)
        parts.append(f"{q}: sym {r['symbol_level']:.4f} data {r['data_level']:.4f} "
                     f"avg {r['average']:.4f} single {best_single:.4f}")
    n = sum(not t.failed for t in paper_trials)
    verdict(f"C4 velocity ordering (paper preset, {n} trials)", ok, "; ".join(parts))


# -- 5. rank-1 fast path ---------------------------------------------------------------------------------


def test_c5_rank1_equivalence(verdict):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(64, 257))
        y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        fast = rank1_noise_gram(y).matrix
        slow = noise_gram_from_covariance(np.outer(y, y.conj()), kind="range").matrix
        worst = max(worst, float(np.abs(fast - slow).max()))
    verdict("C5 rank-1 fast path", worst < 1e-10, f"max |G_fast - G_eig| = {worst:.2e} over 1000 snapshots")


# -- 6. scale invariance --------------------------------------------------------------------------------------


def test_c6_scale_invariance(verdict):
    cfg = desk_preset()
    sc, geom, wcfg = cfg.scenario, cfg.geometry, cfg.waveform
    pre = PreprocessConfig(n_rows_angle=16)
    rng = np.random.default_rng(6)
    inputs = []
    for s in sc.sites:
        rp = radial_params(s, sc.uav)
        noise = NoiseModel(snr_to_sigma2(-12.0))
        ch = synthesize_channel(rp, wcfg, noise, rng=rng)
        steer = steering_vector(rp.azimuth, rp.elevation, geom)
        snaps = [y.entries for y in build_row_snapshots(ch, steer, pre.n_rows_angle, noise, rng)]
        inputs.append((s, ch.entries, snaps))

    def run(alpha):
        root = math.sqrt(alpha)
        ests = [preprocess_bs(ChannelMatrix(c * root), geom, wcfg, pre, snapshots=[y * root for y in ys],
                              bs_id=s.id) for s, c, ys in inputs]
        # grams scaled directly as well
        scaled = [e.with_grams(**{k: g.scaled(alpha) for k, g in e.grams.items()}) for e in ests]
        searches = [(search_angle(e.angle_gram, geom).location, search_range(e.range_gram, wcfg).location,
                     search_velocity(e.velocity_gram, wcfg).location) for e in scaled]
        lat = Lattice(sc.uav.position, (6, 6, 6), 0.1)
        vlat = Lattice(sc.uav.velocity, (6, 6, 6), 0.1)
        pos = symbol_level_localize(lat, sc.sites, scaled[:3], geom, wcfg)
        vel = symbol_level_velocity(vlat, sc.sites, sc.uav.position, scaled, wcfg)
        point = [(e.azimuth, e.elevation, e.range, e.radial_speed) for e in ests]
        return point, searches, pos.diagnostics["index"], vel.diagnostics["index"]

    base = run(1.0)
    same = {alpha: run(alpha) == base for alpha in (1e-6, 1e6)}
    verdict("C6 scale invariance", all(same.values()),
            f"estimates, search argmaxes and fusion winner indices identical for α in {{1e-6, 1, 1e6}}: {same}")


# -- 7. determinism and parallel soundness ---------------------------------------------------------------------


def test_c7_determinism_and_parallel(verdict):
    cfg = desk_preset(n_trials=8, sweep_snr_db=(-12.0, -10.0), seed=11)
    first = table_to_csv(run_sweep(cfg, workers=1))
    second = table_to_csv(run_sweep(cfg, workers=1))
    parallel = table_to_csv(run_sweep(cfg, workers=8))
    ok = first == second == parallel
    verdict("C7 determinism", ok, f"{len(first.encode())} CSV bytes; repeat identical: {first == second}; "
                                  f"8 workers identical: {first == parallel}")


# -- 8. ambiguity constants -------------------------------------------------------------------------------------


def _measured_period(vector_fn, guess):
    """Locate where the first-element phase completes one turn, by linear interpolation."""
    x = np.linspace(0.0, 1.5 * guess, 3001)
    phase = np.unwrap([np.angle(vector_fn(v)[1]) for v in x])
    target = phase[0] + math.copysign(2 * math.pi, phase[-1] - phase[0])
    return float(np.interp(target, phase if phase[-1] > phase[0] else phase[::-1],
                           x if phase[-1] > phase[0] else x[::-1]))


def test_c8_ambiguity_constants(verdict):
    wcfg = WaveformConfig()
    c = wcfg.light_speed_mps
    r_expected = c / (2 * wcfg.subcarrier_spacing_hz)
    v_expected = c / (2 * wcfg.carrier_hz * wcfg.symbol_duration_s)
    r_meas = _measured_period(lambda r: range_vector(r, wcfg), r_expected)
    v_meas = _measured_period(lambda v: velocity_vector(v, wcfg), v_expected)
    r_rel, v_rel = abs(r_meas / r_expected - 1), abs(v_meas / v_expected - 1)
    wraps = (np.abs(range_vector(r_meas, wcfg) - 1).max(), np.abs(velocity_vector(v_meas, wcfg) - 1).max())
    ok = r_rel < 1e-6 and v_rel < 1e-6 and max(wraps) < 1e-3
    verdict("C8 ambiguity constants", ok,
            f"range wrap {r_meas:.6f} m vs {r_expected:.6f} (rel {r_rel:.1e}); "
            f"speed wrap {v_meas:.6f} m/s vs {v_expected:.6f} (rel {v_rel:.1e})")


# -- 9. desk budget ----------------------------------------------------------------------------------------------


def test_c9_desk_sweep_budget(verdict, tmp_path):
    cfg = desk_preset()
    workers = min(4, os.cpu_count() or 1)
    t0 = time.perf_counter()
    table = run_sweep(cfg, workers=workers)
    elapsed = time.perf_counter() - t0
    (tmp_path / "desk.csv").write_text(table_to_csv(table))
    ok = elapsed < 600 and len(cfg.sweep_points) == 6 and cfg.n_trials == 50
    verdict("C9 desk sweep budget", ok,
            f"6 SNR points x 50 trials x 4 BSs in {elapsed:.0f} s on {workers} worker(s), {len(table)} rows")
