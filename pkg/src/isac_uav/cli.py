"""Command line entry point: ``isac-uav {simulate,sweep,report,preprocess,fuse}``."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import PRESETS, SWEEP_MODES, config_from_dict, config_to_dict, load_config, method_list, with_overrides
from .exceptions import ConfigError, DegenerateGeometryError, DomainError
from .harness import emit_csv, emit_plot, estimate_all, fuse_estimates, read_csv, run_sweep, trial_seed
from .music import BsEstimate, read_gram, write_gram

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE = 0, 2, 3


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.replace(" ", "").split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--seed", type=int)
    p.add_argument("--methods", type=method_list, help="comma list of symbol_level,data_level,average,single")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isac-uav", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one trial and print every estimate and fusion result")
    _common(p)
    p.add_argument("--snr", type=_floats, help="per-BS SNR in dB (one value or one per BS)")
    p.add_argument("--out", type=Path, help="also write the JSON report here")

    p = sub.add_parser("sweep", help="Monte Carlo RMSE sweep to CSV")
    _common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--snr", type=_floats, help="sweep points in dB")
    p.add_argument("--sweep-mode", choices=SWEEP_MODES)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", type=Path, default=Path("rmse.csv"))

    p = sub.add_parser("report", help="render RMSE-vs-SNR plots from a sweep CSV")
    p.add_argument("csv", type=Path)
    p.add_argument("--out", type=Path, default=Path("plots"))

    p = sub.add_parser("preprocess", help="write per-BS gram artefacts for one trial")
    _common(p)
    p.add_argument("--snr", type=_floats)
    p.add_argument("--out", type=Path, default=Path("grams"))

    p = sub.add_parser("fuse", help="fuse gram artefacts written by 'preprocess'")
    p.add_argument("artifacts", type=Path, help="directory holding manifest.json and *.gram files")
    p.add_argument("--methods", type=method_list)
    p.add_argument("--out", type=Path)
    return parser


def _config(args):
    cfg = load_config(args.config, args.preset)
    return with_overrides(cfg, seed=args.seed, methods=args.methods)


def _dump(obj, out: Path | None) -> None:
    text = json.dumps(obj, indent=2, default=float)
    print(text)
    if out is not None:
        out.write_text(text + "\n")


def _estimate_record(e: BsEstimate) -> dict:
    return {"bs_id": e.bs_id, "range_m": e.range, "azimuth_deg": float(np.rad2deg(e.azimuth)),
            "elevation_deg": float(np.rad2deg(e.elevation)), "radial_speed_mps": e.radial_speed}


def cmd_simulate(args) -> int:
    cfg = _config(args)
    snr = cfg.per_bs_snr(args.snr)
    estimates = estimate_all(cfg, snr, trial_seed(cfg.seed, 0, 0))
    fused = fuse_estimates(cfg, estimates)
    uav = cfg.scenario.uav
    _dump({"snr_db": list(snr), "truth": {"position": uav.position.tolist(), "speed": uav.speed,
                                          "theta_deg": float(np.rad2deg(uav.azimuth)),
                                          "phi_deg": float(np.rad2deg(uav.elevation))},
           "estimates": [_estimate_record(e) for e in estimates], "fusion": fused["records"]}, args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = with_overrides(_config(args), n_trials=args.trials, sweep_snr_db=args.snr,
                         sweep_mode=args.sweep_mode, workers=args.workers)
    table = run_sweep(cfg)
    emit_csv(table, args.out)
    failed = sum(table.n_failed.values())
    print(f"wrote {len(table)} rows to {args.out} ({failed} failed trials excluded)")
    return EXIT_OK


def cmd_report(args) -> int:
    paths = emit_plot(read_csv(args.csv), args.out)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = _config(args)
    snr = cfg.per_bs_snr(args.snr)
    estimates = estimate_all(cfg, snr, trial_seed(cfg.seed, 0, 0))
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for e in estimates:
        files = {}
        for kind, gram in e.grams.items():
            name = f"bs{e.bs_id}_{kind}.gram"
            write_gram(out / name, gram)
            files[kind] = name
        entries.append({**_estimate_record(e), "azimuth_rad": e.azimuth, "elevation_rad": e.elevation, "grams": files})
    manifest = {"config": config_to_dict(cfg), "preset": args.preset, "snr_db": list(snr), "estimates": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {3 * len(entries)} gram files and manifest.json to {out}")
    return EXIT_OK


def load_artifacts(directory: Path):
    """Rebuild the config and per-BS estimates from a ``preprocess`` directory."""
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read manifest in {directory}: {exc}") from None
    cfg = config_from_dict(manifest["config"], manifest.get("preset", "desk"))
    estimates = []
    for rec in manifest["estimates"]:
        grams = {k: read_gram(directory / name) for k, name in rec["grams"].items()}
        estimates.append(BsEstimate(int(rec["bs_id"]), float(rec["azimuth_rad"]), float(rec["elevation_rad"]),
                                    float(rec["range_m"]), float(rec["radial_speed_mps"]),
                                    grams["angle"], grams["range"], grams["velocity"]))
    return cfg, estimates


def cmd_fuse(args) -> int:
    cfg, estimates = load_artifacts(args.artifacts)
    cfg = with_overrides(cfg, methods=args.methods)
    fused = fuse_estimates(cfg, estimates)
    _dump(fused["records"], args.out)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "report": cmd_report,
            "preprocess": cmd_preprocess, "fuse": cmd_fuse}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return COMMANDS[args.command](args)
    except DegenerateGeometryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
