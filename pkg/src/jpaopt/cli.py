"""Batch command-line front end.

Every subcommand reads a YAML config (or a bundled preset), runs one
pipeline, and writes CSV/JSON artifacts plus a reproducibility manifest into
the output directory.  Numeric output uses 12 significant digits so reruns
diff cleanly; identical (config, seed) pairs produce byte-identical
artifacts.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .chains import EtaCurve, StageSpec, best_two_split, chain_total, n_stage_scaling
from .config import (
    build_setup,
    load_config,
    read_manifest,
    resolve_preset,
    write_json,
    write_manifest,
)
from .drive import DriveSpec
from .errors import ConfigError, JpaoptError, UnsaturatedWarning, exit_code_for
from .metrics import GainEvaluator, bandwidth, calibrate_pump, gain_curve, ip3, power_spectrum
from .multinode import (
    MultiNodeChain,
    flux_variation_study,
    uniform_offset_recovery,
)
from .optimizer import PolynomialFamily, optimize_with_restarts
from .timedomain import integrate_eom, make_schedule


def _default_workers() -> int:
    env = os.environ.get("JPAOPT_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def _out_dir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _setup_from_args(args):
    cfg = load_config(args.config) if args.config else resolve_preset({"preset": args.preset})
    return cfg, build_setup(cfg)


def _add_common(p: argparse.ArgumentParser, config_required: bool = True):
    group = p.add_mutually_exclusive_group(required=config_required)
    group.add_argument("--config", help="YAML run configuration")
    group.add_argument("--preset", help="bundled design preset name")
    p.add_argument("--output-dir", required=True, help="artifact directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=_default_workers())


def cmd_simulate(args) -> int:
    cfg, setup = _setup_from_args(args)
    out = _out_dir(args)
    sched_cfg = cfg.get("schedule", {})
    schedule = make_schedule(
        setup.drive,
        min_periods=int(sched_cfg.get("min_periods", 2000)),
        samples_per_signal_period=int(sched_cfg.get("samples_per_signal_period", 50)),
        ip3_mode=bool(sched_cfg.get("ip3_mode", False)),
    )
    sol = integrate_eom(setup.cpr, setup.k_rate, setup.drive, schedule)
    sol.to_csv(out / "trace.csv")
    spec = power_spectrum(sol, ctx=setup.ctx, max_omega=8.0)
    spec.to_csv(out / "spectrum.csv", ctx=setup.ctx)
    summary = {
        "parseval_residual": sol.parseval_residual(),
        "max_abs_phi": sol.max_abs_phi(),
        "n_samples": schedule.n_samples,
        "total_time": schedule.total_time,
    }
    write_json(out / "summary.json", summary)
    write_manifest(out, "simulate", cfg, args.seed, {"trace": "trace.csv"})
    return 0


def cmd_gain_sweep(args) -> int:
    cfg, setup = _setup_from_args(args)
    out = _out_dir(args)
    opts = cfg.get("gain_sweep", {})
    g_t = float(opts.get("g_target_db", 20.0))
    method = args.method or opts.get("method", "hb")

    def curve_for_pump(p_dbm: float):
        drive = _drive_with_pump_dbm(setup, p_dbm)
        return gain_curve(setup.cpr, setup.k_rate, drive, g_target_db=g_t, method=method)

    if args.calibrate_pump:
        if setup.ctx is None:
            raise ConfigError("pump calibration needs the physical unit system")
        base = float(cfg["drive"]["pump_dbm"])
        span = float(opts.get("calibration_span_db", 0.6))
        step = float(opts.get("calibration_step_db", 0.05))
        grid = np.arange(base - span, base + span + 1e-9, step)
        best_pump, curve = calibrate_pump(curve_for_pump, grid)
    else:
        best_pump = None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnsaturatedWarning)
            curve = gain_curve(setup.cpr, setup.k_rate, setup.drive, g_target_db=g_t, method=method)

    curve.to_csv(out / "gain_curve.csv")
    summary = {
        "a_sat": curve.a_sat,
        "eta_pae": curve.eta_pae,
        "saturated": curve.saturated,
        "small_signal_gain_db": curve.meta.get("small_signal_gain_db"),
        "method": curve.meta.get("method"),
        "calibrated_pump_dbm": best_pump,
    }
    write_json(out / "summary.json", summary)
    write_manifest(out, "gain-sweep", cfg, args.seed, {"gain_curve": "gain_curve.csv"})
    return 0


def _drive_with_pump_dbm(setup, p_dbm: float) -> DriveSpec:
    if setup.ctx is None:
        raise ConfigError("dBm pump levels need the physical unit system")
    a_p = setup.ctx.amplitude_for_dbm(p_dbm, 2.0)
    scale = a_p / abs(setup.drive.pump.amplitude)
    return setup.drive.with_pump_scaled(scale)


def cmd_optimize(args) -> int:
    cfg = load_config(args.config) if args.config else resolve_preset({"preset": args.preset})
    out = _out_dir(args)
    opts = cfg.get("optimize", {})
    circuit = cfg.get("circuit", {})
    if circuit.get("kind") != "polynomial":
        raise ConfigError("the optimize command currently drives polynomial families")
    order = len(circuit["coeffs"]) + 2
    delta = float(cfg.get("drive", {}).get("delta_over_pi", 1.5)) * math.pi
    family = PolynomialFamily(order=order, delta=delta)
    theta0 = np.array(
        [float(circuit["omega0"]), float(circuit["damping"]), *map(float, circuit["coeffs"])]
    )
    best, states = optimize_with_restarts(
        family,
        theta0,
        restarts=int(opts.get("restarts", 6)),
        seed=args.seed,
        jitter_sigma=float(opts.get("jitter_sigma", 0.2)),
        workers=args.workers,
        g_target_db=float(opts.get("g_target_db", 20.0)),
        n_samples=int(opts.get("n_samples", 20)),
        cost_mode=opts.get("cost_mode", "squared"),
    )
    rows = [st.as_dict() for st in states]
    write_json(out / "restarts.json", rows)
    design = {
        "circuit": {
            "kind": "polynomial",
            "omega0": float(best.theta[0]),
            "damping": float(best.theta[1]),
            "coeffs": [float(g) for g in best.theta[2:]],
        },
        "result": best.as_dict(),
    }
    write_json(out / "best_design.json", design)
    with open(out / "run_log.jsonl", "w", encoding="utf-8") as fh:
        import json as _json

        for st in states:
            for entry in st.history:
                fh.write(_json.dumps({"seed": st.seed, **entry}) + "\n")
    write_manifest(out, "optimize", cfg, args.seed, {"best_design": "best_design.json"})
    return 0


def cmd_bandwidth(args) -> int:
    cfg, setup = _setup_from_args(args)
    out = _out_dir(args)
    opts = cfg.get("bandwidth", {})
    result = bandwidth(
        setup.cpr,
        setup.k_rate,
        setup.drive,
        criterion_db=float(opts.get("criterion_db", 3.0)),
        rel_span=float(opts.get("rel_span", 0.10)),
        n_points=int(opts.get("n_points", 81)),
        ctx=setup.ctx,
    )
    result.to_csv(out / "bandwidth.csv", ctx=setup.ctx)
    write_json(
        out / "summary.json",
        {
            "width_hz": result.width_hz,
            "width_norm": result.width_norm,
            "peak_gain_db": result.peak_gain_db,
            "criterion_db": result.criterion_db,
            "multi_lobe": result.multi_lobe,
        },
    )
    write_manifest(out, "bandwidth", cfg, args.seed, {"bandwidth": "bandwidth.csv"})
    return 0


def cmd_ip3(args) -> int:
    cfg, setup = _setup_from_args(args)
    if setup.ctx is None:
        raise ConfigError("intermodulation powers need the physical unit system")
    out = _out_dir(args)
    opts = cfg.get("ip3", {})
    grid = opts.get("p_in_grid_dbm")
    ratios = opts.get("ratios", [[101, 201], [101, 200]])
    result = ip3(
        setup.cpr,
        setup.k_rate,
        setup.drive.pump,
        setup.ctx,
        ratio_1=Fraction(*ratios[0]),
        ratio_2=Fraction(*ratios[1]),
        p_in_grid_dbm=grid,
        min_periods=int(cfg.get("schedule", {}).get("min_periods", 2000)),
    )
    result.to_csv(out / "ip3.csv")
    write_json(
        out / "summary.json",
        {
            "iip3_dbm": result.iip3_dbm,
            "oip3_dbm": result.oip3_dbm,
            "linear_series": result.linear_series,
            "cubic_series": result.cubic_series,
            "fit_window": list(result.fit_window),
        },
    )
    write_manifest(out, "ip3", cfg, args.seed, {"ip3": "ip3.csv"})
    return 0


def cmd_spectrum(args) -> int:
    return cmd_simulate(args)


def cmd_chain(args) -> int:
    out = _out_dir(args)
    curve = EtaCurve.from_design_json(args.curve) if args.curve.endswith(".json") else EtaCurve.from_csv(args.curve)
    payload: dict = {"curve": args.curve}
    if args.stages:
        rows = n_stage_scaling(curve, g_total_db=args.total_gain_db, n_values=range(1, args.stages + 1))
        payload["n_stage"] = [
            {"n": n, "stage_gain_db": g, "eta_tot": eta} for n, g, eta in rows
        ]
        with open(out / "chain.csv", "w", encoding="utf-8") as fh:
            fh.write("n,stage_gain_db,eta_tot\n")
            for n, g, eta in rows:
                fh.write(f"{n},{g:.11e},{eta:.11e}\n")
    if args.two_split:
        g1, g2, eta = best_two_split(curve, g_total_db=args.total_gain_db)
        payload["two_split"] = {"g1_db": g1, "g2_db": g2, "eta_tot": eta}
    write_json(out / "summary.json", payload)
    write_manifest(out, "chain", {"curve": args.curve, "total_gain_db": args.total_gain_db}, args.seed)
    return 0


def cmd_variation_study(args) -> int:
    cfg, setup = _setup_from_args(args)
    if setup.chain is None:
        raise ConfigError("variation studies run on loop-chain circuits")
    out = _out_dir(args)
    opts = cfg.get("variation", {})
    pump0 = float(opts.get("pump_dbm", cfg["drive"]["pump_dbm"]))
    delta = float(cfg.get("drive", {}).get("delta_over_pi", 0.0)) * math.pi

    def drive_builder(p_dbm: float) -> DriveSpec:
        return _drive_with_pump_dbm(setup, p_dbm)

    result = flux_variation_study(
        setup.chain,
        drive_builder,
        pump_start_dbm=pump0,
        sigma=args.sigma,
        seed=args.seed,
        f_pump_hz=setup.ctx.f_pump_hz,
        min_periods=int(opts.get("min_periods", 2000)),
    )
    write_json(out / "study.json", result.as_dict())
    if result.curve is not None:
        result.curve.to_csv(out / "gain_curve.csv")
    write_manifest(out, "variation-study", cfg, args.seed, {"study": "study.json"})
    return 0


def cmd_offset_study(args) -> int:
    cfg, setup = _setup_from_args(args)
    if setup.chain is None:
        raise ConfigError("offset studies run on loop-chain circuits")
    out = _out_dir(args)
    opts = cfg.get("offset", {})
    pump0 = float(opts.get("pump_dbm", cfg["drive"]["pump_dbm"]))
    delta = float(cfg.get("drive", {}).get("delta_over_pi", 0.0)) * math.pi
    f_pump = setup.ctx.f_pump_hz

    from .circuits import rf_squid_chain_cpr
    from .drive import degenerate_drive

    def drive_builder(chain, freq_scale, pump_dbm):
        ctx = chain.context(f_pump * freq_scale)
        cpr = rf_squid_chain_cpr(chain, f_pump * freq_scale)
        a_p = ctx.amplitude_for_dbm(pump_dbm, 2.0)
        return cpr, ctx.k_normalized, degenerate_drive(0.0, a_pump=a_p, delta=delta)

    result = uniform_offset_recovery(
        setup.chain,
        drive_builder,
        l_scale=args.l_scale,
        pump_center_dbm=pump0,
        f_pump_hz=f_pump,
    )
    write_json(out / "study.json", result.as_dict())
    write_manifest(out, "offset-study", cfg, args.seed, {"study": "study.json"})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jpaopt",
        description="Parametric-amplifier simulation and design toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="time-domain run: trace + spectrum")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gain-sweep", help="gain/PAE versus amplitude with saturation")
    _add_common(p)
    p.add_argument("--method", choices=["hb", "dti"], default=None)
    p.add_argument("--calibrate-pump", action="store_true")
    p.set_defaults(func=cmd_gain_sweep)

    p = sub.add_parser("optimize", help="penalized gain-flattening optimization")
    _add_common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("bandwidth", help="small-signal gain versus signal frequency")
    _add_common(p)
    p.set_defaults(func=cmd_bandwidth)

    p = sub.add_parser("ip3", help="two-tone intermodulation intercept (slow)")
    _add_common(p)
    p.set_defaults(func=cmd_ip3)

    p = sub.add_parser("spectrum", help="alias of simulate: trace + labeled spectrum")
    _add_common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("chain", help="amplifier-chain composition from an efficiency curve")
    p.add_argument("--curve", required=True, help="eta-vs-gain CSV or design-data JSON")
    p.add_argument("--stages", type=int, default=0, help="evaluate 1..N equal stages")
    p.add_argument("--two-split", action="store_true")
    p.add_argument("--total-gain-db", type=float, default=20.0)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("variation-study", help="per-loop flux disorder with pump retune (slow)")
    _add_common(p)
    p.add_argument("--sigma", type=float, required=True, help="flux std dev, phi0 units")
    p.set_defaults(func=cmd_variation_study)

    p = sub.add_parser("offset-study", help="uniform inductance offset recovery")
    _add_common(p)
    p.add_argument("--l-scale", type=float, required=True, help="inductance scale factor")
    p.set_defaults(func=cmd_offset_study)

    p = sub.add_parser("rerun", help="reproduce a run from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_rerun)
    return parser


def cmd_rerun(args) -> int:
    manifest = read_manifest(args.manifest)
    import tempfile

    import yaml as _yaml

    command = manifest["command"]
    with tempfile.NamedTemporaryFile(
        "w", suffix=".yaml", delete=False, encoding="utf-8"
    ) as fh:
        _yaml.safe_dump(manifest["config"], fh)
        cfg_path = fh.name
    argv = [command, "--config", cfg_path, "--output-dir", args.output_dir]
    if manifest.get("seed") is not None:
        argv += ["--seed", str(manifest["seed"])]
    return main(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except JpaoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
