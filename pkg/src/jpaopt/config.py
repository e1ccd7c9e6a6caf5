"""Run configuration files and reproducibility manifests.

Configs are YAML with nested sections (circuit, drive, schedule, command
options).  Every CLI run writes a manifest carrying the resolved config, its
hash, the seed and the package versions, so a run can be reproduced from the
manifest alone.  Manifests deliberately contain no timestamps: identical
(config, seed) pairs must produce byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .circuits import (
    CurrentPhaseRelation,
    ExtendedRfSquidElement,
    PolynomialBlock,
    RfSquidChain,
    extended_rf_squid_block_cpr,
    polynomial_cpr,
    rf_squid_chain_cpr,
)
from .drive import DriveSpec, degenerate_drive, nondegenerate_drive, two_tone_drive
from .errors import ConfigError
from .units import PUMP_AMPLITUDE_NORM, UnitContext


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return resolve_preset(cfg)


def resolve_preset(cfg: dict) -> dict:
    """Expand a ``preset:`` reference into a full config."""
    name = cfg.pop("preset", None)
    if name is None:
        return cfg
    preset = preset_config(name)
    merged = _deep_merge(preset, cfg)
    return merged


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


def preset_config(name: str) -> dict:
    from .designs import CIRCUIT_DESIGNS, POLYNOMIAL_REFERENCE

    if name.startswith("polynomial-order-"):
        order = int(name.rsplit("-", 1)[1])
        if order not in POLYNOMIAL_REFERENCE:
            raise ConfigError(f"no bundled polynomial design of order {order}")
        block = POLYNOMIAL_REFERENCE[order]
        return {
            "units": {"system": "normalized"},
            "circuit": {
                "kind": "polynomial",
                "omega0": block.omega0,
                "damping": block.damping,
                "coeffs": list(block.coeffs),
            },
            "drive": {
                "mode": "degenerate",
                "delta_over_pi": 1.5,
                "pump_amplitude": PUMP_AMPLITUDE_NORM,
                "signal_amplitude": 0.0,
            },
        }
    if name in CIRCUIT_DESIGNS:
        d = CIRCUIT_DESIGNS[name]
        circuit: dict
        if d.chain is not None:
            circuit = {
                "kind": "rf_squid_chain",
                "n": d.chain.n,
                "inductance": d.chain.inductance,
                "critical_current": d.chain.critical_current,
                "phi_ext": d.chain.phi_ext,
                "capacitance": d.chain.capacitance,
                "k_rate": d.chain.k_rate,
            }
        else:
            circuit = {
                "kind": "extended_rf_squid",
                "n": d.n_elements,
                "capacitance": d.capacitance,
                "k_rate": d.k_rate,
                "require_monotonic": d.require_monotonic,
                **{k: v for k, v in d.element.as_dict().items()},
            }
        drive = {
            "mode": "degenerate" if d.is_degenerate else "nondegenerate",
            "pump_dbm": d.pump_dbm,
            "signal_amplitude": 0.0,
        }
        if d.is_degenerate:
            drive["delta_over_pi"] = d.delta / math.pi
        else:
            drive["signal_pump_ratio"] = [
                d.signal_pump_ratio.numerator,
                d.signal_pump_ratio.denominator,
            ]
        return {
            "units": {"system": "physical", "f_pump_hz": d.f_pump_hz},
            "circuit": circuit,
            "drive": drive,
        }
    raise ConfigError(f"unknown preset {name!r}")


@dataclass
class RunSetup:
    """Resolved amplifier + drive + unit context of a run."""

    cpr: CurrentPhaseRelation
    k_rate: float  # normalized damping used by the solvers
    drive: DriveSpec
    ctx: UnitContext | None
    config: dict
    chain: RfSquidChain | None = None

    @property
    def is_physical(self) -> bool:
        return self.ctx is not None


def _ratio_from(value) -> Fraction:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return Fraction(int(value[0]), int(value[1]))
    if isinstance(value, str) and "/" in value:
        num, den = value.split("/")
        return Fraction(int(num), int(den))
    if isinstance(value, int):
        return Fraction(value)
    raise ConfigError(f"frequency ratios must be exact rationals, got {value!r}")


def build_setup(cfg: dict) -> RunSetup:
    units = cfg.get("units", {"system": "normalized"})
    system = units.get("system", "normalized")
    circuit = cfg.get("circuit")
    if circuit is None:
        raise ConfigError("config needs a circuit section")
    kind = circuit.get("kind")
    drive_cfg = cfg.get("drive", {})
    chain = None

    if kind == "polynomial":
        if system != "normalized":
            raise ConfigError("polynomial amplifiers use the normalized unit system")
        block = PolynomialBlock(
            float(circuit["omega0"]), float(circuit["damping"]), tuple(circuit["coeffs"])
        )
        cpr = polynomial_cpr(block)
        k_rate = block.damping
        ctx = None
        a_pump = float(drive_cfg.get("pump_amplitude", PUMP_AMPLITUDE_NORM))
    elif kind in ("rf_squid_chain", "extended_rf_squid"):
        if system != "physical":
            raise ConfigError("circuit amplifiers need the physical unit system")
        f_pump = float(units["f_pump_hz"])
        cap = float(circuit["capacitance"])
        if "k_rate" in circuit:
            k_phys = float(circuit["k_rate"])
        elif "z_ohms" in circuit:
            k_phys = 1.0 / (cap * float(circuit["z_ohms"]))
        else:
            raise ConfigError("circuit needs k_rate or z_ohms")
        if kind == "rf_squid_chain":
            chain = RfSquidChain(
                n=int(circuit["n"]),
                inductance=float(circuit["inductance"]),
                critical_current=float(circuit["critical_current"]),
                phi_ext=float(circuit["phi_ext"]),
                capacitance=cap,
                k_rate=k_phys,
            )
            cpr = rf_squid_chain_cpr(chain, f_pump)
            ctx = chain.context(f_pump)
        else:
            element = ExtendedRfSquidElement(
                inductance=float(circuit["inductance"]),
                i_c1=float(circuit["i_c1"]),
                i_c2=float(circuit["i_c2"]),
                shunt_inductance=float(circuit["shunt_inductance"]),
                phi_ext=float(circuit["phi_ext"]),
                j_ext=float(circuit["j_ext"]),
                n_shunt_junctions=int(circuit.get("n_shunt_junctions", 3)),
            )
            cpr = extended_rf_squid_block_cpr(
                element,
                int(circuit["n"]),
                cap,
                k_phys,
                f_pump,
                require_monotonic=bool(circuit.get("require_monotonic", True)),
            )
            ctx = cpr.context
        k_rate = ctx.k_normalized
        if "pump_dbm" in drive_cfg:
            a_pump = ctx.amplitude_for_dbm(float(drive_cfg["pump_dbm"]), 2.0)
        else:
            a_pump = float(drive_cfg.get("pump_amplitude", 0.0))
    else:
        raise ConfigError(f"unknown circuit kind {kind!r}")

    mode = drive_cfg.get("mode", "degenerate")
    a_signal = float(drive_cfg.get("signal_amplitude", 0.0))
    delta = float(drive_cfg.get("delta_over_pi", 0.0)) * math.pi
    if mode == "degenerate":
        drive = degenerate_drive(a_signal, a_pump=a_pump, delta=delta)
    elif mode == "nondegenerate":
        ratio = _ratio_from(drive_cfg.get("signal_pump_ratio", [125, 249]))
        drive = nondegenerate_drive(a_signal, a_pump, ratio, delta=delta)
    elif mode == "two-tone":
        ratios = drive_cfg.get("ratios", [[101, 201], [101, 200]])
        drive = two_tone_drive(
            a_signal, a_pump, _ratio_from(ratios[0]), _ratio_from(ratios[1]), delta=delta
        )
    else:
        raise ConfigError(f"unknown drive mode {mode!r}")
    return RunSetup(cpr=cpr, k_rate=k_rate, drive=drive, ctx=ctx, config=cfg, chain=chain)


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()


def write_manifest(out_dir, command: str, cfg: dict, seed: int | None, extra: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "seed": seed,
        "versions": {
            "jpaopt": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if extra:
        manifest["outputs"] = extra
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    for key in ("command", "config"):
        if key not in manifest:
            raise ConfigError(f"manifest {path} is missing {key!r}")
    return manifest


def write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
