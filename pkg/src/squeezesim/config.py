"""Run configuration for the command-line tools.

Config files are flat ``section.key = value`` pairs, one per line, with
``#`` comments.  Every alternative parameterization (quality factors vs
decay rates, lumped vs per-stage detection efficiency, explicit vs
material-derived vs power-calibrated Kerr rate) must be supplied exactly
once; the resolver rejects ambiguous or incomplete combinations and
reports the offending field paths.

``RunConfig.echo_text()`` serializes the effective configuration, with
defaults filled in, such that re-parsing it reproduces the same run.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .params import (
    DetectionChain,
    DomainError,
    MaterialParams,
    PumpDrive,
    ResonatorModel,
    g0_from_material,
    kappa_from_q,
    wavelength_to_omega,
)
from .spectra import CalibrationResult, calibrate_g0_to_optimum
from .steady_state import BRANCH_POLICIES, g0_for_threshold_fraction


class ConfigError(ValueError):
    """A config file failed to parse or resolve; message carries the field path."""


_REQUIRED = object()
_OPTIONAL = object()

# key -> (type tag, default).  _REQUIRED keys must appear; _OPTIONAL keys
# may be absent and are then omitted from the echo; group membership is
# enforced separately in resolve_config.
_SCHEMA: dict[str, tuple[str, object]] = {
    "seed": ("int", 0),
    "resonator.wavelength_nm": ("float", _REQUIRED),
    "resonator.q_intrinsic": ("float", _OPTIONAL),
    "resonator.kappa_i_rad_s": ("float", _OPTIONAL),
    "resonator.q_loaded": ("float", _OPTIONAL),
    "resonator.kappa_e_rad_s": ("float", _OPTIONAL),
    "resonator.fsr_hz": ("float", 59.3e9),
    "resonator.d2_rad_s": ("float", 0.0),
    "resonator.g0_rad_s": ("float", _OPTIONAL),
    "material.n2_m2_per_w": ("float", _OPTIONAL),
    "material.n0": ("float", _OPTIONAL),
    "material.v_eff_m3": ("float", _OPTIONAL),
    "material.include_c": ("bool", _OPTIONAL),
    "calibration.power_mw": ("float", _OPTIONAL),
    "calibration.threshold_fraction": ("float", _OPTIONAL),
    "drive.power_mw": ("float", _OPTIONAL),
    "drive.powers_mw": ("floats", ()),
    "drive.detuning_rad_s": ("float", 0.0),
    "detection.eta_total": ("float", _OPTIONAL),
    "detection.eta_couple": ("float", _OPTIONAL),
    "detection.eta_prop": ("float", _OPTIONAL),
    "detection.visibility": ("float", _OPTIONAL),
    "detection.eta_pd": ("float", _OPTIONAL),
    "analysis.omega_hz": ("float", 7.0e6),
    "analysis.omega_min_hz": ("float", _OPTIONAL),
    "analysis.omega_max_hz": ("float", _OPTIONAL),
    "analysis.n_omega": ("int", 25),
    "analysis.n_theta": ("int", 91),
    "analysis.rbw_hz": ("float", 300e3),
    "analysis.vbw_hz": ("float", 470.0),
    "analysis.scan_time_s": ("float", 1.0),
    "analysis.samples_per_period": ("int", 400),
    "analysis.periods": ("int", 2),
    "solver.branch_policy": ("choice:" + "|".join(BRANCH_POLICIES), "lowest"),
    "solver.mode_index": ("int", 1),
    "solver.residual_rtol": ("float", 1e-10),
    "validate.n_segments": ("int", 17000),
    "validate.n_sigma": ("float", 3.0),
    "validate.max_db_err": ("float", 0.1),
    "validate.min_pass_fraction": ("float", 0.95),
    "validate.batch_size": ("int", 128),
    "validate.n_random": ("int", 200),
    "fit.regime": ("choice:overcoupled|undercoupled|ambiguous", "overcoupled"),
    "fit.detrend": ("bool", True),
    "fit.min_prominence": ("float", 0.05),
    "fit.min_spacing_nm": ("float", 0.0),
    "fit.min_samples_per_fwhm": ("int", 15),
}


def _parse_value(key: str, kind: str, text: str, line_no: int):
    where = f"{key} (line {line_no})"
    if kind == "float":
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(f"{where}: expected a number, got {text!r}") from None
        if not math.isfinite(value):
            raise ConfigError(f"{where}: value must be finite")
        return value
    if kind == "int":
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {text!r}") from None
    if kind == "bool":
        if text == "true":
            return True
        if text == "false":
            return False
        raise ConfigError(f"{where}: expected true or false, got {text!r}")
    if kind == "floats":
        if text == "":
            return ()
        out = []
        for part in text.split(","):
            part = part.strip()
            if not part:
                raise ConfigError(f"{where}: empty element in list")
            try:
                value = float(part)
            except ValueError:
                raise ConfigError(
                    f"{where}: expected a number, got {part!r}"
                ) from None
            if not math.isfinite(value):
                raise ConfigError(f"{where}: list values must be finite")
            out.append(value)
        return tuple(out)
    choices = kind.split(":", 1)[1].split("|")
    if text not in choices:
        raise ConfigError(
            f"{where}: expected one of {', '.join(choices)}, got {text!r}"
        )
    return text


def parse_config_text(text: str) -> dict[str, object]:
    """Parse config text into a typed key-value map (no defaults applied)."""
    values: dict[str, object] = {}
    seen_line: dict[str, int] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, _, value_text = line.partition("=")
        key = key.strip()
        value_text = value_text.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"unknown key {key!r} (line {line_no})")
        if key in values:
            raise ConfigError(
                f"duplicate key {key!r} (lines {seen_line[key]} and {line_no})"
            )
        values[key] = _parse_value(key, _SCHEMA[key][0], value_text, line_no)
        seen_line[key] = line_no
    return values


def _format_value(kind: str, value) -> str:
    if kind == "float":
        return repr(float(value))
    if kind == "int":
        return str(int(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def format_config(values: Mapping[str, object]) -> str:
    """Serialize a typed key map; parse_config_text inverts it exactly."""
    lines = []
    for key in sorted(values):
        kind = _SCHEMA[key][0]
        lines.append(f"{key} = {_format_value(kind, values[key])}")
    return "\n".join(lines) + "\n"


def _exactly_one(values: Mapping[str, object], group: str, keys: tuple[str, ...]):
    present = [k for k in keys if k in values]
    if len(present) != 1:
        given = ", ".join(present) if present else "none"
        raise ConfigError(
            f"{group}: supply exactly one of {', '.join(keys)} (got {given})"
        )
    return present[0]


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved run: physics objects plus the echoed key map."""

    values: Mapping[str, object]
    model: ResonatorModel
    chain: DetectionChain
    power_w: float | None
    powers_w: tuple[float, ...]
    omega: float
    omega_grid: tuple[float, ...]
    n_theta: int
    branch_policy: str
    mode_index: int
    residual_rtol: float
    seed: int
    calibration: CalibrationResult | None

    @property
    def eta_total(self) -> float:
        """Off-chip chain efficiency (escape handled by the model)."""
        return self.chain.eta_total

    @property
    def eta_end_to_end(self) -> float:
        return self.chain.eta_total * self.model.eta_escape

    def opt(self, key: str):
        """Effective value of a config key, defaults included."""
        return self.values[key]

    def echo_text(self) -> str:
        return format_config(self.values)

    def require_power(self) -> float:
        if self.power_w is None:
            raise ConfigError(
                "drive.power_mw: this command needs a single operating power"
            )
        return self.power_w


def _resolve_rates(values: Mapping[str, object], omega0: float) -> tuple[float, float]:
    key_i = _exactly_one(
        values, "resonator loss", ("resonator.q_intrinsic", "resonator.kappa_i_rad_s")
    )
    key_e = _exactly_one(
        values, "resonator coupling", ("resonator.q_loaded", "resonator.kappa_e_rad_s")
    )
    if key_i == "resonator.q_intrinsic":
        kappa_i = kappa_from_q(omega0, float(values[key_i]))
    else:
        kappa_i = float(values[key_i])
        if kappa_i < 0.0:
            raise ConfigError("resonator.kappa_i_rad_s: must be non-negative")
    if key_e == "resonator.kappa_e_rad_s":
        kappa_e = float(values[key_e])
    else:
        # loaded Q fixes the total rate; the external share is what remains
        kappa_e = kappa_from_q(omega0, float(values[key_e])) - kappa_i
    if kappa_e <= 0.0:
        raise ConfigError(
            f"{key_e}: external coupling resolves to {kappa_e:.6g} rad/s, "
            "must be positive (is the loaded Q below the intrinsic Q?)"
        )
    return kappa_i, kappa_e


def _resolve_detection(values: Mapping[str, object]) -> DetectionChain:
    quartet = (
        "detection.eta_couple",
        "detection.eta_prop",
        "detection.visibility",
        "detection.eta_pd",
    )
    has_total = "detection.eta_total" in values
    given = [k for k in quartet if k in values]
    if has_total and given:
        raise ConfigError(
            "detection: detection.eta_total excludes the per-stage keys "
            + ", ".join(given)
        )
    if has_total:
        return DetectionChain.from_total(float(values["detection.eta_total"]))
    if len(given) != len(quartet):
        missing = [k for k in quartet if k not in values]
        raise ConfigError(
            "detection: supply detection.eta_total or all of "
            + ", ".join(quartet)
            + (f" (missing {', '.join(missing)})" if given else "")
        )
    return DetectionChain(
        eta_couple=float(values[quartet[0]]),
        eta_prop=float(values[quartet[1]]),
        visibility=float(values[quartet[2]]),
        eta_pd=float(values[quartet[3]]),
    )


def _resolve_g0(
    values: Mapping[str, object],
    model: ResonatorModel,
    omega: float,
    l: int,
    eta_total: float,
) -> tuple[ResonatorModel, CalibrationResult | None]:
    material_keys = ("material.n2_m2_per_w", "material.n0", "material.v_eff_m3")
    routes = {
        "resonator.g0_rad_s": "resonator.g0_rad_s" in values,
        "material.*": any(k in values for k in material_keys)
        or "material.include_c" in values,
        "calibration.*": any(
            k in values
            for k in ("calibration.power_mw", "calibration.threshold_fraction")
        ),
    }
    chosen = [name for name, hit in routes.items() if hit]
    if len(chosen) != 1:
        raise ConfigError(
            "kerr rate: supply exactly one of resonator.g0_rad_s, the material.* "
            f"block, or the calibration.* block (got {', '.join(chosen) or 'none'})"
        )
    route = chosen[0]
    if route == "resonator.g0_rad_s":
        return dataclasses.replace(model, g0=float(values["resonator.g0_rad_s"])), None
    if route == "material.*":
        missing = [k for k in material_keys if k not in values]
        if missing:
            raise ConfigError(f"material: missing {', '.join(missing)}")
        mat = MaterialParams(
            n2=float(values["material.n2_m2_per_w"]),
            n0=float(values["material.n0"]),
            v_eff=float(values["material.v_eff_m3"]),
        )
        g0 = g0_from_material(
            model.omega0, mat, include_c=bool(values.get("material.include_c", False))
        )
        return dataclasses.replace(model, g0=g0), None
    if "calibration.power_mw" not in values:
        raise ConfigError(
            "calibration.threshold_fraction: needs calibration.power_mw"
        )
    power_w = float(values["calibration.power_mw"]) * 1e-3
    pump = PumpDrive.from_power(power_w, model.omega0)
    if "calibration.threshold_fraction" in values:
        fraction = float(values["calibration.threshold_fraction"])
        g0 = g0_for_threshold_fraction(model, pump, fraction, l)
        return dataclasses.replace(model, g0=g0), None
    result = calibrate_g0_to_optimum(
        model, pump, omega=omega, l=l, eta_total=eta_total
    )
    return dataclasses.replace(model, g0=result.g0), result


def resolve_config(values: Mapping[str, object]) -> RunConfig:
    """Apply defaults, enforce the one-of groups, and build the run objects."""
    effective: dict[str, object] = {}
    for key, (kind, default) in _SCHEMA.items():
        if key in values:
            effective[key] = values[key]
        elif default is _REQUIRED:
            raise ConfigError(f"{key}: required key is missing")
        elif default is not _OPTIONAL:
            effective[key] = default
    for key in values:
        if key not in _SCHEMA:  # resolve() may be fed a hand-built dict
            raise ConfigError(f"unknown key {key!r}")

    try:
        omega0 = wavelength_to_omega(float(effective["resonator.wavelength_nm"]) * 1e-9)
        kappa_i, kappa_e = _resolve_rates(effective, omega0)
        model = ResonatorModel(
            omega0=omega0,
            kappa_i=kappa_i,
            kappa_e=kappa_e,
            delta=float(effective["drive.detuning_rad_s"]),
            d2=float(effective["resonator.d2_rad_s"]),
            g0=0.0,
            fsr=float(effective["resonator.fsr_hz"]),
        )
        chain = _resolve_detection(effective)
        chain = dataclasses.replace(chain, eta_escape=model.eta_escape)

        omega = 2.0 * math.pi * float(effective["analysis.omega_hz"])
        mode_index = int(effective["solver.mode_index"])
        if mode_index < 1:
            raise ConfigError("solver.mode_index: must be at least 1")
        model, calibration = _resolve_g0(
            effective, model, omega, mode_index, chain.eta_total
        )

        has_min = "analysis.omega_min_hz" in effective
        has_max = "analysis.omega_max_hz" in effective
        if has_min != has_max:
            raise ConfigError(
                "analysis: omega_min_hz and omega_max_hz must be given together"
            )
        if has_min:
            lo = float(effective["analysis.omega_min_hz"])
            hi = float(effective["analysis.omega_max_hz"])
            n = int(effective["analysis.n_omega"])
            if not 0.0 < lo < hi:
                raise ConfigError("analysis.omega_min_hz: need 0 < min < max")
            if n < 2:
                raise ConfigError("analysis.n_omega: need at least 2 grid points")
            grid = tuple(2.0 * math.pi * f for f in np.geomspace(lo, hi, n))
        else:
            grid = (omega,)

        n_theta = int(effective["analysis.n_theta"])
        if n_theta < 3:
            raise ConfigError("analysis.n_theta: need at least 3 angles")

        power_w = None
        if "drive.power_mw" in effective:
            power_w = float(effective["drive.power_mw"]) * 1e-3
            if power_w < 0.0:
                raise ConfigError("drive.power_mw: must be non-negative")
        powers_w = tuple(
            float(p) * 1e-3 for p in effective["drive.powers_mw"]
        )
        if any(p < 0.0 for p in powers_w):
            raise ConfigError("drive.powers_mw: powers must be non-negative")

        rtol = float(effective["solver.residual_rtol"])
        if rtol <= 0.0:
            raise ConfigError("solver.residual_rtol: must be positive")
        seed = int(effective["seed"])
        if seed < 0:
            raise ConfigError("seed: must be non-negative")
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc

    return RunConfig(
        values=effective,
        model=model,
        chain=chain,
        power_w=power_w,
        powers_w=powers_w,
        omega=omega,
        omega_grid=grid,
        n_theta=n_theta,
        branch_policy=str(effective["solver.branch_policy"]),
        mode_index=mode_index,
        residual_rtol=rtol,
        seed=seed,
        calibration=calibration,
    )


def load_config(path, *, seed_override: int | None = None) -> RunConfig:
    """Read, parse, and resolve a config file."""
    with open(path, "r", encoding="utf-8") as handle:
        values = parse_config_text(handle.read())
    if seed_override is not None:
        if seed_override < 0:
            raise ConfigError("seed: must be non-negative")
        values["seed"] = int(seed_override)
    return resolve_config(values)
