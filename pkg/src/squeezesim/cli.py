"""Command-line front end.

Every command reads one flat config file, writes its results plus an
``effective_config.cfg`` echo into the output directory, and exits 0
only when it ran cleanly and every embedded check passed.  Outputs are
byte-reproducible for a fixed (config, seed) pair: floats are printed
with ``repr``, JSON keys are sorted, and no timestamps or host details
are embedded.  Exit codes: 0 success, 1 failed run or failed checks,
2 unusable configuration or command line.

Set ``SQUEEZESIM_LOG=debug|info|warning|error`` to control stderr
logging; logs never go into output files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from .config import ConfigError, RunConfig, load_config, parse_config_text
from .langevin import cross_validate, dump_series, segment_plan, simulate_pair
from .params import DomainError, PumpDrive
from .spectra import (
    SingularSystemError,
    optimal_quadratures_from_cov,
    output_covariance,
    pair_scattering,
    phase_scan_trace,
    spectrum_grid,
    squeezing_db,
    stability_margin,
    symplectic_eigenvalues,
    variance_db,
)
from .steady_state import (
    bistable_flux_window,
    is_bistable,
    solve_steady_state,
    threshold_intracavity,
    threshold_power,
)
from .params import HBAR
from .traces import (
    TraceParseError,
    analyze_trace,
    load_trace,
    q_statistics,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2

log = logging.getLogger("squeezesim")

_NEEDS_CONFIG = {"spectrum", "sweep", "phase-scan", "threshold", "validate"}


def _setup_logging() -> None:
    if log.handlers or logging.getLogger().handlers:
        return
    name = os.environ.get("SQUEEZESIM_LOG", "warning").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def _jsonify(obj):
    """Plain JSON types only; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def _json_text(obj) -> str:
    return json.dumps(_jsonify(obj), sort_keys=True, indent=2) + "\n"


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    log.info("wrote %s", path)
    return path


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_table(out_dir: Path, stem: str, header, rows, fmt: str) -> Path:
    if fmt == "csv":
        lines = [",".join(header)]
        lines.extend(",".join(_cell(v) for v in row) for row in rows)
        return _write(out_dir, stem + ".csv", "\n".join(lines) + "\n")
    records = [dict(zip(header, row)) for row in rows]
    return _write(out_dir, stem + ".json", _json_text(records))


def _solve_point(cfg: RunConfig, power_w: float):
    pump = PumpDrive.from_power(power_w, cfg.model.omega0)
    steady = solve_steady_state(
        cfg.model, pump, cfg.branch_policy, cfg.residual_rtol
    )
    margin = stability_margin(cfg.model, steady, cfg.mode_index)
    return steady, margin


def _summary_point(cfg: RunConfig, steady, omega: float):
    pair = pair_scattering(cfg.model, steady, omega, cfg.mode_index)
    cov = output_covariance(pair, cfg.eta_total)
    return optimal_quadratures_from_cov(cov)


def cmd_spectrum(cfg: RunConfig, args, out: Path) -> int:
    power_w = cfg.require_power()
    steady, margin = _solve_point(cfg, power_w)
    if margin <= 0.0:
        log.error(
            "operating point at %.6g mW is at or above pair threshold "
            "(stability margin %.6g rad/s); aborting",
            power_w * 1e3,
            margin,
        )
        return EXIT_FAIL
    thetas = np.linspace(0.0, math.pi, cfg.n_theta)
    grid = spectrum_grid(
        cfg.model,
        steady,
        cfg.omega_grid,
        thetas,
        l=cfg.mode_index,
        eta_total=cfg.eta_total,
    )
    rows = []
    for i, w in enumerate(grid.omegas):
        f_hz = w / (2.0 * math.pi)
        for j, th in enumerate(thetas):
            rows.append((f_hz, float(th), float(variance_db(grid.variance[i, j]))))
    _write_table(out, "spectrum", ("omega_hz", "theta_rad", "variance_db"), rows, args.format)

    ext = _summary_point(cfg, steady, cfg.omega)
    p_th = threshold_power(cfg.model, cfg.mode_index) if cfg.model.g0 > 0 else math.inf
    summary = {
        "power_mw": power_w * 1e3,
        "omega_hz": cfg.omega / (2.0 * math.pi),
        "squeezing_db": float(squeezing_db(ext.var_min)),
        "anti_squeezing_db": float(variance_db(ext.var_max)),
        "theta_opt_rad": float(ext.theta_min),
        "rho": steady.rho,
        "branch": steady.branch,
        "delta_eff_rad_s": steady.delta_eff,
        "threshold_margin_rad_s": margin,
        "threshold_power_mw": p_th * 1e3,
        "g0_rad_s": cfg.model.g0,
        "eta_escape": cfg.model.eta_escape,
        "eta_chain": cfg.eta_total,
        "eta_end_to_end": cfg.eta_end_to_end,
        "n_omega": int(grid.omegas.size),
        "n_theta": int(thetas.size),
    }
    if cfg.calibration is not None:
        summary["calibration"] = {
            "g0_rad_s": cfg.calibration.g0,
            "x_opt": cfg.calibration.x_opt,
            "rho": cfg.calibration.rho,
            "branch": cfg.calibration.branch,
        }
    _write(out, "spectrum_summary.json", _json_text(summary))
    log.info(
        "squeezing %.3f dB, anti-squeezing %.3f dB at %.4g Hz",
        summary["squeezing_db"],
        summary["anti_squeezing_db"],
        summary["omega_hz"],
    )
    return EXIT_OK


def _sweep_point(payload):
    model, power_w, omega, l, eta, policy, rtol = payload
    pump = PumpDrive.from_power(power_w, model.omega0)
    steady = solve_steady_state(model, pump, policy, rtol)
    margin = stability_margin(model, steady, l)
    if margin <= 0.0:
        return (power_w * 1e3, math.nan, math.nan, steady.rho, 1)
    pair = pair_scattering(model, steady, omega, l)
    ext = optimal_quadratures_from_cov(output_covariance(pair, eta))
    return (
        power_w * 1e3,
        float(variance_db(ext.var_min)),
        float(variance_db(ext.var_max)),
        steady.rho,
        0,
    )


def cmd_sweep(cfg: RunConfig, args, out: Path) -> int:
    payloads = [
        (
            cfg.model,
            p,
            cfg.omega,
            cfg.mode_index,
            cfg.eta_total,
            cfg.branch_policy,
            cfg.residual_rtol,
        )
        for p in cfg.powers_w
    ]
    jobs = max(1, int(args.jobs))
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(payloads))) as pool:
            rows = list(pool.map(_sweep_point, payloads))
    else:
        rows = [_sweep_point(p) for p in payloads]
    header = ("power_mw", "s_min_db", "s_max_db", "rho", "threshold_flag")
    typed = [(p, smin, smax, rho, int(flag)) for p, smin, smax, rho, flag in rows]
    _write_table(out, "sweep", header, typed, args.format)
    n_above = sum(r[4] for r in typed)
    log.info("%d sweep points, %d above threshold", len(typed), n_above)
    return EXIT_OK


def cmd_phase_scan(cfg: RunConfig, args, out: Path) -> int:
    power_w = cfg.require_power()
    steady, margin = _solve_point(cfg, power_w)
    if margin <= 0.0:
        log.error("operating point is at or above pair threshold; aborting")
        return EXIT_FAIL
    trace = phase_scan_trace(
        cfg.model,
        steady,
        cfg.omega,
        l=cfg.mode_index,
        eta_total=cfg.eta_total,
        periods=int(cfg.opt("analysis.periods")),
        samples_per_period=int(cfg.opt("analysis.samples_per_period")),
        scan_time=float(cfg.opt("analysis.scan_time_s")),
        rbw=float(cfg.opt("analysis.rbw_hz")),
        vbw=float(cfg.opt("analysis.vbw_hz")),
        seed=cfg.seed,
    )
    rows = list(
        zip(trace.time_s, trace.theta, trace.measured_db, trace.shot_db, trace.true_db)
    )
    header = ("time_s", "theta_rad", "measured_db", "shot_db", "true_db")
    _write_table(out, "phase_scan", header, rows, args.format)
    return EXIT_OK


def cmd_threshold(cfg: RunConfig, args, out: Path) -> int:
    l = cfg.mode_index
    rho_th = threshold_intracavity(cfg.model, l)
    p_th = threshold_power(cfg.model, l)
    report = {
        "threshold_power_mw": p_th * 1e3,
        "threshold_intracavity_photons": rho_th,
        "g0_rad_s": cfg.model.g0,
        "kappa_rad_s": cfg.model.kappa,
        "detuning_rad_s": cfg.model.delta,
        "d2_rad_s": cfg.model.d2,
        "mode_index": l,
        "bistable": is_bistable(cfg.model),
        "bistable_window_mw": None,
    }
    if report["bistable"]:
        lo, hi = bistable_flux_window(cfg.model)
        scale = HBAR * cfg.model.omega0 * 1e3
        report["bistable_window_mw"] = [lo * scale, hi * scale]
    if cfg.power_w is not None:
        steady, margin = _solve_point(cfg, cfg.power_w)
        report["at_power"] = {
            "power_mw": cfg.power_w * 1e3,
            "rho": steady.rho,
            "branch": steady.branch,
            "stability_margin_rad_s": margin,
            "below_threshold": margin > 0.0,
        }
    _write(out, "threshold.json", _json_text(report))
    return EXIT_OK


_FIT_DEFAULTS = {
    "fit.regime": "overcoupled",
    "fit.detrend": True,
    "fit.min_prominence": 0.05,
    "fit.min_spacing_nm": 0.0,
    "fit.min_samples_per_fwhm": 15,
}


def _fit_opts(cfg: RunConfig | None) -> dict:
    if cfg is None:
        return dict(_FIT_DEFAULTS)
    return {k: cfg.opt(k) for k in _FIT_DEFAULTS}


def _stats_payload(fits) -> dict:
    stats = q_statistics(fits)
    payload = {"n_fits": stats.n_fits}
    for name in ("q_intrinsic", "q_loaded", "q_coupling", "eta"):
        summary = getattr(stats, name)
        payload[name] = {
            "mode": summary.mode,
            "min": summary.minimum,
            "max": summary.maximum,
            "counts": list(summary.counts),
            "bin_edges": list(summary.bin_edges),
        }
    return payload


def cmd_fit(cfg: RunConfig | None, args, out: Path) -> int:
    opts = _fit_opts(cfg)
    regime = opts["fit.regime"]
    prior = None if regime == "ambiguous" else regime
    records = []
    fits = []
    per_trace = []
    for path in args.traces:
        trace = load_trace(path, detrend=False)
        report = analyze_trace(
            trace,
            detrend=bool(opts["fit.detrend"]),
            min_prominence=float(opts["fit.min_prominence"]),
            min_spacing_nm=float(opts["fit.min_spacing_nm"]),
            regime=prior,
            min_samples_per_fwhm=int(opts["fit.min_samples_per_fwhm"]),
        )
        for fit in report.resonances:
            record = dataclasses.asdict(fit)
            record["source"] = str(path)
            records.append(record)
            fits.append(fit)
        per_trace.append(
            {
                "source": str(path),
                "n_detected": report.n_detected,
                "n_rejected": report.n_rejected,
                "fsr_hz": report.fsr_hz,
            }
        )
        log.info(
            "%s: %d resonances fitted, %d rejected",
            path,
            report.n_detected - report.n_rejected,
            report.n_rejected,
        )
    _write(out, "fits.json", _json_text(records))
    stats_report = {"traces": per_trace, "n_traces": len(per_trace)}
    if fits:
        stats_report.update(_stats_payload(fits))
    else:
        stats_report["n_fits"] = 0
    _write(out, "fit_stats.json", _json_text(stats_report))
    if not fits:
        log.error("no resonances could be fitted in %d trace(s)", len(per_trace))
        return EXIT_FAIL
    return EXIT_OK


def cmd_stats(cfg: RunConfig | None, args, out: Path) -> int:
    records = []
    for path in args.fits:
        with open(path, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, list):
            raise DomainError(f"{path}: expected a JSON list of fit records")
        records.extend(loaded)
    fits = []
    for i, rec in enumerate(records):
        try:
            fits.append(
                SimpleNamespace(
                    q_intrinsic=float(rec["q_intrinsic"]) if rec["q_intrinsic"] is not None else math.inf,
                    q_loaded=float(rec["q_loaded"]),
                    q_coupling=float(rec["q_coupling"]),
                    eta=float(rec["eta"]),
                )
            )
        except (KeyError, TypeError) as exc:
            raise DomainError(f"fit record {i}: missing field {exc}") from None
    if not fits:
        log.error("no fit records found")
        return EXIT_FAIL
    _write(out, "fit_stats.json", _json_text(_stats_payload(fits)))
    return EXIT_OK


def _physicality_check(cfg: RunConfig, rng: np.random.Generator, n_random: int) -> dict:
    model = cfg.model
    p_th = threshold_power(model, cfg.mode_index) if model.g0 > 0 else math.inf
    if math.isfinite(p_th):
        p_cap = 0.98 * p_th
    else:
        stated = [p for p in cfg.powers_w] + ([cfg.power_w] if cfg.power_w else [])
        p_cap = 2.0 * max(stated) if stated and max(stated) > 0 else 0.05
    min_nu = math.inf
    min_prod = math.inf
    min_slack = math.inf
    worst_vacuum = 0.0
    used = 0
    for _ in range(n_random):
        power = float(rng.uniform(0.0, p_cap))
        omega = float(model.kappa * 10.0 ** rng.uniform(-3.0, math.log10(3.0)))
        steady, margin = _solve_point(cfg, power)
        if margin <= 0.0:
            continue
        used += 1
        pair = pair_scattering(model, steady, omega, cfg.mode_index)
        cov = output_covariance(pair, cfg.eta_total)
        min_nu = min(min_nu, float(symplectic_eigenvalues(cov)[0]))
        ext = optimal_quadratures_from_cov(cov)
        min_prod = min(min_prod, ext.var_min * ext.var_max)
        min_slack = min(min_slack, ext.var_min - (1.0 - cfg.eta_total))
    vac_steady, _ = _solve_point(cfg, 0.0)
    vac = _summary_point(cfg, vac_steady, cfg.omega)
    worst_vacuum = max(abs(vac.var_min - 1.0), abs(vac.var_max - 1.0))
    passed = (
        used >= n_random // 2
        and min_nu >= 1.0 - 1e-9
        and min_prod >= 1.0 - 1e-9
        and min_slack >= -1e-9
        and worst_vacuum <= 1e-12
    )
    return {
        "name": "physicality_random",
        "passed": passed,
        "n_draws": n_random,
        "n_usable": used,
        "min_symplectic_eigenvalue": min_nu,
        "min_variance_product": min_prod,
        "min_loss_floor_slack": min_slack,
        "vacuum_deviation": worst_vacuum,
    }


def cmd_validate(cfg: RunConfig, args, out: Path) -> int:
    checks = []

    echoed = parse_config_text(cfg.echo_text())
    roundtrip_ok = echoed == dict(cfg.values)
    checks.append({"name": "config_roundtrip", "passed": bool(roundtrip_ok)})

    powers = list(cfg.powers_w) or ([cfg.power_w] if cfg.power_w is not None else [0.0])
    for power in powers:
        steady, margin = _solve_point(cfg, power)
        checks.append(
            {
                "name": "below_threshold",
                "power_mw": power * 1e3,
                "passed": margin > 0.0,
                "margin_rad_s": margin,
                "margin_over_kappa": margin / cfg.model.kappa,
                "branch": steady.branch,
            }
        )

    rng = np.random.default_rng(cfg.seed)
    checks.append(_physicality_check(cfg, rng, int(cfg.opt("validate.n_random"))))

    cv_power = cfg.power_w if cfg.power_w is not None else (powers[-1] if powers else 0.0)
    steady, margin = _solve_point(cfg, cv_power)
    if margin <= 0.0:
        checks.append(
            {
                "name": "stochastic_crossval",
                "passed": False,
                "detail": "configured power is at or above threshold",
            }
        )
    else:
        kappa = cfg.model.kappa
        omegas = [0.05 * kappa, 0.5 * kappa, 2.0 * kappa]
        cv = cross_validate(
            cfg.model,
            steady,
            omegas,
            eta_total=cfg.eta_total,
            l=cfg.mode_index,
            n_segments=int(cfg.opt("validate.n_segments")),
            seed=cfg.seed,
            batch_size=int(cfg.opt("validate.batch_size")),
            n_sigma=float(cfg.opt("validate.n_sigma")),
            max_db_err=float(cfg.opt("validate.max_db_err")),
            min_pass_fraction=float(cfg.opt("validate.min_pass_fraction")),
        )
        checks.append(
            {
                "name": "stochastic_crossval",
                "passed": bool(cv.passed),
                "pass_fraction": cv.pass_fraction,
                "n_bins": len(cv.checks),
                "n_segments": cv.n_segments,
                "power_mw": cv_power * 1e3,
                "max_abs_z": max(abs(c.z) for c in cv.checks),
                "max_abs_delta_db": max(abs(c.delta_db) for c in cv.checks),
            }
        )
        if args.dump_series:
            dt, n = segment_plan(kappa, cfg.omega)
            run = simulate_pair(
                cfg.model,
                steady,
                dt=dt,
                n_samples=n,
                n_segments=8,
                thetas=(0.0, 0.25 * math.pi, 0.5 * math.pi),
                eta_total=cfg.eta_total,
                l=cfg.mode_index,
                seed=cfg.seed,
            )
            dump_series(out / "series.bin", run)
            log.info("wrote %s", out / "series.bin")

    passed = all(c["passed"] for c in checks)
    report = {
        "passed": passed,
        "n_checks": len(checks),
        "n_failed": sum(not c["passed"] for c in checks),
        "checks": checks,
    }
    _write(out, "validate_report.json", _json_text(report))
    if not passed:
        for check in checks:
            if not check["passed"]:
                log.error("check failed: %s", check["name"])
    return EXIT_OK if passed else EXIT_FAIL


_DISPATCH = {
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "phase-scan": cmd_phase_scan,
    "threshold": cmd_threshold,
    "fit": cmd_fit,
    "stats": cmd_stats,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run configuration file")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory")
    common.add_argument(
        "--seed", metavar="U64", type=int, default=None, help="override config seed"
    )
    common.add_argument(
        "--jobs",
        metavar="N",
        type=int,
        default=os.cpu_count() or 1,
        help="worker processes for sweeps",
    )
    common.add_argument(
        "--format", choices=("csv", "json"), default="csv", help="tabular output format"
    )
    parser = argparse.ArgumentParser(
        prog="squeezesim",
        description="Simulate and analyze below-threshold Kerr pair generation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser(
        "spectrum",
        parents=[common],
        help="noise spectra over the frequency/angle grid at one power",
    )
    sub.add_parser("sweep", parents=[common], help="squeezing extrema versus power")
    sub.add_parser(
        "phase-scan",
        parents=[common],
        help="synthetic spectrum-analyzer trace of a homodyne phase ramp",
    )
    fit = sub.add_parser(
        "fit", parents=[common], help="fit resonances in transmission traces"
    )
    fit.add_argument("traces", nargs="+", metavar="TRACE", help="trace CSV files")
    stats = sub.add_parser(
        "stats", parents=[common], help="aggregate statistics over saved fit records"
    )
    stats.add_argument("fits", nargs="+", metavar="FITS_JSON", help="fits.json files")
    sub.add_parser(
        "threshold", parents=[common], help="pair oscillation threshold summary"
    )
    validate = sub.add_parser(
        "validate",
        parents=[common],
        help="run the invariant suite and the stochastic cross-check",
    )
    validate.add_argument(
        "--dump-series",
        action="store_true",
        help="also dump a short raw homodyne record (series.bin)",
    )
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = None
        if args.config is not None:
            try:
                cfg = load_config(args.config, seed_override=args.seed)
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
        elif args.command in _NEEDS_CONFIG:
            raise ConfigError(f"--config is required for '{args.command}'")
        out = Path(args.out)
        if cfg is not None:
            _write(out, "effective_config.cfg", cfg.echo_text())
        return _DISPATCH[args.command](cfg, args, out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        log.error("missing file: %s", exc)
        return EXIT_FAIL
    except (DomainError, TraceParseError, SingularSystemError) as exc:
        log.error("%s", exc)
        return EXIT_FAIL
    except RuntimeError as exc:
        log.error("%s", exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
