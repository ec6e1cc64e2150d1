"""Release acceptance gate.

One test per criterion, so `pytest -v tests/test_acceptance.py` prints one
pass/fail line each.  Every test also prints a CRITERION summary with the
measured numbers; pytest shows it with -s, and automatically on failure.

Criterion 3 runs the stochastic engine at three pump levels and dominates
the wall time (roughly a minute per pump level).
"""

import dataclasses
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.constants import c as C_LIGHT

from squeezesim.cli import main as cli_main
from squeezesim.langevin import cross_validate
from squeezesim.params import (
    HBAR,
    PumpDrive,
    ResonatorModel,
    detection_chain_total,
    escape_efficiency,
    kappa_from_q,
    max_onchip_squeezing_db,
    wavelength_to_omega,
)
from squeezesim.spectra import (
    calibrate_g0_to_optimum,
    homodyne_variance,
    optimal_quadratures_from_cov,
    output_covariance,
    pair_scattering,
    power_sweep,
    stability_margin,
    symplectic_eigenvalues,
)
from squeezesim.steady_state import cubic_roots_scaled, solve_steady_state
from squeezesim.traces import (
    TransmissionTrace,
    analyze_trace,
    fit_resonance,
    fwhm_pm,
    resonance_t_min,
    synthesize_trace,
)

from test_spectra import make_model, pure_point, steady_at_x

ETA_TOTAL = 0.602
LAMBDA0_NM = 1560.0
Q_INTRINSIC = 10.1e6
Q_LOADED = 0.83e6


def test_criterion_1_closed_form_anchors():
    """Named efficiency helpers hit their reference values to 3 sig figs."""
    t0 = time.perf_counter()
    got = {
        "escape_efficiency(10.1e6, 0.83e6)": (
            escape_efficiency(10.1e6, 0.83e6), 0.9178),
        "max_onchip_squeezing_db(0.91)": (max_onchip_squeezing_db(0.91), 10.46),
        "max_onchip_squeezing_db(0.75)": (max_onchip_squeezing_db(0.75), 6.02),
        "detection_chain_total(0.75, 0.95, 0.98, 0.88)": (
            detection_chain_total(0.75, 0.95, 0.98, 0.88), 0.602),
    }
    elapsed = time.perf_counter() - t0
    for label, (value, expected) in got.items():
        assert f"{value:.3g}" == f"{expected:.3g}", (
            f"CRITERION 1: FAIL — {label} = {value!r}, "
            f"expected {expected} to 3 significant figures"
        )
    assert elapsed < 1.0, f"CRITERION 1: FAIL — took {elapsed:.3f} s"
    print(
        "CRITERION 1: PASS — "
        + ", ".join(f"{k} = {v:.6g}" for k, (v, _) in got.items())
        + f" ({elapsed * 1e3:.2f} ms)"
    )


def test_criterion_2_calibrated_power_sweep_bands():
    """Zero-detuning sweep with the stated loss budget hits the quoted bands.

    The calibration pins the squeezing optimum to 50 mW and the sweep is
    asserted against the published-style bands.  Measured values are
    printed unconditionally so a failure reports the achieved levels.
    """
    t0 = time.perf_counter()
    omega0 = wavelength_to_omega(LAMBDA0_NM * 1e-9)
    kappa = kappa_from_q(omega0, Q_LOADED)
    eta_esc = 0.918
    model = ResonatorModel(
        omega0=omega0,
        kappa_i=(1.0 - eta_esc) * kappa,
        kappa_e=eta_esc * kappa,
        delta=0.0,
        d2=0.0,
        g0=1.0,
    )
    omega = 2.0 * math.pi * 7e6
    pump = PumpDrive.from_power(50e-3, omega0)
    cal = calibrate_g0_to_optimum(model, pump, omega=omega, eta_total=ETA_TOTAL)
    calibrated = dataclasses.replace(model, g0=cal.g0)
    powers = np.linspace(0.0, 50e-3, 26)
    sweep = power_sweep(calibrated, powers, omega=omega, eta_total=ETA_TOTAL)
    squeezing_db = -10.0 * np.log10(sweep.var_min)
    anti_db = 10.0 * np.log10(sweep.var_max)
    elapsed = time.perf_counter() - t0
    sq, anti = float(squeezing_db[-1]), float(anti_db[-1])
    print(
        f"CRITERION 2 measured: squeezing {sq:.4f} dB, anti-squeezing "
        f"{anti:.4f} dB at 50 mW; g0 = {cal.g0:.6g} rad/s ({elapsed:.2f} s)"
    )
    assert elapsed < 10.0, f"CRITERION 2: FAIL — took {elapsed:.1f} s"
    assert np.all(np.diff(anti_db) > 0.0), (
        "CRITERION 2: FAIL — anti-squeezing is not monotone over the sweep"
    )
    assert int(np.nanargmax(squeezing_db)) == powers.size - 1, (
        "CRITERION 2: FAIL — calibrated optimum did not land at 50 mW"
    )
    assert 2.8 <= sq <= 3.4 and 5.3 <= anti <= 6.7, (
        f"CRITERION 2: FAIL — measured {sq:.3f} dB squeezing (band [2.8, 3.4]) "
        f"and {anti:.3f} dB anti-squeezing (band [5.3, 6.7]); at zero detuning "
        f"this loss budget caps the detected pair near 2.0/3.2 dB"
    )
    print(f"CRITERION 2: PASS — {sq:.3f} dB / {anti:.3f} dB at 50 mW")


def test_criterion_3_stochastic_oracle_equivalence():
    """Analytic spectra match the stochastic engine across pump and frequency.

    Five frequencies log-spaced over [0.01*kappa, 3*kappa], three homodyne
    angles, at zero pump and at 0.5x / 0.9x of the pair-instability photon
    number.  A bin passes when it sits within 3 sigma and within 0.1 dB of
    the closed form; at least 95% of all bins must pass.
    """
    model = make_model(2.0)
    omegas = np.geomspace(0.01 * model.kappa, 3.0 * model.kappa, 5)
    all_checks = []
    lines = []
    for fraction in (0.0, 0.5, 0.9):
        steady, _ = steady_at_x(model, fraction)
        cv = cross_validate(
            model,
            steady,
            omegas,
            eta_total=ETA_TOTAL,
            n_segments=17000,
            seed=20260819,
        )
        assert cv.runtime_s < 300.0, (
            f"CRITERION 3: FAIL — pump point {fraction:g} took {cv.runtime_s:.0f} s"
        )
        all_checks.extend(cv.checks)
        worst_z = max(abs(c.z) for c in cv.checks)
        worst_db = max(abs(c.delta_db) for c in cv.checks)
        lines.append(
            f"pump {fraction:.1f}x: {cv.pass_fraction:.0%} of "
            f"{len(cv.checks)} bins, max|z| {worst_z:.2f}, "
            f"max|d| {worst_db:.3f} dB, {cv.runtime_s:.0f} s"
        )
    frac = sum(c.passed for c in all_checks) / len(all_checks)
    failed = [c for c in all_checks if not c.passed]
    assert frac >= 0.95, (
        f"CRITERION 3: FAIL — only {frac:.1%} of {len(all_checks)} bins agree; "
        + "; ".join(
            f"omega={c.omega:.3g} theta={c.theta:.2f} z={c.z:.2f} "
            f"d={c.delta_db:.3f} dB"
            for c in failed
        )
    )
    print("CRITERION 3: PASS — " + "; ".join(lines))


def test_criterion_4_randomized_physicality():
    """Every randomly drawn below-threshold output state is physical."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(715)
    n_target = 1000
    n_ok = 0
    n_draws = 0
    min_nu = math.inf
    min_product = math.inf
    min_slack = math.inf
    while n_ok < n_target:
        n_draws += 1
        assert n_draws < 50 * n_target, "CRITERION 4: FAIL — rejection loop stuck"
        model = make_model(
            rng.uniform(-1.0, 3.0),
            eta_esc=rng.uniform(0.55, 0.999),
            d2=rng.uniform(-1.0, 1.5),
        )
        try:
            steady, _ = steady_at_x(model, rng.uniform(0.0, 1.1))
        except Exception:
            continue
        # keep a finite gap to the pair instability so the draw is valid
        if stability_margin(model, steady) < 0.01 * 0.5 * model.kappa:
            continue
        eta = rng.uniform(0.3, 1.0)
        pair = pair_scattering(model, steady, rng.uniform(0.0, 3.0 * model.kappa))
        cov = output_covariance(pair, eta)
        nu = symplectic_eigenvalues(cov)
        ext = optimal_quadratures_from_cov(cov)
        min_nu = min(min_nu, float(nu[0]))
        min_product = min(min_product, ext.var_min * ext.var_max)
        min_slack = min(min_slack, ext.var_min - (1.0 - eta))
        n_ok += 1
    thetas = np.linspace(0.0, math.pi, 37)
    worst_vacuum = 0.0
    for _ in range(50):
        model = make_model(rng.uniform(-1.0, 3.0), eta_esc=rng.uniform(0.55, 0.999))
        steady, _ = steady_at_x(model, 0.0)
        pair = pair_scattering(model, steady, rng.uniform(0.0, 3.0 * model.kappa))
        cov = output_covariance(pair, rng.uniform(0.3, 1.0))
        dev = np.max(np.abs(homodyne_variance(cov, thetas) - 1.0))
        worst_vacuum = max(worst_vacuum, float(dev))
    elapsed = time.perf_counter() - t0
    assert min_nu >= 1.0 - 1e-9, (
        f"CRITERION 4: FAIL — smallest symplectic eigenvalue {min_nu!r}"
    )
    assert min_product >= 1.0 - 1e-9, (
        f"CRITERION 4: FAIL — uncertainty product {min_product!r}"
    )
    assert min_slack >= -1e-9, (
        f"CRITERION 4: FAIL — variance dipped below the loss floor by {-min_slack!r}"
    )
    assert worst_vacuum <= 1e-12, (
        f"CRITERION 4: FAIL — zero-pump variance off by {worst_vacuum!r}"
    )
    assert elapsed < 60.0, f"CRITERION 4: FAIL — took {elapsed:.1f} s"
    print(
        f"CRITERION 4: PASS — {n_ok} sets ({n_draws} draws), min nu-1 "
        f"{min_nu - 1.0:.2e}, min product-1 {min_product - 1.0:.2e}, "
        f"min loss-floor slack {min_slack:.2e}, vacuum dev {worst_vacuum:.1e}, "
        f"{elapsed:.2f} s"
    )


def test_criterion_5_pure_state_limit():
    """Lossless on-resonance pair at x = 0.5 stays minimum-uncertainty."""
    t0 = time.perf_counter()
    x = 0.5
    model, steady = pure_point(x)
    pair = pair_scattering(model, steady, 0.0)
    ext = optimal_quadratures_from_cov(output_covariance(pair, 1.0))
    product = ext.var_min * ext.var_max
    # independent route: with kappa_i = 0 and the pair on resonance the
    # squeezed collective quadrature is a single decay channel, so the
    # output is plain reflection off that one pole
    hk = 0.5 * model.kappa
    g = abs(model.g0) * steady.rho
    reflection = model.kappa_e / (hk + g) - 1.0
    oracle = reflection * reflection
    closed_form = (1.0 - x) ** 2 / (1.0 + x) ** 2
    elapsed = time.perf_counter() - t0
    assert abs(product - 1.0) <= 1e-6, (
        f"CRITERION 5: FAIL — uncertainty product {product!r}"
    )
    assert abs(ext.var_min - closed_form) <= 1e-9, (
        f"CRITERION 5: FAIL — var_min {ext.var_min!r} vs (1-x)^2/(1+x)^2 "
        f"= {closed_form!r}"
    )
    assert abs(ext.var_min - oracle) <= 1e-9, (
        f"CRITERION 5: FAIL — var_min {ext.var_min!r} vs one-pole reflection "
        f"{oracle!r}"
    )
    print(
        f"CRITERION 5: PASS — var_min {ext.var_min:.12f} (= 1/9), product - 1 "
        f"= {product - 1.0:.2e} ({elapsed * 1e3:.2f} ms)"
    )


def _bisection_roots(alpha: float, beta: float) -> np.ndarray:
    """All real roots of u*(1+(alpha-u)^2) = beta by interval bisection.

    The cubic is monotone between its critical points, so checking the
    sign at each critical point gives the exact root count with one
    bisection per monotone interval.  Deliberately shares nothing with
    the production eigenvalue-based root finder.
    """

    def f(u: float) -> float:
        return u * (1.0 + (alpha - u) ** 2) - beta

    disc = alpha * alpha - 3.0
    crit = []
    if disc > 0.0:
        r = math.sqrt(disc)
        crit = [(2.0 * alpha - r) / 3.0, (2.0 * alpha + r) / 3.0]
    hi = 2.0 * abs(alpha) + beta + 2.0
    edges = [0.0] + [c for c in crit if 0.0 < c < hi] + [hi]
    roots = []
    for a, b in zip(edges[:-1], edges[1:]):
        fa, fb = f(a), f(b)
        if fa == 0.0:
            roots.append(a)
            continue
        if fa * fb > 0.0:
            continue
        for _ in range(110):
            mid = 0.5 * (a + b)
            fm = f(mid)
            if fm == 0.0:
                a = b = mid
                break
            if fa * fm < 0.0:
                b = mid
            else:
                a, fa = mid, fm
        roots.append(0.5 * (a + b))
    out = []
    for root in sorted(roots):
        if not out or abs(root - out[-1]) > 1e-12 * max(1.0, abs(root)):
            out.append(root)
    return np.asarray(out)


def test_criterion_6_steady_state_grid():
    """Production roots match blind bisection over a grid crossing bistability."""
    t0 = time.perf_counter()
    eta_esc = 0.9178
    model0 = make_model(0.0, eta_esc=eta_esc)
    hk = 0.5 * model0.kappa
    worst_rel = 0.0
    worst_scaled_res = 0.0
    worst_phys_res = 0.0
    n_cells = 0
    n_multi = 0
    for alpha in np.linspace(1.2, 4.2, 100):
        disc = alpha * alpha - 3.0
        if disc > 0.0:
            r = math.sqrt(disc)
            knee_lo = (2.0 * alpha - r) / 3.0
            knee_hi = (2.0 * alpha + r) / 3.0
            f_lo = knee_hi * (1.0 + (alpha - knee_hi) ** 2)
            f_hi = knee_lo * (1.0 + (alpha - knee_lo) ** 2)
            betas = np.linspace(0.5 * f_lo, 1.5 * f_hi, 100)
        else:
            center = (2.0 * alpha / 3.0) * (1.0 + (alpha / 3.0) ** 2)
            scale = max(center, 0.3)
            betas = np.linspace(0.1 * scale, 2.5 * scale, 100)
        model = dataclasses.replace(model0, delta=alpha * hk)
        for beta in betas:
            n_cells += 1
            produced = np.sort(cubic_roots_scaled(alpha, beta))
            reference = _bisection_roots(alpha, beta)
            assert produced.size == reference.size, (
                f"CRITERION 6: FAIL — alpha={alpha:.6f} beta={beta:.6f}: "
                f"{produced.size} roots vs {reference.size} by bisection"
            )
            if produced.size > 1:
                n_multi += 1
            rel = np.max(
                np.abs(produced - reference) / np.maximum(np.abs(reference), 1e-300)
            )
            worst_rel = max(worst_rel, float(rel))
            res = np.max(
                np.abs(produced * (1.0 + (alpha - produced) ** 2) - beta)
            ) / max(1.0, beta)
            worst_scaled_res = max(worst_scaled_res, float(res))
            # same cell through the physical solver; residual is checked
            # against the drive amplitude scale
            flux = beta * hk ** 3 / (model.g0 * model.kappa_e)
            pump = PumpDrive(
                power_on_chip=flux * HBAR * model.omega0,
                flux=flux,
                a_in=math.sqrt(flux),
            )
            drive = math.sqrt(model.kappa_e * flux)
            for policy in ("lowest", "highest"):
                steady = solve_steady_state(model, pump, policy)
                worst_phys_res = max(
                    worst_phys_res, steady.residual / max(1.0, drive)
                )
    assert n_multi > 1000, "CRITERION 6: FAIL — grid missed the bistable region"
    assert worst_rel <= 1e-8, (
        f"CRITERION 6: FAIL — worst root disagreement {worst_rel:.3e} relative"
    )
    assert worst_scaled_res <= 1e-10, (
        f"CRITERION 6: FAIL — worst cubic residual {worst_scaled_res:.3e}"
    )
    assert worst_phys_res <= 1e-10, (
        f"CRITERION 6: FAIL — worst solver residual {worst_phys_res:.3e}"
    )
    # vanishing Kerr shift reduces to the linear-cavity Lorentzian
    rng = np.random.default_rng(20)
    worst_linear = 0.0
    for _ in range(100):
        alpha = rng.uniform(-3.0, 3.0)
        flux = rng.uniform(0.05, 3.0)
        tiny = dataclasses.replace(model0, delta=alpha * hk, g0=1e-12)
        pump = PumpDrive(
            power_on_chip=flux * HBAR * tiny.omega0,
            flux=flux,
            a_in=math.sqrt(flux),
        )
        steady = solve_steady_state(tiny, pump, "lowest")
        linear = tiny.kappa_e * flux / (hk * hk + tiny.delta ** 2)
        worst_linear = max(worst_linear, abs(steady.rho - linear) / linear)
    elapsed = time.perf_counter() - t0
    assert worst_linear <= 1e-10, (
        f"CRITERION 6: FAIL — g0->0 limit off by {worst_linear:.3e} relative"
    )
    assert elapsed < 30.0, f"CRITERION 6: FAIL — took {elapsed:.1f} s"
    print(
        f"CRITERION 6: PASS — {n_cells} cells ({n_multi} multivalued), worst "
        f"root rel {worst_rel:.1e}, cubic residual {worst_scaled_res:.1e}, "
        f"solver residual {worst_phys_res:.1e}, linear-limit rel "
        f"{worst_linear:.1e}, {elapsed:.1f} s"
    )


def test_criterion_7_fit_round_trip():
    """Dip fits recover the quality factors and comb spacings they came from."""
    t0 = time.perf_counter()
    omega0 = wavelength_to_omega(LAMBDA0_NM * 1e-9)
    kappa = kappa_from_q(omega0, Q_LOADED)
    kappa_i = kappa_from_q(omega0, Q_INTRINSIC)
    t_floor = resonance_t_min(kappa - kappa_i, kappa_i)
    half_nm = 15.0 * fwhm_pm(kappa, LAMBDA0_NM) * 1e-3
    lam = np.linspace(LAMBDA0_NM - half_nm, LAMBDA0_NM + half_nm, 8001)

    clean = synthesize_trace(lam, [(LAMBDA0_NM, kappa, t_floor)])
    fit = fit_resonance(lam, clean, regime="overcoupled")
    rel_qi = abs(fit.q_intrinsic - Q_INTRINSIC) / Q_INTRINSIC
    rel_ql = abs(fit.q_loaded - Q_LOADED) / Q_LOADED
    assert rel_qi <= 1e-6 and rel_ql <= 1e-6, (
        f"CRITERION 7: FAIL — noiseless recovery rel errors {rel_qi:.2e} (Qi), "
        f"{rel_ql:.2e} (QL)"
    )

    worst_qi = worst_ql = 0.0
    for seed in range(100):
        noisy = synthesize_trace(
            lam, [(LAMBDA0_NM, kappa, t_floor)], noise_rms=0.01, seed=seed
        )
        noisy_fit = fit_resonance(lam, noisy, regime="overcoupled")
        worst_qi = max(worst_qi, abs(noisy_fit.q_intrinsic - Q_INTRINSIC) / Q_INTRINSIC)
        worst_ql = max(worst_ql, abs(noisy_fit.q_loaded - Q_LOADED) / Q_LOADED)
    assert worst_qi <= 0.02 and worst_ql <= 0.02, (
        f"CRITERION 7: FAIL — 1% noise worst rel errors {worst_qi:.4f} (Qi), "
        f"{worst_ql:.4f} (QL) over 100 seeds"
    )

    fsr_rel = {}
    for fsr_hz, line_q, n_points in ((59.3e9, Q_LOADED, 120001), (603e9, 1.2e5, 240001)):
        nu0 = C_LIGHT / (LAMBDA0_NM * 1e-9)
        centers = [C_LIGHT / (nu0 + k * fsr_hz) * 1e9 for k in range(-6, 7)]
        kappa_line = kappa_from_q(omega0, line_q)
        grid = np.linspace(min(centers) - 0.3, max(centers) + 0.3, n_points)
        comb = synthesize_trace(grid, [(c, kappa_line, t_floor) for c in centers])
        report = analyze_trace(
            TransmissionTrace(wavelength_nm=grid, transmission=comb), detrend=False
        )
        assert report.fsr_hz is not None and len(report.resonances) == len(centers), (
            f"CRITERION 7: FAIL — comb at {fsr_hz:.3g} Hz: found "
            f"{len(report.resonances)} of {len(centers)} resonances"
        )
        rel = abs(report.fsr_hz - fsr_hz) / fsr_hz
        fsr_rel[fsr_hz] = rel
        assert rel <= 1e-3, (
            f"CRITERION 7: FAIL — comb spacing {fsr_hz:.3g} Hz recovered with "
            f"relative error {rel:.2e}"
        )
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"CRITERION 7: FAIL — took {elapsed:.1f} s"
    print(
        f"CRITERION 7: PASS — clean rel {max(rel_qi, rel_ql):.1e}, noisy worst "
        f"rel {max(worst_qi, worst_ql):.4f}, comb spacing rel "
        + ", ".join(f"{k:.3g} Hz: {v:.1e}" for k, v in fsr_rel.items())
        + f", {elapsed:.1f} s"
    )


_DETERMINISM_CFG = """\
seed = 7
resonator.wavelength_nm = 1560.0
resonator.q_intrinsic = 10.1e6
resonator.q_loaded = 0.83e6
resonator.d2_rad_s = 1.5e9
resonator.g0_rad_s = 0.5
drive.detuning_rad_s = 6.0e8
drive.power_mw = 20.0
drive.powers_mw = 0.0, 10.0, 20.0, 30.0
detection.eta_total = 0.602
analysis.omega_hz = 7.0e6
analysis.n_omega = 5
analysis.n_theta = 19
analysis.scan_time_s = 0.02
analysis.samples_per_period = 80
validate.n_segments = 400
validate.n_sigma = 4.5
validate.max_db_err = 0.6
validate.n_random = 40
"""

_EXPECTED_OUTPUTS = {
    "spectrum/effective_config.cfg",
    "spectrum/spectrum.csv",
    "spectrum/spectrum_summary.json",
    "sweep/effective_config.cfg",
    "sweep/sweep.csv",
    "scan/effective_config.cfg",
    "scan/phase_scan.csv",
    "thr/effective_config.cfg",
    "thr/threshold.json",
    "val/effective_config.cfg",
    "val/validate_report.json",
    "val/series.bin",
    "fit/fits.json",
    "fit/fit_stats.json",
    "stats/fit_stats.json",
}


def _comb_trace_csv(path: Path) -> None:
    omega0 = wavelength_to_omega(LAMBDA0_NM * 1e-9)
    kappa = kappa_from_q(omega0, Q_LOADED)
    kappa_i = kappa_from_q(omega0, Q_INTRINSIC)
    t_floor = resonance_t_min(kappa - kappa_i, kappa_i)
    nu0 = C_LIGHT / (LAMBDA0_NM * 1e-9)
    centers = [C_LIGHT / (nu0 + k * 59.3e9) * 1e9 for k in range(3)]
    lam = np.linspace(min(centers) - 0.15, max(centers) + 0.15, 24001)
    tr = synthesize_trace(lam, [(c, kappa, t_floor) for c in centers])
    lines = ["wavelength_nm,transmission"]
    lines += [f"{float(w)!r},{float(t)!r}" for w, t in zip(lam, tr)]
    path.write_text("\n".join(lines) + "\n")


def _run_all_commands(cfg_path: Path, trace_path: Path, root: Path) -> None:
    cfg = str(cfg_path)
    plans = [
        ["spectrum", "--config", cfg, "--out", str(root / "spectrum")],
        ["sweep", "--config", cfg, "--out", str(root / "sweep"), "--jobs", "2"],
        ["phase-scan", "--config", cfg, "--out", str(root / "scan"), "--seed", "7"],
        ["threshold", "--config", cfg, "--out", str(root / "thr")],
        [
            "validate", "--config", cfg, "--out", str(root / "val"),
            "--seed", "7", "--dump-series",
        ],
        ["fit", str(trace_path), "--out", str(root / "fit")],
        ["stats", str(root / "fit" / "fits.json"), "--out", str(root / "stats")],
    ]
    for argv in plans:
        code = cli_main(argv)
        assert code == 0, f"CRITERION 8: FAIL — {' '.join(argv)} exited {code}"


def _snapshot(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_criterion_8_cli_determinism(tmp_path):
    """Re-running every command with the same config and seed is byte-stable."""
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(_DETERMINISM_CFG)
    trace_path = tmp_path / "trace.csv"
    _comb_trace_csv(trace_path)
    runs = []
    for tag in ("a", "b"):
        root = tmp_path / tag
        _run_all_commands(cfg_path, trace_path, root)
        runs.append(_snapshot(root))
    first, second = runs
    assert set(first) == _EXPECTED_OUTPUTS, (
        f"CRITERION 8: FAIL — unexpected output set {sorted(first)}"
    )
    assert set(first) == set(second)
    diffs = [name for name in first if first[name] != second[name]]
    assert not diffs, f"CRITERION 8: FAIL — files differ across reruns: {diffs}"
    total = sum(len(v) for v in first.values())
    print(
        f"CRITERION 8: PASS — {len(first)} files byte-identical across reruns "
        f"({total} bytes)"
    )
