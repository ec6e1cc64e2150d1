"""Output-field correlations of a side-mode pair below threshold.

The pump steady state parametrically couples each pair of side modes at
``+l`` and ``-l`` around the pump.  Linearizing the Kerr interaction and
Fourier transforming (convention ``a(omega) = int dt e^{+i omega t} a(t)``)
turns the pair dynamics into a 2x2 linear system

    L(omega) @ (a_l, a_{-l}^dagger) = inputs,

whose input-output solution is a 2x4 Bogoliubov scattering matrix from the
four vacuum inputs (external and intrinsic ports of both modes) to the two
outgoing field components.  Everything observable below threshold follows
from the second moments of that matrix: the side-mode photon flux spectra
and the cross-correlation that carries the two-mode squeezing.

Quadratures are ``q = (a + a^dag)/2`` and ``p = (a - a^dag)/(2i)``;
covariance matrices are normalized so vacuum is the identity, and homodyne
variances are reported relative to shot noise (vacuum = 1).
"""

from __future__ import annotations

import cmath
import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from squeezesim.params import DomainError, PumpDrive, ResonatorModel
from squeezesim.steady_state import (
    SteadyState,
    solve_steady_state,
    steady_state_on_branch,
    threshold_intracavity,
)


class SingularSystemError(RuntimeError):
    """Side-mode pair at or above its oscillation threshold.

    The linearized pair dynamics has a non-decaying eigenvalue, so no
    stationary below-threshold spectrum exists.  ``eigenvalue_real`` is
    the offending real part in rad/s (>= 0).
    """

    def __init__(self, message: str, eigenvalue_real: float | None = None):
        super().__init__(message)
        self.eigenvalue_real = eigenvalue_real


def pair_detuning(model: ResonatorModel, steady: SteadyState, l: int = 1) -> float:
    """Effective offset of side-mode pair ``l`` from its parametric resonance.

    Combines the cold detuning, the dispersion walk-off of the pair, and
    the cross-phase pull of the pump, which is twice the self-phase pull.
    """
    return model.delta + 0.5 * model.d2 * l * l - 2.0 * model.g0 * steady.rho


def stability_margin(model: ResonatorModel, steady: SteadyState, l: int = 1) -> float:
    """Decay rate (rad/s) of the slowest pair eigenmode; positive = stable.

    The pair eigenvalues are ``-kappa/2 +- sqrt(|g|^2 - delta_l^2)`` with
    gain ``|g| = g0*rho``, so the margin is
    ``kappa/2 - Re sqrt(|g|^2 - delta_l^2)``.
    """
    gain = model.g0 * steady.rho
    delta_l = pair_detuning(model, steady, l)
    return 0.5 * model.kappa - cmath.sqrt(gain * gain - delta_l * delta_l).real


@dataclass(frozen=True)
class PairScattering:
    """Frequency-domain scattering of one side-mode pair at one frequency.

    ``s`` maps the vacuum inputs ``(v_e,l, v_e,-l^dag, v_i,l, v_i,-l^dag)``
    to the outgoing ``(a_out,l, a_out,-l^dag)``, expressed in a rotated
    frame (``phi_ref``) chosen so the pair correlation ``m_corr`` is real
    and positive at line center; the squeezed joint quadrature then sits
    at homodyne angle pi/2 independent of the pump phase.

    ``n_signal``/``n_idler`` are the output photon flux spectral densities
    of the two modes and ``m_corr`` their anomalous correlation; for this
    model the two flux densities coincide.
    """

    s: np.ndarray
    omega: float
    l: int
    delta_l: float
    g: complex
    phi_ref: float
    margin: float
    eta_escape: float
    n_signal: float
    n_idler: float
    m_corr: complex


def pair_scattering(
    model: ResonatorModel,
    steady: SteadyState,
    omega: float,
    l: int = 1,
) -> PairScattering:
    """Scattering matrix and output moments at sideband frequency ``omega``.

    ``omega`` is the analysis (sideband) frequency in rad/s relative to
    the driven grid; spectra are symmetric under ``omega -> -omega``.
    Raises SingularSystemError at or above the pair threshold.
    """
    hk = 0.5 * model.kappa
    delta_l = pair_detuning(model, steady, l)
    g = model.g0 * steady.a0 * steady.a0
    margin = stability_margin(model, steady, l)
    if margin <= 0.0:
        raise SingularSystemError(
            f"side-mode pair l={l} is not below threshold: slowest eigenvalue "
            f"decays at {margin:.6g} rad/s",
            eigenvalue_real=-margin,
        )
    d1 = hk + 1j * (delta_l - omega)
    d2 = hk - 1j * (delta_l + omega)
    det = d1 * d2 - (g.real * g.real + g.imag * g.imag)
    inv = np.array([[d2, 1j * g], [-1j * g.conjugate(), d1]]) / det
    s_raw = np.hstack(
        [
            model.kappa_e * inv - np.eye(2),
            math.sqrt(model.kappa_e * model.kappa_i) * inv,
        ]
    )
    phi_ref = 0.0 if steady.a0 == 0 else 0.25 * math.pi + cmath.phase(steady.a0)
    rot = np.array([cmath.exp(-1j * phi_ref), cmath.exp(1j * phi_ref)])
    s = rot[:, None] * s_raw
    n_signal = abs(s[0, 1]) ** 2 + abs(s[0, 3]) ** 2
    n_idler = abs(s[1, 0]) ** 2 + abs(s[1, 2]) ** 2
    m_corr = s[0, 0] * s[1, 0].conjugate() + s[0, 2] * s[1, 2].conjugate()
    return PairScattering(
        s=s,
        omega=float(omega),
        l=l,
        delta_l=delta_l,
        g=complex(g),
        phi_ref=phi_ref,
        margin=margin,
        eta_escape=model.eta_escape,
        n_signal=float(n_signal),
        n_idler=float(n_idler),
        m_corr=complex(m_corr),
    )


def bogoliubov_defect(s: np.ndarray) -> float:
    """How far a 2x4 scattering matrix is from commutator preservation.

    A physical map must satisfy ``S diag(1,-1,1,-1) S^dag = diag(1,-1)``;
    returns the max absolute deviation, which should sit at rounding
    level for any below-threshold system.
    """
    sigma4 = np.diag([1.0, -1.0, 1.0, -1.0])
    sigma2 = np.diag([1.0, -1.0])
    return float(np.max(np.abs(s @ sigma4 @ s.conj().T - sigma2)))


def output_covariance(pair: PairScattering, eta_total: float = 1.0) -> np.ndarray:
    """4x4 quadrature covariance of the detected pair, vacuum = identity.

    Row order is ``(q_l, p_l, q_{-l}, p_{-l})``.  ``eta_total`` is the
    off-chip detection efficiency, applied as a beamsplitter admixing
    vacuum: ``V -> eta V + (1 - eta) I``.
    """
    if not 0.0 <= eta_total <= 1.0:
        raise DomainError(f"eta_total must lie in [0, 1], got {eta_total}")
    ns, ni, m = pair.n_signal, pair.n_idler, pair.m_corr
    v = np.eye(4)
    v[0, 0] = v[1, 1] = 1.0 + 2.0 * ns
    v[2, 2] = v[3, 3] = 1.0 + 2.0 * ni
    v[0, 2] = v[2, 0] = 2.0 * m.real
    v[0, 3] = v[3, 0] = 2.0 * m.imag
    v[1, 2] = v[2, 1] = 2.0 * m.imag
    v[1, 3] = v[3, 1] = -2.0 * m.real
    return eta_total * v + (1.0 - eta_total) * np.eye(4)


def homodyne_variance(cov: np.ndarray, theta, tooth_phase: float = 0.0):
    """Noise power of the joint quadrature at homodyne angle ``theta``.

    Measures ``(q_l cos ts + p_l sin ts + q_{-l} cos ti + p_{-l} sin ti)``
    normalized so vacuum gives 1, with ``ts = theta`` and
    ``ti = theta + tooth_phase``.  ``tooth_phase`` is an extra phase on
    the idler-side local-oscillator tooth; pair correlations depend only
    on ``ts + ti``, so a tooth offset rigidly shifts the whole scan by
    half of it.  0 is the matched two-tone homodyne.
    """
    th = np.asarray(theta, dtype=float)
    ts = th
    ti = th + tooth_phase
    c = np.stack([np.cos(ts), np.sin(ts), np.cos(ti), np.sin(ti)], axis=-1)
    quad = np.einsum("...i,ij,...j->...", c, np.asarray(cov, dtype=float), c)
    # normalize by the same LO's shot response, contracted the same way,
    # so exact-vacuum input gives exactly 1 at every angle
    shot = np.einsum("...i,ij,...j->...", c, np.eye(4), c)
    out = quad / shot
    if out.ndim == 0:
        return float(out)
    return out


def _sum_mode_reduced(cov: np.ndarray) -> tuple[float, float, float]:
    # 2x2 covariance of the joint (sum) mode actually probed by the
    # matched two-tone homodyne, in (q, p) order.
    r_qq = 0.5 * (cov[0, 0] + cov[2, 2] + 2.0 * cov[0, 2])
    r_pp = 0.5 * (cov[1, 1] + cov[3, 3] + 2.0 * cov[1, 3])
    r_qp = 0.5 * (cov[0, 1] + cov[0, 3] + cov[2, 1] + cov[2, 3])
    return float(r_qq), float(r_pp), float(r_qp)


@dataclass(frozen=True)
class QuadratureExtrema:
    """Extremal homodyne variances and the angles that reach them.

    Angles are reported modulo pi (the variance is pi-periodic);
    ``theta_max = theta_min + pi/2``.  For vacuum input the angles
    default to (0, pi/2).
    """

    var_min: float
    var_max: float
    theta_min: float
    theta_max: float


def _extrema(mean: float, d: float, off: float) -> QuadratureExtrema:
    amp = math.hypot(d, off)
    if amp == 0.0:
        return QuadratureExtrema(mean, mean, 0.0, 0.5 * math.pi)
    theta_min = 0.5 * (math.atan2(off, d) + math.pi) % math.pi
    theta_max = (theta_min + 0.5 * math.pi) % math.pi
    return QuadratureExtrema(mean - amp, mean + amp, theta_min, theta_max)


def optimal_quadratures_from_cov(cov: np.ndarray) -> QuadratureExtrema:
    """Closed-form variance extrema of the matched joint quadrature."""
    r_qq, r_pp, r_qp = _sum_mode_reduced(cov)
    return _extrema(0.5 * (r_qq + r_pp), 0.5 * (r_qq - r_pp), r_qp)


def optimal_quadratures(thetas, variances) -> QuadratureExtrema:
    """Variance extrema from a sampled phase scan.

    The homodyne variance is exactly ``a + b cos(2 theta) + c sin(2 theta)``,
    so a least-squares fit of that form recovers the extrema from any scan
    with at least three distinct angles modulo pi.
    """
    th = np.asarray(thetas, dtype=float)
    v = np.asarray(variances, dtype=float)
    if th.shape != v.shape or th.ndim != 1:
        raise DomainError("thetas and variances must be matching 1-d arrays")
    if th.size < 3:
        raise DomainError("need at least 3 phase samples")
    design = np.column_stack([np.ones_like(th), np.cos(2 * th), np.sin(2 * th)])
    if np.linalg.matrix_rank(design, tol=1e-10) < 3:
        raise DomainError("phase samples are degenerate modulo pi")
    mean, d, off = np.linalg.lstsq(design, v, rcond=None)[0]
    return _extrema(float(mean), float(d), float(off))


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Symplectic spectrum of a covariance matrix in vacuum units.

    Modes are interleaved as (q1, p1, q2, p2, ...).  Physical states have
    every value at or above 1 in this normalization; the smallest one is
    the standard physicality margin.
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0] // 2
    if cov.shape != (2 * n, 2 * n):
        raise DomainError("covariance must be square with even dimension")
    form = np.zeros_like(cov)
    for k in range(n):
        form[2 * k, 2 * k + 1] = 1.0
        form[2 * k + 1, 2 * k] = -1.0
    ev = np.linalg.eigvals(1j * form @ cov)
    return np.sort(np.abs(ev))[::2]  # pairs (+nu, -nu): keep each nu once


def variance_db(variance):
    """Signed dB relative to shot noise (negative = squeezed)."""
    return 10.0 * np.log10(variance)


def squeezing_db(variance):
    """dB below shot noise, positive when squeezed."""
    return -10.0 * np.log10(variance)


@dataclass(frozen=True)
class SpectrumGrid:
    """Homodyne noise spectra on an (omega, theta) grid.

    ``variance[i, j]`` is the relative noise power at ``omegas[i]``,
    ``thetas[j]``; the per-frequency extrema come from the covariance in
    closed form, not from the theta grid.
    """

    omegas: np.ndarray
    thetas: np.ndarray
    variance: np.ndarray
    var_min: np.ndarray
    var_max: np.ndarray
    theta_opt: np.ndarray
    n_signal: np.ndarray
    n_idler: np.ndarray
    m_corr: np.ndarray
    l: int
    eta_total: float


def spectrum_grid(
    model: ResonatorModel,
    steady: SteadyState,
    omegas,
    thetas=None,
    l: int = 1,
    eta_total: float = 1.0,
) -> SpectrumGrid:
    """Evaluate pair spectra over sideband frequencies and homodyne angles."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    if thetas is None:
        thetas = np.linspace(0.0, math.pi, 91)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    nw, nt = omegas.size, thetas.size
    variance = np.empty((nw, nt))
    var_min = np.empty(nw)
    var_max = np.empty(nw)
    theta_opt = np.empty(nw)
    n_signal = np.empty(nw)
    n_idler = np.empty(nw)
    m_corr = np.empty(nw, dtype=complex)
    for i, w in enumerate(omegas):
        pair = pair_scattering(model, steady, w, l)
        cov = output_covariance(pair, eta_total)
        variance[i] = homodyne_variance(cov, thetas)
        ext = optimal_quadratures_from_cov(cov)
        var_min[i] = ext.var_min
        var_max[i] = ext.var_max
        theta_opt[i] = ext.theta_min
        n_signal[i] = pair.n_signal
        n_idler[i] = pair.n_idler
        m_corr[i] = pair.m_corr
    return SpectrumGrid(
        omegas=omegas,
        thetas=thetas,
        variance=variance,
        var_min=var_min,
        var_max=var_max,
        theta_opt=theta_opt,
        n_signal=n_signal,
        n_idler=n_idler,
        m_corr=m_corr,
        l=l,
        eta_total=eta_total,
    )


@dataclass(frozen=True)
class PowerSweepResult:
    """Squeezing extrema versus on-chip pump power at fixed sideband.

    Points at or above the pair threshold are flagged and carry NaN
    variances; the classical steady state itself always exists.
    """

    powers: np.ndarray
    rho: np.ndarray
    var_min: np.ndarray
    var_max: np.ndarray
    theta_opt: np.ndarray
    margin: np.ndarray
    above_threshold: np.ndarray
    omega: float
    l: int
    eta_total: float


def power_sweep(
    model: ResonatorModel,
    powers,
    *,
    omega: float = 0.0,
    l: int = 1,
    eta_total: float = 1.0,
    branch_policy: str = "lowest",
) -> PowerSweepResult:
    """Sweep pump power and record the optimal-quadrature extrema."""
    powers = np.atleast_1d(np.asarray(powers, dtype=float))
    n = powers.size
    rho = np.empty(n)
    var_min = np.full(n, math.nan)
    var_max = np.full(n, math.nan)
    theta_opt = np.full(n, math.nan)
    margin = np.empty(n)
    above = np.zeros(n, dtype=bool)
    for i, p in enumerate(powers):
        pump = PumpDrive.from_power(float(p), model.omega0)
        steady = solve_steady_state(model, pump, branch_policy)
        rho[i] = steady.rho
        margin[i] = stability_margin(model, steady, l)
        if margin[i] <= 0.0:
            above[i] = True
            continue
        pair = pair_scattering(model, steady, omega, l)
        ext = optimal_quadratures_from_cov(output_covariance(pair, eta_total))
        var_min[i] = ext.var_min
        var_max[i] = ext.var_max
        theta_opt[i] = ext.theta_min
    return PowerSweepResult(
        powers=powers,
        rho=rho,
        var_min=var_min,
        var_max=var_max,
        theta_opt=theta_opt,
        margin=margin,
        above_threshold=above,
        omega=omega,
        l=l,
        eta_total=eta_total,
    )


@dataclass(frozen=True)
class CalibrationResult:
    """Kerr shift inferred by pinning the squeezing optimum to a power."""

    g0: float
    x_opt: float
    rho: float
    branch: str
    var_min: float
    var_max: float
    theta_opt: float


def _synthetic_steady(hk: float, delta: float, x: float) -> SteadyState:
    # Spectra depend on the pump only through g0*rho and the phase of
    # g0*a0^2, so a unit-Kerr stand-in with rho = x*hk explores every
    # physically reachable operating point x = g0*rho/(kappa/2).
    rho = x * hk
    delta_eff = delta - rho
    a0 = math.sqrt(rho) * cmath.exp(-1j * math.atan2(delta_eff, hk))
    return SteadyState(
        a0=a0,
        rho=rho,
        delta_eff=delta_eff,
        branch="synthetic",
        all_rho=(rho,),
        residual=0.0,
    )


def calibrate_g0_to_optimum(
    model: ResonatorModel,
    pump: PumpDrive,
    *,
    omega: float = 0.0,
    l: int = 1,
    eta_total: float = 1.0,
    x_max: float = 3.0,
) -> CalibrationResult:
    """Choose g0 so the squeezing optimum lands at the given pump power.

    Scans the dimensionless drive strength ``x = g0*rho/(kappa/2)``, which
    fully parameterizes the pair spectra at fixed rates and detuning,
    finds the interior ``x`` minimizing the optimal-quadrature variance,
    and returns the ``g0`` that places that ``x`` at ``pump``.  The input
    model's ``g0`` is ignored.  Raises DomainError when the optimum is not
    interior (e.g. when squeezing keeps improving toward threshold).
    """
    if pump.flux <= 0.0:
        raise DomainError("calibration needs a non-zero pump")
    hk = 0.5 * model.kappa
    probe = dataclasses.replace(model, g0=1.0)
    x_th = threshold_intracavity(probe, l) / hk
    x_hi = min(x_max, x_th * (1.0 - 1e-9))

    def objective(x: float) -> float:
        steady = _synthetic_steady(hk, model.delta, x)
        pair = pair_scattering(probe, steady, omega, l)
        return optimal_quadratures_from_cov(output_covariance(pair, eta_total)).var_min

    res = minimize_scalar(
        objective, bounds=(1e-9, x_hi), method="bounded", options={"xatol": 1e-12}
    )
    x_opt = float(res.x)
    span = x_hi - 1e-9
    if not res.success or x_opt < 1e-3 * span or x_opt > x_hi - 1e-3 * span:
        raise DomainError(
            "no interior squeezing optimum in x; calibration is ill-posed "
            "at this detuning"
        )
    rho = model.kappa_e * pump.flux / (hk * hk + (model.delta - x_opt * hk) ** 2)
    g0 = x_opt * hk / rho
    calibrated = dataclasses.replace(model, g0=g0)
    steady = solve_steady_state(calibrated, pump, "lowest")
    matched = min(range(len(steady.all_rho)), key=lambda i: abs(steady.all_rho[i] - rho))
    if abs(steady.all_rho[matched] - rho) > 1e-6 * rho:
        raise RuntimeError("calibrated operating point is not a pump fixed point")
    if matched != 0:
        steady = steady_state_on_branch(calibrated, pump, matched)
    pair = pair_scattering(calibrated, steady, omega, l)
    ext = optimal_quadratures_from_cov(output_covariance(pair, eta_total))
    return CalibrationResult(
        g0=g0,
        x_opt=x_opt,
        rho=rho,
        branch=steady.branch,
        var_min=ext.var_min,
        var_max=ext.var_max,
        theta_opt=ext.theta_min,
    )


@dataclass(frozen=True)
class PhaseScanTrace:
    """Synthetic spectrum-analyzer record of a slow local-oscillator ramp.

    ``measured_db`` carries multiplicative radiometer jitter with relative
    scale ``sqrt(vbw/rbw)``, low-passed at the video bandwidth;
    ``shot_db`` is an equally noisy vacuum reference; ``true_db`` is the
    jitter-free curve.  All columns are dB relative to shot noise.
    """

    time_s: np.ndarray
    theta: np.ndarray
    measured_db: np.ndarray
    shot_db: np.ndarray
    true_db: np.ndarray
    rbw: float
    vbw: float


def _video_noise(rng: np.random.Generator, n: int, vbw: float, dt: float) -> np.ndarray:
    white = rng.standard_normal(n)
    a = math.exp(-2.0 * math.pi * vbw * dt)
    if a <= 1e-12:
        return white
    out = np.empty(n)
    gain = math.sqrt((1.0 - a) / (1.0 + a))
    prev = rng.standard_normal() * gain  # stationary start
    for k in range(n):
        prev = a * prev + (1.0 - a) * white[k]
        out[k] = prev
    return out / gain


def phase_scan_trace(
    model: ResonatorModel,
    steady: SteadyState,
    omega: float,
    *,
    l: int = 1,
    eta_total: float = 1.0,
    periods: int = 2,
    samples_per_period: int = 400,
    scan_time: float = 1.0,
    rbw: float = 100e3,
    vbw: float = 100.0,
    seed=None,
) -> PhaseScanTrace:
    """Simulate the noise-power trace of a linear homodyne phase ramp.

    The ramp starts at the squeezed angle, so with an even
    ``samples_per_period`` the anti-squeezed angle falls exactly on the
    grid half a period later.
    """
    if samples_per_period % 2 or samples_per_period < 4:
        raise DomainError("samples_per_period must be even and at least 4")
    if periods < 1:
        raise DomainError("periods must be at least 1")
    if not 0.0 <= vbw <= rbw:
        raise DomainError("need 0 <= vbw <= rbw")
    pair = pair_scattering(model, steady, omega, l)
    cov = output_covariance(pair, eta_total)
    ext = optimal_quadratures_from_cov(cov)
    n = periods * samples_per_period
    k = np.arange(n)
    theta = ext.theta_min + math.pi * k / samples_per_period
    var = homodyne_variance(cov, theta)
    rng = np.random.default_rng(seed)
    dt = scan_time / n
    if vbw == 0.0:  # ideal video filter: jitter-free trace
        meas = var.copy()
        shot = np.ones(n)
    else:
        sigma = math.sqrt(vbw / rbw)
        meas = var * (1.0 + sigma * _video_noise(rng, n, vbw, dt))
        shot = 1.0 + sigma * _video_noise(rng, n, vbw, dt)
    floor = 1e-12
    return PhaseScanTrace(
        time_s=k * dt,
        theta=theta,
        measured_db=variance_db(np.maximum(meas, floor)),
        shot_db=variance_db(np.maximum(shot, floor)),
        true_db=variance_db(var),
        rbw=rbw,
        vbw=vbw,
    )
