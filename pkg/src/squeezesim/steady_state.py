"""Classical steady state of the driven Kerr pump mode.

The slowly varying pump amplitude obeys

    dA/dt = -(kappa/2 + i*delta)*A + i*g0*|A|^2*A + sqrt(kappa_e)*A_in

so a steady state satisfies ``A0 = sqrt(kappa_e)*A_in / (kappa/2 + i*delta_eff)``
with the power-pulled detuning ``delta_eff = delta - g0*rho``, ``rho = |A0|^2``.
Eliminating the phase gives a cubic fixed point for the photon number:

    rho * ((kappa/2)^2 + (delta - g0*rho)^2) = kappa_e * F,   F = |A_in|^2.

In the scaled variables u = g0*rho/(kappa/2), alpha = delta/(kappa/2),
beta = g0*kappa_e*F/(kappa/2)^3 this reads

    u^3 - 2*alpha*u^2 + (1 + alpha^2)*u - beta = 0,

which has either one or three positive roots; three solutions exist in a
finite drive window whenever alpha > sqrt(3) (bistability).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from squeezesim.params import HBAR, DomainError, PumpDrive, ResonatorModel

BRANCH_POLICIES = ("lowest", "highest", "adiabatic_upsweep")

# Relative residual allowed on the physical fixed-point equation.
RESIDUAL_RTOL = 1e-10


def _cubic_f(u, alpha, beta):
    return u * (u * (u - 2.0 * alpha) + 1.0 + alpha * alpha) - beta


def _cubic_fprime(u, alpha):
    return u * (3.0 * u - 4.0 * alpha) + 1.0 + alpha * alpha


def _polish(u, alpha, beta):
    # Newton refinement; skipped near a fold where f' vanishes and the
    # companion-matrix root is already the best available answer.
    for _ in range(3):
        fp = _cubic_fprime(u, alpha)
        if abs(fp) < 1e-9 * (1.0 + u * u + alpha * alpha):
            return u
        u -= _cubic_f(u, alpha, beta) / fp
    return u


def cubic_roots_scaled(alpha: float, beta: float) -> np.ndarray:
    """Real roots of the scaled pump fixed point, ascending.

    Solves ``u^3 - 2*alpha*u^2 + (1 + alpha^2)*u - beta = 0``.  For any
    ``beta >= 0`` all real roots are non-negative.
    """
    if beta < 0.0:
        raise DomainError(f"beta must be non-negative, got {beta}")
    if beta == 0.0:
        return np.array([0.0])
    roots = np.roots([1.0, -2.0 * alpha, 1.0 + alpha * alpha, -beta])
    real = roots[np.abs(roots.imag) <= 1e-8 * np.maximum(1.0, np.abs(roots.real))].real
    real.sort()
    # a fold splits one double root into a near-identical pair; merge it
    kept = [real[0]]
    for u in real[1:]:
        if u - kept[-1] > 1e-7 * (1.0 + abs(u)):
            kept.append(u)
    return np.array([max(_polish(u, alpha, beta), 0.0) for u in kept])


def is_bistable(model: ResonatorModel) -> bool:
    """Whether some drive level gives three coexisting pump states."""
    return model.g0 > 0.0 and model.delta > math.sqrt(3.0) * 0.5 * model.kappa


def bistable_flux_window(model: ResonatorModel) -> tuple[float, float]:
    """Input photon-flux interval (lo, hi) with three pump solutions.

    Raises DomainError when the detuning is below the bistability knee.
    """
    if not is_bistable(model):
        raise DomainError("model is not bistable at this detuning")
    hk = 0.5 * model.kappa
    alpha = model.delta / hk
    disc = math.sqrt(alpha * alpha - 3.0)
    betas = sorted(
        u * (1.0 + (alpha - u) ** 2) for u in ((2 * alpha + disc) / 3, (2 * alpha - disc) / 3)
    )
    scale = hk ** 3 / (model.g0 * model.kappa_e)
    return betas[0] * scale, betas[1] * scale


@dataclass(frozen=True)
class SteadyState:
    """One self-consistent pump operating point.

    ``all_rho`` lists every coexisting photon-number solution in
    ascending order; ``branch`` records which one this object selected
    ("single", "lower", "middle", "upper").  The middle branch is
    dynamically unstable and is exposed for diagnostics only.
    """

    a0: complex
    rho: float
    delta_eff: float
    branch: str
    all_rho: tuple
    residual: float


def steady_state_roots(model: ResonatorModel, pump: PumpDrive) -> np.ndarray:
    """All intracavity photon-number solutions, ascending."""
    hk = 0.5 * model.kappa
    if model.g0 == 0.0:
        return np.array([model.kappa_e * pump.flux / (hk * hk + model.delta ** 2)])
    alpha = model.delta / hk
    beta = model.g0 * model.kappa_e * pump.flux / hk ** 3
    return cubic_roots_scaled(alpha, beta) * hk / model.g0


def _branch_label(index: int, count: int) -> str:
    if count == 1:
        return "single"
    if count == 2:
        return ("lower", "upper")[index]
    return ("lower", "middle", "upper")[index]


def solve_steady_state(
    model: ResonatorModel,
    pump: PumpDrive,
    branch_policy: str = "lowest",
    rtol: float = RESIDUAL_RTOL,
) -> SteadyState:
    """Select one pump steady state under the given branch policy.

    Policies: "lowest" and "highest" pick the corresponding photon-number
    root.  "adiabatic_upsweep" models a slow scan onto resonance from the
    thermally self-stable side, which rides the upper branch wherever it
    exists; it selects the largest root, the unique one outside the
    bistable window.
    """
    if branch_policy not in BRANCH_POLICIES:
        raise DomainError(
            f"unknown branch policy {branch_policy!r}, expected one of {BRANCH_POLICIES}"
        )
    rhos = steady_state_roots(model, pump)
    index = 0 if branch_policy == "lowest" else len(rhos) - 1
    return _assemble(model, pump, rhos, index, rtol)


def steady_state_on_branch(
    model: ResonatorModel, pump: PumpDrive, index: int, rtol: float = RESIDUAL_RTOL
) -> SteadyState:
    """Steady state on an explicit root index (0 = lowest)."""
    rhos = steady_state_roots(model, pump)
    if not 0 <= index < len(rhos):
        raise DomainError(f"branch index {index} out of range, {len(rhos)} roots exist")
    return _assemble(model, pump, rhos, index, rtol)


def _assemble(model, pump, rhos, index, rtol=RESIDUAL_RTOL) -> SteadyState:
    hk = 0.5 * model.kappa
    rho = float(rhos[index])
    delta_eff = model.delta - model.g0 * rho
    drive = math.sqrt(model.kappa_e) * pump.a_in
    a0 = drive / (hk + 1j * delta_eff)
    residual = abs(
        -(hk + 1j * model.delta) * a0 + 1j * model.g0 * abs(a0) ** 2 * a0 + drive
    )
    tol = rtol * max(1.0, drive)
    if residual > tol:
        raise RuntimeError(
            f"steady-state residual {residual:.3e} exceeds tolerance {tol:.3e}"
        )
    return SteadyState(
        a0=a0,
        rho=rho,
        delta_eff=delta_eff,
        branch=_branch_label(index, len(rhos)),
        all_rho=tuple(float(r) for r in rhos),
        residual=residual,
    )


def threshold_intracavity(model: ResonatorModel, l: int = 1) -> float:
    """Pump photon number where side-mode pair ``l`` starts oscillating.

    The pair sees parametric gain g0*rho against its loss kappa/2 and a
    power-pulled offset ``delta + d2*l^2/2 - 2*g0*rho``; threshold is
    where the gain first matches ``sqrt((kappa/2)^2 + offset^2)``.  With
    ``b = delta + d2*l^2/2`` that gives

        g0*rho_th = (2*b - sqrt(b^2 - 3*(kappa/2)^2)) / 3,

    which has no real solution when ``b < sqrt(3)*kappa/2``: the pair
    offset then outruns the gain at every pump level and the threshold is
    unreachable (returned as ``inf``).
    """
    if model.g0 <= 0.0:
        raise DomainError("threshold is undefined for g0 = 0")
    hk = 0.5 * model.kappa
    b = model.delta + 0.5 * model.d2 * l * l
    disc = b * b - 3.0 * hk * hk
    if b < 0.0 or disc < 0.0:
        return math.inf
    return (2.0 * b - math.sqrt(disc)) / (3.0 * model.g0)


def threshold_power(model: ResonatorModel, l: int = 1) -> float:
    """On-chip pump power (W) that places pair ``l`` at threshold.

    Inverts the pump fixed point at the threshold photon number; ``inf``
    when no power reaches threshold at this detuning.
    """
    rho_th = threshold_intracavity(model, l)
    if math.isinf(rho_th):
        return math.inf
    hk = 0.5 * model.kappa
    flux = rho_th * (hk * hk + (model.delta - model.g0 * rho_th) ** 2) / model.kappa_e
    return HBAR * model.omega0 * flux


def g0_for_threshold_fraction(
    model: ResonatorModel, pump: PumpDrive, fraction: float, l: int = 1
) -> float:
    """Kerr rate that puts the given drive at ``fraction`` of pair threshold.

    The threshold parametric gain g0*rho_th depends only on kappa, the
    detuning and the dispersion offset, not on g0 itself, so fixing the
    target gain ``fraction * g0*rho_th`` pins the effective detuning and
    the pump fixed point gives rho, hence g0, in closed form.  The
    returned rate satisfies the cubic exactly; under bistability the
    branch policy downstream decides whether that root is the one
    actually occupied.
    """
    if not 0.0 < fraction < 1.0:
        raise DomainError("threshold fraction must lie in (0, 1)")
    if pump.flux <= 0.0:
        raise DomainError("calibration needs a positive drive power")
    hk = 0.5 * model.kappa
    b = model.delta + 0.5 * model.d2 * l * l
    disc = b * b - 3.0 * hk * hk
    if b < 0.0 or disc < 0.0:
        raise DomainError(
            "pair threshold is unreachable at this detuning and dispersion"
        )
    gain = fraction * (2.0 * b - math.sqrt(disc)) / 3.0
    delta_eff = model.delta - gain
    rho = model.kappa_e * pump.flux / (hk * hk + delta_eff * delta_eff)
    return gain / rho
