"""Physical parameter containers and unit conversions.

Angular frequencies are radians per second, powers are watts, wavelengths
are meters.  Detunings follow the convention that positive values place
the pump laser on the red side of the cold cavity resonance, which is the
side a thermally locked resonator can hold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

HBAR = 1.054571817e-34  # J s
C_LIGHT = 299792458.0  # m / s


class DomainError(ValueError):
    """Raised when a physical parameter is outside its meaningful range."""


def wavelength_to_omega(wavelength_m: float) -> float:
    """Angular frequency (rad/s) of light with the given vacuum wavelength."""
    if wavelength_m <= 0.0:
        raise DomainError(f"wavelength must be positive, got {wavelength_m}")
    return 2.0 * math.pi * C_LIGHT / wavelength_m


def kappa_from_q(omega0: float, q: float) -> float:
    """Energy decay rate (rad/s) of a mode with quality factor ``q``."""
    if omega0 <= 0.0:
        raise DomainError(f"omega0 must be positive, got {omega0}")
    if q <= 0.0:
        raise DomainError(f"quality factor must be positive, got {q}")
    return omega0 / q


def q_from_kappa(omega0: float, kappa: float) -> float:
    """Quality factor of a mode with energy decay rate ``kappa`` (rad/s)."""
    if omega0 <= 0.0:
        raise DomainError(f"omega0 must be positive, got {omega0}")
    if kappa <= 0.0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    return omega0 / kappa


def escape_efficiency(q_intrinsic: float, q_loaded: float) -> float:
    """Fraction of intracavity photons that leave through the bus waveguide.

    ``eta_esc = kappa_e / kappa = 1 - q_loaded / q_intrinsic``.  The loaded
    quality factor can never exceed the intrinsic one; equality means the
    resonator is not coupled at all (eta = 0).
    """
    if q_intrinsic <= 0.0 or q_loaded <= 0.0:
        raise DomainError("quality factors must be positive")
    if q_loaded > q_intrinsic:
        raise DomainError(
            f"loaded Q ({q_loaded:g}) cannot exceed intrinsic Q ({q_intrinsic:g})"
        )
    return 1.0 - q_loaded / q_intrinsic


def max_onchip_squeezing_db(eta_escape: float) -> float:
    """Loss-limited squeezing bound, in dB below shot noise.

    An infinitely squeezed state transmitted with efficiency ``eta`` has
    residual variance ``1 - eta`` relative to vacuum, so the best
    observable squeezing is ``-10 log10(1 - eta)``.
    """
    if not 0.0 <= eta_escape < 1.0:
        raise DomainError(f"eta_escape must lie in [0, 1), got {eta_escape}")
    return -10.0 * math.log10(1.0 - eta_escape)


def photon_flux(power_w: float, omega0: float) -> float:
    """Photon arrival rate (1/s) of a beam with the given on-chip power."""
    if power_w < 0.0:
        raise DomainError(f"power must be non-negative, got {power_w}")
    if omega0 <= 0.0:
        raise DomainError(f"omega0 must be positive, got {omega0}")
    return power_w / (HBAR * omega0)


@dataclass(frozen=True)
class MaterialParams:
    """Nonlinear-material figures entering the single-photon Kerr shift.

    n2 is the intensity-dependent refractive index (m^2/W), n0 the linear
    index, v_eff the effective mode volume (m^3).
    """

    n2: float
    n0: float
    v_eff: float

    def __post_init__(self):
        if self.n2 <= 0.0 or self.n0 <= 0.0 or self.v_eff <= 0.0:
            raise DomainError("material parameters must be positive")


def g0_from_material(
    omega0: float,
    material: MaterialParams,
    include_c: bool = False,
) -> float:
    """Single-photon Kerr frequency shift (rad/s) from material figures.

    Evaluates ``hbar * omega0**2 * n2 / (n0**2 * v_eff)``; with
    ``include_c=True`` the result is additionally multiplied by the vacuum
    speed of light, which restores units of rad/s when n2 is quoted in
    m^2/W.  Both variants appear in the literature, so the choice is left
    to the caller; calibration against a measured operating point is the
    more reliable route either way.
    """
    if omega0 <= 0.0:
        raise DomainError(f"omega0 must be positive, got {omega0}")
    g0 = HBAR * omega0 ** 2 * material.n2 / (material.n0 ** 2 * material.v_eff)
    if include_c:
        g0 *= C_LIGHT
    return g0


@dataclass(frozen=True)
class ResonatorModel:
    """A pumped Kerr resonator mode family.

    Parameters
    ----------
    omega0:
        Pump mode angular frequency (rad/s).
    kappa_i:
        Intrinsic energy decay rate (rad/s).  May be zero for the ideal
        lossless limit.
    kappa_e:
        External (bus waveguide) coupling rate (rad/s).
    delta:
        Cold-cavity pump detuning ``omega0 - omega_laser`` (rad/s).
    d2:
        Second-order dispersion step (rad/s); mode ``l`` sits at
        ``omega0 + fsr_rad*l + d2*l**2/2`` relative to the pump grid.
    g0:
        Single-photon Kerr shift (rad/s).
    fsr:
        Free spectral range in Hz, used only for bookkeeping when mapping
        mode indices to absolute optical frequencies.
    """

    omega0: float
    kappa_i: float
    kappa_e: float
    delta: float = 0.0
    d2: float = 0.0
    g0: float = 0.0
    fsr: float = 59.3e9
    kappa: float = field(init=False)

    def __post_init__(self):
        if self.omega0 <= 0.0:
            raise DomainError(f"omega0 must be positive, got {self.omega0}")
        if self.kappa_i < 0.0:
            raise DomainError(f"kappa_i must be non-negative, got {self.kappa_i}")
        if self.kappa_e <= 0.0:
            raise DomainError(f"kappa_e must be positive, got {self.kappa_e}")
        if self.g0 < 0.0:
            raise DomainError(f"g0 must be non-negative, got {self.g0}")
        object.__setattr__(self, "kappa", self.kappa_i + self.kappa_e)

    @classmethod
    def from_quality_factors(
        cls,
        omega0: float,
        q_intrinsic: float,
        q_loaded: float,
        **kwargs,
    ) -> "ResonatorModel":
        """Build from intrinsic and loaded quality factors."""
        kappa = kappa_from_q(omega0, q_loaded)
        kappa_i = kappa_from_q(omega0, q_intrinsic)
        if kappa_i >= kappa:
            raise DomainError(
                f"loaded Q ({q_loaded:g}) must be below intrinsic Q ({q_intrinsic:g})"
            )
        return cls(omega0=omega0, kappa_i=kappa_i, kappa_e=kappa - kappa_i, **kwargs)

    @property
    def q_loaded(self) -> float:
        return self.omega0 / self.kappa

    @property
    def q_intrinsic(self) -> float:
        if self.kappa_i == 0.0:
            return math.inf
        return self.omega0 / self.kappa_i

    @property
    def q_coupling(self) -> float:
        return self.omega0 / self.kappa_e

    @property
    def eta_escape(self) -> float:
        return self.kappa_e / self.kappa


@dataclass(frozen=True)
class PumpDrive:
    """Classical pump field at the chip input.

    ``a_in`` is normalized so that ``a_in**2`` is the photon flux in 1/s;
    it is kept real and non-negative, the pump phase being the global
    phase reference.
    """

    power_on_chip: float
    flux: float
    a_in: float

    @classmethod
    def from_power(cls, power_w: float, omega0: float) -> "PumpDrive":
        flux = photon_flux(power_w, omega0)
        return cls(power_on_chip=power_w, flux=flux, a_in=math.sqrt(flux))

    def __post_init__(self):
        if self.power_on_chip < 0.0 or self.flux < 0.0:
            raise DomainError("pump power and flux must be non-negative")
        if self.a_in < 0.0:
            raise DomainError("a_in is defined real non-negative")


def detection_chain_total(
    eta_couple: float,
    eta_prop: float,
    visibility: float,
    eta_pd: float,
) -> float:
    """Collection efficiency of the off-chip measurement path.

    The homodyne visibility enters squared: an imperfect mode overlap
    behaves as a beamsplitter on the field amplitude.
    """
    for name, val in (
        ("eta_couple", eta_couple),
        ("eta_prop", eta_prop),
        ("visibility", visibility),
        ("eta_pd", eta_pd),
    ):
        if not 0.0 < val <= 1.0:
            raise DomainError(f"{name} must lie in (0, 1], got {val}")
    return eta_couple * eta_prop * visibility ** 2 * eta_pd


@dataclass(frozen=True)
class DetectionChain:
    """Efficiency budget between chip output and homodyne photocurrent.

    eta_total covers only the off-chip path (fiber coupling, propagation,
    homodyne visibility squared, photodiode).  The cavity escape
    efficiency is part of the intracavity model and is tracked separately
    when known.
    """

    eta_couple: float = 1.0
    eta_prop: float = 1.0
    visibility: float = 1.0
    eta_pd: float = 1.0
    eta_escape: float | None = None
    eta_total: float = field(init=False)

    def __post_init__(self):
        total = detection_chain_total(
            self.eta_couple, self.eta_prop, self.visibility, self.eta_pd
        )
        if self.eta_escape is not None and not 0.0 < self.eta_escape <= 1.0:
            raise DomainError(f"eta_escape must lie in (0, 1], got {self.eta_escape}")
        object.__setattr__(self, "eta_total", total)

    @classmethod
    def from_total(cls, eta_total: float) -> "DetectionChain":
        """Wrap a lumped off-chip efficiency with no per-stage breakdown."""
        if not 0.0 < eta_total <= 1.0:
            raise DomainError(f"eta_total must lie in (0, 1], got {eta_total}")
        return cls(eta_couple=eta_total, eta_prop=1.0, visibility=1.0, eta_pd=1.0)

    @property
    def eta_end_to_end(self) -> float:
        """Generation-to-detection efficiency, if escape is known."""
        if self.eta_escape is None:
            raise DomainError("eta_escape was not provided")
        return self.eta_total * self.eta_escape
