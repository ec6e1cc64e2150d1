"""Squeezed-light simulation toolkit for Kerr microresonators.

Models a pump mode driving a pair of signal/idler side modes below the
parametric oscillation threshold, and provides:

- resonator / pump / detection parameter containers and unit conversions
  (:mod:`squeezesim.params`),
- intracavity steady-state solutions of the Kerr-shifted pump mode,
  including the bistable regime (:mod:`squeezesim.steady_state`),
- analytic output-field covariance and homodyne noise spectra for a
  side-mode pair (:mod:`squeezesim.spectra`),
- a stochastic (Langevin) integrator used to cross-validate the analytic
  spectra (:mod:`squeezesim.langevin`),
- linewidth / coupling extraction from swept-wavelength transmission
  traces (:mod:`squeezesim.traces`),
- a command line front end (:mod:`squeezesim.cli`).
"""

from squeezesim.params import (
    HBAR,
    C_LIGHT,
    DomainError,
    MaterialParams,
    ResonatorModel,
    PumpDrive,
    DetectionChain,
)
from squeezesim.steady_state import SteadyState, solve_steady_state, threshold_power
from squeezesim.spectra import (
    SingularSystemError,
    PairScattering,
    pair_scattering,
    output_covariance,
    homodyne_variance,
    optimal_quadratures,
    optimal_quadratures_from_cov,
    spectrum_grid,
    power_sweep,
    symplectic_eigenvalues,
)
from squeezesim.langevin import simulate_pair, cross_validate
from squeezesim.traces import TransmissionTrace, load_trace, analyze_trace
from squeezesim.config import ConfigError, RunConfig, load_config

__all__ = [
    "HBAR",
    "C_LIGHT",
    "DomainError",
    "MaterialParams",
    "ResonatorModel",
    "PumpDrive",
    "DetectionChain",
    "SteadyState",
    "solve_steady_state",
    "threshold_power",
    "SingularSystemError",
    "PairScattering",
    "pair_scattering",
    "output_covariance",
    "homodyne_variance",
    "optimal_quadratures",
    "optimal_quadratures_from_cov",
    "spectrum_grid",
    "power_sweep",
    "symplectic_eigenvalues",
    "simulate_pair",
    "cross_validate",
    "TransmissionTrace",
    "load_trace",
    "analyze_trace",
    "ConfigError",
    "RunConfig",
    "load_config",
]

__version__ = "0.1.0"
