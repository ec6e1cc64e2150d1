import math

import pytest
from hypothesis import given, strategies as st

from squeezesim.params import (
    HBAR,
    C_LIGHT,
    DomainError,
    DetectionChain,
    MaterialParams,
    PumpDrive,
    ResonatorModel,
    detection_chain_total,
    escape_efficiency,
    g0_from_material,
    kappa_from_q,
    max_onchip_squeezing_db,
    photon_flux,
    q_from_kappa,
    wavelength_to_omega,
)

# Frozen anchors, computed by hand from the defining formulas:
#   omega0 = 2 pi c / lambda          at lambda = 1560 nm
#   kappa  = omega0 / Q_loaded        at Q_loaded = 0.83e6
#   flux   = P / (hbar omega0)        at P = 50 mW
OMEGA0_1560 = 1.2074690e15
KAPPA_Q083 = 1.4547819e9
FLUX_50MW = 3.926619e17


def test_wavelength_to_omega_anchor():
    assert wavelength_to_omega(1560e-9) == pytest.approx(OMEGA0_1560, rel=1e-6)


def test_kappa_from_loaded_q_anchor():
    omega0 = wavelength_to_omega(1560e-9)
    assert kappa_from_q(omega0, 0.83e6) == pytest.approx(KAPPA_Q083, rel=1e-6)
    # round half-width in MHz for a sanity check against typical lab numbers
    assert kappa_from_q(omega0, 0.83e6) / (2 * math.pi) == pytest.approx(
        231.5e6, rel=1e-3
    )


def test_photon_flux_anchor():
    omega0 = wavelength_to_omega(1560e-9)
    assert photon_flux(0.050, omega0) == pytest.approx(FLUX_50MW, rel=1e-5)


def test_escape_efficiency_anchor():
    # 1 - 0.83/10.1, by long division
    assert escape_efficiency(10.1e6, 0.83e6) == pytest.approx(0.9178217822, rel=1e-9)


def test_max_onchip_squeezing_anchors():
    # -10 log10(1 - eta)
    assert max_onchip_squeezing_db(0.91) == pytest.approx(10.4575749, rel=1e-7)
    assert max_onchip_squeezing_db(0.75) == pytest.approx(6.0205999, rel=1e-7)
    assert max_onchip_squeezing_db(0.0) == 0.0


def test_detection_chain_total_anchor():
    # 0.75 * 0.95 * 0.98^2 * 0.88, visibility squared
    assert detection_chain_total(0.75, 0.95, 0.98, 0.88) == pytest.approx(
        0.6021708, abs=1e-7
    )


@given(st.floats(min_value=1e3, max_value=1e12), st.floats(min_value=1e12, max_value=1e16))
def test_q_kappa_round_trip(q, omega0):
    kappa = kappa_from_q(omega0, q)
    assert q_from_kappa(omega0, kappa) == pytest.approx(q, rel=1e-12)


@given(st.floats(min_value=0.0, max_value=0.999))
def test_squeezing_bound_monotone(eta):
    lo = max_onchip_squeezing_db(eta)
    hi = max_onchip_squeezing_db(min(eta + 5e-4, 0.9995))
    assert hi >= lo >= 0.0


@given(
    st.floats(min_value=1e4, max_value=1e9),
    st.floats(min_value=1e-4, max_value=1.0),
)
def test_escape_efficiency_bounds(q_i, ratio):
    q_l = q_i * ratio
    eta = escape_efficiency(q_i, q_l)
    assert 0.0 <= eta < 1.0
    # more overcoupled (smaller loaded Q) always escapes more
    assert escape_efficiency(q_i, q_l * 0.5) > eta or ratio == 1.0


def test_escape_efficiency_rejects_inverted_qs():
    with pytest.raises(DomainError):
        escape_efficiency(0.83e6, 10.1e6)


def test_resonator_from_quality_factors():
    omega0 = wavelength_to_omega(1560e-9)
    res = ResonatorModel.from_quality_factors(omega0, q_intrinsic=10.1e6, q_loaded=0.83e6)
    assert res.kappa == pytest.approx(KAPPA_Q083, rel=1e-6)
    assert res.kappa == pytest.approx(res.kappa_i + res.kappa_e, rel=1e-15)
    assert res.eta_escape == pytest.approx(0.9178217822, rel=1e-9)
    assert res.q_loaded == pytest.approx(0.83e6, rel=1e-12)
    assert res.q_intrinsic == pytest.approx(10.1e6, rel=1e-12)
    # loaded rate is the sum of the loss channels, so 1/Q adds up
    assert 1 / res.q_loaded == pytest.approx(1 / res.q_intrinsic + 1 / res.q_coupling, rel=1e-12)


def test_resonator_allows_lossless_limit():
    res = ResonatorModel(omega0=1e15, kappa_i=0.0, kappa_e=1e9)
    assert res.eta_escape == 1.0
    assert res.q_intrinsic == math.inf


def test_resonator_rejects_bad_rates():
    with pytest.raises(DomainError):
        ResonatorModel(omega0=1e15, kappa_i=-1.0, kappa_e=1e9)
    with pytest.raises(DomainError):
        ResonatorModel(omega0=1e15, kappa_i=1e8, kappa_e=0.0)
    with pytest.raises(DomainError):
        ResonatorModel(omega0=-1e15, kappa_i=1e8, kappa_e=1e9)


def test_pump_drive_from_power():
    omega0 = wavelength_to_omega(1560e-9)
    pump = PumpDrive.from_power(0.050, omega0)
    assert pump.flux == pytest.approx(FLUX_50MW, rel=1e-5)
    assert pump.a_in == pytest.approx(math.sqrt(pump.flux), rel=1e-15)
    assert PumpDrive.from_power(0.0, omega0).a_in == 0.0
    with pytest.raises(DomainError):
        PumpDrive.from_power(-1e-3, omega0)


def test_detection_chain_total_and_from_total():
    chain = DetectionChain(eta_couple=0.75, eta_prop=0.95, visibility=0.98, eta_pd=0.88)
    assert chain.eta_total == pytest.approx(0.6021708, abs=1e-7)
    lumped = DetectionChain.from_total(0.61)
    assert lumped.eta_total == pytest.approx(0.61, rel=1e-15)
    with pytest.raises(DomainError):
        DetectionChain.from_total(0.0)
    with pytest.raises(DomainError):
        DetectionChain(eta_couple=1.2)


def test_detection_chain_end_to_end():
    chain = DetectionChain(
        eta_couple=0.75, eta_prop=0.95, visibility=0.98, eta_pd=0.88,
        eta_escape=0.9178217822,
    )
    assert chain.eta_end_to_end == pytest.approx(0.6021708 * 0.9178217822, rel=1e-6)
    with pytest.raises(DomainError):
        DetectionChain.from_total(0.5).eta_end_to_end


def test_g0_material_scaling():
    mat = MaterialParams(n2=2.4e-19, n0=1.996, v_eff=1.0e-16)
    omega0 = wavelength_to_omega(1560e-9)
    base = g0_from_material(omega0, mat)
    # doubling the mode volume halves the shift; the c variant is a pure rescale
    assert g0_from_material(omega0, MaterialParams(2.4e-19, 1.996, 2.0e-16)) == pytest.approx(
        base / 2, rel=1e-12
    )
    assert g0_from_material(omega0, mat, include_c=True) == pytest.approx(
        base * C_LIGHT, rel=1e-12
    )
    assert base > 0.0


def test_hbar_and_c_values():
    assert HBAR == pytest.approx(1.0545718e-34, rel=1e-6)
    assert C_LIGHT == 299792458.0
