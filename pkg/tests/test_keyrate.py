import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvqss.config import ProtocolConfig
from cvqss.keyrate import (asymptotic_rate, detected_covariance, channel_covariance, closed_form_spectrum, delta_term,
                           dealer_variances, finite_size_rate, g_function, holevo_bound, holevo_spectrum,
                           link_mutual_information, mutual_information, symplectic_spectrum)

CFG = ProtocolConfig()


def test_mutual_information_basics():
    assert mutual_information(2.0, 2.0) == 0.0
    assert mutual_information(3.0, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mutual_information(1.0, 2.0)


def test_link_information_is_heterodyne_formula():
    T, eps = 0.3, 0.02
    X_B, X_BA = dealer_variances(CFG, T, eps)
    assert X_B == pytest.approx(CFG.eta_e / 2 * T * (CFG.V_M + CFG.V_T + eps) + 1 + CFG.v_el)
    # independent form: log2((V + chi_tot) / (1 + chi_tot)) with V_T folded into the noise
    chi_h = (2 - CFG.eta_e + 2 * CFG.v_el) / CFG.eta_e
    chi_tot = 1 / T - 1 + eps + CFG.V_T + chi_h / T
    expected = math.log2((CFG.V_M + 1 + chi_tot) / (1 + chi_tot))
    assert link_mutual_information(CFG, T, eps) == pytest.approx(expected, rel=1e-13)


def test_g_function():
    assert g_function(1.0) == 0.0
    assert g_function(3.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        g_function(0.5)


def test_symplectic_spectrum_simple_states():
    assert symplectic_spectrum(np.eye(2)) == pytest.approx([1.0])
    assert symplectic_spectrum(np.diag([2.5, 2.5])) == pytest.approx([2.5])
    with pytest.raises(ValueError):
        symplectic_spectrum(np.array([[1.0, 0.2], [0.0, 1.0]]))


def _sorted(x):
    return np.sort(np.asarray(x))[::-1]


def test_defaults_against_closed_form():
    T = 0.3
    chi_l = 1 / T - 1 + 0.05
    lam = holevo_spectrum(CFG.V, T, chi_l, CFG.eta_e, CFG.v_el)
    ref = closed_form_spectrum(CFG.V, T, chi_l, CFG.eta_e, CFG.v_el)
    assert _sorted(lam[:2]) == pytest.approx(_sorted(ref[:2]), rel=1e-9)
    assert _sorted(lam[2:]) == pytest.approx(_sorted(ref[2:]), rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.1, 50), st.floats(0.01, 0.99), st.floats(0, 0.3), st.floats(0.3, 0.95), st.floats(0.01, 0.5))
def test_generic_equals_closed_form(V, T, eps, eta_e, v_el):
    # Away from coincident eigenvalues; there the closed form's square root
    # of a near-zero discriminant only keeps about eight digits.
    chi_l = 1 / T - 1 + eps
    lam = holevo_spectrum(V, T, chi_l, eta_e, v_el)
    ref = closed_form_spectrum(V, T, chi_l, eta_e, v_el)
    assert np.all(lam >= 1 - 1e-9)
    assert _sorted(lam[:2]) == pytest.approx(_sorted(ref[:2]), rel=1e-9)
    assert _sorted(lam[2:]) == pytest.approx(_sorted(ref[2:]), rel=1e-9)


def test_pure_conditional_state_is_exact():
    lam = holevo_spectrum(1.01, 1.0, 0.0, 0.5, 0.0)
    assert lam[2:] == pytest.approx([1.0, 1.0, 1.0], abs=1e-12)


def test_lossless_noiseless_channel_leaks_nothing():
    assert holevo_bound(CFG.V, 1.0, 0.0, 1.0, 0.0) == pytest.approx(0.0, abs=1e-6)


def test_holevo_monotone_in_noise():
    T = 0.3
    vals = [holevo_bound(CFG.V, T, 1 / T - 1 + e, CFG.eta_e, CFG.v_el) for e in np.linspace(0, 0.2, 21)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_ideal_rate_is_mutual_information():
    cfg = replace(CFG, eta=1.0, eta_e=1.0, v_el=0.0, V_T=0.0)
    r = asymptotic_rate(cfg, 1.0, 0.0)
    assert r.chi_BE == pytest.approx(0.0, abs=1e-6)
    assert r.r_raw == pytest.approx(r.I_AB, abs=1e-6)


def test_abort_convention_keeps_raw_value():
    r = asymptotic_rate(CFG, 0.3, 0.3)
    assert r.r_raw < 0 and r.r_asym == 0.0


def test_delta_term():
    cfg = replace(CFG, dim_HX=2, eps_bar=1e-10, eps_PA=1e-10)
    expected = 7 * math.sqrt(math.log2(2e10) / 1e9) + 2 / 1e9 * math.log2(1e10)
    assert delta_term(1e9, cfg) == pytest.approx(expected, rel=1e-14)
    assert delta_term(1e30, cfg) < 1e-12


def test_finite_size_rate():
    cfg = replace(CFG, N_g=CFG.N_0, m=0)
    base = asymptotic_rate(cfg, 0.3, 0.02)
    fin = finite_size_rate(cfg, 0.3, 0.3 * 0.02)
    assert fin.R_raw == pytest.approx(base.r_raw - fin.Delta, rel=1e-14)
    assert finite_size_rate(CFG, 0.0, 0.01).R_finite == 0.0
    assert finite_size_rate(CFG, 0.3, 0.006).R_finite <= base.r_asym


def test_unphysical_inputs_rejected():
    with pytest.raises(ValueError):
        asymptotic_rate(CFG, 0.0, 0.01)
    with pytest.raises(ValueError):
        asymptotic_rate(CFG, 0.3, -0.1)


@pytest.mark.parametrize("T,eps", [(0.3, 0.02), (0.9, 0.0), (0.05, 0.1)])
def test_detected_mode_reproduces_output_variance(T, eps):
    gamma = detected_covariance(CFG.V, T, 1 / T - 1 + eps, CFG.eta_e, CFG.v_el)
    X_B, _ = dealer_variances(CFG, T, eps)
    assert (gamma[2, 2] + 1) / 2 == pytest.approx(X_B, rel=1e-14)
    assert (gamma[3, 3] + 1) / 2 == pytest.approx(X_B, rel=1e-14)


def test_rate_monotone_on_grid():
    Ts = np.linspace(0.05, 1.0, 20)
    epss = np.linspace(0.0, 0.2, 21)
    table = np.array([[asymptotic_rate(CFG, T, e).r_asym for e in epss] for T in Ts])
    assert np.all(np.diff(table, axis=0) >= 0)
    assert np.all(np.diff(table, axis=1) <= 0)


def test_holevo_and_rate_bounds():
    for T in (0.1, 0.5, 1.0):
        r = asymptotic_rate(CFG, T, 0.05)
        assert r.chi_BE >= 0
        assert r.r_raw <= CFG.eta * r.I_AB


def test_pure_functions_repeatable():
    assert asymptotic_rate(CFG, 0.3, 0.02) == asymptotic_rate(CFG, 0.3, 0.02)
    assert delta_term(1e9, CFG) == delta_term(1e9, CFG)
