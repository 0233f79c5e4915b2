import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from qdsps.phonons import (
    XCOTH_SWITCH,
    PhononParams,
    _xcoth_direct,
    export_rates_csv,
    franck_condon,
    franck_condon_exponent,
    indistinguishability_cap,
    polaron_shift,
    rates_along_pulse,
    rates_from_amplitude,
    spectral_function,
    xcoth,
)
from qdsps.units import HBAR, K_B, mev_to_radps

from conftest import flat_grid

P = PhononParams()


def _rates_textbook(eps, det, p, up_exponent=1):
    """Rates written with the spectral function evaluated at the Rabi energy."""
    eR = math.hypot(eps, det)
    J = p.alpha_ph * eR**3 * math.exp(-eR**2 / (2 * p.omega_b**2))
    coth = 1.0 / math.tanh(HBAR * eR / (2 * p.k_B * p.T))
    gpd = math.pi * (eps / eR) ** 2 * J * coth
    gup = math.pi / 4 * (abs(eps) / eR) ** up_exponent * J
    return gpd, gup


def test_spectral_function_values():
    wb = P.omega_b
    assert spectral_function(0.0, P) == 0.0
    assert spectral_function(wb, P) == pytest.approx(0.03 * wb**3 * math.exp(-0.5))
    assert spectral_function(-wb, P) == pytest.approx(-spectral_function(wb, P))


def test_spectral_function_maximum():
    res = optimize.minimize_scalar(lambda w: -spectral_function(w, P), bounds=(0.1, 5.0), method="bounded",
                                   options={"xatol": 1e-10})
    assert res.x == pytest.approx(math.sqrt(3) * P.omega_b, rel=1e-6)


def test_omega_b_units():
    assert P.omega_b * HBAR == pytest.approx(0.9)
    assert P.thermal_freq == pytest.approx(2 * K_B * 4.0 / HBAR)


@pytest.mark.parametrize("eps,det", [(1.0, 0.0), (0.4, 2.0), (2.5, -1.3), (0.05, 0.5), (3.0, 12.0)])
@pytest.mark.parametrize("k", [1, 2])
def test_rates_match_textbook_form(eps, det, k):
    gpd, gup = rates_from_amplitude(eps, det, P, k)
    rpd, rup = _rates_textbook(eps, det, P, k)
    assert float(gpd) == pytest.approx(rpd, rel=1e-12)
    assert float(gup) == pytest.approx(rup, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(eps=st.floats(1e-3, 20.0), det=st.floats(-30.0, 30.0))
def test_rates_property(eps, det):
    gpd, gup = rates_from_amplitude(eps, det, P)
    rpd, rup = _rates_textbook(eps, det, P)
    assert float(gpd) >= 0 and float(gup) >= 0
    assert float(gpd) == pytest.approx(rpd, rel=1e-9, abs=1e-300)
    assert float(gup) == pytest.approx(rup, rel=1e-9, abs=1e-300)


def test_rates_zero_without_drive():
    gpd, gup = rates_from_amplitude(np.zeros(3), np.array([0.0, 1.0, -5.0]), P)
    assert np.all(gpd == 0) and np.all(gup == 0)


def test_rates_vanish_with_coupling():
    p = PhononParams(alpha_ph=0.0)
    gpd, gup = rates_from_amplitude(1.0, 0.3, p)
    assert gpd == 0 and gup == 0


def test_rates_finite_at_zero_detuning_limit():
    # eR -> 0 with D = 0: gamma_pd -> pi a e^2 (2kT/hbar)
    eps = 1e-7
    gpd, _ = rates_from_amplitude(eps, 0.0, P)
    assert float(gpd) == pytest.approx(math.pi * 0.03 * eps**2 * P.thermal_freq, rel=1e-9)


def test_rates_even_in_detuning_sign():
    a = rates_from_amplitude(1.3, 2.2, P)
    b = rates_from_amplitude(1.3, -2.2, P)
    assert np.allclose(a, b, rtol=0, atol=0)


def test_rates_large_detuning_suppressed():
    # a SUPER-like detuning of 8 meV sits far above the 0.9 meV cut-off
    gpd, gup = rates_from_amplitude(mev_to_radps(5.0), mev_to_radps(8.0), P)
    assert float(gpd) < 1e-12 and float(gup) < 1e-12


def test_xcoth_series_switchover():
    x = np.array([0.0, 0.5 * XCOTH_SWITCH, XCOTH_SWITCH, 2 * XCOTH_SWITCH, 1e-2, 1.0, 30.0])
    got = xcoth(x)
    assert got[0] == 1.0
    assert np.allclose(got[1:], _xcoth_direct(x[1:]), rtol=1e-13)
    assert np.allclose(xcoth(-x), got)


def test_rates_along_pulse_uses_nominal_detuning():
    e = flat_grid(env=1.0, detuning=2.0)
    r = rates_along_pulse(e, P)
    ref = rates_from_amplitude(1.0, 2.0, P)
    assert np.allclose(r.gamma_pd, ref[0]) and np.allclose(r.gamma_up, ref[1])


def test_rates_along_narp_track_chirp(envelopes):
    e = envelopes["narp"]
    a = rates_along_pulse(e, P, use_nominal_detuning=True)
    b = rates_along_pulse(e, P, use_nominal_detuning=False)
    # with a chirped detuning the rates off centre drop below the resonant ones
    assert np.all(a.gamma_pd <= b.gamma_pd * (1 + 1e-12))
    assert a.gamma_pd.max() > 0


def test_polaron_shift_quadrature():
    val, _ = integrate.quad(lambda w: spectral_function(w, P) / w, 0, np.inf)
    assert polaron_shift(P) == pytest.approx(val, rel=1e-9)


def test_franck_condon_reference_value():
    assert franck_condon(P) == pytest.approx(0.96, abs=0.005)
    assert indistinguishability_cap(P) == pytest.approx(franck_condon(P) ** 4)


def test_franck_condon_zero_temperature_limit():
    # coth -> 1: exponent = a/2 int w e^{-w^2/2wb^2} dw = a wb^2 / 2
    p = PhononParams(T=1e-4)
    assert franck_condon_exponent(p) == pytest.approx(0.5 * p.alpha_ph * p.omega_b**2, rel=1e-8)
    assert franck_condon(p) == pytest.approx(math.exp(-0.5 * p.alpha_ph * p.omega_b**2), rel=1e-8)


def test_franck_condon_quadrature():
    th = 2 * K_B * P.T / HBAR
    val, _ = integrate.quad(lambda w: spectral_function(w, P) / w**2 / math.tanh(w / th), 1e-9, 60)
    assert franck_condon_exponent(P) == pytest.approx(0.5 * val, rel=1e-7)


def test_franck_condon_monotone():
    temps = [1.0, 4.0, 10.0, 30.0]
    B = [franck_condon(PhononParams(T=T)) for T in temps]
    assert np.all(np.diff(B) < 0)
    alphas = [0.0, 0.01, 0.03, 0.06]
    B = [franck_condon(PhononParams(alpha_ph=a)) for a in alphas]
    assert B[0] == 1.0
    assert np.all(np.diff(B) < 0)


def test_invalid_params():
    for kw in ({"alpha_ph": -1}, {"omega_b": 0}, {"T": 0}):
        with pytest.raises(ValueError):
            PhononParams(**kw)
    with pytest.raises(ValueError):
        rates_from_amplitude(1.0, 0.0, P, up_exponent=3)


def test_rates_csv(tmp_path):
    e = flat_grid(env=1.0)
    export_rates_csv(tmp_path / "r.csv", rates_along_pulse(e, P), stride=10)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "t_ps,gamma_pd_GHz,gamma_up_GHz"
    assert len(lines) - 1 == len(e.t[::10])
