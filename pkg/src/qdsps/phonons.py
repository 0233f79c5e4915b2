"""Weak-coupling LA-phonon model: spectral function, drive-dependent rates,
polaron shift and Franck-Condon factor.

The two Lindblad rates along a pulse are

    gamma_pd(t) = pi (e/eR)^2 J(eR) coth(hbar eR / 2 kB T)
    gamma_up(t) = pi/4 (|e|/eR)^p J(eR),        p = 1 by default

with eR = sqrt(e^2 + D^2).  Substituting J(w) = a w^3 exp(-w^2/2wb^2) cancels
every power of eR in a denominator:

    gamma_pd = pi a e^2 (2 kB T / hbar) xcoth(x) exp(-eR^2/2wb^2),  x = hbar eR / 2 kB T
    gamma_up = pi/4 a |e|^p eR^(3-p) exp(-eR^2/2wb^2)

so the eR -> 0 limit only needs a series for x coth(x).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .pulses import EnvelopeGrid
from .units import HBAR, K_B, radps_to_ghz

# below this x the Taylor series of x coth x is used
XCOTH_SWITCH = 1e-4


@dataclass(frozen=True)
class PhononParams:
    alpha_ph: float = 0.03  # ps^2
    omega_b: float = 0.9 / HBAR  # rad/ps
    T: float = 4.0  # K
    k_B: float = K_B

    def __post_init__(self):
        if self.alpha_ph < 0:
            raise ValueError("alpha_ph must be non-negative")
        if not self.omega_b > 0:
            raise ValueError("omega_b must be positive")
        if not self.T > 0:
            raise ValueError("temperature must be positive")

    @property
    def thermal_freq(self) -> float:
        """2 kB T / hbar in rad/ps."""
        return 2.0 * self.k_B * self.T / HBAR


@dataclass
class PhononRateTrace:
    t: np.ndarray
    gamma_pd: np.ndarray
    gamma_up: np.ndarray


def spectral_function(omega, p: PhononParams):
    omega = np.asarray(omega, dtype=float)
    return p.alpha_ph * omega**3 * np.exp(-(omega**2) / (2 * p.omega_b**2))


def xcoth(x):
    """x coth(x), continuous through x = 0."""
    x = np.abs(np.asarray(x, dtype=float))
    small = x < XCOTH_SWITCH
    out = np.empty_like(x)
    xs = x[small]
    out[small] = 1.0 + xs**2 / 3.0 - xs**4 / 45.0
    xl = x[~small]
    out[~small] = xl / np.tanh(xl)
    return out


def _xcoth_direct(x):
    x = np.abs(np.asarray(x, dtype=float))
    return x / np.tanh(x)


def rates_from_amplitude(eps, detuning, p: PhononParams, up_exponent: int = 1):
    """Rates for instantaneous Rabi amplitude(s) ``eps`` and detuning(s)."""
    e = np.abs(np.asarray(eps, dtype=float))
    d = np.asarray(detuning, dtype=float)
    eR2 = e**2 + d**2
    eR = np.sqrt(eR2)
    gauss = np.exp(-eR2 / (2 * p.omega_b**2))
    x = eR / p.thermal_freq
    gamma_pd = math.pi * p.alpha_ph * e**2 * p.thermal_freq * xcoth(x) * gauss
    if up_exponent == 1:
        gamma_up = 0.25 * math.pi * p.alpha_ph * e * eR2 * gauss
    elif up_exponent == 2:
        gamma_up = 0.25 * math.pi * p.alpha_ph * e**2 * eR * gauss
    else:
        raise ValueError("up_exponent must be 1 or 2")
    return gamma_pd, gamma_up


def rates_along_pulse(
    e: EnvelopeGrid,
    p: PhononParams,
    up_exponent: int = 1,
    use_nominal_detuning: bool = True,
) -> PhononRateTrace:
    """Phonon rates sampled on the envelope grid.

    The instantaneous Rabi amplitude is ``|env|``; the detuning is the
    envelope's nominal (instantaneous) detuning, or the constant frame
    detuning when ``use_nominal_detuning`` is False.
    """
    d = e.nominal_detuning if use_nominal_detuning else np.full_like(e.t, e.frame_detuning)
    gpd, gup = rates_from_amplitude(np.abs(e.env), d, p, up_exponent)
    return PhononRateTrace(e.t.copy(), gpd, gup)


def polaron_shift(p: PhononParams) -> float:
    return p.alpha_ph * p.omega_b**3 * math.sqrt(math.pi / 2.0)


def franck_condon_exponent(p: PhononParams) -> float:
    """0.5 * int_0^inf J(w)/w^2 coth(hbar w / 2 kB T) dw."""
    if p.alpha_ph == 0:
        return 0.0
    # J/w^2 coth = a exp(-w^2/2wb^2) * (2kBT/hbar) xcoth(w / thermal), finite at w = 0
    th = p.thermal_freq

    def f(w):
        return p.alpha_ph * math.exp(-(w * w) / (2 * p.omega_b**2)) * th * float(xcoth(w / th))

    upper = p.omega_b * 40.0
    val, _ = integrate.quad(f, 0.0, upper, epsabs=1e-12, epsrel=1e-12, limit=200)
    return 0.5 * val


def franck_condon(p: PhononParams) -> float:
    return math.exp(-franck_condon_exponent(p))


def indistinguishability_cap(p: PhononParams) -> float:
    return franck_condon(p) ** 4


def export_rates_csv(path, r: PhononRateTrace, stride: int = 1) -> None:
    data = np.column_stack([r.t[::stride], radps_to_ghz(r.gamma_pd[::stride]), radps_to_ghz(r.gamma_up[::stride])])
    np.savetxt(path, data, delimiter=",", header="t_ps,gamma_pd_GHz,gamma_up_GHz", comments="")
