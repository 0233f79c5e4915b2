"""Pulse envelopes for the dichromatic, NARP and SUPER excitation schemes.

Every scheme compiles into an :class:`EnvelopeGrid`: a complex Rabi envelope
sampled on a uniform time grid in a rotating frame, plus the instantaneous
detuning trace that the phonon rates need.  The Hamiltonian in that frame is

    H(t) = frame_detuning * |e><e| + (env(t) sigma+ + conj(env(t)) sigma-) / 2

Frequencies are rad/ps, times ps.  Spectra use the kernel exp(+i w t), so a
component env ~ exp(-i nu t) appears at nu in the frame, i.e. at
w - w0 = nu - frame_detuning.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import erf

from .units import HBAR

# RK4 steps per shortest period at the fastest local frequency.
DEFAULT_STEPS_PER_PERIOD = 200
EDGE_TOL = 1e-6


class PulseError(ValueError):
    """Rejected pulse parameters or an unusable sampling grid."""


class AmplitudeWarning(UserWarning):
    pass


class Scheme(str, Enum):
    DICHROMATIC = "dichromatic"
    NARP = "narp"
    SUPER = "super"


@dataclass(frozen=True)
class QubitParams:
    """Two-level emitter.  ``gamma`` is the radiative rate into the waveguide."""

    gamma: float = 2.0 * math.pi * 1e-3
    omega0: float = 0.0
    hbar: float = field(default=HBAR, init=False)

    def __post_init__(self):
        if not self.gamma > 0:
            raise PulseError("gamma must be positive")


@dataclass(frozen=True)
class DichromaticParams:
    t_p: float
    delta: float
    phi: float = 0.0
    # None means: calibrate to a pi pulse
    omega0_amp: float | None = None

    def __post_init__(self):
        if not self.t_p > 0:
            raise PulseError("t_p must be positive")
        if self.delta < 0:
            raise PulseError("delta must be non-negative")


@dataclass(frozen=True)
class NarpParams:
    t_p: float
    omega0_amp: float
    alpha: float
    delta: float
    fft_half_window: float | None = None
    fft_samples: int = 2**16

    def __post_init__(self):
        if not self.t_p > 0:
            raise PulseError("t_p must be positive")
        if not self.delta > 0:
            raise PulseError("the spectral hole half-width delta must be positive")

    @property
    def chirp_product(self) -> float:
        """|alpha| t_p^2, should be >> 1 for rapid passage."""
        return abs(self.alpha) * self.t_p**2

    @property
    def area_product(self) -> float:
        """Omega0^2 t_p^2, should be >> |alpha| t_p^2 for adiabatic following."""
        return self.omega0_amp**2 * self.t_p**2

    @property
    def spectral_chirp(self) -> float:
        return spectral_chirp(self.alpha, self.t_p)


@dataclass(frozen=True)
class SuperParams:
    omega1: float
    omega2: float
    t_p1: float
    t_p2: float
    delta1: float
    delta2: float
    tau: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not (self.t_p1 > 0 and self.t_p2 > 0):
            raise PulseError("pulse widths must be positive")


@dataclass
class EnvelopeGrid:
    t: np.ndarray
    env: np.ndarray
    frame_detuning: float
    nominal_detuning: np.ndarray
    scheme: Scheme

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.env = np.asarray(self.env, dtype=complex)
        self.nominal_detuning = np.broadcast_to(
            np.asarray(self.nominal_detuning, dtype=float), self.t.shape
        ).copy()
        if self.t.ndim != 1 or len(self.t) < 3:
            raise PulseError("time grid needs at least three samples")
        d = np.diff(self.t)
        if not np.all(d > 0):
            raise PulseError("time grid must be strictly increasing")
        if np.ptp(d) > 1e-9 * d[0] * len(d) + 1e-12:
            raise PulseError("time grid must be uniform")
        if self.env.shape != self.t.shape:
            raise PulseError("envelope and time grid lengths differ")
        if not np.all(np.isfinite(self.env)):
            raise PulseError("envelope has non-finite samples")

    @property
    def dt(self) -> float:
        return (self.t[-1] - self.t[0]) / (len(self.t) - 1)

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.env)))

    def sample(self, t: float) -> complex:
        """Linearly interpolated envelope value at time ``t``."""
        if t < self.t[0] or t > self.t[-1]:
            raise PulseError(f"t={t} outside the envelope grid")
        return complex(np.interp(t, self.t, self.env.real) + 1j * np.interp(t, self.t, self.env.imag))

    def edges_decayed(self, tol: float = EDGE_TOL) -> bool:
        edge = max(abs(self.env[0]), abs(self.env[-1]))
        return edge <= tol * max(self.peak, 1e-300)


@dataclass
class SpectralDensity:
    omega: np.ndarray
    power: np.ndarray


def symmetric_grid(half_window: float, step: float) -> np.ndarray:
    """Uniform grid on [-W, W] through 0 with an odd number of samples."""
    m = int(math.ceil(half_window / step))
    return step * np.arange(-m, m + 1, dtype=float)


def default_step(omega_max: float, steps_per_period: int = DEFAULT_STEPS_PER_PERIOD) -> float:
    """Grid spacing: half of the finest RK4 step 2 pi / (steps_per_period * omega_max)."""
    return 0.5 * 2.0 * math.pi / (steps_per_period * max(omega_max, 1e-6))


# ---------------------------------------------------------------- dichromatic


def calibrate_dichromatic_amplitude(p: DichromaticParams) -> float:
    """Amplitude giving the beat envelope a pulse area of exactly pi."""
    c = math.cos(p.phi / 2.0)
    if abs(c) < 1e-15:
        raise PulseError("cos(phi/2) = 0: no amplitude gives a pi pulse")
    expo = p.delta**2 * p.t_p**2 / 2.0
    if expo > 700.0:
        raise PulseError("delta * t_p too large, Gaussian factor underflows")
    amp = math.pi / (math.sqrt(2.0 * math.pi * p.t_p**2) * c * math.exp(-expo))
    if abs(amp) > 1e3:
        warnings.warn(f"dichromatic amplitude {amp:.3g} rad/ps exceeds 1e3 rad/ps", AmplitudeWarning)
    return amp


def dichromatic_area(p: DichromaticParams, amp: float) -> float:
    """Closed-form time integral of the beat envelope Omega0 e^{-t^2/2tp^2} cos(delta t + phi/2)."""
    return amp * math.sqrt(2 * math.pi) * p.t_p * math.cos(p.phi / 2) * math.exp(-p.delta**2 * p.t_p**2 / 2)


def build_dichromatic(
    p: DichromaticParams,
    q: QubitParams | None = None,
    step: float | None = None,
    half_window: float | None = None,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
) -> EnvelopeGrid:
    amp = p.omega0_amp if p.omega0_amp is not None else calibrate_dichromatic_amplitude(p)
    W = 8.0 * p.t_p if half_window is None else half_window
    # fraction of envelope energy inside +-W (closed form, cos^2 modulated Gaussian)
    total = 0.5 * math.sqrt(math.pi) * p.t_p * (1 + math.exp(-(p.delta * p.t_p) ** 2) * math.cos(p.phi))
    lost = 0.5 * math.sqrt(math.pi) * p.t_p * (1 - erf(W / p.t_p)) * 2.0
    if lost / total > 1e-6:
        raise PulseError(f"window +-{W} ps holds less than 1-1e-6 of the pulse energy")
    h = step if step is not None else default_step(abs(amp) + p.delta, steps_per_period)
    t = symmetric_grid(W, h)
    env = amp * np.exp(-(t**2) / (2 * p.t_p**2)) * np.cos(p.delta * t + p.phi / 2) * np.exp(-0.5j * p.phi)
    return EnvelopeGrid(t, env, 0.0, np.zeros_like(t), Scheme.DICHROMATIC)


# ----------------------------------------------------------------------- NARP


def spectral_chirp(alpha: float, t_p: float) -> float:
    """Spectral chirp alpha' of a Gaussian of width t_p carrying temporal chirp alpha."""
    return alpha * t_p**4 / (1.0 + alpha**2 * t_p**4)


def amplitude_mask(omega, delta: float):
    """Notch A(w) = 1 - exp(-ln2 w^2 / delta^2); 2 delta is the hole FWHM."""
    omega = np.asarray(omega)
    return 1.0 - np.exp(-math.log(2.0) * omega**2 / delta**2)


def spectral_phase(omega, alpha_prime: float):
    return 0.5 * alpha_prime * np.asarray(omega) ** 2


def fft_omega(n: int, step: float) -> np.ndarray:
    """Angular frequencies matching :func:`apply_spectral_mask`'s ordering."""
    return 2.0 * math.pi * np.fft.fftfreq(n, step)


def apply_spectral_mask(t: np.ndarray, env: np.ndarray, mask: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Return F^-1[F[env] * mask(w)] on the same uniform grid."""
    h = (t[-1] - t[0]) / (len(t) - 1)
    w = fft_omega(len(t), h)
    return np.fft.fft(np.fft.ifft(env) * mask(w))


def chirped_gaussian(t, amp: float, t_p: float, alpha: float):
    """ARP field in the frame of its centre frequency; instantaneous detuning is -alpha t."""
    return amp * np.exp(-(t**2) / (2 * t_p**2)) * np.exp(-0.5j * alpha * t**2)


def narp_fft_grid(p: NarpParams) -> np.ndarray:
    stretch = math.sqrt(1.0 + p.alpha**2 * p.t_p**4)
    if p.fft_half_window is None:
        # wide enough for both the stretched pulse and 32 bins across the hole
        L = max(12.0 * p.t_p * stretch, 1.05 * 16.0 * math.pi / p.delta)
    else:
        L = p.fft_half_window
    n = int(p.fft_samples)
    return -L + 2.0 * L * np.arange(n) / n


def _narp_hole_component(p: NarpParams):
    """The part of the ARP field removed by the notch, on the FFT grid."""
    tf = narp_fft_grid(p)
    h = tf[1] - tf[0]
    w = fft_omega(len(tf), h)
    dw = abs(w[1] - w[0])
    if 2.0 * p.delta / dw < 32:
        raise PulseError(f"FFT grid resolves only {2 * p.delta / dw:.1f} bins across the spectral hole (need 32)")
    src = chirped_gaussian(tf, p.omega0_amp, p.t_p, p.alpha)
    peak = abs(p.omega0_amp)
    if max(abs(src[0]), abs(src[-1])) > EDGE_TOL * peak:
        raise PulseError("FFT window too short for the chirped pulse")
    spec = np.fft.ifft(src)
    if np.max(np.abs(spec[len(spec) // 2 - 2 : len(spec) // 2 + 2])) > 1e-12 * np.max(np.abs(spec)):
        raise PulseError("FFT step too coarse: chirped spectrum aliases")
    hole = np.fft.fft(spec * (1.0 - amplitude_mask(w, p.delta)))
    if max(abs(hole[0]), abs(hole[-1])) > EDGE_TOL * peak:
        raise PulseError("FFT window too short for the notch component (aliasing)")
    return tf, hole


def build_narp(
    p: NarpParams,
    q: QubitParams | None = None,
    step: float | None = None,
    half_window: float | None = None,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    tail_tol: float = 1e-7,
) -> EnvelopeGrid:
    """Notch-filtered chirped pulse.

    The ARP field (width ``t_p``, temporal chirp ``alpha``) has spectral phase
    ``alpha'/2 w^2`` exactly; multiplying its spectrum by A(w) is done as
    ``arp - F^-1[F[arp] (1 - A)]``.  The subtracted component is narrow-band,
    so it is computed on a coarse FFT grid and spline-interpolated onto the
    fine solver grid, while the ARP field itself is evaluated in closed form.
    """
    tf, hole = _narp_hole_component(p)
    peak = abs(p.omega0_amp)
    if half_window is None:
        mag = np.abs(hole) + np.abs(chirped_gaussian(tf, p.omega0_amp, p.t_p, p.alpha))
        above = np.nonzero(mag > tail_tol * peak)[0]
        half_window = max(abs(tf[above[0]]), abs(tf[above[-1]])) + 4 * p.t_p
        half_window = min(half_window, abs(tf[0]))
    omega_max = peak + 4.0 * abs(p.alpha) * p.t_p
    h = step if step is not None else default_step(omega_max, steps_per_period)
    t = symmetric_grid(half_window, h)
    if t[-1] > -tf[0]:
        raise PulseError("solver window exceeds the FFT window")
    re = CubicSpline(tf, hole.real)(t)
    im = CubicSpline(tf, hole.imag)(t)
    env = chirped_gaussian(t, p.omega0_amp, p.t_p, p.alpha) - (re + 1j * im)
    return EnvelopeGrid(t, env, 0.0, -p.alpha * t, Scheme.NARP)


def narp_closed_form(t, p: NarpParams):
    """Analytic notch-filtered chirped Gaussian (independent of any FFT)."""
    t = np.asarray(t, dtype=float)
    c0 = p.t_p**2 / (2.0 * (1.0 + 1j * p.alpha * p.t_p**2))
    c = c0 + math.log(2.0) / p.delta**2
    pref = p.omega0_amp * math.sqrt(2 * math.pi) * p.t_p / np.sqrt(1.0 + 1j * p.alpha * p.t_p**2)
    hole = pref / (2.0 * np.sqrt(math.pi * c)) * np.exp(-(t**2) / (4.0 * c))
    return chirped_gaussian(t, p.omega0_amp, p.t_p, p.alpha) - hole


def narp_energy_removed(p: NarpParams) -> float:
    """Fraction of ARP pulse energy removed by the notch, 1 - int A^2|E|^2 / int |E|^2."""
    s2 = (1.0 + p.alpha**2 * p.t_p**4) / p.t_p**2  # |E(w)|^2 ~ exp(-w^2 / s2)
    b = math.log(2.0) / p.delta**2
    r1 = math.sqrt(1.0 / (1.0 + b * s2))
    r2 = math.sqrt(1.0 / (1.0 + 2.0 * b * s2))
    return 2.0 * r1 - r2


# ---------------------------------------------------------------------- SUPER


def build_super(
    p: SuperParams,
    q: QubitParams | None = None,
    step: float | None = None,
    half_window: float | None = None,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
) -> EnvelopeGrid:
    """Two-colour drive in the frame of the first laser (frame detuning Delta1)."""
    W = 8.0 * max(p.t_p1, p.t_p2) + abs(p.tau) if half_window is None else half_window
    if W < 8.0 * p.t_p1 or W < 8.0 * p.t_p2 + abs(p.tau):
        raise PulseError("window must cover +-8 pulse widths of both components")
    omega_max = abs(p.delta1) + abs(p.omega1) + abs(p.omega2) + abs(p.delta1 - p.delta2)
    h = step if step is not None else default_step(omega_max, steps_per_period)
    t = symmetric_grid(W, h)
    e1 = p.omega1 * np.exp(-(t**2) / (2 * p.t_p1**2))
    e2 = p.omega2 * np.exp(-((t - p.tau) ** 2) / (2 * p.t_p2**2))
    env = e1 + e2 * np.exp(-1j * (p.delta1 - p.delta2) * t) * np.exp(-1j * p.phi)
    return EnvelopeGrid(t, env, p.delta1, np.full_like(t, p.delta1), Scheme.SUPER)


class SuperDetuning(NamedTuple):
    delta2: float
    alternate: float


def super_detuning_condition(delta1: float, eps1_peak: float) -> SuperDetuning:
    """Second-laser detuning whose beat with laser 1 matches the peak effective Rabi frequency.

    ``delta2`` is the root with both lasers on the same side of the resonance
    (|Delta2| = Delta1 + sqrt(eps1^2 + Delta1^2)); ``alternate`` is the other one.
    """
    split = math.hypot(eps1_peak, delta1)
    return SuperDetuning(delta1 + split, delta1 - split)


# ------------------------------------------------------------------- spectra


def pulse_spectrum(e: EnvelopeGrid, resolution: float = 2e-5, floor: float = 1e-14) -> SpectralDensity:
    """Unit-area power spectrum on the w - w0 axis."""
    if not e.edges_decayed():
        raise PulseError("envelope has not decayed at the window edges")
    h = e.dt
    n0 = len(e.env)
    # bandwidth estimate on the native grid, then decimate and zero-pad
    P0 = np.abs(np.fft.ifft(e.env)) ** 2
    w0 = fft_omega(n0, h)
    order = np.argsort(np.abs(w0))
    cum = np.cumsum(P0[order])
    idx = np.searchsorted(cum, (1.0 - floor) * cum[-1])
    w_ext = np.abs(w0[order[min(idx, n0 - 1)]])
    w_ext = max(w_ext, 10.0 * resolution)
    k = max(1, int(math.floor(math.pi / (3.0 * w_ext * h))))
    env = e.env[::k]
    hd = h * k
    n = 1 << int(math.ceil(math.log2(max(len(env), 2.0 * math.pi / (hd * resolution)))))
    buf = np.zeros(n, dtype=complex)
    buf[: len(env)] = env
    F = np.fft.ifft(buf)
    w = fft_omega(n, hd)
    P = np.abs(F) ** 2
    s = np.argsort(w)
    omega = w[s] - e.frame_detuning
    P = P[s]
    P /= np.trapezoid(P, omega)
    return SpectralDensity(omega, P)


def lorentzian_emission(gamma: float, n: int = 200001, center: float = 0.0) -> SpectralDensity:
    """Unit-area Lorentzian of FWHM ``gamma``; sampled densely in the core, sparsely in the tails."""
    theta = np.linspace(-math.pi / 2, math.pi / 2, n + 2)[1:-1]
    omega = center + 0.5 * gamma * np.tan(theta)
    power = (gamma / (2 * math.pi)) / ((omega - center) ** 2 + (gamma / 2) ** 2)
    return SpectralDensity(omega, power)


def overlap_measure(s: SpectralDensity, emission: SpectralDensity) -> float:
    """Emission-weighted mean of the peak-normalised pump power spectrum, in [0, 1]."""
    peak = np.max(s.power)
    if peak <= 0:
        return 0.0
    S_on_s = np.interp(s.omega, emission.omega, emission.power, left=0.0, right=0.0)
    num = np.trapezoid(s.power / peak * S_on_s, s.omega)
    den = np.trapezoid(emission.power, emission.omega)
    return float(min(max(num / den, 0.0), 1.0))


def export_envelope_csv(path, e: EnvelopeGrid, stride: int = 1) -> None:
    data = np.column_stack([e.t[::stride], e.env.real[::stride], e.env.imag[::stride]])
    np.savetxt(path, data, delimiter=",", header="t_ps,re_env,im_env", comments="")


def export_spectrum_csv(path, s: SpectralDensity, max_rows: int = 20000, rel_floor: float = 1e-12) -> None:
    """Spectrum restricted to the band above ``rel_floor`` of the peak, thinned to ``max_rows``."""
    keep = np.nonzero(s.power > rel_floor * s.power.max())[0]
    lo, hi = keep[0], keep[-1] + 1
    stride = max(1, -(-(hi - lo) // max_rows))
    data = np.column_stack([s.omega[lo:hi:stride] * HBAR, s.power[lo:hi:stride]])
    np.savetxt(path, data, delimiter=",", header="omega_meV,power", comments="")
