"""Deterministic oracle: Lindblad master equation, regression correlations, FoMs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .propagation import (
    PROJ_E,
    SIGMA_MINUS,
    SIGMA_PLUS,
    ChannelSet,
    NumericalFault,
    Propagation,
    compile_emitter,
)
from .pulses import DEFAULT_STEPS_PER_PERIOD, EnvelopeGrid, PulseError

TRACE_TOL = 1e-8
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-8
REGRESSION_STRIDE = 1
MIN_SLICE_DT = 0.05  # ps
MAX_STORED_SLICES = 1500

GROUND = np.diag([1.0, 0.0]).astype(complex)
EXCITED = np.diag([0.0, 1.0]).astype(complex)


def hamiltonian_at(e: EnvelopeGrid, t: float) -> np.ndarray:
    """H/hbar in the envelope's frame at time t (rad/ps), basis (|g>, |e>)."""
    env = e.sample(t)
    return np.array([[0.0, 0.5 * np.conj(env)], [0.5 * env, e.frame_detuning]], dtype=complex)


def hamiltonian_explicit_at(e: EnvelopeGrid, t: float) -> np.ndarray:
    """Same physics with the chirp carried by a time-dependent detuning."""
    from .propagation import explicit_detuning_form

    env, det = explicit_detuning_form(e)
    if t < e.t[0] or t > e.t[-1]:
        raise PulseError(f"t={t} outside the envelope grid")
    a = np.interp(t, e.t, env.real) + 1j * np.interp(t, e.t, env.imag)
    d = np.interp(t, e.t, det)
    return np.array([[0.0, 0.5 * np.conj(a)], [0.5 * a, d]], dtype=complex)


def check_density_matrix(rho: np.ndarray) -> None:
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise NumericalFault("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > TRACE_TOL:
        raise NumericalFault(f"trace drift {abs(np.trace(rho) - 1.0):.2e}")
    if np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) < -POSITIVITY_TOL:
        raise NumericalFault("density matrix has a negative eigenvalue")


@dataclass
class PopulationTrace:
    t: np.ndarray
    Nx: np.ndarray


@dataclass
class MEResult:
    population: PopulationTrace
    rho_final: np.ndarray
    rhos: np.ndarray
    prop: Propagation
    max_trace_drift: float


@dataclass
class CorrelationGrid:
    t: np.ndarray  # slice times (ps)
    G1: np.ndarray  # (m, m) complex on t_grid, upper triangle t' >= t
    G2: np.ndarray  # (m, m) real
    # integrals over t' >= t on the full step grid, one per slice
    int_g1sq: np.ndarray
    int_g2: np.ndarray
    t_grid: np.ndarray  # stored subset of t


@dataclass
class FiguresOfMerit:
    eta: float
    g2: float | None
    indist: float | None
    eta_se: float = 0.0
    g2_se: float | None = 0.0
    indist_se: float | None = 0.0
    p_emit: float | None = None  # probability of at least one photon, when known
    source: str = "oracle"
    meta: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "eta": self.eta, "eta_se": self.eta_se, "g2": self.g2, "g2_se": self.g2_se,
            "indist": self.indist, "indist_se": self.indist_se, "p_emit": self.p_emit,
            "source": self.source, **self.meta,
        }


def _run(prop: Propagation, rho0: np.ndarray) -> np.ndarray:
    d = prop.dim
    x = _kernels.evolve_vec_kernel(prop.me_maps(), prop.n_tail, prop.tail_superop(),
                                   np.asarray(rho0, dtype=complex).reshape(d * d))
    return x.reshape(-1, d, d)


def evolve_me(
    e: EnvelopeGrid,
    ch: ChannelSet,
    rho0: np.ndarray = GROUND,
    tail_time: float = 0.0,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    explicit_detuning: bool = False,
    frame_shift: float = 0.0,
    check: bool = True,
) -> MEResult:
    """Integrate the master equation across the envelope plus ``tail_time`` of free evolution.

    Magnus steps on the node schedule; the tail uses the exact propagator.  If the
    trace drifts by more than 1e-8 the step density is doubled once.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    check_density_matrix(rho0)
    spp = steps_per_period
    for attempt in range(2):
        prop = compile_emitter(e, ch, tail_time, spp, explicit_detuning=explicit_detuning, frame_shift=frame_shift)
        rhos = _run(prop, rho0)
        drift = float(np.max(np.abs(np.trace(rhos, axis1=1, axis2=2) - 1.0)))
        if drift <= TRACE_TOL:
            break
        spp *= 2
    else:
        raise NumericalFault(f"trace drift {drift:.2e} persists after halving the step")
    if check:
        check_density_matrix(rhos[-1])
    pop = PopulationTrace(prop.step_times, rhos[:, 1, 1].real.copy())
    return MEResult(pop, rhos[-1].copy(), rhos, prop, drift)


def regression_correlations(
    e: EnvelopeGrid,
    ch: ChannelSet,
    rho0: np.ndarray = GROUND,
    tail_time: float = 0.0,
    stride: int = REGRESSION_STRIDE,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    frame_shift: float = 0.0,
    me: MEResult | None = None,
    min_slice_dt: float = MIN_SLICE_DT,
    max_stored: int = MAX_STORED_SLICES,
) -> tuple[CorrelationGrid, MEResult]:
    """Two-time correlations on every ``stride``-th step (quantum regression theorem).

    Slices closer than ``min_slice_dt`` are skipped; the inner t' integral
    still runs over every step.  G1 and G2 themselves are kept on at most
    ``max_stored`` evenly spread slices.
    """
    if me is None:
        me = evolve_me(e, ch, rho0, tail_time, steps_per_period, frame_shift=frame_shift)
    prop = me.prop
    times = prop.step_times
    slices = select_slices(times, stride, min_slice_dt)
    keep = np.unique(np.linspace(0, len(slices) - 1, min(len(slices), max_stored)).round().astype(np.int64))
    store = np.full(len(slices), -1, dtype=np.int64)
    store[keep] = np.arange(len(keep))
    d = prop.dim
    i1, i2, G1, G2 = _kernels.regression_kernel(
        prop.me_maps(), prop.n_tail, prop.tail_superop(), me.rhos.reshape(-1, d * d),
        times, slices, store, SIGMA_MINUS, SIGMA_PLUS, PROJ_E,
    )
    return CorrelationGrid(times[slices], G1, G2, i1, i2, times[slices[keep]]), me


def select_slices(times: np.ndarray, stride: int, min_dt: float = 0.0) -> np.ndarray:
    """Outer-time slice indices: every ``stride`` steps but at least ``min_dt`` apart."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n = len(times) - 1
    out = [0]
    last = 0
    for k in range(stride, n, stride):
        if times[k] - times[last] >= min_dt:
            out.append(k)
            last = k
    if out[-1] != n:
        out.append(n)
    return np.asarray(out, dtype=np.int64)


def _outer_trapezoid(t: np.ndarray, f: np.ndarray) -> float:
    return float(np.trapezoid(f, t)) if len(t) > 1 else 0.0


def fom_from_me(corr: CorrelationGrid, pop: PopulationTrace, gamma: float, lifetimes_after: float = 8.0) -> FiguresOfMerit:
    """Pulsed-source figures of merit from the oracle.

    eta    = gamma * int N dt  +  N(t_end)     (remaining excitation is emitted later)
    g2     = 2 gamma^2 intint_{t'>t} G2 / eta^2
    indist = 2 intint_{t'>t} |G1|^2 / (int N)^2
    """
    t = pop.t
    if t[-1] - t[0] < lifetimes_after / gamma:
        raise ValueError("correlation grid must extend several radiative lifetimes past the pulse")
    intN = float(np.trapezoid(pop.Nx, t))
    eta = gamma * intN + float(pop.Nx[-1])
    meta = {"eta_definition": "mean photon number", "indist_normalisation": "(int N)^2"}
    if eta <= 0 or intN <= 0:
        return FiguresOfMerit(eta, None, None, g2_se=None, indist_se=None, meta=meta)
    g2 = 2.0 * gamma**2 * _outer_trapezoid(corr.t, corr.int_g2) / (gamma * intN) ** 2
    indist = 2.0 * _outer_trapezoid(corr.t, corr.int_g1sq) / intN**2
    return FiguresOfMerit(eta, g2, indist, meta=meta)


def oracle_fom(
    e: EnvelopeGrid,
    ch: ChannelSet,
    gamma: float,
    tail_time: float,
    stride: int = REGRESSION_STRIDE,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    frame_shift: float = 0.0,
) -> tuple[FiguresOfMerit, MEResult, CorrelationGrid]:
    corr, me = regression_correlations(
        e, ch, GROUND, tail_time, stride, steps_per_period, frame_shift=frame_shift
    )
    return fom_from_me(corr, me.population, gamma), me, corr


def export_population_csv(path, pop: PopulationTrace) -> None:
    np.savetxt(path, np.column_stack([pop.t, pop.Nx]), delimiter=",", header="t_ps,Nx", comments="")


def export_correlation_csv(path, corr: CorrelationGrid) -> None:
    n = len(corr.t_grid)
    iu, ju = np.triu_indices(n)
    data = np.column_stack([corr.t_grid[iu], corr.t_grid[ju], corr.G1[iu, ju].real, corr.G1[iu, ju].imag, corr.G2[iu, ju]])
    np.savetxt(path, data, delimiter=",", header="t_ps,tprime_ps,re_g1,im_g1,g2", comments="")


def pure_dephasing_indist(gamma: float, gamma_pd: float) -> float:
    """Closed form for an inverted emitter whose coherence decays at gamma/2 + gamma_pd."""
    return gamma / (gamma + 2.0 * gamma_pd)


def ideal_decay_g1(gamma: float, t: np.ndarray, tp: np.ndarray, gamma_pd: float = 0.0) -> np.ndarray:
    """<s+(t) s-(t')> for a TLS prepared in |e> at 0, t' >= t."""
    return np.exp(-gamma * t) * np.exp(-(0.5 * gamma + gamma_pd) * (tp - t))


__all__ = [
    "hamiltonian_at", "hamiltonian_explicit_at", "evolve_me", "regression_correlations", "fom_from_me",
    "oracle_fom", "PopulationTrace", "CorrelationGrid", "FiguresOfMerit", "MEResult", "GROUND", "EXCITED",
    "export_population_csv", "export_correlation_csv", "pure_dephasing_indist", "ideal_decay_g1",
]
