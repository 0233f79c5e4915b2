import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdsps.master import (
    EXCITED,
    GROUND,
    check_density_matrix,
    evolve_me,
    export_correlation_csv,
    export_population_csv,
    fom_from_me,
    hamiltonian_at,
    hamiltonian_explicit_at,
    oracle_fom,
    regression_correlations,
    select_slices,
)
from qdsps.propagation import Channel, ChannelSet, NumericalFault, emitter_channels
from qdsps.phonons import PhononParams
from qdsps.presets import build_preset, get_preset
from qdsps.pulses import DEFAULT_STEPS_PER_PERIOD, EnvelopeGrid, QubitParams, Scheme, chirped_gaussian

from conftest import GAMMA, flat_grid

TAIL = 12.0 / GAMMA


def _decay(rate_pd: float = 0.0) -> ChannelSet:
    chans = [Channel("lower", GAMMA, "waveguide", detector=0)]
    if rate_pd:
        chans.append(Channel("project_e", rate_pd, "dephasing"))
    return ChannelSet(chans)


def test_hamiltonian_matrix():
    e = flat_grid(env=2.0 + 1.0j, detuning=3.0)
    H = hamiltonian_at(e, 0.3)
    assert np.allclose(H, [[0, 1.0 - 0.5j], [1.0 + 0.5j, 3.0]])
    assert np.allclose(H, H.conj().T)


def test_hamiltonian_forms_agree_without_chirp():
    e = flat_grid(env=1.5, detuning=0.7)
    assert np.allclose(hamiltonian_at(e, -0.5), hamiltonian_explicit_at(e, -0.5))


def test_check_density_matrix():
    check_density_matrix(GROUND)
    check_density_matrix(np.full((2, 2), 0.5, dtype=complex))
    with pytest.raises(NumericalFault):
        check_density_matrix(np.diag([0.7, 0.4]).astype(complex))
    with pytest.raises(NumericalFault):
        check_density_matrix(np.array([[0.5, 0.1j], [0.1j, 0.5]]))
    with pytest.raises(NumericalFault):
        check_density_matrix(np.array([[0.5, 0.9], [0.9, 0.5]], dtype=complex))


def test_free_decay_population():
    me = evolve_me(flat_grid(), _decay(), EXCITED, TAIL)
    t = me.population.t - me.population.t[0]
    assert np.max(np.abs(me.population.Nx - np.exp(-GAMMA * t))) < 1e-9
    assert me.max_trace_drift < 1e-10


@pytest.mark.parametrize("omega,delta", [(1.0, 0.0), (2.0, 1.5), (0.5, -3.0)])
def test_rabi_closed_form(omega, delta):
    e = flat_grid(half_window=10.0, env=omega, detuning=delta)
    me = evolve_me(e, ChannelSet([]), GROUND, 0.0)
    t = me.population.t - e.t[0]
    W2 = omega**2 + delta**2
    ref = omega**2 / W2 * np.sin(0.5 * math.sqrt(W2) * t) ** 2
    # Magnus steps are exact for a constant generator
    assert np.max(np.abs(me.population.Nx - ref)) < 1e-10


@settings(max_examples=15, deadline=None)
@given(omega=st.floats(0.1, 3.0), delta=st.floats(-4.0, 4.0))
def test_lossless_evolution_stays_pure(omega, delta):
    me = evolve_me(flat_grid(half_window=5.0, env=omega, detuning=delta), ChannelSet([]), GROUND, 0.0)
    purity = np.einsum("nij,nji->n", me.rhos, me.rhos).real
    assert np.max(np.abs(purity - 1.0)) < 1e-8
    tr = np.trace(me.rhos, axis1=1, axis2=2)
    assert np.max(np.abs(tr - 1.0)) < 1e-12


@settings(max_examples=15, deadline=None)
@given(omega=st.floats(0.1, 3.0), rate=st.floats(0.0, 2.0), up=st.floats(0.0, 1.0))
def test_dissipative_evolution_is_physical(omega, rate, up):
    ch = ChannelSet([Channel("lower", GAMMA, detector=0), Channel("project_e", rate), Channel("raise", up)])
    me = evolve_me(flat_grid(half_window=5.0, env=omega), ch, GROUND, 20.0)
    for rho in me.rhos[::25]:
        check_density_matrix(rho)


@pytest.mark.parametrize("name", ["long-dichromatic", "short-dichromatic", "narp", "super"])
def test_step_halving_converged(name):
    # halving the step moves the final population by less than 1e-6
    pr = get_preset(name)
    ch_for = lambda e: emitter_channels(e, QubitParams(), PhononParams())
    ea = build_preset(pr)
    eb = build_preset(pr, steps_per_period=2 * DEFAULT_STEPS_PER_PERIOD)
    a = evolve_me(ea, ch_for(ea), GROUND, 0.0)
    b = evolve_me(eb, ch_for(eb), GROUND, 0.0)
    assert len(eb.t) > len(ea.t)
    assert abs(a.population.Nx[-1] - b.population.Nx[-1]) < 1e-6


def _arp_grid(alpha=-1.111, t_p=1.8, amp=5.4, half_window=30.0, step=2e-3):
    m = int(round(half_window / step))
    t = step * np.arange(-m, m + 1, dtype=float)
    return EnvelopeGrid(t, chirped_gaussian(t, amp, t_p, alpha), 0.0, -alpha * t, Scheme.NARP)


@pytest.mark.parametrize("alpha", [-1.111, 0.6])
def test_chirp_gauge_equivalence(alpha):
    # chirp carried as an envelope phase or as a time-dependent detuning
    e = _arp_grid(alpha)
    ch = ChannelSet([Channel("lower", GAMMA, detector=0), Channel("project_e", 0.05)])
    a = evolve_me(e, ch, GROUND, 0.0)
    b = evolve_me(e, ch, GROUND, 0.0, explicit_detuning=True)
    common, ia, ib = np.intersect1d(a.population.t, b.population.t, return_indices=True)
    assert len(common) > 100 and common[-1] == e.t[-1]
    assert np.max(np.abs(a.population.Nx[ia] - b.population.Nx[ib])) < 1e-6
    assert a.population.Nx.max() > 0.5


def test_select_slices():
    t = np.linspace(0, 10, 101)
    s = select_slices(t, 1, 0.25)
    assert s[0] == 0 and s[-1] == 100
    assert np.all(np.diff(t[s])[:-1] >= 0.25 - 1e-12)
    assert np.array_equal(select_slices(t, 20), [0, 20, 40, 60, 80, 100])
    with pytest.raises(ValueError):
        select_slices(t, 0)


def _decay_g1(t, tp, gamma, extra):
    """<s+(t) s-(t')> of an emitter prepared in |e> at time 0, t' >= t."""
    return np.exp(-gamma * t) * np.exp(-(0.5 * gamma + 0.5 * extra) * (tp - t))


@pytest.mark.parametrize("rate_pd", [0.0, GAMMA])
def test_regression_g1_closed_form(rate_pd):
    corr, me = regression_correlations(flat_grid(), _decay(rate_pd), EXCITED, TAIL)
    t = corr.t_grid - corr.t_grid[0]
    T, TP = np.meshgrid(t, t, indexing="ij")
    ref = np.where(TP >= T, _decay_g1(T, TP, GAMMA, rate_pd), 0.0)
    iu = np.triu_indices(len(t))
    assert np.max(np.abs(corr.G1[iu] - ref[iu])) < 1e-8
    # a single excitation cannot produce two photons
    assert np.max(np.abs(corr.G2[iu])) < 1e-12


@pytest.mark.parametrize("rate_pd,expected", [(0.0, 1.0), (GAMMA, 0.5), (3 * GAMMA, 0.25)])
def test_ideal_emitter_figures_of_merit(rate_pd, expected):
    # coherence decays at (gamma + r)/2, giving I = gamma / (gamma + r)
    corr, me = regression_correlations(flat_grid(), _decay(rate_pd), EXCITED, TAIL)
    f = fom_from_me(corr, me.population, GAMMA)
    assert f.eta == pytest.approx(1.0, abs=1e-5)
    assert f.g2 == pytest.approx(0.0, abs=1e-10)
    assert f.indist == pytest.approx(expected, abs=2e-4)


def test_fom_needs_long_tail():
    corr, me = regression_correlations(flat_grid(), _decay(), EXCITED, 100.0)
    with pytest.raises(ValueError):
        fom_from_me(corr, me.population, GAMMA)


def test_undriven_ground_state_emits_nothing():
    f, me, _ = oracle_fom(flat_grid(), _decay(), GAMMA, TAIL)
    assert f.eta == 0.0 and f.g2 is None and f.indist is None


def test_correlation_diagonal_and_sign(envelopes):
    e = envelopes["short-dichromatic"]
    q = QubitParams()
    ch = emitter_channels(e, q, PhononParams())
    corr, me = regression_correlations(e, ch, GROUND, TAIL)
    # G1(t, t) = <s+ s-> = N(t)
    N = np.interp(corr.t_grid, me.population.t, me.population.Nx)
    assert np.allclose(np.diag(corr.G1).real, N, atol=1e-9)
    assert np.max(np.abs(np.diag(corr.G1).imag)) < 1e-10
    iu = np.triu_indices(len(corr.t_grid))
    assert corr.G2[iu].min() > -1e-10
    # |G1(t,t')|^2 <= N(t) N(t')
    bound = np.outer(N, N)[iu]
    assert np.all(np.abs(corr.G1[iu]) ** 2 <= bound + 1e-9)


def test_csv_exports(tmp_path):
    corr, me = regression_correlations(flat_grid(), _decay(), EXCITED, TAIL, max_stored=20)
    export_population_csv(tmp_path / "p.csv", me.population)
    export_correlation_csv(tmp_path / "c.csv", corr)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "t_ps,Nx"
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "t_ps,tprime_ps,re_g1,im_g1,g2"
    assert len(lines) - 1 == 20 * 21 // 2
