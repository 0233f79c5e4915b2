"""Operators, collapse channels and the node schedule shared by both solvers.

The envelope grid is uniform.  Solver steps are even multiples (``stride``) of
its spacing so that every step's start, midpoint and end are grid samples and
RK4 never interpolates the drive.  Strides are powers of two chosen block by
block from a local frequency scale, so slowly varying stretches (the NARP
tails, the free decay of a long dichromatic pulse) take long steps while the
SUPER beat note gets fine ones.  After the envelope ends the generator is
constant and is propagated exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ._kernels import magnus4_maps, rk4_maps
from .phonons import PhononParams, rates_along_pulse
from .pulses import DEFAULT_STEPS_PER_PERIOD, EnvelopeGrid, PulseError, QubitParams

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # basis (|g>, |e>)
SIGMA_PLUS = SIGMA_MINUS.T.copy()
PROJ_E = np.diag([0.0, 1.0]).astype(complex)
IDENT2 = np.eye(2, dtype=complex)

OP_TAGS = ("lower", "raise", "project_e")
_SINGLE = {"lower": SIGMA_MINUS, "raise": SIGMA_PLUS, "project_e": PROJ_E}

MAX_STEP = 0.25  # ps, cap for the driven part
TAIL_STEP = 1.0  # ps
ME_MAP_CHUNK = 65536
DEFAULT_TAIL_LIFETIMES = 12.0

# collapse rate of sqrt(r) sigma+sigma- per unit gamma_pd.  "coherence": coherences
# decay at gamma_pd/2 (r = gamma_pd).  "collapse": the collapse rate itself is gamma_pd/2.
DEPHASING_CONVENTIONS = {"coherence": 1.0, "collapse": 0.5}
DEFAULT_DEPHASING = "coherence"


class NumericalFault(RuntimeError):
    """A solver tolerance check failed."""


def single_op(tag: str) -> np.ndarray:
    if tag not in _SINGLE:
        raise ValueError(f"unknown operator tag {tag!r}")
    return _SINGLE[tag]


def on_emitter(op: np.ndarray, which: int) -> np.ndarray:
    """Embed a single-emitter operator into the two-emitter space (basis 2*i1 + i2)."""
    return np.kron(op, IDENT2) if which == 0 else np.kron(IDENT2, op)


@dataclass
class Channel:
    """One collapse channel sqrt(rate) * op.

    ``rate`` is a scalar or a trace sampled on the envelope grid (rad/ps).
    ``detector`` marks photon channels: 0 for the single-emitter waveguide,
    +1/-1 for the two beamsplitter outputs, None for phonon channels.
    """

    tag: str
    rate: float | np.ndarray
    label: str = ""
    detector: int | None = None

    def __post_init__(self):
        if self.tag not in OP_TAGS:
            raise ValueError(f"unknown operator tag {self.tag!r}")
        r = np.asarray(self.rate, dtype=float)
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ValueError(f"channel {self.label or self.tag}: rates must be finite and non-negative")

    def rate_on(self, n: int) -> np.ndarray:
        r = np.asarray(self.rate, dtype=float)
        if r.ndim == 0:
            return np.full(n, float(r))
        if r.shape != (n,):
            raise ValueError(f"channel {self.label or self.tag}: rate trace has {r.shape[0]} samples, grid has {n}")
        return r


@dataclass
class ChannelSet:
    channels: list[Channel] = field(default_factory=list)

    def __iter__(self):
        return iter(self.channels)

    def __len__(self):
        return len(self.channels)

    @property
    def radiative(self) -> list[int]:
        return [k for k, c in enumerate(self.channels) if c.detector is not None]


def emitter_channels(
    e: EnvelopeGrid,
    q: QubitParams,
    phonons: PhononParams | None = None,
    up_exponent: int = 1,
    dephasing: str = DEFAULT_DEPHASING,
    use_nominal_detuning: bool = True,
) -> ChannelSet:
    """Waveguide decay plus, optionally, the two phonon channels along the pulse.

    The dephasing channel sqrt(r) sigma+sigma- damps coherences at r/2.  With
    the default convention r = gamma_pd(t), i.e. coherences decay at gamma_pd/2.
    """
    chans = [Channel("lower", q.gamma, "waveguide", detector=0)]
    if phonons is not None and phonons.alpha_ph > 0:
        if dephasing not in DEPHASING_CONVENTIONS:
            raise ValueError(f"unknown dephasing convention {dephasing!r}")
        tr = rates_along_pulse(e, phonons, up_exponent=up_exponent, use_nominal_detuning=use_nominal_detuning)
        chans.append(Channel("project_e", DEPHASING_CONVENTIONS[dephasing] * tr.gamma_pd, "phonon-dephasing"))
        chans.append(Channel("raise", tr.gamma_up, "phonon-excitation"))
    return ChannelSet(chans)


def explicit_detuning_form(e: EnvelopeGrid):
    """Move the envelope's chirp phase into a time-dependent detuning.

    Returns (env', detuning trace) with env' = env exp(i theta),
    theta' = frame_detuning - nominal_detuning.  The two Hamiltonians are
    related by the gauge transformation exp(i theta sigma+sigma-).
    """
    rate = e.frame_detuning - e.nominal_detuning
    theta = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(e.t))])
    theta -= np.interp(0.0, e.t, theta) if e.t[0] <= 0.0 <= e.t[-1] else theta[0]
    return e.env * np.exp(1j * theta), e.nominal_detuning.copy()


# -------------------------------------------------------------------- schedule


def local_frequency(env: np.ndarray, h: float, detuning, rate_sum: np.ndarray) -> np.ndarray:
    """Fastest local time scale of the generator, rad/ps, per grid sample."""
    a = np.abs(env)
    denv = np.abs(np.gradient(env, h))
    peak = max(float(a.max()), 1e-12)
    return np.abs(detuning) + a + rate_sum + denv / np.maximum(a, 0.05 * peak)


def schedule(omega_loc: np.ndarray, h: float, steps_per_period: int, max_step: float = MAX_STEP) -> np.ndarray:
    """Start indices of the steps (plus the final index) with power-of-two strides >= 2."""
    n = len(omega_loc)
    if (n - 1) % 2:
        raise PulseError("envelope grid needs an odd number of samples")
    limit = 2.0 * math.pi / (steps_per_period * np.maximum(omega_loc, 1e-12))
    limit = np.minimum(limit, max_step)
    # maximal stride allowed per sample, as a number of grid spacings
    allowed = np.floor(limit / h).astype(np.int64)
    last = n - 1
    cap = max(2, int(max_step / h))
    max_pow = 2
    while (max_pow << 1) <= min(last, cap):
        max_pow <<= 1
    # ok[s][i]: a stride s starting at sample i respects every limit in [i, i + s]
    # (windows running past the end pick up -1 and are never ok)
    ok = {}
    run_min = allowed.copy()  # min over allowed[i : i + span]
    span = 1
    while span < max_pow:
        shifted = np.full(n, -1, dtype=np.int64)
        shifted[: n - span] = run_min[span:]
        run_min = np.minimum(run_min, shifted)
        span <<= 1
        end = np.full(n, -1, dtype=np.int64)
        end[: n - span] = allowed[span:]
        ok[span] = np.minimum(run_min, end) >= span
    starts = [0]
    i = 0
    while i < last:
        s = max_pow
        while s > 2 and not (i + s <= last and ok[s][i]):
            s >>= 1
        i += s
        starts.append(i)
    return np.asarray(starts, dtype=np.int64)


@dataclass
class Propagation:
    """Everything the kernels need for one problem."""

    node_t: np.ndarray
    Hn: np.ndarray
    Rn: np.ndarray
    ops: np.ndarray
    Bn: np.ndarray  # sigma+ part of source 2's drive (pairs only), else shape (1, d, d)
    detectors: np.ndarray  # per channel: detector id, or -99 for phonon channels
    tail_dt: float
    n_tail: int
    tail_H: np.ndarray
    tail_rates: np.ndarray
    steps_per_period: int
    _eig: tuple | None = None
    _tail_P: np.ndarray | None = None
    _ket_maps: np.ndarray | None = None
    _me_maps: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.Hn.shape[1]

    @property
    def n_fine(self) -> int:
        return (len(self.node_t) - 1) // 2

    @property
    def n_steps(self) -> int:
        return self.n_fine + self.n_tail

    @property
    def step_times(self) -> np.ndarray:
        fine = self.node_t[::2]
        tail = fine[-1] + self.tail_dt * np.arange(1, self.n_tail + 1)
        return np.concatenate([fine, tail])

    @property
    def t_end(self) -> float:
        return float(self.node_t[-1] + self.tail_dt * self.n_tail)

    @property
    def step_h(self) -> np.ndarray:
        return self.node_t[2::2] - self.node_t[0:-1:2]

    def phased_hamiltonian(self, theta: float) -> np.ndarray:
        """Node Hamiltonians with source 2's drive multiplied by exp(i theta)."""
        c = np.exp(1j * theta) - 1.0
        return self.Hn + c * self.Bn + np.conj(c) * np.conj(np.swapaxes(self.Bn, 1, 2))

    def ket_maps(self, Hn: np.ndarray | None = None) -> np.ndarray:
        if Hn is not None:
            return rk4_maps(-1j * Hn, self.step_h)
        if self._ket_maps is None:
            self._ket_maps = rk4_maps(-1j * self.Hn, self.step_h)
        return self._ket_maps

    def me_maps(self) -> np.ndarray:
        """Magnus one-step maps of the Lindblad generator on row-major vec(rho)."""
        if self._me_maps is None:
            h = self.step_h
            d2 = self.dim * self.dim
            maps = np.empty((len(h), d2, d2), dtype=complex)
            # the Liouvillian is built per chunk so it never exists in full
            for a in range(0, len(h), ME_MAP_CHUNK):
                b = min(len(h), a + ME_MAP_CHUNK)
                L = liouvillian(self.Hn[2 * a : 2 * b + 1], self.Rn[2 * a : 2 * b + 1], self.ops)
                maps[a:b] = magnus4_maps(L, h[a:b])
            self._me_maps = maps
        return self._me_maps

    def tail_eig(self):
        if self._eig is None:
            H = self.tail_H
            if np.allclose(H, np.diag(np.diag(H)), atol=1e-14):
                lam = np.diag(H).copy()
                V = np.eye(self.dim, dtype=complex)
                Vi = V.copy()
            else:
                lam, V = np.linalg.eig(H)
                Vi = np.linalg.inv(V)
                if np.max(np.abs(V @ np.diag(lam) @ Vi - H)) > 1e-10 * max(1.0, np.max(np.abs(H))):
                    raise NumericalFault("tail generator is not diagonalisable to working precision")
            self._eig = (lam.astype(complex), V.astype(complex), Vi.astype(complex))
        return self._eig

    def tail_superop(self) -> np.ndarray:
        """exp(L tail_dt) acting on row-major vec(rho)."""
        if self._tail_P is None:
            L = liouvillian(self.tail_H[None], self.tail_rates[None], self.ops)[0]
            self._tail_P = linalg.expm(L * self.tail_dt)
        return self._tail_P


def liouvillian(H: np.ndarray, rates: np.ndarray, ops: np.ndarray) -> np.ndarray:
    """-i(H x I - I x conj H) + sum_k r_k O_k x conj O_k, stacked over the first axis.

    H is the effective (non-Hermitian) Hamiltonian, so the anticommutator
    part of the dissipator is already inside it.
    """
    M, d, _ = H.shape
    I = np.eye(d)
    L = -1j * (np.einsum("mij,kl->mikjl", H, I) - np.einsum("ij,mkl->mikjl", I, H.conj()))
    L = L.reshape(M, d * d, d * d)
    if len(ops):
        OO = np.einsum("aij,akl->aikjl", ops, ops.conj()).reshape(len(ops), d * d, d * d)
        L = L + np.einsum("ma,aij->mij", rates, OO)
    return np.ascontiguousarray(L)


def _effective(H: np.ndarray, rates: np.ndarray, ops: np.ndarray) -> np.ndarray:
    """H - i/2 sum_k r_k O_k^+ O_k for stacked H (M,d,d) and rates (M,K)."""
    OdO = np.einsum("kji,kjl->kil", ops.conj(), ops)
    return H - 0.5j * np.einsum("mk,kil->mil", rates, OdO)


def default_tail(q: QubitParams, lifetimes: float = DEFAULT_TAIL_LIFETIMES) -> float:
    return lifetimes / q.gamma


def compile_emitter(
    e: EnvelopeGrid,
    ch: ChannelSet,
    tail_time: float,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    max_step: float = MAX_STEP,
    tail_dt: float = TAIL_STEP,
    explicit_detuning: bool = False,
    frame_shift: float = 0.0,
) -> Propagation:
    """Single emitter.  ``frame_shift`` is added to the frame detuning (polaron shift)."""
    n = len(e.t)
    if explicit_detuning:
        env, det = explicit_detuning_form(e)
    else:
        env, det = e.env, np.full(n, e.frame_detuning)
    det = det + frame_shift
    rates = np.stack([c.rate_on(n) for c in ch], axis=1) if len(ch) else np.zeros((n, 0))
    ops = np.stack([single_op(c.tag) for c in ch]) if len(ch) else np.zeros((0, 2, 2), complex)
    w = local_frequency(env, e.dt, det, rates.sum(axis=1))
    starts = schedule(w, e.dt, steps_per_period, max_step)
    idx = np.empty(2 * len(starts) - 1, dtype=np.int64)
    idx[0::2] = starts
    idx[1::2] = (starts[:-1] + starts[1:]) // 2
    H = np.zeros((len(idx), 2, 2), dtype=complex)
    H[:, 1, 1] = det[idx]
    H[:, 1, 0] = 0.5 * env[idx]
    H[:, 0, 1] = 0.5 * np.conj(env[idx])
    Rn = np.ascontiguousarray(rates[idx])
    Hn = _effective(H, Rn, ops)
    tail_rates = rates[-1].copy()
    tail_H = _effective(np.diag([0.0, det[-1]]).astype(complex)[None], tail_rates[None], ops)[0]
    n_tail = int(math.ceil(max(tail_time, 0.0) / tail_dt))
    return Propagation(
        node_t=e.t[idx].copy(), Hn=np.ascontiguousarray(Hn), Rn=Rn, ops=np.ascontiguousarray(ops),
        Bn=np.zeros((1, 2, 2), complex), detectors=np.array([c.detector if c.detector is not None else -99 for c in ch]),
        tail_dt=tail_dt, n_tail=n_tail, tail_H=tail_H, tail_rates=tail_rates, steps_per_period=steps_per_period,
    )


def compile_pair(
    e: EnvelopeGrid,
    ch: ChannelSet,
    mode: str,
    tail_time: float,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    max_step: float = MAX_STEP,
    tail_dt: float = TAIL_STEP,
    frame_shift: float = 0.0,
    drive2: bool = True,
) -> Propagation:
    """Two identically driven emitters behind a 50:50 beamsplitter.

    ``mode`` is ``interfering`` (outputs sqrt(g/2)(s1 +- s2)) or
    ``distinguishable`` (each emitter's photon reaches either output in its own
    mode: four channels sqrt(g/2) s_i).  Radiative channels of ``ch`` are
    replaced by the beamsplitter outputs; phonon channels act on each emitter.
    Source 2's drive is stored separately in ``Bn`` so a per-trajectory phase
    can be applied.  ``drive2=False`` leaves emitter 2 undriven.
    """
    if mode not in ("interfering", "distinguishable"):
        raise ValueError(f"unknown HOM mode {mode!r}")
    n = len(e.t)
    det = np.full(n, e.frame_detuning + frame_shift)
    rad = [c for c in ch if c.detector is not None]
    if len(rad) != 1 or rad[0].tag != "lower":
        raise ValueError("pair simulation expects exactly one radiative 'lower' channel")
    s1 = on_emitter(SIGMA_MINUS, 0)
    s2 = on_emitter(SIGMA_MINUS, 1)
    ops, rates, detectors = [], [], []
    g_tr = rad[0].rate_on(n)
    if mode == "interfering":
        for sign in (1, -1):
            ops.append((s1 + sign * s2) / math.sqrt(2.0))
            rates.append(g_tr)
            detectors.append(sign)
    else:
        for s in (s1, s2):
            for sign in (1, -1):
                ops.append(s / math.sqrt(2.0))
                rates.append(0.5 * g_tr)
                detectors.append(sign)
    for c in ch:
        if c.detector is not None:
            continue
        for which in (0, 1):
            ops.append(on_emitter(single_op(c.tag), which))
            rates.append(c.rate_on(n))
            detectors.append(-99)
    ops = np.stack(ops)
    rates = np.stack(rates, axis=1)
    w = local_frequency(e.env, e.dt, det, rates.sum(axis=1))
    starts = schedule(w, e.dt, steps_per_period, max_step)
    idx = np.empty(2 * len(starts) - 1, dtype=np.int64)
    idx[0::2] = starts
    idx[1::2] = (starts[:-1] + starts[1:]) // 2
    n1 = on_emitter(PROJ_E, 0)
    n2 = on_emitter(PROJ_E, 1)
    p1 = on_emitter(SIGMA_PLUS, 0)
    p2 = on_emitter(SIGMA_PLUS, 1)
    ev = e.env[idx][:, None, None]
    dv = det[idx][:, None, None]
    B = 0.5 * ev * p2 if drive2 else np.zeros((len(idx), 4, 4), complex)
    H = dv * (n1 + n2) + 0.5 * (ev * p1 + np.conj(ev) * p1.T) + B + np.conj(np.swapaxes(B, 1, 2))
    Rn = np.ascontiguousarray(rates[idx])
    Hn = _effective(H, Rn, ops)
    tail_rates = rates[-1].copy()
    tail_H = _effective((det[-1] * (n1 + n2))[None], tail_rates[None], ops)[0]
    return Propagation(
        node_t=e.t[idx].copy(), Hn=np.ascontiguousarray(Hn), Rn=Rn, ops=np.ascontiguousarray(ops),
        Bn=np.ascontiguousarray(B), detectors=np.asarray(detectors),
        tail_dt=tail_dt, n_tail=int(math.ceil(max(tail_time, 0.0) / tail_dt)),
        tail_H=tail_H, tail_rates=tail_rates, steps_per_period=steps_per_period,
    )
