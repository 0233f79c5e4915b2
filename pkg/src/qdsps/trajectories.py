"""Quantum-jump trajectories, ensemble statistics and the HBT / HOM estimators.

Each trajectory owns a random stream derived from ``(master_seed, index)``
with ``numpy.random.SeedSequence``; nothing depends on which worker ran it
or in what order, so ensembles are bit-identical for any worker count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .master import FiguresOfMerit
from .propagation import (
    PROJ_E,
    ChannelSet,
    NumericalFault,
    Propagation,
    compile_emitter,
    compile_pair,
)
from .pulses import DEFAULT_STEPS_PER_PERIOD, EnvelopeGrid

N_UNIFORMS = 512
MAX_JUMPS = 64
N_BOOT = 1000

STATUS_TEXT = {
    _kernels.OK: "ok",
    _kernels.OUT_OF_UNIFORMS: "out of random numbers",
    _kernels.TOO_MANY_JUMPS: "too many jumps",
    _kernels.NORM_FAULT: "norm increased between jumps",
}


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))


@dataclass
class TrajectoryRecord:
    index: int
    seed: int  # 64-bit summary of the trajectory's SeedSequence
    jump_t: np.ndarray
    jump_k: np.ndarray
    final_norm_check: float
    theta: float = 0.0
    population: np.ndarray | None = None

    def jumps(self, labels=None) -> list[tuple[float, object]]:
        return [(float(t), labels[k] if labels is not None else int(k)) for t, k in zip(self.jump_t, self.jump_k)]

    def count(self, channels) -> int:
        return int(np.isin(self.jump_k, channels).sum())


@dataclass
class EnsembleStats:
    n_traj: int
    master_seed: int
    counts: np.ndarray  # photons per trajectory, in trajectory order
    histogram: np.ndarray  # histogram[m] = number of trajectories with m photons
    records: list[TrajectoryRecord] = field(default_factory=list)
    population_t: np.ndarray | None = None
    population: np.ndarray | None = None  # (n_traj, n_points)
    photon_channels: tuple = (0,)

    @property
    def eta(self) -> float:
        return float(np.mean(self.counts))

    @property
    def eta_se(self) -> float:
        return float(np.std(self.counts, ddof=1) / math.sqrt(self.n_traj)) if self.n_traj > 1 else 0.0

    @property
    def p_emit(self) -> float:
        return float(np.mean(self.counts >= 1))

    def population_mean(self):
        """Ensemble excited population and its standard error at the recorded times."""
        p = self.population
        mean = np.sum(p, axis=0) / p.shape[0]
        se = np.std(p, axis=0, ddof=1) / math.sqrt(p.shape[0]) if p.shape[0] > 1 else np.zeros_like(mean)
        return mean, se


# ------------------------------------------------------------------- kernels


def _kernel_args(prop: Propagation, Hn=None):
    lam, V, Vi = prop.tail_eig()
    Hn = prop.Hn if Hn is None else Hn
    return (prop.node_t, Hn, prop.Rn, prop.ops, prop.ket_maps(None if Hn is prop.Hn else Hn),
            prop.tail_dt, prop.n_tail, lam, V, Vi, prop.tail_rates)


def _one(prop: Propagation, args, psi0, master_seed, index, random_phase, rec_steps, obs):
    ss = trajectory_seed(master_seed, index)
    seed64 = int(ss.generate_state(1, np.uint64)[0])
    theta = 0.0
    if random_phase:
        theta = 2.0 * math.pi * np.random.Generator(np.random.PCG64(np.random.SeedSequence(
            int(master_seed), spawn_key=(int(index), 1)))).random()
        args = _kernel_args(prop, prop.phased_hamiltonian(theta))
    n_u = N_UNIFORMS
    max_jumps = MAX_JUMPS
    for _ in range(8):
        u = np.random.Generator(np.random.PCG64(ss)).random(n_u)
        status, nj, jt, jk, _, rec, fn = _kernels.run_trajectory_kernel(
            *args, psi0, u, max_jumps, rec_steps, obs
        )
        if status == _kernels.OUT_OF_UNIFORMS:
            n_u *= 8
            continue
        if status == _kernels.TOO_MANY_JUMPS:
            max_jumps *= 8
            continue
        break
    if status != _kernels.OK:
        raise NumericalFault(f"trajectory {index}: {STATUS_TEXT[status]}")
    return TrajectoryRecord(index, seed64, jt[:nj].copy(), jk[:nj].copy(), float(fn), theta,
                            rec.copy() if len(rec_steps) else None)


def _chunk(job):
    prop, psi0, master_seed, lo, hi, random_phase, rec_steps, obs = job
    args = _kernel_args(prop)
    return [_one(prop, args, psi0, master_seed, i, random_phase, rec_steps, obs) for i in range(lo, hi)]


def _run_many(prop, psi0, n_traj, master_seed, workers, random_phase=False, rec_steps=None, obs=None):
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    rec_steps = np.zeros(0, np.int64) if rec_steps is None else np.asarray(rec_steps, np.int64)
    obs = np.zeros((prop.dim, prop.dim), complex) if obs is None else np.ascontiguousarray(obs, dtype=complex)
    psi0 = np.ascontiguousarray(psi0, dtype=complex)
    workers = max(1, int(workers or 1))
    if workers == 1:
        return _chunk((prop, psi0, master_seed, 0, n_traj, random_phase, rec_steps, obs))
    bounds = np.linspace(0, n_traj, min(n_traj, 4 * workers) + 1).astype(int)
    prop.ket_maps()  # build once, ship to every worker
    jobs = [(prop, psi0, master_seed, lo, hi, random_phase, rec_steps, obs)
            for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    out = []
    with ProcessPoolExecutor(max_workers=workers) as ex:
        for part in ex.map(_chunk, jobs):  # map preserves job order
            out.extend(part)
    return out


def default_workers() -> int:
    return int(os.environ.get("QDSPS_WORKERS", "1"))


# ------------------------------------------------------------ single emitter


def run_trajectory(
    e: EnvelopeGrid,
    ch: ChannelSet,
    seed: int,
    tail_time: float,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    psi0=(1.0, 0.0),
    index: int = 0,
) -> TrajectoryRecord:
    """Trajectory ``index`` of the ensemble seeded by ``seed``."""
    prop = compile_emitter(e, ch, tail_time, steps_per_period)
    job = (prop, np.asarray(psi0, complex), seed, index, index + 1, False,
           np.zeros(0, np.int64), np.zeros((2, 2), complex))
    return _chunk(job)[0]


def run_ensemble(
    e: EnvelopeGrid,
    ch: ChannelSet,
    n_traj: int,
    master_seed: int,
    tail_time: float,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    psi0=(1.0, 0.0),
    workers: int | None = None,
    population_points: int = 0,
    prop: Propagation | None = None,
    frame_shift: float = 0.0,
) -> EnsembleStats:
    """Independent single-emitter trajectories; photons are jumps of the radiative channel(s)."""
    if prop is None:
        prop = compile_emitter(e, ch, tail_time, steps_per_period, frame_shift=frame_shift)
    rec_steps = None
    t_rec = None
    if population_points:
        rec_steps = np.unique(np.linspace(0, prop.n_steps, population_points).round().astype(np.int64))
        t_rec = prop.step_times[rec_steps]
    recs = _run_many(prop, np.asarray(psi0, complex), n_traj, master_seed,
                     default_workers() if workers is None else workers, rec_steps=rec_steps, obs=PROJ_E)
    photon = np.nonzero(prop.detectors != -99)[0]
    return _stats(recs, master_seed, photon, t_rec)


def _stats(recs, master_seed, photon, t_rec=None) -> EnsembleStats:
    counts = np.array([r.count(photon) for r in recs], dtype=np.int64)
    hist = np.bincount(counts)
    pop = np.stack([r.population for r in recs]) if t_rec is not None else None
    return EnsembleStats(len(recs), int(master_seed), counts, hist, recs, t_rec, pop, tuple(int(k) for k in photon))


def stats_from_counts(counts, master_seed: int = 0) -> EnsembleStats:
    counts = np.asarray(counts, dtype=np.int64)
    return EnsembleStats(len(counts), int(master_seed), counts, np.bincount(counts))


# ----------------------------------------------------------------- estimators


def _g2_of(counts: np.ndarray) -> float | None:
    m = counts.astype(float)
    mu = m.mean()
    if mu <= 0:
        return None
    return float(np.mean(m * (m - 1.0)) / mu**2)


def g2_from_counts(s: EnsembleStats, n_boot: int = N_BOOT, seed: int | None = None):
    """E[m(m-1)] / E[m]^2 with a bootstrap standard error; (None, None) if no photons."""
    g = _g2_of(s.counts)
    if g is None:
        return None, None
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(s.master_seed if seed is None else seed,
                                                                     spawn_key=(2**31 - 1,))))
    # resample the histogram rather than the raw counts: same estimator, far cheaper
    hist = s.histogram.astype(float)
    ms = np.arange(len(hist), dtype=float)
    draws = rng.multinomial(s.n_traj, hist / hist.sum(), size=n_boot).astype(float)
    mu = draws @ ms / s.n_traj
    mm = draws @ (ms * (ms - 1.0)) / s.n_traj
    ok = mu > 0
    boots = mm[ok] / mu[ok] ** 2
    se = float(np.std(boots, ddof=1)) if boots.size > 1 else 0.0
    return g, se


@dataclass
class HbtResult:
    offsets: np.ndarray  # pulse offsets k
    coincidences: np.ndarray  # C_k: A clicks in pulse i, B clicks in pulse i+k, summed over i
    g2: float | None
    g2_se: float | None


def hbt_histogram(s: EnsembleStats, records=None, n_side: int = 5, seed: int | None = None, window=None) -> HbtResult:
    """Simulated HBT: a fair coin routes every photon to detector A or B.

    Trajectories are treated as consecutive pulses of one train (cyclically),
    so side peak k pairs pulse i with pulse i+k.  ``window`` optionally keeps
    only photons with a time inside (t0, t1).
    """
    records = s.records if records is None else records
    n = len(records)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(s.master_seed if seed is None else seed,
                                                                     spawn_key=(2**31 - 2,))))
    nA = np.zeros(n)
    nB = np.zeros(n)
    photon = np.asarray(s.photon_channels)
    for i, r in enumerate(records):
        sel = np.isin(r.jump_k, photon)
        if window is not None:
            sel &= (r.jump_t > window[0]) & (r.jump_t < window[1])
        m = int(sel.sum())
        a = int((rng.random(m) < 0.5).sum())
        nA[i] = a
        nB[i] = m - a
    offsets = np.arange(-n_side, n_side + 1)
    C = np.array([np.sum(nA * np.roll(nB, -k)) for k in offsets])
    side = _side_terms(nA, nB, offsets)
    c0 = nA * nB
    ms = side.mean()
    if ms <= 0:
        return HbtResult(offsets, C, None, None)
    g = float(c0.mean() / ms)
    # delta-method error of a ratio of means
    resid = c0 - g * side
    se = float(np.std(resid, ddof=1) / (math.sqrt(n) * ms)) if n > 1 else 0.0
    return HbtResult(offsets, C, g, se)


def _side_terms(nA, nB, offsets):
    ks = [k for k in offsets if k != 0]
    return np.mean([nA * np.roll(nB, -k) for k in ks], axis=0)


# ------------------------------------------------------------------------ HOM


@dataclass
class HomConfig:
    mode: str = "interfering"  # or "distinguishable"
    # apply a uniform random phase to source 2's drive in every trajectory
    random_phase: bool = False


@dataclass
class HomResult:
    p_coinc: float
    p_coinc_se: float
    n_traj: int
    mode: str
    records: list[TrajectoryRecord] = field(default_factory=list)


def run_hom_pair(
    e: EnvelopeGrid,
    ch: ChannelSet,
    cfg: HomConfig,
    n_traj: int,
    master_seed: int,
    tail_time: float,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    workers: int | None = None,
    psi0=None,
    drive2: bool = True,
    frame_shift: float = 0.0,
) -> HomResult:
    """Two emitters behind a beamsplitter; coincidence = clicks on both outputs in one pulse."""
    prop = compile_pair(e, ch, cfg.mode, tail_time, steps_per_period, frame_shift=frame_shift, drive2=drive2)
    psi = np.zeros(4, complex)
    psi[0] = 1.0
    if psi0 is not None:
        psi = np.asarray(psi0, complex)
    recs = _run_many(prop, psi, n_traj, master_seed, default_workers() if workers is None else workers,
                     random_phase=cfg.random_phase)
    plus = np.nonzero(prop.detectors == 1)[0]
    minus = np.nonzero(prop.detectors == -1)[0]
    hit = np.array([np.isin(r.jump_k, plus).any() and np.isin(r.jump_k, minus).any() for r in recs], dtype=float)
    p = float(hit.mean())
    se = float(np.std(hit, ddof=1) / math.sqrt(n_traj)) if n_traj > 1 else 0.0
    return HomResult(p, se, n_traj, cfg.mode, recs)


def indistinguishability_from_hom(p_int: float, p_dist: float, se_int: float = 0.0, se_dist: float = 0.0):
    """1 - p_int/p_dist with first-order error propagation; (None, None) if p_dist = 0."""
    if p_dist <= 0:
        return None, None
    r = p_int / p_dist
    se = math.sqrt((se_int / p_dist) ** 2 + (r * se_dist / p_dist) ** 2)
    return 1.0 - r, se


def trajectory_fom(
    e: EnvelopeGrid,
    ch: ChannelSet,
    n_traj: int,
    master_seed: int,
    tail_time: float,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    workers: int | None = None,
    hom: bool = True,
    random_phase: bool = False,
    frame_shift: float = 0.0,
) -> tuple[FiguresOfMerit, EnsembleStats, tuple | None]:
    """eta and g2 from an HBT ensemble, indistinguishability from two HOM ensembles."""
    s = run_ensemble(e, ch, n_traj, master_seed, tail_time, steps_per_period, workers=workers, frame_shift=frame_shift)
    g2, g2_se = g2_from_counts(s)
    I = I_se = None
    homs = None
    if hom:
        hi = run_hom_pair(e, ch, HomConfig("interfering"), n_traj, master_seed + 1, tail_time, steps_per_period, workers,
                          frame_shift=frame_shift)
        dist_mode = "interfering" if random_phase else "distinguishable"
        hd = run_hom_pair(e, ch, HomConfig(dist_mode, random_phase), n_traj, master_seed + 2, tail_time,
                          steps_per_period, workers, frame_shift=frame_shift)
        I, I_se = indistinguishability_from_hom(hi.p_coinc, hd.p_coinc, hi.p_coinc_se, hd.p_coinc_se)
        homs = (hi, hd)
    f = FiguresOfMerit(
        s.eta, g2, I, s.eta_se, g2_se, I_se, p_emit=s.p_emit, source="trajectories",
        meta={"n_traj": n_traj, "seed": int(master_seed), "eta_definition": "mean photon number",
              "indist_estimator": "1 - p_int/p_dist"},
    )
    return f, s, homs


def export_jump_log(path, records, labels=None) -> None:
    with open(path, "w") as fh:
        fh.write("traj_id,t_ps,channel\n")
        for r in records:
            for t, k in zip(r.jump_t, r.jump_k):
                fh.write(f"{r.index},{t:.9g},{labels[k] if labels is not None else int(k)}\n")


__all__ = [
    "TrajectoryRecord", "EnsembleStats", "HomConfig", "HomResult", "HbtResult", "run_trajectory", "run_ensemble",
    "g2_from_counts", "hbt_histogram", "run_hom_pair", "indistinguishability_from_hom", "trajectory_fom",
    "stats_from_counts", "export_jump_log", "trajectory_seed",
]
