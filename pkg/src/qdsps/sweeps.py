"""Preset runs and figure sweeps (spectral gap, NARP hole width, SUPER robustness)."""
from __future__ import annotations

import csv
import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import ConfigError, RunConfig, SweepSpec, write_record
from .master import FiguresOfMerit, export_population_csv, oracle_fom
from .phonons import export_rates_csv, polaron_shift, rates_along_pulse
from .presets import PRESET_ROWS, Preset, build_preset, get_preset
from .propagation import emitter_channels
from .pulses import (
    EnvelopeGrid,
    Scheme,
    build_dichromatic,
    build_narp,
    build_super,
    export_envelope_csv,
    lorentzian_emission,
    overlap_measure,
    pulse_spectrum,
)
from .trajectories import trajectory_fom
from .units import mev_to_radps

# limits of the SUPER robustness scan
SUPER_REL_LIMIT = 0.30
SUPER_DELTA2_LIMIT = 0.02


@dataclass
class RunResult:
    oracle: FiguresOfMerit | None
    trajectories: FiguresOfMerit | None
    overlap: float
    max_population: float | None
    files: list[str]

    def summary(self) -> dict:
        """Estimator JSON; trajectory numbers when available, otherwise the oracle's."""
        f = self.trajectories or self.oracle
        out = {
            "eta": f.eta, "eta_se": f.eta_se, "g2": f.g2, "g2_se": f.g2_se,
            "indist": f.indist, "indist_se": f.indist_se,
            "n_traj": f.meta.get("n_traj", 0), "seed": f.meta.get("seed"),
            "source": f.source, "overlap": self.overlap,
        }
        if self.oracle is not None:
            out["oracle"] = self.oracle.as_dict()
            out["max_population"] = self.max_population
        if self.trajectories is not None:
            out["p_emit"] = self.trajectories.p_emit
        return out


def resolve_preset(cfg: RunConfig) -> Preset:
    try:
        return get_preset(cfg.preset, cfg.table_amplitude, cfg.flip_chirp, cfg.pulse)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None


def frame_shift(cfg: RunConfig) -> float:
    """Polaron red-shift of the qubit expressed as a change of the frame detuning."""
    ph = cfg.phonon_params()
    return -polaron_shift(ph) if (cfg.polaron_shift and ph is not None) else 0.0


def overlap_of(e: EnvelopeGrid, gamma: float) -> float:
    return overlap_measure(pulse_spectrum(e), lorentzian_emission(gamma))


def evaluate(e: EnvelopeGrid, cfg: RunConfig, want_oracle: bool = True, want_traj: bool = True):
    q = cfg.qubit()
    ch = emitter_channels(e, q, cfg.phonon_params(), cfg.up_exponent, cfg.dephasing, cfg.nominal_detuning)
    shift = frame_shift(cfg)
    fo = me = ft = None
    if want_oracle:
        fo, me, _ = oracle_fom(e, ch, q.gamma, cfg.tail_time(), steps_per_period=cfg.steps_per_period,
                               frame_shift=shift)
    if want_traj:
        ft, _, _ = trajectory_fom(e, ch, cfg.n_traj, cfg.seed, cfg.tail_time(), cfg.steps_per_period,
                                  workers=cfg.workers, hom=cfg.hom, frame_shift=shift)
    return fo, me, ft


def run_preset(cfg: RunConfig, out_dir: str | Path | None = None) -> RunResult:
    """Pulse -> rates -> oracle and/or ensemble -> figures of merit, with traces on disk."""
    cfg.validate()
    pr = resolve_preset(cfg)
    e = build_preset(pr, cfg.steps_per_period)
    q = cfg.qubit()
    fo, me, ft = evaluate(e, cfg, cfg.oracle, cfg.trajectories)
    res = RunResult(fo, ft, overlap_of(e, q.gamma),
                    float(me.population.Nx.max()) if me is not None else None, [])
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        stride = max(1, len(e.t) // 20000)
        export_envelope_csv(d / "envelope.csv", e, stride)
        res.files.append("envelope.csv")
        ph = cfg.phonon_params()
        if ph is not None:
            export_rates_csv(d / "rates.csv", rates_along_pulse(e, ph, cfg.up_exponent, cfg.nominal_detuning), stride)
            res.files.append("rates.csv")
        if me is not None:
            export_population_csv(d / "population.csv", me.population)
            res.files.append("population.csv")
        (d / "summary.json").write_text(json.dumps(res.summary(), indent=2) + "\n")
        res.files.append("summary.json")
        write_record(d / "record.json", cfg, {"command": "fom", "files": res.files})
    return res


# ------------------------------------------------------------------- sweeps


def _columns(spec: SweepSpec) -> list[str]:
    cols = [spec.axis1] + ([spec.axis2] if spec.axis2 else [])
    for m in spec.metrics:
        if m == "overlap":
            cols.append("overlap")
        else:
            cols += [f"oracle_{m}", f"traj_{m}", f"traj_{m}_se"]
    return cols


def _point(job) -> list:
    cfg, spec, scheme, params, coords = job
    builder = {Scheme.DICHROMATIC: build_dichromatic, Scheme.NARP: build_narp, Scheme.SUPER: build_super}[scheme]
    e = builder(params, steps_per_period=cfg.steps_per_period)
    need = set(spec.metrics) - {"overlap"}
    fo, _, ft = evaluate(e, cfg, cfg.oracle and bool(need), cfg.trajectories and bool(need))
    row = list(coords)
    for m in spec.metrics:
        if m == "overlap":
            row.append(overlap_of(e, cfg.qubit().gamma))
            continue
        row.append(getattr(fo, m) if fo is not None else None)
        row.append(getattr(ft, m) if ft is not None else None)
        row.append(getattr(ft, f"{m}_se") if ft is not None else None)
    return row


def _run_points(cfg: RunConfig, spec: SweepSpec, jobs: list, path: Path | None) -> list[list]:
    """Evaluate points (in parallel over points when workers > 1); one collector writes rows."""
    rows = []
    fh = open(path, "w", newline="") if path is not None else None
    try:
        w = csv.writer(fh) if fh else None
        if w:
            w.writerow(_columns(spec))
            fh.flush()
        if cfg.workers > 1 and len(jobs) > 1:
            # points first; each point then runs its ensemble serially
            jobs = [(dataclasses.replace(j[0], workers=1),) + j[1:] for j in jobs]
            with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
                it = ex.map(_point, jobs)
                for row in it:
                    rows.append(row)
                    if w:
                        w.writerow(row)
                        fh.flush()
        else:
            for job in jobs:
                row = _point(job)
                rows.append(row)
                if w:
                    w.writerow(row)
                    fh.flush()
    finally:
        if fh:
            fh.close()
    return rows


def gap_params(pr: Preset, axis: str, value: float):
    """Preset parameters at one point of a spectral-gap scan."""
    p = pr.params
    if pr.scheme is Scheme.DICHROMATIC:
        if axis != "delta_tp":
            raise ConfigError(f"dichromatic gap sweeps use axis delta_tp, not {axis!r}")
        if value < 0:
            raise ConfigError("delta_tp must be non-negative")
        # amplitude recalibrated to a pi pulse at every point
        return dataclasses.replace(p, delta=value / p.t_p, omega0_amp=None)
    if pr.scheme is Scheme.NARP:
        if axis != "hole_scale":
            raise ConfigError(f"NARP gap sweeps use axis hole_scale, not {axis!r}")
        if not value > 0:
            raise ConfigError("hole_scale must be positive")
        return dataclasses.replace(p, delta=value * p.delta)
    raise ConfigError("sweep-gap applies to the dichromatic and NARP presets")


def sweep_gap(cfg: RunConfig, spec: SweepSpec, out_csv: str | Path | None = None) -> list[list]:
    cfg.validate()
    pr = resolve_preset(cfg)
    if spec.axis2 is not None:
        raise ConfigError("sweep-gap takes a single axis")
    jobs = [(cfg, spec, pr.scheme, gap_params(pr, spec.axis1, v), (v,)) for v in spec.values1]
    return _run_points(cfg, spec, jobs, Path(out_csv) if out_csv else None)


def super_params(pr: Preset, changes: dict[str, float]):
    p = pr.params
    for axis, v in changes.items():
        if axis == "omega2_rel":
            if abs(v) > SUPER_REL_LIMIT + 1e-12:
                raise ConfigError("omega2_rel must lie within +-0.3")
            p = dataclasses.replace(p, omega2=(1.0 + v) * p.omega2)
        elif axis == "t_p2_rel":
            if abs(v) > SUPER_REL_LIMIT + 1e-12:
                raise ConfigError("t_p2_rel must lie within +-0.3")
            p = dataclasses.replace(p, t_p2=(1.0 + v) * p.t_p2)
        elif axis == "delta2_shift_meV":
            limit = SUPER_DELTA2_LIMIT * PRESET_ROWS["super"]["delta2_meV"]
            if abs(v) > limit + 1e-12:
                raise ConfigError(f"delta2_shift_meV must lie within +-{limit:.3f}")
            p = dataclasses.replace(p, delta2=p.delta2 + mev_to_radps(v))
        else:
            raise ConfigError(f"unknown SUPER axis {axis!r} (omega2_rel, t_p2_rel, delta2_shift_meV)")
    return p


def sweep_super_robustness(cfg: RunConfig, spec: SweepSpec, out_csv: str | Path | None = None) -> list[list]:
    cfg.validate()
    pr = resolve_preset(cfg)
    if pr.scheme is not Scheme.SUPER:
        raise ConfigError("sweep-super needs the super preset")
    jobs = []
    grid2 = spec.values2 if spec.axis2 else [None]
    for v1 in spec.values1:
        for v2 in grid2:
            ch = {spec.axis1: v1}
            coords = (v1,)
            if spec.axis2:
                if spec.axis2 == spec.axis1:
                    raise ConfigError("sweep axes must differ")
                ch[spec.axis2] = v2
                coords = (v1, v2)
            jobs.append((cfg, spec, pr.scheme, super_params(pr, ch), coords))
    return _run_points(cfg, spec, jobs, Path(out_csv) if out_csv else None)


__all__ = [
    "RunResult", "evaluate", "frame_shift", "gap_params", "overlap_of", "resolve_preset", "run_preset",
    "super_params", "sweep_gap", "sweep_super_robustness",
]
