"""Command-line front end.

    qdsps info
    qdsps pulse --preset narp --out-dir out/narp
    qdsps fom --preset super --ntraj 5000 --seed 7
    qdsps sweep-gap --preset short-dichromatic --axis delta_tp=0:4:9
    qdsps sweep-super --axis omega2_rel=-0.3:0.3:7 --axis2 t_p2_rel=-0.3:0.3:7

Exit codes: 0 success, 2 configuration or input error, 3 numerical fault.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, SweepSpec, apply_items, load_config, write_record
from .master import GROUND, evolve_me, export_correlation_csv, export_population_csv, regression_correlations
from .phonons import (
    PhononParams,
    export_rates_csv,
    franck_condon,
    indistinguishability_cap,
    polaron_shift,
    rates_along_pulse,
)
from .presets import PRESET_NAMES, build_preset, table_amplitude_ratio
from .propagation import NumericalFault, emitter_channels
from .pulses import PulseError, export_envelope_csv, export_spectrum_csv, pulse_spectrum
from .sweeps import frame_shift, overlap_of, resolve_preset, run_preset, sweep_gap, sweep_super_robustness
from .units import HBAR, radps_to_ghz

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=PRESET_NAMES)
    p.add_argument("--config", help="flat key = value file (a written .cfg record works too)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--ntraj", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--no-phonons", action="store_true")
    p.add_argument("--polaron-shift", action="store_true")
    p.add_argument("--out-dir")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qdsps", description="Off-resonant single-photon source simulations")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name, text in [
        ("pulse", "envelope and spectrum CSV"),
        ("rates", "phonon-rate CSV"),
        ("evolve", "oracle population dynamics"),
        ("fom", "figures of merit for one preset"),
        ("info", "Franck-Condon factor, cap, polaron shift, diagnostics"),
    ]:
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "evolve":
            p.add_argument("--correlations", action="store_true", help="also export G1/G2")
        if name == "fom":
            p.add_argument("--oracle-only", action="store_true")
            p.add_argument("--trajectories-only", action="store_true")
    for name in ("sweep-gap", "sweep-super"):
        p = sub.add_parser(name, help="parameter scan to CSV")
        _common(p)
        p.add_argument("--axis", required=True, help="name=start:stop:count or name=v1,v2,...")
        if name == "sweep-super":
            p.add_argument("--axis2")
        p.add_argument("--metrics", default="eta,g2,indist,overlap")
        p.add_argument("--oracle-only", action="store_true")
    return ap


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    items = {}
    for kv in args.set:
        if "=" not in kv:
            raise ConfigError(f"--set {kv!r}: expected KEY=VALUE")
        k, v = kv.split("=", 1)
        items[k.strip()] = v
    if args.preset:
        items["preset"] = args.preset
    if args.seed is not None:
        items["solver.seed"] = str(args.seed)
    if args.ntraj is not None:
        items["solver.n_traj"] = str(args.ntraj)
    if args.workers is not None:
        items["solver.workers"] = str(args.workers)
    if args.no_phonons:
        items["phonons.enabled"] = "false"
    if args.polaron_shift:
        items["phonons.polaron_shift"] = "true"
    if args.out_dir:
        items["output.dir"] = args.out_dir
    if getattr(args, "oracle_only", False):
        items["solver.trajectories"] = "false"
    if getattr(args, "trajectories_only", False):
        items["solver.oracle"] = "false"
    return apply_items(cfg, items).validate()


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, default=float))


def cmd_info(cfg: RunConfig, out: Path) -> dict:
    ph = cfg.phonon_params() or PhononParams(cfg.alpha_ph_ps2 or 0.03)
    B = franck_condon(ph)
    info = {
        "franck_condon": B,
        "indistinguishability_cap": indistinguishability_cap(ph),
        "polaron_shift_meV": polaron_shift(ph) * HBAR,
        "polaron_shift_radps": polaron_shift(ph),
    }
    pr = resolve_preset(cfg)
    diag = {"preset": pr.name}
    if pr.name.endswith("dichromatic"):
        diag["calibrated_over_table_amplitude"] = table_amplitude_ratio(pr.name)
    if pr.name == "narp":
        diag["chirp_product_abs_alpha_tp2"] = pr.params.chirp_product
        diag["area_product_omega0sq_tp2"] = pr.params.area_product
        diag["spectral_chirp_ps2"] = pr.params.spectral_chirp
    info["diagnostics"] = diag
    return info


def cmd_pulse(cfg: RunConfig, out: Path) -> dict:
    e = build_preset(resolve_preset(cfg), cfg.steps_per_period)
    s = pulse_spectrum(e)
    export_envelope_csv(out / "envelope.csv", e, max(1, len(e.t) // 20000))
    export_spectrum_csv(out / "spectrum.csv", s)
    return {"overlap": overlap_of(e, cfg.qubit().gamma), "n_samples": len(e.t), "dt_ps": e.dt,
            "files": ["envelope.csv", "spectrum.csv"]}


def cmd_rates(cfg: RunConfig, out: Path) -> dict:
    ph = cfg.phonon_params()
    if ph is None:
        raise ConfigError("rates: phonons are disabled")
    e = build_preset(resolve_preset(cfg), cfg.steps_per_period)
    r = rates_along_pulse(e, ph, cfg.up_exponent, cfg.nominal_detuning)
    export_rates_csv(out / "rates.csv", r)
    return {"peak_gamma_pd_GHz": radps_to_ghz(float(r.gamma_pd.max())),
            "peak_gamma_up_GHz": radps_to_ghz(float(r.gamma_up.max())), "files": ["rates.csv"]}


def cmd_evolve(cfg: RunConfig, out: Path, correlations: bool) -> dict:
    e = build_preset(resolve_preset(cfg), cfg.steps_per_period)
    q = cfg.qubit()
    ch = emitter_channels(e, q, cfg.phonon_params(), cfg.up_exponent, cfg.dephasing, cfg.nominal_detuning)
    me = evolve_me(e, ch, GROUND, cfg.tail_time(), cfg.steps_per_period, frame_shift=frame_shift(cfg))
    export_population_csv(out / "population.csv", me.population)
    files = ["population.csv"]
    if correlations:
        corr, _ = regression_correlations(e, ch, GROUND, cfg.tail_time(), steps_per_period=cfg.steps_per_period,
                                          frame_shift=frame_shift(cfg), me=me)
        export_correlation_csv(out / "correlations.csv", corr)
        files.append("correlations.csv")
    pulse_end = float(e.t[-1])
    i_end = int(np.searchsorted(me.population.t, pulse_end))
    return {"max_population": float(me.population.Nx.max()),
            "population_at_pulse_end": float(me.population.Nx[min(i_end, len(me.population.t) - 1)]),
            "max_trace_drift": me.max_trace_drift, "files": files}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.cmd == "info":
            res = cmd_info(cfg, out)
        elif args.cmd == "pulse":
            res = cmd_pulse(cfg, out)
        elif args.cmd == "rates":
            res = cmd_rates(cfg, out)
        elif args.cmd == "evolve":
            res = cmd_evolve(cfg, out, args.correlations)
        elif args.cmd == "fom":
            res = run_preset(cfg, out).summary()
        else:
            name1, vals1 = SweepSpec.parse_axis(args.axis)
            name2 = vals2 = None
            if getattr(args, "axis2", None):
                name2, vals2 = SweepSpec.parse_axis(args.axis2)
            spec = SweepSpec(name1, vals1, name2, vals2, tuple(m.strip() for m in args.metrics.split(",")))
            if args.oracle_only:
                cfg.trajectories = False
            fn = sweep_gap if args.cmd == "sweep-gap" else sweep_super_robustness
            csv_name = args.cmd.replace("-", "_") + ".csv"
            rows = fn(cfg, spec, out / csv_name)
            res = {"points": len(rows), "files": [csv_name]}
        if args.cmd != "fom":
            write_record(out / "record.json", cfg, {"command": args.cmd, "argv": list(argv or sys.argv[1:])})
        _emit(res)
        return EXIT_OK
    except (ConfigError, PulseError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFault, FloatingPointError) as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
