"""Run configuration: flat ``dotted.key = value`` text files, lab units at the boundary.

Example::

    preset = super
    pulse.omega2_meV = 6.282     # any preset-row key of the chosen preset
    phonons.enabled = true
    phonons.T_K = 4
    solver.n_traj = 5000
    solver.seed = 7
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .phonons import PhononParams
from .presets import PRESET_NAMES, PRESET_ROWS
from .propagation import DEFAULT_DEPHASING, DEFAULT_TAIL_LIFETIMES, DEPHASING_CONVENTIONS
from .pulses import DEFAULT_STEPS_PER_PERIOD, QubitParams
from .units import HBAR, ghz_to_radps, mev_to_radps


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    preset: str = "super"
    pulse: dict[str, float] = field(default_factory=dict)  # preset-row overrides
    table_amplitude: bool = False
    flip_chirp: bool = False
    gamma_GHz: float = 1.0
    phonons: bool = True
    alpha_ph_ps2: float = 0.03
    omega_b_meV: float = 0.9
    T_K: float = 4.0
    up_exponent: int = 1
    dephasing: str = DEFAULT_DEPHASING
    nominal_detuning: bool = True
    polaron_shift: bool = False
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD
    tail_lifetimes: float = DEFAULT_TAIL_LIFETIMES
    n_traj: int = 5000
    seed: int = 2024
    workers: int = 1
    oracle: bool = True
    trajectories: bool = True
    hom: bool = True
    out_dir: str = "out"

    def validate(self) -> "RunConfig":
        if self.preset not in PRESET_NAMES:
            raise ConfigError(f"preset: unknown {self.preset!r} (choose from {', '.join(PRESET_NAMES)})")
        for k in self.pulse:
            if k not in PRESET_ROWS[self.preset]:
                raise ConfigError(f"pulse.{k}: not a parameter of preset {self.preset!r}")
        if not self.gamma_GHz > 0:
            raise ConfigError("qubit.gamma_GHz: must be positive")
        if self.alpha_ph_ps2 < 0:
            raise ConfigError("phonons.alpha_ph_ps2: must be non-negative")
        if not self.omega_b_meV > 0:
            raise ConfigError("phonons.omega_b_meV: must be positive")
        if not self.T_K > 0:
            raise ConfigError("phonons.T_K: must be positive")
        if self.up_exponent not in (1, 2):
            raise ConfigError("phonons.up_exponent: must be 1 or 2")
        if self.dephasing not in DEPHASING_CONVENTIONS:
            raise ConfigError(f"phonons.dephasing: choose from {', '.join(DEPHASING_CONVENTIONS)}")
        if self.steps_per_period < 8:
            raise ConfigError("solver.steps_per_period: must be >= 8")
        if not self.tail_lifetimes >= 8:
            raise ConfigError("solver.tail_lifetimes: must cover >= 8 radiative lifetimes")
        if self.n_traj < 1:
            raise ConfigError("solver.n_traj: must be >= 1")
        if self.seed < 0:
            raise ConfigError("solver.seed: must be non-negative")
        if self.workers < 1:
            raise ConfigError("solver.workers: must be >= 1")
        return self

    # ------------------------------------------------------------ conversions

    def qubit(self) -> QubitParams:
        return QubitParams(gamma=ghz_to_radps(self.gamma_GHz))

    def phonon_params(self) -> PhononParams | None:
        if not self.phonons:
            return None
        return PhononParams(alpha_ph=self.alpha_ph_ps2, omega_b=mev_to_radps(self.omega_b_meV), T=self.T_K)

    def tail_time(self) -> float:
        return self.tail_lifetimes / self.qubit().gamma

    def to_flat(self) -> dict[str, object]:
        return {_KEY_OF[f.name]: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "pulse"} | {
            f"pulse.{k}": v for k, v in sorted(self.pulse.items())
        }


# dotted key -> field name
_FIELDS = {
    "preset": "preset",
    "pulse.table_amplitude": "table_amplitude",
    "pulse.flip_chirp": "flip_chirp",
    "qubit.gamma_GHz": "gamma_GHz",
    "phonons.enabled": "phonons",
    "phonons.alpha_ph_ps2": "alpha_ph_ps2",
    "phonons.omega_b_meV": "omega_b_meV",
    "phonons.T_K": "T_K",
    "phonons.up_exponent": "up_exponent",
    "phonons.dephasing": "dephasing",
    "phonons.nominal_detuning": "nominal_detuning",
    "phonons.polaron_shift": "polaron_shift",
    "solver.steps_per_period": "steps_per_period",
    "solver.tail_lifetimes": "tail_lifetimes",
    "solver.n_traj": "n_traj",
    "solver.seed": "seed",
    "solver.workers": "workers",
    "solver.oracle": "oracle",
    "solver.trajectories": "trajectories",
    "solver.hom": "hom",
    "output.dir": "out_dir",
}
_KEY_OF = {v: k for k, v in _FIELDS.items()}


def _coerce(key: str, raw: str, proto):
    s = raw.strip()
    if isinstance(proto, bool):
        low = s.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if isinstance(proto, int):
            return int(s)
        if isinstance(proto, float):
            return float(s)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return s


def apply_items(cfg: RunConfig, items: dict[str, str]) -> RunConfig:
    """Set dotted keys (string values) on a copy of ``cfg``."""
    cfg = dataclasses.replace(cfg, pulse=dict(cfg.pulse))
    # preset first: pulse.* keys are checked against it
    if "preset" in items:
        cfg.preset = items["preset"].strip()
    for key, raw in items.items():
        if key == "preset":
            continue
        if key.startswith("pulse.") and key not in _FIELDS:
            try:
                cfg.pulse[key[6:]] = float(raw)
            except ValueError:
                raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
            continue
        if key not in _FIELDS:
            raise ConfigError(f"{key}: unknown configuration key")
        name = _FIELDS[key]
        setattr(cfg, name, _coerce(key, raw, getattr(RunConfig(), name)))
    return cfg


def parse_text(text: str) -> dict[str, str]:
    items: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        k, v = line.split("=", 1)
        k = k.strip()
        if not k:
            raise ConfigError(f"line {n}: empty key")
        if k in items:
            raise ConfigError(f"line {n}: duplicate key {k}")
        items[k] = v.strip()
    return items


def load_config(path: str | Path | None = None, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        cfg = apply_items(cfg, parse_text(text))
    return cfg


def dump_text(cfg: RunConfig) -> str:
    lines = []
    for k, v in cfg.to_flat().items():
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


@dataclass
class SweepSpec:
    """One or two scan axes plus the metrics to report.

    Axis names: ``delta_tp`` (dichromatic), ``hole_scale`` (NARP),
    ``omega2_rel``, ``t_p2_rel`` and ``delta2_shift_meV`` (SUPER).
    """

    axis1: str
    values1: list[float]
    axis2: str | None = None
    values2: list[float] | None = None
    metrics: tuple[str, ...] = ("eta", "g2", "indist", "overlap")

    def __post_init__(self):
        if len(self.values1) < 1:
            raise ConfigError(f"sweep axis {self.axis1}: no points")
        if len(self.values1) > 1 and min(self.values1) == max(self.values1):
            raise ConfigError(f"sweep axis {self.axis1}: degenerate range")
        if self.axis2 is not None:
            if not self.values2:
                raise ConfigError(f"sweep axis {self.axis2}: no points")
            if len(self.values2) > 1 and min(self.values2) == max(self.values2):
                raise ConfigError(f"sweep axis {self.axis2}: degenerate range")
        bad = set(self.metrics) - {"eta", "g2", "indist", "overlap"}
        if bad:
            raise ConfigError(f"unknown metrics: {', '.join(sorted(bad))}")

    @staticmethod
    def parse_axis(text: str) -> tuple[str, list[float]]:
        """``name=start:stop:count`` or ``name=v1,v2,...``."""
        if "=" not in text:
            raise ConfigError(f"axis {text!r}: expected name=start:stop:count or name=v1,v2")
        name, rng = text.split("=", 1)
        try:
            if ":" in rng:
                a, b, n = rng.split(":")
                n = int(n)
                if n < 1:
                    raise ValueError
                vals = [float(a) + (float(b) - float(a)) * i / max(n - 1, 1) for i in range(n)]
            else:
                vals = [float(x) for x in rng.split(",")]
        except ValueError:
            raise ConfigError(f"axis {text!r}: malformed range") from None
        return name.strip(), vals


def record(cfg: RunConfig, extra: dict | None = None) -> dict:
    from . import __version__

    out = {"version": __version__, "hbar_meV_ps": HBAR, "config": cfg.to_flat()}
    if extra:
        out.update(extra)
    return out


def write_record(path: Path, cfg: RunConfig, extra: dict | None = None) -> None:
    path.write_text(json.dumps(record(cfg, extra), indent=2, sort_keys=True) + "\n")
    path.with_suffix(".cfg").write_text(dump_text(cfg))
