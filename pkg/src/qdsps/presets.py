"""The four reference driving setups, in lab units and compiled to internal units."""
from __future__ import annotations

from dataclasses import dataclass

from .pulses import (
    DEFAULT_STEPS_PER_PERIOD,
    DichromaticParams,
    EnvelopeGrid,
    NarpParams,
    Scheme,
    SuperParams,
    build_dichromatic,
    build_narp,
    build_super,
    calibrate_dichromatic_amplitude,
)
from .units import mev_to_radps, uev_to_radps

PRESET_NAMES = ("long-dichromatic", "short-dichromatic", "narp", "super")

# reference parameters as published (meV, ueV, ps, ps^-2)
PRESET_ROWS = {
    "long-dichromatic": {"omega0_meV": 0.314, "t_p": 74.96, "delta_ueV": 26.3, "phi": 0.0},
    "short-dichromatic": {"omega0_meV": 7.842, "t_p": 3.0, "delta_ueV": 658.2, "phi": 0.0},
    "narp": {"omega0_meV": 3.547, "t_p": 1.8, "alpha": -1.111, "delta_ueV": 5.3},
    "super": {
        "omega1_meV": 7.785, "omega2_meV": 5.235, "t_p1": 2.40, "t_p2": 3.04,
        "delta1_meV": 8.00, "delta2_meV": 19.163, "tau": -0.73, "phi": 0.0,
    },
}


@dataclass(frozen=True)
class Preset:
    name: str
    scheme: Scheme
    params: object


def table_amplitude_ratio(name: str) -> float:
    """Calibrated pi-pulse amplitude over the published amplitude (dichromatic only)."""
    row = PRESET_ROWS[name]
    p = DichromaticParams(row["t_p"], uev_to_radps(row["delta_ueV"]), row["phi"])
    return calibrate_dichromatic_amplitude(p) / mev_to_radps(row["omega0_meV"])


def get_preset(
    name: str,
    table_amplitude: bool = False,
    flip_chirp: bool = False,
    overrides: dict[str, float] | None = None,
) -> Preset:
    """Preset parameters in rad/ps and ps.

    Dichromatic amplitudes are calibrated to a pi pulse unless
    ``table_amplitude`` is set, in which case the printed value is used.
    ``overrides`` replaces entries of the preset row (same keys, lab units);
    overriding a dichromatic amplitude implies ``table_amplitude``.
    """
    if name not in PRESET_ROWS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    row = dict(PRESET_ROWS[name])
    for k, v in (overrides or {}).items():
        if k not in row:
            raise KeyError(f"preset {name!r} has no parameter {k!r}; known: {', '.join(row)}")
        row[k] = float(v)
        if k == "omega0_meV":
            table_amplitude = True
    if name.endswith("dichromatic"):
        amp = mev_to_radps(row["omega0_meV"]) if table_amplitude else None
        p = DichromaticParams(row["t_p"], uev_to_radps(row["delta_ueV"]), row["phi"], amp)
        return Preset(name, Scheme.DICHROMATIC, p)
    if name == "narp":
        alpha = -row["alpha"] if flip_chirp else row["alpha"]
        p = NarpParams(row["t_p"], mev_to_radps(row["omega0_meV"]), alpha, uev_to_radps(row["delta_ueV"]))
        return Preset(name, Scheme.NARP, p)
    p = SuperParams(
        mev_to_radps(row["omega1_meV"]), mev_to_radps(row["omega2_meV"]), row["t_p1"], row["t_p2"],
        mev_to_radps(row["delta1_meV"]), mev_to_radps(row["delta2_meV"]), row["tau"], row["phi"],
    )
    return Preset(name, Scheme.SUPER, p)


def build_preset(pr: Preset, steps_per_period: int = DEFAULT_STEPS_PER_PERIOD) -> EnvelopeGrid:
    builder = {Scheme.DICHROMATIC: build_dichromatic, Scheme.NARP: build_narp, Scheme.SUPER: build_super}[pr.scheme]
    return builder(pr.params, steps_per_period=steps_per_period)


__all__ = ["PRESET_NAMES", "PRESET_ROWS", "Preset", "build_preset", "get_preset", "table_amplitude_ratio"]
