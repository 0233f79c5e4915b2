"""Single-photon-source simulations of a waveguide-coupled quantum-dot emitter
under dichromatic, NARP and SUPER excitation, with LA-phonon dissipation."""
from ._accel import HAS_NUMBA
from .master import FiguresOfMerit, evolve_me, fom_from_me, oracle_fom, regression_correlations
from .phonons import PhononParams, franck_condon, indistinguishability_cap, polaron_shift, rates_along_pulse
from .presets import PRESET_NAMES, get_preset
from .propagation import Channel, ChannelSet, emitter_channels
from .pulses import (
    DichromaticParams,
    EnvelopeGrid,
    NarpParams,
    QubitParams,
    SuperParams,
    build_dichromatic,
    build_narp,
    build_super,
    pulse_spectrum,
)

__version__ = "0.1.0"
