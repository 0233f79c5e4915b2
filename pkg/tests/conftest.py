import math

import numpy as np
import pytest

from qdsps.presets import PRESET_NAMES, build_preset, get_preset
from qdsps.pulses import EnvelopeGrid, QubitParams, Scheme

GAMMA = 2 * math.pi * 1e-3


@pytest.fixture(scope="session")
def qubit():
    return QubitParams()


@pytest.fixture(scope="session")
def envelopes():
    """All four preset envelopes, built once."""
    return {name: build_preset(get_preset(name)) for name in PRESET_NAMES}


def flat_grid(half_window: float = 2.0, step: float = 0.01, env=0.0, detuning: float = 0.0) -> EnvelopeGrid:
    """Constant (usually zero) drive on a short symmetric grid."""
    m = int(round(half_window / step))
    t = step * np.arange(-m, m + 1, dtype=float)
    return EnvelopeGrid(t, np.full(t.shape, env, dtype=complex), detuning, np.full(t.shape, detuning), Scheme.DICHROMATIC)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
