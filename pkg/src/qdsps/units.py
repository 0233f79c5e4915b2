"""Unit conventions.

Internally every energy is an angular frequency in rad/ps and every time is
in ps.  The command line and the CSV/JSON outputs use meV, ps, K and GHz.
"""
import math

HBAR = 0.6582119569  # meV ps
K_B = 0.08617333  # meV / K


def mev_to_radps(e):
    return e / HBAR


def radps_to_mev(w):
    return w * HBAR


def uev_to_radps(e):
    return e * 1e-3 / HBAR


def radps_to_ghz(w):
    """Angular rate in rad/ps to an ordinary frequency in GHz."""
    return w / (2.0 * math.pi) * 1e3


def ghz_to_radps(f):
    return f * 2.0 * math.pi * 1e-3
