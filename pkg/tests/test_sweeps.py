import csv
import dataclasses
import math

import numpy as np
import pytest

from qdsps.config import ConfigError, RunConfig, SweepSpec
from qdsps.presets import get_preset
from qdsps.pulses import build_dichromatic, calibrate_dichromatic_amplitude
from qdsps.sweeps import gap_params, super_params, sweep_gap, sweep_super_robustness
from qdsps.units import mev_to_radps


def test_gap_params_recalibrate_area():
    pr = get_preset("short-dichromatic")
    for dt in (0.0, 1.5, 3.0):
        p = gap_params(pr, "delta_tp", dt)
        assert p.delta * p.t_p == pytest.approx(dt)
        e = build_dichromatic(p)
        assert abs(np.trapezoid(e.env, e.t)) == pytest.approx(math.pi, rel=1e-6)
        assert p.omega0_amp is None or p.omega0_amp == calibrate_dichromatic_amplitude(p)


def test_gap_params_narp_hole_scale():
    pr = get_preset("narp")
    assert gap_params(pr, "hole_scale", 2.0).delta == pytest.approx(2 * pr.params.delta)
    with pytest.raises(ConfigError):
        gap_params(pr, "hole_scale", 0.0)
    with pytest.raises(ConfigError):
        gap_params(pr, "delta_tp", 1.0)
    with pytest.raises(ConfigError):
        gap_params(get_preset("super"), "delta_tp", 1.0)


def test_super_params_limits():
    pr = get_preset("super")
    p = super_params(pr, {"omega2_rel": 0.2, "t_p2_rel": -0.3})
    assert p.omega2 == pytest.approx(1.2 * pr.params.omega2)
    assert p.t_p2 == pytest.approx(0.7 * pr.params.t_p2)
    p = super_params(pr, {"delta2_shift_meV": -0.38})
    assert p.delta2 == pytest.approx(pr.params.delta2 - mev_to_radps(0.38))
    for bad in ({"omega2_rel": 0.31}, {"t_p2_rel": -0.5}, {"delta2_shift_meV": 0.4}, {"phi": 0.1}):
        with pytest.raises(ConfigError):
            super_params(pr, bad)


def test_sweep_gap_overlap_falls(tmp_path):
    cfg = RunConfig(preset="short-dichromatic")
    spec = SweepSpec("delta_tp", [1.0, 2.0, 3.0], metrics=("overlap",))
    rows = sweep_gap(cfg, spec, tmp_path / "g.csv")
    ov = [r[1] for r in rows]
    assert ov[0] > ov[1] > ov[2]
    with open(tmp_path / "g.csv") as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["delta_tp", "overlap"]
    assert [float(x) for x in got[2]] == pytest.approx(rows[1])


def test_sweep_columns_and_oracle_values(tmp_path):
    cfg = RunConfig(preset="short-dichromatic", trajectories=False)
    spec = SweepSpec("delta_tp", [3.0], metrics=("eta", "overlap"))
    rows = sweep_gap(cfg, spec, tmp_path / "g.csv")
    header = (tmp_path / "g.csv").read_text().splitlines()[0]
    assert header == "delta_tp,oracle_eta,traj_eta,traj_eta_se,overlap"
    (dt, eta, traj, traj_se, ov) = rows[0]
    assert traj is None and traj_se is None
    assert 0.8 < eta < 0.95


def test_sweep_super_grid(tmp_path):
    cfg = RunConfig(preset="super")
    spec = SweepSpec("omega2_rel", [-0.1, 0.1], "t_p2_rel", [-0.2, 0.0, 0.2], metrics=("overlap",))
    rows = sweep_super_robustness(cfg, spec, tmp_path / "s.csv")
    assert [tuple(r[:2]) for r in rows] == [(a, b) for a in (-0.1, 0.1) for b in (-0.2, 0.0, 0.2)]
    assert all(0 <= r[2] < 1e-3 for r in rows)
    with pytest.raises(ConfigError):
        sweep_super_robustness(cfg, SweepSpec("omega2_rel", [0.0], "omega2_rel", [0.1], metrics=("overlap",)))
    with pytest.raises(ConfigError):
        sweep_super_robustness(RunConfig(preset="narp"), SweepSpec("omega2_rel", [0.0], metrics=("overlap",)))


def test_parallel_sweep_matches_serial(tmp_path):
    spec = SweepSpec("delta_tp", [1.0, 2.0, 2.5], metrics=("overlap",))
    a = sweep_gap(RunConfig(preset="short-dichromatic"), spec)
    b = sweep_gap(dataclasses.replace(RunConfig(preset="short-dichromatic"), workers=2), spec)
    assert a == b
