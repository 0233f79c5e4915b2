import json

import pytest

from qdsps import cli
from qdsps.config import ConfigError, RunConfig, SweepSpec, apply_items, dump_text, load_config, parse_text
from qdsps.propagation import NumericalFault


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# ------------------------------------------------------------------- config


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert cfg.preset == "super" and cfg.n_traj == 5000
    assert cfg.tail_time() == pytest.approx(12.0 / (2e-3 * 3.141592653589793))


def test_parse_text():
    items = parse_text("preset = narp   # the chirped one\n\n  solver.seed=7\n")
    assert items == {"preset": "narp", "solver.seed": "7"}
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("a = 1\na = 2\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_text("just words\n")
    with pytest.raises(ConfigError):
        parse_text("= 3\n")


@pytest.mark.parametrize(
    "items",
    [
        {"solver.n_traj": "many"},
        {"phonons.enabled": "maybe"},
        {"nonsense.key": "1"},
        {"pulse.omega0_meV": "x"},
    ],
)
def test_bad_items(items):
    with pytest.raises(ConfigError):
        apply_items(RunConfig(), items)


@pytest.mark.parametrize(
    "items",
    [
        {"preset": "laser"},
        {"preset": "narp", "pulse.omega2_meV": "3"},
        {"qubit.gamma_GHz": "0"},
        {"phonons.T_K": "-1"},
        {"phonons.up_exponent": "3"},
        {"phonons.dephasing": "sideways"},
        {"solver.n_traj": "0"},
        {"solver.tail_lifetimes": "2"},
        {"solver.workers": "0"},
    ],
)
def test_validation(items):
    with pytest.raises(ConfigError):
        apply_items(RunConfig(), items).validate()


def test_dump_round_trip(tmp_path):
    cfg = apply_items(RunConfig(), {"preset": "narp", "pulse.t_p": "2.0", "phonons.T_K": "10", "solver.hom": "off"})
    path = tmp_path / "c.cfg"
    path.write_text(dump_text(cfg))
    back = load_config(path)
    assert back == cfg
    assert back.pulse == {"t_p": 2.0} and back.hom is False


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_sweep_axis_parsing():
    assert SweepSpec.parse_axis("delta_tp=0:4:5") == ("delta_tp", [0.0, 1.0, 2.0, 3.0, 4.0])
    assert SweepSpec.parse_axis("omega2_rel=-0.1,0.2") == ("omega2_rel", [-0.1, 0.2])
    assert SweepSpec.parse_axis("x=3:3:1") == ("x", [3.0])
    for bad in ("delta_tp", "a=1:2", "a=1:2:0", "a=q"):
        with pytest.raises(ConfigError):
            SweepSpec.parse_axis(bad)
    with pytest.raises(ConfigError):
        SweepSpec("a", [1.0, 1.0])
    with pytest.raises(ConfigError):
        SweepSpec("a", [1.0], metrics=("eta", "beauty"))


# ---------------------------------------------------------------------- CLI


def test_info(tmp_path, capsys):
    code, out, _ = _run(capsys, "info", "--preset", "short-dichromatic", "--out-dir", str(tmp_path))
    assert code == 0
    info = json.loads(out)
    assert info["franck_condon"] == pytest.approx(0.96, abs=0.005)
    assert 3.0 < info["diagnostics"]["calibrated_over_table_amplitude"] < 3.3
    rec = json.loads((tmp_path / "record.json").read_text())
    assert rec["command"] == "info" and rec["config"]["preset"] == "short-dichromatic"
    assert (tmp_path / "record.cfg").exists()


def test_pulse_command(tmp_path, capsys):
    code, out, _ = _run(capsys, "pulse", "--preset", "super", "--out-dir", str(tmp_path))
    assert code == 0
    assert 0 <= json.loads(out)["overlap"] <= 1
    assert (tmp_path / "envelope.csv").exists() and (tmp_path / "spectrum.csv").exists()


def test_rates_command(tmp_path, capsys):
    code, out, _ = _run(capsys, "rates", "--preset", "long-dichromatic", "--out-dir", str(tmp_path))
    assert code == 0
    assert json.loads(out)["peak_gamma_pd_GHz"] > 0
    code, _, err = _run(capsys, "rates", "--preset", "super", "--no-phonons", "--out-dir", str(tmp_path))
    assert code == 2 and "disabled" in err


def test_evolve_command(tmp_path, capsys):
    code, out, _ = _run(capsys, "evolve", "--preset", "short-dichromatic", "--correlations", "--out-dir", str(tmp_path))
    assert code == 0
    res = json.loads(out)
    assert 0.9 < res["max_population"] <= 1.0
    assert (tmp_path / "correlations.csv").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["info", "--set", "solver.seed"],
        ["info", "--set", "solver.seed=-4"],
        ["info", "--set", "phonons.colour=blue"],
        ["info", "--config", "/nonexistent/run.cfg"],
        ["sweep-gap", "--preset", "super", "--axis", "delta_tp=0:1:2"],
        ["sweep-gap", "--preset", "short-dichromatic", "--axis", "hole_scale=1,2"],
        ["sweep-super", "--preset", "super", "--axis", "omega2_rel=0:0.5:2", "--metrics", "overlap"],
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, argv):
    code, _, err = _run(capsys, *argv, "--out-dir", str(tmp_path))
    assert code == 2
    assert err.startswith("config error")


def test_argparse_rejects_unknown_preset(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["info", "--preset", "laser"])
    assert exc.value.code == 2


def test_numerical_fault_exit_3(tmp_path, capsys, monkeypatch):
    def boom(*a, **k):
        raise NumericalFault("trace drift 1e-3 persists")

    monkeypatch.setattr(cli, "run_preset", boom)
    code, _, err = _run(capsys, "fom", "--preset", "super", "--out-dir", str(tmp_path))
    assert code == 3 and "numerical fault" in err


def test_fom_rerun_is_bit_identical(tmp_path, capsys):
    args = ["fom", "--preset", "short-dichromatic", "--ntraj", "40", "--seed", "5"]
    code_a, out_a, _ = _run(capsys, *args, "--out-dir", str(tmp_path / "a"))
    code_b, out_b, _ = _run(capsys, *args, "--out-dir", str(tmp_path / "b"))
    assert code_a == code_b == 0
    assert out_a == out_b
    for name in ("summary.json", "population.csv", "rates.csv", "envelope.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    s = json.loads(out_a)
    assert s["source"] == "trajectories" and s["n_traj"] == 40 and s["seed"] == 5


def test_fom_from_written_record(tmp_path, capsys):
    args = ["fom", "--preset", "short-dichromatic", "--ntraj", "20", "--seed", "3", "--set", "solver.hom=false"]
    _run(capsys, *args, "--out-dir", str(tmp_path / "a"))
    first = (tmp_path / "a" / "summary.json").read_text()
    code, _, _ = _run(capsys, "fom", "--config", str(tmp_path / "a" / "record.cfg"), "--out-dir", str(tmp_path / "b"))
    assert code == 0
    assert (tmp_path / "b" / "summary.json").read_text() == first


def test_fom_oracle_only(tmp_path, capsys):
    code, out, _ = _run(capsys, "fom", "--preset", "super", "--oracle-only", "--out-dir", str(tmp_path))
    assert code == 0
    s = json.loads(out)
    assert s["source"] == "oracle" and s["n_traj"] == 0
    assert s["eta"] == pytest.approx(1.0, abs=0.02)


def test_sweep_gap_command(tmp_path, capsys):
    code, out, _ = _run(capsys, "sweep-gap", "--preset", "short-dichromatic", "--axis", "delta_tp=1:3:3",
                        "--metrics", "overlap", "--out-dir", str(tmp_path))
    assert code == 0
    lines = (tmp_path / "sweep_gap.csv").read_text().splitlines()
    assert lines[0] == "delta_tp,overlap"
    assert len(lines) == 4
