import json
import math

import numpy as np
import pytest

from hfvdd.cli import main
from hfvdd.config import ConfigError, eval_number, load_config, parse_config, shipped_configs
from hfvdd.diagnostics import read_timeseries
from hfvdd.fields import read_cell_fields, write_fields
from hfvdd.mesh import build_cartesian
from hfvdd.poisson import thermal_equilibrium
from hfvdd.problem import make_setup
from hfvdd.statistics import Blakemore, Boltzmann, MeanKind

SHORT_TC4 = """
[mesh]
source = triangular:0:diode
[physics]
statistics = boltzmann
recombination = none
debye = 1
[boundary]
n0 = e
n1 = 1
alpha0 = 1
[stepper]
dt = 0.05
t_end = 1
[output]
name = short
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------- configs

def test_shipped_catalog():
    assert shipped_configs() == [f"testcase{i}.cfg" for i in range(1, 7)]


def test_testcase1_values():
    cfg = load_config("testcase1.cfg")
    assert cfg.statistics == "boltzmann" and cfg.recombination == "none"
    assert cfg.b == 0 and cfg.debye == 1
    assert (cfg.n0, cfg.n1) == (0.9, 0.1)
    assert cfg.alpha0 == pytest.approx(math.log(0.09), rel=1e-15)
    assert cfg.stepper.dt == 0.1


def test_testcase2_values():
    cfg = load_config("testcase2.cfg")
    assert isinstance(cfg.model, Blakemore) and cfg.model.gamma == 0.27
    assert cfg.recombination == "scaled_srh:10"
    assert (cfg.b, cfg.debye, cfg.n0, cfg.n1, cfg.alpha0) == (1, 0.05, 3.5, 1.5, 0)


def test_recombination_with_nonzero_alpha_rejected():
    text = SHORT_TC4.replace("boltzmann", "blakemore:0.27").replace("recombination = none", "recombination = srh")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert any(e.startswith("boundary.alpha0") for e in info.value.errors)


def test_errors_name_their_keys():
    text = SHORT_TC4.replace("debye = 1", "debye = abc\ncolour = red").replace("dt = 0.05", "dt = -1")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    errs = " | ".join(info.value.errors)
    assert "physics.debye" in errs and "physics.colour: unknown key" in errs and "stepper" in errs


def test_unknown_section_and_bad_values():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(SHORT_TC4 + "\n[plots]\nx = 1\n")
    with pytest.raises(ConfigError, match="boundary.n0"):
        parse_config(SHORT_TC4.replace("boltzmann", "blakemore:0.27").replace("n0 = e", "n0 = 4"))
    with pytest.raises(ConfigError, match="mean"):
        parse_config(SHORT_TC4.replace("debye = 1", "debye = 1\nmean = median"))


def test_mean_keyword():
    cfg = parse_config(SHORT_TC4.replace("debye = 1", "debye = 1\nmean = entropic"))
    assert cfg.mean == MeanKind.ENTROPIC


def test_number_expressions():
    assert eval_number("log(0.9*0.1)") == math.log(0.9 * 0.1)
    assert eval_number("e") == math.e
    assert eval_number("2**-3") == 0.125
    assert eval_number(" -1.5e-3 ") == -1.5e-3
    for bad in ("__import__('os')", "1/0", "x", "inf"):
        with pytest.raises(ValueError):
            eval_number(bad)


@pytest.mark.parametrize("name", [f"testcase{i}.cfg" for i in range(1, 7)])
def test_derived_boundary_data_compatible(name):
    cfg = load_config(name)
    setup = cfg.build_setup()
    m, d = setup.model, setup.mesh.dirichlet_faces
    nD, pD, phD = (v.faces[d] for v in (setup.n_dirichlet, setup.p_dirichlet, setup.phi_dirichlet))
    assert np.abs(m.h(nD) - phD - setup.alpha_n).max() <= 1e-13
    assert np.abs(m.h(pD) + phD - setup.alpha_p).max() <= 1e-13


# ---------------------------------------------------------------- fields

def symmetric_setup():
    mesh = build_cartesian(6, 4)
    an, ap = 0.4, -0.1

    def phi(x):
        return 0.3 * x[:, 1] + 0.2 * (x[:, 0] - 0.5) ** 2

    return make_setup(mesh, Boltzmann(), n_data=lambda x: np.exp(an + phi(x)),
                      p_data=lambda x: np.exp(ap - phi(x)), phi_data=phi, alpha_n=an, alpha_p=ap,
                      n_init=None, p_init=None,
                      doping=lambda x: np.where(np.abs(x[:, 0] - 0.5) < 0.3, 1.0, -1.0))


@pytest.mark.parametrize("fmt", ["vtk", "csv"])
def test_field_round_trip(tmp_path, fmt):
    setup = symmetric_setup()
    eq = thermal_equilibrium(setup)
    main_path, faces = write_fields(setup.mesh, eq, tmp_path / "eq", fmt)
    back = read_cell_fields(main_path)
    for name, hv in (("N", eq.n), ("P", eq.p), ("phi", eq.phi)):
        assert np.abs(back[name] - hv.cells).max() <= 1e-15 * max(1.0, np.abs(hv.cells).max())
    rows = faces.read_text().splitlines()
    assert rows[0] == "face,x,y,tag,N,P,phi" and len(rows) == setup.mesh.nfaces + 1
    # bit-stable output
    again, _ = write_fields(setup.mesh, eq, tmp_path / "eq2", fmt)
    assert again.read_bytes() == main_path.read_bytes()


def test_equilibrium_fields_mirror_symmetric(tmp_path):
    setup = symmetric_setup()
    mesh = setup.mesh
    eq = thermal_equilibrium(setup)
    path, _ = write_fields(mesh, eq, tmp_path / "sym", "csv")
    phi = read_cell_fields(path)["phi"]
    c = mesh.cell_centres
    mirror = [int(np.flatnonzero(np.hypot(c[:, 0] - (1 - x), c[:, 1] - y) < 1e-12)[0]) for x, y in c]
    assert mirror != list(range(mesh.ncells))
    assert np.abs(phi - phi[mirror]).max() <= 1e-12
    assert np.abs(phi).max() > 0.1


def test_unknown_field_format(tmp_path):
    setup = symmetric_setup()
    with pytest.raises(ValueError):
        write_fields(setup.mesh, thermal_equilibrium(setup), tmp_path / "x", "hdf5")


# ---------------------------------------------------------------- cli

def test_cli_transient_testcase4(tmp_path, capsys):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["transient", "testcase4.cfg", "--out", str(out)]) == 0
        outs.append(out / "testcase4.csv")
    data = read_timeseries(outs[0])
    assert data["Temps"][-1] == 5.0
    assert np.all(np.diff(data["Entro"]) <= 1e-12)
    assert outs[0].read_bytes() == outs[1].read_bytes()
    meta = json.loads((tmp_path / "a" / "run_meta.json").read_text())
    assert meta["partial"] is False and meta["snapshots"] == ["testcase4_t000.vtk", "testcase4_t001.vtk",
                                                              "testcase4_t002.vtk"]
    assert meta["total_cost"] == data["cumulative_cost"][-1]


def test_cli_snapshot_schedule(tmp_path):
    cfg = write_cfg(tmp_path, SHORT_TC4)
    out = tmp_path / "o"
    assert main(["transient", "--config", cfg, "--out", str(out), "--snapshots", "0,0.5,1,7"]) == 0
    snaps = sorted(p.name for p in out.glob("short_t*.vtk"))
    assert snaps == ["short_t000.vtk", "short_t001.vtk", "short_t002.vtk"]


def test_cli_equilibrium(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SHORT_TC4 + "format = csv\n")
    out = tmp_path / "eq"
    assert main(["equilibrium", cfg, "--out", str(out)]) == 0
    fields = read_cell_fields(out / "short_equilibrium.csv")
    assert len(fields["phi"]) == 56
    assert "Newton iterations" in capsys.readouterr().out


def test_cli_decay_scan(tmp_path, capsys):
    text = (SHORT_TC4.replace("triangular:0:diode", "cartesian:4x4:diode")
            .replace("boltzmann", "blakemore:0.27").replace("t_end = 1", "t_end = 2.5"))
    cfg = write_cfg(tmp_path, text)
    out = tmp_path / "scan"
    assert main(["decay-scan", cfg, "--out", str(out), "--b", "0,1"]) == 0
    rows = (out / "short_rates.csv").read_text().splitlines()
    assert rows[0] == "b,rate,r2,points,ratio_to_b0,isotropic_law" and len(rows) == 3
    b1 = rows[2].split(",")
    assert float(b1[1]) > 0 and 0 < float(b1[4]) < 1
    assert "ratio" in capsys.readouterr().out


def test_cli_mesh_check(tmp_path, capsys):
    assert main(["mesh-check", "cartesian:3x3:diode"]) == 0
    assert "regularity theta" in capsys.readouterr().out
    bad = tmp_path / "bad.mesh"
    bad.write_text("polymesh 2d\nvertices\n0 0 0\n1 1 0\n2 1 1\n3 0 1\nfaces\n0: 0 1 d0\n1: 1 2 d0\n"
                   "2: 2 3 d0\n3: 3 0 d0\ncells\n0: 0 1 2 3 centre 1.5 0.5\n")
    assert main(["mesh-check", str(bad)]) == 2
    assert "cell 0" in capsys.readouterr().err


def test_cli_missing_config(tmp_path, capsys):
    assert main(["transient", str(tmp_path / "nowhere" / "x.cfg")]) == 4
    assert "cannot read config" in capsys.readouterr().err


def test_cli_invalid_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SHORT_TC4.replace("debye = 1", "debye = 0"))
    assert main(["transient", cfg]) == 2
    assert "physics.debye" in capsys.readouterr().err


def test_cli_solver_failure_writes_partial_output(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SHORT_TC4.replace("dt = 0.05", "dt = 0.1\nmax_newton = 1\ndt_min = 0.009"))
    out = tmp_path / "fail"
    assert main(["transient", cfg, "--out", str(out)]) == 3
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["partial"] is True and "time step fell below" in meta["error"]
    data = read_timeseries(out / "short.csv")
    assert len(data["Temps"]) == 1 and data["Temps"][0] == 0.0
    assert "solver failure" in capsys.readouterr().err
