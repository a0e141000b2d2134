import io
import json

import numpy as np
import pytest

from robinhp.cli import main
from robinhp.config import ConfigError, MeshConfig, RunConfig, example_preset
from robinhp.export import read_fields_csv


def test_presets_force_coefficients():
    cfg = RunConfig(example=1)
    assert cfg.lam == 0.5
    assert cfg.u_a == 0.0
    assert cfg.y_omega_expr.startswith("10*x1*x2")
    cfg2 = RunConfig(example=2)
    assert cfg2.u_a == 0.3
    data = example_preset(2)
    assert data.u_a == 0.3
    # boundary target defaults to the trace of the domain target
    x = np.array([0.25])
    assert data.y_gamma(x, 0 * x)[0] == data.y_omega(x, 0 * x)[0]
    with pytest.raises(ConfigError):
        RunConfig(example=7)


def test_config_round_trip():
    cfg = RunConfig(example=1)
    cfg.mesh = MeshConfig(kind="tri", n=4, split="crisscross")
    cfg.degree = 2
    text = cfg.canonical_text()
    back = RunConfig.from_file(io.StringIO(text))
    assert back == cfg
    assert back.canonical_text() == text

    custom = RunConfig()
    custom.lam = 0.25
    custom.y_omega_expr = "x1*x2"
    custom.mesh = MeshConfig(kind="quad", n=3)
    assert RunConfig.from_file(io.StringIO(custom.canonical_text())) == custom


def test_config_file_overrides_and_preset_forcing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("[problem]\nexample = 2\nlam = 99.0\n\n[mesh]\nkind = tri\n"
                    "n = 2\nsplit = crisscross\n\n[discretization]\ndegree = 1\n")
    cfg = RunConfig.from_file(path)
    assert cfg.lam == 0.5         # preset wins over the stray lam line
    assert cfg.u_a == 0.3
    assert cfg.mesh.n == 2 and cfg.degree == 1


def test_config_validation_errors():
    cfg = RunConfig()
    cfg.degree = 0
    with pytest.raises(ConfigError):
        cfg.validate()
    cfg = RunConfig()
    cfg.y_omega_expr = "sin("
    with pytest.raises(ConfigError):
        cfg.validate()
    cfg = RunConfig()
    cfg.mesh = MeshConfig(kind="hex", n=2)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_cli_rejects_bad_degree(tmp_path, capsys):
    code = main(["solve", "--example", "1", "--p", "0", "--out", str(tmp_path)])
    assert code == 1
    assert "degree must be >= 1" in capsys.readouterr().err


def test_cli_solve_writes_outputs(tmp_path):
    out = tmp_path / "run"
    code = main(["solve", "--example", "1", "--mesh", "tri-crisscross",
                 "--n", "2", "--p", "1", "--out", str(out), "--no-figures"])
    assert code == 0
    vtk = (out / "fields.vtk").read_text().splitlines()
    assert vtk[0] == "# vtk DataFile Version 3.0"
    assert vtk[2] == "ASCII"
    assert vtk[3] == "DATASET UNSTRUCTURED_GRID"
    csv_path = out / "fields.csv"
    fields = read_fields_csv(csv_path)
    assert fields["u"].min() >= 0.0
    iters = (out / "iterations.csv").read_text().splitlines()
    assert iters[0] == "iter,z_increment_H1,J,active_nodes"
    diag = json.loads((out / "optimality.json").read_text())
    assert diag["state_residual"] <= 1e-10

    # determinism: a second identical run reproduces the CSV bitwise
    out2 = tmp_path / "run2"
    assert main(["solve", "--example", "1", "--mesh", "tri-crisscross",
                 "--n", "2", "--p", "1", "--out", str(out2), "--no-figures"]) == 0
    assert (out2 / "fields.csv").read_bytes() == csv_path.read_bytes()


def test_cli_zero_problem_vtk_scalars(tmp_path):
    cfgfile = tmp_path / "zero.cfg"
    RunConfig().to_file(cfgfile)    # custom problem with y_omega = 0
    out = tmp_path / "zero"
    assert main(["solve", "--config", str(cfgfile), "--n", "1", "--p", "1",
                 "--out", str(out), "--no-figures"]) == 0
    fields = read_fields_csv(out / "fields.csv")
    assert np.abs(fields["u"]).max() == 0.0
    assert np.abs(fields["y"]).max() == 0.0
    text = (out / "fields.vtk").read_text()
    scalars = text.split("LOOKUP_TABLE default")[1].strip().splitlines()
    assert all(float(v) == 0.0 for v in scalars[:4])


def test_cli_example2_export_hits_bound(tmp_path):
    out = tmp_path / "ex2"
    assert main(["solve", "--example", "2", "--mesh", "tri-crisscross",
                 "--n", "4", "--p", "1", "--out", str(out), "--no-figures"]) == 0
    fields = read_fields_csv(out / "fields.csv")
    assert fields["u"].min() == 0.3


def test_cli_estimate_and_figures(tmp_path):
    out = tmp_path / "est"
    code = main(["estimate", "--example", "1", "--mesh", "tri-crisscross",
                 "--n", "2", "--p", "2", "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "estimator.json").read_text())
    assert len(doc["eta_sq"]) == 7
    header = (out / "estimator.csv").read_text().splitlines()[0]
    assert header.split(",")[:2] == ["eta1_sq", "eta2_sq"]
    for name in ("fields_u.png", "fields_y.png", "fields_z.png", "indicator.png"):
        assert (out / name).stat().st_size > 0


def test_cli_study(tmp_path):
    out = tmp_path / "study"
    code = main(["study", "--example", "1", "--mesh", "tri-crisscross",
                 "--n-list", "1,2", "--p-list", "1", "--out", str(out),
                 "--n-ref", "6", "--p-ref", "2", "--no-figures",
                 "--cache-dir", str(tmp_path / "cache")])
    assert code == 0
    lines = (out / "study.csv").read_text().splitlines()
    assert lines[0].split(",")[0] == "N"
    assert len(lines) == 3
    rel = json.loads((out / "reliability.json").read_text())
    assert rel["max_ratio"] > 0


def test_cli_tables_smoke(tmp_path):
    out = tmp_path / "tables"
    code = main(["tables", "--example", "1", "--out", str(out),
                 "--n-ref", "10", "--p-ref", "2", "--no-figures",
                 "--cache-dir", str(tmp_path / "cache")])
    assert code == 0
    for name in ("table1.csv", "table2.csv", "table3.csv", "reliability.json"):
        assert (out / name).exists()
    t1 = (out / "table1.csv").read_text().splitlines()
    assert t1[0] == "p,u_L2,y_L2,y_H1,z_L2,z_H1"
    assert len(t1) == 3
    t3 = (out / "table3.csv").read_text().splitlines()
    assert t3[0].startswith("eta1_sq")


def test_cli_tables_requires_example(tmp_path):
    assert main(["tables", "--out", str(tmp_path)]) == 1


def test_cli_numerical_failure_exit_code(tmp_path):
    # iteration cap of 1 cannot satisfy the stopping rule: exit 2
    code = main(["solve", "--example", "1", "--n", "1", "--p", "1",
                 "--mesh", "tri-crisscross", "--max-iter", "1",
                 "--out", str(tmp_path), "--no-figures"])
    assert code == 2
