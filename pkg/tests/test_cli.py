import json
import subprocess
import sys

import pytest

from heatbem import cli
from heatbem.errors import SingularBlockError
from heatbem.parallel import get_threads, set_threads


@pytest.fixture(autouse=True)
def _restore_threads():
    n = get_threads()
    yield
    set_threads(n)


def _meta(out):
    return json.loads((out / "meta.json").read_text())


def test_check_kernels(tmp_path, capsys):
    out = tmp_path / "k"
    assert cli.run(["check-kernels", "--n-points", "500", "--out", str(out)]) == 0
    assert "0 failures" in capsys.readouterr().out
    assert (out / "check_kernels.csv").read_text().startswith("check_id,check,max_error,tolerance,failures")
    meta = _meta(out)
    assert meta["total_failures"] == 0
    assert meta["config"]["n_points"] == 500


def test_negative_alpha_flag_exits_2(tmp_path, capsys):
    assert cli.run(["check-kernels", "--alpha", "-1", "--out", str(tmp_path)]) == 2
    assert "alpha" in capsys.readouterr().err


def test_negative_alpha_in_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"alpha": -1}))
    assert cli.run(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "alpha" in capsys.readouterr().err


@pytest.mark.parametrize("argv,field", [
    (["solve", "--quad-level", "12"], "quad_level"),
    (["solve", "--nt", "0"], "partition"),
    (["solve", "--threads", "0"], "threads"),
    (["divergence", "--epsilons", "0.1,0.2,0.01"], "epsilons"),
    (["converge", "--levels", "2"], "levels"),
    (["solve", "--mesh", "/nonexistent/cube.off"], "mesh"),
])
def test_validation_names_field(tmp_path, capsys, argv, field):
    assert cli.run(argv + ["--out", str(tmp_path / "o")]) == 2
    assert field in capsys.readouterr().err


def test_bad_config_document(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    assert cli.run(["solve", "--config", str(cfg), "--dry-run"]) == 2
    assert "config" in capsys.readouterr().err
    assert cli.run(["solve", "--config", str(tmp_path / "missing.json"), "--dry-run"]) == 2


def test_unknown_command_exits_2(capsys):
    assert cli.run(["plot"]) == 2


def test_dry_run_writes_nothing(tmp_path, capsys):
    out = tmp_path / "never"
    assert cli.run(["solve", "--dry-run", "--out", str(out)]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["plan"] == "solve"
    assert not out.exists()


def test_config_then_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"alpha": 2.5, "quad_level": 1, "partition": {"N": 3}}))
    assert cli.run(["solve", "--config", str(cfg), "--quad-level", "2", "--dry-run"]) == 0
    resolved = json.loads(capsys.readouterr().out)["config"]
    assert resolved["alpha"] == 2.5
    assert resolved["quad_level"] == 2
    assert resolved["partition"] == {"T": 1.0, "N": 3, "grading": "uniform"}


def test_command_defaults(capsys):
    assert cli.run(["divergence", "--dry-run"]) == 0
    cfg = json.loads(capsys.readouterr().out)["config"]
    assert cfg["mesh"] == {"generator": "cube", "n": 4}
    assert cfg["epsilons"] == [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4]


def test_solve_outputs_are_deterministic(tmp_path, capsys):
    argv = ["solve", "--problem", "dirichlet", "--datum", "manufactured", "--cube-n", "1", "--nt", "2",
            "--quad-level", "2"]
    outs = []
    for i, threads in enumerate(("1", "4")):
        out = tmp_path / f"run{i}"
        assert cli.run(argv + ["--out", str(out), "--threads", threads]) == 0
        outs.append(out)
    for name in ("density.csv", "interior.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    lines = (outs[0] / "interior.csv").read_text().splitlines()
    assert lines[0] == "x,y,z,t,u" and len(lines) > 1
    assert (outs[0] / "density.csv").read_text().startswith("k,dof,value")
    assert "relative_interior_error" in _meta(outs[0])


def test_solve_neumann_constant(tmp_path, capsys):
    out = tmp_path / "n"
    argv = ["solve", "--problem", "neumann", "--datum", "constant", "--datum-value", "0.5", "--cube-n", "1",
            "--nt", "2", "--quad-level", "1", "--out", str(out)]
    assert cli.run(argv) == 0
    assert _meta(out)["dofs"] == 16


def test_numeric_failure_exits_3(tmp_path, capsys, monkeypatch):
    import heatbem.bie_solver as solver

    def boom(*args, **kwargs):
        raise SingularBlockError("diagonal block 1 is singular", block=1, rcond=0.0)

    monkeypatch.setattr(solver, "block_forward_solve", boom)
    argv = ["solve", "--cube-n", "1", "--nt", "1", "--quad-level", "1", "--out", str(tmp_path / "o")]
    assert cli.run(argv) == 3
    err = capsys.readouterr().err
    assert "numeric" in err and "block 1" in err


def test_bad_mesh_file_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.off"
    bad.write_text("this is not a mesh\n")
    assert cli.run(["solve", "--mesh", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "mesh" in capsys.readouterr().err


def test_small_divergence_run(tmp_path, capsys):
    out = tmp_path / "d"
    argv = ["divergence", "--cube-n", "1", "--quad-level", "2", "--epsilons", "0.1,0.01,0.001", "--out", str(out)]
    assert cli.run(argv) == 0
    rows = (out / "divergence.csv").read_text().splitlines()
    assert rows[0] == "epsilon,I_eps,gaussian_part,bounded_part"
    assert len(rows) == 4
    assert _meta(out)["slope"] < 0


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "heatbem", "check-kernels", "--n-points", "100", "--threads", "1",
                          "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "m" / "meta.json").exists()
