import io

from dsflow.cli import main
from dsflow.mesh import write_mesh
from dsflow.output import read_diagnostics


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    rc = main(list(argv), out, err)
    return rc, out.getvalue(), err.getvalue()


def test_verify_elements_and_patch():
    for suite in ("elements", "patch"):
        rc, out, _ = call("verify", "--suite", suite)
        assert rc == 0
        assert "FAIL" not in out and "PASS" in out


def test_usage_errors():
    assert call()[0] == 2
    rc, _, err = call("run", "--preset", "nope")
    assert rc == 2 and "nope" in err
    assert call("run")[0] == 2
    assert call("run", "--preset", "tracer_hole", "--override", "bogus=1")[0] == 2


def test_mesh_info(tmp_path, square4):
    p = tmp_path / "m.msh"
    write_mesh(square4, p)
    rc, out, _ = call("mesh-info", "--mesh", str(p))
    assert rc == 0 and "16" in out
    assert call("mesh-info", "--mesh", str(tmp_path / "none.msh"))[0] == 2


def test_run_and_restart(tmp_path):
    args = ["run", "--preset", "tracer_hole", "--override", "refinement=1", "--override", "steps=4",
            "--output", str(tmp_path)]
    rc, out, _ = call(*args, "--save-state", str(tmp_path / "s.npz"))
    assert rc == 0 and "4 steps" in out
    rc, _, _ = call(*args[:-2], "--override", "steps=6", "--output", str(tmp_path),
                    "--restart", str(tmp_path / "s.npz"))
    assert rc == 0
    assert list(read_diagnostics(tmp_path / "diagnostics.csv")["step"]) == [1, 2, 3, 4, 5, 6]
