"""Command-line interface: outputs, determinism, exit codes."""

import numpy as np
import pytest

from curvewell.cli import main

BASE = """
[profile]
v = -pi*pi/4 * (abs(n) <= 1)

[curve]
kind = circle
radius = 1.0

[potential]
w = x1*x1 + x2*x2

[eps]
values = 0.2 0.1

[mesh]
s_cells = 48
target_h = 0.35

[solver]
k = 2
"""


@pytest.fixture()
def config(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(BASE)
    return path


def run(config, out, *args):
    return main(["--config", str(config), "--out", str(out), *args])


def test_resonance_outputs(config, tmp_path):
    out = tmp_path / "out"
    assert run(config, out, "resonance") == 0
    res = (out / "resonance.csv").read_text().splitlines()
    assert res[0] == "quantity,value"
    rows = dict(line.split(",") for line in res[1:])
    assert rows["resonant"] == "1"
    assert float(rows["theta"]) == pytest.approx(-1.0, abs=1e-8)
    trans = (out / "transmission.csv").read_text().splitlines()
    assert trans[0] == "s,kappa,mu,upsilon"
    assert len(trans) > 1


def test_resonance_deterministic(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(config, a, "resonance")
    run(config, b, "resonance")
    for name in ("resonance.csv", "transmission.csv"):
        assert (a / name).read_text() == (b / name).read_text()


def test_solve_limit_and_eigenvector_dumps(config, tmp_path):
    out = tmp_path / "out"
    assert run(config, out, "solve", "--operator", "limit") == 0
    lines = (out / "eigenvalues.csv").read_text().splitlines()
    assert lines[0] == "operator,index,eigenvalue,residual"
    lam0 = float(lines[1].split(",")[2])
    assert lam0 == pytest.approx(2.0, abs=0.05)
    vec = (out / "eigenvector_limit_0.csv").read_text().splitlines()
    assert vec[0] == "node,x1,x2,value"


def test_solve_k_zero_header_only(config, tmp_path):
    path = tmp_path / "k0.ini"
    path.write_text(BASE.replace("k = 2", "k = 0"))
    out = tmp_path / "out"
    assert run(path, out, "solve", "--operator", "dirichlet-split") == 0
    assert (out / "eigenvalues.csv").read_text() == \
        "operator,index,eigenvalue,residual\n"


def test_solve_heps(config, tmp_path):
    out = tmp_path / "out"
    assert run(config, out, "solve", "--operator", "heps",
               "--eps", "0.2") == 0
    lines = (out / "eigenvalues.csv").read_text().splitlines()
    assert len(lines) == 3


def test_distcheck(config, tmp_path):
    out = tmp_path / "out"
    assert run(config, out, "distcheck") == 0
    lines = (out / "distcheck.csv").read_text().splitlines()
    assert lines[0] == "eps,integral,scaled_integral,error"
    assert len(lines) == 3


def test_mesh_dump(config, tmp_path):
    out = tmp_path / "out"
    assert run(config, out, "mesh-dump", "--limit") == 0
    text = (out / "mesh_limit.txt").read_text()
    assert text.startswith("# nodes ")


def test_quasimode_command(config, tmp_path):
    path = tmp_path / "q.ini"
    path.write_text(BASE.replace("values = 0.2 0.1", "values = 0.2"))
    out = tmp_path / "out"
    assert run(path, out, "quasimode") == 0
    lines = (out / "quasimode.csv").read_text().splitlines()
    assert lines[0].startswith("eps,lambda,delta,nearest_eigenvalue")
    row = lines[1].split(",")
    assert float(row[1]) == pytest.approx(2.0, abs=0.05)


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[curve]\nshape = circle\n")
    assert main(["--config", str(bad), "resonance"]) == 2
    assert main(["--config", str(tmp_path / "missing.ini"),
                 "resonance"]) == 2


def test_numerical_error_exit_code(tmp_path):
    # non-resonant profile: the limit operator with transmission
    # conditions does not exist -> numerical-failure exit code
    path = tmp_path / "nr.ini"
    path.write_text(BASE.replace("-pi*pi/4 * (abs(n) <= 1)",
                                 "1 * (abs(n) <= 1)"))
    assert main(["--config", str(path), "--out", str(tmp_path / "o"),
                 "solve", "--operator", "limit"]) == 3


def test_threads_flag(config, tmp_path):
    out = tmp_path / "out"
    assert run(config, out, "--threads", "1", "resonance") == 0
    assert main(["--config", str(config), "--threads", "0",
                 "resonance"]) == 2
