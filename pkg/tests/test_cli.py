import numpy as np
import pytest

from mfquad.harness.cli import main
from mfquad.quadrature import read_weights


def test_domains_lists_builtins(capsys):
    assert main(["domains"]) == 0
    names = capsys.readouterr().out.split()
    assert len(names) == 7 and "torus" in names


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["bogus"],
        ["nodes", "--domain", "nowhere", "--h", "0.1"],
        ["nodes", "--domain", "ellipse"],
        ["weights", "--domain", "ellipse", "--q", "4"],
        ["weights", "--domain", "ellipse", "--q", "4", "--h", "0.1", "--constraint", "Sideways"],
        ["study", "--config", "/nonexistent/config.txt"],
    ],
)
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1


def test_numerical_failure_exits_2(tmp_path):
    out = tmp_path / "w.csv"
    assert main(["weights", "--domain", "ellipse", "--method", "mfd", "--q", "8", "--h", "0.6", "--out", str(out)]) == 2


def test_nodes_weights_integrate_roundtrip(tmp_path, capsys):
    nodes = tmp_path / "n.csv"
    w = tmp_path / "w.csv"
    assert main(["nodes", "--domain", "ellipse", "--h", "0.1", "--seed", "1", "--out", str(nodes)]) == 0
    assert main(["weights", "--domain", "ellipse", "--nodes", str(nodes), "--method", "bsp", "--q", "4",
                 "--out", str(w)]) == 0
    meta, Y, wt, Z, v = read_weights(w)
    lines = w.read_text().splitlines()
    assert len(lines) == 2 + len(Y) + len(Z)
    assert abs(wt.sum() - 3 * np.pi / 4) < 1e-3
    capsys.readouterr()
    assert main(["integrate", "--domain", "ellipse", "--weights", str(w), "--function", "runge"]) == 0
    out = capsys.readouterr().out
    err = float(out.split("relative_error=")[1])
    assert err < 1e-2
    assert main(["integrate", "--domain", "ellipse", "--weights", str(w), "--function", "fundamental",
                 "--target", "boundary", "--nodes", str(nodes)]) == 0
    out = capsys.readouterr().out
    # BoundaryConstant weights only integrate this to discretization accuracy
    assert abs(float(out.split("value=")[1].split()[0]) - 1) < 1e-3


def test_study_subcommand(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("domain = ellipse\nmethod = mfd\nq_list = 4\nh_list = 0.2 0.15\nseeds = 1\n")
    out = tmp_path / "s.csv"
    assert main(["study", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 3
