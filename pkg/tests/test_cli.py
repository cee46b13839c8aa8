import csv
import io

import pytest

from femtool import __version__
from femtool.cli import main, parse_fraction, ConfigError
from femtool.mesh import save_mesh, uniform_rectangle_mesh


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def read_table(text):
    lines = text.splitlines()
    assert lines[0].startswith(f"# femtool {__version__} config: ")
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def test_parse_fraction():
    assert float(parse_fraction("1/32")) == 1 / 32
    assert float(parse_fraction("0.25")) == 0.25
    for bad in ("0", "-1/4", "abc", "1/0"):
        with pytest.raises(ConfigError):
            parse_fraction(bad)


def test_quad_tables(capsys):
    code, out, _ = run(capsys, "quad-tables")
    assert code == 0
    rows = read_table(out)
    assert len(rows) == 30
    row = next(r for r in rows if r["n"] == "10" and r["d"] == "7")
    assert row["gm_nodes"] == "364" and row["tensor_nodes"] == "1048576"
    assert round(float(row["error_factor"]), 2) == 67.34


def test_poisson_rates_and_determinism(capsys):
    code, out, _ = run(capsys, "poisson", "--h-seq", "1/4,1/8,1/16")
    assert code == 0
    rows = read_table(out)
    assert [r["h_target"] for r in rows] == ["1/4", "1/8", "1/16"]
    assert rows[0]["rate_L2"] == ""
    assert 1.9 < float(rows[-1]["rate_L2"]) < 2.1
    assert "wall_time" not in rows[0]
    _, again, _ = run(capsys, "poisson", "--h-seq", "1/4,1/8,1/16")
    assert again == out


def test_timing_column(capsys):
    code, out, _ = run(capsys, "nonlinear", "--h", "1/16", "--timing")
    rows = read_table(out)
    assert code == 0 and float(rows[0]["wall_time"]) >= 0
    assert float(rows[0]["residual"]) <= 1e-10


def test_convdiff_writes_field(tmp_path, capsys):
    code, out, _ = run(capsys, "convdiff", "--h", "1/8", "--out", str(tmp_path), "--seed", "7")
    assert code == 0 and out == ""
    table = (tmp_path / "convdiff.csv").read_text()
    assert "seed=7" in table.splitlines()[0]
    field = read_table((tmp_path / "convdiff_field.csv").read_text())
    assert set(field[0]) == {"x", "y", "u"}
    peak = max(field, key=lambda r: float(r["u"]))
    assert abs(float(peak["x"]) - 0.5) < 0.2 and abs(float(peak["y"]) - 1.0) < 0.2


def test_sparsity_subcommand(tmp_path, capsys):
    path = tmp_path / "mesh.txt"
    save_mesh(uniform_rectangle_mesh((0, 1), (0, 1), spacing=0.25), path)
    code, out, _ = run(capsys, "sparsity", "--mesh", str(path))
    rows = read_table(out)
    assert code == 0
    pairs = {(int(r["trial"]), int(r["test"])) for r in rows}
    # 3 x 3 interior vertices of a right-diagonal grid
    assert (4, 4) in pairs and len(pairs) == 9 + 2 * 16


@pytest.mark.parametrize(
    "argv",
    [
        ["poisson", "--h", "0"],
        ["poisson", "--h-seq", "1/8,1/4"],
        ["poisson", "--quad-degree", "4"],
        ["poisson", "--out", "/nonexistent/dir"],
        ["poisson", "--h", "1/4", "--h-seq", "1/8"],
        ["unknown"],
        ["sparsity", "--mesh", "/nonexistent/mesh.txt"],
    ],
)
def test_config_errors_exit_2(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2 and out == "" and err


def test_numerical_failure_exits_1(capsys, monkeypatch):
    from femtool import problems
    from femtool.solve import SingularMatrixError

    def broken(h, quad_degree=None):
        raise SingularMatrixError("matrix is singular")

    monkeypatch.setitem(problems.PROBLEMS, "poisson", broken)
    code, out, err = run(capsys, "poisson", "--h", "1/4")
    assert code == 1 and out == "" and "singular" in err
