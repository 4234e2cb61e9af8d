import subprocess
import sys

import pytest

from filicon.cli import main, parse_box, parse_lambdas, UsageError
from filicon.systems import builtin, dump_system


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def kv(text):
    return dict(l.split("=", 1) for l in text.splitlines() if "=" in l and not l.startswith("#"))


def test_validate_exit_codes(capsys):
    code, out, _ = run(capsys, "validate", "familyH")
    assert code == 2
    d = kv(out)
    assert d["witness"] == "found" and float(d["witness_separation"]) >= 0.9
    assert abs(float(d["witness_base_x"])) <= 0.05 and float(d["witness_base_lambda"]) == 0.0
    assert run(capsys, "validate", "--system", "systemA")[0] == 0
    assert run(capsys, "validate", "--system", "systemB")[0] == 0


def test_malformed_file_exit_1(capsys, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: x\ndims: 1\nlambda_range: [0, 1]\nwindow: [[-1, 1]]\npieces:\n  - components: ['1 +']\n")
    code, out, err = run(capsys, "validate", str(bad))
    assert code == 1 and out == ""
    assert "bad.yaml:6" in err
    assert run(capsys, "validate", str(tmp_path / "missing.yaml"))[0] == 1
    assert run(capsys, "validate", "nosuchsystem")[0] == 1


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        main(["validate"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["frobnicate", "systemA"])
    assert info.value.code == 1
    assert run(capsys, "simulate", "systemA")[0] == 1  # no --x0
    assert run(capsys, "simulate", "systemA", "--x0", "0", "--lambda", "2")[0] == 1
    assert run(capsys, "isolate", "systemA", "--nbox", "[-2,1]")[0] == 1
    assert run(capsys, "sweep", "systemA", "--lambda", "0.5")[0] == 1
    assert run(capsys, "simulate", "systemA", "--x0", "3")[0] == 1
    assert run(capsys, "isolate", "systemA", "--plot")[0] == 1


def test_simulate(capsys):
    code, out, _ = run(capsys, "simulate", "systemC", "--x0", "-0.5", "--T", "1", "--step", "0.01", "--sel", "sliding")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "t,x1,v1,lambda,delta_cert"
    assert len(lines) == 102
    assert float(lines[-1].split(",")[1]) == pytest.approx(-0.18394, abs=0.01)


def test_isolate_system_b(capsys, tmp_path):
    code, out, _ = run(capsys, "isolate", "systemB", "--out", str(tmp_path))
    assert code == 0
    d = kv(out)
    assert d["verdict"] == "Isolating"
    assert (tmp_path / "isolation_report.txt").read_text() == out
    inv = (tmp_path / "invariant_cells.txt").read_text().split()
    assert len(inv) == int(d["invariant_cells"])
    edges = (tmp_path / "multiflow_edges.txt").read_text().splitlines()
    assert edges[0].startswith("# window=-1,1 subdivisions=512")


def test_sweep_system_a(capsys):
    code, out, _ = run(capsys, "sweep", "systemA")
    assert code == 0
    rows = [l for l in out.splitlines() if not l.startswith("#")]
    assert rows[0] == "lambda,verdict,inv_cell_count,min_boundary_distance,grid_cells,h_tau"
    assert len(rows) == 22
    assert all(r.split(",")[1] == "Isolating" for r in rows[1:])
    assert "# eps_star=1" in out


def test_omega_system_c(capsys):
    code, out, _ = run(capsys, "omega", "systemC", "--x0", "-0.5")
    assert code == 0
    d = kv(out)
    cells = [int(l) for l in out.splitlines() if l.isdigit()]
    assert len(cells) == int(d["omega_cells"]) > 0
    assert all(abs(c - 256) <= 2 for c in cells)


def test_plot_outputs(capsys, tmp_path):
    assert run(capsys, "simulate", "planarDemo", "--x0", "0.5,0.5", "--out", str(tmp_path), "--plot")[0] == 0
    assert run(capsys, "isolate", "planarDemo", "--grid", "16", "--out", str(tmp_path), "--plot")[0] == 0
    assert run(capsys, "sweep", "systemC", "--lambda", "0,1", "--out", str(tmp_path), "--plot")[0] == 0
    assert run(capsys, "omega", "systemC", "--x0", "-0.5", "--out", str(tmp_path), "--plot")[0] == 0
    for name in ("trajectory.png", "isolation.png", "sweep.png", "omega.png"):
        data = (tmp_path / name).read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"


def _run_all(root):
    cmds = [
        ["validate", "familyH"],
        ["simulate", "systemB", "--x0", "-0.3", "--lambda", "0.2", "--seed", "7"],
        ["isolate", "systemC", "--plot"],
        ["sweep", "systemB", "--lambda", "0,0.5,1", "--plot"],
        ["omega", "systemC", "--x0", "-0.5", "--plot"],
    ]
    outputs = {}
    for i, c in enumerate(cmds):
        d = root / str(i)
        proc = subprocess.run([sys.executable, "-m", "filicon", *c, "--out", str(d)], capture_output=True)
        outputs[f"{i}.stdout"] = proc.stdout
        for f in sorted(d.iterdir()):
            outputs[f"{i}/{f.name}"] = f.read_bytes()
    return outputs


def test_determinism(tmp_path):
    a = _run_all(tmp_path / "a")
    b = _run_all(tmp_path / "b")
    assert a.keys() == b.keys()
    assert [k for k in a if a[k] != b[k]] == []


def test_system_file_path(capsys, tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(dump_system(builtin("systemC")))
    code, out, _ = run(capsys, "isolate", "--system", str(path))
    assert code == 0 and kv(out)["verdict"] == "Isolating"


def test_flag_parsers():
    assert parse_lambdas("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_lambdas("0, 0.5") == [0.0, 0.5]
    with pytest.raises(UsageError):
        parse_lambdas("0:1")
    assert parse_box("[-1,1];[-0.5,0.5]", 2).as_pairs() == [[-1.0, 1.0], [-0.5, 0.5]]
    with pytest.raises(UsageError):
        parse_box("[-1,1]", 2)
