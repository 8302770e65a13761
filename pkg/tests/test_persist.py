import csv
import json
import re
import subprocess
from pathlib import Path

import numpy as np
import pytest

from nlkg import cli
from nlkg.evolution import RECORD_COLUMNS, EvolveConfig, box_state, evolve
from nlkg.field_core import BoxField, BoxGrid, RadialField, RadialGrid
from nlkg.functionals import (Landscape, ScalingPair, StatePair, diagnostic_columns,
                              diagnostics, diagnostics_to_csv, landscape)
from nlkg.harness import KGAP_COLUMNS, SCAN_COLUMNS, SWEEP_COLUMNS
from nlkg.persist import LineSnapshot, load_snapshot, save_snapshot, write_csv, write_json

DOCS = Path(__file__).resolve().parents[1] / "docs" / "interfaces.md"


def documented_columns():
    """Section name -> list of column names from the tables in docs/interfaces.md."""
    out, name = {}, None
    for line in DOCS.read_text().splitlines():
        if line.startswith("### "):
            name = line[4:].strip()
            out[name] = []
        elif line.startswith("## "):
            name = None
        elif name and line.startswith("| `"):
            cell = line.split("|")[1]
            out[name].extend(re.findall(r"`([^`]+)`", cell))
    return out


def _header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def test_documented_columns_match_code():
    doc = documented_columns()
    expected = {
        "landscape": list(Landscape.COLUMNS),
        "record": list(RECORD_COLUMNS),
        "groundstate report": list(cli.GROUNDSTATE_COLUMNS),
        "classify": list(cli.CLASSIFY_COLUMNS),
        "sweep": list(SWEEP_COLUMNS),
        "kgap audit": list(KGAP_COLUMNS),
        "equivalence audit": list(cli.EQUIVALENCE_COLUMNS),
        "appendix-a scan": list(SCAN_COLUMNS),
    }
    for name, cols in expected.items():
        assert doc[name] == cols, name
    # P1 .. Pd and XR1 .. XRd are written as ranges
    assert doc["diagnostics"] == ["t", "P1", "Pd", "XR1", "XRd", "VR", "ER"]
    for d in (1, 2, 3):
        cols = diagnostic_columns(d)
        assert cols == (["t"] + [f"P{i}" for i in range(1, d + 1)]
                        + [f"XR{i}" for i in range(1, d + 1)] + ["VR", "ER"])
    assert set(doc) == set(expected) | {"diagnostics"}


def test_written_headers(tmp_path, gs1, octic):
    ls = landscape(gs1.Q, ScalingPair(1, 0, 1), np.linspace(-0.2, 0.2, 5), octic)
    ls.to_csv(tmp_path / "ls.csv")
    assert tuple(_header(tmp_path / "ls.csv")) == Landscape.COLUMNS
    box = BoxGrid(1, 40.0, 256)
    s = StatePair(BoxField(box, np.exp(-box.radius**2)), BoxField(box, np.zeros(box.shape)))
    diagnostics_to_csv(tmp_path / "dg.csv", [(0.0, diagnostics(s, octic, 5.0))], 1)
    assert _header(tmp_path / "dg.csv") == diagnostic_columns(1)
    rec = evolve(box_state(s.u0, s.u1), octic, EvolveConfig(T=0.5, dt=0.05))
    rec.to_csv(tmp_path / "rec.csv")
    assert tuple(_header(tmp_path / "rec.csv")) == RECORD_COLUMNS
    rows = list(csv.reader(open(tmp_path / "rec.csv")))[1:]
    assert [float(x) for x in rows[0]] == rec.rows()[0]


@pytest.mark.parametrize("kind", ["radial", "box1", "box3", "line"])
def test_snapshot_roundtrip(tmp_path, kind, rng):
    p = tmp_path / "snap.bin"
    if kind == "radial":
        g = RadialGrid(3, 12.5, 333)
        fields = [RadialField(g, rng.standard_normal(g.n))]
    elif kind == "line":
        snap = LineSnapshot(8.0, 128, [rng.standard_normal(128), rng.standard_normal(128)])
        save_snapshot(p, snap)
        back = load_snapshot(p)
        assert back.R == 8.0 and back.n == 128
        for a, b in zip(snap.components, back.components):
            assert a.tobytes() == b.tobytes()
        return
    else:
        d = 1 if kind == "box1" else 3
        g = BoxGrid(d, 7.25, 16 if d == 3 else 512)
        fields = [BoxField(g, rng.standard_normal(g.shape)) for _ in range(2)]
    save_snapshot(p, *fields)
    back = load_snapshot(p)
    assert len(back) == len(fields)
    for a, b in zip(fields, back):
        assert a.grid == b.grid and a.values.tobytes() == b.values.tobytes()
    raw = p.read_bytes()
    assert raw[:5] == b"NLKG1"
    head = np.frombuffer(raw, "<f8", count=5, offset=5)
    assert head[1] == len(fields) and len(raw) == 45 + 8 * sum(f.values.size for f in fields)


def test_snapshot_errors(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"XXXXX" + bytes(40))
    with pytest.raises(ValueError):
        load_snapshot(bad)
    with pytest.raises(OSError, match="missing.bin"):
        load_snapshot(tmp_path / "missing.bin")
    g = RadialGrid(1, 5.0, 8)
    with pytest.raises(ValueError):
        save_snapshot(tmp_path / "x.bin", RadialField(g, np.zeros(8)),
                      RadialField(RadialGrid(1, 6.0, 8), np.zeros(8)))
    with pytest.raises(OSError, match="nodir"):
        write_csv(tmp_path / "nodir" / "x.csv", ["a"], [[1.0]])


def test_json_and_csv_helpers(tmp_path):
    p = write_json(tmp_path / "s.json", {"b": np.float64(0.1), "a": np.int64(3),
                                         "c": [np.bool_(True), float("inf")]})
    assert json.loads(p.read_text()) == {"a": 3, "b": 0.1, "c": [True, "inf"]}
    q = write_csv(tmp_path / "t.csv", ["x", "y"], [[0.1, "lab"]])
    assert q.read_text().splitlines() == ["x,y", "0.1,lab"]


# ---------------------------------------------------------------------------
# command line

def run(argv, tmp_path):
    return cli.dispatch(list(argv) + ["--out-dir", str(tmp_path)])


def test_cli_usage_errors(tmp_path, capsys):
    assert cli.dispatch([]) == 2
    assert cli.dispatch(["nosuch"]) == 2
    assert run(["groundstate", "--model", "bogus:3", "--dim", "1"], tmp_path) == 2
    assert run(["groundstate", "--dim", "1"], tmp_path) == 2
    assert run(["exponents", "--dim", "2", "--p1", "3/2", "--p2", "4"], tmp_path) == 2
    assert cli.dispatch(["--help"]) == 0


def test_cli_exponents_exit_code(tmp_path):
    # d = 5 at the top of the p2 window: equalities hold but beta < 0 is reported
    code = run(["exponents", "--dim", "5", "--p1", "29/35", "--p2", "4/3", "--report", "r.json"], tmp_path)
    rep = json.loads((tmp_path / "r.json").read_text())
    assert code == (0 if rep["passed"] else 1)
    assert "failures" in rep


def test_cli_groundstate_outputs(tmp_path):
    code = run(["groundstate", "--model", "power:8", "--dim", "1", "--rmax", "25", "--n", "4096",
                "--out", "q.bin", "--report", "gs.csv"], tmp_path)
    assert code == 0
    assert tuple(_header(tmp_path / "gs.csv")) == cli.GROUNDSTATE_COLUMNS
    summ = json.loads((tmp_path / "gs.json").read_text())
    assert summ["residual_ok"] and summ["k_table_ok"]
    (Q,) = load_snapshot(tmp_path / "q.bin")
    assert Q.grid == RadialGrid(1, 25.0, 4096)
    assert run(["classify", "--init", str(tmp_path / "q.bin"), "--model", "power:8",
                "--m", str(summ["m"] * 1.001), "--out", "cl.csv"], tmp_path) == 0
    assert tuple(_header(tmp_path / "cl.csv")) == cli.CLASSIFY_COLUMNS
    assert run(["landscape", "--init", str(tmp_path / "q.bin"), "--model", "power:8",
                "--lam-min", "-0.2", "--lam-max", "0.2", "--count", "5", "--out", "ls.csv"],
               tmp_path) == 0
    assert tuple(_header(tmp_path / "ls.csv")) == Landscape.COLUMNS


def test_cli_evolve_summary(tmp_path):
    code = run(["evolve", "--init", "scaled-groundstate:0.5", "--model", "power:8", "--dim", "1",
                "--rmax", "25", "--nr", "4096", "--T", "2", "--n", "1024",
                "--out-record", "rec.csv", "--out-final", "fin.bin", "--summary", "run.json"],
               tmp_path)
    assert code == 0
    summ = json.loads((tmp_path / "run.json").read_text())
    assert summ["outcome"] in ("Dispersed", "BlewUp", "Undecided")
    for key in ("stop_reason", "t_end", "reliable", "energy_drift", "certificates"):
        assert key in summ
    assert tuple(_header(tmp_path / "rec.csv")) == RECORD_COLUMNS
    u0, u1 = load_snapshot(tmp_path / "fin.bin")
    assert u0.grid == BoxGrid(1, 80.0, 1024)


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "scan.cfg"
    cfg.write_text("# scan settings\ndim = 3\nalpha=-1\nbeta = 3\nm = 3.767\nout = scan.csv\n")
    assert run(["appendix-a", "--config", str(cfg)], tmp_path) == 0
    assert tuple(_header(tmp_path / "scan.csv")) == SCAN_COLUMNS
    summ = json.loads((tmp_path / "scan.json").read_text())
    assert summ["m_unbounded"] and summ["m_reference"] == 3.767
    # explicit flags win over the file
    assert run(["appendix-a", "--config", str(cfg), "--out", "other.csv"], tmp_path) == 0
    assert (tmp_path / "other.csv").exists()
    bad = tmp_path / "bad.cfg"
    bad.write_text("dimension = 3\n")
    assert run(["appendix-a", "--config", str(bad), "--dim", "3", "--alpha", "-1", "--beta", "3"],
               tmp_path) == 2
    assert run(["appendix-a", "--config", str(tmp_path / "none.cfg")], tmp_path) == 2
    # admissible pairs are refused as a precondition error
    assert run(["appendix-a", "--dim", "3", "--alpha", "1", "--beta", "0"], tmp_path) == 2


def test_cli_audit_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        code = cli.dispatch(["audit", "--model", "power:8", "--dim", "1", "--rmax", "25",
                             "--nr", "4096", "--fields", "20", "--seed", "7", "--out", "a.csv",
                             "--out-dir", str(d)])
        assert code == 0
        outs.append(((d / "a.csv").read_bytes(), (d / "a.json").read_bytes()))
    assert outs[0] == outs[1]
    assert tuple(_header(tmp_path / "run0" / "a.csv")) == KGAP_COLUMNS
    summ = json.loads(outs[0][1])
    assert summ["passed"] and summ["failures"] == []


def test_cli_summary_lands_next_to_nested_csv(tmp_path):
    target = tmp_path / "deep" / "dir" / "a.csv"
    code = cli.dispatch(["audit", "--model", "power:8", "--dim", "1", "--rmax", "25",
                         "--nr", "4096", "--fields", "5", "--out", str(target),
                         "--out-dir", str(tmp_path / "elsewhere")])
    assert code == 0
    assert target.exists() and target.with_suffix(".json").exists()
    assert not (tmp_path / "elsewhere" / "a.json").exists()


def test_cli_equivalence_audit(tmp_path):
    code = run(["audit", "--kind", "equivalence", "--model", "power:8", "--dim", "1",
                "--rmax", "25", "--nr", "4096", "--fields", "10", "--out", "eq.csv"], tmp_path)
    assert code == 0
    assert tuple(_header(tmp_path / "eq.csv")) == cli.EQUIVALENCE_COLUMNS


def test_cli_sweep_no_evolve(tmp_path):
    code = run(["sweep", "--model", "power:8", "--dim", "1", "--rmax", "25", "--nr", "4096",
                "--cs", "0.5,1.2", "--bumps", "3", "--no-evolve", "--out", "sw.csv"], tmp_path)
    assert code == 0
    assert tuple(_header(tmp_path / "sw.csv")) == SWEEP_COLUMNS
    assert "passed" in json.loads((tmp_path / "sw.json").read_text())


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("NLKG_OUT_DIR", str(tmp_path / "env"))
    assert cli.dispatch(["exponents", "--dim", "3", "--p1", "22/15", "--p2", "4",
                         "--report", "r.json"]) in (0, 1)
    assert (tmp_path / "env" / "r.json").exists()


def test_console_script():
    res = subprocess.run(["nlkg", "exponents", "--dim", "2", "--p1", "1", "--p2", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 2 and "ParamOutOfRange" in res.stderr
