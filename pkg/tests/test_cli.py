import csv
import io
import json
import subprocess
import sys

import pytest

import uavaoi.cli as cli
from uavaoi.formulation import SolverFailure, compute_extremes
from uavaoi.model import build_edge_weights, load_instance, random_instance
from uavaoi.tours import MultiTour, evaluate


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def _check_rows(rows, inst):
    w = build_edge_weights(inst)
    for r in rows:
        m = evaluate(MultiTour(tuple(tuple(c) for c in json.loads(r["tour"]))), w)
        assert float(r["avg_aoi_s"]) == pytest.approx(m.avg_aoi, rel=1e-12)
        assert float(r["energy_j"]) == pytest.approx(m.energy, rel=1e-12)
        assert int(r["n_cycles"]) == len(json.loads(r["tour"]))


def test_gen_is_deterministic(tmp_path):
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.json"
    assert cli.main(["gen", "--k", "10", "--seed", "3", "--out", str(a)]) == 0
    assert cli.main(["gen", "--k", "10", "--seed", "3", "--out", str(b)]) == 0
    assert cli.main(["gen", "--k", "10", "--seed", "4", "--out", str(c)]) == 0
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()
    inst = load_instance(a)
    assert inst.K == 10 and len(set(inst.sensors_w)) == 10
    assert inst.d_th == 50.0 and inst.uav.speed_V == 18.0


def test_sweep_extremes(tmp_path, capsys):
    inst_path = tmp_path / "i.json"
    cli.main(["gen", "--k", "5", "--seed", "2", "--out", str(inst_path)])
    capsys.readouterr()
    assert cli.main(["sweep", "--instance", str(inst_path), "--lambdas", "0,1"]) == 0
    rows = _rows(capsys.readouterr().out)
    inst = load_instance(inst_path)
    ext = compute_extremes(build_edge_weights(inst))
    assert [float(r["lambda"]) for r in rows] == [0.0, 1.0]
    assert float(rows[0]["energy_j"]) == pytest.approx(ext.energy_min, rel=1e-12)
    assert float(rows[1]["avg_aoi_s"]) == pytest.approx(ext.aoi_min, rel=1e-12)
    assert list(rows[0])[:7] == ["lambda", "avg_aoi_s", "energy_j", "n_cycles", "solver", "iterations", "runtime_ms"]
    _check_rows(rows, inst)


def test_sweep_keep_duplicates_refine_json(capsys):
    assert cli.main(["sweep", "--k", "4", "--seed", "1", "--lambdas", "0:0.25:1", "--keep-duplicates",
                     "--refine", "--format", "json", "--solver", "benders"]) == 0
    out = capsys.readouterr()
    rows = json.loads(out.out)
    assert len(rows) == 5 and all(r["solver"] == "benders" for r in rows)
    assert out.err.count("note:") == 1
    for r in rows:
        assert r["refined_avg_aoi_s"] <= r["avg_aoi_s"] * (1 + 1e-9)
        assert r["refined_energy_j"] <= r["energy_j"] * (1 + 1e-9)


def test_solve_with_trace(tmp_path, capsys):
    trace = tmp_path / "t.csv"
    assert cli.main(["solve", "--k", "5", "--seed", "0", "--solver", "benders", "--trace", str(trace)]) == 0
    rows = _rows(capsys.readouterr().out)
    assert len(rows) == 1 and rows[0]["solver"] == "benders"
    assert trace.read_text().startswith("iter,lb,ub,cut_kind")
    _check_rows(rows, random_instance(5, seed=0))


def test_config_errors(tmp_path, capsys):
    assert cli.main(["solve", "--lambda", "2"]) == 2
    assert cli.main(["sweep", "--k", "3", "--lambdas", "0:0:1"]) == 2
    assert cli.main(["sweep", "--k", "0"]) == 2
    assert cli.main(["solve", "--instance", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["oracle", "--ks", "9"]) == 2
    assert cli.main(["nonsense"]) == 2
    bad = tmp_path / "tour.json"
    bad.write_text('{"cycles": [[1, 2]]}')
    assert cli.main(["refine", "--k", "3", "--tour", str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_solver_failure_exit(monkeypatch, capsys):
    def boom(*a, **k):
        raise SolverFailure("no convergence", 0.5)

    monkeypatch.setattr(cli, "solve_monolithic", boom)
    assert cli.main(["solve", "--k", "3"]) == 3
    assert "no convergence" in capsys.readouterr().err


def test_oracle_small_run(capsys):
    assert cli.main(["oracle", "--instances", "2", "--ks", "3,4", "--lambdas", "0,0.5,1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2 * 3 * 2 and all(l.startswith("ok ") for l in lines)


def test_oracle_mismatch_exit(monkeypatch, capsys):
    real = cli.oracle_pareto

    class Shifted:
        def __init__(self, w):
            self.inner = real(w)

        def best(self, lam, ext):
            t, v = self.inner.best(lam, ext)
            return t, v - 1.0

    monkeypatch.setattr(cli, "oracle_pareto", Shifted)
    assert cli.main(["oracle", "--instances", "1", "--ks", "3", "--lambdas", "0.5", "--solver", "monolithic"]) == 4
    assert "MISMATCH" in capsys.readouterr().out


def test_compare_rows(capsys):
    assert cli.main(["compare", "--ks", "5"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert [(r["mode"], r["trajectory"]) for r in rows] == [
        (m, t) for m in ("multi-return", "hamiltonian", "tsp") for t in ("fly-hover", "refined")]
    _check_rows([r for r in rows if r["trajectory"] == "fly-hover"], random_instance(5, seed=0))
    by = {(r["mode"], r["trajectory"]): r for r in rows}
    assert int(by[("hamiltonian", "fly-hover")]["n_cycles"]) == 1


def test_refine_command(tmp_path, capsys):
    tour = tmp_path / "tour.json"
    tour.write_text(json.dumps(MultiTour(((1, 2), (3,))).to_json()))
    out = tmp_path / "r.json"
    assert cli.main(["refine", "--k", "3", "--seed", "2", "--tour", str(tour), "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["cycles"] == [[1, 2], [3]] and len(d["discs"]) == 3
    assert "d_th" in capsys.readouterr().err


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "uavaoi", "gen", "--k", "2"], capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["sensors"]
    r = subprocess.run([sys.executable, "-m", "uavaoi", "solve", "--lambda", "-1"], capture_output=True, text=True)
    assert r.returncode == 2
