import json
import math
import subprocess
import sys

import pytest

from asglimits import io as aio
from asglimits.cli import parse_grid, run, UsageError
from asglimits.core import ModelParams

ASYM = ["--theta", "1", "--P", "0.9,0.1,0.2,0.8"]


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("ASGLIMITS_OUT_DIR", str(tmp_path))
    return tmp_path


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "m.cfg"
    aio.write_config(ModelParams.create(1.0, [[0.9, 0.1], [0.2, 0.8]]), path)
    return str(path)


def body(text):
    return [line for line in text.splitlines() if not line.startswith("#")]


def test_exact(capsys):
    assert run(["exact", "--pim", "--theta", "2", "--q", "0.5,0.5", "--n", "3,2"]) == 0
    rows = body(capsys.readouterr().out)
    assert rows[0].split(",")[:4] == ["n1", "n2", "log_p", "p"]
    assert float(rows[1].split(",")[2]) == pytest.approx(math.log(1 / 6), abs=1e-14)


def test_exact_json(capsys):
    assert run(["exact", "--pim", "--theta", "2", "--q", "0.5,0.5", "--n", "1,1", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["rows"][0][3] == pytest.approx(1 / 3)
    assert "params_hash=" in doc["comment"]


def test_exact_refuses_non_pim(capsys):
    assert run(["exact", *ASYM, "--n", "1,1"]) == 1


def test_solve_to_file(out_dir, cfg_file):
    assert run(["solve", "--config", cfg_file, "--max-size", "20", "--out", "table.csv"]) == 0
    text = (out_dir / "table.csv").read_text()
    sums = [line for line in text.splitlines() if line.startswith("# size=")]
    assert len(sums) == 20
    assert all(abs(float(s.split("sum_p=")[1]) - 1) < 1e-10 for s in sums)
    table = aio.read_table_csv(out_dir / "table.csv")
    assert table.max_size == 20


def test_solve_selection_with_cache(tmp_path, capsys):
    cache = tmp_path / "cache"
    args = ["solve", "--theta", "1", "--P", "0.5,0.5,0.5,0.5", "--gamma", "-0.5,0", "--max-size", "5",
            "--n-max", "30", "--cache-dir", str(cache)]
    assert run(args) == 0
    first = capsys.readouterr().out
    assert list(cache.glob("*.npz"))
    assert run(args) == 0
    assert capsys.readouterr().out == first


def test_diffusion_estimates(out_dir):
    args = ["diffusion", *ASYM, "--samples", "400", "--samples-per-replica", "20", "--burn-in", "2",
            "--estimate-p", "1,1", "--density-at", "0.5,0.5", "--out", "est.csv", "--ensemble-out", "ens.csv"]
    assert run(args) == 0
    rows = body((out_dir / "est.csv").read_text())
    assert rows[0] == "quantity,at,log_estimate,rel_se,estimate,se"
    assert rows[1].startswith("p,1 1,") and rows[2].startswith("density,0.5 0.5,")
    assert len(body((out_dir / "ens.csv").read_text())) == 1 + 400


def test_simulate_chain_files(out_dir, cfg_file, capsys):
    assert run(["simulate-chain", "--config", cfg_file, "--start", "5,3", "--reps", "100", "--seed", "7",
                "--out", "trajs"]) == 0
    files = sorted((out_dir / "trajs").glob("traj_*.csv"))
    assert len(files) == 100
    first = body(files[0].read_text())
    assert first[0] == "step,n1,n2,event"
    assert first[1] == "0,5,3,start"
    summary = body((out_dir / "trajs" / "summary.csv").read_text())
    assert len(summary) == 101 and all(r.endswith(("1-0", "0-1")) for r in summary[1:])


def test_dirichlet_limit(capsys):
    assert run(["dirichlet-limit", "--alpha", "2,3,5", "--grid", "50:3200"]) == 0
    rows = body(capsys.readouterr().out)
    assert rows[0] == "n,sup_gap,phi_n_sup,ratio"
    gaps = [float(r.split(",")[1]) for r in rows[1:]]
    assert len(gaps) == 7
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_asymptotics_verdict(out_dir):
    assert run(["asymptotics", "--check", "theorem-p", "--y", "1,1", "--grid", "25:3200", "--source", "pim",
                "--out", "thm.csv"]) == 0
    verdict = json.loads((out_dir / "thm.csv.verdict.json").read_text())
    assert verdict["verdict"] == "pass"
    rows = body((out_dir / "thm.csv").read_text())
    assert rows[0] == "quantity,n,observed,target,abs_err,rel_err"
    assert len(rows) == 1 + 8


@pytest.mark.parametrize("check", ["pi-limit", "transitions", "stirling", "k-over-b"])
def test_asymptotics_other_checks(check, capsys):
    args = ["asymptotics", "--check", check, "--y", "1,2", "--grid", "50:800", "--draws", "2000"]
    assert run(args) == 0
    assert capsys.readouterr().out


def test_asymptotics_recursion_source(capsys):
    args = ["asymptotics", "--check", "pi-limit", *ASYM, "--y", "1,1", "--grid", "10,20,40",
            "--source", "recursion", "--format", "json"]
    assert run(args) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["reports"][0]["provenance"] == {"pi": "prob-table"}


def test_usage_errors(capsys):
    assert run(["bogus"]) == 1
    err = capsys.readouterr().err
    assert "subcommands:" in err
    assert run([]) == 1
    assert run(["exact", "--n", "1,x"]) == 1
    assert run(["exact", "--pim", "--q", "0.5,0.5", "--n", "1,1", "--workers", "0"]) == 1
    assert run(["solve", "--theta", "1", "--max-size", "3"]) == 1
    assert "--P" in capsys.readouterr().err


def test_validation_error_exit_code(capsys):
    assert run(["solve", "--theta", "1", "--P", "0.5,0.6,0.5,0.5", "--max-size", "3"]) == 1
    assert "invalid input" in capsys.readouterr().err


def test_numeric_error_exit_code(capsys):
    uniform6 = ",".join(["0.16666666666666666"] * 35 + ["0.16666666666666674"])
    assert run(["solve", "--theta", "1", "--P", uniform6, "--max-size", "60"]) == 2
    assert "DimensionTooLarge" in capsys.readouterr().err


def test_parse_grid():
    assert parse_grid("25:100") == (25, 50, 100)
    assert parse_grid("3,5,9") == (3, 5, 9)
    with pytest.raises(UsageError):
        parse_grid("5,3")
    with pytest.raises(UsageError):
        parse_grid("a:b")


@pytest.mark.parametrize(
    "argv",
    [
        ["diffusion", *ASYM, "--samples", "300", "--samples-per-replica", "10", "--burn-in", "1",
         "--estimate-p", "2,1", "--density-at", "0.4,0.6"],
        ["simulate-chain", *ASYM, "--start", "4,2", "--reps", "12"],
        ["asymptotics", "--check", "theorem-p", "--y", "1,1", "--grid", "2,4", "--source", "mc",
         "--samples", "300", "--samples-per-replica", "10", "--burn-in", "1"],
    ],
)
def test_byte_identical_outputs(argv, tmp_path, monkeypatch):
    outputs = []
    for workers, sub in ((1, "a"), (1, "b"), (3, "c")):
        monkeypatch.setenv("ASGLIMITS_OUT_DIR", str(tmp_path / sub))
        assert run(argv + ["--seed", "9", "--workers", str(workers), "--out", "res"]) == 0
        files = sorted(p for p in (tmp_path / sub).rglob("*") if p.is_file())
        outputs.append({p.relative_to(tmp_path / sub): p.read_bytes() for p in files})
    assert outputs[0] == outputs[1] == outputs[2]
    assert outputs[0]


def test_entry_point_module(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "asglimits.cli", "exact", "--pim", "--q", "0.5,0.5", "--n", "1,0"],
        capture_output=True, text=True, cwd=tmp_path,
    )
    assert proc.returncode == 0
    assert float(body(proc.stdout)[1].split(",")[3]) == pytest.approx(0.5)


def test_simulate_chain_selection_grows(out_dir):
    args = ["simulate-chain", "--theta", "1", "--P", "0.5,0.5,0.5,0.5", "--gamma", "-0.5,0",
            "--start", "3,2", "--reps", "30", "--seed", "3", "--out", "sel"]
    assert run(args) == 0
    summary = body((out_dir / "sel" / "summary.csv").read_text())
    assert len(summary) == 31 and all(r.split(",")[2] == "no" for r in summary[1:])
