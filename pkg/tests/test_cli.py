import subprocess
import sys

import pytest

from eshmem.bench import read_csv
from eshmem.cli import run_cli


def test_bench_barrier_stdout(capsys):
    assert run_cli(["bench", "barrier"]) == 0
    rows = read_csv(capsys.readouterr().out)
    assert [r["cycles"] for r in rows] == [60, 1200, 360]


def test_bench_copy_to_file(tmp_path):
    out = tmp_path / "copy.csv"
    assert run_cli(["bench", "copy", "--sizes", "8,64,4096", "--csv", str(out)]) == 0
    assert [r["size_bytes"] for r in read_csv(out.read_text())] == [8, 64, 4096]


def test_same_seed_same_bytes(capsys):
    outputs = []
    for _ in range(2):
        assert run_cli(["bench", "dotprod", "--seed", "42", "--n-per-pe", "256"]) == 0
        outputs.append(capsys.readouterr().out)
    assert outputs[0] == outputs[1]
    assert "seed=42" in outputs[0]


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "m.cfg"
    cfg.write_text("grid = 2x2\norigin = 32,8\ntiming.wand_barrier_cycles = 30\n")
    assert run_cli(["bench", "barrier", "--config", str(cfg)]) == 0
    rows = read_csv(capsys.readouterr().out)
    assert rows[0]["cycles"] == 30 and rows[0]["k"] == 4


def test_run_programs(capsys):
    assert run_cli(["run", "dotprod", "--mode", "functional"]) == 0
    assert capsys.readouterr().out.strip() == "8153.98876953125"
    assert run_cli(["run", "ring", "--mode", "functional"]) == 0
    rows = read_csv(capsys.readouterr().out)
    assert [r["exit"] for r in rows] == [(r - 1) % 16 for r in range(16)]
    assert run_cli(["run", "dotprod"]) == 0
    (row,) = read_csv(capsys.readouterr().out)
    assert row["result"] == 8153.98876953125 and row["cycles"] == 2388


def test_errors(tmp_path, capsys):
    assert run_cli(["bench", "dotprod", "--mode", "functional"]) == 1
    assert "TIMED" in capsys.readouterr().err
    assert run_cli(["bench", "nothing"]) == 2
    assert run_cli(["bench", "barrier", "--config", str(tmp_path / "none.cfg")]) == 1
    assert run_cli(["bench", "copy", "--sizes", "8,x"]) == 2
    assert run_cli(["bench", "barrier", "--seed", "-1"]) == 2


def test_props_quick(capsys):
    assert run_cli(["props"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 5 and all(line.startswith("PASS") for line in lines)


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "eshmem.cli", "bench", "copy", "--sizes", "8"],
                          capture_output=True, text=True, check=True)
    assert proc.stdout.startswith("benchmark,machine,size_bytes")


@pytest.mark.parametrize("argv", [["--help"], ["bench", "--help"]])
def test_help_mentions_columns(argv, capsys):
    assert run_cli(argv) == 0
    assert "speedup_vs_linear" in capsys.readouterr().out
