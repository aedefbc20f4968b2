import math

import pytest
from hypothesis import given, settings, strategies as st

from eshmem import Mode, build_machine
from eshmem.bench import (
    BenchError, bench_barrier, bench_copy, bench_dotprod, bench_reduce, read_csv, run_dotprod,
)


def test_barrier_csv_derived_columns(timed):
    rows = read_csv(bench_barrier(timed).to_csv())
    assert [r["barrier"] for r in rows] == ["barrier_all", "linear_reference", "barrier"]
    linear = rows[1]["cycles"]
    for r in rows:
        assert r["seconds"] == r["cycles"] / r["clock_hz"]
        assert r["speedup_vs_linear"] == linear / r["cycles"]


@given(st.lists(st.integers(1, 1 << 16), min_size=1, max_size=12))
def test_copy_csv_round_trip(sizes):
    m = build_machine()
    rep = bench_copy(m, sizes)
    rows = read_csv(rep.to_csv())
    assert [r["size_bytes"] for r in rows] == sizes
    for r in rows:
        assert r["speedup"] == r["dma_cycles"] / r["cpu_cycles"]
        assert r["cpu_seconds"] == r["cpu_cycles"] / r["clock_hz"]
        assert r["dma_seconds"] == r["dma_cycles"] / r["clock_hz"]
        assert r["cpu_bandwidth"] == r["size_bytes"] / r["cpu_seconds"]


def test_copy_rejects_bad_sizes(timed):
    with pytest.raises(BenchError):
        bench_copy(timed, [])
    with pytest.raises(BenchError):
        bench_copy(timed, [0, 8])


def test_reduce_row(timed):
    (row,) = read_csv(bench_reduce(timed).to_csv())
    assert (row["op"], row["elem"], row["nreduce"], row["k"]) == ("SUM", "float32", 1, 16)
    assert row["cycles"] == 298


def test_dotprod_derived_columns(timed):
    (row,) = read_csv(bench_dotprod(timed, 512).to_csv())
    assert row["flops"] == 2 * 512 * 16
    assert row["seconds"] == row["cycles"] / row["clock_hz"]
    assert row["gflops"] == row["flops"] / row["seconds"] / 1e9
    assert row["efficiency"] == row["gflops"] / row["peak_gflops"]
    assert row["data_rate"] == 4 * row["gflops"] * 1e9
    assert math.isclose(row["result"], row["oracle"], rel_tol=1e-4)


def test_dotprod_frozen_values(timed):
    (row,) = bench_dotprod(timed, 2048).rows
    assert row["cycles"] == 2388 and row["reduce_cycles"] == 320
    assert row["result"] == 8153.98876953125


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(1, 300))
def test_dotprod_modes_agree(seed, n):
    values = [run_dotprod(build_machine(mode=mode, seed=seed), n)[:2] for mode in Mode]
    assert values[0] == values[1]
    assert math.isclose(values[0][0], values[0][1], rel_tol=1e-4)


def test_timed_only_benchmarks(functional):
    for bench in (bench_barrier, bench_reduce, bench_dotprod):
        with pytest.raises(BenchError, match="TIMED"):
            bench(functional)


def test_dotprod_too_large(timed):
    with pytest.raises(BenchError, match="exceed"):
        run_dotprod(timed, 4096)
