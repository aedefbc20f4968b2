"""Benchmarks over the TIMED machine, reported as CSV.

Every report row carries its raw columns (cycles, clock_hz, sizes, flop
counts) next to the derived ones, so any derived value can be recomputed
from the file alone:

* ``seconds = cycles / clock_hz``
* ``speedup = dma_cycles / cpu_cycles`` (copy)
* ``cpu_bandwidth = size_bytes / cpu_seconds`` (copy)
* ``gflops = flops / seconds / 1e9``; ``efficiency = gflops / peak_gflops``;
  ``data_rate = 4 * gflops * 1e9`` bytes/s (dot product)
"""

import csv
import io
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .collectives import (
    BARRIER_SYNC_SIZE, REDUCE_MIN_WRKDATA_SIZE, REDUCE_SYNC_SIZE, SYNC_WORD, ActiveSet, ReduceOp,
    SyncWork, barrier, barrier_all, linear_barrier_reference, reduce_to_all,
)
from .programs import dot_inputs, dotprod, load_dot_inputs
from .shmem import launch
from .timing import cpu_copy_cycles, dma_copy_cycles

DEFAULT_SIZES = [8 << i for i in range(11)]
DEFAULT_N_PER_PE = 2048


class BenchError(Exception):
    pass


@dataclass
class BenchReport:
    name: str
    machine: str
    columns: List[str]
    rows: List[dict] = field(default_factory=list)

    def add(self, **row):
        missing = set(self.columns) - {"benchmark", "machine"} - set(row)
        if missing:
            raise ValueError(f"row lacks columns {sorted(missing)}")
        self.rows.append(row)

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            full = dict(row, benchmark=self.name, machine=self.machine)
            w.writerow([_fmt(full[c]) for c in self.columns])

    def to_csv(self):
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _num(text):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_csv(text):
    """Parse CSV written by :meth:`BenchReport.write_csv`; numeric cells become numbers."""
    return [{k: _num(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(text))]


def _require_timed(machine, what):
    if not machine.timed:
        raise BenchError(f"{what} needs a TIMED machine (mode={machine.mode.value})")


def _elapsed(machine, program, *args):
    machine.reset()
    return launch(machine, program, *args).elapsed


def _set_barrier(ctx):
    psync = ctx.malloc(BARRIER_SYNC_SIZE * SYNC_WORD)
    yield from barrier(ctx, ActiveSet.all(ctx.n_pes()), psync)


def bench_barrier(machine):
    """Hardware barrier_all, the linear reference and the dissemination barrier at k = n_pes."""
    _require_timed(machine, "bench barrier")
    cfg = machine.config
    clock = cfg.timing.clock_hz
    wg = machine.workgroup
    full = wg.is_full and (wg.origin, wg.rows, wg.cols) == (cfg.origin, cfg.rows, cfg.cols)
    measured = [
        ("barrier_all", "wand" if full else "dissemination", _elapsed(machine, barrier_all)),
        ("linear_reference", "linear", _elapsed(machine, linear_barrier_reference)),
        ("barrier", "dissemination", _elapsed(machine, _set_barrier)),
    ]
    linear = measured[1][2]
    report = BenchReport("barrier", cfg.describe(),
                         ["benchmark", "machine", "barrier", "algorithm", "k", "cycles", "clock_hz",
                          "seconds", "speedup_vs_linear"])
    for name, algo, cycles in measured:
        report.add(barrier=name, algorithm=algo, k=machine.n_pes, cycles=cycles, clock_hz=clock,
                   seconds=cycles / clock,
                   speedup_vs_linear=linear / cycles if cycles else float("inf"))
    return report


def _reduce_once(ctx, op, nreduce):
    et = op.elem
    src = ctx.malloc(nreduce * et.size)
    dst = ctx.malloc(nreduce * et.size)
    psync = ctx.malloc(REDUCE_SYNC_SIZE * SYNC_WORD)
    wrk = max(nreduce // 2 + 1, REDUCE_MIN_WRKDATA_SIZE)
    pwrk = ctx.malloc(wrk * et.size)
    yield from reduce_to_all(ctx, op, dst, src, nreduce, ActiveSet.all(ctx.n_pes()),
                             SyncWork(psync, pwrk, wrk))


def bench_reduce(machine, op="SUM", elem="float32", nreduce=1):
    """Latency of one reduce_to_all over every PE, all PEs starting together."""
    _require_timed(machine, "bench reduce")
    cfg = machine.config
    clock = cfg.timing.clock_hz
    rop = ReduceOp(op, elem)
    cycles = _elapsed(machine, _reduce_once, rop, nreduce)
    report = BenchReport("reduce", cfg.describe(),
                         ["benchmark", "machine", "op", "elem", "nreduce", "k", "cycles", "clock_hz",
                          "seconds"])
    report.add(op=rop.kind, elem=rop.elem.name, nreduce=nreduce, k=machine.n_pes, cycles=cycles,
               clock_hz=clock, seconds=cycles / clock)
    return report


def bench_copy(machine, sizes=None):
    """Optimized CPU copy against the synchronous DMA copy, per transfer size."""
    sizes = list(DEFAULT_SIZES if sizes is None else sizes)
    if not sizes:
        raise BenchError("no transfer sizes given")
    if any(s < 1 for s in sizes):
        raise BenchError(f"transfer sizes must be >= 1 byte: {sizes}")
    cfg = machine.config
    t = cfg.timing
    report = BenchReport("copy", cfg.describe(),
                         ["benchmark", "machine", "size_bytes", "cpu_cycles", "dma_cycles", "clock_hz",
                          "cpu_seconds", "dma_seconds", "speedup", "cpu_bandwidth"])
    for size in sizes:
        cpu, dma = cpu_copy_cycles(size, t), dma_copy_cycles(size, t)
        cpu_s = cpu / t.clock_hz
        report.add(size_bytes=size, cpu_cycles=cpu, dma_cycles=dma, clock_hz=t.clock_hz,
                   cpu_seconds=cpu_s, dma_seconds=dma / t.clock_hz, speedup=dma / cpu,
                   cpu_bandwidth=size / cpu_s)
    return report


def run_dotprod(machine, n_per_pe=DEFAULT_N_PER_PE, seed=None):
    """Load inputs and run the dot product; returns (value, oracle, report, inputs)."""
    cfg = machine.config
    if 2 * 4 * n_per_pe > cfg.heap_limit - cfg.heap_base:
        raise BenchError(f"two {n_per_pe}-float vectors ({8 * n_per_pe} B) exceed the "
                         f"{cfg.heap_limit - cfg.heap_base} B heap")
    if n_per_pe < 1:
        raise BenchError("n_per_pe must be >= 1")
    machine.reset()
    inputs = dot_inputs(machine, n_per_pe, cfg.seed if seed is None else seed)
    load_dot_inputs(machine, inputs)
    report = launch(machine, dotprod, n_per_pe)
    values = {v for v, _ in report.exits}
    if len(values) != 1:
        raise BenchError(f"PEs disagree on the reduced value: {sorted(values)}")
    oracle = sum(float(np.dot(x.astype(np.float64), y.astype(np.float64))) for x, y in inputs)
    return values.pop(), oracle, report, inputs


def bench_dotprod(machine, n_per_pe=DEFAULT_N_PER_PE):
    _require_timed(machine, "bench dotprod")
    cfg = machine.config
    t = cfg.timing
    value, oracle, rep, _ = run_dotprod(machine, n_per_pe)
    n_pes = machine.n_pes
    cycles = rep.elapsed
    loop_end = max(end for _, end in rep.exits)
    seconds = cycles / t.clock_hz
    flops = 2 * n_per_pe * n_pes
    gflops = flops / seconds / 1e9
    peak = t.peak_flops(n_pes) / 1e9
    reduce_cycles = cycles - loop_end
    report = BenchReport("dotprod", cfg.describe(),
                         ["benchmark", "machine", "n_per_pe", "n_pes", "cycles", "clock_hz", "seconds",
                          "flops", "gflops", "peak_gflops", "efficiency", "reduce_cycles",
                          "reduce_seconds", "data_rate", "result", "oracle"])
    report.add(n_per_pe=n_per_pe, n_pes=n_pes, cycles=cycles, clock_hz=t.clock_hz, seconds=seconds,
               flops=flops, gflops=gflops, peak_gflops=peak, efficiency=gflops / peak,
               reduce_cycles=reduce_cycles, reduce_seconds=reduce_cycles / t.clock_hz,
               data_rate=4 * gflops * 1e9, result=value, oracle=oracle)
    return report
