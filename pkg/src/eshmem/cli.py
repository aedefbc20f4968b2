"""Command-line entry point: ``eshmem bench|run|props``."""

import argparse
import sys
from dataclasses import replace

from . import bench, props
from .bench import BenchError
from .collectives import CorruptedSyncError, ReduceMismatchError
from .config import ConfigError, MachineConfig, Mode, load_config
from .heap import HeapError
from .machine import DeadlockError, MachineError, build_machine
from .programs import BUILTINS
from .shmem import ShmemError, launch

CSV_COLUMNS = """\
CSV columns (header row always present; seconds = cycles / clock_hz):
  barrier  benchmark,machine,barrier,algorithm,k,cycles,clock_hz,seconds,speedup_vs_linear
  copy     benchmark,machine,size_bytes,cpu_cycles,dma_cycles,clock_hz,cpu_seconds,
           dma_seconds,speedup,cpu_bandwidth  (speedup = dma/cpu, bandwidth in B/s)
  dotprod  benchmark,machine,n_per_pe,n_pes,cycles,clock_hz,seconds,flops,gflops,
           peak_gflops,efficiency,reduce_cycles,reduce_seconds,data_rate,result,oracle
           (data_rate = 4 bytes/flop x gflops, in B/s)
  reduce   benchmark,machine,op,elem,nreduce,k,cycles,clock_hz,seconds
"""


def _sizes(text):
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not sizes:
        raise argparse.ArgumentTypeError("no sizes given")
    return sizes


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="machine config file (key = value lines)")
    common.add_argument("--csv", metavar="PATH", help="write CSV here instead of stdout")
    common.add_argument("--seed", type=_seed, help="scheduler / input seed (overrides the config)")
    common.add_argument("--mode", choices=[m.value for m in Mode], help="execution mode (overrides the config)")

    parser = argparse.ArgumentParser(
        prog="eshmem", description="Many-core mesh simulator with an OpenSHMEM-style runtime.",
        epilog=CSV_COLUMNS, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", parents=[common], help="run a benchmark and emit CSV",
                       epilog=CSV_COLUMNS, formatter_class=argparse.RawDescriptionHelpFormatter)
    b.add_argument("benchmark", choices=["barrier", "copy", "dotprod", "reduce"])
    b.add_argument("--sizes", type=_sizes, help="copy sizes in bytes, e.g. 8,64,4096")
    b.add_argument("--n-per-pe", type=int, default=bench.DEFAULT_N_PER_PE, help="dot-product elements per PE")

    r = sub.add_parser("run", parents=[common], help="run a built-in SPMD program")
    r.add_argument("program", choices=sorted(BUILTINS))
    r.add_argument("--n-per-pe", type=int, default=bench.DEFAULT_N_PER_PE, help="dot-product elements per PE")

    p = sub.add_parser("props", parents=[common], help="run the randomized property suite")
    p.add_argument("--full", action="store_true", help="use the full acceptance-size counts")
    return parser


def machine_from_args(args):
    cfg = load_config(args.config) if args.config else MachineConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.mode is not None:
        cfg = replace(cfg, mode=Mode(args.mode))
    return build_machine(cfg)


def _emit(report, path):
    if path:
        with open(path, "w", newline="") as fh:
            report.write_csv(fh)
    else:
        report.write_csv(sys.stdout)


def cmd_bench(args):
    machine = machine_from_args(args)
    if args.benchmark == "barrier":
        report = bench.bench_barrier(machine)
    elif args.benchmark == "copy":
        report = bench.bench_copy(machine, args.sizes)
    elif args.benchmark == "dotprod":
        report = bench.bench_dotprod(machine, args.n_per_pe)
    else:
        report = bench.bench_reduce(machine)
    _emit(report, args.csv)
    return 0


def cmd_run(args):
    machine = machine_from_args(args)
    if args.program == "dotprod":
        value, oracle, rep, _ = bench.run_dotprod(machine, args.n_per_pe)
        if machine.timed:
            report = bench.BenchReport("run_dotprod", machine.config.describe(),
                                       ["benchmark", "machine", "result", "oracle", "cycles", "clock_hz", "seconds"])
            hz = machine.config.timing.clock_hz
            report.add(result=value, oracle=oracle, cycles=rep.elapsed, clock_hz=hz, seconds=rep.elapsed / hz)
            _emit(report, args.csv)
        else:
            print(repr(value))
        return 0
    rep = launch(machine, BUILTINS[args.program])
    report = bench.BenchReport("run_" + args.program, machine.config.describe(),
                               ["benchmark", "machine", "pe", "exit", "cycles", "events"])
    for rank, (ex, cyc, ev) in enumerate(zip(rep.exits, rep.cycles, rep.events)):
        report.add(pe=rank, exit=ex, cycles=cyc, events=ev)
    _emit(report, args.csv)
    return 0


def cmd_props(args):
    results = props.run_all(quick=not args.full)
    return 0 if all(r.passed for r in results) else 1


_ERRORS = (BenchError, ConfigError, HeapError, MachineError, ShmemError, CorruptedSyncError,
           ReduceMismatchError, DeadlockError, OSError, ValueError)


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    handler = {"bench": cmd_bench, "run": cmd_run, "props": cmd_props}[args.command]
    try:
        return handler(args)
    except _ERRORS as e:
        print(f"eshmem: error: {e}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
