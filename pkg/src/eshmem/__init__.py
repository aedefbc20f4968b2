"""Simulated 2D-mesh many-core machine with an OpenSHMEM 1.2 style runtime."""

from .bench import (
    BenchError, BenchReport, bench_barrier, bench_copy, bench_dotprod, bench_reduce, read_csv, run_dotprod,
)
from .collectives import (
    BARRIER_SYNC_SIZE, REDUCE_MIN_WRKDATA_SIZE, REDUCE_SYNC_SIZE, SYNC_VALUE, ActiveSet,
    CorruptedSyncError, ReduceMismatchError, ReduceOp, SyncWork, barrier, barrier_all,
    check_barrier_trace, linear_barrier_reference, reduce_to_all, sum_to_all,
)
from .config import ConfigError, MachineConfig, Mode, dump_config, load_config, parse_config
from .heap import HeapError, HeapOrderError, SymmetricHeap, sym_alloc, sym_align, sym_free, sym_realloc
from .machine import (
    AlignmentError, Atomic, DeadlockError, Delay, InaccessibleAddress, Machine, MachineError,
    MachineReport, Read, Wait, Wand, Write, build_machine, decode_address, encode_address,
)
from .shmem import ELEM_TYPES, ShmemCtx, ShmemError, elem_type, launch
from .timing import DEFAULT_TIMING, TimingParams, cpu_copy_cycles, dma_copy_cycles, hops
from .topology import TopologyError, Workgroup, coord_of_pe, pe_of_coord

__version__ = "0.1.0"
