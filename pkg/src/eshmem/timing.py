"""Cycle-cost model for the simulated mesh.

Every constant lives in :class:`TimingParams` so the model can be
recalibrated from a config file without touching code.
"""

from dataclasses import dataclass, fields
from math import ceil

DWORD = 8


@dataclass(frozen=True)
class TimingParams:
    clock_hz: float = 6.0e8
    cpu_copy_overhead_cycles: int = 12
    cpu_cycles_per_dword: int = 2
    dma_setup_cycles: int = 120
    dma_cycles_per_2dwords: int = 9
    hop_cycles: int = 1
    remote_store_base_cycles: int = 8
    wand_barrier_cycles: int = 60
    linear_barrier_cycles_per_pe: int = 75
    dissemination_round_cycles: int = 90
    flops_per_cycle_per_core: int = 2
    poll_quantum_cycles: int = 10
    fence_cycles: int = 4
    lock_backoff_min_cycles: int = 16
    lock_backoff_max_cycles: int = 256
    loop_overhead_cycles: int = 20

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"timing.{f.name} must be strictly positive")
        if self.lock_backoff_max_cycles < self.lock_backoff_min_cycles:
            raise ValueError("timing.lock_backoff_max_cycles < lock_backoff_min_cycles")

    def peak_flops(self, n_cores):
        return n_cores * self.flops_per_cycle_per_core * self.clock_hz


DEFAULT_TIMING = TimingParams()


def hops(src, dst):
    """Manhattan distance between two (row, col) coordinates (XY routing)."""
    return abs(src[0] - dst[0]) + abs(src[1] - dst[1])


def _dwords(nbytes):
    if nbytes < 1:
        raise ValueError(f"transfer size must be >= 1 byte, got {nbytes}")
    return -(-nbytes // DWORD)


def cpu_copy_cycles(nbytes, params=DEFAULT_TIMING):
    """Hardware-loop copy with unrolled double-word loads/stores."""
    return params.cpu_copy_overhead_cycles + params.cpu_cycles_per_dword * _dwords(nbytes)


def dma_copy_cycles(nbytes, params=DEFAULT_TIMING):
    """Synchronous DMA copy: fixed setup plus per-double-word streaming cost."""
    return params.dma_setup_cycles + ceil(params.dma_cycles_per_2dwords * _dwords(nbytes) / 2)


def copy_cycles(nbytes, engine="cpu", params=DEFAULT_TIMING):
    if engine == "cpu":
        return cpu_copy_cycles(nbytes, params)
    if engine == "dma":
        return dma_copy_cycles(nbytes, params)
    raise ValueError(f"unknown copy engine {engine!r}")


def remote_transfer_cycles(src, dst, nbytes, engine="cpu", params=DEFAULT_TIMING):
    """Copy cost plus NoC traversal plus the fixed store cost.

    A transfer whose source and destination core coincide pays no hop term.
    """
    return (copy_cycles(nbytes, engine, params)
            + params.hop_cycles * hops(src, dst)
            + params.remote_store_base_cycles)


def round_up_to_poll(cycles, params=DEFAULT_TIMING):
    q = params.poll_quantum_cycles
    return -(-cycles // q) * q


def cycles_to_seconds(cycles, params=DEFAULT_TIMING):
    return cycles / params.clock_hz
