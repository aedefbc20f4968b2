"""Built-in SPMD programs used by the benchmarks and the ``run`` subcommand."""

from math import ceil

import numpy as np

from .collectives import (
    REDUCE_MIN_WRKDATA_SIZE, REDUCE_SYNC_SIZE, SYNC_WORD, ActiveSet, ReduceOp, SyncWork,
    barrier_all, reduce_to_all,
)
from .machine import Read


def ranks(ctx):
    """Every PE returns its own rank."""
    return ctx.my_pe()


def ring(ctx):
    """Each PE puts its rank to its right neighbour and returns what arrived from the left."""
    slot = ctx.malloc(8)
    yield from barrier_all(ctx)
    yield from ctx.p(slot, ctx.my_pe(), "int64", (ctx.my_pe() + 1) % ctx.n_pes())
    yield from barrier_all(ctx)
    return (yield from ctx.g(slot, "int64", ctx.my_pe()))


def lock_counter(ctx, iterations=100):
    """Increment a counter on PE 0 under a global lock; returns the final count."""
    lock = ctx.malloc(4)
    counter = ctx.malloc(8)
    yield from barrier_all(ctx)
    for _ in range(iterations):
        yield from ctx.set_lock(lock)
        value = yield from ctx.g(counter, "int64", 0)
        yield from ctx.p(counter, value + 1, "int64", 0)
        yield from ctx.clear_lock(lock)
    yield from barrier_all(ctx)
    return (yield from ctx.g(counter, "int64", 0))


def atomic_counter(ctx, iterations=100):
    """fetch_inc a counter on PE 0; returns the final count."""
    counter = ctx.malloc(8)
    yield from barrier_all(ctx)
    for _ in range(iterations):
        yield from ctx.fetch_inc(counter, "int64", 0)
    yield from barrier_all(ctx)
    return (yield from ctx.g(counter, "int64", 0))


def dot_inputs(machine, n_per_pe, seed):
    """Per-PE float32 vectors (x, y), uniform on [0, 1) so the sum has no cancellation."""
    rng = np.random.default_rng(seed)
    return [(rng.random(n_per_pe, dtype=np.float32), rng.random(n_per_pe, dtype=np.float32))
            for _ in range(machine.n_pes)]


def load_dot_inputs(machine, inputs):
    """Host-load each PE's vectors at the first two heap allocations."""
    cfg = machine.config
    for rank, (x, y) in enumerate(inputs):
        machine.load(rank, cfg.heap_base, x.tobytes())
        machine.load(rank, cfg.heap_base + _round8(x.nbytes), y.tobytes())


def _round8(n):
    return -(-n // 8) * 8


def dotprod(ctx, n_per_pe):
    """Local multiply-add loop, then a one-float SUM reduce_to_all.

    Returns ``(dot, loop_end_clock)``; the vectors must already be loaded.
    The reduction scratch is static symmetric data, so the two vectors may
    fill the whole heap.
    """
    x = ctx.malloc(4 * n_per_pe)
    y = ctx.malloc(4 * n_per_pe)
    if x is None or y is None:
        raise MemoryError(f"two {n_per_pe}-float vectors do not fit the symmetric heap")
    partial = ctx.static(4)
    total = ctx.static(4)
    psync = ctx.static(REDUCE_SYNC_SIZE * SYNC_WORD)
    pwrk = ctx.static(REDUCE_MIN_WRKDATA_SIZE * 4)

    # operands stream through registers; their cost is the loop charge below
    xs = np.frombuffer((yield Read(ctx.local_address(x), 4 * n_per_pe, cycles=0)), np.float32)
    ys = np.frombuffer((yield Read(ctx.local_address(y), 4 * n_per_pe, cycles=0)), np.float32)
    local = np.float32(np.dot(xs.astype(np.float64), ys.astype(np.float64)))
    t = ctx.timing
    yield from ctx.compute(ceil(2 * n_per_pe / t.flops_per_cycle_per_core) + t.loop_overhead_cycles)
    loop_end = ctx.clock

    yield from ctx.p(partial, local, "float32", ctx.my_pe())
    yield from reduce_to_all(ctx, ReduceOp("SUM", "float32"), total, partial, 1,
                             ActiveSet.all(ctx.n_pes()), SyncWork(psync, pwrk))
    value = yield Read(ctx.local_address(total), 4, cycles=0)
    return float(np.frombuffer(value, np.float32)[0]), loop_end


BUILTINS = {
    "ranks": ranks,
    "ring": ring,
    "locks": lock_counter,
    "atomics": atomic_counter,
    "dotprod": dotprod,
}
