"""Randomized property checks, runnable from the CLI (``eshmem props``).

Each check returns a :class:`CheckResult`; counts default to the full
acceptance sizes and can be scaled down for a quick run. The oracles here
(row-major enumeration, a bump-pointer model of the heap, sequential folds
on Python integers) are written independently of the code they check.
"""

import functools
import math
import operator
import random
import time
from dataclasses import dataclass, replace

import numpy as np

from .collectives import (
    BARRIER_SYNC_SIZE, REDUCE_MIN_WRKDATA_SIZE, REDUCE_SYNC_SIZE, SYNC_VALUE, SYNC_WORD,
    ActiveSet, ReduceOp, SyncWork, barrier, barrier_all, barrier_instances, check_barrier_trace,
    reduce_to_all,
)
from .config import MachineConfig, Mode
from .heap import HeapOrderError, SymmetricHeap
from .machine import build_machine
from .shmem import ELEM_TYPES, launch
from .topology import Workgroup, coord_of_pe, pe_of_coord


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        result = fn(*args, **kwargs)
        result.seconds = time.perf_counter() - t0
        return result
    return wrapper


# -- topology -----------------------------------------------------------------

def random_workgroup(rng):
    rows, cols = rng.randint(1, 8), rng.randint(1, 8)
    origin = (rng.randint(1, 64 - rows), rng.randint(0, 64 - cols))
    cells = [(origin[0] + r, origin[1] + c) for r in range(rows) for c in range(cols)]
    disabled = set(rng.sample(cells, rng.randint(0, len(cells) - 1)))
    return Workgroup(origin, rows, cols, frozenset(disabled))


@_timed
def check_topology(n_workgroups=1000, seed=0):
    rng = random.Random(seed)
    for trial in range(n_workgroups):
        wg = random_workgroup(rng)
        expected = sorted(c for c in
                          ((wg.origin[0] + r, wg.origin[1] + c) for r in range(wg.rows) for c in range(wg.cols))
                          if c not in wg.disabled)
        if wg.n_pes != len(expected):
            return CheckResult("topology", False, f"trial {trial}: n_pes {wg.n_pes} != {len(expected)}")
        for rank, coord in enumerate(expected):
            if coord_of_pe(wg, rank) != coord or pe_of_coord(wg, coord) != rank:
                return CheckResult("topology", False, f"trial {trial}: rank {rank} <-> {coord} broken")
        if sorted(pe_of_coord(wg, c) for c in expected) != list(range(len(expected))):
            return CheckResult("topology", False, f"trial {trial}: ranks not contiguous")
    return CheckResult("topology", True, f"{n_workgroups} random workgroups bijective and contiguous")


# -- symmetric heap -----------------------------------------------------------

def random_heap_ops(rng, length=24):
    """Ops refer to live blocks by allocation index so they replay identically anywhere."""
    ops, live = [], 0
    for _ in range(length):
        r = rng.random()
        if r < 0.35 or live == 0:
            ops.append(("alloc", rng.randint(1, 600)))
            live += 1
        elif r < 0.5:
            ops.append(("align", 1 << rng.randint(3, 8), rng.randint(1, 300)))
            live += 1
        elif r < 0.75:
            idx = rng.randrange(live) if rng.random() < 0.3 else live - 1
            ops.append(("free", idx))
            if idx == live - 1:
                live -= 1
        else:
            idx = rng.randrange(live) if rng.random() < 0.3 else live - 1
            ops.append(("realloc", idx, rng.choice([0, rng.randint(1, 900)])))
            if idx == live - 1 and ops[-1][2] == 0:
                live -= 1
    return ops


def replay_heap_ops(heap, ops):
    """Apply ``ops`` to ``heap``; returns one outcome per op."""
    blocks, out = [], []
    record = out.append
    alloc, align, free, realloc = heap.alloc, heap.align, heap.free, heap.realloc
    for op in ops:
        kind = op[0]
        try:
            if kind == "alloc" or kind == "align":
                off = alloc(op[1]) if kind == "alloc" else align(op[1], op[2])
                if off is not None:
                    blocks.append(off)
                record(off)
            elif op[1] >= len(blocks):
                record("skip")
            elif kind == "free":
                free(blocks[op[1]])
                blocks.pop(op[1])
                record("freed")
            else:
                res = realloc(blocks[op[1]], op[2])
                if op[2] == 0:
                    blocks.pop(op[1])
                record(res)
        except HeapOrderError:
            record("order")
    return out


def model_heap_ops(base, limit, ops):
    """Reference bump-pointer model: a list of (start, offset, end) records."""
    stack, brk, out = [], base, []

    def up(n, a):
        return (n + a - 1) // a * a

    for op in ops:
        if op[0] in ("alloc", "align"):
            align, n = (8, op[1]) if op[0] == "alloc" else (op[1], op[2])
            off = up(brk, align)
            end = off + up(n, 8)
            if end > limit:
                out.append(None)
            else:
                stack.append((brk, off, end))
                brk = end
                out.append(off)
        elif op[1] >= len(stack):
            out.append("skip")
        elif op[1] != len(stack) - 1:
            out.append("order")
        elif op[0] == "free":
            brk = stack.pop()[0]
            out.append("freed")
        elif op[2] == 0:
            brk = stack.pop()[0]
            out.append(None)
        else:
            start, off, _ = stack[-1]
            end = off + up(op[2], 8)
            if end > limit:
                out.append(None)
            else:
                stack[-1] = (start, off, end)
                brk = end
                out.append(off)
    return out


@_timed
def check_heap(n_sequences=10000, n_pes=16, seed=0):
    rng = random.Random(seed)
    machine = build_machine(MachineConfig(mode=Mode.FUNCTIONAL))
    cfg = machine.config
    ordering_errors = 0
    for trial in range(n_sequences):
        ops = random_heap_ops(rng)
        if n_pes == machine.n_pes:
            outcomes = launch(machine, lambda ctx: replay_heap_ops(ctx.heap, ops)).exits
        else:
            outcomes = [replay_heap_ops(SymmetricHeap(cfg.heap_base, cfg.heap_limit), ops)
                        for _ in range(n_pes)]
        first = outcomes[0]
        if any(o != first for o in outcomes):
            return CheckResult("heap", False, f"trial {trial}: PEs disagree on offsets")
        expected = model_heap_ops(cfg.heap_base, cfg.heap_limit, ops)
        if first != expected:
            return CheckResult("heap", False, f"trial {trial}: {first} != model {expected}")
        ordering_errors += first.count("order")
    return CheckResult("heap", True,
                       f"{n_sequences} sequences symmetric across {n_pes} PEs; "
                       f"{ordering_errors} out-of-order frees/reallocs rejected")


# -- locks --------------------------------------------------------------------

def locked_increments(ctx, iterations):
    lock = ctx.malloc(4)
    counter = ctx.malloc(8)
    yield from barrier_all(ctx)
    for _ in range(iterations):
        yield from ctx.set_lock(lock)
        ctx.pe.mark("cs_enter")
        value = yield from ctx.g(counter, "int64", 0)
        yield from ctx.p(counter, value + 1, "int64", 0)
        ctx.pe.mark("cs_exit")
        yield from ctx.clear_lock(lock)
    yield from barrier_all(ctx)
    return (yield from ctx.g(counter, "int64", 0))


def critical_sections_overlap(trace):
    """True if two PEs were ever inside the critical section at once."""
    inside = None
    for rec in sorted((r for r in trace if r.kind in ("cs_enter", "cs_exit")),
                      key=lambda r: (r.time, r.kind == "cs_enter")):
        if rec.kind == "cs_enter":
            if inside is not None:
                return True
            inside = rec.rank
        else:
            if inside != rec.rank:
                return True
            inside = None
    return False


@_timed
def check_locks(n_seeds=1000, iterations=100, first_seed=0):
    base = MachineConfig(mode=Mode.FUNCTIONAL)
    expected = None
    for seed in range(first_seed, first_seed + n_seeds):
        machine = build_machine(replace(base, seed=seed))
        rep = launch(machine, locked_increments, iterations)
        expected = machine.n_pes * iterations
        if set(rep.exits) != {expected}:
            return CheckResult("locks", False, f"seed {seed}: counter {set(rep.exits)} != {expected}")
        if critical_sections_overlap(rep.trace):
            return CheckResult("locks", False, f"seed {seed}: critical sections overlapped")
    return CheckResult("locks", True, f"{n_seeds} schedules, counter always {expected}, no overlap")


# -- reductions ---------------------------------------------------------------

_PY_OPS = {
    "SUM": operator.add, "PROD": operator.mul, "MIN": min, "MAX": max,
    "AND": operator.and_, "OR": operator.or_, "XOR": operator.xor,
}


def _wrap(v, bits):
    v &= (1 << bits) - 1
    return v - (1 << bits) if v >= 1 << (bits - 1) else v


def fold_oracle(kind, et, vectors):
    """Element-wise sequential fold over per-PE vectors (lists), in Python arithmetic."""
    fn = _PY_OPS[kind]
    out = []
    for col in zip(*vectors):
        acc = functools.reduce(fn, col)
        out.append(_wrap(acc, et.size * 8) if et.kind == "int" else acc)
    return out


def random_inputs(rng, et, shape):
    """Full-range integers (so SUM and PROD wrap), or floats in [0.5, 2) so PROD stays finite."""
    if et.kind == "int":
        info = np.iinfo(et.dtype)
        return rng.integers(info.min, info.max, size=shape, dtype=et.dtype, endpoint=True)
    return rng.uniform(0.5, 2.0, size=shape).astype(et.dtype)


def random_active_set(rng, n_pes, size):
    strides = [s for s in range(4) if (size - 1) * (1 << s) < n_pes]
    stride = int(rng.choice(strides))
    start = int(rng.integers(0, n_pes - (size - 1) * (1 << stride)))
    return ActiveSet(start, stride, size)


def _reduce_program(ctx, op, aset, plan, nmax):
    """One reduce_to_all per plan entry, vector ``v`` at slot ``v`` of src/dst.

    Inputs are host-loaded into src beforehand and results read from dst
    afterwards. Returns the dst offset.
    """
    members = aset.members(ctx.n_pes())
    et = op.elem
    vec = nmax * et.size
    src = ctx.malloc(len(plan) * vec)
    dst = ctx.malloc(len(plan) * vec)
    psync = ctx.malloc(REDUCE_SYNC_SIZE * SYNC_WORD)
    # room for a whole vector per exchange slot (2 per round plus the fold slot)
    rounds = max(len(members).bit_length() - 1, 1)
    wrk_elems = max(nmax * (2 * rounds + 1), REDUCE_MIN_WRKDATA_SIZE)
    pwrk = ctx.malloc(wrk_elems * et.size)
    if ctx.my_pe() in members:
        sync = SyncWork(psync, pwrk, wrk_elems)
        for v, n in enumerate(plan):
            yield from reduce_to_all(ctx, op, dst + v * vec, src + v * vec, n, aset, sync)
    return dst


def applicable_ops():
    for kind in _PY_OPS:
        for et in ELEM_TYPES.values():
            if kind in ("AND", "OR", "XOR") and et.kind != "int":
                continue
            yield kind, et


@_timed
def check_reductions(n_vectors=50, ks=range(1, 17), max_len=8, seed=0, mode=Mode.FUNCTIONAL):
    rng = np.random.default_rng(seed)
    checked = 0
    for kind, et in applicable_ops():
        op = ReduceOp(kind, et)
        for k in ks:
            machine = build_machine(MachineConfig(mode=mode, seed=int(rng.integers(1 << 63))))
            aset = random_active_set(rng, machine.n_pes, k)
            plan = [int(n) for n in rng.integers(1, max_len + 1, size=n_vectors)]
            data = random_inputs(rng, et, (n_vectors, machine.n_pes, max_len))
            src = machine.config.heap_base  # the program's first allocation
            for rank in range(machine.n_pes):
                machine.load(rank, src, data[:, rank, :].tobytes())
            rep = launch(machine, _reduce_program, op, aset, plan, max_len)
            members = aset.members(machine.n_pes)
            results = {m: np.frombuffer(machine.peek(m, rep.exits[m], data[:, 0, :].nbytes), et.dtype)
                       .reshape(n_vectors, max_len).tolist() for m in members}
            for v, n in enumerate(plan):
                want = fold_oracle(kind, et, [row[:n] for row in data[v, members].tolist()])
                for m in members:
                    got = results[m][v][:n]
                    if et.kind == "int":
                        ok = got == want
                    else:
                        ok = all(math.isclose(g, w, rel_tol=1e-5) for g, w in zip(got, want))
                    if not ok:
                        return CheckResult("reductions", False,
                                           f"{kind}/{et.name} k={k} {aset} vector {v} PE {m}: {got} != {want}")
                checked += 1
    return CheckResult("reductions", True, f"{checked} reductions match the sequential fold")


# -- barriers -----------------------------------------------------------------

def _subset_barriers(ctx, sets):
    psync = ctx.malloc(BARRIER_SYNC_SIZE * SYNC_WORD)
    me = ctx.my_pe()
    for aset in sets:
        if me in aset.members(ctx.n_pes()):
            yield from barrier(ctx, aset, psync)
        # a different active set may reuse pSync only after everyone is done with it
        yield from barrier_all(ctx)
    return psync


@_timed
def check_barriers(n_barriers=1000, seed=0, modes=(Mode.FUNCTIONAL, Mode.TIMED)):
    rng = np.random.default_rng(seed)
    for mode in modes:
        machine = build_machine(MachineConfig(mode=mode, seed=seed))
        n = machine.n_pes
        sets = [random_active_set(rng, n, int(rng.integers(1, n + 1))) for _ in range(n_barriers)]
        rep = launch(machine, _subset_barriers, sets)
        bad = check_barrier_trace(rep.trace)
        if bad:
            return CheckResult("barriers", False, f"{mode.value}: exit before entry in {bad[:3]}")
        instances = barrier_instances(rep.trace)
        subset = {ident: ranks for ident, ranks in instances.items() if ident[0][0] == "set"}
        if sum(1 for _ in subset) == 0 or len([i for i in instances if i[0] == ("all",)]) != n_barriers:
            return CheckResult("barriers", False, f"{mode.value}: trace lacks barrier instances")
        psync = rep.exits[0]
        for rank in range(n):
            words = np.frombuffer(machine.peek(rank, psync, BARRIER_SYNC_SIZE * SYNC_WORD), "<i8")
            if (words != SYNC_VALUE).any():
                return CheckResult("barriers", False, f"{mode.value}: PE {rank} pSync not reset: {words}")
    return CheckResult("barriers", True,
                       f"{n_barriers} random-subset barriers per mode, no exit before all entered")


ALL_CHECKS = {
    "topology": check_topology,
    "heap": check_heap,
    "locks": check_locks,
    "reductions": check_reductions,
    "barriers": check_barriers,
}

QUICK = {
    "topology": dict(n_workgroups=200),
    "heap": dict(n_sequences=500),
    "locks": dict(n_seeds=20),
    "reductions": dict(n_vectors=5, ks=(1, 2, 3, 5, 8, 13, 16)),
    "barriers": dict(n_barriers=200),
}


def run_all(quick=True, echo=print):
    results = []
    for name, fn in ALL_CHECKS.items():
        res = fn(**(QUICK[name] if quick else {}))
        echo(res.line())
        results.append(res)
    return results
