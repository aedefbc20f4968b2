"""Barriers and reductions.

* ``barrier_all`` uses the hardware wait-on-AND when the workgroup is the
  whole, fully working chip and a dissemination barrier otherwise.
* ``barrier`` is a dissemination barrier over an OpenSHMEM active set.
* ``linear_barrier_reference`` is the gather-then-release software barrier
  the hardware barrier is benchmarked against.
* ``reduce_to_all`` is recursive doubling; extra members of a
  non-power-of-two set fold into a partner first and get the result back
  at the end.

All synchronization words are 64-bit counters. A signal adds to the
partner's counter and a wait consumes from its own, so an early signal from
a partner that has already entered the next collective is never lost.
Between calls every pSync word holds :data:`SYNC_VALUE`.
"""

import functools
from dataclasses import dataclass
from functools import reduce as _fold

import numpy as np

from .machine import Atomic, Read, Wait, Wand, Write
from .shmem import ShmemError, elem_type
from .timing import cpu_copy_cycles

SYNC_VALUE = 0
SYNC_WORD = 8
# Large enough for 4096 PEs, the most the 6-bit coordinate fields can address.
BARRIER_SYNC_SIZE = 2 * 12
REDUCE_SYNC_SIZE = 2 * 12
REDUCE_MIN_WRKDATA_SIZE = 16

# Word indices into the runtime-private area just below the heap.
_ALL_DISSEM = 0
_LINEAR_ARRIVE = 24
_LINEAR_RELEASE = 25


class CorruptedSyncError(ShmemError):
    pass


class ReduceMismatchError(ShmemError):
    pass


@dataclass(frozen=True)
class ActiveSet:
    pe_start: int
    log_pe_stride: int
    pe_size: int

    def members(self, n_pes):
        return list(_members(self, n_pes))

    @classmethod
    def all(cls, n_pes):
        return cls(0, 0, n_pes)


@functools.lru_cache(maxsize=1024)
def _members(aset, n_pes):
    if aset.pe_start < 0 or aset.log_pe_stride < 0 or aset.pe_size < 1:
        raise ShmemError(f"invalid active set {aset}")
    last = aset.pe_start + (aset.pe_size - 1) * (1 << aset.log_pe_stride)
    if last >= n_pes:
        raise ShmemError(f"active set {aset} reaches PE {last} >= n_pes={n_pes}")
    stride = 1 << aset.log_pe_stride
    return tuple(aset.pe_start + j * stride for j in range(aset.pe_size))


@dataclass(frozen=True)
class SyncWork:
    """pSync and pWrk offsets; ``pwrk_elems`` is pWrk's length if known.

    Without a length only the guaranteed minimum of
    ``REDUCE_MIN_WRKDATA_SIZE`` elements is assumed, which keeps chunks
    small. Pass the real length to let reductions move larger chunks.
    """
    psync: int
    pwrk: int = None
    pwrk_elems: int = None


_OPS = {
    "SUM": np.add, "PROD": np.multiply, "MIN": np.minimum, "MAX": np.maximum,
    "AND": np.bitwise_and, "OR": np.bitwise_or, "XOR": np.bitwise_xor,
}
BITWISE = ("AND", "OR", "XOR")


@dataclass(frozen=True)
class ReduceOp:
    kind: str
    elem: object = "float32"

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in _OPS:
            raise ShmemError(f"unknown reduction {self.kind!r}")
        et = elem_type(self.elem)
        if kind in BITWISE and et.kind != "int":
            raise ShmemError(f"{kind} reduction needs an integer type, got {et.name}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "elem", et)

    def apply(self, a, b):
        if self.elem.kind == "int":
            # integer arrays wrap silently; only floats can raise overflow warnings
            return _OPS[self.kind](a, b)
        with np.errstate(over="ignore"):
            return _OPS[self.kind](a, b)

    def fold(self, arrays):
        """Sequential left fold, the reference the parallel schedule must match."""
        return _fold(self.apply, arrays)


def _log2_ceil(k):
    return (k - 1).bit_length()


def barrier_sync_words(k):
    return _log2_ceil(k)


def reduce_sync_words(k):
    rounds = k.bit_length() - 1
    return rounds + (2 if k & (k - 1) else 0)


def _runtime_sync(ctx):
    return ctx.machine.config.runtime_base


def _enter(ctx, key):
    n = ctx._collective_counts.get(key, 0)
    ctx._collective_counts[key] = n + 1
    ctx.pe.mark("barrier_enter", key=key, instance=n)
    return n


def _exit(ctx, key, n):
    ctx.pe.mark("barrier_exit", key=key, instance=n)


def _dissemination(ctx, members, index, sync_base, poll=False):
    """ceil(log2 k) rounds; in round r member i signals member i + 2**r (mod k)."""
    m = ctx.machine
    k = len(members)
    cycles = ctx.timing.dissemination_round_cycles
    for r in range(_log2_ceil(k)):
        partner = members[(index + (1 << r)) % k]
        yield Atomic(m.address(partner, sync_base + r * SYNC_WORD), "add", 1, width=64, cycles=cycles)
        yield Wait(ctx.local_address(sync_base + r * SYNC_WORD), "GE", 1, "<q", consume=1, poll=poll)


def barrier_all(ctx):
    """Full-workgroup barrier."""
    m = ctx.machine
    key = ("all",)
    n = _enter(ctx, key)
    if m.n_pes > 1:
        wg, cfg = m.workgroup, m.config
        if wg.is_full and (wg.origin, wg.rows, wg.cols) == (cfg.origin, cfg.rows, cfg.cols):
            yield Wand()
        else:
            yield from _dissemination(ctx, range(m.n_pes), ctx.my_pe(),
                                      _runtime_sync(ctx) + _ALL_DISSEM * SYNC_WORD)
    _exit(ctx, key, n)


def linear_barrier_reference(ctx):
    """Root gathers k-1 arrivals, then releases the others one at a time."""
    m = ctx.machine
    per_pe = ctx.timing.linear_barrier_cycles_per_pe
    base = _runtime_sync(ctx)
    arrive, release = base + _LINEAR_ARRIVE * SYNC_WORD, base + _LINEAR_RELEASE * SYNC_WORD
    key = ("linear",)
    n = _enter(ctx, key)
    k = m.n_pes
    if ctx.my_pe() == 0:
        yield from ctx.compute(per_pe)
        yield Wait(ctx.local_address(arrive), "GE", k - 1, "<q", consume=k - 1, poll=False)
        for j in range(1, k):
            yield Atomic(m.address(j, release), "add", 1, width=64, cycles=per_pe)
    else:
        yield Atomic(m.address(0, arrive), "add", 1, width=64, cycles=per_pe)
        yield Wait(ctx.local_address(release), "GE", 1, "<q", consume=1, poll=False)
    _exit(ctx, key, n)


def _check_psync(ctx, psync, nwords, allowed):
    if not nwords:
        return
    ctx._sym(psync, nwords * SYNC_WORD, ctx.my_pe())
    raw = yield Read(ctx.local_address(psync), nwords * SYNC_WORD, cycles=0)
    words = np.frombuffer(raw, "<i8")
    bad = [(i, int(w)) for i, w in enumerate(words) if not 0 <= w <= allowed]
    if bad:
        raise CorruptedSyncError(
            f"PE {ctx.my_pe()}: pSync words not in reset state at entry: {bad}")


def _member_index(ctx, members):
    try:
        return members.index(ctx.my_pe())
    except ValueError:
        raise ShmemError(f"PE {ctx.my_pe()} called a collective on an active set it is not in") from None


def barrier(ctx, aset, psync):
    """Dissemination barrier over ``aset`` using the symmetric counters at ``psync``.

    ``psync`` may be a :class:`SyncWork` or a bare offset; it needs
    ``ceil(log2 pe_size)`` 64-bit words, all :data:`SYNC_VALUE` on entry.
    """
    psync = getattr(psync, "psync", psync)
    members = aset.members(ctx.n_pes())
    index = _member_index(ctx, members)
    key = ("set", aset.pe_start, aset.log_pe_stride, aset.pe_size, psync)
    n = _enter(ctx, key)
    # a partner already inside the next barrier may have signalled once
    yield from _check_psync(ctx, psync, barrier_sync_words(len(members)), 1)
    yield from _dissemination(ctx, members, index, psync)
    _exit(ctx, key, n)


def reduce_to_all(ctx, op, dest, source, nreduce, aset, sync):
    """Combine ``source[0:nreduce]`` over ``aset`` into every member's ``dest``.

    ``sync.psync`` needs :func:`reduce_sync_words` counters;
    ``sync.pwrk`` needs ``max(nreduce // 2 + 1, REDUCE_MIN_WRKDATA_SIZE)``
    elements, or ``sync.pwrk_elems`` if given. Data moves in chunks of
    ``pwrk_elems // (2R + 1)`` elements (R exchange rounds), each chunk
    double buffered per exchange so a partner one exchange ahead cannot
    overwrite data not yet combined.
    """
    if not isinstance(op, ReduceOp):
        op = ReduceOp(*op)
    et = op.elem
    esize = et.size
    m = ctx.machine
    me = ctx.my_pe()
    members = aset.members(ctx.n_pes())
    i = _member_index(ctx, members)
    k = len(members)
    if nreduce < 0:
        raise ShmemError("nreduce must be >= 0")
    nbytes = nreduce * esize
    if dest != source and dest < source + nbytes and source < dest + nbytes:
        raise ShmemError("dest and source overlap")
    ctx._sym(dest, nbytes, me)
    ctx._sym(source, nbytes, me)
    if nreduce == 0:
        return

    rounds = k.bit_length() - 1
    p2 = 1 << rounds
    fold_in, fold_back = rounds, rounds + 1
    if k == 1:
        data = yield Read(ctx.local_address(source), nbytes, cycles=cpu_copy_cycles(nbytes, ctx.timing))
        yield Write(ctx.local_address(dest), data, cycles=0)
        return

    wrk_elems = max(nreduce // 2 + 1, REDUCE_MIN_WRKDATA_SIZE)
    slots = 2 * rounds + 1
    # the slot stride must not depend on nreduce: a partner one exchange ahead
    # may already be writing the next call's data into our pWrk
    capacity = REDUCE_MIN_WRKDATA_SIZE
    if sync.pwrk_elems is not None:
        capacity = sync.pwrk_elems
        if capacity < wrk_elems:
            raise ShmemError(f"pWrk holds {capacity} elements, {wrk_elems} required")
    stride = capacity // slots or wrk_elems // slots
    chunk = min(nreduce, stride)
    if chunk < 1:
        raise ShmemError(f"pWrk too small for {k} PEs: need {slots} elements")
    ctx._sym(sync.pwrk, max(capacity, wrk_elems) * esize, me)
    ctx._sym(sync.psync, reduce_sync_words(k) * SYNC_WORD, me)

    psync = sync.psync
    base = m.pe_base
    local = ctx.local_address
    dtype = et.dtype
    timing = ctx.timing

    def slot_off(s):
        return sync.pwrk + s * stride * esize

    def wait_for(word, n):
        return Wait(local(psync + word * SYNC_WORD), "GE", 1, "<q", consume=n)

    def check(seen, n):
        if seen < n:
            raise ReduceMismatchError(
                f"PE {me}: partner signalled {seen} elements, expected {n} (mismatched nreduce?)")

    # helpers above build requests; every yield stays in this frame to keep resumes cheap
    key = ("reduce", aset.pe_start, aset.log_pe_stride, aset.pe_size, psync)
    for c0 in range(0, nreduce, chunk):
        n = min(chunk, nreduce - c0)
        nb = n * esize
        copy_cycles = cpu_copy_cycles(nb, timing)
        exchange = ctx._collective_counts.get(key, 0)
        ctx._collective_counts[key] = exchange + 1
        parity = exchange & 1
        acc = np.frombuffer((yield Read(local(source + c0 * esize), nb, cycles=copy_cycles)), dtype)

        if i >= p2:
            core = members[i - p2]
            yield Write(base(core) | slot_off(0), acc.tobytes())
            yield Atomic(base(core) | (psync + fold_in * SYNC_WORD), "add", n, width=64)
            check((yield wait_for(fold_back, n)), n)
            acc = np.frombuffer((yield Read(local(slot_off(0)), nb, cycles=copy_cycles)), dtype)
        else:
            extra = members[i + p2] if i + p2 < k else None
            if extra is not None:
                check((yield wait_for(fold_in, n)), n)
                other = np.frombuffer((yield Read(local(slot_off(0)), nb, cycles=copy_cycles)), dtype)
                acc = op.apply(acc, other)
            for r in range(rounds):
                j = i ^ (1 << r)
                partner = members[j]
                s = 1 + parity * rounds + r
                yield Write(base(partner) | slot_off(s), acc.tobytes())
                yield Atomic(base(partner) | (psync + r * SYNC_WORD), "add", n, width=64)
                check((yield wait_for(r, n)), n)
                other = np.frombuffer((yield Read(local(slot_off(s)), nb, cycles=copy_cycles)), dtype)
                # lower index on the left so both partners compute identical bits
                acc = op.apply(acc, other) if i < j else op.apply(other, acc)
            if extra is not None:
                yield Write(base(extra) | slot_off(0), acc.tobytes())
                yield Atomic(base(extra) | (psync + fold_back * SYNC_WORD), "add", n, width=64)
        yield Write(local(dest + c0 * esize), acc.astype(dtype).tobytes(), cycles=0)


def sum_to_all(ctx, dest, source, nreduce, elem, aset, sync):
    return reduce_to_all(ctx, ReduceOp("SUM", elem), dest, source, nreduce, aset, sync)


def check_barrier_trace(trace):
    """Return violations where a PE left a barrier before every member entered it.

    Each violation is ``(key, instance, latest_entry, earliest_exit)``.
    """
    entries, exits = {}, {}
    for rec in trace:
        if rec.kind == "barrier_enter":
            ident = (rec.data["key"], rec.data["instance"])
            entries[ident] = max(entries.get(ident, rec.time), rec.time)
        elif rec.kind == "barrier_exit":
            ident = (rec.data["key"], rec.data["instance"])
            exits[ident] = min(exits.get(ident, rec.time), rec.time)
    bad = []
    for ident, first_exit in exits.items():
        last_entry = entries.get(ident)
        if last_entry is None or first_exit < last_entry:
            bad.append((ident[0], ident[1], last_entry, first_exit))
    return bad


def barrier_instances(trace):
    """Map (key, instance) to the set of ranks that entered it."""
    out = {}
    for rec in trace:
        if rec.kind == "barrier_enter":
            out.setdefault((rec.data["key"], rec.data["instance"]), set()).add(rec.rank)
    return out


__all__ = [
    "ActiveSet", "SyncWork", "ReduceOp", "SYNC_VALUE", "BARRIER_SYNC_SIZE", "REDUCE_SYNC_SIZE",
    "REDUCE_MIN_WRKDATA_SIZE", "CorruptedSyncError", "ReduceMismatchError", "barrier_all",
    "barrier", "linear_barrier_reference", "reduce_to_all", "sum_to_all",
    "check_barrier_trace", "barrier_instances", "barrier_sync_words", "reduce_sync_words",
]

