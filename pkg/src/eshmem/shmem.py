"""OpenSHMEM-style per-PE API on top of the simulated machine.

Programs receive a :class:`ShmemCtx` and call its routines with
``yield from``. Symmetric addresses are heap offsets; the target PE's rank
selects the core, so ``ctx.put(x, data, pe=3)`` lands at offset ``x`` of PE 3.

    def program(ctx):
        x = ctx.malloc(8)
        yield from ctx.barrier_all()
        yield from ctx.p(x, ctx.my_pe(), "int64", (ctx.my_pe() + 1) % ctx.n_pes())
        yield from ctx.barrier_all()
        return (yield from ctx.g(x, "int64", ctx.my_pe()))

    report = launch(machine, program)
"""

import struct
from dataclasses import dataclass

import numpy as np

from .heap import SymmetricHeap
from .machine import Atomic, Delay, Read, Wait, Write, encode_address


class ShmemError(Exception):
    pass


@dataclass(frozen=True)
class ElemType:
    name: str
    size: int
    kind: str  # "int" or "float"
    code: str

    @property
    def dtype(self):
        return _DTYPES[self.code]

    @property
    def struct(self):
        return _STRUCTS[self.code]


INT8 = ElemType("int8", 1, "int", "b")
INT16 = ElemType("int16", 2, "int", "h")
INT32 = ElemType("int32", 4, "int", "i")
INT64 = ElemType("int64", 8, "int", "q")
FLOAT32 = ElemType("float32", 4, "float", "f")
FLOAT64 = ElemType("float64", 8, "float", "d")

ELEM_TYPES = {t.name: t for t in (INT8, INT16, INT32, INT64, FLOAT32, FLOAT64)}
_STRUCTS = {t.code: struct.Struct("<" + t.code) for t in ELEM_TYPES.values()}
_DTYPES = {t.code: np.dtype("<" + t.code) for t in ELEM_TYPES.values()}
_ALIASES = {"short": "int16", "int": "int32", "long": "int64", "longlong": "int64",
            "float": "float32", "double": "float64"}


def elem_type(t):
    if isinstance(t, ElemType):
        return t
    if type(t) is str and t in ELEM_TYPES:
        return ELEM_TYPES[t]
    if isinstance(t, str):
        name = _ALIASES.get(t, t)
        if name in ELEM_TYPES:
            return ELEM_TYPES[name]
    else:
        dt = np.dtype(t)
        for et in ELEM_TYPES.values():
            if et.dtype == dt.newbyteorder("<"):
                return et
    raise ShmemError(f"unsupported element type {t!r}")


CMP_NAMES = ("EQ", "NE", "GT", "GE", "LT", "LE")

_ATOMIC_KINDS = {"add": "add", "fetch_add": "fetch_add", "inc": "add", "fetch_inc": "fetch_add",
                 "swap": "swap", "compare_swap": "compare_swap"}


class ShmemCtx:
    """Per-PE runtime state: rank, workgroup, symmetric heap and machine handle."""

    def __init__(self, pe, heap=None):
        self.pe = pe
        self.machine = pe.machine
        self.workgroup = self.machine.workgroup
        cfg = self.machine.config
        self.heap = heap if heap is not None else SymmetricHeap(cfg.heap_base, cfg.heap_limit)
        self.statics = SymmetricHeap(cfg.static_base, cfg.runtime_base)
        self.timing = cfg.timing
        self.timed = self.machine.timed
        self._collective_counts = {}
        self._base = self.machine.pe_base(pe.rank)
        self._base_limit = cfg.mem_per_core

    def __repr__(self):
        return f"ShmemCtx(pe={self.pe.rank}/{self.machine.n_pes})"

    # -- accessibility -------------------------------------------------------

    def my_pe(self):
        return self.pe.rank

    def n_pes(self):
        return self.machine.n_pes

    def pe_accessible(self, pe):
        return isinstance(pe, int) and 0 <= pe < self.machine.n_pes

    def addr_accessible(self, addr, pe):
        """True iff ``addr`` is symmetric: in the heap or the static data segment."""
        return self.pe_accessible(pe) and self._symmetric(addr, 1)

    def _symmetric(self, offset, nbytes):
        return ((self.heap.base <= offset and offset + nbytes <= self.heap.limit)
                or (self.statics.base <= offset and offset + nbytes <= self.statics.limit))

    @property
    def clock(self):
        return self.pe.clock

    # -- symmetric memory management (local; callers synchronize) ---------------

    def malloc(self, nbytes):
        return self.heap.alloc(nbytes)

    def free(self, offset):
        self.heap.free(offset)

    def realloc(self, offset, nbytes):
        return self.heap.realloc(offset, nbytes)

    def memalign(self, alignment, nbytes):
        return self.heap.align(alignment, nbytes)

    def static(self, nbytes, alignment=8):
        """Reserve ``nbytes`` of static symmetric data (like a C global).

        Every PE that declares the same statics in the same order gets the
        same offsets. Raises when the static segment is exhausted.
        """
        offset = self.statics.align(alignment, nbytes)
        if offset is None:
            raise ShmemError(f"static data segment exhausted ({self.statics.available} B left)")
        return offset

    # -- address helpers -----------------------------------------------------

    def _target(self, pe):
        if not self.pe_accessible(pe):
            raise ShmemError(f"PE {pe} is not accessible (n_pes={self.machine.n_pes})")
        return self.machine.coord_of(pe)

    def _sym(self, offset, nbytes, pe):
        heap = self.heap
        if (type(pe) is int and 0 <= pe < self.machine.n_pes
                and heap.base <= offset and offset + nbytes <= heap.limit):
            return self.machine.pe_base(pe) | offset
        coord = self._target(pe)
        if not self._symmetric(offset, nbytes):
            raise ShmemError(
                f"range [{offset}, {offset + nbytes}) is not symmetric (heap "
                f"[{self.heap.base}, {self.heap.limit}), statics "
                f"[{self.statics.base}, {self.statics.limit}))")
        return encode_address(coord, offset)

    def local_address(self, offset):
        if 0 <= offset < self._base_limit:
            return self._base | offset
        return encode_address(self.pe.coord, offset)

    # -- block and elemental copies --------------------------------------------

    def put(self, dest, src, nelems=None, elem="float32", pe=None, engine="cpu"):
        """Copy ``nelems`` elements of the local buffer ``src`` to ``dest`` on ``pe``.

        Returns once the data has been delivered.
        """
        et = elem_type(elem)
        buf = np.ascontiguousarray(src, dtype=et.dtype).ravel()
        if nelems is None:
            nelems = buf.size
        if nelems > buf.size:
            raise ShmemError(f"source buffer holds {buf.size} elements, {nelems} requested")
        if nelems == 0:
            return
        ga = self._sym(dest, nelems * et.size, self.pe.rank if pe is None else pe)
        yield Write(ga, buf[:nelems].tobytes(), engine)

    def get(self, src, nelems, elem="float32", pe=None, engine="cpu"):
        """Return ``nelems`` elements read from ``src`` on ``pe`` as a numpy array."""
        et = elem_type(elem)
        if nelems == 0:
            return np.empty(0, et.dtype)
        ga = self._sym(src, nelems * et.size, self.pe.rank if pe is None else pe)
        data = yield Read(ga, nelems * et.size, engine)
        return np.frombuffer(data, et.dtype).copy()

    def p(self, dest, value, elem, pe):
        """Elemental put of a single scalar."""
        et = elem_type(elem)
        ga = self._sym(dest, et.size, pe)
        yield Write(ga, et.struct.pack(value))

    def g(self, src, elem, pe):
        """Elemental get of a single scalar."""
        et = elem_type(elem)
        ga = self._sym(src, et.size, pe)
        data = yield Read(ga, et.size)
        return et.struct.unpack(data)[0]

    def strided_copy(self, direction, dest, src, dest_stride, src_stride, nelems, elem, pe):
        """iput/iget: move element k between ``src + k*src_stride`` and ``dest + k*dest_stride``.

        For ``put``, ``src`` is a local buffer and ``dest`` a symmetric offset on
        ``pe``; for ``get``, ``src`` is symmetric on ``pe`` and ``dest`` a local
        numpy array that is filled in place (and returned).
        """
        if dest_stride < 1 or src_stride < 1:
            raise ShmemError("strides must be >= 1 element")
        et = elem_type(elem)
        if direction == "put":
            buf = np.ascontiguousarray(src, dtype=et.dtype).ravel()
            if nelems and (nelems - 1) * src_stride >= buf.size:
                raise ShmemError("strided source index out of range")
            self._sym(dest, ((nelems - 1) * dest_stride + 1) * et.size if nelems else 0, pe)
            for k in range(nelems):
                yield from self.p(dest + k * dest_stride * et.size, buf[k * src_stride].item(), et, pe)
            return None
        if direction == "get":
            if nelems and (nelems - 1) * dest_stride >= dest.size:
                raise ShmemError("strided destination index out of range")
            self._sym(src, ((nelems - 1) * src_stride + 1) * et.size if nelems else 0, pe)
            for k in range(nelems):
                dest[k * dest_stride] = yield from self.g(src + k * src_stride * et.size, et, pe)
            return dest
        raise ShmemError(f"direction must be 'put' or 'get', got {direction!r}")

    def iput(self, dest, src, dst_stride, src_stride, nelems, elem, pe):
        return self.strided_copy("put", dest, src, dst_stride, src_stride, nelems, elem, pe)

    def iget(self, dest, src, dst_stride, src_stride, nelems, elem, pe):
        return self.strided_copy("get", dest, src, dst_stride, src_stride, nelems, elem, pe)

    # -- atomics ---------------------------------------------------------------

    def atomic(self, kind, dest, operand=None, elem="int32", pe=None, cond=None):
        """Remote atomic; fetching kinds (and swaps) return the previous value."""
        if kind not in _ATOMIC_KINDS:
            raise ShmemError(f"unknown atomic {kind!r}")
        et = elem_type(elem)
        if et not in (INT32, INT64):
            raise ShmemError(f"atomics support int32/int64 only, got {et.name}")
        if kind in ("inc", "fetch_inc"):
            operand = 1
        if operand is None:
            raise ShmemError(f"atomic {kind} needs an operand")
        ga = self._sym(dest, et.size, self.pe.rank if pe is None else pe)
        old = yield Atomic(ga, _ATOMIC_KINDS[kind], operand, cond, et.size * 8)
        if kind in ("add", "inc"):
            return None
        return old

    def add(self, dest, value, elem, pe):
        return self.atomic("add", dest, value, elem, pe)

    def fetch_add(self, dest, value, elem, pe):
        return self.atomic("fetch_add", dest, value, elem, pe)

    def inc(self, dest, elem, pe):
        return self.atomic("inc", dest, None, elem, pe)

    def fetch_inc(self, dest, elem, pe):
        return self.atomic("fetch_inc", dest, None, elem, pe)

    def swap(self, dest, value, elem, pe):
        return self.atomic("swap", dest, value, elem, pe)

    def compare_swap(self, dest, cond, value, elem, pe):
        return self.atomic("compare_swap", dest, value, elem, pe, cond=cond)

    # -- point-to-point synchronization ------------------------------------------

    def wait_until(self, addr, cmp, value, elem="int32"):
        """Block until the local symmetric variable at ``addr`` satisfies ``cmp value``."""
        if cmp not in CMP_NAMES:
            raise ShmemError(f"unknown comparison {cmp!r}")
        et = elem_type(elem)
        ga = self._sym(addr, et.size, self.pe.rank)
        seen = yield Wait(ga, cmp, value, "<" + et.code)
        return seen

    def wait(self, addr, value, elem="int32"):
        """Classic ``shmem_wait``: block while the variable equals ``value``."""
        return self.wait_until(addr, "NE", value, elem)

    def fence(self):
        self.pe.mark("fence")
        if self.timed:
            yield Delay(self.timing.fence_cycles)

    def quiet(self):
        self.pe.mark("quiet")
        if self.timed:
            yield Delay(self.timing.fence_cycles)

    # -- locks ---------------------------------------------------------------------

    def _lock_address(self, lock):
        # every PE's lock word lives on the workgroup's rank 0
        return self._sym(lock, 4, 0)

    def set_lock(self, lock):
        ga = self._lock_address(lock)
        if not self.timed:
            # a failed test-and-set writes nothing, so spinning before the word
            # changes is a no-op: wait until it reads free and take it in the
            # same indivisible step (consume -1 turns 0 into 1), which is
            # exactly a successful test-and-set
            yield Wait(ga, "EQ", 0, consume=-1, poll=False)
            return
        backoff = self.timing.lock_backoff_min_cycles
        while True:
            old = yield Atomic(ga, "test_and_set", 1, width=32)
            if old == 0:
                return
            yield Delay(backoff)
            backoff = min(2 * backoff, self.timing.lock_backoff_max_cycles)

    def test_lock(self, lock):
        """One test-and-set attempt; ``False`` means the lock was acquired."""
        old = yield Atomic(self._lock_address(lock), "test_and_set", 1, width=32)
        return old != 0

    def clear_lock(self, lock):
        # not checked against the holder; clearing someone else's lock is a program error
        yield Write(self._lock_address(lock), b"\0\0\0\0")

    # -- collectives (see eshmem.collectives) ---------------------------------------

    def barrier_all(self):
        from .collectives import barrier_all
        return barrier_all(self)

    def barrier(self, aset, psync):
        from .collectives import barrier
        return barrier(self, aset, psync)

    def reduce_to_all(self, op, dest, source, nreduce, aset, sync):
        from .collectives import reduce_to_all
        return reduce_to_all(self, op, dest, source, nreduce, aset, sync)

    def compute(self, cycles):
        """Charge ``cycles`` of local computation (TIMED mode only)."""
        if self.timed and cycles:
            yield Delay(cycles)


def launch(machine, program, *args):
    """Run ``program(ctx, *args)`` SPMD on every PE of ``machine`` with fresh heaps."""
    return machine.run_spmd(program, *args, context=ShmemCtx)
