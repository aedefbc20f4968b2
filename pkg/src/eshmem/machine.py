"""Discrete-event model of the core grid.

PE programs are Python generator functions. Every interaction with simulated
memory is a request object the program yields; the coordinator decides when
the request takes effect and sends the result back into the generator::

    def program(pe):
        yield Write(encode_address((0, 0), 0x4000), b"\\x01\\x00\\x00\\x00")
        data = yield Read(encode_address((33, 9), 0x4000), 4)
        return data

Two execution modes exist. FUNCTIONAL picks the next runnable PE uniformly
at random from a seeded RNG, so repeated runs with different seeds explore
different interleavings. TIMED keeps a cycle clock per PE and applies effects
in timestamp order, ties broken by (timestamp, rank, sequence number).
"""

import heapq
import operator
import random
import struct
import types
from dataclasses import dataclass, field
from typing import Any, List, NamedTuple

from .config import OFFSET_BITS, MachineConfig, Mode
from .timing import remote_transfer_cycles, round_up_to_poll
from .topology import coord_of_pe

OFFSET_MASK = (1 << OFFSET_BITS) - 1
COL_SHIFT = OFFSET_BITS
ROW_SHIFT = OFFSET_BITS + 6


class MachineError(Exception):
    pass


class InaccessibleAddress(MachineError):
    pass


class AlignmentError(MachineError):
    pass


class DeadlockError(MachineError):
    def __init__(self, blocked):
        self.blocked = blocked
        detail = "; ".join(f"PE {r}: {why}" for r, why in sorted(blocked.items()))
        super().__init__(f"deadlock, all unfinished PEs blocked: {detail}")


# -- addressing ---------------------------------------------------------------

def encode_address(coord, offset):
    row, col = coord
    if not (0 <= row < 64 and 0 <= col < 64):
        raise InaccessibleAddress(f"coordinate {coord} does not fit the address fields")
    if not 0 <= offset <= OFFSET_MASK:
        raise InaccessibleAddress(f"offset {offset:#x} overflows the {OFFSET_BITS}-bit field")
    return (row << ROW_SHIFT) | (col << COL_SHIFT) | offset


def decode_address(ga, issuing_coord=None):
    """Split a global address into ((row, col), offset).

    A zero core field is the local alias and resolves to ``issuing_coord``.
    """
    ga &= 0xFFFFFFFF
    row, col, offset = ga >> ROW_SHIFT, (ga >> COL_SHIFT) & 0x3F, ga & OFFSET_MASK
    if row == 0 and col == 0 and issuing_coord is not None:
        return tuple(issuing_coord), offset
    return (row, col), offset


# -- requests -----------------------------------------------------------------

_CMP = {
    "EQ": operator.eq, "NE": operator.ne, "GT": operator.gt,
    "GE": operator.ge, "LT": operator.lt, "LE": operator.le,
}

_WORD = {32: struct.Struct("<i"), 64: struct.Struct("<q")}
_FMTS = {}


class Request:
    __slots__ = ()


class Read(Request):
    __slots__ = ("ga", "nbytes", "engine", "cycles")

    def __init__(self, ga, nbytes, engine="cpu", cycles=None):
        self.ga, self.nbytes, self.engine, self.cycles = ga, nbytes, engine, cycles


class Write(Request):
    __slots__ = ("ga", "data", "engine", "cycles")

    def __init__(self, ga, data, engine="cpu", cycles=None):
        self.ga, self.data, self.engine, self.cycles = ga, bytes(data), engine, cycles


class Atomic(Request):
    """Indivisible read-modify-write on a 32/64-bit word; the result is the old value."""

    KINDS = ("test_and_set", "add", "fetch_add", "swap", "compare_swap")
    __slots__ = ("ga", "kind", "operand", "compare", "width", "cycles")

    def __init__(self, ga, kind, operand=1, compare=None, width=32, cycles=None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown atomic kind {kind!r}")
        if width not in _WORD:
            raise ValueError(f"atomic width must be 32 or 64, got {width}")
        self.ga, self.kind, self.operand, self.compare = ga, kind, operand, compare
        self.width, self.cycles = width, cycles


class Wait(Request):
    """Block until ``word <cmp> value`` holds at ``ga``.

    ``fmt`` is a struct format for the watched element. When ``consume`` is
    nonzero the word is decremented by it in the same indivisible step that
    observes the predicate (a counting-semaphore wait). ``poll`` adds the poll
    quantum to the wake-up time in TIMED mode.
    """

    __slots__ = ("ga", "fmt", "cmp", "value", "consume", "poll")

    def __init__(self, ga, cmp, value, fmt="<i", consume=0, poll=True):
        if cmp not in _CMP:
            raise ValueError(f"unknown comparison {cmp!r}")
        st = _FMTS.get(fmt)
        if st is None:
            st = _FMTS[fmt] = struct.Struct(fmt)
        self.ga, self.fmt, self.cmp, self.value = ga, st, cmp, value
        self.consume, self.poll = consume, poll

    def describe(self):
        return f"wait {self.cmp} {self.value!r} at {self.ga:#010x}"


class Delay(Request):
    __slots__ = ("cycles",)

    def __init__(self, cycles):
        self.cycles = cycles


class Wand(Request):
    """Hardware wait-on-AND: release when every PE has arrived."""

    __slots__ = ()


class _Resume(Request):
    __slots__ = ("value",)

    def __init__(self, value=None):
        self.value = value


_BLOCK = object()


class _WaitGroup:
    __slots__ = ("key", "lo", "hi", "mem", "fmt", "cmp", "value", "members", "sat")

    def __init__(self, key, lo, hi, mem, req):
        self.key, self.lo, self.hi, self.mem = key, lo, hi, mem
        self.fmt, self.cmp, self.value = req.fmt, _CMP[req.cmp], req.value
        self.members = []
        self.sat = False

    def test(self):
        return self.cmp(self.fmt.unpack_from(self.mem, self.lo)[0], self.value)

READY, BLOCKED, DONE = "ready", "blocked", "done"


# -- per-PE state -------------------------------------------------------------

class PE:
    """The handle a program receives: its rank, coordinate and clock."""

    __slots__ = ("machine", "rank", "coord", "cid", "gen", "pending", "status", "clock",
                 "events", "exit", "seq", "watch", "scheduled", "next_clock", "_ri", "_gi")

    def __init__(self, machine, rank, coord):
        self.machine, self.rank, self.coord = machine, rank, coord
        self.cid = encode_address(coord, 0) >> OFFSET_BITS
        self.gen = None
        self.pending = None
        self.status = READY
        self.clock = 0
        self.events = 0
        self.exit = None
        self.seq = 0
        self.watch = None
        self.scheduled = False
        self.next_clock = 0
        self._ri = -1
        self._gi = -1

    def __repr__(self):
        return f"PE(rank={self.rank}, coord={self.coord}, status={self.status})"

    @property
    def n_pes(self):
        return self.machine.n_pes

    @property
    def now(self):
        """Trace timestamp: cycle clock in TIMED mode, global step in FUNCTIONAL."""
        m = self.machine
        return self.clock if m.timed else m.steps

    def mark(self, kind, **data):
        m = self.machine
        m.trace.append(TraceRecord(self.clock if m.timed else m.steps, self.rank, kind, data))

    # Thin generator wrappers, for ``yield from`` call sites.
    def read(self, ga, nbytes, engine="cpu", cycles=None):
        return (yield Read(ga, nbytes, engine, cycles))

    def write(self, ga, data, engine="cpu", cycles=None):
        return (yield Write(ga, data, engine, cycles))

    def atomic(self, ga, kind, operand=1, compare=None, width=32, cycles=None):
        return (yield Atomic(ga, kind, operand, compare, width, cycles))

    def wait(self, ga, cmp, value, fmt="<i", consume=0, poll=True):
        return (yield Wait(ga, cmp, value, fmt, consume, poll))

    def delay(self, cycles):
        return (yield Delay(cycles))

    def wand(self):
        return (yield Wand())


class TraceRecord(NamedTuple):
    time: int
    rank: int
    kind: str
    data: dict


@dataclass
class MachineReport:
    mode: Mode
    exits: List[Any]
    cycles: List[int]
    events: List[int]
    steps: int
    trace: List[TraceRecord] = field(repr=False)

    @property
    def elapsed(self):
        return max(self.cycles) if self.cycles else 0


# -- the machine --------------------------------------------------------------

class Machine:
    def __init__(self, config):
        self.config = config
        self.params = config.timing
        self.workgroup = config.get_workgroup()
        self.n_pes = self.workgroup.n_pes
        self.mem_per_core = config.mem_per_core
        self.memory = {c: bytearray(config.mem_per_core) for c in config.live_cores}
        self.timed = config.mode is Mode.TIMED
        self._bases = [encode_address(c, 0) for c in self.workgroup.coords]
        # the same buffers keyed by the address's core field, for the hot path
        self._cmem = {encode_address(c, 0) >> OFFSET_BITS: m for c, m in self.memory.items()}
        self._handlers = {
            Read: self._read, Write: self._write, Atomic: self._atomic, Wait: self._wait,
            _Resume: lambda p, req, now: req.value, Wand: lambda p, req, now: self._wand(p),
        }
        self.trace = []
        self.steps = 0
        self.pes = []
        self._watchers = {}

    @property
    def mode(self):
        return self.config.mode

    @property
    def total_memory(self):
        return len(self.memory) * self.mem_per_core

    def reset(self):
        for mem in self.memory.values():
            mem[:] = bytes(len(mem))
        self.trace = []
        self.steps = 0
        self.pes = []
        self._watchers = {}

    def coord_of(self, rank):
        return coord_of_pe(self.workgroup, rank)

    def pe_base(self, rank):
        """Global address of offset 0 on ``rank``'s core."""
        return self._bases[rank]

    def address(self, rank, offset):
        if 0 <= rank < self.n_pes and 0 <= offset <= OFFSET_MASK:
            return self._bases[rank] | offset
        return encode_address(self.coord_of(rank), offset)

    # Host-side access (no simulated cost, used to load inputs and inspect results).
    def load(self, rank, offset, data):
        mem, off = self._locate(self.address(rank, offset), None, len(data))
        mem[off:off + len(data)] = data

    def peek(self, rank, offset, nbytes):
        mem, off = self._locate(self.address(rank, offset), None, nbytes)
        return bytes(mem[off:off + nbytes])

    def memory_image(self):
        return b"".join(bytes(self.memory[c]) for c in sorted(self.memory))

    def resolve(self, ga, issuing_coord, nbytes=1):
        """Decode ``ga`` and check it names ``nbytes`` of live core memory."""
        coord, off = decode_address(ga, issuing_coord)
        if coord not in self.memory:
            raise InaccessibleAddress(f"address {ga:#010x} targets {coord}, which is not a live core")
        if off + nbytes > self.mem_per_core:
            raise InaccessibleAddress(
                f"access of {nbytes} B at {ga:#010x} crosses the end of core {coord}'s memory")
        return coord, off

    def _locate(self, ga, issuing_coord, nbytes):
        coord, off = self.resolve(ga, issuing_coord, nbytes)
        return self.memory[coord], off

    def _access(self, ga, p, nbytes):
        """Fast path of :meth:`resolve` for a request issued by ``p``: (core id, buffer, offset)."""
        ga &= 0xFFFFFFFF
        cid = (ga >> OFFSET_BITS) or p.cid
        off = ga & OFFSET_MASK
        mem = self._cmem.get(cid)
        if mem is None or off + nbytes > self.mem_per_core:
            self.resolve(ga, p.coord, nbytes)
        return cid, mem, off

    # -- request execution --------------------------------------------------

    def _transfer_cost(self, p, req, nbytes):
        if req.cycles is not None:
            return req.cycles
        dst, _ = decode_address(req.ga, p.coord)
        cost = remote_transfer_cycles(p.coord, dst, nbytes, req.engine, self.params)
        if req.engine == "dma":
            cost = round_up_to_poll(cost, self.params)
        return cost

    def _issue_time(self, p, req):
        """Timestamp at which ``req`` takes effect; sets ``p.next_clock``."""
        c = p.clock
        t = type(req)
        if t is Read:
            p.next_clock = c + self._transfer_cost(p, req, req.nbytes)
            return c
        if t is Write:
            p.next_clock = c + self._transfer_cost(p, req, len(req.data))
            return p.next_clock
        if t is Atomic:
            if req.cycles is not None:
                cost = req.cycles
            else:
                dst, _ = decode_address(req.ga, p.coord)
                cost = remote_transfer_cycles(p.coord, dst, req.width // 8, "cpu", self.params)
            p.next_clock = c + cost
            return p.next_clock
        p.next_clock = c
        return c

    def _execute(self, p, req, now):
        handler = self._handlers.get(type(req))
        if handler is None:
            raise TypeError(f"PE {p.rank} yielded {req!r}, which is not a machine request")
        return handler(p, req, now)

    def _read(self, p, req, now):
        _, mem, off = self._access(req.ga, p, req.nbytes)
        return bytes(mem[off:off + req.nbytes])

    def _write(self, p, req, now):
        data = req.data
        n = len(data)
        cid, mem, off = self._access(req.ga, p, n)
        mem[off:off + n] = data
        if cid in self._watchers:
            self._notify(cid, off, off + n, now)
        return None

    def _atomic(self, p, req, now):
        nbytes = req.width // 8
        cid, mem, off = self._access(req.ga, p, nbytes)
        if off % nbytes:
            raise AlignmentError(f"{req.width}-bit atomic at misaligned offset {off:#x}")
        word = _WORD[req.width]
        old = word.unpack_from(mem, off)[0]
        kind = req.kind
        if kind == "test_and_set":
            new = req.operand if old == 0 else None
        elif kind in ("add", "fetch_add"):
            new = old + req.operand
        elif kind == "swap":
            new = req.operand
        else:
            new = req.operand if old == req.compare else None
        if new is not None:
            bits = req.width
            new &= (1 << bits) - 1
            if new >= 1 << (bits - 1):
                new -= 1 << bits
            word.pack_into(mem, off, new)
            if cid in self._watchers:
                self._notify(cid, off, off + nbytes, now)
        return old

    def _predicate(self, p, req):
        cid, mem, off = self._access(req.ga, p, req.fmt.size)
        seen = req.fmt.unpack_from(mem, off)[0]
        return _CMP[req.cmp](seen, req.value), seen, mem, off, cid

    def _wait(self, p, req, now):
        ok, seen, mem, off, cid = self._predicate(p, req)
        if not ok:
            if p.watch is None:
                if self.timed:
                    p.watch = (cid, off, off + req.fmt.size, mem)
                    self._watchers.setdefault(cid, []).append(p)
                else:
                    self._join_group(p, req, cid, off, mem)
            return _BLOCK
        if p.watch is not None:
            if self.timed:
                self._watchers[p.watch[0]].remove(p)
            else:
                self._leave_group(p)
            p.watch = None
        if req.consume:
            req.fmt.pack_into(mem, off, seen - req.consume)
            if cid in self._watchers:
                self._notify(cid, off, off + req.fmt.size, now)
        return seen

    def _notify(self, cid, lo, hi, now):
        watchers = self._watchers.get(cid)
        if not watchers:
            return
        if not self.timed:
            # groups never join or leave during this loop, so no copy is needed
            for g in watchers:
                if g.lo >= hi or g.hi <= lo:
                    continue
                ok = g.cmp(g.fmt.unpack_from(g.mem, g.lo)[0], g.value)
                if ok is not g.sat:
                    g.sat = ok
                    if ok:
                        self._sat.append(g)
                        self._sat_n += len(g.members)
                    else:
                        self._sat.remove(g)
                        self._sat_n -= len(g.members)
            return
        for w in list(watchers):
            _, wlo, whi, _ = w.watch
            if wlo >= hi or whi <= lo:
                continue
            if not w.scheduled and self._predicate(w, w.pending)[0]:
                wake = max(now, w.clock)
                if w.pending.poll:
                    wake += self.params.poll_quantum_cycles
                w.clock = wake
                self._push(w, wake)

    # FUNCTIONAL waiters on the same word with the same predicate share one
    # group, so a write re-evaluates the predicate once rather than per PE.
    # The scheduler draws uniformly from ready PEs plus members of groups
    # whose predicate currently holds.

    def _try_park(self, p, req):
        """Move ``p`` into its wait group unless it can simply stay ready; True if it stays.

        A waiter whose predicate holds stays ready unless others already
        wait on the same predicate: then it is picked through the group,
        so a competitor falsifying the predicate first costs no wasted step.
        """
        try:
            ok, _, mem, off, cid = self._predicate(p, req)
        except MachineError:
            return True  # stay runnable; the error is raised into the program on its step
        if ok and (cid, off, req.fmt.format, req.cmp, req.value) not in self._groups:
            return True
        self._join_group(p, req, cid, off, mem)
        return False

    def _join_group(self, p, req, cid, off, mem):
        key = (cid, off, req.fmt.format, req.cmp, req.value)
        g = self._groups.get(key)
        if g is None:
            g = self._groups[key] = _WaitGroup(key, off, off + req.fmt.size, mem, req)
            self._watchers.setdefault(cid, []).append(g)
            if g.test():
                g.sat = True
                self._sat.append(g)
        p._gi = len(g.members)
        g.members.append(p)
        if g.sat:
            self._sat_n += 1
        p.watch = g
        p.status = BLOCKED

    def _leave_group(self, p):
        g = p.watch
        members = g.members
        last = members.pop()
        if last is not p:
            members[p._gi] = last
            last._gi = p._gi
        p._gi = -1
        if g.sat:
            self._sat_n -= 1
        if not members:
            del self._groups[g.key]
            self._watchers[g.key[0]].remove(g)
            if g.sat:
                self._sat.remove(g)

    def _pick_satisfied(self, r):
        for g in self._sat:
            if r < len(g.members):
                return g.members[r]
            r -= len(g.members)
        raise AssertionError("satisfied waiter count out of sync")

    def _wand(self, p):
        self._wand_waiting.append(p)
        if len(self._wand_waiting) < self.n_pes:
            return _BLOCK
        waiting, self._wand_waiting = self._wand_waiting, []
        release = max(w.clock for w in waiting) + self.params.wand_barrier_cycles
        for w in waiting:
            w.pending = _Resume()
            if self.timed:
                w.clock = release
                if w is not p:
                    self._push(w, release)
            elif w is not p:
                self._make_ready(w)
        return None

    # -- scheduling ---------------------------------------------------------

    def _make_ready(self, p):
        p.status = READY
        p._ri = len(self._ready)
        self._ready.append(p)

    def _make_blocked(self, p):
        p.status = BLOCKED
        self._unready(p)

    def _unready(self, p):
        ready = self._ready
        i = p._ri
        last = ready.pop()
        if last is not p:
            ready[i] = last
            last._ri = i
        p._ri = -1

    def _push(self, p, when):
        p.seq += 1
        p.scheduled = True
        heapq.heappush(self._queue, (when, p.rank, p.seq, p))

    def _advance(self, p, value, exc=None):
        """Resume ``p``'s program until its next machine request or exit."""
        gen = p.gen
        timed = self.timed
        try:
            while True:
                req = gen.throw(exc) if exc is not None else gen.send(value)
                exc = None
                if type(req) is Delay:
                    if timed:
                        p.clock += req.cycles
                    value = None
                    continue
                p.pending = req
                return True
        except StopIteration as stop:
            p.exit = stop.value
            p.status = DONE
            p.pending = None
            return False

    def _start(self, program, args, context):
        self.trace = []
        self.steps = 0
        self._watchers = {}
        self._wand_waiting = []
        self._ready = []
        self._queue = []
        self._groups = {}
        self._sat = []
        self._sat_n = 0
        self.pes = [PE(self, r, self.coord_of(r)) for r in range(self.n_pes)]
        for p in self.pes:
            handle = p if context is None else context(p)
            out = program(handle, *args)
            if isinstance(out, types.GeneratorType):
                p.gen = out
                if not self._advance(p, None):
                    continue
                if self.timed:
                    self._push(p, self._issue_time(p, p.pending))
                else:
                    self._make_ready(p)
            else:
                p.exit = out
                p.status = DONE

    def run_spmd(self, program, *args, context=None):
        """Run ``program(handle, *args)`` on every PE and return a :class:`MachineReport`.

        ``context`` maps the raw :class:`PE` to the handle the program sees
        (the SHMEM layer passes its per-PE context here).
        """
        self._start(program, args, context)
        if self.timed:
            self._run_timed()
        else:
            self._run_functional(random.Random(self.config.seed))
        unfinished = [p for p in self.pes if p.status is not DONE]
        if unfinished:
            raise DeadlockError({p.rank: self._describe_block(p) for p in unfinished})
        return MachineReport(
            mode=self.mode,
            exits=[p.exit for p in self.pes],
            cycles=[p.clock for p in self.pes],
            events=[p.events for p in self.pes],
            steps=self.steps,
            trace=list(self.trace),
        )

    def _describe_block(self, p):
        req = p.pending
        if isinstance(req, Wait):
            return req.describe()
        if isinstance(req, Wand):
            return f"hardware barrier ({len(self._wand_waiting)}/{self.n_pes} arrived)"
        return f"pending {type(req).__name__}"

    def _step(self, p, req, now):
        p.events += 1
        self.steps += 1
        try:
            result = self._execute(p, req, now)
        except MachineError as e:
            return self._advance(p, None, e)
        if result is _BLOCK:
            return None
        return self._advance(p, result)

    def _run_functional(self, rng):
        # _step and _advance inlined: this loop is the simulator's hot path
        ready = self._ready
        rand = rng.random
        handlers = self._handlers
        pick_satisfied = self._pick_satisfied
        try_park = self._try_park
        make_ready, make_blocked, unready = self._make_ready, self._make_blocked, self._unready
        now = self.steps
        while True:
            nr = len(ready)
            total = nr + self._sat_n
            if not total:
                break
            r = int(rand() * total)
            p = ready[r] if r < nr else pick_satisfied(r - nr)
            p.events += 1
            self.steps = now + 1
            req = p.pending
            try:
                handler = handlers.get(type(req))
                if handler is None:
                    raise TypeError(f"PE {p.rank} yielded {req!r}, which is not a machine request")
                result = handler(p, req, now)
            except MachineError as e:
                alive = self._advance(p, None, e)
            else:
                if result is _BLOCK:
                    alive = None
                else:
                    send = p.gen.send
                    try:
                        req = send(result)
                        while type(req) is Delay:
                            req = send(None)
                        p.pending = req
                        # an unsatisfied wait changes nothing, so park it now
                        # rather than spend a scheduling step discovering that
                        alive = True if type(req) is not Wait or try_park(p, req) else None
                    except StopIteration as stop:
                        p.exit = stop.value
                        p.status = DONE
                        p.pending = None
                        alive = False
            now += 1
            if alive is None:
                if p._ri >= 0:
                    make_blocked(p)
            elif alive:
                if p._ri < 0:
                    make_ready(p)
            elif p._ri >= 0:
                unready(p)

    def _run_timed(self):
        queue = self._queue
        pop = heapq.heappop
        while queue:
            when, _, _, p = pop(queue)
            p.scheduled = False
            req = p.pending
            t = type(req)
            if t is Read or t is Write or t is Atomic:
                p.clock = p.next_clock
            elif when > p.clock:
                p.clock = when
            alive = self._step(p, req, when)
            if alive is None:
                p.status = BLOCKED
            elif alive:
                p.status = READY
                self._push(p, self._issue_time(p, p.pending))


def build_machine(config=None, **overrides):
    """Validate ``config`` (or build one from keyword overrides) and return a zeroed machine."""
    if config is None:
        config = MachineConfig(**overrides)
    elif overrides:
        from dataclasses import replace
        config = replace(config, **overrides)
    config.validate()
    return Machine(config)
