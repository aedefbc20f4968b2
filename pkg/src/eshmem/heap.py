"""Linear, stack-ordered symmetric heap (brk/sbrk style).

Each PE owns one :class:`SymmetricHeap`. Because allocation is a pure function
of the call sequence, PEs that issue identical sequences get identical offsets,
which is what makes remote addressing rank-local arithmetic.

Only the most recent live allocation may be freed or resized; anything else
raises :class:`HeapOrderError`. Exhaustion returns ``None`` (the null
pointer of the C API) rather than raising.
"""

from typing import NamedTuple

MIN_ALIGN = 8
DEFAULT_HEAP_BASE = 16384


class HeapError(Exception):
    pass


class HeapOrderError(HeapError):
    """Free/realloc of a block that is not the top of the allocation stack."""


class UnknownBlockError(HeapError, KeyError):
    pass


class Block(NamedTuple):
    start: int  # break before this allocation (includes alignment padding)
    offset: int
    size: int
    alignment: int
    end: int  # offset + size rounded up to MIN_ALIGN


def _round_up(n, a):
    return -(-n // a) * a


class SymmetricHeap:
    def __init__(self, base=DEFAULT_HEAP_BASE, limit=32768):
        if base % MIN_ALIGN or limit % MIN_ALIGN:
            raise ValueError(f"heap bounds must be {MIN_ALIGN}-byte aligned")
        if not 0 <= base <= limit:
            raise ValueError(f"invalid heap bounds [{base}, {limit})")
        self.base = base
        self.limit = limit
        self.brk = base
        self.stack = []

    def __repr__(self):
        return f"SymmetricHeap(base={self.base}, brk={self.brk}, limit={self.limit}, live={len(self.stack)})"

    @property
    def available(self):
        return self.limit - self.brk

    def contains(self, offset, nbytes=1):
        return self.base <= offset and offset + nbytes <= self.limit

    def alloc(self, nbytes):
        if nbytes < 1:
            raise ValueError(f"allocation size must be >= 1, got {nbytes}")
        brk = self.brk  # always MIN_ALIGN-aligned
        end = brk + -(-nbytes // MIN_ALIGN) * MIN_ALIGN
        if end > self.limit:
            return None
        self.stack.append(Block(brk, brk, nbytes, MIN_ALIGN, end))
        self.brk = end
        return brk

    def align(self, alignment, nbytes):
        if alignment < MIN_ALIGN or alignment & (alignment - 1):
            raise ValueError(f"alignment must be a power of two >= {MIN_ALIGN}, got {alignment}")
        if nbytes < 1:
            raise ValueError(f"allocation size must be >= 1, got {nbytes}")
        brk = self.brk
        offset = -(-brk // alignment) * alignment
        end = offset + -(-nbytes // MIN_ALIGN) * MIN_ALIGN
        if end > self.limit:
            return None
        self.stack.append(Block(brk, offset, nbytes, alignment, end))
        self.brk = end
        return offset

    def _top(self, offset, what):
        stack = self.stack
        if stack and stack[-1].offset == offset:
            return stack[-1]
        for block in stack:
            if block.offset == offset:
                break
        else:
            raise UnknownBlockError(f"{what}: no live allocation at offset {offset}")
        if block is not self.stack[-1]:
            raise HeapOrderError(
                f"{what}: block at {offset} is not the most recent allocation "
                f"(top is {self.stack[-1].offset})")
        return block

    def free(self, offset):
        block = self._top(offset, "free")
        self.stack.pop()
        self.brk = block.start

    def realloc(self, offset, nbytes):
        """Resize the top block in place; ``nbytes == 0`` frees it."""
        block = self._top(offset, "realloc")
        if nbytes == 0:
            self.free(offset)
            return None
        end = offset + _round_up(nbytes, MIN_ALIGN)
        if end > self.limit:
            return None
        self.stack[-1] = block._replace(size=nbytes, end=end)
        self.brk = end
        return offset

    def block_at(self, offset):
        for block in self.stack:
            if block.offset == offset:
                return block
        return None


# Functional aliases matching the C-style routine names.
def sym_alloc(heap, nbytes):
    return heap.alloc(nbytes)


def sym_free(heap, offset):
    heap.free(offset)


def sym_realloc(heap, offset, nbytes):
    return heap.realloc(offset, nbytes)


def sym_align(heap, alignment, nbytes):
    return heap.align(alignment, nbytes)
