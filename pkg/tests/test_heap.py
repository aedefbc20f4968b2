import random

import pytest
from hypothesis import given, strategies as st

from eshmem.heap import HeapOrderError, SymmetricHeap, UnknownBlockError
from eshmem.props import model_heap_ops, random_heap_ops, replay_heap_ops


def test_bump_allocation_and_stack_free():
    h = SymmetricHeap(1024, 2048)
    a = h.alloc(3)
    b = h.align(64, 10)
    assert (a, b) == (1024, 1088)
    assert h.brk == 1104
    with pytest.raises(HeapOrderError):
        h.free(a)
    h.free(b)
    assert h.brk == 1032  # alignment padding released with the block
    h.free(a)
    assert h.brk == 1024 and not h.stack


def test_realloc_top_in_place():
    h = SymmetricHeap(0, 256)
    a = h.alloc(8)
    b = h.alloc(8)
    assert h.realloc(b, 100) == b
    assert h.brk == b + 104
    with pytest.raises(HeapOrderError):
        h.realloc(a, 16)
    assert h.realloc(b, 0) is None
    assert h.brk == b


def test_exhaustion_returns_none_and_keeps_state():
    h = SymmetricHeap(0, 64)
    a = h.alloc(40)
    assert h.alloc(40) is None
    assert h.realloc(a, 100) is None
    assert h.brk == 40 and h.block_at(a).size == 40


def test_bad_arguments():
    h = SymmetricHeap(0, 64)
    with pytest.raises(ValueError):
        h.alloc(0)
    with pytest.raises(ValueError):
        h.align(12, 8)
    with pytest.raises(UnknownBlockError):
        h.free(8)
    with pytest.raises(ValueError):
        SymmetricHeap(3, 64)


@given(st.integers(0, 2 ** 32))
def test_replay_matches_model(seed):
    ops = random_heap_ops(random.Random(seed), length=40)
    heaps = [SymmetricHeap(16384, 32768) for _ in range(3)]
    outcomes = [replay_heap_ops(h, ops) for h in heaps]
    assert outcomes[0] == outcomes[1] == outcomes[2]
    assert outcomes[0] == model_heap_ops(16384, 32768, ops)
    # the heap's break always matches its top block
    h = heaps[0]
    assert h.brk == (h.stack[-1].end if h.stack else h.base)
