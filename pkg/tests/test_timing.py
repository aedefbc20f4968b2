import math

import pytest
from hypothesis import given, strategies as st

from eshmem.timing import (
    DEFAULT_TIMING, TimingParams, copy_cycles, cpu_copy_cycles, cycles_to_seconds, dma_copy_cycles,
    hops, remote_transfer_cycles, round_up_to_poll,
)

coords = st.tuples(st.integers(0, 63), st.integers(0, 63))


def test_default_calibration():
    t = DEFAULT_TIMING
    assert cycles_to_seconds(t.wand_barrier_cycles) == pytest.approx(0.1e-6, rel=1e-12)
    assert cycles_to_seconds(16 * t.linear_barrier_cycles_per_pe) == pytest.approx(2.0e-6, rel=1e-12)
    assert t.peak_flops(16) == pytest.approx(19.2e9)


def test_copy_costs_frozen():
    # hand-computed from the default parameters
    assert cpu_copy_cycles(8) == 14
    assert cpu_copy_cycles(9) == 16
    assert dma_copy_cycles(8) == 125
    assert dma_copy_cycles(8192) == 120 + math.ceil(9 * 1024 / 2)
    assert copy_cycles(64, "dma") == dma_copy_cycles(64)
    with pytest.raises(ValueError):
        copy_cycles(8, "pigeon")
    with pytest.raises(ValueError):
        cpu_copy_cycles(0)


def test_remote_transfer_adds_hops_and_store():
    src, dst = (32, 8), (35, 11)
    assert remote_transfer_cycles(src, dst, 8) == cpu_copy_cycles(8) + 6 + 8
    assert remote_transfer_cycles(src, src, 8) == cpu_copy_cycles(8) + 8


def test_round_up_to_poll():
    assert round_up_to_poll(1) == 10
    assert round_up_to_poll(10) == 10
    assert round_up_to_poll(11) == 20


@pytest.mark.parametrize("field", ["clock_hz", "hop_cycles", "poll_quantum_cycles"])
def test_params_must_be_positive(field):
    with pytest.raises(ValueError):
        TimingParams(**{field: 0})


def test_backoff_bounds_ordered():
    with pytest.raises(ValueError):
        TimingParams(lock_backoff_min_cycles=64, lock_backoff_max_cycles=32)


@given(coords, coords, coords)
def test_hops_is_a_metric(a, b, c):
    assert hops(a, b) == hops(b, a)
    assert (hops(a, b) == 0) == (a == b)
    assert hops(a, c) <= hops(a, b) + hops(b, c)


@given(st.integers(1, 1 << 16), st.integers(0, 1 << 10))
def test_copy_costs_monotone(n, extra):
    assert cpu_copy_cycles(n) <= cpu_copy_cycles(n + extra)
    assert dma_copy_cycles(n) <= dma_copy_cycles(n + extra)
