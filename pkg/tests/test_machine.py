import pytest
from hypothesis import given, settings, strategies as st

from eshmem.config import Mode
from eshmem.machine import (
    AlignmentError, Atomic, DeadlockError, Delay, InaccessibleAddress, Read, Wait, Write,
    build_machine, decode_address, encode_address,
)


@given(st.integers(0, 63), st.integers(0, 63), st.integers(0, (1 << 20) - 1))
def test_address_round_trip(row, col, off):
    ga = encode_address((row, col), off)
    assert decode_address(ga) == ((row, col), off)
    assert ga < 1 << 32


def test_local_alias_resolves_to_issuer():
    assert decode_address(0x40, (33, 9)) == ((33, 9), 0x40)
    with pytest.raises(InaccessibleAddress):
        encode_address((64, 0), 0)
    with pytest.raises(InaccessibleAddress):
        encode_address((32, 8), 1 << 20)


def _writer(pe, offset):
    m = pe.machine
    yield Write(m.address((pe.rank + 1) % m.n_pes, offset), pe.rank.to_bytes(4, "little"))
    got = yield Read(offset, 4)  # local alias
    return int.from_bytes(got, "little")


@pytest.mark.parametrize("mode", list(Mode))
def test_remote_write_then_local_read(mode):
    m = build_machine(mode=mode, rows=2, cols=2)
    rep = m.run_spmd(_writer, 16384)
    # a write either landed before the owner's read or not; at the end it is always there
    for r in range(4):
        assert int.from_bytes(m.peek(r, 16384, 4), "little") == (r - 1) % 4
    assert all(e in (0, (r - 1) % 4) for r, e in enumerate(rep.exits))


def _counter(pe, n):
    ga = pe.machine.address(0, 16384)
    for _ in range(n):
        yield Atomic(ga, "fetch_add", 1, width=64)
    yield Wait(ga, "GE", n * pe.machine.n_pes, "<q")
    return 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.sampled_from(list(Mode)))
def test_atomics_never_lose_updates(seed, mode):
    m = build_machine(mode=mode, seed=seed)
    m.run_spmd(_counter, 5)
    assert int.from_bytes(m.peek(0, 16384, 8), "little") == 5 * 16


def _traffic(pe):
    m = pe.machine
    for i in range(4):
        dst = (pe.rank * 7 + i) % m.n_pes
        yield Atomic(m.address(dst, 16384), "add", pe.rank + 1, width=64)
        yield Delay(3 * pe.rank)
        yield Write(m.address(dst, 16392 + 8 * pe.rank), bytes([i] * 8))
    return pe.rank


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 64 - 1))
def test_seed_determinism_and_mode_agreement(seed):
    images = []
    for mode in (Mode.FUNCTIONAL, Mode.FUNCTIONAL, Mode.TIMED):
        m = build_machine(mode=mode, seed=seed)
        rep = m.run_spmd(_traffic)
        images.append((m.memory_image(), rep.exits))
    assert images[0] == images[1] == images[2]


def test_timed_cycle_counts():
    m = build_machine(mode=Mode.TIMED)

    def prog(pe):
        if pe.rank == 0:
            yield Write(pe.machine.address(15, 16384), bytes(8))  # 3+3 hops
        return None

    rep = m.run_spmd(prog)
    assert rep.cycles[0] == 14 + 6 + 8
    assert rep.cycles[1:] == [0] * 15


def test_deadlock_reported():
    m = build_machine(mode=Mode.FUNCTIONAL, rows=1, cols=2)

    def prog(pe):
        yield Wait(16384, "EQ", 1)

    with pytest.raises(DeadlockError, match="wait EQ 1"):
        m.run_spmd(prog)


def test_errors_raised_into_program():
    m = build_machine(mode=Mode.FUNCTIONAL, rows=1, cols=1)

    def prog(pe):
        try:
            yield Read(encode_address((40, 40), 0), 4)
        except InaccessibleAddress:
            pass
        else:
            return "no error"
        try:
            yield Atomic(16386, "add", 1, width=32)
        except AlignmentError:
            return "ok"

    assert m.run_spmd(prog).exits == ["ok"]


def test_disabled_core_is_inaccessible():
    m = build_machine(mode=Mode.FUNCTIONAL, disabled=frozenset({(33, 9)}))
    assert m.n_pes == 15
    with pytest.raises(InaccessibleAddress, match="not a live core"):
        m.resolve(encode_address((33, 9), 0), None)


def test_reset_zeroes_memory():
    m = build_machine(rows=1, cols=1)
    m.load(0, 100, b"\xff" * 4)
    m.reset()
    assert m.peek(0, 100, 4) == bytes(4)
