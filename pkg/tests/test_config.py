from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from eshmem.config import ConfigError, MachineConfig, Mode, dump_config, load_config, parse_config
from eshmem.timing import TimingParams
from eshmem.topology import Workgroup

EXAMPLE = """
# 4x4 chip at the usual origin, one dead core
grid = 4x4
origin = 32,8
disabled = 33,9
mode = timed
seed = 7
timing.dma_setup_cycles = 130
"""


def test_parse_example():
    cfg = parse_config(EXAMPLE)
    assert (cfg.rows, cfg.cols, cfg.origin) == (4, 4, (32, 8))
    assert cfg.disabled == {(33, 9)}
    assert cfg.mode is Mode.TIMED and cfg.seed == 7
    assert cfg.timing.dma_setup_cycles == 130
    assert cfg.get_workgroup().n_pes == 15


def test_load_config_file(tmp_path):
    path = tmp_path / "m.cfg"
    path.write_text(EXAMPLE)
    assert load_config(str(path)) == parse_config(EXAMPLE)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.cfg"))


@pytest.mark.parametrize("text, match", [
    ("grid = 4by4", "ROWSxCOLS"),
    ("bogus = 1", "unknown configuration key"),
    ("timing.warp_factor = 9", "unknown timing"),
    ("timing.hop_cycles = 0", "strictly positive"),
    ("mode = fast", "mode"),
    ("origin = 0,0", "local alias"),
    ("disabled = 1,1", "outside the grid"),
    ("origin = 62,8", "6-bit"),
    ("heap_base = 512", "no room"),
    ("no equals sign", "key = value"),
    ("workgroup.grid = 2x2\nworkgroup.origin = 40,40", "does not fit"),
])
def test_rejects_bad_config(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_workgroup_must_exclude_dead_cores():
    with pytest.raises(ConfigError, match="not excluded"):
        parse_config("disabled = 33,9\nworkgroup.grid = 2x2\nworkgroup.disabled = ")
    cfg = parse_config("disabled = 33,9\nworkgroup.grid = 2x2")
    assert cfg.get_workgroup().disabled == {(33, 9)}


@st.composite
def configs(draw):
    rows, cols = draw(st.integers(1, 6)), draw(st.integers(1, 6))
    origin = (draw(st.integers(1, 64 - rows)), draw(st.integers(0, 64 - cols)))
    cells = [(origin[0] + r, origin[1] + c) for r in range(rows) for c in range(cols)]
    dead = draw(st.sets(st.sampled_from(cells), max_size=len(cells) - 1))
    timing = TimingParams(hop_cycles=draw(st.integers(1, 5)), clock_hz=draw(st.sampled_from([6e8, 1e9, 7.5e8])))
    cfg = MachineConfig(rows=rows, cols=cols, origin=origin, disabled=frozenset(dead), timing=timing,
                        mode=draw(st.sampled_from(list(Mode))), seed=draw(st.integers(0, 2 ** 64 - 1)))
    if draw(st.booleans()):
        cfg = replace(cfg, workgroup=Workgroup(origin, rows, cols, frozenset(dead)))
    return cfg.validate()


@given(configs())
def test_dump_parse_round_trip(cfg):
    assert parse_config(dump_config(cfg)) == cfg
