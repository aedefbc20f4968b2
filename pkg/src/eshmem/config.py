"""Machine configuration and its ``key = value`` file format.

Example::

    # 4x4 chip at the usual origin, one dead core
    grid = 4x4
    origin = 32,8
    disabled = 33,9
    mode = timed
    seed = 7
    timing.dma_setup_cycles = 120

Keys: ``grid`` (or ``rows``/``cols``), ``origin``, ``disabled``,
``mem_per_core``, ``heap_base``, ``heap_limit``, ``static_bytes``, ``mode``, ``seed``,
``workgroup.origin``, ``workgroup.grid`` (or ``workgroup.rows``/``workgroup.cols``),
``workgroup.disabled`` and any ``timing.<field>`` of :class:`TimingParams`.
Coordinates are absolute chip coordinates. Lists of coordinates are
``row,col`` pairs separated by whitespace or ``;``.
"""

import enum
import re
from dataclasses import dataclass, field, fields, replace
from typing import FrozenSet, Optional, Tuple

from .heap import DEFAULT_HEAP_BASE, MIN_ALIGN
from .timing import TimingParams
from .topology import COORD_LIMIT, Coord, TopologyError, Workgroup, validate_workgroup

OFFSET_BITS = 20
# Top of the reserved region: runtime sync words, and below them the static
# symmetric data segment (the analogue of C globals declared in SHMEM programs).
RUNTIME_BYTES = 256
DEFAULT_STATIC_BYTES = 1024


class Mode(enum.Enum):
    FUNCTIONAL = "functional"
    TIMED = "timed"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MachineConfig:
    rows: int = 4
    cols: int = 4
    origin: Coord = (32, 8)
    mem_per_core: int = 32768
    disabled: FrozenSet[Coord] = frozenset()
    timing: TimingParams = field(default_factory=TimingParams)
    mode: Mode = Mode.TIMED
    seed: int = 0
    heap_base: int = DEFAULT_HEAP_BASE
    heap_limit: Optional[int] = None
    static_bytes: int = DEFAULT_STATIC_BYTES
    workgroup: Optional[Workgroup] = None

    def __post_init__(self):
        object.__setattr__(self, "origin", (int(self.origin[0]), int(self.origin[1])))
        object.__setattr__(self, "disabled", frozenset((int(r), int(c)) for r, c in self.disabled))
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", Mode(self.mode.lower()))
        if self.heap_limit is None:
            object.__setattr__(self, "heap_limit", self.mem_per_core)

    def validate(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"invalid grid extent {self.rows}x{self.cols}")
        r0, c0 = self.origin
        if r0 < 0 or c0 < 0 or r0 + self.rows > COORD_LIMIT or c0 + self.cols > COORD_LIMIT:
            raise ConfigError(f"grid {self.rows}x{self.cols} at {self.origin} exceeds the 6-bit coordinate fields")
        if r0 == 0 and c0 == 0:
            # core (0,0) would be indistinguishable from the local-alias window
            raise ConfigError("grid may not contain core (0,0); its address is the local alias")
        if self.mem_per_core < MIN_ALIGN or self.mem_per_core % 8:
            raise ConfigError(f"mem_per_core must be a positive multiple of 8, got {self.mem_per_core}")
        if self.mem_per_core > 1 << OFFSET_BITS:
            raise ConfigError(f"mem_per_core exceeds the {OFFSET_BITS}-bit offset field")
        for c in self.disabled:
            if not (r0 <= c[0] < r0 + self.rows and c0 <= c[1] < c0 + self.cols):
                raise ConfigError(f"disabled core {c} is outside the grid")
        if len(self.disabled) >= self.rows * self.cols:
            raise ConfigError("every core of the grid is disabled")
        if not 0 <= self.heap_base <= self.heap_limit <= self.mem_per_core:
            raise ConfigError(f"invalid heap bounds [{self.heap_base}, {self.heap_limit})")
        if self.heap_base % MIN_ALIGN or self.heap_limit % MIN_ALIGN:
            raise ConfigError("heap bounds must be 8-byte aligned")
        if self.static_bytes < 0 or self.static_bytes % MIN_ALIGN:
            raise ConfigError("static_bytes must be a non-negative multiple of 8")
        if self.heap_base < RUNTIME_BYTES + self.static_bytes:
            raise ConfigError(
                f"heap_base {self.heap_base} leaves no room below it for "
                f"{RUNTIME_BYTES} B of runtime words and {self.static_bytes} B of static data")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        try:
            validate_workgroup(self.get_workgroup(), self)
        except TopologyError as e:
            raise ConfigError(str(e)) from None
        return self

    @property
    def runtime_base(self):
        return self.heap_base - RUNTIME_BYTES

    @property
    def static_base(self):
        return self.runtime_base - self.static_bytes

    def get_workgroup(self):
        if self.workgroup is not None:
            return self.workgroup
        return Workgroup(self.origin, self.rows, self.cols, self.disabled)

    @property
    def live_cores(self):
        r0, c0 = self.origin
        return [(r0 + r, c0 + c) for r in range(self.rows) for c in range(self.cols)
                if (r0 + r, c0 + c) not in self.disabled]

    def describe(self):
        wg = self.get_workgroup()
        return (f"{self.rows}x{self.cols}@{self.origin[0]}:{self.origin[1]}"
                f" pes={wg.n_pes} mode={self.mode.value} seed={self.seed}")


_PAIR = re.compile(r"(\d+)\s*,\s*(\d+)")
_TIMING_FIELDS = {f.name: f.type for f in fields(TimingParams)}


def parse_coord(text):
    m = _PAIR.fullmatch(text.strip())
    if not m:
        raise ConfigError(f"expected 'row,col', got {text!r}")
    return int(m.group(1)), int(m.group(2))


def parse_coord_list(text):
    text = text.strip()
    if not text:
        return frozenset()
    leftover = _PAIR.sub("", text).replace(";", "").strip()
    if leftover:
        raise ConfigError(f"malformed coordinate list {text!r}")
    return frozenset((int(a), int(b)) for a, b in _PAIR.findall(text))


def parse_grid(text):
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not m:
        raise ConfigError(f"expected 'ROWSxCOLS', got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _int(key, text):
    try:
        return int(text, 0)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def parse_config(text):
    """Parse ``key = value`` lines into a validated :class:`MachineConfig`."""
    top, timing, wg = {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key.startswith("timing."):
            name = key[len("timing."):]
            if name not in _TIMING_FIELDS:
                raise ConfigError(f"line {lineno}: unknown timing parameter {name!r}")
            try:
                timing[name] = float(value) if name == "clock_hz" else _int(key, value)
            except ValueError:
                raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
        elif key.startswith("workgroup."):
            wg[key[len("workgroup."):]] = value
        else:
            top[key] = value

    kw = {}
    for key, value in top.items():
        if key == "grid":
            kw["rows"], kw["cols"] = parse_grid(value)
        elif key in ("rows", "cols", "mem_per_core", "heap_base", "heap_limit", "static_bytes", "seed"):
            kw[key] = _int(key, value)
        elif key == "origin":
            kw["origin"] = parse_coord(value)
        elif key == "disabled":
            kw["disabled"] = parse_coord_list(value)
        elif key == "mode":
            try:
                kw["mode"] = Mode(value.lower())
            except ValueError:
                raise ConfigError(f"mode must be 'functional' or 'timed', got {value!r}") from None
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    try:
        kw["timing"] = TimingParams(**timing)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    cfg = MachineConfig(**kw)

    if wg:
        unknown = set(wg) - {"origin", "grid", "rows", "cols", "disabled"}
        if unknown:
            raise ConfigError(f"unknown workgroup keys {sorted(unknown)}")
        rows, cols = cfg.rows, cfg.cols
        if "grid" in wg:
            rows, cols = parse_grid(wg["grid"])
        rows = _int("workgroup.rows", wg["rows"]) if "rows" in wg else rows
        cols = _int("workgroup.cols", wg["cols"]) if "cols" in wg else cols
        origin = parse_coord(wg["origin"]) if "origin" in wg else cfg.origin
        disabled = parse_coord_list(wg["disabled"]) if "disabled" in wg else frozenset(
            c for c in cfg.disabled
            if origin[0] <= c[0] < origin[0] + rows and origin[1] <= c[1] < origin[1] + cols)
        try:
            cfg = replace(cfg, workgroup=Workgroup(origin, rows, cols, disabled))
        except TopologyError as e:
            raise ConfigError(str(e)) from None
    return cfg.validate()


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text)


def dump_config(cfg):
    """Render ``cfg`` back into the file format (round-trips through :func:`parse_config`)."""
    lines = [
        f"grid = {cfg.rows}x{cfg.cols}",
        f"origin = {cfg.origin[0]},{cfg.origin[1]}",
        f"mem_per_core = {cfg.mem_per_core}",
        f"heap_base = {cfg.heap_base}",
        f"heap_limit = {cfg.heap_limit}",
        f"static_bytes = {cfg.static_bytes}",
        f"mode = {cfg.mode.value}",
        f"seed = {cfg.seed}",
    ]
    if cfg.disabled:
        lines.append("disabled = " + " ".join(f"{r},{c}" for r, c in sorted(cfg.disabled)))
    if cfg.workgroup is not None:
        wg = cfg.workgroup
        lines += [f"workgroup.origin = {wg.origin[0]},{wg.origin[1]}",
                  f"workgroup.grid = {wg.rows}x{wg.cols}",
                  "workgroup.disabled = " + " ".join(f"{r},{c}" for r, c in sorted(wg.disabled))]
    for f in fields(TimingParams):
        lines.append(f"timing.{f.name} = {getattr(cfg.timing, f.name)!r}")
    return "\n".join(lines) + "\n"
