"""Virtual PE ranks over a rectangular workgroup of physical cores.

Ranks enumerate the live cores of the rectangle in row-major order, skipping
disabled cores. Both directions of the mapping are table lookups.
"""

from dataclasses import dataclass, field
from typing import FrozenSet, Tuple

Coord = Tuple[int, int]

COORD_BITS = 6
COORD_LIMIT = 1 << COORD_BITS


class TopologyError(ValueError):
    pass


def check_coord(c):
    row, col = c
    if not (0 <= row < COORD_LIMIT and 0 <= col < COORD_LIMIT):
        raise TopologyError(f"coordinate {c} does not fit the {COORD_BITS}-bit address fields")


@dataclass(frozen=True)
class Workgroup:
    origin: Coord
    rows: int
    cols: int
    disabled: FrozenSet[Coord] = frozenset()
    _coords: Tuple[Coord, ...] = field(init=False, repr=False, compare=False)
    _ranks: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise TopologyError(f"workgroup extent {self.rows}x{self.cols} must be at least 1x1")
        origin = (int(self.origin[0]), int(self.origin[1]))
        check_coord(origin)
        check_coord((origin[0] + self.rows - 1, origin[1] + self.cols - 1))
        disabled = frozenset((int(r), int(c)) for r, c in self.disabled)
        for c in disabled:
            if not self.in_rectangle(c, origin):
                raise TopologyError(f"disabled core {c} lies outside the workgroup rectangle")
        coords = tuple(
            (origin[0] + r, origin[1] + c)
            for r in range(self.rows)
            for c in range(self.cols)
            if (origin[0] + r, origin[1] + c) not in disabled
        )
        if not coords:
            raise TopologyError("every core of the workgroup is disabled")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "disabled", disabled)
        object.__setattr__(self, "_coords", coords)
        object.__setattr__(self, "_ranks", {c: i for i, c in enumerate(coords)})

    def in_rectangle(self, c, origin=None):
        r0, c0 = self.origin if origin is None else origin
        return r0 <= c[0] < r0 + self.rows and c0 <= c[1] < c0 + self.cols

    @property
    def n_pes(self):
        return len(self._coords)

    @property
    def coords(self):
        return self._coords

    @property
    def is_full(self):
        return not self.disabled


def coord_of_pe(wg, pe):
    if not 0 <= pe < wg.n_pes:
        raise TopologyError(f"PE rank {pe} out of range [0, {wg.n_pes})")
    return wg.coords[pe]


def pe_of_coord(wg, c):
    c = (c[0], c[1])
    try:
        return wg._ranks[c]
    except KeyError:
        if c in wg.disabled:
            raise TopologyError(f"core {c} is disabled") from None
        raise TopologyError(f"core {c} is outside the workgroup rectangle") from None


def validate_workgroup(wg, config):
    """Check that ``wg`` fits the machine grid of ``config`` and excludes its dead cores."""
    r0, c0 = config.origin
    if not (r0 <= wg.origin[0] and wg.origin[0] + wg.rows <= r0 + config.rows
            and c0 <= wg.origin[1] and wg.origin[1] + wg.cols <= c0 + config.cols):
        raise TopologyError(
            f"workgroup {wg.rows}x{wg.cols} at {wg.origin} does not fit the "
            f"{config.rows}x{config.cols} grid at {config.origin}")
    missing = {c for c in config.disabled if wg.in_rectangle(c)} - wg.disabled
    if missing:
        raise TopologyError(f"machine-disabled cores {sorted(missing)} not excluded by the workgroup")
