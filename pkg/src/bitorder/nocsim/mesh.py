"""2-D mesh topology, memory-controller placement and X-Y routing.

Coordinates are ``(x, y) = (column, row)``; East is +x and North is +y.
Node ``(x, y)`` has id ``y * cols + x``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

LOCAL, EAST, WEST, NORTH, SOUTH = range(5)
OPPOSITE = (LOCAL, WEST, EAST, SOUTH, NORTH)
_DELTA = {EAST: (1, 0), WEST: (-1, 0), NORTH: (0, 1), SOUTH: (0, -1)}


class Direction(enum.Enum):
    LOCAL = LOCAL
    EAST = EAST
    WEST = WEST
    NORTH = NORTH
    SOUTH = SOUTH

    @property
    def label(self) -> str:
        return self.name.capitalize()


class ConfigError(ValueError):
    """Inconsistent or out-of-range NoC configuration."""


Coord = tuple[int, int]

# Placements used for the MC2 / MC4 / MC8 configurations; other shapes fall
# back to evenly spaced perimeter nodes.
_PRESET_MCS: dict[tuple[int, int, int], tuple[Coord, ...]] = {
    (4, 4, 2): ((0, 1), (3, 1)),
    (8, 8, 4): ((0, 3), (3, 7), (7, 4), (4, 0)),
    (8, 8, 8): ((0, 2), (0, 5), (2, 7), (5, 7), (7, 5), (7, 2), (5, 0), (2, 0)),
}


def perimeter(rows: int, cols: int) -> list[Coord]:
    """Border nodes clockwise from the west edge's middle."""
    if rows == 1 or cols == 1:
        return [(x, y) for y in range(rows) for x in range(cols)]
    ring = [(0, y) for y in range(rows)]
    ring += [(x, rows - 1) for x in range(1, cols)]
    ring += [(cols - 1, y) for y in range(rows - 2, -1, -1)]
    ring += [(x, 0) for x in range(cols - 2, 0, -1)]
    start = (rows - 1) // 2
    return ring[start:] + ring[:start]


def default_mc_positions(rows: int, cols: int, n_mcs: int) -> tuple[Coord, ...]:
    if (rows, cols, n_mcs) in _PRESET_MCS:
        return _PRESET_MCS[(rows, cols, n_mcs)]
    ring = perimeter(rows, cols)
    if not 0 < n_mcs <= len(ring):
        raise ConfigError(f"cannot place {n_mcs} memory controllers on a {rows}x{cols} mesh perimeter")
    return tuple(ring[(i * len(ring)) // n_mcs] for i in range(n_mcs))


@dataclass(frozen=True)
class MeshConfig:
    rows: int = 4
    cols: int = 4
    vc_count: int = 4
    vc_depth: int = 4
    link_width: int = 512
    mc_positions: tuple[Coord, ...] = field(default=())
    routing: str = "XY"
    pe_latency: int = 4
    cycle_cap: int = 50_000_000

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("mesh needs at least one row and one column")
        if self.vc_count < 1 or self.vc_depth < 1:
            raise ConfigError("vc_count and vc_depth must be positive")
        if self.link_width < 1:
            raise ConfigError("link_width must be positive")
        if self.routing.upper() != "XY":
            raise ConfigError(f"only X-Y routing is supported, got {self.routing!r}")
        mcs = tuple((int(x), int(y)) for x, y in self.mc_positions)
        object.__setattr__(self, "mc_positions", mcs)
        if len(set(mcs)) != len(mcs):
            raise ConfigError(f"duplicate memory-controller positions: {mcs}")
        for x, y in mcs:
            if not (0 <= x < self.cols and 0 <= y < self.rows):
                raise ConfigError(f"memory controller {(x, y)} outside {self.cols}x{self.rows} mesh")

    @classmethod
    def preset(cls, name: str, link_width: int = 512, **kw) -> "MeshConfig":
        """``MC2`` (4x4, 2 MCs), ``MC4`` (8x8, 4 MCs) or ``MC8`` (8x8, 8 MCs)."""
        shapes = {"MC2": (4, 4, 2), "MC4": (8, 8, 4), "MC8": (8, 8, 8)}
        try:
            rows, cols, n = shapes[name.upper()]
        except KeyError:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(shapes)}") from None
        return cls(rows, cols, link_width=link_width,
                   mc_positions=default_mc_positions(rows, cols, n), **kw)

    def check_word_width(self, word_width: int) -> int:
        """Values per flit for ``word_width``-bit payload words."""
        if self.link_width % word_width:
            raise ConfigError(f"link width {self.link_width} not divisible by word width {word_width}")
        per_flit = self.link_width // word_width
        if per_flit % 2:
            raise ConfigError(f"{per_flit} values per flit cannot split into input/weight halves")
        return per_flit

    def describe(self) -> dict:
        return {
            "rows": self.rows, "cols": self.cols, "vc_count": self.vc_count,
            "vc_depth": self.vc_depth, "link_width": self.link_width,
            "mc_positions": [list(p) for p in self.mc_positions], "routing": self.routing,
            "pe_latency": self.pe_latency, "cycle_cap": self.cycle_cap,
        }


@dataclass(frozen=True)
class Link:
    src: Coord
    dst: Coord
    direction: Direction


@dataclass
class Network:
    config: MeshConfig
    links: list[Link]
    neighbours: list[list[int]]

    @property
    def n_routers(self) -> int:
        return self.config.rows * self.config.cols

    @property
    def undirected_links(self) -> int:
        return len(self.links) // 2

    @property
    def mc_nodes(self) -> list[int]:
        return [node_id(self.config, p) for p in self.config.mc_positions]

    @property
    def pe_nodes(self) -> list[int]:
        mcs = set(self.mc_nodes)
        return [n for n in range(self.n_routers) if n not in mcs]

    def coord(self, node: int) -> Coord:
        return node % self.config.cols, node // self.config.cols


def node_id(config: MeshConfig, coord: Coord) -> int:
    return coord[1] * config.cols + coord[0]


def build_mesh(config: MeshConfig) -> Network:
    """Routers with one BT-counted channel per direction of every inter-router link."""
    rows, cols = config.rows, config.cols
    links = []
    neighbours = []
    for y in range(rows):
        for x in range(cols):
            nb = [-1] * 5
            for port, (dx, dy) in _DELTA.items():
                nx, ny = x + dx, y + dy
                if 0 <= nx < cols and 0 <= ny < rows:
                    nb[port] = ny * cols + nx
                    links.append(Link((x, y), (nx, ny), Direction(port)))
            neighbours.append(nb)
    return Network(config, links, neighbours)


def _check_coord(config: MeshConfig, c: Coord) -> None:
    if not (0 <= c[0] < config.cols and 0 <= c[1] < config.rows):
        raise ConfigError(f"coordinate {c} outside {config.cols}x{config.rows} mesh")


def xy_route(src: Coord, dst: Coord, config: MeshConfig | None = None) -> list[Direction]:
    """Output ports along the dimension-order path, X resolved before Y."""
    if config is not None:
        _check_coord(config, src)
        _check_coord(config, dst)
    elif min(src + dst) < 0:
        raise ConfigError("coordinates must be non-negative")
    dx = dst[0] - src[0]
    dy = dst[1] - src[1]
    hops = [Direction.EAST if dx > 0 else Direction.WEST] * abs(dx)
    hops += [Direction.NORTH if dy > 0 else Direction.SOUTH] * abs(dy)
    return hops


def xy_next_port(cur: Coord, dst: Coord) -> int:
    if dst[0] > cur[0]:
        return EAST
    if dst[0] < cur[0]:
        return WEST
    if dst[1] > cur[1]:
        return NORTH
    if dst[1] < cur[1]:
        return SOUTH
    return LOCAL


def manhattan(a: Coord, b: Coord) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])
