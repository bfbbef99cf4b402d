"""Chip lattice, surface-code tiles and distance helpers.

Physical qubits live on a doubled-coordinate index grid: within a tile whose
origin is ``(R0, C0)``, data qubits sit at ``(R0 + 2i + 1, C0 + 2j + 1)`` and
measure qubits at even/even sites, which is the usual rotated surface code
layout. Nearest-neighbour qubits are one index step apart along *both* axes,
so one qubit spacing corresponds to ``sqrt(2)`` index units and
``ChipLattice.spacing`` is ``1/sqrt(2)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

Coord = tuple[int, int]
TileId = tuple[int, int]

QUBIT_SPACING = 1.0 / math.sqrt(2.0)


class ConfigurationError(ValueError):
    """Raised for invalid or inconsistent configuration input."""


class TileKind(str, Enum):
    LOGICAL = "logical"
    ROUTING = "routing"
    BUFFER = "buffer"


class TileStatus(str, Enum):
    ONLINE = "online"
    OFFLINE = "offline"


@dataclass(frozen=True)
class CodeDistances:
    """Factory code distances ``(d_X, d_Z, d_m)``."""

    d_x: int = 7
    d_z: int = 3
    d_m: int = 3

    def __post_init__(self):
        for name in ("d_x", "d_z", "d_m"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigurationError(f"{name} must be an integer >= 1, got {value!r}")
            if value % 2 == 0:
                warnings.warn(f"{name}={value} is even; odd distances are recommended", stacklevel=3)

    @property
    def c_t(self) -> int:
        """Cycles per distillation in the default layout (6 steps of d_m)."""
        return 6 * self.d_m


@dataclass(frozen=True)
class ChipLattice:
    width: int
    height: int
    spacing: float = QUBIT_SPACING

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigurationError("lattice width and height must be >= 1")

    def contains(self, q: Coord) -> bool:
        return 0 <= q[0] < self.height and 0 <= q[1] < self.width

    def distance(self, q1: Sequence[float], q2: Sequence[float]) -> float:
        """Distance in qubit spacings between two index-grid points."""
        return self.spacing * euclidean_distance(q1, q2)


@dataclass(frozen=True)
class Tile:
    id: TileId
    kind: TileKind
    region: tuple[int, int, int, int]  # row0, col0, row1, col1 (half-open)
    status: TileStatus = TileStatus.ONLINE

    def contains(self, q: Coord) -> bool:
        r0, c0, r1, c1 = self.region
        return r0 <= q[0] < r1 and c0 <= q[1] < c1

    def overlaps(self, other: "Tile") -> bool:
        a, b = self.region, other.region
        return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


@dataclass(frozen=True, eq=False)
class Chip:
    """A built chip: lattice, tiles and the qubits they host."""

    lattice: ChipLattice
    distances: CodeDistances
    tiles: tuple[Tile, ...]
    data_qubits: tuple[Coord, ...]
    measure_qubits: tuple[Coord, ...]
    tile_of_qubit: Mapping[Coord, TileId] = field(repr=False)

    @cached_property
    def qubits(self) -> tuple[Coord, ...]:
        return tuple(sorted(self.data_qubits + self.measure_qubits))

    @property
    def n_qubits(self) -> int:
        return len(self.data_qubits) + len(self.measure_qubits)

    @property
    def tile_ids(self) -> tuple[TileId, ...]:
        return tuple(t.id for t in self.tiles)

    def tile(self, tile_id: TileId) -> Tile:
        for t in self.tiles:
            if t.id == tile_id:
                return t
        raise KeyError(tile_id)

    def sites(self) -> np.ndarray:
        """All integer index-grid points covered by tiles, shape (n, 2)."""
        pts = []
        for t in self.tiles:
            r0, c0, r1, c1 = t.region
            rr, cc = np.mgrid[r0:r1, c0:c1]
            pts.append(np.stack([rr.ravel(), cc.ravel()], axis=1))
        return np.unique(np.concatenate(pts), axis=0)

    def qubits_in_tile(self, tile_id: TileId) -> list[Coord]:
        return [q for q in self.qubits if self.tile_of_qubit[q] == tile_id]


DEFAULT_FOOTPRINT: tuple[tuple[str, ...], ...] = (
    ("routing",) * 5,
    ("logical",) * 5,
    ("routing",) * 5,
)


def euclidean_distance(q1: Sequence[float], q2: Sequence[float]) -> float:
    return math.hypot(q1[0] - q2[0], q1[1] - q2[1])


def tile_shape(distances: CodeDistances) -> tuple[int, int]:
    """Index-grid rows and columns of one tile, including a one-site gap."""
    return 2 * distances.d_z + 2, 2 * distances.d_x + 2


def patch_qubits(origin: Coord, distances: CodeDistances) -> tuple[list[Coord], list[Coord]]:
    """Data and measure qubit coordinates of a rotated patch at ``origin``.

    Rows carry ``d_z`` data qubits and columns ``d_x``. X-type boundary checks
    sit on the top/bottom edges and Z-type on the left/right edges.
    """
    r0, c0 = origin
    nr, nc = distances.d_z, distances.d_x
    data = [(r0 + 2 * i + 1, c0 + 2 * j + 1) for i in range(nr) for j in range(nc)]
    measure = []
    for i in range(nr + 1):
        for j in range(nc + 1):
            basis = measure_basis(i, j)
            interior = 0 < i < nr and 0 < j < nc
            top_bottom = (i == 0 or i == nr) and 0 < j < nc
            left_right = (j == 0 or j == nc) and 0 < i < nr
            if interior or (top_bottom and basis == "X") or (left_right and basis == "Z"):
                measure.append((r0 + 2 * i, c0 + 2 * j))
    return data, measure


def measure_basis(i: int, j: int) -> str:
    """Checkerboard basis of the plaquette at local stabilizer index (i, j)."""
    return "X" if (i + j) % 2 == 0 else "Z"


def _tiles_from_grid(rows: Sequence[Sequence[str | None]], distances: CodeDistances) -> list[Tile]:
    th, tw = tile_shape(distances)
    tiles = []
    for r, row in enumerate(rows):
        for c, kind in enumerate(row):
            if kind in (None, "", "."):
                continue
            tiles.append(Tile((r, c), _kind(kind), (r * th, c * tw, (r + 1) * th, (c + 1) * tw)))
    return tiles


def _tiles_from_list(entries: Iterable[Mapping], distances: CodeDistances) -> list[Tile]:
    th, tw = tile_shape(distances)
    tiles = []
    for entry in entries:
        tid = tuple(entry["id"])
        r0, c0 = entry.get("origin", (tid[0] * th, tid[1] * tw))
        tiles.append(Tile(tid, _kind(entry["kind"]), (r0, c0, r0 + th, c0 + tw)))
    return tiles


def _kind(kind: str | TileKind) -> TileKind:
    try:
        return TileKind(kind)
    except ValueError:
        raise ConfigurationError(f"unknown tile kind {kind!r}") from None


def build_chip(distances: CodeDistances, footprint=None, buffer_columns: int = 0) -> Chip:
    """Build the lattice and tile set for a factory footprint.

    Args:
        distances: Factory code distances; every tile hosts a d_x by d_z patch.
        footprint: Either a grid (list of rows of tile-kind strings, ``"."``
            for an empty cell) or a list of ``{"id", "kind", "origin"}``
            mappings. Defaults to the 3x5 layout with a middle row of
            logical slots between two routing rows.
        buffer_columns: Number of buffer tile columns appended on the right
            of a grid footprint.

    Raises:
        ConfigurationError: On overlapping tiles, duplicate ids or an empty
            footprint.
    """
    footprint = DEFAULT_FOOTPRINT if footprint is None else footprint
    if footprint and isinstance(footprint[0], Mapping):
        tiles = _tiles_from_list(footprint, distances)
    else:
        rows = [list(row) + ["buffer"] * buffer_columns for row in footprint]
        tiles = _tiles_from_grid(rows, distances)
    if not tiles:
        raise ConfigurationError("footprint has no tiles")
    ids = [t.id for t in tiles]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("duplicate tile ids in footprint")
    for a in range(len(tiles)):
        if min(tiles[a].region) < 0:
            raise ConfigurationError(f"tile {tiles[a].id} has a negative origin")
        for b in range(a + 1, len(tiles)):
            if tiles[a].overlaps(tiles[b]):
                raise ConfigurationError(f"tiles {tiles[a].id} and {tiles[b].id} share qubit sites")
    tiles.sort(key=lambda t: t.id)

    height = max(t.region[2] for t in tiles)
    width = max(t.region[3] for t in tiles)
    data, measure, owner = [], [], {}
    for t in tiles:
        d, m = patch_qubits(t.region[:2], distances)
        data += d
        measure += m
        for q in d + m:
            owner[q] = t.id
    return Chip(
        lattice=ChipLattice(width=width, height=height),
        distances=distances,
        tiles=tuple(tiles),
        data_qubits=tuple(sorted(data)),
        measure_qubits=tuple(sorted(measure)),
        tile_of_qubit=owner,
    )


def tiles_touching(chip: Chip, flagged: Iterable[Coord]) -> frozenset[TileId]:
    """Tiles whose region contains at least one flagged qubit."""
    hit = set()
    for q in flagged:
        q = (int(q[0]), int(q[1]))
        owner = chip.tile_of_qubit.get(q)
        if owner is not None:
            hit.add(owner)
            continue
        for t in chip.tiles:
            if t.contains(q):
                hit.add(t.id)
                break
    return frozenset(hit)


def tile_adjacency(tile_ids: Iterable[TileId]) -> dict[TileId, list[TileId]]:
    """4-neighbour adjacency on the tile grid."""
    ids = set(tile_ids)
    adj = {}
    for r, c in ids:
        adj[(r, c)] = [n for n in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)) if n in ids]
    return adj
