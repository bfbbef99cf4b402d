"""15-to-1 factory layout, T-state buffer and the re-mapping optimizer."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from burstmap.geometry import (
    Chip,
    CodeDistances,
    ConfigurationError,
    TileId,
    TileKind,
    build_chip,
    tiles_touching,
)
from burstmap.scheduling import (
    Schedule,
    TileGraph,
    access_bound,
    exact_schedule,
    greedy_schedule,
    lower_bound,
    rotation_candidates,
)

N_LOGICAL = 5
DEFAULT_D_BUF = 11


@dataclass(frozen=True)
class Rotation:
    id: int
    support: frozenset

    def __post_init__(self):
        object.__setattr__(self, "support", frozenset(self.support))
        if not self.support:
            raise ConfigurationError(f"rotation {self.id} has an empty support")
        if not self.support <= set(range(1, N_LOGICAL + 1)):
            raise ConfigurationError(f"rotation {self.id} support {sorted(self.support)} outside q1..q5")


def default_rotations() -> list[Rotation]:
    """Nonempty subsets of {q1..q4}; q5 joins the even-weight ones."""
    out = []
    for w in range(1, 5):
        for s in itertools.combinations(range(1, 5), w):
            out.append(Rotation(len(out) + 1, frozenset(s) | ({5} if w % 2 == 0 else set())))
    return out


def rotations_from_supports(supports: Iterable[Iterable[int]]) -> list[Rotation]:
    return [Rotation(i + 1, frozenset(s)) for i, s in enumerate(supports)]


@dataclass
class BufferState:
    capacity: int = 0
    d_buf: int = DEFAULT_D_BUF
    occupancy: int = 0

    def __post_init__(self):
        if self.capacity < 0 or not 0 <= self.occupancy <= self.capacity:
            raise ConfigurationError("buffer needs 0 <= occupancy <= capacity")

    def push(self) -> bool:
        """Store one distilled state; False if the buffer is full."""
        if self.occupancy >= self.capacity:
            return False
        self.occupancy += 1
        return True

    def flush(self) -> int:
        """Discard all buffered states, returning how many states are lost.

        The state being distilled when a ray is detected is lost as well.
        """
        lost = self.occupancy + 1
        self.occupancy = 0
        return lost


def buffer_requirements(c_d: float, d_m: int, d_buf: int = DEFAULT_D_BUF) -> tuple[int, int]:
    """(buffer slots, extra physical qubits) for a detection latency of ``c_d`` cycles."""
    if c_d < 0:
        raise ValueError("c_D must be >= 0")
    if math.isinf(c_d):
        raise ValueError("no finite buffer covers an undetectable ray")
    capacity = math.ceil(c_d / (6 * d_m))
    return capacity, capacity * 2 * d_buf**2


@dataclass
class FactoryLayout:
    chip: Chip
    placement: dict[int, TileId]
    rotations: list[Rotation] = field(default_factory=default_rotations)
    buffer: BufferState = field(default_factory=BufferState)

    def __post_init__(self):
        tiles = set(self.chip.tile_ids)
        targets = list(self.placement.values())
        if len(set(targets)) != len(targets):
            raise ConfigurationError("placement is not injective")
        for q, t in self.placement.items():
            if t not in tiles:
                raise ConfigurationError(f"q{q} placed on unknown tile {t}")
        for r in self.rotations:
            missing = r.support - set(self.placement)
            if missing:
                raise ConfigurationError(f"rotation {r.id} uses unplaced qubits {sorted(missing)}")

    @property
    def d_m(self) -> int:
        return self.chip.distances.d_m

    @property
    def c_t(self) -> int:
        return self.chip.distances.c_t

    @property
    def factory_tiles(self) -> list[TileId]:
        """Tiles usable for hosting or routing (everything except buffer tiles)."""
        return [t.id for t in self.chip.tiles if t.kind is not TileKind.BUFFER]


def default_layout(distances: CodeDistances | None = None, footprint=None,
                   rotations: Sequence[Rotation] | None = None) -> FactoryLayout:
    """Footprint with q1..q5 on the logical tiles in id order."""
    chip = build_chip(distances or CodeDistances(), footprint)
    logical = [t.id for t in chip.tiles if t.kind is TileKind.LOGICAL]
    if len(logical) < N_LOGICAL:
        raise ConfigurationError(f"footprint has {len(logical)} logical tiles, need {N_LOGICAL}")
    placement = {q: logical[q - 1] for q in range(1, N_LOGICAL + 1)}
    return FactoryLayout(chip, placement, list(rotations) if rotations is not None else default_rotations())


@dataclass(frozen=True)
class RemapResult:
    operable: bool
    placement: dict | None = None
    steps: int | None = None
    cycles: int | None = None
    schedule: Schedule | None = None

    def to_json(self, graph: TileGraph | None = None) -> dict:
        out = {"operable": self.operable, "steps": self.steps, "cycles": self.cycles}
        if self.placement is not None:
            out["placement"] = {f"q{q}": list(t) for q, t in sorted(self.placement.items())}
        if self.schedule is not None and graph is not None:
            out["schedule"] = [
                [{"rotation": r + 1, "routing": [list(t) for t in graph.tiles(m)]} for r, m in step]
                for step in self.schedule.steps
            ]
        return out


INOPERABLE = RemapResult(False)


def _automorphisms(supports: Sequence[frozenset], qubits: Sequence[int]) -> list[dict]:
    family = sorted(tuple(sorted(s)) for s in supports)
    out = []
    for perm in itertools.permutations(qubits):
        sigma = dict(zip(qubits, perm))
        image = sorted(tuple(sorted(sigma[q] for q in s)) for s in supports)
        if image == family:
            out.append(sigma)
    return out


def assignment_representatives(supports: Sequence[frozenset], qubits: Sequence[int]) -> list[tuple[int, ...]]:
    """Qubit-to-slot assignments up to relabelings that preserve the rotation set.

    Each entry gives, for qubits in order, the slot index (0..n-1) it occupies.
    """
    auts = _automorphisms(supports, qubits)
    pos = {q: k for k, q in enumerate(qubits)}
    seen, reps = set(), []
    for perm in itertools.permutations(range(len(qubits))):
        if perm in seen:
            continue
        reps.append(perm)
        for sigma in auts:
            # Relabeling qubit q as sigma[q] moves it to sigma[q]'s slot.
            seen.add(tuple(perm[pos[sigma[q]]] for q in qubits))
    return reps


class Remapper:
    """Finds the placement and schedule with the fewest steps given offline tiles.

    Results are cached by offline set. ``mode="exact"`` returns the true
    optimum over all placements, so cycles never decrease as tiles go offline.
    """

    def __init__(self, layout: FactoryLayout, mode: str = "exact", access: str = "vertical"):
        if mode not in ("exact", "greedy"):
            raise ValueError(f"unknown schedule mode {mode!r}")
        self.layout = layout
        self.mode = mode
        self.graph = TileGraph(layout.factory_tiles, access)
        self.qubits = sorted(layout.placement)
        self.supports = [frozenset(r.support) for r in layout.rotations]
        self.reps = assignment_representatives(self.supports, self.qubits)
        self._cache: dict[int, RemapResult] = {}

    def schedule(self, placement: Mapping[int, TileId], offline: int = 0) -> Schedule | None:
        cands = rotation_candidates(self.graph, placement, self.supports, offline)
        if cands is None:
            return None
        if self.mode == "greedy":
            return greedy_schedule(cands)
        free = self.graph.all & ~self.graph.mask(placement.values()) & ~offline
        return exact_schedule(cands, free)

    def _placements(self, offline: int):
        default = dict(self.layout.placement)
        if not self.graph.mask(default.values()) & offline:
            yield default
        online = [t for t in self.graph.ids if not self.graph.mask([t]) & offline]
        for tileset in itertools.combinations(online, len(self.qubits)):
            for rep in self.reps:
                pl = {q: tileset[rep[k]] for k, q in enumerate(self.qubits)}
                if pl != default:
                    yield pl

    def remap(self, offline: Iterable[TileId] = ()) -> RemapResult:
        off = self.graph.mask(t for t in offline if t in self.graph.index)
        if off not in self._cache:
            self._cache[off] = self._search(off)
        return self._cache[off]

    def _search(self, off: int) -> RemapResult:
        g = self.graph
        ranked = []
        for k, pl in enumerate(self._placements(off)):
            free = g.all & ~g.mask(pl.values()) & ~off
            cheap = access_bound(g, pl, self.supports, free)
            if cheap < math.inf:
                ranked.append((cheap, k, pl, free))
        ranked.sort(key=lambda x: (x[0], x[1]))
        best: tuple[int, dict, Schedule] | None = None
        for cheap, _, pl, free in ranked:
            if best is not None and cheap >= best[0]:
                break
            cands = rotation_candidates(g, pl, self.supports, off)
            if cands is None:
                continue
            if self.mode == "greedy":
                sched = greedy_schedule(cands)
            else:
                lb = max(cheap, lower_bound(cands, free))
                if best is not None and lb >= best[0]:
                    continue
                sched = exact_schedule(cands, free, None if best is None else best[0] - 1, lb)
            if sched is not None and (best is None or sched.n_steps < best[0]):
                best = (sched.n_steps, pl, sched)
        if best is None:
            return INOPERABLE
        steps, pl, sched = best
        return RemapResult(True, dict(pl), steps, steps * self.layout.d_m, sched)


def remap(layout: FactoryLayout, offline: Iterable[TileId] = (), mode: str = "exact") -> RemapResult:
    return Remapper(layout, mode).remap(offline)


@dataclass(frozen=True)
class DetectionRecord:
    offline_tiles: frozenset
    discarded_states: int
    result: RemapResult
    t_offline: float

    @property
    def noop(self) -> bool:
        return not self.offline_tiles


def on_detection(layout: FactoryLayout, remapper: Remapper, flags: Iterable, t_offline: float) -> DetectionRecord:
    """Abort the running distillation, flush the buffer and re-map around flagged tiles."""
    tiles = tiles_touching(layout.chip, flags) & set(remapper.graph.ids)
    if not tiles:
        return DetectionRecord(frozenset(), 0, remapper.remap(()), t_offline)
    lost = layout.buffer.flush()
    return DetectionRecord(frozenset(tiles), lost, remapper.remap(tiles), t_offline)


def dump_remap_json(result: RemapResult, graph: TileGraph, path) -> None:
    with open(path, "w") as fh:
        json.dump(result.to_json(graph), fh, indent=2, sort_keys=True)
        fh.write("\n")
