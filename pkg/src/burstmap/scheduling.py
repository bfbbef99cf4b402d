"""Routing candidates and step scheduling of rotations on a tile grid.

Tiles are bit positions in an integer mask. A rotation is executable when a
connected set of free tiles reaches every tile hosting a qubit of its
support; a tile is reachable from the tiles in its *access* set (by default
the tiles directly above and below it, where its Z boundaries are). Rotations
run in the same step when their routing sets are pairwise disjoint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from burstmap.geometry import TileId

Candidates = tuple[int, ...]


def bits(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def _sort_key(mask: int) -> tuple:
    return mask.bit_count(), bits(mask)


class TileGraph:
    """Tile adjacency encoded as bitmasks.

    Args:
        tile_ids: Tiles available to the factory (hosting or routing).
        access: ``"vertical"`` (only the tiles above and below a tile can
            serve it) or ``"adjacent"`` (any 4-neighbour).
    """

    def __init__(self, tile_ids: Iterable[TileId], access: str = "vertical"):
        self.ids: tuple[TileId, ...] = tuple(sorted(tile_ids))
        if not self.ids:
            raise ValueError("tile graph needs at least one tile")
        if access not in ("vertical", "adjacent"):
            raise ValueError(f"unknown access rule {access!r}")
        self.access_rule = access
        self.index = {t: i for i, t in enumerate(self.ids)}
        self.n = len(self.ids)
        self.all = (1 << self.n) - 1
        self.nbr = [0] * self.n
        self.access = [0] * self.n
        for (r, c), i in self.index.items():
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                j = self.index.get((r + dr, c + dc))
                if j is None:
                    continue
                self.nbr[i] |= 1 << j
                if access == "adjacent" or dc == 0:
                    self.access[i] |= 1 << j
        # serves[i]: tiles that routing tile i can reach.
        self.serves = [sum(1 << t for t in range(self.n) if self.access[t] >> i & 1) for i in range(self.n)]
        self._build_connected()
        self.candidates = lru_cache(maxsize=None)(self._candidates)

    def mask(self, tiles: Iterable[TileId]) -> int:
        m = 0
        for t in tiles:
            m |= 1 << self.index[t]
        return m

    def tiles(self, mask: int) -> list[TileId]:
        return [self.ids[i] for i in bits(mask)]

    def is_connected(self, mask: int) -> bool:
        if mask == 0:
            return False
        seen = frontier = mask & -mask
        while frontier:
            grow = 0
            for i in bits(frontier):
                grow |= self.nbr[i]
            frontier = grow & mask & ~seen
            seen |= frontier
        return seen == mask

    def _build_connected(self) -> None:
        # ESU-style enumeration: every connected set once, rooted at its lowest tile.
        found: list[int] = []

        def extend(sub: int, closed: int, ext: int, root: int) -> None:
            found.append(sub)
            while ext:
                low = ext & -ext
                ext ^= low
                w = low.bit_length() - 1
                above = ~((1 << (root + 1)) - 1)
                new_ext = ext | (self.nbr[w] & ~closed & above)
                extend(sub | low, closed | self.nbr[w] | low, new_ext, root)

        for v in range(self.n):
            above = ~((1 << (v + 1)) - 1)
            extend(1 << v, self.nbr[v] | 1 << v, self.nbr[v] & above, v)
        found.sort(key=_sort_key)
        pos = {m: k for k, m in enumerate(found)}
        self.conn = np.array(found, dtype=np.int64)
        self.conn_list = found
        cov = np.zeros(len(found), dtype=np.int64)
        for i in range(self.n):
            has = (self.conn >> i) & 1
            cov |= np.where(has == 1, self.serves[i], 0)
        self.cov = cov
        sub = np.full((len(found), self.n), -1, dtype=np.int64)
        for k, m in enumerate(found):
            for i in bits(m):
                sub[k, i] = pos.get(m & ~(1 << i), -1)
        self.sub = sub

    def _candidates(self, occupied: int, support: int) -> Candidates:
        """Inclusion-minimal connected routing sets avoiding ``occupied`` that serve ``support``.

        Sorted by size, then by tile indices.
        """
        hit = ((self.conn & occupied) == 0) & ((self.cov & support) == support)
        idx = np.nonzero(hit)[0]
        if len(idx) == 0:
            return ()
        sub = self.sub[idx]
        sub_hit = (sub >= 0) & hit[np.maximum(sub, 0)]
        return tuple(self.conn_list[k] for k in idx[~sub_hit.any(axis=1)])


@dataclass(frozen=True)
class Schedule:
    """Steps of ``(rotation index, routing mask)`` claims."""

    steps: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def n_steps(self) -> int:
        return len(self.steps)


def rotation_candidates(graph: TileGraph, placement: Mapping[int, TileId], supports: Sequence[Iterable[int]],
                        offline: int = 0) -> list[Candidates] | None:
    """Routing candidates per rotation, or None if some rotation cannot run."""
    occupied = graph.mask(placement.values())
    out = []
    for s in supports:
        smask = graph.mask(placement[q] for q in s)
        cands = graph.candidates(occupied, smask)
        if offline:
            cands = tuple(m for m in cands if not m & offline)
        if not cands:
            return None
        out.append(cands)
    return out


def greedy_schedule(cands: Sequence[Candidates]) -> Schedule:
    """Pack rotations in index order, each taking its first disjoint candidate."""
    remaining = list(range(len(cands)))
    steps = []
    while remaining:
        used = 0
        step, rest = [], []
        for r in remaining:
            choice = next((m for m in cands[r] if not m & used), None)
            if choice is None:
                rest.append(r)
            else:
                used |= choice
                step.append((r, choice))
        steps.append(tuple(step))
        remaining = rest
    return Schedule(tuple(steps))


def lower_bound(cands: Sequence[Candidates], free: int) -> int:
    """Admissible bound on the number of steps.

    Combines the routing budget per step with a cut bound: rotations whose
    every candidate uses the same tile must run in different steps.
    """
    if not cands:
        return 0
    n_free = free.bit_count()
    best = math.ceil(sum(c[0].bit_count() for c in cands) / max(n_free, 1))
    # Mask of tiles appearing in every candidate of a rotation.
    always = []
    for c in cands:
        a = free
        for m in c:
            a &= m
        always.append(a)
    for i in bits(free):
        cnt = sum(1 for a in always if a >> i & 1)
        best = max(best, cnt)
    return best


def access_bound(graph: TileGraph, placement: Mapping[int, TileId], supports: Sequence[Iterable[int]],
                 free: int) -> int:
    """Cheap bound: a qubit's rotations each need their own free access tile per step."""
    deg: dict[int, int] = {}
    for s in supports:
        for q in s:
            deg[q] = deg.get(q, 0) + 1
    best = 0
    for q, d in deg.items():
        sides = (graph.access[graph.index[placement[q]]] & free).bit_count()
        if sides == 0:
            return math.inf
        best = max(best, math.ceil(d / sides))
    return best


class _Packer:
    """Exact partition of rotations into the fewest feasible steps."""

    def __init__(self, cands: Sequence[Candidates]):
        self.cands = cands
        self.memo: dict[int, tuple[tuple[int, int], ...] | None] = {}

    def group(self, gmask: int):
        """Disjoint claims for all rotations in ``gmask``, or None."""
        if gmask in self.memo:
            return self.memo[gmask]
        rots = sorted(bits(gmask), key=lambda r: len(self.cands[r]))
        claims: list[tuple[int, int]] = []

        def bt(k: int, used: int) -> bool:
            if k == len(rots):
                return True
            r = rots[k]
            for m in self.cands[r]:
                if not m & used:
                    claims.append((r, m))
                    if bt(k + 1, used | m):
                        return True
                    claims.pop()
            return False

        res = tuple(sorted(claims)) if bt(0, 0) else None
        self.memo[gmask] = res
        return res

    def partition(self, k: int) -> list[int] | None:
        n = len(self.cands)
        order = sorted(range(n), key=lambda r: (len(self.cands[r]), r))
        groups: list[int] = []
        failed: set[tuple[int, tuple[int, ...]]] = set()

        def assign(idx: int) -> bool:
            if idx == n:
                return True
            key = (idx, tuple(sorted(groups)))
            if key in failed:
                return False
            r = order[idx]
            for g in range(len(groups)):
                cand = groups[g] | 1 << r
                if self.group(cand) is not None:
                    old = groups[g]
                    groups[g] = cand
                    if assign(idx + 1):
                        return True
                    groups[g] = old
            if len(groups) < k:
                groups.append(1 << r)
                if assign(idx + 1):
                    return True
                groups.pop()
            failed.add(key)
            return False

        return list(groups) if assign(0) else None


def exact_schedule(cands: Sequence[Candidates], free: int, limit: int | None = None,
                   lb: int | None = None) -> Schedule | None:
    """Minimum-step schedule, or None if more than ``limit`` steps are needed.

    Iterative deepening from an admissible lower bound; each depth is a
    backtracking partition of rotations into feasible groups.
    """
    n = len(cands)
    if n == 0:
        return Schedule(())
    start = max(1, lb if lb is not None else lower_bound(cands, free))
    stop = n if limit is None else min(limit, n)
    packer = _Packer(cands)
    for k in range(start, stop + 1):
        groups = packer.partition(k)
        if groups is not None:
            steps = sorted((packer.group(g) for g in groups), key=lambda st: st[0][0])
            return Schedule(tuple(steps))
    return None


def check_schedule(schedule: Schedule, graph: TileGraph, placement: Mapping[int, TileId],
                   supports: Sequence[Iterable[int]], offline: int = 0) -> None:
    """Raise ``AssertionError`` unless ``schedule`` is valid."""
    seen = sorted(r for step in schedule.steps for r, _ in step)
    assert seen == list(range(len(supports))), f"rotations scheduled {seen}"
    occupied = graph.mask(placement.values())
    for step in schedule.steps:
        used = 0
        for r, m in step:
            assert not m & used, f"step claims overlap at rotation {r}"
            used |= m
            assert not m & (occupied | offline), f"rotation {r} routes through a blocked tile"
            assert graph.is_connected(m), f"rotation {r} claim is not connected"
            for q in supports[r]:
                t = graph.index[placement[q]]
                assert m & graph.access[t], f"rotation {r} does not reach qubit {q}"
