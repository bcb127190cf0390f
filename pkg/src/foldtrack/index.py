"""Index calculus: geometric indices, free factor system heights, and the
direction-counting facts for finite graphs.

The geometric index of a track sums ``gates + 3*rank - 3`` over vertex
classes (stored gates are already stabilizer-orbit representatives); the
tree-level index sums ``valence + 3*rank - 3`` over branch vertices, and
the Gaboriau--Levitt variant uses coefficient 2 and offset 2.  Heights of
free factor systems are certified against a brute-force chain-enumeration
oracle over rank multisets.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, NamedTuple, Sequence

from .errors import Disconnected, FoldtrackError
from .graph import MarkedGraph
from .track import TrainTrack


class TrackIndex(NamedTuple):
    """Lexicographically ordered pair (height of elliptic system, geometric
    index)."""

    height: int
    geom: int


@dataclass(frozen=True)
class FreeFactorSystem:
    ranks: tuple[int, ...]  # sorted descending, all positive
    ambient_rank: int

    def __post_init__(self):
        object.__setattr__(self, "ranks", tuple(sorted(self.ranks, reverse=True)))
        if any(r < 1 for r in self.ranks):
            raise FoldtrackError("factor ranks must be positive")
        if sum(self.ranks) > self.ambient_rank:
            raise FoldtrackError("factor ranks exceed the ambient rank")


def geom_index_track(t: TrainTrack) -> int:
    total = 0
    for c in t.classes:
        total += len(t.gates_of_class(c.id)) + 3 * c.stab_rank - 3
    return total


def _branch_vertices(g: MarkedGraph) -> list[str]:
    out = []
    for vid in sorted(g.vertices):
        if g.valence(vid) >= 3 or g.vertices[vid].stab_rank >= 1:
            out.append(vid)
    return out


def geom_index_tree(g: MarkedGraph) -> int:
    return sum(
        g.valence(v) + 3 * g.vertices[v].stab_rank - 3 for v in _branch_vertices(g)
    )


def gl_index_tree(g: MarkedGraph) -> int:
    return sum(
        g.valence(v) + 2 * g.vertices[v].stab_rank - 2 for v in _branch_vertices(g)
    )


def elliptic_system(g: MarkedGraph) -> FreeFactorSystem:
    ranks = tuple(
        g.vertices[v].stab_rank for v in sorted(g.vertices) if g.vertices[v].stab_rank > 0
    )
    return FreeFactorSystem(ranks, g.ambient_rank)


def track_index(t: TrainTrack) -> TrackIndex:
    return TrackIndex(height(elliptic_system(t.graph)), geom_index_track(t))


# -- free factor systems: containment, chains, height ----------------------


def system_contains(small: Sequence[int], big: Sequence[int]) -> bool:
    """Can each small factor be conjugated into a big factor, respecting
    the rank budget of every big factor?

    Multiset encoding: an assignment of small parts to big parts exists
    with per-part sums bounded by the big ranks.
    """
    small = sorted(small, reverse=True)
    big = list(big)
    if sum(small) > sum(big):
        return False

    def place(i: int, capacity: tuple[int, ...]) -> bool:
        if i == len(small):
            return True
        tried: set[int] = set()
        for j, cap in enumerate(capacity):
            if cap >= small[i] and cap not in tried:
                tried.add(cap)
                rest = capacity[:j] + (cap - small[i],) + capacity[j + 1 :]
                if place(i + 1, rest):
                    return True
        return False

    return place(0, tuple(big))


def proper_containment(a: Sequence[int], b: Sequence[int]) -> bool:
    return sorted(a) != sorted(b) and system_contains(a, b)


def _all_systems(ambient: int) -> list[tuple[int, ...]]:
    """All rank multisets with positive parts and sum <= ambient."""
    out: set[tuple[int, ...]] = {()}
    for total in range(1, ambient + 1):
        for parts in _partitions(total):
            out.add(parts)
    return sorted(out, key=lambda p: (sum(p), len(p), p))


def _partitions(n: int, most: int | None = None) -> Iterable[tuple[int, ...]]:
    if most is None:
        most = n
    if n == 0:
        yield ()
        return
    for first in range(min(n, most), 0, -1):
        for rest in _partitions(n - first, first):
            yield (first,) + rest


def height_oracle(system: FreeFactorSystem) -> int:
    """Longest proper chain from the empty system, by exhaustive search
    over the containment order on rank multisets."""
    return _height_oracle_cached(tuple(sorted(system.ranks, reverse=True)), system.ambient_rank)


@lru_cache(maxsize=None)
def _height_oracle_cached(target: tuple[int, ...], ambient: int) -> int:
    systems = _all_systems(ambient)
    order = {s: i for i, s in enumerate(systems)}
    if target not in order:
        raise FoldtrackError(f"{target} is not a system for ambient rank {ambient}")

    @lru_cache(maxsize=None)
    def longest_to(s: tuple[int, ...]) -> int:
        best = 0
        for other in systems:
            if other != s and proper_containment(other, s):
                best = max(best, longest_to(tuple(sorted(other, reverse=True))) + 1)
        return best

    return longest_to(target)


def height_closed_form(system: FreeFactorSystem) -> int:
    """``2 * (total rank) - (number of factors)`` for nonempty systems.

    Certified against :func:`height_oracle` for all systems with ambient
    rank at most 5 in the test suite.
    """
    if not system.ranks:
        return 0
    return 2 * sum(system.ranks) - len(system.ranks)


def height(system: FreeFactorSystem, oracle: bool = False) -> int:
    if oracle:
        return height_oracle(system)
    return height_closed_form(system)


# -- direction counting on finite graphs -----------------------------------


@dataclass(frozen=True)
class GraphSkeleton:
    """A finite multigraph with no metric or marking data."""

    vertices: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]  # unordered endpoint pairs; loops allowed

    def valence(self, v: str) -> int:
        return sum((a == v) + (b == v) for a, b in self.edges)

    def rank(self) -> int:
        return len(self.edges) - len(self.vertices) + 1

    def leaves(self) -> list[str]:
        return [v for v in self.vertices if self.valence(v) == 1]

    def is_connected(self) -> bool:
        if not self.vertices:
            return False
        adj: dict[str, set[str]] = {v: set() for v in self.vertices}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        seen = {self.vertices[0]}
        stack = [self.vertices[0]]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(self.vertices)


def skeleton_of(g: MarkedGraph) -> GraphSkeleton:
    return GraphSkeleton(
        tuple(sorted(g.vertices)),
        tuple((g.edges[e].src, g.edges[e].dst) for e in sorted(g.edges)),
    )


def marked_direction_count(skeleton: GraphSkeleton, marked: Iterable[str]) -> int:
    """Number of directions (edge-ends) based at the marked vertices."""
    marked = set(marked)
    if not skeleton.is_connected():
        raise Disconnected("direction counts require a connected graph")
    if not marked <= set(skeleton.vertices):
        raise FoldtrackError("marked set contains unknown vertices")
    if not marked:
        raise FoldtrackError("marked set must be nonempty")
    return sum(skeleton.valence(v) for v in marked)


def bound_all_leaves(skeleton: GraphSkeleton, marked: Iterable[str]) -> bool:
    """Directions at marked points <= 2(l + r - 1) when all leaves marked."""
    marked = set(marked)
    if not set(skeleton.leaves()) <= marked:
        raise FoldtrackError("bound requires every leaf to be marked")
    count = marked_direction_count(skeleton, marked)
    return count <= 2 * (len(marked) + skeleton.rank() - 1)


def bound_one_unmarked_leaf(skeleton: GraphSkeleton, marked: Iterable[str]) -> bool:
    """Directions <= 2(l + r - 1) + 1 with exactly one unmarked leaf."""
    marked = set(marked)
    unmarked = [v for v in skeleton.leaves() if v not in marked]
    if len(unmarked) != 1:
        raise FoldtrackError("bound requires exactly one unmarked leaf")
    count = marked_direction_count(skeleton, marked)
    return count <= 2 * (len(marked) + skeleton.rank() - 1) + 1


def euler_direction_identity(skeleton: GraphSkeleton) -> bool:
    """All vertices marked: exactly 2(v + r - 1) directions."""
    count = marked_direction_count(skeleton, skeleton.vertices)
    return count == 2 * (len(skeleton.vertices) + skeleton.rank() - 1)
