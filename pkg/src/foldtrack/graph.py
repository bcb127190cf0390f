"""Metric marked graphs: finite quotients of minimal simplicial free-group
trees with trivial edge stabilizers.

A :class:`MarkedGraph` stores a finite connected metric graph, per-vertex
free stabilizer data (rank plus explicit generator words in the ambient
basis), and a marking: a base vertex, a spanning tree and a word for every
non-tree edge.  Tree edges contribute the identity to path words, so the
words of the non-tree edges together with all vertex-group generators form
the marking family; the graph represents a rank-``N`` tree exactly when
first Betti number plus total stabilizer rank equals ``N`` and the marking
family generates.

All lengths are exact rationals.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from . import fgroup
from .errors import FoldtrackError, NotAPath, NotClosed, OutOfRange, ValidationError, Verdict

# Oriented edges and directions share one serialization: "e12+" is the edge
# e12 run from its src endpoint, "e12-" the reverse run.  Read as a
# *direction*, "e12+" is the germ of e12 at its src vertex and "e12-" the
# germ at its dst vertex.

SRC = "+"
DST = "-"


def oedge(edge_id: str, sign: str) -> str:
    return edge_id + sign


def split_oedge(o: str) -> tuple[str, str]:
    return o[:-1], o[-1]


def reverse_oedge(o: str) -> str:
    eid, sign = split_oedge(o)
    return eid + (DST if sign == SRC else SRC)


@dataclass(frozen=True)
class VertexData:
    stab_rank: int = 0
    stab_gens: tuple[str, ...] = ()


@dataclass(frozen=True)
class EdgeData:
    src: str
    dst: str
    length: Fraction

    def is_loop(self) -> bool:
        return self.src == self.dst


@dataclass(frozen=True)
class Marking:
    base: str
    tree: frozenset[str]
    words: Mapping[str, str]  # non-tree edge id -> reduced word


@dataclass(frozen=True)
class MarkedGraph:
    ambient_rank: int
    vertices: Mapping[str, VertexData]
    edges: Mapping[str, EdgeData]
    marking: Marking

    # -- elementary accessors -----------------------------------------

    def endpoints(self, o: str) -> tuple[str, str]:
        eid, sign = split_oedge(o)
        e = self.edges[eid]
        return (e.src, e.dst) if sign == SRC else (e.dst, e.src)

    def direction_vertex(self, d: str) -> str:
        """Base vertex of a direction (the germ end of the edge)."""
        eid, sign = split_oedge(d)
        e = self.edges[eid]
        return e.src if sign == SRC else e.dst

    def directions_at(self, v: str) -> list[str]:
        out = []
        for eid in sorted(self.edges):
            e = self.edges[eid]
            if e.src == v:
                out.append(oedge(eid, SRC))
            if e.dst == v:
                out.append(oedge(eid, DST))
        return out

    def all_directions(self) -> list[str]:
        out = []
        for eid in sorted(self.edges):
            out.append(oedge(eid, SRC))
            out.append(oedge(eid, DST))
        return out

    def valence(self, v: str) -> int:
        return len(self.directions_at(v))


def betti(g: MarkedGraph) -> int:
    return len(g.edges) - len(g.vertices) + 1


def volume(g: MarkedGraph) -> Fraction:
    return sum((e.length for e in g.edges.values()), Fraction(0))


def marking_family(g: MarkedGraph) -> list[str]:
    """Non-tree edge words plus all vertex generators (base-conjugated)."""
    words = [g.marking.words[eid] for eid in sorted(g.marking.words)]
    for vid in sorted(g.vertices):
        words.extend(g.vertices[vid].stab_gens)
    return words


# -- connectivity and spanning trees -----------------------------------


def _adjacency(g: MarkedGraph) -> dict[str, list[tuple[str, str]]]:
    adj: dict[str, list[tuple[str, str]]] = {v: [] for v in g.vertices}
    for eid in sorted(g.edges):
        e = g.edges[eid]
        adj[e.src].append((oedge(eid, SRC), e.dst))
        adj[e.dst].append((oedge(eid, DST), e.src))
    return adj


def is_connected(g: MarkedGraph) -> bool:
    if not g.vertices:
        return False
    adj = _adjacency(g)
    seen = {next(iter(sorted(g.vertices)))}
    stack = list(seen)
    while stack:
        v = stack.pop()
        for _, w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(g.vertices)


def bfs_tree(g: MarkedGraph, root: str) -> tuple[frozenset[str], dict[str, list[str]]]:
    """Deterministic BFS spanning tree; returns (tree edge ids, paths).

    ``paths[v]`` is the oriented-edge path from ``root`` to ``v`` inside
    the tree.
    """
    adj = _adjacency(g)
    paths: dict[str, list[str]] = {root: []}
    tree: set[str] = set()
    frontier = [root]
    while frontier:
        nxt: list[str] = []
        for v in frontier:
            for o, w in adj[v]:
                if w not in paths:
                    paths[w] = paths[v] + [o]
                    tree.add(split_oedge(o)[0])
                    nxt.append(w)
        frontier = nxt
    return frozenset(tree), paths


def tree_paths(g: MarkedGraph) -> dict[str, list[str]]:
    """Paths from the base to every vertex inside the marking's tree."""
    adj: dict[str, list[tuple[str, str]]] = {v: [] for v in g.vertices}
    for eid in sorted(g.marking.tree):
        e = g.edges[eid]
        adj[e.src].append((oedge(eid, SRC), e.dst))
        adj[e.dst].append((oedge(eid, DST), e.src))
    paths: dict[str, list[str]] = {g.marking.base: []}
    frontier = [g.marking.base]
    while frontier:
        nxt = []
        for v in frontier:
            for o, w in adj[v]:
                if w not in paths:
                    paths[w] = paths[v] + [o]
                    nxt.append(w)
        frontier = nxt
    return paths


# -- path words ---------------------------------------------------------


def oedge_label(g: MarkedGraph, o: str) -> str:
    """Marking contribution of one oriented edge (identity for tree edges)."""
    eid, sign = split_oedge(o)
    if eid in g.marking.tree:
        return ""
    w = g.marking.words[eid]
    return w if sign == SRC else fgroup.inverse(w)


def path_word(g: MarkedGraph, path: Sequence[str]) -> str:
    """Reduced word of an edge path (base-conjugated labels telescope)."""
    return fgroup.multiply(*(oedge_label(g, o) for o in path)) if path else ""


def check_path(g: MarkedGraph, path: Sequence[str]) -> tuple[str, str]:
    """Validate continuity; return (start vertex, end vertex)."""
    if not path:
        raise NotAPath("empty path has no endpoints")
    cur = None
    start = None
    for o in path:
        eid, _ = split_oedge(o)
        if eid not in g.edges:
            raise NotAPath(f"unknown edge {eid!r}")
        s, t = g.endpoints(o)
        if start is None:
            start = s
            cur = s
        if s != cur:
            raise NotAPath(f"discontinuity at {o!r}")
        cur = t
    return start, cur  # type: ignore[return-value]


def loop_word(g: MarkedGraph, path: Sequence[str]) -> str:
    """Reduced marking word of a closed path (closed at any vertex).

    A path closed away from the base is conjugated back by tree paths,
    which contribute the identity; so this is just the path word, but the
    path must be closed.
    """
    if not path:
        return ""
    start, end = check_path(g, path)
    if start != end:
        raise NotClosed(f"path runs {start!r} -> {end!r}")
    return path_word(g, path)


# -- validation ----------------------------------------------------------


def validate(g: MarkedGraph) -> Verdict:
    """Check every structural invariant; report the first violation."""
    for eid in sorted(g.edges):
        e = g.edges[eid]
        if e.src not in g.vertices or e.dst not in g.vertices:
            return Verdict.bad("connectivity", eid, "edge endpoint missing")
        if e.length <= 0:
            return Verdict.bad("nonpositive_length", eid, f"length {e.length}")
    if g.marking.base not in g.vertices:
        return Verdict.bad("connectivity", g.marking.base, "base vertex missing")
    if not is_connected(g):
        return Verdict.bad("connectivity", "", "graph is not connected")
    # spanning tree: right edge count and reaches every vertex
    if not g.marking.tree <= set(g.edges):
        return Verdict.bad("connectivity", "", "tree contains unknown edges")
    reach = tree_paths(g)
    if len(reach) != len(g.vertices) or len(g.marking.tree) != len(g.vertices) - 1:
        return Verdict.bad("connectivity", "", "marking tree is not a spanning tree")
    if set(g.marking.words) != set(g.edges) - g.marking.tree:
        return Verdict.bad("marking_not_surjective", "", "words must cover exactly the non-tree edges")
    for vid in sorted(g.vertices):
        vd = g.vertices[vid]
        if vd.stab_rank < 0 or len(vd.stab_gens) != vd.stab_rank:
            return Verdict.bad("rank_mismatch", vid, "stab_gens must list stab_rank words")
    if betti(g) + sum(v.stab_rank for v in g.vertices.values()) != g.ambient_rank:
        return Verdict.bad(
            "rank_mismatch",
            "",
            f"betti {betti(g)} + stabilizers != ambient rank {g.ambient_rank}",
        )
    for vid in sorted(g.vertices):
        if g.valence(vid) <= 1 and g.vertices[vid].stab_rank == 0:
            return Verdict.bad("minimality", vid, "trivially stabilized vertex of valence <= 1")
    family = marking_family(g)
    for w in family:
        if not fgroup.check_alphabet(w, g.ambient_rank):
            return Verdict.bad("marking_not_surjective", w, "word outside ambient alphabet")
    if not fgroup.generates_full(family, g.ambient_rank):
        return Verdict.bad("marking_not_surjective", "", "marking family does not generate")
    return Verdict.good()


# -- fresh ids -----------------------------------------------------------


def fresh_ids(taken: Iterable[str], prefix: str, count: int) -> list[str]:
    taken = set(taken)
    out: list[str] = []
    n = 0
    while len(out) < count:
        cand = f"{prefix}{n}"
        if cand not in taken:
            out.append(cand)
            taken.add(cand)
        n += 1
    return out


# -- subdivision ----------------------------------------------------------


@dataclass(frozen=True)
class SubdivisionInfo:
    edge: str
    new_vertex: str
    head: str  # src -> new_vertex, carried into the tree
    tail: str  # new_vertex -> dst, inherits the marking word if non-tree


def subdivide(g: MarkedGraph, eid: str, at: Fraction) -> tuple[MarkedGraph, SubdivisionInfo]:
    """Split edge ``eid`` at distance ``at`` from its src endpoint.

    The new valence-2 vertex has trivial stabilizer; every loop word is
    unchanged because the head sub-edge joins the spanning tree.
    """
    if eid not in g.edges:
        raise NotAPath(f"unknown edge {eid!r}")
    e = g.edges[eid]
    at = Fraction(at)
    if not (0 < at < e.length):
        raise OutOfRange(f"subdivision point {at} outside (0, {e.length})")
    (new_v,) = fresh_ids(g.vertices, "v", 1)
    head, tail = fresh_ids(g.edges, "e", 2)
    vertices = dict(g.vertices)
    vertices[new_v] = VertexData()
    edges = {k: v for k, v in g.edges.items() if k != eid}
    edges[head] = EdgeData(e.src, new_v, at)
    edges[tail] = EdgeData(new_v, e.dst, e.length - at)
    tree = set(g.marking.tree)
    words = dict(g.marking.words)
    if eid in tree:
        tree.discard(eid)
        tree.update((head, tail))
    else:
        word = words.pop(eid)
        tree.add(head)
        words[tail] = word
    marking = Marking(g.marking.base, frozenset(tree), words)
    g2 = MarkedGraph(g.ambient_rank, vertices, edges, marking)
    return g2, SubdivisionInfo(eid, new_v, head, tail)


@dataclass(frozen=True)
class UnsubdivisionInfo:
    removed_vertex: str
    new_edge: str
    germ1: str  # the two germs at the removed vertex; the new edge's
    germ2: str  # positive run is reverse(germ1) then germ2


def unsubdivide(g: MarkedGraph, v: str) -> tuple[MarkedGraph, UnsubdivisionInfo]:
    """Remove a trivially-stabilized valence-2 vertex, merging its edges.

    Inverse of :func:`subdivide` up to naming; loop words are unchanged.
    """
    if v not in g.vertices or g.vertices[v].stab_rank != 0 or g.valence(v) != 2:
        raise OutOfRange(f"{v!r} is not a trivially stabilized valence-2 vertex")
    if v == g.marking.base:
        raise OutOfRange("cannot remove the base vertex")
    g1, g2 = g.directions_at(v)
    x1 = g.endpoints(g1)[1]
    x2 = g.endpoints(g2)[1]
    if v in (x1, x2):
        raise OutOfRange("cannot remove a vertex carrying a loop")
    e1 = split_oedge(g1)[0]
    e2 = split_oedge(g2)[0]
    (new_edge,) = fresh_ids(g.edges, "e", 1)
    vertices = {k: d for k, d in g.vertices.items() if k != v}
    edges = {k: d for k, d in g.edges.items() if k not in (e1, e2)}
    edges[new_edge] = EdgeData(x1, x2, g.edges[e1].length + g.edges[e2].length)
    info = UnsubdivisionInfo(v, new_edge, g1, g2)
    interim = MarkedGraph(g.ambient_rank, vertices, edges, Marking(g.marking.base, frozenset(), {}))
    tree, _ = bfs_tree(interim, g.marking.base)
    tree_by_vertex = _paths_in_tree(interim, tree, g.marking.base)

    def lift(path: Sequence[str]) -> list[str]:
        out: list[str] = []
        for o in path:
            eid, sign = split_oedge(o)
            if eid != new_edge:
                out.append(o)
            elif sign == SRC:
                out.extend((reverse_oedge(g1), g2))
            else:
                out.extend((reverse_oedge(g2), g1))
        return out

    words: dict[str, str] = {}
    for eid in sorted(edges):
        if eid in tree:
            continue
        e = edges[eid]
        loop = tree_by_vertex[e.src] + [oedge(eid, SRC)] + _reverse_path(tree_by_vertex[e.dst])
        words[eid] = path_word(g, lift(loop))
    new_vertices: dict[str, VertexData] = {}
    for vid in vertices:
        gens = []
        gamma = path_word(g, lift(tree_by_vertex[vid]))
        for w in g.vertices[vid].stab_gens:
            gens.append(fgroup.conjugate(w, gamma))
        new_vertices[vid] = VertexData(len(gens), tuple(gens))
    g2_out = MarkedGraph(
        g.ambient_rank, new_vertices, edges, Marking(g.marking.base, tree, words)
    )
    return g2_out, info


# -- the elementary fold primitive ----------------------------------------


@dataclass(frozen=True)
class FoldInfo:
    kept: str  # oriented edge a, surviving
    dropped: str  # oriented edge b, deleted
    merged_vertex: str  # b's far endpoint, merged away
    into_vertex: str  # a's far endpoint
    shared_vertex: str


def _lift_path(
    g: MarkedGraph, info: FoldInfo, path: Sequence[str], start: str, close: bool = True
) -> tuple[list[str], str]:
    """Rewrite a folded-graph path as a pre-fold path.

    Where the folded path switches between germs native to the two merged
    endpoints, insert the connector ``reverse(a) . b`` (or its reverse).
    ``start`` names the pre-fold vertex the lift begins at.  Returns the
    lifted path and its pre-fold end vertex (== ``start`` when closing).
    """
    a, b = info.kept, info.dropped
    x, y = info.into_vertex, info.merged_vertex
    connector_xy = [reverse_oedge(a), b]
    connector_yx = [reverse_oedge(b), a]
    lifted: list[str] = []
    cur = start
    for o in path:
        s, t = g.endpoints(o)
        if s != cur:
            if {s, cur} != {x, y}:
                raise NotAPath(f"lift discontinuity at {o!r}")
            lifted.extend(connector_xy if cur == x else connector_yx)
        lifted.append(o)
        cur = t
    if close and cur != start:
        if {cur, start} != {x, y}:
            raise NotAPath("lift does not close up")
        lifted.extend(connector_xy if cur == x else connector_yx)
        cur = start
    return lifted, cur


def fold_edges(g: MarkedGraph, a: str, b: str) -> tuple[MarkedGraph, FoldInfo]:
    """Equivariantly identify oriented edge ``b`` with oriented edge ``a``.

    Both must leave one shared vertex and have equal lengths; ``b``'s far
    endpoint is merged into ``a``'s and the edge ``b`` disappears.  The
    marking is recomputed so that the identification is marking-preserving;
    stabilizer generators of the merged vertex are conjugated across the
    fold before being joined.
    """
    a_eid, _ = split_oedge(a)
    b_eid, _ = split_oedge(b)
    if a_eid == b_eid:
        raise FoldtrackError("cannot fold an edge onto itself")
    u_a, x = g.endpoints(a)
    u_b, y = g.endpoints(b)
    if u_a != u_b:
        raise FoldtrackError("folded edges must share their initial vertex")
    if x == y:
        raise FoldtrackError("fold would create a vertex stabilizer (far endpoints coincide)")
    if g.edges[a_eid].length != g.edges[b_eid].length:
        raise FoldtrackError("folded edges must have equal lengths")
    info = FoldInfo(kept=a, dropped=b, merged_vertex=y, into_vertex=x, shared_vertex=u_a)

    # words translating the two canonical far-endpoint lifts across the fold
    tp = tree_paths(g)
    w_a = path_word(g, tp[u_a] + [a] + _reverse_path(tp[x]))
    w_b = path_word(g, tp[u_b] + [b] + _reverse_path(tp[y]))
    mu = fgroup.multiply(fgroup.inverse(w_b), w_a)

    def rename_vertex(v: str) -> str:
        return x if v == y else v

    vertices = {}
    for vid in g.vertices:
        if vid == y:
            continue
        vertices[vid] = g.vertices[vid]
    edges = {}
    for eid, e in g.edges.items():
        if eid == b_eid:
            continue
        edges[eid] = EdgeData(rename_vertex(e.src), rename_vertex(e.dst), e.length)

    base = rename_vertex(g.marking.base)
    interim = MarkedGraph(g.ambient_rank, vertices, edges, Marking(base, frozenset(), {}))
    tree, _ = bfs_tree(interim, base)
    tree_by_vertex = _paths_in_tree(interim, tree, base)
    words: dict[str, str] = {}
    for eid in sorted(edges):
        if eid in tree:
            continue
        e = edges[eid]
        loop = tree_by_vertex[e.src] + [oedge(eid, SRC)] + _reverse_path(tree_by_vertex[e.dst])
        lifted, _ = _lift_path(g, info, loop, base)
        words[eid] = path_word(g, lifted)
    # stabilizer transport: conjugate each surviving vertex group by the
    # discrepancy between new and old tree paths; fold y's group across mu.
    new_vertices: dict[str, VertexData] = {}
    for vid in vertices:
        gens: list[str] = []
        lifted, end = _lift_path(g, info, tree_by_vertex[vid], base, close=False)
        gamma = path_word(g, lifted)
        if vid == x and end == y:
            gamma = fgroup.multiply(gamma, mu)
        if vid == x:
            for w in g.vertices[x].stab_gens:
                gens.append(fgroup.conjugate(w, gamma))
            for w in g.vertices[y].stab_gens:
                gens.append(fgroup.conjugate(w, fgroup.multiply(gamma, fgroup.inverse(mu))))
        else:
            for w in g.vertices[vid].stab_gens:
                gens.append(fgroup.conjugate(w, gamma))
        new_vertices[vid] = VertexData(len(gens), tuple(gens))
    g2 = MarkedGraph(
        g.ambient_rank,
        new_vertices,
        edges,
        Marking(base, tree, words),
    )
    return g2, info


def _reverse_path(path: Sequence[str]) -> list[str]:
    return [reverse_oedge(o) for o in reversed(path)]


def _paths_in_tree(g: MarkedGraph, tree: frozenset[str], root: str) -> dict[str, list[str]]:
    adj: dict[str, list[tuple[str, str]]] = {v: [] for v in g.vertices}
    for eid in sorted(tree):
        e = g.edges[eid]
        adj[e.src].append((oedge(eid, SRC), e.dst))
        adj[e.dst].append((oedge(eid, DST), e.src))
    paths: dict[str, list[str]] = {root: []}
    frontier = [root]
    while frontier:
        nxt = []
        for v in frontier:
            for o, w in adj[v]:
                if w not in paths:
                    paths[w] = paths[v] + [o]
                    nxt.append(w)
        frontier = nxt
    return paths


# -- the Figure-1 rose over a free factor system ---------------------------


def make_rose(ranks: Sequence[int], ambient_rank: int) -> MarkedGraph:
    """Quotient graph realizing a nonempty free factor system.

    One central vertex carrying the first factor, an edge to a leaf for
    each further factor, and a free loop for every unit of leftover rank.
    """
    from .errors import EmptySystem

    ranks = sorted(ranks, reverse=True)
    if not ranks:
        raise EmptySystem("use the free-basis construction for the empty system")
    if any(r < 1 for r in ranks):
        raise ValidationError("rank_mismatch", "", "factor ranks must be positive")
    total = sum(ranks)
    if total > ambient_rank:
        raise ValidationError("rank_mismatch", "", "factor ranks exceed ambient rank")
    n_loops = ambient_rank - total
    if len(ranks) == 1 and n_loops == 0:
        raise ValidationError("minimality", "v0", "a single stabilized point carries no edges")
    letters = iter(range(ambient_rank))
    vertices: dict[str, VertexData] = {}
    gens0 = tuple(fgroup.generator(next(letters)) for _ in range(ranks[0]))
    vertices["v0"] = VertexData(ranks[0], gens0)
    edges: dict[str, EdgeData] = {}
    tree: set[str] = set()
    words: dict[str, str] = {}
    for i, r in enumerate(ranks[1:], start=1):
        vid = f"v{i}"
        gens = tuple(fgroup.generator(next(letters)) for _ in range(r))
        vertices[vid] = VertexData(r, gens)
        eid = f"e{i}"
        edges[eid] = EdgeData("v0", vid, Fraction(1))
        tree.add(eid)
    for j in range(n_loops):
        eid = f"l{j}"
        edges[eid] = EdgeData("v0", "v0", Fraction(1))
        words[eid] = fgroup.generator(next(letters))
    g = MarkedGraph(ambient_rank, vertices, edges, Marking("v0", frozenset(tree), words))
    verdict = validate(g)
    if not verdict:
        raise ValidationError(verdict.code or "invalid", verdict.location, verdict.detail)
    return g


# -- JSON ------------------------------------------------------------------


def length_to_json(x: Fraction) -> str:
    return str(x)


def length_from_json(s: str) -> Fraction:
    return Fraction(s)


def to_json(g: MarkedGraph) -> dict:
    return {
        "ambient_rank": g.ambient_rank,
        "vertices": [
            {
                "id": vid,
                "stab_rank": g.vertices[vid].stab_rank,
                "stab_gens": list(g.vertices[vid].stab_gens),
            }
            for vid in sorted(g.vertices)
        ],
        "edges": [
            {
                "id": eid,
                "from": g.edges[eid].src,
                "to": g.edges[eid].dst,
                "length": length_to_json(g.edges[eid].length),
            }
            for eid in sorted(g.edges)
        ],
        "marking": {
            "base": g.marking.base,
            "spanning_tree": sorted(g.marking.tree),
            "edge_words": {eid: g.marking.words[eid] for eid in sorted(g.marking.words)},
        },
    }


def from_json(doc: dict) -> MarkedGraph:
    vertices = {
        v["id"]: VertexData(v.get("stab_rank", 0), tuple(v.get("stab_gens", ())))
        for v in doc["vertices"]
    }
    edges = {
        e["id"]: EdgeData(e["from"], e["to"], length_from_json(e["length"]))
        for e in doc["edges"]
    }
    m = doc["marking"]
    marking = Marking(m["base"], frozenset(m["spanning_tree"]), dict(m.get("edge_words", {})))
    return MarkedGraph(doc["ambient_rank"], vertices, edges, marking)
