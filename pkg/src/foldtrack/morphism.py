"""Marking-preserving maps between marked graphs, induced train-tracks,
and carrying certificates.

A morphism sends vertices to vertices and edges to nonempty tight edge
paths; marking preservation means every marking generator of the source
maps to a loop whose word agrees with the source word up to one common
conjugator, and vertex groups embed into the image vertex groups after
the same conjugation.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from . import fgroup, graph as graphmod, track as trackmod
from .errors import GraphMismatch, Verdict
from .graph import MarkedGraph, reverse_oedge, split_oedge
from .track import Gate, TrainTrack, VertexClass


@dataclass(frozen=True)
class Morphism:
    source: MarkedGraph
    target: MarkedGraph
    vertex_map: Mapping[str, str]
    edge_map: Mapping[str, tuple[str, ...]]  # edge id -> oriented target path

    def image_path(self, o: str) -> list[str]:
        """Image of an oriented source edge, oriented the same way."""
        eid, sign = split_oedge(o)
        path = list(self.edge_map[eid])
        if sign == graphmod.DST:
            path = [reverse_oedge(p) for p in reversed(path)]
        return path

    def image_germ(self, direction: str) -> str:
        """First oriented target edge of a direction's image."""
        eid, sign = split_oedge(direction)
        path = self.edge_map[eid]
        if sign == graphmod.SRC:
            return path[0]
        return reverse_oedge(path[-1])

    def image_length(self, eid: str) -> Fraction:
        return sum(
            (self.target.edges[split_oedge(o)[0]].length for o in self.edge_map[eid]),
            Fraction(0),
        )


def identity_morphism(g: MarkedGraph) -> Morphism:
    return Morphism(
        g,
        g,
        {v: v for v in g.vertices},
        {e: (graphmod.oedge(e, graphmod.SRC),) for e in g.edges},
    )


def validate_morphism(f: Morphism) -> Verdict:
    """Check endpoint compatibility, no collapses, tightness and marking
    preservation; on success the verdict carries the common conjugator."""
    src, tgt = f.source, f.target
    for vid in src.vertices:
        if f.vertex_map.get(vid) not in tgt.vertices:
            return Verdict.bad("endpoint", vid, "vertex image missing or unknown")
    if set(f.edge_map) != set(src.edges):
        return Verdict.bad("endpoint", "", "edge_map must cover exactly the source edges")
    for eid in sorted(src.edges):
        path = f.edge_map[eid]
        if not path:
            return Verdict.bad("collapse", eid, "edge image is empty")
        e = src.edges[eid]
        try:
            start, end = graphmod.check_path(tgt, path)
        except Exception as exc:  # NotAPath
            return Verdict.bad("endpoint", eid, str(exc))
        if start != f.vertex_map[e.src] or end != f.vertex_map[e.dst]:
            return Verdict.bad("endpoint", eid, "image path does not join the image endpoints")
        for cur, nxt in zip(path, path[1:]):
            if nxt == reverse_oedge(cur):
                return Verdict.bad("not_tight", eid, "image path backtracks")
        # quotient classes cannot host an edge between identified vertices
        if e.src != e.dst and f.vertex_map[e.src] == f.vertex_map[e.dst]:
            word = graphmod.path_word(tgt, path)
            if not word:
                return Verdict.bad("collapse", eid, "image loop is trivial at the tree level")
    # marking preservation: one conjugator aligning all generator loops
    tp = graphmod.tree_paths(src)
    pairs: list[tuple[str, str]] = []
    for eid in sorted(src.marking.words):
        e = src.edges[eid]
        loop = tp[e.src] + [graphmod.oedge(eid, graphmod.SRC)] + [
            reverse_oedge(o) for o in reversed(tp[e.dst])
        ]
        image = []
        for o in loop:
            image.extend(f.image_path(o))
        image_word = graphmod.path_word(tgt, image)
        pairs.append((image_word, src.marking.words[eid]))
    if pairs:
        conj = fgroup.common_conjugator(pairs)
    else:
        conj = ""
    if conj is None:
        return Verdict.bad("marking_mismatch", "", "no common conjugator aligns the marking")
    # vertex groups must embed after conjugating along the image of the
    # source tree path to each vertex
    for vid in sorted(src.vertices):
        gens = src.vertices[vid].stab_gens
        if not gens:
            continue
        target_gens = tgt.vertices[f.vertex_map[vid]].stab_gens
        image_tp: list[str] = []
        for o in tp[vid]:
            image_tp.extend(f.image_path(o))
        shift = fgroup.multiply(conj, graphmod.path_word(tgt, image_tp))
        for gword in gens:
            moved = fgroup.conjugate(gword, fgroup.inverse(shift))
            if not fgroup.subgroup_contains(list(target_gens), moved):
                return Verdict.bad(
                    "marking_mismatch",
                    vid,
                    f"stabilizer generator {gword!r} does not map into the image vertex group",
                )
    return Verdict.good(conjugator=conj)


def refine_to_target(f: Morphism) -> Morphism:
    """Subdivide source edges at preimages of target vertices.

    Afterwards every edge maps to a single target edge; an immersed
    marking-preserving morphism becomes a genuine bijection exactly when
    it was an isometry up to subdivision.
    """
    src = f.source
    edge_map = {e: list(path) for e, path in f.edge_map.items()}
    changed = True
    while changed:
        changed = False
        for eid in sorted(edge_map):
            path = edge_map[eid]
            if len(path) <= 1:
                continue
            first_len = f.target.edges[split_oedge(path[0])[0]].length
            src, info = graphmod.subdivide(src, eid, first_len)
            edge_map[info.head] = [path[0]]
            edge_map[info.tail] = path[1:]
            del edge_map[eid]
            changed = True
            break
    vertex_map = dict(f.vertex_map)
    for vid in src.vertices:
        if vid not in vertex_map:
            # subdivision vertex: its image is the junction of the pieces
            for eid, e in src.edges.items():
                if e.src == vid:
                    vertex_map[vid] = f.target.endpoints(edge_map[eid][0])[0]
                    break
    return Morphism(src, f.target, vertex_map, {e: tuple(p) for e, p in edge_map.items()})


def pullback_metric(f: Morphism) -> MarkedGraph:
    """Source graph re-metrized so the morphism is edgewise isometric."""
    edges = {
        eid: graphmod.EdgeData(e.src, e.dst, f.image_length(eid))
        for eid, e in f.source.edges.items()
    }
    return MarkedGraph(f.source.ambient_rank, f.source.vertices, edges, f.source.marking)


def induced_track(f: Morphism) -> TrainTrack:
    """Track on the pullback metric: classes are vertex-image fibers and
    gates group directions by their image germ."""
    g = pullback_metric(f)
    fibers: dict[str, list[str]] = {}
    for vid in sorted(g.vertices):
        fibers.setdefault(f.vertex_map[vid], []).append(vid)
    classes = []
    class_of_vertex: dict[str, str] = {}
    for w in sorted(fibers):
        cid = f"c_{w}"
        members = frozenset(fibers[w])
        classes.append(VertexClass(cid, members, f.target.vertices[w].stab_rank))
        for vid in fibers[w]:
            class_of_vertex[vid] = cid
    gates: dict[tuple[str, str], set[str]] = {}
    for d in g.all_directions():
        cid = class_of_vertex[g.direction_vertex(d)]
        germ = f.image_germ(d)
        gates.setdefault((cid, germ), set()).add(d)
    gate_list = tuple(
        Gate(f"g{i}", cid, frozenset(members))
        for i, ((cid, _germ), members) in enumerate(sorted(gates.items()))
    )
    return TrainTrack(g, tuple(classes), gate_list)


# -- specialization chains and carrying -------------------------------------


def _class_partition(t: TrainTrack) -> set[frozenset[str]]:
    return {c.members for c in t.classes}


def _gate_partition(t: TrainTrack) -> set[frozenset[str]]:
    return {gt.members for gt in t.gates}


def tracks_equal(a: TrainTrack, b: TrainTrack) -> bool:
    """Structural equality over the same combinatorial graph (ids and
    incidences; metrics may differ)."""
    return (
        _class_partition(a) == _class_partition(b)
        and _gate_partition(a) == _gate_partition(b)
        and {c.members: c.stab_rank for c in a.classes}
        == {c.members: c.stab_rank for c in b.classes}
    )


def _same_combinatorial_graph(a: MarkedGraph, b: MarkedGraph) -> bool:
    return set(a.vertices) == set(b.vertices) and {
        e: (d.src, d.dst) for e, d in a.edges.items()
    } == {e: (d.src, d.dst) for e, d in b.edges.items()}


def specialization_chain(t: TrainTrack, target: TrainTrack):
    """A sequence of specialization moves transforming ``t`` into
    ``target``, or ``None`` if none exists.

    Searches depth-first over candidate merges of exceptional classes;
    attachments are forced by the target's gate partition.
    """
    from .folds import Specialize, specialize

    if not _same_combinatorial_graph(t.graph, target.graph):
        raise GraphMismatch("specialization chains require one underlying graph")

    target_class_of: dict[str, frozenset[str]] = {}
    for c in target.classes:
        for v in c.members:
            target_class_of[v] = c.members
    target_gate_of: dict[str, frozenset[str]] = {}
    for gt in target.gates:
        for d in gt.members:
            target_gate_of[d] = gt.members

    def compatible(cur: TrainTrack) -> bool:
        # every current class/gate must refine the target partition
        for c in cur.classes:
            images = {target_class_of[v] for v in c.members}
            if len(images) != 1:
                return False
        for gt in cur.gates:
            images = {target_gate_of[d] for d in gt.members}
            if len(images) != 1:
                return False
        return True

    def search(cur: TrainTrack, acc: list) -> Optional[list]:
        if tracks_equal(cur, target):
            return acc
        if not compatible(cur):
            return None
        for cid in trackmod.exceptional_classes(cur):
            c = next(cl for cl in cur.classes if cl.id == cid)
            goal = target_class_of[next(iter(c.members))]
            if goal == c.members:
                continue
            # candidate absorber classes: share the same target class
            partners = sorted(
                cl.id
                for cl in cur.classes
                if cl.id != cid and cl.members < goal
            )
            for pid in partners:
                attachment = _forced_attachment(cur, cid, pid, target_gate_of)
                if attachment is None:
                    continue
                move = Specialize(cid, pid, attachment)
                try:
                    nxt = specialize(cur, move)
                except Exception:
                    continue
                out = search(nxt, acc + [move])
                if out is not None:
                    return out
        return None

    return search(t, [])


def _forced_attachment(
    cur: TrainTrack, cid: str, pid: str, target_gate_of: Mapping[str, frozenset[str]]
) -> Optional[dict[str, str]]:
    partner_gates = cur.gates_of_class(pid)
    attachment: dict[str, str] = {}
    for gt in cur.gates_of_class(cid):
        goal = {target_gate_of[d] for d in gt.members}
        if len(goal) != 1:
            return None
        goal_set = next(iter(goal))
        hit = [pg for pg in partner_gates if pg.members <= goal_set]
        if not hit:
            return None
        attachment[gt.id] = hit[0].id
    return attachment


def check_carrying(t: TrainTrack, f: Morphism) -> Verdict:
    """Is the induced track reachable from ``t`` by specializations?"""
    if not _same_combinatorial_graph(t.graph, f.source):
        return Verdict.bad("not_carried", "", "track and morphism source differ")
    verdict = validate_morphism(f)
    if not verdict:
        return Verdict.bad("not_carried", verdict.location, f"invalid morphism: {verdict.detail}")
    induced = induced_track(f)
    try:
        chain = specialization_chain(t, induced)
    except GraphMismatch as exc:
        return Verdict.bad("not_carried", "", str(exc))
    if chain is None:
        return Verdict.bad("not_carried", "", "induced track is not a specialization of the track")
    return Verdict.good(chain=[m.to_json() for m in chain])


def is_ideal_carrier(
    t: TrainTrack, f: Morphism, candidates: Sequence[tuple[TrainTrack, Morphism]]
) -> Verdict:
    """Does ``t`` realize the maximal index among the supplied carriers?

    The true carrying index quantifies over all admissible carriers; this
    desk-scale surrogate maximizes over an explicit candidate set.
    """
    from .errors import FoldtrackError
    from .index import track_index

    if not candidates:
        raise FoldtrackError("candidate set is empty")
    own = check_carrying(t, f)
    if not own:
        return own
    mine = track_index(t)
    best = mine
    for cand_track, cand_f in candidates:
        if not check_carrying(cand_track, cand_f):
            continue
        best = max(best, track_index(cand_track))
    if mine < best:
        return Verdict.bad(
            "not_ideal",
            "",
            f"candidate of index {tuple(best)} exceeds {tuple(mine)}",
            achieved=list(mine),
            maximum=list(best),
        )
    return Verdict.good(achieved=list(mine), chain=own.data.get("chain", []))


# -- JSON --------------------------------------------------------------------


def to_json(f: Morphism) -> dict:
    return {
        "source": graphmod.to_json(f.source),
        "target": graphmod.to_json(f.target),
        "vertex_map": {v: f.vertex_map[v] for v in sorted(f.vertex_map)},
        "edge_map": {e: list(f.edge_map[e]) for e in sorted(f.edge_map)},
    }


def from_json(doc: dict) -> Morphism:
    return Morphism(
        graphmod.from_json(doc["source"]),
        graphmod.from_json(doc["target"]),
        dict(doc["vertex_map"]),
        {e: tuple(path) for e, path in doc["edge_map"].items()},
    )


def track_to_json(t: TrainTrack) -> dict:
    return {
        "graph": graphmod.to_json(t.graph),
        "classes": [
            {"id": c.id, "members": sorted(c.members), "stab_rank": c.stab_rank}
            for c in sorted(t.classes, key=lambda c: c.id)
        ],
        "gates": [
            {"id": gt.id, "class": gt.class_id, "members": sorted(gt.members), "stab": gt.stab}
            for gt in sorted(t.gates, key=lambda gt: gt.id)
        ],
    }


def track_from_json(doc: dict) -> TrainTrack:
    g = graphmod.from_json(doc["graph"])
    classes = tuple(
        VertexClass(c["id"], frozenset(c["members"]), c.get("stab_rank", 0))
        for c in doc["classes"]
    )
    gates = tuple(
        Gate(gt["id"], gt["class"], frozenset(gt["members"]), gt.get("stab", "trivial"))
        for gt in doc["gates"]
    )
    return TrainTrack(g, classes, gates)
