"""The four elementary moves: specialization, singular fold, partial fold
and full fold, as total checked transformations of train-tracks that can
also push a carrying morphism forward.

Folds are built on the graph-level edge identification primitive; class
and gate data are transported by relabeling along the quotient map, never
re-derived, so the "if and only if" transport clauses hold by
construction.  Every move preserves the track index; the three folds
strictly decrease volume.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Union

from . import graph as graphmod, track as trackmod
from .errors import IllegalMove, Inconsistent, ValidationError
from .graph import MarkedGraph, reverse_oedge, split_oedge
from .morphism import Morphism, validate_morphism
from .track import Gate, TrainTrack, VertexClass


@dataclass(frozen=True)
class Specialize:
    exceptional_class: str
    target_class: str
    gate_attachment: Mapping[str, str]  # exceptional gate id -> target gate id

    def to_json(self) -> dict:
        return {
            "kind": "specialize",
            "class": self.exceptional_class,
            "into": self.target_class,
            "attachment": dict(self.gate_attachment),
        }


@dataclass(frozen=True)
class Singular:
    e1: str  # direction at the shared vertex (oriented edge string)
    e2: str

    def to_json(self) -> dict:
        return {"kind": "singular", "e1": self.e1, "e2": self.e2}


@dataclass(frozen=True)
class Partial:
    e1: str
    e2: str
    fold_length: Fraction

    def to_json(self) -> dict:
        return {
            "kind": "partial",
            "e1": self.e1,
            "e2": self.e2,
            "fold_length": graphmod.length_to_json(self.fold_length),
        }


@dataclass(frozen=True)
class Full:
    e1: str  # shorter edge, folded into e2
    e2: str
    special_gate: str

    def to_json(self) -> dict:
        return {"kind": "full", "e1": self.e1, "e2": self.e2, "special_gate": self.special_gate}


FoldMove = Union[Specialize, Singular, Partial, Full]


def move_from_json(doc: dict) -> FoldMove:
    kind = doc["kind"]
    if kind == "specialize":
        return Specialize(doc["class"], doc["into"], dict(doc["attachment"]))
    if kind == "singular":
        return Singular(doc["e1"], doc["e2"])
    if kind == "partial":
        return Partial(doc["e1"], doc["e2"], graphmod.length_from_json(doc["fold_length"]))
    if kind == "full":
        return Full(doc["e1"], doc["e2"], doc["special_gate"])
    raise ValidationError("parse", kind, "unknown move kind")


# -- helpers ----------------------------------------------------------------


def _dir_of(t: TrainTrack, d: str) -> str:
    if split_oedge(d)[0] not in t.graph.edges:
        raise IllegalMove("unknown_edge", d)
    return d


def _shared_vertex(t: TrainTrack, d1: str, d2: str) -> str:
    v1 = t.graph.direction_vertex(d1)
    v2 = t.graph.direction_vertex(d2)
    if v1 != v2:
        raise IllegalMove("not_same_gate", f"{d1} and {d2} are based at different vertices")
    return v1


def _same_gate(t: TrainTrack, d1: str, d2: str) -> None:
    if d1 == d2:
        raise IllegalMove("same_edge", "a direction cannot fold onto itself")
    if t.gate_of(d1).id != t.gate_of(d2).id:
        raise IllegalMove("not_same_gate", f"{d1} and {d2} lie in different gates")


def _relabel_directions(t: TrainTrack, mapping: Mapping[str, Optional[str]]) -> tuple[tuple[VertexClass, ...], tuple[Gate, ...]]:
    """Transport gates through a direction relabeling; ``None`` deletes."""
    gates = []
    for gt in t.gates:
        members = set()
        for d in gt.members:
            nd = mapping.get(d, d)
            if nd is not None:
                members.add(nd)
        if members:
            gates.append(Gate(gt.id, gt.class_id, frozenset(members), gt.stab))
    return t.classes, tuple(gates)


def _relabel_classes(
    classes: tuple[VertexClass, ...], vertex_rename: Mapping[str, Optional[str]], stab_override: Mapping[str, int] | None = None
) -> tuple[VertexClass, ...]:
    out = []
    for c in classes:
        members = set()
        for v in c.members:
            nv = vertex_rename.get(v, v)
            if nv is not None:
                members.add(nv)
        if members:
            rank = c.stab_rank
            if stab_override and c.id in stab_override:
                rank = stab_override[c.id]
            out.append(VertexClass(c.id, frozenset(members), rank))
    return tuple(out)


def _fresh_class_id(t: TrainTrack) -> str:
    taken = {c.id for c in t.classes}
    n = 0
    while f"c{n}" in taken:
        n += 1
    return f"c{n}"


def _fresh_gate_ids(t: TrainTrack, count: int) -> list[str]:
    taken = {gt.id for gt in t.gates}
    out = []
    n = 0
    while len(out) < count:
        if f"g{n}" not in taken:
            out.append(f"g{n}")
            taken.add(f"g{n}")
        n += 1
    return out


def _validated(t: TrainTrack) -> TrainTrack:
    verdict = trackmod.validate_track(t)
    if not verdict:
        raise IllegalMove(verdict.code or "invalid", f"{verdict.location}: {verdict.detail}")
    return t


def track_subdivide(
    t: TrainTrack, eid: str, at: Fraction
) -> tuple[TrainTrack, graphmod.SubdivisionInfo]:
    """Subdivide an edge of the underlying graph and transport the track.

    The fresh valence-2 vertex forms a singleton class with two singleton
    gates.
    """
    g2, info = graphmod.subdivide(t.graph, eid, at)
    d_src = eid + graphmod.SRC
    d_dst = eid + graphmod.DST
    mapping = {d_src: info.head + graphmod.SRC, d_dst: info.tail + graphmod.DST}
    _, gates = _relabel_directions(t, mapping)
    new_cid = _fresh_class_id(t)
    gid1, gid2 = _fresh_gate_ids(t, 2)
    classes = t.classes + (VertexClass(new_cid, frozenset({info.new_vertex}), 0),)
    gates = gates + (
        Gate(gid1, new_cid, frozenset({info.head + graphmod.DST})),
        Gate(gid2, new_cid, frozenset({info.tail + graphmod.SRC})),
    )
    return TrainTrack(g2, classes, gates), info


# -- specialization ----------------------------------------------------------


def specialize(t: TrainTrack, m: Specialize) -> TrainTrack:
    classes_by_id = {c.id: c for c in t.classes}
    if m.exceptional_class not in classes_by_id or m.target_class not in classes_by_id:
        raise IllegalMove("not_exceptional", "unknown class id")
    if m.exceptional_class == m.target_class:
        raise IllegalMove("not_exceptional", "a class cannot specialize into itself")
    if m.exceptional_class not in trackmod.exceptional_classes(t):
        raise IllegalMove("not_exceptional", m.exceptional_class)
    exc_gates = {gt.id: gt for gt in t.gates_of_class(m.exceptional_class)}
    tgt_gates = {gt.id: gt for gt in t.gates_of_class(m.target_class)}
    if set(m.gate_attachment) != set(exc_gates):
        raise IllegalMove("bad_attachment", "attachment must cover exactly the three gates")
    for gid, tid in m.gate_attachment.items():
        if tid not in tgt_gates:
            raise IllegalMove("bad_attachment", f"{tid} is not a gate of the target class")
    exc = classes_by_id[m.exceptional_class]
    tgt = classes_by_id[m.target_class]
    merged_members = exc.members | tgt.members
    # adjacency after the merge
    for eid in sorted(t.graph.edges):
        e = t.graph.edges[eid]
        if e.src != e.dst and e.src in merged_members and e.dst in merged_members:
            raise IllegalMove("adjacency_created", eid)
    classes = tuple(
        VertexClass(c.id, merged_members, tgt.stab_rank) if c.id == tgt.id else c
        for c in t.classes
        if c.id != exc.id
    )
    gates = []
    for gt in t.gates:
        if gt.class_id == exc.id:
            continue
        members = set(gt.members)
        for gid, tid in m.gate_attachment.items():
            if tid == gt.id:
                members |= exc_gates[gid].members
        gates.append(Gate(gt.id, gt.class_id, frozenset(members), gt.stab))
    return _validated(TrainTrack(t.graph, classes, tuple(gates)))


# -- singular fold -----------------------------------------------------------


def _far_direction(t: TrainTrack, d: str) -> str:
    """Direction at the far endpoint of the edge underlying ``d``."""
    return reverse_oedge(d)


def singular_fold(t: TrainTrack, m: Singular) -> TrainTrack:
    d1, d2 = _dir_of(t, m.e1), _dir_of(t, m.e2)
    _shared_vertex(t, d1, d2)
    _same_gate(t, d1, d2)
    e1, _ = split_oedge(d1)
    e2, _ = split_oedge(d2)
    if e1 == e2:
        raise IllegalMove("same_edge", "cannot identify the two germs of one edge")
    g = t.graph
    x = g.endpoints(d1)[1]
    y = g.endpoints(d2)[1]
    if x == y:
        raise IllegalMove(
            "endpoints_inequivalent",
            "far endpoints must be two distinct equivalent vertices",
        )
    if t.class_of(x).id != t.class_of(y).id:
        raise IllegalMove("endpoints_inequivalent", f"{x} and {y} lie in different classes")
    far1, far2 = _far_direction(t, d1), _far_direction(t, d2)
    if t.gate_of(far1).id != t.gate_of(far2).id:
        raise IllegalMove("endpoints_inequivalent", "far germs lie in different gates")
    if g.edges[e1].length != g.edges[e2].length:
        raise IllegalMove("length_mismatch", f"{e1} and {e2} differ in length")
    g2, info = graphmod.fold_edges(g, d1, d2)
    mapping = {d2: None, far2: None}
    _, gates = _relabel_directions(t, mapping)
    classes = _relabel_classes(t.classes, {y: x})
    moved = TrainTrack(g2, classes, gates)
    return _validated(moved)


# -- partial fold --------------------------------------------------------------


@dataclass(frozen=True)
class PartialInfo:
    new_vertex: str
    new_edge: str  # the identified initial segment, germ at the old shared vertex
    new_edge_dir: str  # oriented out of the shared vertex
    tail1: str  # remainder of e1, oriented out of the new vertex
    tail2: str  # remainder of e2, oriented out of the new vertex


def partial_fold_info(t: TrainTrack, m: Partial) -> tuple[TrainTrack, PartialInfo]:
    d1, d2 = _dir_of(t, m.e1), _dir_of(t, m.e2)
    _shared_vertex(t, d1, d2)
    _same_gate(t, d1, d2)
    e1, sign1 = split_oedge(d1)
    e2, sign2 = split_oedge(d2)
    if e1 == e2:
        raise IllegalMove("same_edge", "cannot partially fold an edge onto itself")
    g = t.graph
    ell = Fraction(m.fold_length)
    if not (0 < ell < min(g.edges[e1].length, g.edges[e2].length)):
        raise IllegalMove("bad_length", f"fold length {ell} must be a proper initial segment")
    # subdivide both edges at the fold length, measured from the shared vertex
    t1, info1 = track_subdivide(t, e1, ell if sign1 == graphmod.SRC else g.edges[e1].length - ell)
    t2, info2 = track_subdivide(
        t1, e2, ell if sign2 == graphmod.SRC else t1.graph.edges[e2].length - ell
    )
    if sign1 == graphmod.SRC:
        head1, tail1_out = info1.head + graphmod.SRC, info1.tail + graphmod.SRC
    else:
        head1, tail1_out = info1.tail + graphmod.DST, info1.head + graphmod.DST
    if sign2 == graphmod.SRC:
        head2, tail2_out = info2.head + graphmod.SRC, info2.tail + graphmod.SRC
    else:
        head2, tail2_out = info2.tail + graphmod.DST, info2.head + graphmod.DST
    w1, w2 = info1.new_vertex, info2.new_vertex
    g3, _ = graphmod.fold_edges(t2.graph, head1, head2)
    # drop the deleted sub-edge's germs and both subdivision classes/gates;
    # the merged vertex w1 becomes a fresh trivalent singleton class with
    # pairwise inequivalent directions
    mapping = {head2: None, reverse_oedge(head2): None}
    _, gates = _relabel_directions(t2, mapping)
    stale_classes = {t2.class_of(w1).id, t2.class_of(w2).id}
    classes = tuple(c for c in t2.classes if c.id not in stale_classes)
    gates = tuple(gt for gt in gates if gt.class_id not in stale_classes and gt.members)
    interim = TrainTrack(g3, classes, gates)
    new_cid = _fresh_class_id(interim)
    new_dirs = sorted((reverse_oedge(head1), tail1_out, tail2_out))
    gids = _fresh_gate_ids(interim, 3)
    classes = classes + (VertexClass(new_cid, frozenset({w1}), 0),)
    gates = gates + tuple(
        Gate(gid, new_cid, frozenset({d})) for gid, d in zip(gids, new_dirs)
    )
    moved = _validated(TrainTrack(g3, classes, gates))
    info = PartialInfo(
        new_vertex=w1,
        new_edge=split_oedge(head1)[0],
        new_edge_dir=head1,
        tail1=tail1_out,
        tail2=tail2_out,
    )
    return moved, info


def partial_fold(t: TrainTrack, m: Partial) -> TrainTrack:
    return partial_fold_info(t, m)[0]


# -- full fold ------------------------------------------------------------------


@dataclass(frozen=True)
class FullInfo:
    absorbed_vertex: str  # e1's far endpoint, which absorbed the subdivision point
    tail: str  # remainder of e2, oriented out of the absorbed vertex


def full_fold_info(t: TrainTrack, m: Full) -> tuple[TrainTrack, FullInfo]:
    d1, d2 = _dir_of(t, m.e1), _dir_of(t, m.e2)
    _shared_vertex(t, d1, d2)
    _same_gate(t, d1, d2)
    e1, _ = split_oedge(d1)
    e2, sign2 = split_oedge(d2)
    if e1 == e2:
        raise IllegalMove("same_edge", "cannot fold an edge into itself")
    g = t.graph
    len1, len2 = g.edges[e1].length, g.edges[e2].length
    if not len1 < len2:
        raise IllegalMove("not_shorter", f"length of {e1} must be strictly below {e2}")
    v1 = g.endpoints(d1)[1]
    special = {gt.id: gt for gt in t.gates}.get(m.special_gate)
    if special is None:
        raise IllegalMove("gate_wrong_class", f"unknown gate {m.special_gate}")
    if special.class_id != t.class_of(v1).id:
        raise IllegalMove("gate_wrong_class", f"{m.special_gate} is not a gate of {v1}'s class")
    # subdivide e2 at distance len1 from the shared vertex
    at = len1 if sign2 == graphmod.SRC else len2 - len1
    t1, info = track_subdivide(t, e2, at)
    if sign2 == graphmod.SRC:
        head2, tail_out = info.head + graphmod.SRC, info.tail + graphmod.SRC
    else:
        head2, tail_out = info.tail + graphmod.DST, info.head + graphmod.DST
    w = info.new_vertex
    g2, _ = graphmod.fold_edges(t1.graph, d1, head2)
    mapping = {head2: None, reverse_oedge(head2): None}
    _, gates = _relabel_directions(t1, mapping)
    stale = t1.class_of(w).id
    classes = tuple(c for c in t1.classes if c.id != stale)
    gates = tuple(gt for gt in gates if gt.class_id != stale and gt.members)
    # the continuation germ, now based at v1, joins the special gate
    rebuilt = []
    for gt in gates:
        members = set(gt.members)
        if gt.id == m.special_gate:
            members.add(tail_out)
        if members:
            rebuilt.append(Gate(gt.id, gt.class_id, frozenset(members), gt.stab))
    moved = _validated(TrainTrack(g2, classes, tuple(rebuilt)))
    return moved, FullInfo(absorbed_vertex=v1, tail=tail_out)


def full_fold(t: TrainTrack, m: Full) -> TrainTrack:
    return full_fold_info(t, m)[0]


# -- applying moves with a morphism -------------------------------------------


def apply_move(t: TrainTrack, f: Morphism, m: FoldMove) -> tuple[TrainTrack, Morphism]:
    """Apply a move and factor the morphism through it.

    The morphism must be consistent with the identification: identified
    material must have identical images.
    """
    if isinstance(m, Specialize):
        return specialize(t, m), f
    if isinstance(m, Singular):
        return _apply_singular(t, f, m)
    if isinstance(m, Partial):
        return _apply_partial(t, f, m)
    if isinstance(m, Full):
        return _apply_full(t, f, m)
    raise IllegalMove("unknown_move", repr(m))


def _checked(f: Morphism) -> Morphism:
    verdict = validate_morphism(f)
    if not verdict:
        raise Inconsistent(f"factored morphism invalid: {verdict.code} {verdict.detail}")
    return f


def _apply_singular(t: TrainTrack, f: Morphism, m: Singular) -> tuple[TrainTrack, Morphism]:
    p1 = f.image_path(m.e1)
    p2 = f.image_path(m.e2)
    if p1 != p2:
        raise Inconsistent("singular fold requires identical image paths")
    e2 = split_oedge(m.e2)[0]
    y = t.graph.endpoints(m.e2)[1]
    x = t.graph.endpoints(m.e1)[1]
    if f.vertex_map[x] != f.vertex_map[y]:
        raise Inconsistent("far endpoints have distinct images")
    moved = singular_fold(t, m)
    vertex_map = {v: w for v, w in f.vertex_map.items() if v != y}
    edge_map = {e: path for e, path in f.edge_map.items() if e != e2}
    f2 = _checked(Morphism(moved.graph, f.target, vertex_map, edge_map))
    return moved, f2


def _aligned_prefix(f: Morphism, d1: str, d2: str, length: Fraction) -> Optional[list[str]]:
    """Shared initial segment of the two image paths of exactly ``length``,
    aligned with target vertices; None when the images disagree."""
    p1 = f.image_path(d1)
    p2 = f.image_path(d2)
    acc = Fraction(0)
    prefix: list[str] = []
    for o1, o2 in zip(p1, p2):
        if o1 != o2:
            break
        prefix.append(o1)
        acc += f.target.edges[split_oedge(o1)[0]].length
        if acc == length:
            return prefix
        if acc > length:
            return None
    return None


def _oriented_assign(
    emap: dict, direction: str, path: list[str]
) -> None:
    """Record the image of an edge given the image of one orientation."""
    eid, sign = split_oedge(direction)
    if sign == graphmod.SRC:
        emap[eid] = path
    else:
        emap[eid] = [reverse_oedge(o) for o in reversed(path)]


def _apply_partial(t: TrainTrack, f: Morphism, m: Partial) -> tuple[TrainTrack, Morphism]:
    prefix = _aligned_prefix(f, m.e1, m.e2, Fraction(m.fold_length))
    if prefix is None:
        raise Inconsistent("image paths do not share an initial segment of the fold length")
    p1 = f.image_path(m.e1)
    p2 = f.image_path(m.e2)
    if len(prefix) >= min(len(p1), len(p2)):
        raise Inconsistent("partial fold requires the shared segment to be proper on both sides")
    moved, info = partial_fold_info(t, m)
    e1, _ = split_oedge(m.e1)
    e2, _ = split_oedge(m.e2)
    vmap = dict(f.vertex_map)
    emap: dict[str, list[str]] = {e: list(path) for e, path in f.edge_map.items() if e not in (e1, e2)}
    vmap[info.new_vertex] = f.target.endpoints(prefix[-1])[1]
    _oriented_assign(emap, info.new_edge_dir, prefix)
    _oriented_assign(emap, info.tail1, p1[len(prefix):])
    _oriented_assign(emap, info.tail2, p2[len(prefix):])
    f2 = _checked(Morphism(moved.graph, f.target, vmap, {e: tuple(p) for e, p in emap.items()}))
    return moved, f2


def _apply_full(t: TrainTrack, f: Morphism, m: Full) -> tuple[TrainTrack, Morphism]:
    p1 = f.image_path(m.e1)
    p2 = f.image_path(m.e2)
    if not (len(p1) < len(p2) and p2[: len(p1)] == p1):
        raise Inconsistent("full fold requires one image to be a proper prefix of the other")
    # germ agreement for the special gate: its image germ must continue p2
    continuation = p2[len(p1)]
    special = {gt.id: gt for gt in t.gates}[m.special_gate]
    germs = {f.image_germ(d) for d in special.members}
    if germs != {continuation}:
        raise Inconsistent("special gate does not map onto the continuation germ")
    e2, _ = split_oedge(m.e2)
    moved, info = full_fold_info(t, m)
    vmap = dict(f.vertex_map)
    emap: dict[str, list[str]] = {e: list(path) for e, path in f.edge_map.items() if e != e2}
    _oriented_assign(emap, info.tail, p2[len(p1):])
    f2 = _checked(Morphism(moved.graph, f.target, vmap, {e: tuple(p) for e, p in emap.items()}))
    return moved, f2
