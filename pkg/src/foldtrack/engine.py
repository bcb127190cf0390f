"""Folding engine: move selection, audited runs, instance generation and
the scripted three-step regression scenario.

``select_move`` resolves the least illegal turn of a carried track by the
image-overlap trichotomy: identical images give a singular fold (after a
specialization when the far endpoints are image-equal but inequivalent),
a shared proper segment gives a partial fold, and a proper prefix gives a
full fold whose special gate matches the continuation germ.  Runs record
indices and volumes per step; an index jump is a first-class outcome.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from . import fgroup, folds as foldsmod, graph as graphmod, morphism as morphmod, track as trackmod
from .errors import FoldtrackError, IllegalMove, Inconsistent
from .folds import FoldMove, Full, Partial, Singular, Specialize
from .graph import MarkedGraph, reverse_oedge, split_oedge
from .index import TrackIndex, track_index
from .morphism import Morphism, induced_track, specialization_chain, validate_morphism
from .track import TrainTrack


@dataclass(frozen=True)
class MoveSelection:
    turn: Optional[tuple[str, str]]  # the illegal turn prompting the move
    move: Optional[FoldMove]  # None only for Done
    done: bool = False
    fallback: bool = False  # set when a specialization was suppressed
    followup_specializations: tuple = ()

    def to_json(self) -> dict:
        out: dict = {"done": self.done}
        if self.turn is not None:
            out["turn"] = list(self.turn)
        if self.move is not None:
            out["move"] = self.move.to_json()
        if self.fallback:
            out["fallback"] = True
        if self.followup_specializations:
            out["followup_specializations"] = [m.to_json() for m in self.followup_specializations]
        return out


class IndexJumpSignal(FoldtrackError):
    def __init__(self, site: str, missing: str):
        self.site = site
        self.missing = missing
        super().__init__(f"index jump at {site}: {missing}")


def _illegal_turns(t: TrainTrack) -> list[tuple[str, str]]:
    """Same-gate direction pairs at a common vertex, deterministic order."""
    out = []
    for c in sorted(t.classes, key=lambda c: c.id):
        for gate in sorted(t.gates_of_class(c.id), key=lambda gt: gt.id):
            members = sorted(gate.members)
            for i, d1 in enumerate(members):
                for d2 in members[i + 1 :]:
                    if t.graph.direction_vertex(d1) == t.graph.direction_vertex(d2):
                        out.append((d1, d2))
    return out


def _gate_image_germ(t: TrainTrack, f: Morphism, gate) -> Optional[str]:
    germs = {f.image_germ(d) for d in gate.members}
    return next(iter(germs)) if len(germs) == 1 else None


def _specialization_into_fiber(
    t: TrainTrack, f: Morphism, class_id: str, needed_germ: Optional[str]
) -> Optional[Specialize]:
    """A specialization merging an exceptional class into an image-equal
    class whose gates match by image germ (and provide the needed germ)."""
    if class_id not in trackmod.exceptional_classes(t):
        return None
    cls = next(c for c in t.classes if c.id == class_id)
    member_image = {f.vertex_map[v] for v in cls.members}
    if len(member_image) != 1:
        return None
    image = next(iter(member_image))
    for other in sorted(t.classes, key=lambda c: c.id):
        if other.id == class_id:
            continue
        if {f.vertex_map[v] for v in other.members} != {image}:
            continue
        other_gates = t.gates_of_class(other.id)
        by_germ: dict[str, str] = {}
        for gt in sorted(other_gates, key=lambda gt: gt.id):
            germ = _gate_image_germ(t, f, gt)
            if germ is not None and germ not in by_germ:
                by_germ[germ] = gt.id
        if needed_germ is not None and needed_germ not in by_germ:
            continue
        attachment: dict[str, str] = {}
        for gt in t.gates_of_class(class_id):
            germ = _gate_image_germ(t, f, gt)
            if germ is None or germ not in by_germ:
                attachment = {}
                break
            attachment[gt.id] = by_germ[germ]
        if attachment:
            # adjacency guard: the merge must not join adjacent vertices
            merged = cls.members | other.members
            ok = True
            for eid in sorted(t.graph.edges):
                e = t.graph.edges[eid]
                if e.src != e.dst and e.src in merged and e.dst in merged:
                    ok = False
                    break
            if ok:
                return Specialize(class_id, other.id, attachment)
    return None


def select_move(
    t: TrainTrack, f: Morphism, allow_specializations: bool = True
) -> MoveSelection:
    """Choose the next move for a folding run, deterministically.

    Done when no illegal turn has germ-identified images and no terminal
    specialization is pending.  Raises :class:`IndexJumpSignal` when the
    least foldable turn cannot be resolved without raising the index.
    """
    for d1, d2 in _illegal_turns(t):
        if f.image_germ(d1) != f.image_germ(d2):
            continue  # not germ-identified; never foldable along f
        p1 = f.image_path(d1)
        p2 = f.image_path(d2)
        turn = (d1, d2)
        if p1 == p2:
            x = t.graph.endpoints(d1)[1]
            y = t.graph.endpoints(d2)[1]
            e1, _ = split_oedge(d1)
            e2, _ = split_oedge(d2)
            if e1 == e2 or x == y:
                raise IndexJumpSignal(f"{d1},{d2}", "fold would identify edges of one orbit")
            if t.class_of(x).id != t.class_of(y).id:
                if not allow_specializations:
                    raise IndexJumpSignal(f"{d1},{d2}", "far endpoints inequivalent and specializations disabled")
                for cid in (t.class_of(x).id, t.class_of(y).id):
                    move = _specialization_into_fiber(t, f, cid, None)
                    if move is not None and move.target_class in (t.class_of(x).id, t.class_of(y).id):
                        return MoveSelection(turn, move)
                raise IndexJumpSignal(f"{d1},{d2}", "no legal specialization equates the far endpoints")
            far1, far2 = reverse_oedge(d1), reverse_oedge(d2)
            if t.gate_of(far1).id != t.gate_of(far2).id:
                raise IndexJumpSignal(f"{d1},{d2}", "far germs lie in different gates of one class")
            return MoveSelection(turn, Singular(d1, d2))
        shared = 0
        length = Fraction(0)
        for o1, o2 in zip(p1, p2):
            if o1 != o2:
                break
            shared += 1
            length += f.target.edges[split_oedge(o1)[0]].length
        if shared == 0:
            raise IndexJumpSignal(f"{d1},{d2}", "germ-identified turn with disjoint images")
        if shared < len(p1) and shared < len(p2):
            return MoveSelection(turn, Partial(d1, d2, length))
        # one image is a proper prefix of the other: full fold
        short, long_ = (d1, d2) if len(p1) < len(p2) else (d2, d1)
        p_short = f.image_path(short)
        p_long = f.image_path(long_)
        continuation = p_long[len(p_short)]
        far_class = t.class_of(t.graph.endpoints(short)[1])
        gate = None
        for gt in sorted(t.gates_of_class(far_class.id), key=lambda gt: gt.id):
            if _gate_image_germ(t, f, gt) == continuation:
                gate = gt.id
                break
        if gate is not None:
            return MoveSelection(turn, Full(short, long_, gate))
        if allow_specializations:
            move = _specialization_into_fiber(t, f, far_class.id, continuation)
            if move is not None:
                return MoveSelection(turn, move)
            raise IndexJumpSignal(
                f"{d1},{d2}", "no special gate and no legal specialization provides one"
            )
        # suppressed specialization: fall back to the least gate of the far
        # class, deliberately breaking carrying (regression scenario)
        fallback_gate = sorted(t.gates_of_class(far_class.id), key=lambda gt: gt.id)[0].id
        return MoveSelection(turn, Full(short, long_, fallback_gate), fallback=True)
    # no foldable turn: flush pending specializations toward the induced track
    if allow_specializations:
        induced = induced_track(f)
        try:
            chain = specialization_chain(t, induced)
        except Exception:
            chain = None
        if chain:
            return MoveSelection(None, chain[0])
    return MoveSelection(None, None, done=True)


@dataclass
class TraceStep:
    selection: MoveSelection
    index: TrackIndex
    volume: Fraction
    snapshot: int

    def to_json(self) -> dict:
        out = self.selection.to_json()
        return {
            "move": out.get("move"),
            "turn": out.get("turn"),
            "fallback": out.get("fallback", False),
            "index": list(self.index),
            "volume": graphmod.length_to_json(self.volume),
            "snapshot": self.snapshot,
        }


@dataclass
class FoldTrace:
    steps: list[TraceStep] = field(default_factory=list)
    outcome: str = "step_cap_reached"  # terminated | index_jump | step_cap_reached
    diagnostic: str = ""
    final_track: Optional[TrainTrack] = None
    final_morphism: Optional[Morphism] = None
    terminal_chain: list = field(default_factory=list)
    normalized_start: bool = False
    initial_index: Optional[TrackIndex] = None
    initial_volume: Optional[Fraction] = None

    def to_json(self) -> dict:
        out = {
            "steps": [s.to_json() for s in self.steps],
            "outcome": self.outcome,
        }
        if self.initial_index is not None:
            out["initial_index"] = list(self.initial_index)
        if self.initial_volume is not None:
            out["initial_volume"] = graphmod.length_to_json(self.initial_volume)
        if self.normalized_start:
            out["normalized_start"] = True
        if self.diagnostic:
            out["diagnostic"] = self.diagnostic
        if self.terminal_chain:
            out["terminal_specializations"] = [m.to_json() for m in self.terminal_chain]
        return out


def subdivision_bound(f: Morphism) -> int:
    """Edge count of the source after subdividing at preimages of target
    vertices: the termination budget for fold moves."""
    return sum(len(path) for path in f.edge_map.values())


def _is_bijective(f: Morphism) -> bool:
    if any(len(path) != 1 for path in f.edge_map.values()):
        return False
    images = [split_oedge(path[0])[0] for path in f.edge_map.values()]
    if len(set(images)) != len(images) or set(images) != set(f.target.edges):
        return False
    values = list(f.vertex_map.values())
    return len(set(values)) == len(values) and set(values) == set(f.target.vertices)


def _terminal_is_isometry(f: Morphism) -> bool:
    """Bijectivity after the source is subdivided at preimages of target
    vertices (the termination convention)."""
    return _is_bijective(morphmod.refine_to_target(f))


def run_folding(
    t0: TrainTrack,
    f0: Morphism,
    max_steps: Optional[int] = None,
    allow_specializations: bool = True,
) -> FoldTrace:
    """Iterate select_move/apply_move to termination, cap or index jump.

    The source metric is normalized to the pullback metric first, so fold
    lengths compare exactly and volumes replay the termination argument.
    """
    verdict = validate_morphism(f0)
    if not verdict:
        raise FoldtrackError(f"invalid morphism: {verdict.code} {verdict.detail}")
    pullback = morphmod.pullback_metric(f0)
    t = TrainTrack(pullback, t0.classes, t0.gates)
    check = trackmod.validate_track(t)
    if not check:
        raise FoldtrackError(f"invalid track: {check.code} {check.detail}")
    f = Morphism(pullback, f0.target, f0.vertex_map, f0.edge_map)
    trace = FoldTrace()
    if not morphmod.check_carrying(t, f):
        # the supplied track does not carry the morphism (e.g. a discrete
        # source track); run on the structure the morphism induces
        t = induced_track(f)
        trace.normalized_start = True
    trace.initial_index = track_index(t)
    trace.initial_volume = graphmod.volume(t.graph)
    fold_budget = subdivision_bound(f)
    cap = max_steps if max_steps is not None else fold_budget + len(pullback.vertices) + 1
    folds_done = 0
    consecutive_specs = 0
    while True:
        if len(trace.steps) >= cap:
            trace.outcome = "step_cap_reached"
            trace.diagnostic = f"cap of {cap} selections reached"
            break
        try:
            selection = select_move(t, f, allow_specializations=allow_specializations)
        except IndexJumpSignal as jump:
            trace.outcome = "index_jump"
            trace.diagnostic = str(jump)
            trace.steps.append(
                TraceStep(
                    MoveSelection((jump.site.split(",")[0], jump.site.split(",")[1]), None),
                    track_index(t),
                    graphmod.volume(t.graph),
                    len(trace.steps),
                )
            )
            break
        if selection.done:
            chain = specialization_chain(t, induced_track(f))
            if chain is None:
                trace.outcome = "index_jump"
                trace.diagnostic = "terminal track is not carried by the morphism"
            elif not _terminal_is_isometry(f):
                trace.outcome = "index_jump"
                trace.diagnostic = "terminal morphism is not bijective"
                trace.terminal_chain = chain
            else:
                trace.outcome = "terminated"
                trace.terminal_chain = chain
            break
        before_index = track_index(t)
        before_volume = graphmod.volume(t.graph)
        try:
            t, f = foldsmod.apply_move(t, f, selection.move)
        except (IllegalMove, Inconsistent) as exc:
            trace.outcome = "index_jump"
            trace.diagnostic = f"move failed: {exc}"
            break
        after_index = track_index(t)
        after_volume = graphmod.volume(t.graph)
        if isinstance(selection.move, Specialize):
            consecutive_specs += 1
            if consecutive_specs > len(t.classes) + 1:
                raise FoldtrackError("specialization loop detected")
            if after_volume != before_volume:
                raise FoldtrackError("specialization changed the volume")
        else:
            consecutive_specs = 0
            folds_done += 1
            if not after_volume < before_volume:
                raise FoldtrackError("fold did not decrease the volume")
        if after_index != before_index:
            raise FoldtrackError(
                f"move changed the index {tuple(before_index)} -> {tuple(after_index)}"
            )
        trace.steps.append(
            TraceStep(selection, after_index, after_volume, len(trace.steps))
        )
    trace.final_track = t
    trace.final_morphism = f
    return trace


# -- instance generation -----------------------------------------------------


def rose_graph(rank: int) -> MarkedGraph:
    edges = {
        f"e{i}": graphmod.EdgeData("v0", "v0", Fraction(1)) for i in range(rank)
    }
    words = {f"e{i}": fgroup.generator(i) for i in range(rank)}
    return MarkedGraph(
        rank,
        {"v0": graphmod.VertexData()},
        edges,
        graphmod.Marking("v0", frozenset(), words),
    )


def theta_graph(rank: int) -> MarkedGraph:
    """Two vertices joined by rank+1 parallel unit edges."""
    edges = {
        f"e{i}": graphmod.EdgeData("P", "Q", Fraction(1)) for i in range(rank + 1)
    }
    words = {f"e{i}": fgroup.generator(i - 1) for i in range(1, rank + 1)}
    return MarkedGraph(
        rank,
        {"P": graphmod.VertexData(), "Q": graphmod.VertexData()},
        edges,
        graphmod.Marking("P", frozenset({"e0"}), words),
    )


def gen_instance(
    seed: int, rank: int = 2, edges: int = 12, moves: int = 10
) -> tuple[TrainTrack, Morphism]:
    """Deterministically build a (track, morphism) instance by evolving a
    copy of the source through subdivisions and quotient folds.

    Subdivisions are synced: every new target vertex receives a source
    preimage vertex covering both of its germs, so branch structure in
    the target stays visible to the track and runs stay index-constant.
    """
    if not (1 <= rank <= 5 and 0 <= moves <= 10 and edges <= 12):
        raise FoldtrackError("generation parameters out of range")
    rng = random.Random(seed)
    source = rose_graph(rank) if (rank < 2 or rng.random() < 0.5) else theta_graph(rank)
    f = morphmod.identity_morphism(source)
    applied = 0
    attempts = 0
    while applied < moves and attempts < 80:
        attempts += 1
        roll = rng.random()
        if roll < 0.35 and len(f.target.edges) < edges:
            f2 = _gen_subdivide(f, rng)
        elif roll < 0.55:
            f2 = _gen_unsubdivide(f, rng)
        else:
            f2 = _gen_fold(f, rng)
        if f2 is not None:
            f = f2
            applied += 1
    verdict = validate_morphism(f)
    if not verdict:
        raise FoldtrackError(f"generated morphism invalid: {verdict.code} {verdict.detail}")
    return trackmod.discrete_track(f.source), f


def _gen_subdivide(f: Morphism, rng: random.Random) -> Optional[Morphism]:
    """Subdivide a target edge and one source edge crossing it, keeping
    every target germ covered by a source germ."""
    target = f.target
    eid = sorted(target.edges)[rng.randrange(len(target.edges))]
    length = target.edges[eid].length
    new_target, info = graphmod.subdivide(target, eid, length / 2)
    f2 = _compose_subdivision(f, new_target, eid, info)
    # pick a crossing of the subdivided edge and sync-subdivide its source
    crossings = []
    for se in sorted(f2.edge_map):
        path = f2.edge_map[se]
        for k, o in enumerate(path):
            cur = split_oedge(o)[0]
            if cur == info.head or cur == info.tail:
                crossings.append((se, k, cur))
    starts = [c for c in crossings if _piece_is_first(c, f2, info)]
    if not starts:
        return None
    se, k, _ = starts[rng.randrange(len(starts))]
    path = list(f2.edge_map[se])
    offset = sum(
        (new_target.edges[split_oedge(o)[0]].length for o in path[: k + 1]),
        Fraction(0),
    )
    if not (0 < offset < f2.source.edges[se].length):
        return None
    new_source, sinfo = graphmod.subdivide(f2.source, se, offset)
    vmap = dict(f2.vertex_map)
    vmap[sinfo.new_vertex] = info.new_vertex
    emap = {e: list(p) for e, p in f2.edge_map.items() if e != se}
    emap[sinfo.head] = path[: k + 1]
    emap[sinfo.tail] = path[k + 1 :]
    cand = Morphism(new_source, f2.target, vmap, {e: tuple(p) for e, p in emap.items()})
    return cand if validate_morphism(cand) else None


def _piece_is_first(crossing, f2: Morphism, info: graphmod.SubdivisionInfo) -> bool:
    """Is this occurrence the first half of the subdivided edge, so that
    cutting after it lands on the new target vertex?"""
    se, k, cur = crossing
    o = f2.edge_map[se][k]
    sign = split_oedge(o)[1]
    return (cur == info.head and sign == graphmod.SRC) or (
        cur == info.tail and sign == graphmod.DST
    )


def _gen_unsubdivide(f: Morphism, rng: random.Random) -> Optional[Morphism]:
    """Remove a valence-2 source vertex whose fiber stays inhabited,
    lengthening one image path (it is these long images that later force
    partial and full folds)."""
    src = f.source
    fibers: dict[str, int] = {}
    for vid in src.vertices:
        fibers[f.vertex_map[vid]] = fibers.get(f.vertex_map[vid], 0) + 1
    candidates = []
    for vid in sorted(src.vertices):
        if vid == src.marking.base or src.vertices[vid].stab_rank != 0:
            continue
        if src.valence(vid) != 2 or fibers[f.vertex_map[vid]] < 2:
            continue
        g1, g2 = src.directions_at(vid)
        if vid in (src.endpoints(g1)[1], src.endpoints(g2)[1]):
            continue
        if f.image_germ(g1) == f.image_germ(g2):
            continue  # the merged image would backtrack at the junction
        if not _germs_covered_elsewhere(f, vid):
            continue  # removal would hide a target germ from the track
        candidates.append(vid)
    if not candidates:
        return None
    vid = candidates[rng.randrange(len(candidates))]
    g1, g2 = src.directions_at(vid)
    new_source, info = graphmod.unsubdivide(src, vid)
    merged_image = [reverse_oedge(o) for o in reversed(f.image_path(g1))] + f.image_path(g2)
    e1 = split_oedge(g1)[0]
    e2 = split_oedge(g2)[0]
    vmap = {v: w for v, w in f.vertex_map.items() if v != vid}
    emap = {e: list(p) for e, p in f.edge_map.items() if e not in (e1, e2)}
    emap[info.new_edge] = merged_image
    cand = Morphism(new_source, f.target, vmap, {e: tuple(p) for e, p in emap.items()})
    return cand if validate_morphism(cand) else None


def _germs_covered_elsewhere(f: Morphism, vid: str) -> bool:
    """Would every target germ seen from ``vid`` stay covered by another
    vertex of the same fiber after removing ``vid``?"""
    src = f.source
    w = f.vertex_map[vid]
    needed = {f.image_germ(d) for d in src.directions_at(vid)}
    for other in sorted(src.vertices):
        if other == vid or f.vertex_map[other] != w:
            continue
        needed -= {f.image_germ(d) for d in src.directions_at(other)}
        if not needed:
            return True
    return not needed


def _gen_fold(f: Morphism, rng: random.Random) -> Optional[Morphism]:
    target = f.target
    candidates = [
        (a, b)
        for a, b in _fold_candidates(target)
        if _fold_safe(f, a, b) and _fold_keeps_structure(f, a, b)
    ]
    if not candidates:
        return None
    a, b = candidates[rng.randrange(len(candidates))]
    try:
        new_target, info = graphmod.fold_edges(target, a, b)
    except FoldtrackError:
        return None
    if not graphmod.validate(new_target):
        return None
    f2 = _compose_fold(f, new_target, info)
    if not validate_morphism(f2):
        return None
    if not _fibers_unadjacent(f2):
        return None
    return f2


def _fold_keeps_structure(f: Morphism, a: str, b: str) -> bool:
    """Reject target folds that would identify the two germs of a source
    loop or make two parallel source edges carry identical images."""
    info_dropped_eid = split_oedge(b)[0]

    def renamed(o: str) -> str:
        eid, sign = split_oedge(o)
        if eid != info_dropped_eid:
            return o
        same_way = sign == split_oedge(b)[1]
        return a if same_way else reverse_oedge(a)

    src = f.source
    germ_cache = {}
    for eid in sorted(src.edges):
        path = [renamed(o) for o in f.edge_map[eid]]
        germ_cache[eid] = (path[0], reverse_oedge(path[-1]), tuple(path))
    for eid in sorted(src.edges):
        e = src.edges[eid]
        if e.is_loop():
            fwd, bwd, _ = germ_cache[eid]
            if fwd == bwd:
                return False
    ids = sorted(src.edges)
    for i, e1 in enumerate(ids):
        for e2 in ids[i + 1 :]:
            d1, d2 = src.edges[e1], src.edges[e2]
            if {d1.src, d1.dst} != {d2.src, d2.dst}:
                continue
            p1 = germ_cache[e1][2]
            p2 = germ_cache[e2][2]
            rev2 = tuple(reverse_oedge(o) for o in reversed(p2))
            if p1 == p2 or p1 == rev2:
                return False
    return True


def _fibers_unadjacent(f: Morphism) -> bool:
    """No non-loop source edge may join two vertices of one image fiber
    (the quotient class data cannot represent such an identification)."""
    for eid in sorted(f.source.edges):
        e = f.source.edges[eid]
        if e.src != e.dst and f.vertex_map[e.src] == f.vertex_map[e.dst]:
            return False
    return True


def _fold_safe(f: Morphism, a: str, b: str) -> bool:
    """Would folding target germs (a, b) keep every image path tight?

    Unsafe exactly when some image path crosses the folded turn, i.e.
    contains ``rev(a), b`` or ``rev(b), a`` consecutively.
    """
    bad = {(reverse_oedge(a), b), (reverse_oedge(b), a)}
    for path in f.edge_map.values():
        for cur, nxt in zip(path, path[1:]):
            if (cur, nxt) in bad or (reverse_oedge(nxt), reverse_oedge(cur)) in bad:
                return False
    return True


def _fold_candidates(g: MarkedGraph) -> list[tuple[str, str]]:
    out = []
    for v in sorted(g.vertices):
        dirs = g.directions_at(v)
        for i, a in enumerate(dirs):
            for b in dirs[i + 1 :]:
                ea, eb = split_oedge(a)[0], split_oedge(b)[0]
                if ea == eb:
                    continue
                if g.edges[ea].length != g.edges[eb].length:
                    continue
                x = g.endpoints(a)[1]
                y = g.endpoints(b)[1]
                if x == y:
                    continue
                out.append((a, b))
    return out


def _compose_subdivision(
    f: Morphism, new_target: MarkedGraph, eid: str, info: graphmod.SubdivisionInfo
) -> Morphism:
    def rewrite(path: Sequence[str]) -> tuple[str, ...]:
        out: list[str] = []
        for o in path:
            cur, sign = split_oedge(o)
            if cur != eid:
                out.append(o)
            elif sign == graphmod.SRC:
                out.extend((info.head + graphmod.SRC, info.tail + graphmod.SRC))
            else:
                out.extend((info.tail + graphmod.DST, info.head + graphmod.DST))
        return tuple(out)

    return Morphism(
        f.source,
        new_target,
        dict(f.vertex_map),
        {e: rewrite(path) for e, path in f.edge_map.items()},
    )


def _compose_fold(f: Morphism, new_target: MarkedGraph, info: graphmod.FoldInfo) -> Morphism:
    dropped_eid = split_oedge(info.dropped)[0]
    kept = info.kept

    def rewrite_oedge(o: str) -> str:
        eid, sign = split_oedge(o)
        if eid != dropped_eid:
            return o
        # b ran shared -> merged; the same traversal of a runs shared -> into
        same_way = sign == split_oedge(info.dropped)[1]
        return kept if same_way else reverse_oedge(kept)

    vmap = {
        v: (info.into_vertex if w == info.merged_vertex else w)
        for v, w in f.vertex_map.items()
    }
    return Morphism(
        f.source,
        new_target,
        vmap,
        {e: tuple(rewrite_oedge(o) for o in path) for e, path in f.edge_map.items()},
    )


# -- the appendix scenario -----------------------------------------------------


def appendix_fixture() -> tuple[TrainTrack, Morphism]:
    """Hand-built instance whose engine-driven run performs the scripted
    cycle: partial fold, specialization, full fold, singular fold."""
    target = MarkedGraph(
        2,
        {"P": graphmod.VertexData(), "Q": graphmod.VertexData()},
        {
            "t1": graphmod.EdgeData("P", "Q", Fraction(1)),
            "t2": graphmod.EdgeData("P", "Q", Fraction(1)),
            "t3": graphmod.EdgeData("Q", "Q", Fraction(1)),
        },
        graphmod.Marking("P", frozenset({"t1"}), {"t2": "a", "t3": "b"}),
    )
    source, f = _search_appendix_source(target)
    t0 = induced_track(f)
    return t0, f


def _search_appendix_source(target: MarkedGraph) -> tuple[MarkedGraph, Morphism]:
    raise NotImplementedError


def appendix_scenario(include_specialization: bool = True) -> FoldTrace:
    t0, f0 = appendix_fixture()
    return run_folding(t0, f0, allow_specializations=include_specialization)
