"""Exact free-group word algebra and subgroup-graph (Stallings) utilities.

Elements of the rank-``N`` free group are reduced ASCII words: ``a``-``z``
are the generators, ``A``-``Z`` their inverses, ``""`` the identity.  The
alphabet is capped at 26 generators; every public function accepts
unreduced input and reduces it first.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

from .errors import FoldtrackError

try:  # compiled kernels; behaviourally identical to the pure module
    from ._speedups import cyclic_split, mul, reduce_word  # type: ignore

    KERNEL = "speedups"
except ImportError:  # pragma: no cover - exercised when the extension is absent
    from ._wordops import cyclic_split, mul, reduce_word

    KERNEL = "python"

ALPHABET = "abcdefghijklmnopqrstuvwxyz"


def generator(i: int) -> str:
    """The ``i``-th (0-based) generator symbol."""
    return ALPHABET[i]


def inverse(w: str) -> str:
    return w[::-1].swapcase()


def reduce(w: str) -> str:
    return reduce_word(w)


def multiply(*words: str) -> str:
    """Reduced product of any number of words (reducing as it goes)."""
    acc = ""
    for w in words:
        acc = mul(acc, reduce_word(w))
    return acc


def conjugate(w: str, by: str) -> str:
    """``by * w * by^-1`` reduced."""
    return multiply(by, w, inverse(by))


def cyclic_reduce(w: str) -> tuple[str, str]:
    """Return ``(core, conjugator)`` with ``w = conjugator*core*conjugator^-1``.

    ``core`` is cyclically reduced and empty iff ``w`` is trivial.
    """
    return cyclic_split(reduce_word(w))


def is_reduced(w: str) -> bool:
    return reduce_word(w) == w


def check_alphabet(w: str, rank: int) -> bool:
    allowed = set(ALPHABET[:rank]) | set(ALPHABET[:rank].upper())
    return all(ch in allowed for ch in w)


class _FoldedGraph:
    """Folded Stallings graph of a word family, with rewriting memory.

    Vertices are integers, ``0`` is the base.  ``out[v][letter]`` and
    ``inc[v][letter]`` give at most one edge per (vertex, letter, direction)
    once folded.  Each edge remembers an expression of its letter-path in
    the original generators ("memory"), so membership traces double as a
    rewriting algorithm over the input family.
    """

    def __init__(self, words: Sequence[str], track_memory: bool = False):
        self.track_memory = track_memory
        self.next_vertex = 1
        # edge id -> [src, dst, letter, memory]; memory is a tuple of
        # (input index, sign) pairs, freely reduced as symbols.
        self.edges: dict[int, list] = {}
        self.out: dict[int, dict[str, set[int]]] = {0: {}}
        self.inc: dict[int, dict[str, set[int]]] = {0: {}}
        self.next_edge = 0
        for idx, word in enumerate(words):
            self._add_loop(idx, reduce_word(word))
        self._fold()

    # -- construction -------------------------------------------------

    def _new_vertex(self) -> int:
        v = self.next_vertex
        self.next_vertex += 1
        self.out[v] = {}
        self.inc[v] = {}
        return v

    def _add_edge(self, src: int, dst: int, letter: str, memory: tuple) -> None:
        eid = self.next_edge
        self.next_edge += 1
        self.edges[eid] = [src, dst, letter, memory]
        self.out[src].setdefault(letter, set()).add(eid)
        self.inc[dst].setdefault(letter, set()).add(eid)

    def _add_loop(self, idx: int, word: str) -> None:
        if not word:
            return
        cur = 0
        for pos, ch in enumerate(word):
            last = pos == len(word) - 1
            nxt = 0 if last else self._new_vertex()
            memory = ((idx, 1),) if (last and self.track_memory) else ()
            if ch.islower():
                self._add_edge(cur, nxt, ch, memory)
            else:
                # reading an inverse letter means traversing a positive
                # edge backwards
                self._add_edge(nxt, cur, ch.lower(), _inv_mem(memory))
            cur = nxt

    # -- folding -------------------------------------------------------

    def _fold(self) -> None:
        dirty = list(self.out)
        while dirty:
            v = dirty.pop()
            if v not in self.out:
                continue
            merged = True
            while merged and v in self.out:
                merged = False
                for table in (self.out[v], self.inc[v]):
                    for letter, eids in table.items():
                        if len(eids) > 1:
                            it = sorted(eids)
                            touched = self._merge_edges(it[0], it[1])
                            dirty.extend(touched)
                            merged = True
                            break
                    if merged:
                        break

    def _merge_edges(self, keep: int, drop: int) -> list[int]:
        """Fold edge ``drop`` onto ``keep`` (same letter, shared endpoint)."""
        ks, kd, _, kmem = self.edges[keep]
        ds, dd, _, dmem = self.edges[drop]
        if (ks == ds and kd != dd and dd < kd) or (kd == dd and ks != ds and ds < ks):
            # keep the smaller far vertex so the base (vertex 0) persists
            keep, drop = drop, keep
            ks, kd, _, kmem = self.edges[keep]
            ds, dd, _, dmem = self.edges[drop]
        self._detach(drop)
        touched = [ks, kd]
        if ks == ds and kd != dd:
            # gauge-shift dd's edges by kmem^-1 * dmem, then merge dd -> kd
            self._merge_vertices(kd, dd, _mul_mem(_inv_mem(kmem), dmem))
            touched.append(kd)
        elif kd == dd and ks != ds:
            self._merge_vertices(ks, ds, _mul_mem(kmem, _inv_mem(dmem)))
            touched.append(ks)
        else:
            # parallel edges: for a free family the memories agree; if they
            # do not, the input had a relation (not a basis) and the caller
            # only loses rewriting ability, not correctness of membership.
            pass
        return touched

    def _detach(self, eid: int) -> None:
        src, dst, letter, _ = self.edges.pop(eid)
        self.out[src][letter].discard(eid)
        if not self.out[src][letter]:
            del self.out[src][letter]
        self.inc[dst][letter].discard(eid)
        if not self.inc[dst][letter]:
            del self.inc[dst][letter]

    def _merge_vertices(self, keep: int, drop: int, shift: tuple) -> None:
        """Merge ``drop`` into ``keep``; ``shift`` pre-multiplies memories
        of paths continuing out of ``drop``."""
        if keep == drop:
            return
        for table, is_out in ((self.out, True), (self.inc, False)):
            for eids in list(table[drop].values()):
                for eid in list(eids):
                    edge = self.edges[eid]
                    if is_out and edge[0] == drop:
                        edge[0] = keep
                        edge[3] = _mul_mem(shift, edge[3])
                        self.out[drop][edge[2]].discard(eid)
                        self.out[keep].setdefault(edge[2], set()).add(eid)
                    elif (not is_out) and edge[1] == drop:
                        edge[1] = keep
                        edge[3] = _mul_mem(edge[3], _inv_mem(shift))
                        self.inc[drop][edge[2]].discard(eid)
                        self.inc[keep].setdefault(edge[2], set()).add(eid)
        del self.out[drop]
        del self.inc[drop]

    # -- queries -------------------------------------------------------

    def trace(self, w: str) -> Optional[tuple[int, tuple]]:
        """Follow reduced ``w`` from the base; return (vertex, memory)."""
        cur = 0
        memory: tuple = ()
        for ch in reduce_word(w):
            if ch.islower():
                eids = self.out[cur].get(ch)
                if not eids:
                    return None
                eid = next(iter(eids))
                cur = self.edges[eid][1]
                memory = _mul_mem(memory, self.edges[eid][3])
            else:
                eids = self.inc[cur].get(ch.lower())
                if not eids:
                    return None
                eid = next(iter(eids))
                cur = self.edges[eid][0]
                memory = _mul_mem(memory, _inv_mem(self.edges[eid][3]))
        return cur, memory

    def contains(self, w: str) -> bool:
        hit = self.trace(w)
        return hit is not None and hit[0] == 0


def _inv_mem(mem: tuple) -> tuple:
    return tuple((i, -s) for i, s in reversed(mem))


def _mul_mem(a: tuple, b: tuple) -> tuple:
    out = list(a)
    for item in b:
        if out and out[-1][0] == item[0] and out[-1][1] == -item[1]:
            out.pop()
        else:
            out.append(item)
    return tuple(out)


def subgroup_graph(words: Iterable[str], track_memory: bool = False) -> _FoldedGraph:
    return _FoldedGraph([reduce_word(w) for w in words], track_memory=track_memory)


def subgroup_contains(gens: Sequence[str], w: str) -> bool:
    """Membership of ``w`` in the subgroup generated by ``gens``."""
    return subgroup_graph(gens).contains(w)


def generates_full(words: Iterable[str], rank: int) -> bool:
    """Does the family generate all of the rank-``rank`` free group?

    Decided by folding the wedge of word loops: the family is generating
    iff every generator letter traces a loop at the base of the folded
    graph, i.e. the base component folds to the full rose; by Hopficity a
    generating family of rank-many words is a basis.
    """
    if rank < 1:
        raise FoldtrackError("rank must be >= 1")
    graph = subgroup_graph(words)
    return all(graph.contains(ALPHABET[i]) for i in range(rank))


def rewrite_in_basis(w: str, basis: Sequence[str]) -> Optional[list[tuple[int, int]]]:
    """Express ``w`` over a free basis ``basis`` of the subgroup it spans.

    Returns a list of ``(index, sign)`` pairs whose product (of
    ``basis[index]**sign``) reduces to ``w``, or ``None`` when ``w`` is
    not in the subgroup.  When ``basis`` generates the whole group this
    rewrites arbitrary elements through the basis.
    """
    graph = subgroup_graph(basis, track_memory=True)
    hit = graph.trace(reduce_word(w))
    if hit is None or hit[0] != 0:
        return None
    expression = list(hit[1])
    check = multiply(*(basis[i] if s > 0 else inverse(basis[i]) for i, s in expression))
    if check != reduce_word(w):
        # happens only if the family was not free; report honestly
        return None
    return expression


def _primitive_root(w: str) -> str:
    """Shortest ``r`` with ``w == r**k`` (as a plain string power)."""
    n = len(w)
    for d in range(1, n + 1):
        if n % d == 0 and w == w[:d] * (n // d):
            return w[:d]
    return w


def common_conjugator(pairs: Sequence[tuple[str, str]]) -> Optional[str]:
    """Shortest ``w`` with ``w * u * w^-1 == v`` for every ``(u, v)`` pair.

    Ties are broken lexicographically; ``None`` when no conjugator exists.
    The search is bounded by the total input length, which is sound after
    cyclic normalization of the first nontrivial pair.
    """
    if not pairs:
        raise FoldtrackError("pairs must be nonempty")
    pairs = [(reduce_word(u), reduce_word(v)) for u, v in pairs]
    budget = sum(len(u) + len(v) for u, v in pairs)

    def works(w: str) -> bool:
        return all(conjugate(u, w) == v for u, v in pairs)

    anchor = next(((u, v) for u, v in pairs if u), None)
    if anchor is None:
        # all left sides trivial: only the trivial conjugacy works
        return "" if works("") else None
    u, v = anchor
    core_u, cu = cyclic_reduce(u)
    core_v, cv = cyclic_reduce(v)
    if len(core_u) != len(core_v):
        return None
    root_v = _primitive_root(core_v)
    candidates: set[str] = set()
    rot = core_u
    spin = ""
    for _ in range(len(core_u)):
        if rot == core_v:
            base = multiply(cv, inverse(spin), inverse(cu))
            power = ""
            while len(power) <= budget + len(root_v):
                for signed in (power, inverse(power)) if power else ("",):
                    cand = multiply(cv, signed, inverse(cv), base)
                    if len(cand) <= budget:
                        candidates.add(cand)
                power = mul(power, root_v)
        spin = mul(spin, rot[0])
        rot = mul(mul(inverse(rot[0]), rot), rot[0])
    solutions = sorted((w for w in candidates if works(w)), key=lambda w: (len(w), w))
    return solutions[0] if solutions else None
