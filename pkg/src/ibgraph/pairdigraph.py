"""The digraph on ordered vertex pairs that drives recognition.

For a bigraph H the pair digraph has one vertex per ordered pair (u, v)
with u != v, and two arc families:

* (u, v) -> (u', v)  when u, v share a color, uu' is an edge and vu' is not;
* (u, v) -> (u, v')  when u, v have different colors, vv' is an edge and
  uv is not.

An arc (u, v) -> (u', v') says: any pattern-free ordering that places u
before v must also place u' before v'.  The arc set is skew-symmetric:
(u, v) -> (u', v') exists iff (v', u') -> (v, u) does, which pairs up the
strong components S and S' = {(u, v): (v, u) in S}.

Pairs are indexed as u * n + v.  Arcs are enumerated on demand from the
adjacency sets; a materialized (src, dst) array sorted by (src, dst) is
built once per graph for component computation and path searches, guarded
by a memory budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _scc

from .bigraph import Bigraph
from .errors import TooLarge

Pair = tuple[int, int]

# Trivial-component roles.
SOURCE = "source"
SINK = "sink"
INTERNAL = "internal"
NONTRIVIAL = "nontrivial"

# Default budget: pair count and a 2nm arc bound must stay materializable.
MAX_PAIRS = 30_000_000
MAX_ARCS = 150_000_000


def skew(p: Pair) -> Pair:
    """(u, v) -> (v, u); an involution."""
    return (p[1], p[0])


class PairDigraph:
    """Arc oracle plus materialized arc arrays for one bigraph."""

    def __init__(self, g: Bigraph, max_pairs: int = MAX_PAIRS, max_arcs: int = MAX_ARCS):
        n = g.n
        if n * n > max_pairs:
            raise TooLarge(f"{n * n} ordered pairs exceed the budget of {max_pairs}")
        if 2 * n * g.m > max_arcs:
            raise TooLarge(f"arc bound {2 * n * g.m} exceeds the budget of {max_arcs}")
        self.g = g
        self.n = n
        self.arc_src, self.arc_dst = self._materialize()
        self.num_arcs = int(self.arc_src.size)
        self._out_indptr = self._build_indptr(self.arc_src)
        order = np.argsort(self.arc_dst, kind="stable")
        self._in_sorted_src = self.arc_src[order]
        self._in_indptr = self._build_indptr(self.arc_dst[order])

    # -- construction -------------------------------------------------

    def _materialize(self) -> tuple[np.ndarray, np.ndarray]:
        g, n = self.g, self.n
        colors = np.asarray(g.colors, dtype=np.int8)
        nbrs = g.neighbor_arrays
        srcs: list[np.ndarray] = []
        dsts: list[np.ndarray] = []
        same_ids = [np.flatnonzero(colors == c) for c in (0, 1)]
        adj = g.adjacency_matrix
        # Same-color rule, grouped by the edge (u, u') being used:
        # every same-color source (u, v) with v not adjacent to u' gains
        # the arc (u, v) -> (u', v).
        for u in range(n):
            peers = same_ids[g.color(u)]
            peers = peers[peers != u]
            if peers.size == 0:
                continue
            for u2 in sorted(g.neighbors[u]):
                vs = peers[~adj[peers, u2]]
                if vs.size:
                    srcs.append(u * n + vs)
                    dsts.append(u2 * n + vs)
        # Mixed-color rule, grouped by the second coordinate v: every
        # opposite-color non-neighbor u of v sends (u, v) -> (u, v') for
        # each neighbor v' of v.
        for v in range(n):
            targets = nbrs[v]
            if targets.size == 0:
                continue
            opp = same_ids[1 - g.color(v)]
            us = opp[~adj[opp, v]]
            if us.size == 0:
                continue
            base = us * n
            srcs.append(np.repeat(base + v, targets.size))
            dsts.append((base[:, None] + targets[None, :]).ravel())
        if srcs:
            src = np.concatenate(srcs)
            dst = np.concatenate(dsts)
        else:
            src = np.empty(0, dtype=np.int64)
            dst = np.empty(0, dtype=np.int64)
        order = np.lexsort((dst, src))
        return src[order], dst[order]

    def _build_indptr(self, sorted_keys: np.ndarray) -> np.ndarray:
        counts = np.bincount(sorted_keys, minlength=self.n * self.n)
        return np.concatenate(([0], np.cumsum(counts)))

    # -- queries ------------------------------------------------------

    def pair_id(self, p: Pair) -> int:
        return p[0] * self.n + p[1]

    def pair_of(self, pid: int) -> Pair:
        return (pid // self.n, pid % self.n)

    def pairs(self) -> Iterator[Pair]:
        for u in range(self.n):
            for v in range(self.n):
                if u != v:
                    yield (u, v)

    def out_ids(self, pid: int) -> np.ndarray:
        """Out-neighbor pair ids, ascending."""
        return self.arc_dst[self._out_indptr[pid]:self._out_indptr[pid + 1]]

    def in_ids(self, pid: int) -> np.ndarray:
        """In-neighbor pair ids, ascending."""
        return np.sort(
            self._in_sorted_src[self._in_indptr[pid]:self._in_indptr[pid + 1]]
        )

    def out_pairs(self, p: Pair) -> list[Pair]:
        return [self.pair_of(int(q)) for q in self.out_ids(self.pair_id(p))]

    def has_arc(self, p: Pair, q: Pair) -> bool:
        return arc_exists(self.g, p, q)

    def sparse(self) -> csr_matrix:
        nn = self.n * self.n
        data = np.ones(self.num_arcs, dtype=np.int8)
        return csr_matrix((data, (self.arc_src, self.arc_dst)), shape=(nn, nn))


def arc_exists(g: Bigraph, p: Pair, q: Pair) -> bool:
    """Test one arc directly against the adjacency sets.

    Independent of any materialized arc arrays, so certificate replay can
    use it without trusting the recognizer's construction.
    """
    (u, v), (a, b) = p, q
    if u == v or a == b:
        return False
    if g.color(u) == g.color(v):
        return b == v and a != u and g.is_edge(u, a) and not g.is_edge(v, a)
    return a == u and b != v and g.is_edge(v, b) and not g.is_edge(u, v)


def build_pair_digraph(
    g: Bigraph, max_pairs: int = MAX_PAIRS, max_arcs: int = MAX_ARCS
) -> PairDigraph:
    return PairDigraph(g, max_pairs=max_pairs, max_arcs=max_arcs)


# ---------------------------------------------------------------------------
# Strong components
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Component:
    """Materialized view of one strong component (for small-scale use)."""

    id: int
    members: frozenset[Pair]
    trivial: bool
    couple_id: int
    role: str


class ComponentSet:
    """Strong components of the pair digraph, with coupling.

    Component ids are assigned by ascending least member pair id, so they
    are stable across runs and platforms.
    """

    def __init__(self, pd: PairDigraph):
        self.pd = pd
        n = pd.n
        nn = n * n
        num_raw, raw = _scc(pd.sparse(), directed=True, connection="strong")
        diag = np.arange(n) * n + np.arange(n)
        valid = np.ones(nn, dtype=bool)
        valid[diag] = False
        pid_all = np.arange(nn, dtype=np.int64)
        # Least valid pair id per raw label; diag-only labels are dropped.
        least = np.full(num_raw, nn, dtype=np.int64)
        np.minimum.at(least, raw[valid], pid_all[valid])
        kept = np.flatnonzero(least < nn)
        order = np.argsort(least[kept])
        relabel = np.full(num_raw, -1, dtype=np.int64)
        relabel[kept[order]] = np.arange(kept.size)
        comp = relabel[raw]
        comp[diag] = -1
        self.n = n
        self.num_components = int(kept.size)
        self.comp_of_pid = comp
        self.least_pid = least[kept][order]
        self.sizes = np.bincount(comp[valid], minlength=self.num_components)
        skew_pid = (pid_all % n) * n + (pid_all // n)
        self.couple = comp[skew_pid[self.least_pid]]
        # Sorted members index: pids grouped by component id.
        member_order = np.argsort(comp[valid], kind="stable")
        self._members_sorted = pid_all[valid][member_order]
        self._members_indptr = np.concatenate(
            ([0], np.cumsum(self.sizes))
        )
        self_coupled = np.flatnonzero(self.couple == np.arange(self.num_components))
        self.self_coupled: Optional[int] = (
            int(self_coupled[0]) if self_coupled.size else None
        )
        self._roles: Optional[np.ndarray] = None

    # -- queries ------------------------------------------------------

    def component_of(self, p: Pair) -> int:
        return int(self.comp_of_pid[p[0] * self.n + p[1]])

    def member_ids(self, cid: int) -> np.ndarray:
        lo, hi = self._members_indptr[cid], self._members_indptr[cid + 1]
        return self._members_sorted[lo:hi]

    def members(self, cid: int) -> list[Pair]:
        return [self.pd.pair_of(int(pid)) for pid in self.member_ids(cid)]

    def size(self, cid: int) -> int:
        return int(self.sizes[cid])

    def is_trivial(self, cid: int) -> bool:
        return self.size(cid) == 1

    def couple_of(self, cid: int) -> int:
        return int(self.couple[cid])

    def nontrivial_ids(self) -> list[int]:
        return [int(c) for c in np.flatnonzero(self.sizes > 1)]

    def role_of(self, cid: int) -> str:
        if self._roles is None:
            classify_trivial(self, self.pd)
        return str(self._roles[cid])

    def component(self, cid: int) -> Component:
        return Component(
            id=cid,
            members=frozenset(self.members(cid)),
            trivial=self.is_trivial(cid),
            couple_id=self.couple_of(cid),
            role=self.role_of(cid),
        )

    def condensation_arcs(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct cross-component arcs as (src comp, dst comp) arrays."""
        cs, cd = self.comp_of_pid[self.pd.arc_src], self.comp_of_pid[self.pd.arc_dst]
        cross = cs != cd
        if not cross.any():
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        key = cs[cross] * self.num_components + cd[cross]
        key = np.unique(key)
        return key // self.num_components, key % self.num_components

    def sink_levels(self) -> np.ndarray:
        """Longest-path-to-sink level per component (sinks are level 0)."""
        k = self.num_components
        src, dst = self.condensation_arcs()
        level = np.zeros(k, dtype=np.int64)
        outdeg = np.bincount(src, minlength=k)
        remaining_src, remaining_dst = src, dst
        current = np.flatnonzero(outdeg == 0)
        depth = 0
        done = np.zeros(k, dtype=bool)
        done[current] = True
        while remaining_src.size:
            depth += 1
            keep = ~done[remaining_dst]
            dropped_src = remaining_src[~keep]
            remaining_src, remaining_dst = remaining_src[keep], remaining_dst[keep]
            np.subtract.at(outdeg, dropped_src, 1)
            current = np.flatnonzero((outdeg == 0) & ~done)
            if current.size == 0:
                break
            level[current] = depth
            done[current] = True
        return level


def strong_components(pd: PairDigraph) -> ComponentSet:
    return ComponentSet(pd)


def classify_trivial(cs: ComponentSet, pd: PairDigraph) -> ComponentSet:
    """Label trivial components source/sink/internal from the condensation.

    A trivial component with neither in- nor out-arcs counts as a sink
    (completion consumes sinks, and an isolated pair is order-free).
    """
    k = cs.num_components
    has_out = np.zeros(k, dtype=bool)
    has_in = np.zeros(k, dtype=bool)
    src, dst = cs.condensation_arcs()
    has_out[src] = True
    has_in[dst] = True
    roles = np.empty(k, dtype=object)
    for cid in range(k):
        if cs.sizes[cid] > 1:
            roles[cid] = NONTRIVIAL
        elif not has_out[cid]:
            roles[cid] = SINK
        elif not has_in[cid]:
            roles[cid] = SOURCE
        else:
            roles[cid] = INTERNAL
    cs._roles = roles
    return cs


def condensation_depth(cs: ComponentSet, pd: PairDigraph) -> int:
    """Vertex count of the longest directed path in the condensation."""
    if cs.num_components == 0:
        return 0
    return int(cs.sink_levels().max()) + 1


# ---------------------------------------------------------------------------
# Implication
# ---------------------------------------------------------------------------

def implication_closure(pd: PairDigraph, pairs: Iterable[Pair]) -> set[Pair]:
    """One implication step: the pairs plus everything they dominate."""
    out = set(pairs)
    for p in list(out):
        out.update(pd.out_pairs(p))
    return out


def find_independent_edges(g: Bigraph, p: Pair) -> Optional[tuple[int, int]]:
    """Witness edges for membership in a nontrivial component.

    For p = (u, v) returns the lexicographically least (u', v') such that
    uu' and vv' are independent edges (the four vertices induce exactly
    those two edges).  Returns None when no such witness exists, which for
    uv not an edge happens exactly when (u, v) lies in a trivial component.
    """
    u, v = p
    if u == v or g.is_edge(u, v):
        return None
    for u2 in sorted(g.neighbors[u]):
        if u2 == v or g.is_edge(v, u2):
            continue
        for v2 in sorted(g.neighbors[v]):
            if v2 == u or v2 == u2 or g.is_edge(u, v2) or g.is_edge(u2, v2):
                continue
            return (u2, v2)
    return None


def implied_witness(
    g: Bigraph, cs: ComponentSet, p: Pair
) -> Optional[tuple[int, int, int, int, int]]:
    """Induced five-vertex path witnessing that p is implied.

    Returns (a, b, c, d, e) -- an induced path with N(a) a proper subset
    of N(c) -- iff p = (a, c) is dominated by a nontrivial component it
    does not belong to; None otherwise.
    """
    a, c = p
    if a == c or g.color(a) != g.color(c):
        return None
    cid = cs.component_of(p)
    if not cs.is_trivial(cid):
        return None
    for d in sorted(g.neighbors[c]):
        if g.is_edge(a, d) or d == a:
            continue
        source_cid = cs.component_of((a, d))
        if cs.is_trivial(source_cid):
            continue
        witness = find_independent_edges(g, (a, d))
        if witness is None:
            continue
        b, e = witness
        path = (a, b, c, d, e)
        if _is_induced_path(g, path) and g.neighbors[a] < g.neighbors[c]:
            return path
    return None


def _is_induced_path(g: Bigraph, vs: tuple[int, ...]) -> bool:
    if len(set(vs)) != len(vs):
        return False
    for i in range(len(vs)):
        for j in range(i + 1, len(vs)):
            edge = g.is_edge(vs[i], vs[j])
            if edge != (j == i + 1):
                return False
    return True


# ---------------------------------------------------------------------------
# Paths and DOT export
# ---------------------------------------------------------------------------

def pair_path(pd: PairDigraph, start: Pair, goal: Pair) -> Optional[list[Pair]]:
    """Shortest directed path between two pair vertices, or None."""
    s, t = pd.pair_id(start), pd.pair_id(goal)
    if s == t:
        return [start]
    prev = {s: -1}
    frontier = [s]
    while frontier:
        nxt = []
        for pid in frontier:
            for q in pd.out_ids(pid):
                q = int(q)
                if q in prev:
                    continue
                prev[q] = pid
                if q == t:
                    path = [q]
                    while path[-1] != s:
                        path.append(prev[path[-1]])
                    return [pd.pair_of(x) for x in reversed(path)]
                nxt.append(q)
        frontier = nxt
    return None


def condensation_dot(cs: ComponentSet, pd: PairDigraph) -> str:
    """DOT rendering of the condensation; coupling shown as dashed edges."""
    classify_trivial(cs, pd)
    lines = ["digraph condensation {"]
    for cid in range(cs.num_components):
        u, v = pd.pair_of(int(cs.least_pid[cid]))
        lines.append(
            f'  c{cid} [label="S{cid} ({u},{v}) n={cs.size(cid)} {cs.role_of(cid)}"];'
        )
    src, dst = cs.condensation_arcs()
    for a, b in zip(src.tolist(), dst.tolist()):
        lines.append(f"  c{a} -> c{b};")
    for cid in range(cs.num_components):
        cpl = cs.couple_of(cid)
        if cid < cpl:
            lines.append(f"  c{cid} -> c{cpl} [dir=none, style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"
