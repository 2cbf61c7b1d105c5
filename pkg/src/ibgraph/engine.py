"""Order-propagation engine.

Maintains a growing set D of ordered vertex pairs, viewed as a digraph on
the vertices of the host bigraph.  Three mechanisms grow D:

* component selection: for each coupled pair of nontrivial strong
  components of the pair digraph, one side (with its one-step implication
  closure) is committed, greedily avoiding circuits;
* saturation: D is closed under implication (pair-digraph arcs) and
  transitivity, organized in levels -- level 0 is the committed pairs plus
  everything they imply, each later level is one round of transitivity
  followed by implications of the new pairs;
* sink completion: remaining single-pair components are committed sink
  first (see recognizer.complete_with_sinks).

A *circuit* is a directed cycle in D.  During saturation every inserted
pair carries metadata: its level, a *blame* component (the committed
component that would have to be reversed to retract the pair), whether it
is *original* (its derivation never leans on a pair whose reverse is
present), and its derivation record.  When an original pair closes a
circuit, the blame component is collected for reversal; the saturation
keeps going so that a single pass finds every component that must flip.

Two execution modes compute the same pair set: a vectorized scan without
metadata (the common, circuit-free case) and a per-insertion recording
mode that is rerun only when the scan finds a circuit or a trace log is
requested.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _scc

from .bigraph import Bigraph
from .errors import InternalInconsistency, UnknownPair
from .pairdigraph import ComponentSet, Pair, PairDigraph, find_independent_edges

BASE = "base"
IMPLIED = "implied"
TRANSITIVE = "transitive"

STEP2 = "step2"
STEP3 = "step3"
STEP5 = "step5"


@dataclass(frozen=True)
class PairMeta:
    """Bookkeeping attached to every pair inserted during saturation."""

    level: int
    blame: int
    original: bool
    deriv: tuple
    seq: int


class OrderRelation:
    """A set of ordered vertex pairs with optional per-pair metadata."""

    def __init__(self, n: int, matrix: Optional[np.ndarray] = None,
                 meta: Optional[dict[Pair, PairMeta]] = None):
        self.n = n
        self.matrix = matrix if matrix is not None else np.zeros((n, n), dtype=bool)
        self.meta = meta
        self.insertions = 0
        self.log: Optional[list[str]] = None

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[Pair]) -> "OrderRelation":
        rel = cls(n)
        for u, v in pairs:
            if u == v:
                raise ValueError("diagonal pair")
            rel.matrix[u, v] = True
        return rel

    def __contains__(self, pair: Pair) -> bool:
        return bool(self.matrix[pair[0], pair[1]])

    def __len__(self) -> int:
        return int(self.matrix.sum())

    def pairs(self) -> list[Pair]:
        us, vs = np.nonzero(self.matrix)
        return [(int(u), int(v)) for u, v in zip(us, vs)]


def blame_of(rel: OrderRelation, pair: Pair) -> int:
    """The component a pair's derivation is charged to."""
    if rel.meta is None or pair not in rel.meta:
        raise UnknownPair(f"pair {pair} is not in the relation (or no metadata kept)")
    return rel.meta[pair].blame


@dataclass
class CircuitTrace:
    """A directed cycle in D together with a replayable derivation.

    ``pairs`` lists the arcs around the cycle in order.  ``derivations``
    is a topologically sorted table of grounding records; committed pairs
    ground in an independent-edges witness, so the trace can be replayed
    against the host graph alone.
    """

    pairs: list[Pair]
    derivations: list[dict]
    blame: Optional[int]
    phase: str

    def vertices(self) -> list[int]:
        return [p[0] for p in self.pairs]


@dataclass
class Step2Conflict:
    """Neither side of a coupled component pair can be committed."""

    component: int
    couple: int
    circuit_first: CircuitTrace
    circuit_second: CircuitTrace


@dataclass
class Selection:
    """Result of the component-selection step."""

    chosen: list[int]
    stars: dict[int, list[tuple[Pair, tuple]]]
    relation: np.ndarray

    def batches(self) -> list[tuple[int, list[tuple[Pair, tuple]]]]:
        return [(cid, self.stars[cid]) for cid in self.chosen]


@dataclass
class EnvelopeResult:
    relation: OrderRelation
    circuits: list[CircuitTrace]
    reversals: list[int]
    insertions: int
    had_circuit: bool
    aborted: bool = False


# ---------------------------------------------------------------------------
# Shared digraph helpers (relations live on the host vertex set)
# ---------------------------------------------------------------------------

def _relation_acyclic(matrix: np.ndarray) -> bool:
    if not matrix.any():
        return True
    if (matrix & matrix.T).any():
        return False
    num, _ = _scc(csr_matrix(matrix), directed=True, connection="strong")
    return num == matrix.shape[0]


def _shortest_cycle(matrix: np.ndarray) -> Optional[list[int]]:
    """Vertices of a shortest directed cycle, or None; deterministic."""
    n = matrix.shape[0]
    num, labels = _scc(csr_matrix(matrix), directed=True, connection="strong")
    sizes = np.bincount(labels, minlength=num)
    if (sizes <= 1).all():
        return None
    best: Optional[list[int]] = None
    out = [np.flatnonzero(matrix[v]) for v in range(n)]
    for start in range(n):
        if sizes[labels[start]] <= 1:
            continue
        if best is not None and len(best) == 2:
            break
        prev = {start: -1}
        frontier = [start]
        depth = 0
        found = None
        while frontier and found is None:
            depth += 1
            if best is not None and depth >= len(best):
                break
            nxt = []
            for u in frontier:
                for w in out[u]:
                    w = int(w)
                    if labels[w] != labels[start]:
                        continue
                    if w == start:
                        found = u
                        break
                    if w not in prev:
                        prev[w] = u
                        nxt.append(w)
                if found is not None:
                    break
            frontier = nxt
        if found is not None:
            path = [found]
            while path[-1] != start:
                path.append(prev[path[-1]])
            cycle = list(reversed(path))
            if best is None or len(cycle) < len(best):
                best = cycle
    return best


def _cycle_pairs(cycle: list[int]) -> list[Pair]:
    return [(cycle[i], cycle[(i + 1) % len(cycle)]) for i in range(len(cycle))]


def _derivation_table(g: Bigraph, meta: dict[Pair, PairMeta],
                      roots: Sequence[Pair]) -> list[dict]:
    """Topologically sorted grounding records for the given pairs."""
    table: list[dict] = []
    emitted: set[Pair] = set()

    def emit(pair: Pair):
        if pair in emitted:
            return
        emitted.add(pair)
        pm = meta[pair]
        kind = pm.deriv[0]
        if kind == BASE:
            witness = find_independent_edges(g, pair)
            table.append({
                "pair": list(pair),
                "kind": BASE,
                "component": int(pm.deriv[1]),
                "witness_edges": list(witness) if witness else None,
            })
        elif kind == IMPLIED:
            src = pm.deriv[1]
            emit(src)
            table.append({"pair": list(pair), "kind": IMPLIED, "from": list(src)})
        else:
            w = pm.deriv[1]
            emit((pair[0], w))
            emit((w, pair[1]))
            table.append({"pair": list(pair), "kind": TRANSITIVE, "via": int(w)})

    for p in roots:
        emit(p)
    return table


# ---------------------------------------------------------------------------
# Component selection (stars and the greedy commit)
# ---------------------------------------------------------------------------

def comp_star(cs: ComponentSet, pd: PairDigraph, cid: int) -> list[tuple[Pair, tuple]]:
    """Members of a component plus its one-step implication closure.

    Entries are (pair, derivation); members come first, sorted, each
    implied pair is attributed to its least implying member.
    """
    members = [pd.pair_of(int(pid)) for pid in cs.member_ids(cid)]
    entries: list[tuple[Pair, tuple]] = [(p, (BASE, cid)) for p in members]
    seen = set(members)
    for p in members:
        for q in pd.out_pairs(p):
            if q not in seen:
                seen.add(q)
                entries.append((q, (IMPLIED, p)))
    return entries


def select_components(cs: ComponentSet, pd: PairDigraph):
    """Greedy commit of one side per coupled nontrivial component pair.

    Couples are processed by ascending component id; within a couple the
    smaller id (the one holding the lexicographically least pair) is
    tried first.  Returns a Selection, or a Step2Conflict carrying the
    shortest circuit of each failed attempt.
    """
    if cs.self_coupled is not None:
        raise InternalInconsistency("component selection reached with a self-coupled component")
    n = pd.n
    relation = np.zeros((n, n), dtype=bool)
    meta: dict[Pair, PairMeta] = {}
    chosen: list[int] = []
    stars: dict[int, list[tuple[Pair, tuple]]] = {}
    couples: list[tuple[int, int]] = []
    seen = set()
    for cid in cs.nontrivial_ids():
        cpl = cs.couple_of(cid)
        key = (min(cid, cpl), max(cid, cpl))
        if key not in seen:
            seen.add(key)
            couples.append(key)
    couples.sort()
    seq = 0
    for first, second in couples:
        failures: list[CircuitTrace] = []
        committed = False
        for attempt in (first, second):
            star = comp_star(cs, pd, attempt)
            added: list[Pair] = []
            for pair, deriv in star:
                if not relation[pair[0], pair[1]]:
                    relation[pair[0], pair[1]] = True
                    added.append(pair)
                    meta[pair] = PairMeta(0, attempt, True, deriv, seq)
                    seq += 1
            if _relation_acyclic(relation):
                chosen.append(attempt)
                stars[attempt] = star
                committed = True
                break
            cycle = _shortest_cycle(relation)
            failures.append(CircuitTrace(
                pairs=_cycle_pairs(cycle),
                derivations=_derivation_table(pd.g, meta, _cycle_pairs(cycle)),
                blame=attempt,
                phase=STEP2,
            ))
            for pair in added:
                relation[pair[0], pair[1]] = False
                del meta[pair]
        if not committed:
            return Step2Conflict(first, second, failures[0], failures[1])
    return Selection(chosen=chosen, stars=stars, relation=relation)


# ---------------------------------------------------------------------------
# Circuit detection on standalone relations
# ---------------------------------------------------------------------------

def detect_circuit(rel: OrderRelation) -> Optional[CircuitTrace]:
    """None iff the relation is acyclic; else a shortest directed cycle."""
    cycle = _shortest_cycle(rel.matrix)
    if cycle is None:
        return None
    pairs = _cycle_pairs(cycle)
    derivations: list[dict] = []
    if rel.meta is not None and all(p in rel.meta for p in pairs):
        derivations = _derivation_table_from_rel(rel, pairs)
    return CircuitTrace(pairs=pairs, derivations=derivations, blame=None, phase="adhoc")


def _derivation_table_from_rel(rel, pairs):
    # Standalone relations carry no host graph; ground base pairs without
    # independent-edge witnesses.
    table = []
    emitted = set()

    def emit(pair):
        if pair in emitted:
            return
        emitted.add(pair)
        pm = rel.meta[pair]
        kind = pm.deriv[0]
        if kind == BASE:
            table.append({"pair": list(pair), "kind": BASE,
                          "component": int(pm.deriv[1]), "witness_edges": None})
        elif kind == IMPLIED:
            emit(pm.deriv[1])
            table.append({"pair": list(pair), "kind": IMPLIED, "from": list(pm.deriv[1])})
        else:
            w = pm.deriv[1]
            emit((pair[0], w))
            emit((w, pair[1]))
            table.append({"pair": list(pair), "kind": TRANSITIVE, "via": int(w)})

    for p in pairs:
        emit(p)
    return table


# ---------------------------------------------------------------------------
# Saturation: vectorized scan
# ---------------------------------------------------------------------------

def _bool_matmul(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (x.astype(np.float32) @ y.astype(np.float32)) > 0.5


def _scan_saturate(g: Bigraph, base: np.ndarray) -> tuple[np.ndarray, bool]:
    """Close the pair set under implication and transitivity; no metadata.

    Returns (fixpoint matrix, whether the fixpoint contains a circuit).
    Circuit detection reduces to a 2-cycle test because a transitively
    closed set materializes every directed cycle as a 2-cycle.
    """
    n = g.n
    d = base.copy()
    adj = g.adjacency_matrix
    colors = np.asarray(g.colors)
    same = colors[:, None] == colors[None, :]
    mixed_free = ~same & ~adj
    off = ~np.eye(n, dtype=bool)
    while True:
        # implication to fixpoint
        while True:
            p1 = d & same
            p2 = d & mixed_free
            new = np.zeros_like(d)
            if p1.any():
                new |= _bool_matmul(adj, p1) & ~adj
            if p2.any():
                new |= _bool_matmul(p2, adj)
            new &= ~d & off
            if not new.any():
                break
            d |= new
        newt = _bool_matmul(d, d) & ~d & off
        if not newt.any():
            break
        d |= newt
    return d, bool((d & d.T).any())


# ---------------------------------------------------------------------------
# Saturation: per-insertion recording mode
# ---------------------------------------------------------------------------

def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class _Abort(Exception):
    pass


class _Recorder:
    def __init__(self, g: Bigraph, pd: PairDigraph, phase: str,
                 collect_reversals: bool, abort_on_circuit: bool,
                 log: Optional[list[str]]):
        n = g.n
        self.g = g
        self.pd = pd
        self.n = n
        self.phase = phase
        self.collect_reversals = collect_reversals
        self.abort_on_circuit = abort_on_circuit
        self.log = log
        self.matrix = np.zeros((n, n), dtype=bool)
        self.meta: dict[Pair, PairMeta] = {}
        self.out = [0] * n           # direct successor masks
        self.into = [0] * n          # direct predecessor masks
        self.out_plain = [0] * n     # successor masks, transitive pairs excluded
        self.reach_fwd = [0] * n     # descendants in the closure
        self.reach_bwd = [0] * n
        self.circuits: list[CircuitTrace] = []
        self.reversals: list[int] = []
        self.insertions = 0
        self.seq = 0

    def insert(self, pair: Pair, level: int, blame: int, deriv: tuple,
               parents_original: bool) -> bool:
        x, y = pair
        if self.matrix[x, y]:
            return False
        closes = bool((self.reach_fwd[y] >> x) & 1)
        original = parents_original and not self.matrix[y, x]
        pm = PairMeta(level, blame, original, deriv, self.seq)
        self.seq += 1
        self.meta[pair] = pm
        self.matrix[x, y] = True
        self.out[x] |= 1 << y
        self.into[y] |= 1 << x
        if deriv[0] != TRANSITIVE:
            self.out_plain[x] |= 1 << y
        self.insertions += 1
        if self.log is not None:
            self.log.append(
                f"{level} ({x},{y}) {deriv[0]}"
                f"{'' if len(deriv) < 2 else ':' + str(deriv[1])} S{blame} "
                f"{'original' if original else 'derived'}"
            )
        if closes:
            if self.abort_on_circuit:
                self.circuits.append(self._trace(pair))
                raise _Abort
            if original and self.collect_reversals:
                self.circuits.append(self._trace(pair))
                if blame not in self.reversals:
                    self.reversals.append(blame)
        anc = self.reach_bwd[x] | (1 << x)
        desc = self.reach_fwd[y] | (1 << y)
        for a in _bits(anc):
            self.reach_fwd[a] |= desc
        for b in _bits(desc):
            self.reach_bwd[b] |= anc
        return True

    def _trace(self, closing: Pair) -> CircuitTrace:
        """Closing arc plus a shortest path back, over non-transitive arcs."""
        x, y = closing
        prev = {y: -1}
        frontier = [y]
        while frontier and x not in prev:
            nxt = []
            for u in frontier:
                mask = self.out_plain[u]
                for w in _bits(mask):
                    if w not in prev:
                        prev[w] = u
                        nxt.append(w)
            frontier = nxt
        if x not in prev:
            raise InternalInconsistency(
                f"circuit closed by {closing} has no ground-level path back"
            )
        path = [x]
        while path[-1] != y:
            path.append(prev[path[-1]])
        cycle = list(reversed(path))          # y ... x
        pairs = [closing] + [(cycle[i], cycle[i + 1]) for i in range(len(cycle) - 1)]
        return CircuitTrace(
            pairs=pairs,
            derivations=_derivation_table(self.g, self.meta, pairs),
            blame=self.meta[closing].blame,
            phase=self.phase,
        )

    def run(self, batches: list[tuple[int, list[tuple[Pair, tuple]]]]):
        frontier: list[Pair] = []
        for cid, entries in batches:
            for pair, deriv in entries:
                if self.insert(pair, 0, cid, deriv, True):
                    frontier.append(pair)
        while True:
            # implication fixpoint over the frontier
            qi = 0
            while qi < len(frontier):
                p = frontier[qi]
                qi += 1
                pm = self.meta[p]
                for q in self.pd.out_pairs(p):
                    if self.insert(q, pm.level, pm.blame, (IMPLIED, p), pm.original):
                        frontier.append(q)
            # one transitivity round over the current relation
            cands: list[tuple[int, int, int]] = []
            for x in range(self.n):
                row = self.out[x]
                if not row:
                    continue
                union = 0
                for w in _bits(row):
                    union |= self.out[w]
                news = union & ~row & ~(1 << x)
                for y in _bits(news):
                    via = row & self.into[y]
                    w = (via & -via).bit_length() - 1
                    cands.append((x, y, w))
            if not cands:
                break
            frontier = []
            for x, y, w in sorted(cands):
                if self.matrix[x, y]:
                    continue
                pa = self.meta[(x, w)]
                pb = self.meta[(w, y)]
                level = 1 + max(pa.level, pb.level)
                if self.g.color(x) == self.g.color(y):
                    blame = pb.blame
                else:
                    blame = pa.blame
                if self.insert((x, y), level, blame, (TRANSITIVE, w),
                               pa.original and pb.original):
                    frontier.append((x, y))


def saturate(
    g: Bigraph,
    pd: PairDigraph,
    batches: list[tuple[int, list[tuple[Pair, tuple]]]],
    *,
    phase: str = STEP3,
    record: bool = False,
    abort_on_circuit: bool = False,
    log: Optional[list[str]] = None,
) -> EnvelopeResult:
    """Close the committed pairs under implication and transitivity.

    The scan mode answers "what is the fixpoint and does it contain a
    circuit"; the recording mode replays the same computation pair by
    pair, collecting circuit traces and the components to reverse.  Both
    modes produce the same pair set on circuit-free instances.
    """
    n = g.n
    if not record and log is None:
        base = np.zeros((n, n), dtype=bool)
        for _, entries in batches:
            for (u, v), _deriv in entries:
                base[u, v] = True
        matrix, had = _scan_saturate(g, base)
        rel = OrderRelation(n, matrix)
        rel.insertions = int(matrix.sum())
        return EnvelopeResult(rel, [], [], rel.insertions, had)
    rec = _Recorder(g, pd, phase, collect_reversals=(phase == STEP3),
                    abort_on_circuit=abort_on_circuit, log=log)
    aborted = False
    try:
        rec.run(batches)
    except _Abort:
        aborted = True
    rel = OrderRelation(n, rec.matrix, rec.meta)
    rel.insertions = rec.insertions
    rel.log = log
    had = aborted or bool((rec.matrix & rec.matrix.T).any()) or bool(rec.circuits)
    return EnvelopeResult(rel, rec.circuits, rec.reversals, rec.insertions,
                          had, aborted=aborted)


# ---------------------------------------------------------------------------
# Minimal circuit shape
# ---------------------------------------------------------------------------

def minimal_circuit(traces: list[CircuitTrace], g: Bigraph) -> CircuitTrace:
    """The earliest recorded circuit, validated against its expected shape.

    The first circuit of a saturation pass must have exactly four pairs
    whose vertices, read around the cycle, are two same-color vertices
    followed by two of the other color.  Anything else means the engine
    contradicted the structure it relies on, which is reported rather
    than silently accepted.
    """
    if not traces:
        raise ValueError("no circuit traces recorded")
    trace = traces[0]
    ok = len(trace.pairs) == 4
    if ok:
        cyc = trace.vertices()
        changes = sum(
            1 for i in range(4)
            if g.color(cyc[i]) != g.color(cyc[(i + 1) % 4])
        )
        ok = changes == 2
    if not ok:
        raise InternalInconsistency(
            f"first recorded circuit has unexpected shape: {trace.pairs}", trace=trace
        )
    return trace
