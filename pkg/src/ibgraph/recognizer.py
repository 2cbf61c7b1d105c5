"""Recognition pipeline.

``recognize`` runs the full decision procedure on a bigraph and returns a
certificate:

1. build the pair digraph and its strong components; a self-coupled
   component is an immediate rejection with a two-path witness;
2. commit one side of every coupled nontrivial component pair, greedily
   avoiding circuits; if some couple fails both ways, reject (attempting
   to extract an exobiclique witness);
3. saturate the committed set under implication and transitivity,
   collecting the components that every consistent selection would have
   to reverse;
4. rebuild the committed set with those components reversed (this must be
   circuit-free);
5. saturate again; a circuit now is a rejection with a derivation trace;
6. complete the relation by committing remaining single-pair components
   sink first, keeping the relation transitively closed;
7. read off the total order and build the interval representation.

Every accepted instance is re-validated (pattern check plus interval
check); a failure there raises InternalInconsistency instead of returning
a bogus certificate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bigraph import (
    Bigraph,
    GraphComponent,
    IntervalModel,
    Ordering,
    build_intervals,
    check_ordering,
    connected_components,
    validate_intervals,
)
from .certificates import (
    Certificate,
    EnvelopeCircuitWitness,
    SelfCoupledWitness,
    Step2ConflictWitness,
)
from .engine import (
    STEP3,
    STEP5,
    EnvelopeResult,
    OrderRelation,
    Selection,
    Step2Conflict,
    comp_star,
    minimal_circuit,
    saturate,
    select_components,
)
from .errors import InternalInconsistency, NotTotal, NotTransitive
from .pairdigraph import (
    ComponentSet,
    PairDigraph,
    build_pair_digraph,
    pair_path,
    strong_components,
)

__all__ = [
    "RecognitionTrace",
    "recognize",
    "rebuild_after_reversals",
    "complete_with_sinks",
    "extract_ordering",
]


@dataclass
class RecognitionTrace:
    """Diagnostics for one recognition run (never part of a certificate)."""

    timings: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)
    reversals: list = field(default_factory=list)
    circuits_step3: int = 0

    def add(self, other: "RecognitionTrace"):
        for k, v in other.timings.items():
            self.timings[k] = self.timings.get(k, 0.0) + v
        for k, v in other.counters.items():
            self.counters[k] = self.counters.get(k, 0) + v
        self.reversals.extend(other.reversals)
        self.circuits_step3 += other.circuits_step3


def recognize(
    g: Bigraph,
    *,
    trace: Optional[RecognitionTrace] = None,
    log: Optional[list] = None,
) -> Certificate:
    """Decide whether the bigraph has an interval representation.

    Disconnected inputs are decided per connected component; a single
    rejected component rejects the whole graph with that component's
    witness, translated back to the original vertex ids.
    """
    comps = connected_components(g)
    if len(comps) == 1 and comps[0].vertices == tuple(range(g.n)):
        return _recognize_connected(g, trace=trace, log=log)
    partials: list[tuple[GraphComponent, Certificate]] = []
    for comp in comps:
        sub_trace = RecognitionTrace() if trace is not None else None
        cert = _recognize_connected(comp.graph, trace=sub_trace, log=log)
        if trace is not None:
            trace.add(sub_trace)
        if not cert.accepted:
            return Certificate("no", witness=_remap_witness(cert.witness, comp.vertices))
        partials.append((comp, cert))
    if g.n == 0:
        return Certificate("yes", ordering=Ordering(()), intervals=IntervalModel((), ()))
    ranks = [0] * g.n
    lefts = [0] * g.n
    rights = [0] * g.n
    offset = 0
    for comp, cert in partials:
        for local, orig in enumerate(comp.vertices):
            ranks[orig] = cert.ordering.ranks[local] + offset
            lefts[orig] = cert.intervals.lefts[local] + offset
            rights[orig] = cert.intervals.rights[local] + offset
        offset += comp.graph.n
    ordering = Ordering(tuple(ranks))
    model = IntervalModel(tuple(lefts), tuple(rights))
    if check_ordering(g, ordering) is not None or not validate_intervals(g, model):
        raise InternalInconsistency("merged certificate failed validation", trace=trace)
    return Certificate("yes", ordering=ordering, intervals=model)


def _recognize_connected(
    g: Bigraph,
    *,
    trace: Optional[RecognitionTrace] = None,
    log: Optional[list] = None,
) -> Certificate:
    trace = trace if trace is not None else RecognitionTrace()
    record = log is not None

    t0 = time.perf_counter()
    pd = build_pair_digraph(g)
    t1 = time.perf_counter()
    cs = strong_components(pd)
    t2 = time.perf_counter()
    trace.timings["build"] = t1 - t0
    trace.timings["scc"] = t2 - t1
    trace.counters.update(
        n=g.n, m=g.m, pairs=g.n * (g.n - 1), arcs=pd.num_arcs,
        components=cs.num_components,
        nontrivial_components=len(cs.nontrivial_ids()),
    )

    if cs.self_coupled is not None:
        witness = _self_coupled_witness(pd, cs)
        trace.timings["total"] = time.perf_counter() - t0
        return Certificate("no", witness=witness)

    sel = select_components(cs, pd)
    t3 = time.perf_counter()
    trace.timings["select"] = t3 - t2
    if isinstance(sel, Step2Conflict):
        from .witness import extract_exobiclique  # local import, avoids a cycle

        exo = extract_exobiclique(g, sel)
        trace.timings["total"] = time.perf_counter() - t3 + (t3 - t0)
        return Certificate("no", witness=Step2ConflictWitness(
            component=sel.component, couple=sel.couple,
            circuit_first=sel.circuit_first, circuit_second=sel.circuit_second,
            exobiclique=exo,
        ))
    trace.counters["selected_components"] = len(sel.chosen)

    res3 = saturate(g, pd, sel.batches(), phase=STEP3, record=record, log=log)
    reversals: list[int] = []
    if res3.had_circuit:
        if res3.relation.meta is None:
            res3 = saturate(g, pd, sel.batches(), phase=STEP3, record=True, log=log)
        if res3.circuits:
            minimal_circuit(res3.circuits, g)
        reversals = res3.reversals
        trace.circuits_step3 = len(res3.circuits)
    trace.reversals = list(reversals)
    trace.counters["envelope_insertions"] = res3.insertions

    if res3.had_circuit and not reversals:
        # Nothing to reverse; the rebuilt set equals the old one, so the
        # second saturation is doomed.  Rerun it for the rejection trace.
        res5 = saturate(g, pd, sel.batches(), phase=STEP5, record=True,
                        abort_on_circuit=True, log=log)
        trace.timings["envelope"] = time.perf_counter() - t3
        trace.timings["total"] = time.perf_counter() - t0
        return Certificate("no", witness=EnvelopeCircuitWitness(
            phase=STEP5, circuit=res5.circuits[0]))

    if reversals:
        batches1 = rebuild_after_reversals(cs, pd, sel, reversals)
        res5 = saturate(g, pd, batches1, phase=STEP5, record=record, log=log)
        trace.counters["envelope_insertions"] += res5.insertions
        if res5.had_circuit:
            res5 = saturate(g, pd, batches1, phase=STEP5, record=True,
                            abort_on_circuit=True, log=log)
            trace.timings["envelope"] = time.perf_counter() - t3
            trace.timings["total"] = time.perf_counter() - t0
            return Certificate("no", witness=EnvelopeCircuitWitness(
                phase=STEP5, circuit=res5.circuits[0]))
        final_env = res5
    else:
        final_env = res3
    t4 = time.perf_counter()
    trace.timings["envelope"] = t4 - t3

    completed, additions = complete_with_sinks(final_env.relation, cs, pd)
    trace.counters["completion_additions"] = additions
    try:
        ordering = extract_ordering(completed)
    except (NotTotal, NotTransitive) as exc:
        raise InternalInconsistency(
            f"completion did not produce a transitive tournament: {exc}", trace=trace
        ) from exc
    t5 = time.perf_counter()
    trace.timings["complete"] = t5 - t4

    violation = check_ordering(g, ordering)
    if violation is not None:
        raise InternalInconsistency(
            f"accepted ordering contains forbidden pattern {violation}", trace=trace
        )
    model = build_intervals(g, ordering)
    if not validate_intervals(g, model):
        raise InternalInconsistency("interval model failed validation", trace=trace)
    trace.timings["validate"] = time.perf_counter() - t5
    trace.timings["total"] = time.perf_counter() - t0
    return Certificate("yes", ordering=ordering, intervals=model)


# ---------------------------------------------------------------------------
# Step pieces
# ---------------------------------------------------------------------------

def _self_coupled_witness(pd: PairDigraph, cs: ComponentSet) -> SelfCoupledWitness:
    cid = cs.self_coupled
    pair = None
    for pid in cs.member_ids(cid):
        p = pd.pair_of(int(pid))
        if cs.component_of((p[1], p[0])) == cid:
            pair = p
            break
    forward = pair_path(pd, pair, (pair[1], pair[0]))
    backward = pair_path(pd, (pair[1], pair[0]), pair)
    if forward is None or backward is None:
        raise InternalInconsistency("self-coupled component without connecting paths")
    return SelfCoupledWitness(pair=pair, component=cid,
                              forward_path=forward, backward_path=backward)


def rebuild_after_reversals(
    cs: ComponentSet,
    pd: PairDigraph,
    sel: Selection,
    reversals: list[int],
) -> list[tuple[int, list]]:
    """Re-commit the selection with the blamed components flipped.

    The rebuilt base set must be circuit-free; a circuit here contradicts
    the flip rule and is reported as an internal inconsistency.
    """
    flip = set(reversals)
    batches = []
    matrix = np.zeros((pd.n, pd.n), dtype=bool)
    for cid in sel.chosen:
        use = cs.couple_of(cid) if cid in flip else cid
        star = sel.stars[cid] if use == cid else comp_star(cs, pd, use)
        batches.append((use, star))
        for (u, v), _ in star:
            matrix[u, v] = True
    from .engine import _relation_acyclic

    if not _relation_acyclic(matrix):
        raise InternalInconsistency("rebuilt selection contains a circuit")
    return batches


def complete_with_sinks(
    rel: OrderRelation, cs: ComponentSet, pd: PairDigraph
) -> tuple[OrderRelation, int]:
    """Commit remaining single-pair components, sink first.

    Components are visited by ascending longest-path-to-sink level in the
    pair-digraph condensation; when a component is visited, every pair it
    dominates is already decided, so each visit is a legal sink commit.
    Ties are broken along a topological order of the current relation to
    keep runs reproducible.  The relation is kept transitively closed
    throughout, and the sink rule guarantees no circuit can appear.
    """
    n = pd.n
    if n == 0:
        return OrderRelation(0), 0
    m = rel.matrix.copy()
    mt = m.T.copy()
    levels = cs.sink_levels()
    pos = _topo_positions(m)

    pid_all = np.arange(n * n, dtype=np.int64)
    us, vs = pid_all // n, pid_all % n
    valid = us != vs
    comp = cs.comp_of_pid
    trivial = np.zeros(n * n, dtype=bool)
    trivial[valid] = cs.sizes[comp[valid]] == 1
    visit = pid_all[trivial]
    key_level = levels[comp[visit]]
    order = np.lexsort((pos[visit % n], pos[visit // n], key_level))
    visit = visit[order]

    additions = 0
    chunk_size = 4096
    for start in range(0, visit.size, chunk_size):
        chunk = visit[start:start + chunk_size]
        cu, cv = chunk // n, chunk % n
        open_mask = ~(m[cu, cv] | m[cv, cu])
        for pid in chunk[open_mask]:
            u, v = int(pid) // n, int(pid) % n
            if m[u, v] or m[v, u]:
                continue
            anc = mt[u].copy()
            anc[u] = True
            desc = m[v].copy()
            desc[v] = True
            rows = np.flatnonzero(anc)
            cols = np.flatnonzero(desc)
            m[np.ix_(rows, cols)] = True
            mt[np.ix_(cols, rows)] = True
            additions += 1
    if (m & m.T).any():
        raise InternalInconsistency("sink completion closed a circuit")
    out = OrderRelation(n, m, rel.meta)
    out.insertions = rel.insertions + additions
    return out, additions


def _topo_positions(matrix: np.ndarray) -> np.ndarray:
    """Kahn's algorithm with ascending-id tie break; position per vertex."""
    n = matrix.shape[0]
    indeg = matrix.sum(axis=0).astype(np.int64)
    remaining = np.ones(n, dtype=bool)
    pos = np.zeros(n, dtype=np.int64)
    for i in range(n):
        ready = np.flatnonzero(remaining & (indeg == 0))
        if ready.size == 0:
            raise InternalInconsistency("relation is cyclic before completion")
        v = int(ready[0])
        pos[v] = i
        remaining[v] = False
        indeg -= matrix[v]
    return pos


def extract_ordering(rel: OrderRelation) -> Ordering:
    """Total order of a transitive tournament; u < v iff (u, v) committed."""
    m = rel.matrix
    n = m.shape[0]
    if n == 0:
        return Ordering(())
    both = m & m.T
    if both.any():
        raise NotTransitive("relation contains a 2-cycle")
    undecided = ~(m | m.T)
    np.fill_diagonal(undecided, False)
    if undecided.any():
        u, v = np.argwhere(undecided)[0]
        raise NotTotal(f"pair ({u},{v}) is undecided")
    ranks = n - m.sum(axis=1).astype(np.int64)
    expected = ranks[:, None] < ranks[None, :]
    if not (expected == m).all():
        raise NotTransitive("tournament is not transitive")
    return Ordering(tuple(int(r) for r in ranks))


# ---------------------------------------------------------------------------
# Witness remapping for disconnected inputs
# ---------------------------------------------------------------------------

def _remap_witness(w, mapping: tuple[int, ...]):
    from .certificates import (
        EnvelopeCircuitWitness as ECW,
        SelfCoupledWitness as SCW,
        Step2ConflictWitness as S2W,
    )
    from .certificates import ExoBiclique
    from .engine import CircuitTrace

    def mp(p):
        return (mapping[p[0]], mapping[p[1]])

    def mtrace(t: CircuitTrace) -> CircuitTrace:
        derivs = []
        for rec in t.derivations:
            rec = dict(rec)
            rec["pair"] = [mapping[rec["pair"][0]], mapping[rec["pair"][1]]]
            if rec["kind"] == "implied":
                rec["from"] = [mapping[rec["from"][0]], mapping[rec["from"][1]]]
            elif rec["kind"] == "transitive":
                rec["via"] = mapping[rec["via"]]
            elif rec.get("witness_edges"):
                rec["witness_edges"] = [mapping[x] for x in rec["witness_edges"]]
            derivs.append(rec)
        return CircuitTrace(pairs=[mp(p) for p in t.pairs], derivations=derivs,
                            blame=t.blame, phase=t.phase)

    if isinstance(w, SCW):
        return SCW(pair=mp(w.pair), component=w.component,
                   forward_path=[mp(p) for p in w.forward_path],
                   backward_path=[mp(p) for p in w.backward_path])
    if isinstance(w, S2W):
        exo = w.exobiclique
        if exo is not None:
            exo = ExoBiclique(
                m_side=frozenset(mapping[x] for x in exo.m_side),
                n_side=frozenset(mapping[x] for x in exo.n_side),
                black_triple=tuple(mapping[x] for x in exo.black_triple),
                white_triple=tuple(mapping[x] for x in exo.white_triple),
            )
        return S2W(component=w.component, couple=w.couple,
                   circuit_first=mtrace(w.circuit_first),
                   circuit_second=mtrace(w.circuit_second), exobiclique=exo)
    if isinstance(w, ECW):
        return ECW(phase=w.phase, circuit=mtrace(w.circuit))
    raise TypeError(f"unknown witness type {type(w)!r}")
