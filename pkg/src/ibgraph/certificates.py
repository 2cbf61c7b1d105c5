"""Certificate types and their JSON wire format.

A recognition run ends in a certificate: either a positive one (a
pattern-free ordering plus an interval representation) or a negative one
carrying a machine-checkable witness.  Serialization is canonical - keys
sorted, compact separators - so identical inputs produce byte-identical
certificate files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .bigraph import Bigraph, IntervalModel, Ordering
from .engine import CircuitTrace
from .errors import MalformedInput
from .pairdigraph import Pair

SELF_COUPLED = "self_coupled"
STEP2_CONFLICT = "step2_conflict"
ENVELOPE_CIRCUIT = "envelope_circuit"


@dataclass(frozen=True)
class ExoBiclique:
    """A biclique with three incomparable external vertices on each side."""

    m_side: frozenset[int]        # black part of the biclique
    n_side: frozenset[int]        # white part of the biclique
    black_triple: tuple[int, int, int]
    white_triple: tuple[int, int, int]


@dataclass
class SelfCoupledWitness:
    pair: Pair
    component: int
    forward_path: list[Pair]      # (u,v) leads to (v,u)
    backward_path: list[Pair]     # (v,u) leads back to (u,v)


@dataclass
class Step2ConflictWitness:
    component: int
    couple: int
    circuit_first: CircuitTrace
    circuit_second: CircuitTrace
    exobiclique: Optional[ExoBiclique]


@dataclass
class EnvelopeCircuitWitness:
    phase: str                    # "step3" or "step5"
    circuit: CircuitTrace


Witness = SelfCoupledWitness | Step2ConflictWitness | EnvelopeCircuitWitness


@dataclass
class Certificate:
    verdict: str                  # "yes" | "no"
    ordering: Optional[Ordering] = None
    intervals: Optional[IntervalModel] = None
    witness: Optional[Witness] = None

    @property
    def accepted(self) -> bool:
        return self.verdict == "yes"

    # -- serialization -------------------------------------------------

    def to_dict(self, g: Optional[Bigraph] = None) -> dict:
        if self.verdict == "yes":
            seq = self.ordering.sequence()
            items = []
            for v in range(len(seq)):
                item = {
                    "vertex": v,
                    "left": int(self.intervals.lefts[v]),
                    "right": int(self.intervals.rights[v]),
                }
                if g is not None:
                    item["color"] = "B" if g.color(v) == 0 else "W"
                items.append(item)
            return {"verdict": "yes", "ordering": seq, "intervals": items}
        return {"verdict": "no", "witness": _witness_to_dict(self.witness)}

    def to_json(self, g: Optional[Bigraph] = None) -> str:
        return json.dumps(self.to_dict(g), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "Certificate":
        try:
            verdict = data["verdict"]
            if verdict == "yes":
                ordering = Ordering.from_sequence([int(v) for v in data["ordering"]])
                items = sorted(data["intervals"], key=lambda item: item["vertex"])
                if [item["vertex"] for item in items] != list(range(len(items))):
                    raise MalformedInput("interval items must cover vertices 0..n-1")
                model = IntervalModel(
                    tuple(int(item["left"]) for item in items),
                    tuple(int(item["right"]) for item in items),
                )
                return cls("yes", ordering=ordering, intervals=model)
            if verdict == "no":
                return cls("no", witness=_witness_from_dict(data["witness"]))
        except MalformedInput:
            raise
        except Exception as exc:
            raise MalformedInput(f"bad certificate: {exc}") from exc
        raise MalformedInput(f"unknown verdict {verdict!r}")

    @classmethod
    def from_json(cls, text: str) -> "Certificate":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"certificate is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise MalformedInput("certificate must be a JSON object")
        return cls.from_dict(data)


def _trace_to_dict(trace: CircuitTrace) -> dict:
    return {
        "pairs": [list(p) for p in trace.pairs],
        "derivations": trace.derivations,
        "blame": trace.blame,
        "phase": trace.phase,
    }


def _trace_from_dict(data: dict) -> CircuitTrace:
    return CircuitTrace(
        pairs=[(int(p[0]), int(p[1])) for p in data["pairs"]],
        derivations=list(data["derivations"]),
        blame=data.get("blame"),
        phase=str(data.get("phase", "adhoc")),
    )


def _exo_to_dict(e: ExoBiclique) -> dict:
    return {
        "m_side": sorted(e.m_side),
        "n_side": sorted(e.n_side),
        "black_triple": list(e.black_triple),
        "white_triple": list(e.white_triple),
    }


def _exo_from_dict(data: dict) -> ExoBiclique:
    return ExoBiclique(
        m_side=frozenset(int(v) for v in data["m_side"]),
        n_side=frozenset(int(v) for v in data["n_side"]),
        black_triple=tuple(int(v) for v in data["black_triple"]),
        white_triple=tuple(int(v) for v in data["white_triple"]),
    )


def _witness_to_dict(w: Witness) -> dict:
    if isinstance(w, SelfCoupledWitness):
        return {
            "kind": SELF_COUPLED,
            "pair": list(w.pair),
            "component": w.component,
            "forward_path": [list(p) for p in w.forward_path],
            "backward_path": [list(p) for p in w.backward_path],
        }
    if isinstance(w, Step2ConflictWitness):
        return {
            "kind": STEP2_CONFLICT,
            "component": w.component,
            "couple": w.couple,
            "circuit_first": _trace_to_dict(w.circuit_first),
            "circuit_second": _trace_to_dict(w.circuit_second),
            "exobiclique": _exo_to_dict(w.exobiclique) if w.exobiclique else None,
        }
    if isinstance(w, EnvelopeCircuitWitness):
        return {
            "kind": ENVELOPE_CIRCUIT,
            "phase": w.phase,
            "circuit": _trace_to_dict(w.circuit),
        }
    raise TypeError(f"unknown witness type {type(w)!r}")


def _witness_from_dict(data: dict) -> Witness:
    kind = data["kind"]
    if kind == SELF_COUPLED:
        return SelfCoupledWitness(
            pair=(int(data["pair"][0]), int(data["pair"][1])),
            component=int(data["component"]),
            forward_path=[(int(p[0]), int(p[1])) for p in data["forward_path"]],
            backward_path=[(int(p[0]), int(p[1])) for p in data["backward_path"]],
        )
    if kind == STEP2_CONFLICT:
        exo = data.get("exobiclique")
        return Step2ConflictWitness(
            component=int(data["component"]),
            couple=int(data["couple"]),
            circuit_first=_trace_from_dict(data["circuit_first"]),
            circuit_second=_trace_from_dict(data["circuit_second"]),
            exobiclique=_exo_from_dict(exo) if exo else None,
        )
    if kind == ENVELOPE_CIRCUIT:
        return EnvelopeCircuitWitness(
            phase=str(data["phase"]),
            circuit=_trace_from_dict(data["circuit"]),
        )
    raise MalformedInput(f"unknown witness kind {kind!r}")
