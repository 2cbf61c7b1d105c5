"""Bipartite graphs with a fixed black/white bipartition.

The vertex set is always 0..n-1.  Colors are fixed at construction time;
edges may only join a black vertex to a white vertex.  Everything here is
immutable after construction, so instances can be shared freely.

The module also owns the two order-related primitives the recognizer is
built around:

* ``check_ordering`` tests a total ordering for the forbidden pattern
  a < b < c, color(a) = color(b) != color(c), ac an edge, bc a non-edge.
* ``build_intervals`` turns a pattern-free ordering into a closed-interval
  representation: I_v = [s(v), p(v)] where p(v) is the rank of v and s(v)
  is the smallest rank among earlier neighbors (p(v) if there is none).

In a pattern-free ordering the earlier opposite-color neighbors of any
vertex form a suffix of the earlier opposite-color vertices, which is why
the interval construction works; an explicit validator is still run on
every accepted instance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    ColorConflict,
    InvalidOrdering,
    MalformedInput,
    ModelValidationFailed,
    NotBipartite,
)

BLACK = 0
WHITE = 1

_COLOR_LETTER = {BLACK: "B", WHITE: "W"}
_LETTER_COLOR = {"B": BLACK, "W": WHITE}


class Bigraph:
    """An undirected bipartite graph with a fixed two-coloring."""

    __slots__ = ("n", "m", "colors", "neighbors", "name", "__dict__")

    def __init__(
        self,
        colors: Sequence[int],
        edges: Iterable[tuple[int, int]],
        name: Optional[str] = None,
    ):
        colors = np.asarray(colors, dtype=np.int8)
        if colors.ndim != 1:
            raise MalformedInput("colors must be a flat sequence")
        if colors.size and not np.isin(colors, (BLACK, WHITE)).all():
            raise MalformedInput("colors must be 0 (black) or 1 (white)")
        n = int(colors.size)
        adj: list[set[int]] = [set() for _ in range(n)]
        m = 0
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise MalformedInput(f"edge ({u},{v}) out of range 0..{n - 1}")
            if u == v:
                raise MalformedInput(f"self-loop at vertex {u}")
            if colors[u] == colors[v]:
                raise ColorConflict(
                    f"edge ({u},{v}) joins two {'black' if colors[u] == BLACK else 'white'} vertices"
                )
            if v in adj[u]:
                raise MalformedInput(f"duplicate edge ({u},{v})")
            adj[u].add(v)
            adj[v].add(u)
            m += 1
        self.n = n
        self.m = m
        self.colors = colors
        self.colors.setflags(write=False)
        self.neighbors = tuple(frozenset(s) for s in adj)
        self.name = name

    def color(self, v: int) -> int:
        return int(self.colors[v])

    def is_edge(self, u: int, v: int) -> bool:
        return v in self.neighbors[u]

    def degree(self, v: int) -> int:
        return len(self.neighbors[v])

    def edges(self) -> list[tuple[int, int]]:
        """All edges as (black, white) pairs, sorted."""
        out = []
        for u in range(self.n):
            if self.colors[u] == BLACK:
                out.extend((u, v) for v in sorted(self.neighbors[u]))
        out.sort()
        return out

    @cached_property
    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        for u in range(self.n):
            for v in self.neighbors[u]:
                a[u, v] = True
        a.setflags(write=False)
        return a

    @cached_property
    def neighbor_arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(
            np.fromiter(sorted(self.neighbors[u]), dtype=np.int64, count=len(self.neighbors[u]))
            for u in range(self.n)
        )

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Bigraph{label} n={self.n} m={self.m}>"

    def __eq__(self, other):
        return (
            isinstance(other, Bigraph)
            and self.n == other.n
            and self.colors.tolist() == other.colors.tolist()
            and self.neighbors == other.neighbors
        )

    def __hash__(self):
        return hash((self.n, bytes(self.colors), self.neighbors))


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------

def parse_bigraph(text: str) -> Bigraph:
    """Parse the line-oriented graph format.

    Format: optional comment lines ``c ...``, a header ``p ibg <n> <m>``,
    an optional block of vertex lines ``v <id> <B|W>`` (all or none), and
    edge lines ``e <u> <v>``.  When the vertex block is absent, a
    two-coloring is computed by breadth-first layering per connected
    component (isolated vertices become black).
    """
    n = None
    m_declared = None
    name = None
    colors: dict[int, int] = {}
    edge_list: list[tuple[int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "c":
            if name is None and len(parts) > 1:
                name = " ".join(parts[1:])
            continue
        if tag == "p":
            if n is not None:
                raise MalformedInput(f"line {lineno}: duplicate header")
            if len(parts) != 4 or parts[1] != "ibg":
                raise MalformedInput(f"line {lineno}: expected 'p ibg <n> <m>'")
            try:
                n, m_declared = int(parts[2]), int(parts[3])
            except ValueError:
                raise MalformedInput(f"line {lineno}: non-integer header fields") from None
            if n < 0 or m_declared < 0:
                raise MalformedInput(f"line {lineno}: negative header fields")
            continue
        if n is None:
            raise MalformedInput(f"line {lineno}: '{tag}' line before header")
        if tag == "v":
            if len(parts) != 3 or parts[2] not in _LETTER_COLOR:
                raise MalformedInput(f"line {lineno}: expected 'v <id> <B|W>'")
            try:
                vid = int(parts[1])
            except ValueError:
                raise MalformedInput(f"line {lineno}: non-integer vertex id") from None
            if not 0 <= vid < n:
                raise MalformedInput(f"line {lineno}: vertex id {vid} out of range")
            if vid in colors:
                raise MalformedInput(f"line {lineno}: duplicate vertex line for {vid}")
            colors[vid] = _LETTER_COLOR[parts[2]]
        elif tag == "e":
            if len(parts) != 3:
                raise MalformedInput(f"line {lineno}: expected 'e <u> <v>'")
            try:
                u, v = int(parts[1]), int(parts[2])
            except ValueError:
                raise MalformedInput(f"line {lineno}: non-integer edge endpoint") from None
            edge_list.append((u, v))
        else:
            raise MalformedInput(f"line {lineno}: unknown line tag '{tag}'")
    if n is None:
        raise MalformedInput("missing 'p ibg <n> <m>' header")
    if len(edge_list) != m_declared:
        raise MalformedInput(
            f"header declares {m_declared} edges but {len(edge_list)} edge lines found"
        )
    if colors and len(colors) != n:
        raise MalformedInput(
            f"vertex block lists {len(colors)} of {n} vertices; give all or none"
        )
    if colors:
        color_arr = [colors[v] for v in range(n)]
    else:
        color_arr = _two_color(n, edge_list)
    return Bigraph(color_arr, edge_list, name=name)


def _two_color(n: int, edge_list: list[tuple[int, int]]) -> list[int]:
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edge_list:
        if not (0 <= u < n and 0 <= v < n):
            raise MalformedInput(f"edge ({u},{v}) out of range 0..{n - 1}")
        if u == v:
            raise MalformedInput(f"self-loop at vertex {u}")
        adj[u].append(v)
        adj[v].append(u)
    color = [-1] * n
    for start in range(n):
        if color[start] != -1:
            continue
        color[start] = BLACK
        queue = [start]
        while queue:
            u = queue.pop()
            for v in adj[u]:
                if color[v] == -1:
                    color[v] = WHITE if color[u] == BLACK else BLACK
                    queue.append(v)
                elif color[v] == color[u]:
                    raise NotBipartite(f"odd cycle through edge ({u},{v})")
    return color


def write_bigraph(g: Bigraph) -> str:
    lines = []
    if g.name:
        lines.append(f"c {g.name}")
    lines.append(f"p ibg {g.n} {g.m}")
    for v in range(g.n):
        lines.append(f"v {v} {_COLOR_LETTER[g.color(v)]}")
    for u, v in g.edges():
        lines.append(f"e {u} {v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Connected components
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphComponent:
    """A connected induced subgraph with dense ids plus the id mapping.

    ``vertices[i]`` is the original id of the component's vertex ``i``.
    """

    graph: Bigraph
    vertices: tuple[int, ...]


def connected_components(g: Bigraph) -> list[GraphComponent]:
    """Split into connected components, ordered by least original id."""
    seen = [False] * g.n
    out = []
    for start in range(g.n):
        if seen[start]:
            continue
        seen[start] = True
        stack = [start]
        members = [start]
        while stack:
            u = stack.pop()
            for v in g.neighbors[u]:
                if not seen[v]:
                    seen[v] = True
                    members.append(v)
                    stack.append(v)
        members.sort()
        local = {orig: i for i, orig in enumerate(members)}
        edges = [
            (local[u], local[v])
            for u in members
            for v in g.neighbors[u]
            if g.color(u) == BLACK
        ]
        sub = Bigraph([g.color(v) for v in members], edges, name=g.name)
        out.append(GraphComponent(sub, tuple(members)))
    return out


# ---------------------------------------------------------------------------
# Orderings and the forbidden pattern
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ordering:
    """A total ordering, stored as rank per vertex (ranks are 1..n)."""

    ranks: tuple[int, ...]

    def __post_init__(self):
        n = len(self.ranks)
        if sorted(self.ranks) != list(range(1, n + 1)):
            raise InvalidOrdering("ranks must be a bijection onto 1..n")

    @classmethod
    def from_sequence(cls, seq: Sequence[int]) -> "Ordering":
        """Build from a vertex sequence listed first-to-last."""
        ranks = [0] * len(seq)
        for pos, v in enumerate(seq, start=1):
            ranks[v] = pos
        return cls(tuple(ranks))

    def rank(self, v: int) -> int:
        return self.ranks[v]

    def sequence(self) -> list[int]:
        """Vertices listed first-to-last."""
        out = [0] * len(self.ranks)
        for v, r in enumerate(self.ranks):
            out[r - 1] = v
        return out


@dataclass(frozen=True)
class PatternViolation:
    """A triple a < b < c with color(a)=color(b)!=color(c), ac in E, bc not."""

    a: int
    b: int
    c: int


def check_ordering(g: Bigraph, ordering: Ordering) -> Optional[PatternViolation]:
    """Return None iff the ordering avoids the forbidden pattern.

    On failure returns the violating triple that is least in the
    lexicographic order of (rank(a), rank(b), rank(c)).
    """
    if len(ordering.ranks) != g.n:
        raise InvalidOrdering(f"ordering covers {len(ordering.ranks)} of {g.n} vertices")
    if g.n < 3 or g.m == 0:
        return None
    ranks = np.asarray(ordering.ranks, dtype=np.int64)
    adj = g.adjacency_matrix
    colors = np.asarray(g.colors)
    # Fast validity test: for each c, among earlier opposite-color vertices
    # the neighbors must occupy the largest ranks (a suffix).
    earlier = ranks[:, None] < ranks[None, :]          # earlier[a, c]: a before c
    opposite = colors[:, None] != colors[None, :]
    cand = earlier & opposite
    nb = cand & adj
    non = cand & ~adj
    big = g.n + 2
    min_nb = np.where(nb, ranks[:, None], big).min(axis=0)
    max_non = np.where(non, ranks[:, None], 0).max(axis=0)
    bad_cols = np.flatnonzero(min_nb < max_non)
    if bad_cols.size == 0:
        return None
    # Extract the lexicographically least triple by ranks; scanning a, b, c
    # in rank order makes the first hit least.
    order = np.argsort(ranks)
    for ia in range(g.n):
        a = order[ia]
        for ib in range(ia + 1, g.n):
            b = order[ib]
            if colors[a] != colors[b]:
                continue
            for ic in range(ib + 1, g.n):
                c = order[ic]
                if colors[c] == colors[a]:
                    continue
                if adj[a, c] and not adj[b, c]:
                    return PatternViolation(int(a), int(b), int(c))
    raise RuntimeError("suffix test and triple scan disagree")


# ---------------------------------------------------------------------------
# Interval representations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntervalModel:
    """Closed integer intervals, one per vertex."""

    lefts: tuple[int, ...]
    rights: tuple[int, ...]

    def __post_init__(self):
        if len(self.lefts) != len(self.rights):
            raise ModelValidationFailed("left/right arrays differ in length")
        for v, (l, r) in enumerate(zip(self.lefts, self.rights)):
            if l > r:
                raise ModelValidationFailed(f"interval of vertex {v} has left > right")

    def interval(self, v: int) -> tuple[int, int]:
        return self.lefts[v], self.rights[v]


def build_intervals(g: Bigraph, ordering: Ordering) -> IntervalModel:
    """Interval representation from a pattern-free ordering.

    Requires ``check_ordering(g, ordering) is None``.  The result is
    re-validated; a failure here means the ordering was not actually
    pattern-free (the caller's bug, or the recognizer's).
    """
    violation = check_ordering(g, ordering)
    if violation is not None:
        raise InvalidOrdering(f"ordering contains forbidden pattern {violation}")
    lefts = []
    rights = []
    for v in range(g.n):
        p = ordering.rank(v)
        earlier = [ordering.rank(u) for u in g.neighbors[v] if ordering.rank(u) < p]
        s = min(earlier) if earlier else p
        lefts.append(s)
        rights.append(p)
    model = IntervalModel(tuple(lefts), tuple(rights))
    if not validate_intervals(g, model):
        raise ModelValidationFailed("constructed model disagrees with the graph")
    return model


def validate_intervals(g: Bigraph, model: IntervalModel) -> bool:
    """True iff cross-color intervals intersect exactly at the edges."""
    if len(model.lefts) != g.n:
        return False
    lefts = np.asarray(model.lefts)
    rights = np.asarray(model.rights)
    colors = np.asarray(g.colors)
    blacks = np.flatnonzero(colors == BLACK)
    whites = np.flatnonzero(colors == WHITE)
    if blacks.size == 0 or whites.size == 0:
        return True
    inter = (lefts[blacks][:, None] <= rights[whites][None, :]) & (
        lefts[whites][None, :] <= rights[blacks][:, None]
    )
    adj = g.adjacency_matrix[np.ix_(blacks, whites)]
    return bool((inter == adj).all())
