"""Directed labeled multigraph with O(1) edge membership and degree indexes.

Nodes and relations are dense integer handles; the string name tables live in
:class:`Vocabulary` and :class:`RelationTable` side structures so that every
hot path (motif counting, sampling, ranking) runs on integers only.
Adjacency lists are kept sorted by neighbor id, which lets cycle and
transitivity counting use merge-based intersections.
"""

from __future__ import annotations

import io
from bisect import bisect_left, insort
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

from .errors import (
    DataFormatError,
    DuplicateEdgeError,
    EdgeNotFoundError,
    IdOutOfRangeError,
    VocabularyError,
)

_SHIFT = 32
_MASK = (1 << _SHIFT) - 1

_EMPTY: list[int] = []


class Edge(NamedTuple):
    source: int
    relation: int
    target: int


def _pack(s: int, t: int) -> int:
    return (s << _SHIFT) | t


@dataclass
class Vocabulary:
    """Bijection between dense integer handles and external string names."""

    names: list[str]
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {name: i for i, name in enumerate(self.names)}
        if len(self.index) != len(self.names):
            raise VocabularyError("duplicate names in vocabulary")

    def __len__(self) -> int:
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise VocabularyError(f"unknown name: {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.index


@dataclass
class RelationTable:
    """Relation name table plus the per-relation symmetric flag."""

    names: list[str]
    symmetric: list[bool]
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        if len(self.names) != len(self.symmetric):
            raise VocabularyError("relation names and flags differ in length")
        self.index = {name: i for i, name in enumerate(self.names)}
        if len(self.index) != len(self.names):
            raise VocabularyError("duplicate relation names")

    def __len__(self) -> int:
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise VocabularyError(f"unknown relation: {name!r}") from None

    def symmetric_ids(self) -> list[int]:
        return [r for r, flag in enumerate(self.symmetric) if flag]

    def nonsymmetric_ids(self) -> list[int]:
        return [r for r, flag in enumerate(self.symmetric) if not flag]


class MultiRelGraph:
    """Mutable directed multigraph over a fixed node set.

    Self-loops are storable (they occur in noisy data) but are excluded from
    motif counting and from ranking candidates by the layers above.
    """

    def __init__(self, n_nodes: int, n_relations: int):
        if n_nodes < 0 or n_relations < 0:
            raise IdOutOfRangeError("node and relation counts must be non-negative")
        self.n_nodes = n_nodes
        self.n_relations = n_relations
        # one membership set and one adjacency dict per relation
        self._edges: list[set[int]] = [set() for _ in range(n_relations)]
        self._out: list[dict[int, list[int]]] = [{} for _ in range(n_relations)]
        self._in: list[dict[int, list[int]]] = [{} for _ in range(n_relations)]

    # -- validation ------------------------------------------------------

    def _check_node(self, v: int) -> None:
        if not 0 <= v < self.n_nodes:
            raise IdOutOfRangeError(f"node id {v} out of range [0, {self.n_nodes})")

    def _check_relation(self, r: int) -> None:
        if not 0 <= r < self.n_relations:
            raise IdOutOfRangeError(
                f"relation id {r} out of range [0, {self.n_relations})"
            )

    def _check_ids(self, s: int, r: int, t: int) -> None:
        self._check_node(s)
        self._check_relation(r)
        self._check_node(t)

    # -- mutation --------------------------------------------------------

    def add_edge(self, s: int, r: int, t: int) -> None:
        self._check_ids(s, r, t)
        key = _pack(s, t)
        if key in self._edges[r]:
            raise DuplicateEdgeError(f"edge ({s}, {r}, {t}) already present")
        self._edges[r].add(key)
        insort(self._out[r].setdefault(s, []), t)
        insort(self._in[r].setdefault(t, []), s)

    def remove_edge(self, s: int, r: int, t: int) -> None:
        self._check_ids(s, r, t)
        key = _pack(s, t)
        if key not in self._edges[r]:
            raise EdgeNotFoundError(f"edge ({s}, {r}, {t}) not present")
        self._edges[r].discard(key)
        out = self._out[r][s]
        del out[bisect_left(out, t)]
        if not out:
            del self._out[r][s]
        inn = self._in[r][t]
        del inn[bisect_left(inn, s)]
        if not inn:
            del self._in[r][t]

    def substitute_target(self, s: int, r: int, t_old: int, t_new: int) -> None:
        """Replace edge (s, r, t_old) with (s, r, t_new), conserving edge counts."""
        self._check_ids(s, r, t_old)
        self._check_node(t_new)
        if _pack(s, t_old) not in self._edges[r]:
            raise EdgeNotFoundError(f"edge ({s}, {r}, {t_old}) not present")
        if _pack(s, t_new) in self._edges[r]:
            raise DuplicateEdgeError(f"edge ({s}, {r}, {t_new}) already present")
        self.remove_edge(s, r, t_old)
        self.add_edge(s, r, t_new)

    # -- queries ---------------------------------------------------------

    def has_edge(self, s: int, r: int, t: int) -> bool:
        self._check_ids(s, r, t)
        return _pack(s, t) in self._edges[r]

    def out_degree(self, v: int, r: int) -> int:
        self._check_node(v)
        self._check_relation(r)
        return len(self._out[r].get(v, _EMPTY))

    def in_degree(self, v: int, r: int) -> int:
        self._check_node(v)
        self._check_relation(r)
        return len(self._in[r].get(v, _EMPTY))

    def out_neighbors(self, v: int, r: int) -> Sequence[int]:
        """Sorted targets of v under r. The returned list must not be mutated."""
        return self._out[r].get(v, _EMPTY)

    def in_neighbors(self, v: int, r: int) -> Sequence[int]:
        """Sorted sources pointing at v under r. Must not be mutated."""
        return self._in[r].get(v, _EMPTY)

    def num_edges(self, r: int | None = None) -> int:
        if r is None:
            return sum(len(es) for es in self._edges)
        self._check_relation(r)
        return len(self._edges[r])

    def edges(self, r: int | None = None) -> Iterator[Edge]:
        """Yield edges in deterministic (relation, source, target) order."""
        rels = range(self.n_relations) if r is None else (r,)
        for rel in rels:
            out = self._out[rel]
            for s in sorted(out):
                for t in out[s]:
                    yield Edge(s, rel, t)

    def sources(self, r: int) -> Iterator[int]:
        """Nodes with at least one outgoing edge under r, ascending."""
        return iter(sorted(self._out[r]))

    def active_nodes(self) -> Iterator[int]:
        """Nodes with at least one incident edge of any relation, ascending."""
        seen: set[int] = set()
        for r in range(self.n_relations):
            seen.update(self._out[r])
            seen.update(self._in[r])
        return iter(sorted(seen))

    def copy(self) -> "MultiRelGraph":
        g = MultiRelGraph(self.n_nodes, self.n_relations)
        g._edges = [set(es) for es in self._edges]
        g._out = [{v: list(lst) for v, lst in adj.items()} for adj in self._out]
        g._in = [{v: list(lst) for v, lst in adj.items()} for adj in self._in]
        return g

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MultiRelGraph):
            return NotImplemented
        return (
            self.n_nodes == other.n_nodes
            and self.n_relations == other.n_relations
            and self._edges == other._edges
        )

    def __repr__(self) -> str:
        return (
            f"MultiRelGraph(nodes={self.n_nodes}, relations={self.n_relations}, "
            f"edges={self.num_edges()})"
        )


# -- snapshot format -------------------------------------------------------

_MAGIC = "m3gm-graph 1"


def write_graph(path, graph: MultiRelGraph, relations: RelationTable) -> None:
    """Write a text snapshot: header, relation table, then one edge per line."""
    if len(relations) != graph.n_relations:
        raise VocabularyError("relation table does not match graph")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_MAGIC}\n")
        fh.write(f"nodes {graph.n_nodes}\n")
        fh.write(f"relations {graph.n_relations}\n")
        for r, name in enumerate(relations.names):
            fh.write(f"rel {r} {name} {int(relations.symmetric[r])}\n")
        fh.write(f"edges {graph.num_edges()}\n")
        for s, r, t in graph.edges():
            fh.write(f"{s} {r} {t}\n")


def read_graph(path) -> tuple[MultiRelGraph, RelationTable]:
    with open(path, "r", encoding="utf-8") as fh:
        return _read_graph_stream(fh, str(path))


def _read_graph_stream(fh: io.TextIOBase, origin: str):
    def fail(lineno, msg):
        raise DataFormatError(f"{origin}:{lineno}: {msg}")

    lines = iter(enumerate(fh, start=1))

    def next_line():
        try:
            return next(lines)
        except StopIteration:
            raise DataFormatError(f"{origin}: truncated snapshot") from None

    lineno, line = next_line()
    if line.rstrip("\n") != _MAGIC:
        fail(lineno, f"bad magic, expected {_MAGIC!r}")
    lineno, line = next_line()
    n_nodes = int(line.split()[1])
    lineno, line = next_line()
    n_rels = int(line.split()[1])
    names, flags = [], []
    for expect in range(n_rels):
        lineno, line = next_line()
        parts = line.split()
        if len(parts) != 4 or parts[0] != "rel" or int(parts[1]) != expect:
            fail(lineno, "malformed relation table entry")
        names.append(parts[2])
        flags.append(bool(int(parts[3])))
    lineno, line = next_line()
    n_edges = int(line.split()[1])
    graph = MultiRelGraph(n_nodes, n_rels)
    for _ in range(n_edges):
        lineno, line = next_line()
        parts = line.split()
        if len(parts) != 3:
            fail(lineno, f"expected 3 fields, got {len(parts)}")
        s, r, t = (int(p) for p in parts)
        graph.add_edge(s, r, t)
    return graph, RelationTable(names, flags)
