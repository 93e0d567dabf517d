"""Immutable triple store with an outbound-relation index.

Graphs load from ``head<TAB>relation<TAB>tail`` lines (UTF-8, no header, no
escaping; labels must not contain tabs or newlines). Entity and relation ids
are dense ints assigned in first-appearance order, so repeated loads of the
same file produce identical graphs. After construction a graph is read-only
and safe to share across threads.
"""

from __future__ import annotations

import hashlib
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import BudgetError, TripleParseError

__all__ = [
    "KnowledgeGraph",
    "load_triples",
    "tokenize_label",
    "enumerate_paths",
]

_TOKEN_SEP = re.compile(r"[._/]+")


def tokenize_label(label: str) -> tuple[str, ...]:
    """Lowercase a relation label and split it on '.', '_' and '/'."""
    tokens = tuple(t for t in _TOKEN_SEP.split(label.lower()) if t)
    if not tokens:
        raise ValueError(f"relation label {label!r} has no tokens")
    return tokens


@dataclass(frozen=True)
class KnowledgeGraph:
    """Triples plus per-entity outbound index, all id-dense and immutable.

    ``outbound[e]`` is a tuple of ``(relation_id, tails)`` pairs sorted by
    relation id, with tails sorted ascending; it is exactly the grouping of
    ``triples`` by head then relation.
    """

    entity_labels: tuple[str, ...]
    relation_labels: tuple[str, ...]
    relation_tokens: tuple[tuple[str, ...], ...]
    triples: tuple[tuple[int, int, int], ...]
    _entity_index: dict = field(repr=False)
    _relation_index: dict = field(repr=False)
    _outbound: tuple = field(repr=False)

    @classmethod
    def from_label_triples(cls, label_triples: Iterable[tuple[str, str, str]]) -> "KnowledgeGraph":
        """Build a graph, assigning ids in first-appearance order (head, relation, tail)."""
        entity_index: dict[str, int] = {}
        relation_index: dict[str, int] = {}
        entity_labels: list[str] = []
        relation_labels: list[str] = []
        seen: set[tuple[int, int, int]] = set()

        def entity(label: str) -> int:
            eid = entity_index.get(label)
            if eid is None:
                eid = len(entity_labels)
                entity_index[label] = eid
                entity_labels.append(label)
            return eid

        def relation(label: str) -> int:
            rid = relation_index.get(label)
            if rid is None:
                rid = len(relation_labels)
                relation_index[label] = rid
                relation_labels.append(label)
            return rid

        for head, rel, tail in label_triples:
            seen.add((entity(head), relation(rel), entity(tail)))

        triples = tuple(sorted(seen))
        grouped: dict[int, dict[int, list[int]]] = {}
        for h, r, t in triples:
            grouped.setdefault(h, {}).setdefault(r, []).append(t)
        outbound = tuple(
            tuple(
                (r, tuple(sorted(tails)))
                for r, tails in sorted(grouped.get(e, {}).items())
            )
            for e in range(len(entity_labels))
        )
        tokens = tuple(tokenize_label(lbl) for lbl in relation_labels)
        return cls(
            entity_labels=tuple(entity_labels),
            relation_labels=tuple(relation_labels),
            relation_tokens=tokens,
            triples=triples,
            _entity_index=entity_index,
            _relation_index=relation_index,
            _outbound=outbound,
        )

    @property
    def n_entities(self) -> int:
        return len(self.entity_labels)

    @property
    def n_relations(self) -> int:
        return len(self.relation_labels)

    def entity_id(self, label: str) -> int:
        try:
            return self._entity_index[label]
        except KeyError:
            raise LookupError(f"unknown entity label {label!r}") from None

    def relation_id(self, label: str) -> int:
        try:
            return self._relation_index[label]
        except KeyError:
            raise LookupError(f"unknown relation label {label!r}") from None

    def has_entity(self, label: str) -> bool:
        return label in self._entity_index

    def entity_label(self, eid: int) -> str:
        if not 0 <= eid < len(self.entity_labels):
            raise LookupError(f"unknown entity id {eid}")
        return self.entity_labels[eid]

    def relation_label(self, rid: int) -> str:
        if not 0 <= rid < len(self.relation_labels):
            raise LookupError(f"unknown relation id {rid}")
        return self.relation_labels[rid]

    def outbound(self, eid: int) -> tuple[tuple[int, tuple[int, ...]], ...]:
        """All (relation, tails) pairs with head ``eid``, ascending relation id."""
        if not 0 <= eid < len(self.entity_labels):
            raise LookupError(f"unknown entity id {eid}")
        return self._outbound[eid]

    def out_degree(self, eid: int) -> int:
        return len(self.outbound(eid))

    def transit(self, eid: int, rid: int) -> tuple[int, ...]:
        """Tails of (eid, rid), ascending id. Raises if the pair has no tails."""
        for r, tails in self.outbound(eid):
            if r == rid:
                return tails
        raise LookupError(
            f"no triple ({self.entity_label(eid)}, "
            f"{self.relation_label(rid) if 0 <= rid < self.n_relations else rid}, *)"
        )

    def relations_digest(self) -> str:
        """Stable digest of the relation label list, for checkpoint validation."""
        joined = "\n".join(self.relation_labels).encode("utf-8")
        return hashlib.sha256(joined).hexdigest()

    def save_tsv(self, path) -> None:
        """Write canonical TSV: triples sorted by ids, labels as loaded."""
        with open(path, "w", encoding="utf-8") as fh:
            for h, r, t in self.triples:
                fh.write(
                    f"{self.entity_labels[h]}\t{self.relation_labels[r]}\t{self.entity_labels[t]}\n"
                )


def load_triples(path, format: str = "tsv") -> KnowledgeGraph:
    """Load a graph from a triple file. An empty file is a valid empty graph."""
    if format != "tsv":
        raise ValueError(f"unsupported triple format {format!r}")
    path = Path(path)

    def parse() -> Iterator[tuple[str, str, str]]:
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\r\n")
                fields = line.split("\t")
                if len(fields) != 3:
                    raise TripleParseError(
                        path, line_no, f"expected 3 tab-separated fields, got {len(fields)}"
                    )
                if any(not f for f in fields):
                    raise TripleParseError(path, line_no, "empty field")
                yield fields[0], fields[1], fields[2]

    return KnowledgeGraph.from_label_triples(parse())


def frontier_relations(graph: KnowledgeGraph, frontier: Sequence[int]) -> tuple[int, ...]:
    """Deduplicated union of outbound relation ids over a set of entities, ascending."""
    rels: set[int] = set()
    for eid in frontier:
        rels.update(r for r, _ in graph.outbound(eid))
    return tuple(sorted(rels))


def transit_frontier(graph: KnowledgeGraph, frontier: Sequence[int], rid: int) -> tuple[int, ...]:
    """Union of tails over frontier entities that carry ``rid``; ascending ids."""
    tails: set[int] = set()
    for eid in frontier:
        for r, ts in graph.outbound(eid):
            if r == rid:
                tails.update(ts)
                break
    if not tails:
        raise LookupError(f"relation {rid} not reachable from frontier {tuple(frontier)}")
    return tuple(sorted(tails))


def enumerate_paths(
    graph: KnowledgeGraph,
    start: int,
    max_len: int,
    budget: int | None = None,
) -> Iterator[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Enumerate all executable relation paths of length 1..max_len from ``start``.

    Yields (path, frontier) pairs in length-major, then lexicographic (by
    relation id) order. A path is executable when every step has at least one
    tail; frontiers follow multi-tail union semantics. Raises BudgetError as
    soon as more than ``budget`` paths would be produced.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    count = 0
    level: deque[tuple[tuple[int, ...], tuple[int, ...]]] = deque([((), (start,))])
    for _ in range(max_len):
        next_level: deque[tuple[tuple[int, ...], tuple[int, ...]]] = deque()
        while level:
            path, frontier = level.popleft()
            for rid in frontier_relations(graph, frontier):
                count += 1
                if budget is not None and count > budget:
                    raise BudgetError(budget)
                new_path = path + (rid,)
                new_frontier = transit_frontier(graph, frontier, rid)
                yield new_path, new_frontier
                next_level.append((new_path, new_frontier))
        level = next_level
