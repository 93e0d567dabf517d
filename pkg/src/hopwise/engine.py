"""Hop-by-hop path search with a comparative stopping rule, plus the
exhaustive relation-chain baseline.

Each iteration extends the current path by the best-scoring candidate
relation (candidates are scored with their full history), transits the
frontier, then compares the score of the path against every one-relation
extension from the new frontier: if nothing beats the path, the search stops.
No maximum hop count is required; ``hop_cap`` is a safety bound that only
converts a scorer that never stops into a diagnosable ``capped`` flag.

Scorers are duck-typed: ``start(tokens)``, ``score_paths(q, paths)`` over
tuples of relation ids, and ``update_question(q, path)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BudgetError
from .kg import KnowledgeGraph, enumerate_paths, frontier_relations, transit_frontier

__all__ = [
    "EngineConfig",
    "TraceHop",
    "SearchTrace",
    "extract_hop",
    "decide_termination",
    "run_search",
    "run_chain_baseline",
    "trace_record",
    "write_traces",
]


@dataclass(frozen=True)
class EngineConfig:
    """Search settings. Ties (both in extraction and termination) always
    resolve toward the lowest relation id / toward stopping."""

    hop_cap: int = 16
    variant: str = "attentive"
    use_dynamic_question: bool = False

    def __post_init__(self):
        if self.hop_cap < 1:
            raise ValueError("hop_cap must be >= 1")


@dataclass
class TraceHop:
    candidates: tuple[int, ...]
    scores: tuple[float, ...]
    chosen: int
    path_score: float | None
    extension_rels: tuple[int, ...]
    extension_scores: tuple[float, ...]
    decision: str  # "continue" | "stop" | "forced_stop" | "capped"


@dataclass
class SearchTrace:
    hops: list[TraceHop] = field(default_factory=list)
    path: tuple[int, ...] = ()
    capped: bool = False
    forced_stop: bool = False
    scored_candidates: int = 0


def extract_hop(
    scorer,
    q,
    base_path: tuple[int, ...],
    frontier: Sequence[int],
    graph: KnowledgeGraph,
) -> tuple[int, tuple[int, ...], np.ndarray]:
    """Pick the best one-relation extension of ``base_path`` from ``frontier``.

    Returns (chosen relation, candidate relations, scores). Candidates are
    sorted ascending, and argmax takes the first maximum, so equal scores
    resolve to the lowest relation id.
    """
    rels = frontier_relations(graph, frontier)
    if not rels:
        raise LookupError("frontier is a sink; no extraction possible")
    scores = scorer.score_paths(q, [base_path + (r,) for r in rels])
    chosen = rels[int(np.argmax(scores))]
    return chosen, rels, scores


def decide_termination(
    scorer,
    q,
    path: tuple[int, ...],
    new_frontier: Sequence[int],
    graph: KnowledgeGraph,
) -> tuple[bool, float | None, tuple[int, ...], np.ndarray]:
    """Stop iff the path scores at least as high as every one-relation
    extension from the new frontier; a sink frontier stops unconditionally.

    The path itself is re-scored last so that an attentive scorer's cached
    attention belongs to the path when a dynamic update follows. Returns
    (stop, path_score, extension relations, extension scores); path_score is
    None on a forced (sink) stop.
    """
    if not path:
        raise ValueError("termination decision requires a non-empty path")
    ext_rels = frontier_relations(graph, new_frontier)
    if not ext_rels:
        return True, None, (), np.zeros(0)
    scores = scorer.score_paths(q, [path + (r,) for r in ext_rels] + [path])
    ext_scores = scores[:-1]
    path_score = float(scores[-1])
    return bool(path_score >= ext_scores.max()), path_score, ext_rels, ext_scores


def run_search(
    tokens: Sequence[str],
    topic: int,
    graph: KnowledgeGraph,
    scorer,
    config: EngineConfig = EngineConfig(),
) -> tuple[tuple[int, ...], SearchTrace]:
    """Full search loop from a topic entity; returns (path, trace).

    Raises ValueError when the topic has no outbound relations (no first hop
    is possible). When the hop cap is hit the result is returned with the
    trace's ``capped`` flag set rather than raising.
    """
    if not 0 <= topic < graph.n_entities:
        raise LookupError(f"unknown topic entity id {topic}")
    frontier: tuple[int, ...] = (topic,)
    if not frontier_relations(graph, frontier):
        raise ValueError(
            f"topic entity {graph.entity_label(topic)!r} is a sink; no hop is possible"
        )
    q = scorer.start(tokens)
    path: tuple[int, ...] = ()
    trace = SearchTrace()
    while True:
        chosen, cands, cand_scores = extract_hop(scorer, q, path, frontier, graph)
        path = path + (chosen,)
        new_frontier = transit_frontier(graph, frontier, chosen)
        stop, path_score, ext_rels, ext_scores = decide_termination(
            scorer, q, path, new_frontier, graph
        )
        if path_score is None:
            decision = "forced_stop"
            trace.forced_stop = True
        elif stop:
            decision = "stop"
        elif len(path) >= config.hop_cap:
            decision = "capped"
            trace.capped = True
            stop = True
        else:
            decision = "continue"
        trace.hops.append(
            TraceHop(
                candidates=cands,
                scores=tuple(float(s) for s in cand_scores),
                chosen=chosen,
                path_score=path_score,
                extension_rels=ext_rels,
                extension_scores=tuple(float(s) for s in ext_scores),
                decision=decision,
            )
        )
        trace.scored_candidates += len(cands)
        if path_score is not None:
            trace.scored_candidates += len(ext_rels) + 1
        if stop:
            break
        if config.use_dynamic_question:
            q = scorer.update_question(q, path)
        frontier = new_frontier
    trace.path = path
    return path, trace


def run_chain_baseline(
    tokens: Sequence[str],
    topic: int,
    graph: KnowledgeGraph,
    scorer,
    max_hops: int,
    budget: int = 10**6,
) -> tuple[tuple[int, ...], int]:
    """Score every relation path of length 1..max_hops from the topic and
    return (argmax path, number of paths scored).

    Enumeration is length-major then lexicographic and the first maximum
    wins, so ties prefer shorter paths and lower relation ids. Raises
    BudgetError when more than ``budget`` paths would be enumerated.
    """
    if max_hops < 1:
        raise ValueError("max_hops must be >= 1")
    q = scorer.start(tokens)
    best_path: tuple[int, ...] | None = None
    best_score = -np.inf
    count = 0
    chunk: list[tuple[int, ...]] = []

    def flush():
        nonlocal best_path, best_score
        if not chunk:
            return
        scores = scorer.score_paths(q, chunk)
        i = int(np.argmax(scores))
        if scores[i] > best_score:
            best_score = float(scores[i])
            best_path = chunk[i]
        chunk.clear()

    for path, _ in enumerate_paths(graph, topic, max_hops, budget=budget):
        count += 1
        chunk.append(path)
        if len(chunk) >= 2048:
            flush()
    flush()
    if best_path is None:
        raise ValueError("no path of length >= 1 exists from the topic entity")
    return best_path, count


def trace_record(
    graph: KnowledgeGraph,
    tokens: Sequence[str],
    topic_label: str,
    trace: SearchTrace,
) -> dict:
    """JSON-ready view of one search (scores rounded to 6 decimals)."""
    hops = []
    for hop in trace.hops:
        hops.append(
            {
                "candidates": [graph.relation_label(r) for r in hop.candidates],
                "scores": [round(s, 6) for s in hop.scores],
                "chosen": graph.relation_label(hop.chosen),
                "path_score": None if hop.path_score is None else round(hop.path_score, 6),
                "extensions": [graph.relation_label(r) for r in hop.extension_rels],
                "extension_scores": [round(s, 6) for s in hop.extension_scores],
                "decision": hop.decision,
            }
        )
    return {
        "question": " ".join(tokens),
        "topic": topic_label,
        "path": [graph.relation_label(r) for r in trace.path],
        "hops": hops,
        "flags": {"capped": trace.capped, "forced_stop": trace.forced_stop},
        "scored_candidates": trace.scored_candidates,
    }


def write_traces(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
