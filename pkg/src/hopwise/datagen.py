"""Seeded dataset generators and question-file loaders.

Two dataset families share one question format (JSON lines with keys
``question``, ``topic``, ``path``, ``answer``):

* a grid-navigation world: cells of an n-by-n grid connected by the eight
  compass directions, questions are instruction sequences and the annotated
  path is the same sequence;
* a synthetic multi-hop QA set: a random graph with fixed per-entity
  branching, template questions with synonym substitution, and gold paths
  kept unique by rejection sampling.

All randomness flows through PCG64 generators seeded from
``(seed, stream_tag)``, so each split reproduces byte-identically and splits
may be generated in parallel without changing output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ExampleFormatError, GoldPathError, InfeasibleSpecError
from .kg import KnowledgeGraph, enumerate_paths, load_triples, transit_frontier

__all__ = [
    "QaExample",
    "GridSpec",
    "SynthSpec",
    "GeneratedDataset",
    "DIRECTIONS",
    "gen_gridworld",
    "gen_synth",
    "write_examples",
    "load_examples",
    "execute_path",
    "gridworld_triples",
]

# Stream tags for per-split generators.
_STREAM_GRAPH = 0
_STREAM_SPLITS = {"train": 1, "valid": 2, "test": 3}

# Compass directions in canonical order; deltas are (row, col) with row
# increasing southward.
DIRECTIONS: tuple[tuple[str, tuple[int, int]], ...] = (
    ("North", (-1, 0)),
    ("NorthEast", (-1, 1)),
    ("East", (0, 1)),
    ("SouthEast", (1, 1)),
    ("South", (1, 0)),
    ("SouthWest", (1, -1)),
    ("West", (0, -1)),
    ("NorthWest", (-1, -1)),
)


@dataclass(frozen=True)
class QaExample:
    """One question: token sequence, topic entity, annotated path, answer."""

    question_tokens: tuple[str, ...]
    topic: str
    gold_path: tuple[str, ...]
    answer: str


@dataclass(frozen=True)
class GridSpec:
    side: int
    hop_bucket: tuple[int, int]
    counts: tuple[int, int, int]  # train, valid, test
    seed: int

    def __post_init__(self):
        if self.side < 2:
            raise ValueError("side must be >= 2")
        lo, hi = self.hop_bucket
        if not 2 <= lo <= hi:
            raise ValueError("hop bucket must satisfy 2 <= min <= max")
        if any(c <= 0 for c in self.counts):
            raise ValueError("split counts must be positive")


@dataclass(frozen=True)
class SynthSpec:
    n_entities: int
    n_relations: int
    branching: int
    hop_mix: tuple[tuple[int, int], ...]  # (hops, train_count)
    n_templates: int
    seed: int

    def __post_init__(self):
        if self.branching < 2:
            raise ValueError("branching must be >= 2")
        if self.n_relations < self.branching:
            raise ValueError("need n_relations >= branching")
        if self.n_entities < 3:
            raise ValueError("need at least 3 entities")
        if self.n_templates < 1:
            raise ValueError("n_templates must be >= 1")
        if not self.hop_mix:
            raise ValueError("hop_mix must be non-empty")
        for hops, count in self.hop_mix:
            if hops < 1 or count < 1:
                raise ValueError(f"bad hop_mix entry ({hops}, {count})")

    @property
    def max_hops(self) -> int:
        return max(h for h, _ in self.hop_mix)


@dataclass(frozen=True)
class GeneratedDataset:
    graph_path: Path
    split_paths: dict  # split name -> Path


def _stream(seed: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, tag])))


def _cell_label(row: int, col: int) -> str:
    return f"({row},{col})"


def _legal_moves(side: int, row: int, col: int) -> list[tuple[str, int, int]]:
    moves = []
    for name, (dr, dc) in DIRECTIONS:
        r2, c2 = row + dr, col + dc
        if 0 <= r2 < side and 0 <= c2 < side:
            moves.append((name, r2, c2))
    return moves


def gridworld_triples(side: int) -> list[tuple[str, str, str]]:
    """Every (cell, direction, cell') with the move staying on the grid."""
    triples = []
    for row in range(side):
        for col in range(side):
            for name, r2, c2 in _legal_moves(side, row, col):
                triples.append((_cell_label(row, col), name, _cell_label(r2, c2)))
    return triples


def _grid_examples(spec: GridSpec, rng: np.random.Generator, count: int) -> list[QaExample]:
    lo, hi = spec.hop_bucket
    examples = []
    for _ in range(count):
        row = int(rng.integers(spec.side))
        col = int(rng.integers(spec.side))
        topic = _cell_label(row, col)
        length = int(rng.integers(lo, hi, endpoint=True))
        path = []
        for _ in range(length):
            moves = _legal_moves(spec.side, row, col)
            name, row, col = moves[int(rng.integers(len(moves)))]
            path.append(name)
        examples.append(
            QaExample(
                question_tokens=tuple(path),
                topic=topic,
                gold_path=tuple(path),
                answer=_cell_label(row, col),
            )
        )
    return examples


def write_examples(path, examples: Iterable[QaExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            record = {
                "question": " ".join(ex.question_tokens),
                "topic": ex.topic,
                "path": list(ex.gold_path),
                "answer": ex.answer,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def gen_gridworld(spec: GridSpec, out_dir) -> GeneratedDataset:
    """Write graph.tsv plus train/valid/test question files for a grid world."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    graph_path = out_dir / "graph.tsv"
    with open(graph_path, "w", encoding="utf-8") as fh:
        for h, r, t in gridworld_triples(spec.side):
            fh.write(f"{h}\t{r}\t{t}\n")
    split_paths = {}
    for (split, tag), count in zip(_STREAM_SPLITS.items(), spec.counts):
        rng = _stream(spec.seed, tag)
        path = out_dir / f"{split}.jsonl"
        write_examples(path, _grid_examples(spec, rng, count))
        split_paths[split] = path
    return GeneratedDataset(graph_path=graph_path, split_paths=split_paths)


# Relation concepts for the synthetic generator: label (tokenized on '_')
# and the single-word question phrasings it may surface as.
_CONCEPTS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("spouse", ("wife", "husband", "partner")),
    ("birth_place", ("birthplace", "born", "cradle")),
    ("death_place", ("deathplace", "died", "buried")),
    ("capital", ("capital", "seat", "metropolis")),
    ("currency", ("currency", "money", "tender")),
    ("language", ("language", "tongue", "dialect")),
    ("religion", ("religion", "faith", "creed")),
    ("profession", ("profession", "job", "occupation")),
    ("employer", ("employer", "company", "firm")),
    ("nationality", ("nationality", "citizenship", "origin")),
    ("father", ("father", "dad", "papa")),
    ("mother", ("mother", "mom", "mama")),
    ("child", ("child", "kid", "offspring")),
    ("sibling", ("sibling", "brother", "sister")),
    ("grandparent", ("grandparent", "grandfather", "grandmother")),
    ("mentor", ("mentor", "teacher", "tutor")),
    ("student", ("student", "pupil", "apprentice")),
    ("founder", ("founder", "creator", "starter")),
    ("owner", ("owner", "holder", "proprietor")),
    ("leader", ("leader", "chief", "boss")),
    ("member_of", ("member", "belongs", "affiliate")),
    ("located_in", ("located", "situated", "place")),
    ("neighbor", ("neighbor", "adjacent", "bordering")),
    ("river", ("river", "stream", "waterway")),
    ("mountain", ("mountain", "peak", "summit")),
    ("team", ("team", "club", "squad")),
    ("genre", ("genre", "style", "category")),
    ("author", ("author", "writer", "novelist")),
    ("composer", ("composer", "musician", "songwriter")),
    ("director", ("director", "filmmaker", "auteur")),
    ("publisher", ("publisher", "press", "imprint")),
    ("award", ("award", "prize", "honor")),
    ("discovery", ("discovery", "finding", "breakthrough")),
    ("invention", ("invention", "device", "gadget")),
    ("successor", ("successor", "heir", "follower")),
    ("predecessor", ("predecessor", "forerunner", "ancestor")),
    ("ally", ("ally", "friend", "supporter")),
    ("rival", ("rival", "opponent", "enemy")),
    ("product", ("product", "goods", "output")),
    ("ingredient", ("ingredient", "component", "element")),
    ("habitat", ("habitat", "home", "territory")),
    ("diet", ("diet", "food", "nourishment")),
    ("symptom", ("symptom", "sign", "indication")),
    ("treatment", ("treatment", "cure", "remedy")),
    ("instrument", ("instrument", "tool", "apparatus")),
    ("material", ("material", "substance", "fabric")),
    ("color", ("color", "hue", "shade")),
    ("shape", ("shape", "form", "outline")),
)


def _relation_pool(n_relations: int) -> list[tuple[str, tuple[str, ...]]]:
    pool = []
    suffix = 0
    while len(pool) < n_relations:
        for label, syns in _CONCEPTS:
            if len(pool) >= n_relations:
                break
            if suffix == 0:
                pool.append((label, syns))
            else:
                pool.append((f"{label}_{suffix}", tuple(f"{s}{suffix}" for s in syns)))
        suffix += 1
    return pool


def _split_counts(train: int) -> dict[str, int]:
    # 8:1:1 partition with the train share given; valid takes the floor tenth
    # of the total and test the remainder.
    total = math.ceil(train / 0.8)
    valid = total // 10
    return {"train": train, "valid": valid, "test": total - train - valid}


def _synth_graph(spec: SynthSpec, pool) -> list[tuple[str, str, str]]:
    rng = _stream(spec.seed, _STREAM_GRAPH)
    triples = []
    for eid in range(spec.n_entities):
        rels = sorted(int(r) for r in rng.choice(spec.n_relations, size=spec.branching, replace=False))
        for rid in rels:
            tail = int(rng.integers(spec.n_entities))
            while tail == eid:
                tail = int(rng.integers(spec.n_entities))
            triples.append((f"e{eid}", pool[rid][0], f"e{tail}"))
    return triples


def _unique_gold(graph: KnowledgeGraph, topic: int, answer: int, max_hops: int) -> bool:
    hits = 0
    for _, frontier in enumerate_paths(graph, topic, max_hops):
        if answer in frontier:
            hits += 1
            if hits > 1:
                return False
    return hits == 1


def _synth_examples(
    spec: SynthSpec,
    graph: KnowledgeGraph,
    pool,
    rng: np.random.Generator,
    hops: int,
    count: int,
) -> list[QaExample]:
    synonyms = {label: syns for label, syns in pool}
    examples = []
    attempts = 0
    accepted = 0
    while len(examples) < count:
        attempts += 1
        if attempts >= 1000 and accepted < attempts / 100:
            raise InfeasibleSpecError(
                f"rejection rate above 99% after {attempts} attempts "
                f"({accepted} accepted); relax the spec"
            )
        topic = int(rng.integers(graph.n_entities))
        entity = topic
        path: list[str] = []
        ok = True
        for _ in range(hops):
            out = graph.outbound(entity)
            if not out:
                ok = False
                break
            rid, tails = out[int(rng.integers(len(out)))]
            path.append(graph.relation_label(rid))
            entity = tails[int(rng.integers(len(tails)))]
        if not ok or not _unique_gold(graph, topic, entity, spec.max_hops):
            continue
        accepted += 1
        phrases = [
            synonyms[rel][int(rng.integers(spec.n_templates)) % len(synonyms[rel])]
            for rel in path
        ]
        tokens = ["what", "is", *phrases, "of", graph.entity_label(topic)]
        examples.append(
            QaExample(
                question_tokens=tuple(tokens),
                topic=graph.entity_label(topic),
                gold_path=tuple(path),
                answer=graph.entity_label(entity),
            )
        )
    return examples


def gen_synth(spec: SynthSpec, out_dir) -> GeneratedDataset:
    """Write a random branching graph plus template questions, split 8:1:1.

    ``hop_mix`` counts are train-split sizes; valid and test sizes derive
    from the 8:1:1 partition. Every accepted gold path is the only path of
    length <= max(hop_mix) from its topic to its answer.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pool = _relation_pool(spec.n_relations)
    graph_path = out_dir / "graph.tsv"
    with open(graph_path, "w", encoding="utf-8") as fh:
        for h, r, t in _synth_graph(spec, pool):
            fh.write(f"{h}\t{r}\t{t}\n")
    graph = load_triples(graph_path)
    split_paths = {}
    mix_counts = {hops: _split_counts(train) for hops, train in spec.hop_mix}
    for split, tag in _STREAM_SPLITS.items():
        rng = _stream(spec.seed, tag)
        examples: list[QaExample] = []
        for hops, _ in spec.hop_mix:
            examples.extend(
                _synth_examples(spec, graph, pool, rng, hops, mix_counts[hops][split])
            )
        path = out_dir / f"{split}.jsonl"
        write_examples(path, examples)
        split_paths[split] = path
    return GeneratedDataset(graph_path=graph_path, split_paths=split_paths)


def execute_path(graph: KnowledgeGraph, topic: str, path: Sequence[str]) -> tuple[str, ...]:
    """Fold the path's relations over the graph; returns final frontier labels."""
    frontier = (graph.entity_id(topic),)
    for rel in path:
        frontier = transit_frontier(graph, frontier, graph.relation_id(rel))
    return tuple(graph.entity_label(e) for e in frontier)


def load_examples(path, graph: KnowledgeGraph | None = None) -> list[QaExample]:
    """Load question records in file order; validate executability when a graph is given."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                raise ExampleFormatError(path, line_no, "blank line")
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExampleFormatError(path, line_no, f"bad JSON: {exc}") from None
            try:
                tokens = tuple(str(record["question"]).split())
                topic = str(record["topic"])
                gold = tuple(str(r) for r in record["path"])
                answer = str(record["answer"])
            except (KeyError, TypeError) as exc:
                raise ExampleFormatError(path, line_no, f"missing/invalid field: {exc}") from None
            if not gold:
                raise ExampleFormatError(path, line_no, "empty gold path")
            ex = QaExample(tokens, topic, gold, answer)
            if graph is not None:
                try:
                    reached = execute_path(graph, ex.topic, ex.gold_path)
                except LookupError as exc:
                    raise GoldPathError(f"{path}:{line_no}: gold path does not execute: {exc}")
                if ex.answer not in reached:
                    raise GoldPathError(
                        f"{path}:{line_no}: gold path ends at {reached}, not {ex.answer!r}"
                    )
            examples.append(ex)
    return examples
