"""Evaluation: path accuracy, error attribution, search-space accounting.

Accuracy is exact relation-path match (sequence and length). A wrong
prediction is attributed to the first failing decision: a mismatched
relation while both paths continue is a ranking (RE) error; stopping short
of the annotated length with a matching prefix is an early termination;
running past a fully matched annotation (including hitting the hop cap) is
a late termination.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .datagen import QaExample
from .engine import (
    EngineConfig,
    SearchTrace,
    run_chain_baseline,
    run_search,
    trace_record,
    write_traces,
)
from .errors import BudgetError
from .kg import KnowledgeGraph, enumerate_paths
from .oracle import PrefixOracle
from .scorer import EmbeddingScorer
from .trainer import TrainConfig, fit, fit_chain

__all__ = [
    "ErrorLabel",
    "EvalReport",
    "attribute_error",
    "evaluate",
    "evaluate_chain",
    "SpaceStats",
    "count_search_space",
    "TransferResult",
    "transfer_experiment",
    "write_report_csv",
    "write_errors_csv",
    "write_space_csv",
]

log = logging.getLogger(__name__)

ERROR_KINDS = ("re", "td_early", "td_late")


@dataclass(frozen=True)
class ErrorLabel:
    kind: str  # "correct" | "re" | "td_early" | "td_late"
    hop: int  # first failing hop; 0 for correct


def attribute_error(predicted, gold: Sequence[int], capped: bool = False) -> ErrorLabel:
    """Classify a prediction against the annotated path.

    ``predicted`` may be a SearchTrace (its path and capped flag are used) or
    a plain relation-id sequence. A capped run that matched the annotation
    exactly still counts as a late termination: the model never chose to stop.
    """
    if isinstance(predicted, SearchTrace):
        capped = predicted.capped
        predicted = predicted.path
    predicted = tuple(predicted)
    gold = tuple(gold)
    if not predicted or not gold:
        raise ValueError("attribution requires non-empty predicted and gold paths")
    for j in range(min(len(predicted), len(gold))):
        if predicted[j] != gold[j]:
            return ErrorLabel("re", j + 1)
    if len(predicted) == len(gold):
        if capped:
            return ErrorLabel("td_late", len(gold) + 1)
        return ErrorLabel("correct", 0)
    if len(predicted) < len(gold):
        return ErrorLabel("td_early", len(predicted) + 1)
    return ErrorLabel("td_late", len(gold) + 1)


@dataclass
class EvalReport:
    dataset: str
    n_examples: int
    correct: int
    errors_by_hop: dict  # hop -> {"re": int, "td_early": int, "td_late": int}
    mean_scored_candidates: float
    mean_chain_paths: float | None
    runtime_seconds: float

    @property
    def path_accuracy(self) -> float:
        return self.correct / self.n_examples if self.n_examples else float("nan")

    def error_total(self, kind: str) -> int:
        return sum(counts.get(kind, 0) for counts in self.errors_by_hop.values())

    @property
    def td_errors(self) -> int:
        return self.error_total("td_early") + self.error_total("td_late")

    def check_arithmetic(self) -> None:
        total = self.correct + sum(self.error_total(k) for k in ERROR_KINDS)
        if total != self.n_examples:
            raise AssertionError(f"report arithmetic broken: {total} != {self.n_examples}")


def _tally(report_errors: dict, label: ErrorLabel) -> None:
    counts = report_errors.setdefault(label.hop, {k: 0 for k in ERROR_KINDS})
    counts[label.kind] += 1


def evaluate(
    scorer,
    examples: Sequence[QaExample],
    graph: KnowledgeGraph,
    config: EngineConfig = EngineConfig(),
    out_dir=None,
    dataset: str = "test",
) -> EvalReport:
    """Run the search per example and aggregate accuracy plus attribution.

    With ``out_dir`` set, writes report.csv, errors.csv and traces.jsonl.
    """
    started = time.perf_counter()
    correct = 0
    errors: dict[int, dict[str, int]] = {}
    scored_counts = []
    records = []
    for ex in examples:
        gold = tuple(graph.relation_id(r) for r in ex.gold_path)
        predicted, trace = run_search(
            ex.question_tokens, graph.entity_id(ex.topic), graph, scorer, config
        )
        label = attribute_error(trace, gold)
        if label.kind == "correct":
            correct += 1
        else:
            _tally(errors, label)
        scored_counts.append(trace.scored_candidates)
        if out_dir is not None:
            record = trace_record(graph, ex.question_tokens, ex.topic, trace)
            record["dataset"] = dataset
            record["gold"] = list(ex.gold_path)
            record["outcome"] = label.kind
            records.append(record)
    report = EvalReport(
        dataset=dataset,
        n_examples=len(examples),
        correct=correct,
        errors_by_hop=errors,
        mean_scored_candidates=float(np.mean(scored_counts)) if scored_counts else 0.0,
        mean_chain_paths=None,
        runtime_seconds=time.perf_counter() - started,
    )
    report.check_arithmetic()
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_report_csv(out_dir / "report.csv", [report])
        write_errors_csv(out_dir / "errors.csv", [report])
        write_traces(out_dir / "traces.jsonl", records)
    return report


def evaluate_chain(
    scorer,
    examples: Sequence[QaExample],
    graph: KnowledgeGraph,
    max_hops: int,
    budget: int = 10**6,
    dataset: str = "test",
) -> EvalReport:
    """Evaluate the fixed-length-bound baseline: argmax over all enumerated
    paths of length 1..max_hops."""
    started = time.perf_counter()
    correct = 0
    errors: dict[int, dict[str, int]] = {}
    counts = []
    for ex in examples:
        gold = tuple(graph.relation_id(r) for r in ex.gold_path)
        predicted, n_paths = run_chain_baseline(
            ex.question_tokens, graph.entity_id(ex.topic), graph, scorer, max_hops, budget
        )
        counts.append(n_paths)
        label = attribute_error(predicted, gold)
        if label.kind == "correct":
            correct += 1
        else:
            _tally(errors, label)
    report = EvalReport(
        dataset=dataset,
        n_examples=len(examples),
        correct=correct,
        errors_by_hop=errors,
        mean_scored_candidates=float(np.mean(counts)) if counts else 0.0,
        mean_chain_paths=float(np.mean(counts)) if counts else None,
        runtime_seconds=time.perf_counter() - started,
    )
    report.check_arithmetic()
    return report


@dataclass
class SpaceStats:
    mode: str
    per_example: list  # scored-candidate / path counts; None marks overflow
    excluded: int

    @property
    def mean(self) -> float:
        kept = [c for c in self.per_example if c is not None]
        return float(np.mean(kept)) if kept else float("nan")


def count_search_space(
    examples: Sequence[QaExample],
    graph: KnowledgeGraph,
    mode: str,
    scorer=None,
    chain_hops: int = 3,
    budget: int = 10**6,
    config: EngineConfig = EngineConfig(),
) -> SpaceStats:
    """Measure per-example search effort.

    ``hopwise`` mode counts scored candidates from search traces (with the
    given scorer, or a per-example gold-prefix oracle when none is supplied);
    ``chain`` mode counts enumerated paths of length 1..chain_hops, marking
    budget overflows as excluded.
    """
    if mode not in ("hopwise", "chain"):
        raise ValueError(f"unknown mode {mode!r}")
    per_example: list[int | None] = []
    excluded = 0
    for ex in examples:
        topic = graph.entity_id(ex.topic)
        if mode == "hopwise":
            ex_scorer = scorer or PrefixOracle([graph.relation_id(r) for r in ex.gold_path])
            _, trace = run_search(ex.question_tokens, topic, graph, ex_scorer, config)
            per_example.append(trace.scored_candidates)
        else:
            try:
                count = sum(1 for _ in enumerate_paths(graph, topic, chain_hops, budget=budget))
                per_example.append(count)
            except BudgetError:
                per_example.append(None)
                excluded += 1
    return SpaceStats(mode=mode, per_example=per_example, excluded=excluded)


@dataclass
class TransferResult:
    report_hopwise: EvalReport
    report_chain: EvalReport
    chain_hops: int


def transfer_experiment(
    train_long: Sequence[QaExample],
    valid_long: Sequence[QaExample],
    test_short: Sequence[QaExample],
    graph: KnowledgeGraph,
    make_params,
    config: TrainConfig,
    chain_hops: int = 3,
    out_dir=None,
) -> TransferResult:
    """Train on long questions only, evaluate on shorter ones, under both the
    hop-by-hop search (termination supervised) and the fixed-length-bound
    baseline (no termination supervision), identically configured.

    ``make_params`` is a zero-argument factory so both variants start fresh.
    """
    params_a, _ = fit(make_params(), train_long, valid_long, graph, config)
    report_a = evaluate(
        EmbeddingScorer(params_a, config.variant),
        test_short,
        graph,
        config.engine_config(),
        dataset="transfer-hopwise",
    )
    params_b, _ = fit_chain(
        make_params(), train_long, valid_long, graph, config, max_hops=chain_hops
    )
    report_b = evaluate_chain(
        EmbeddingScorer(params_b, config.variant),
        test_short,
        graph,
        max_hops=chain_hops,
        dataset=f"transfer-chain{chain_hops}",
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_report_csv(out_dir / "report.csv", [report_a, report_b])
        write_errors_csv(out_dir / "errors.csv", [report_a, report_b])
    return TransferResult(report_hopwise=report_a, report_chain=report_b, chain_hops=chain_hops)


def write_report_csv(path, reports: Sequence[EvalReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "dataset",
                "n_examples",
                "correct",
                "path_accuracy",
                "re_errors",
                "td_early_errors",
                "td_late_errors",
                "td_errors",
                "mean_scored_candidates",
                "mean_chain_paths",
                "runtime_seconds",
            ]
        )
        for r in reports:
            writer.writerow(
                [
                    r.dataset,
                    r.n_examples,
                    r.correct,
                    repr(r.path_accuracy),
                    r.error_total("re"),
                    r.error_total("td_early"),
                    r.error_total("td_late"),
                    r.td_errors,
                    repr(r.mean_scored_candidates),
                    "" if r.mean_chain_paths is None else repr(r.mean_chain_paths),
                    f"{r.runtime_seconds:.3f}",
                ]
            )


def write_errors_csv(path, reports: Sequence[EvalReport]) -> None:
    """Per-hop error table; termination errors also appear merged."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "hop", "re", "td_early", "td_late", "td"])
        for r in reports:
            for hop in sorted(r.errors_by_hop):
                counts = r.errors_by_hop[hop]
                writer.writerow(
                    [
                        r.dataset,
                        hop,
                        counts.get("re", 0),
                        counts.get("td_early", 0),
                        counts.get("td_late", 0),
                        counts.get("td_early", 0) + counts.get("td_late", 0),
                    ]
                )


def write_space_csv(path, examples: Sequence[QaExample], stats: SpaceStats) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["example", "gold_hops", "count", "overflow"])
        for i, (ex, count) in enumerate(zip(examples, stats.per_example)):
            writer.writerow(
                [i, len(ex.gold_path), "" if count is None else count, int(count is None)]
            )
