"""Joint training of hop-level ranking and the termination decision.

Training teacher-forces the annotated path: at every hop the candidate set
comes from the gold frontier, the ranking hinge pushes the gold candidate
above its siblings, and the termination hinge pushes the next gold extension
above the current path (continue form) or the path above all extensions
(stop form, at the final hop). The two losses sum over hops into the
per-example objective.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import backprop
from .datagen import QaExample
from .engine import EngineConfig, run_chain_baseline, run_search
from .errors import GoldPathError
from .kg import KnowledgeGraph, enumerate_paths, frontier_relations, transit_frontier
from .scorer import EmbeddingScorer, ScorerParams, save_checkpoint

__all__ = [
    "TrainConfig",
    "HopLosses",
    "loss_re",
    "loss_td_continue",
    "loss_td_stop",
    "train_example",
    "backward",
    "fit",
    "fit_chain",
]

log = logging.getLogger(__name__)

OPTIMIZERS = ("rmsprop", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 0.5
    learning_rate: float = 0.001
    optimizer: str = "rmsprop"
    rho: float = 0.9
    eps: float = 1e-8
    epochs: int = 30
    batch_size: int = 32
    patience: int = 5
    seed: int = 0
    use_dynamic_question: bool = True
    variant: str = "attentive"
    dim: int = 64
    n_positions: int = 32
    hop_cap: int = 16

    def __post_init__(self):
        if not 0.0 < self.margin <= 1.0:
            raise ValueError("margin must lie in (0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def engine_config(self) -> EngineConfig:
        return EngineConfig(
            hop_cap=self.hop_cap,
            variant=self.variant,
            use_dynamic_question=self.use_dynamic_question,
        )


@dataclass
class HopLosses:
    """Per-hop loss terms for one example; total is their sum."""

    re_by_hop: tuple[float, ...]
    td_by_hop: tuple[float, ...]

    @property
    def total(self) -> float:
        return float(sum(self.re_by_hop) + sum(self.td_by_hop))


def loss_re(s_gold: float, s_negs: Sequence[float], margin: float) -> float:
    """Ranking hinge: mean over negatives of max(0, -(s_gold - s_neg) + margin).

    An empty negative list (sole candidate) contributes 0.
    """
    if not len(s_negs):
        return 0.0
    return float(np.mean([max(0.0, margin - (s_gold - s)) for s in s_negs]))


def loss_td_continue(s_next_gold: float, s_current: float, margin: float) -> float:
    """Continue-form termination hinge: the next gold extension must beat the
    current path by the margin."""
    return max(0.0, margin - (s_next_gold - s_current))


def loss_td_stop(s_path: float, s_extensions: Sequence[float], margin: float) -> float:
    """Stop-form termination hinge: the path must beat every extension by the
    margin; an empty extension list (sink) contributes 0."""
    if not len(s_extensions):
        return 0.0
    return float(np.mean([max(0.0, margin - (s_path - s)) for s in s_extensions]))


@dataclass(frozen=True)
class _Resolved:
    """Graph-independent view of one training example."""

    tok_ids: tuple[int, ...]
    gold: tuple[int, ...]
    cand_sets: tuple[tuple[int, ...], ...]
    final_exts: tuple[int, ...]


def _resolve(params: ScorerParams, example: QaExample, graph: KnowledgeGraph) -> _Resolved:
    try:
        topic = graph.entity_id(example.topic)
        gold = tuple(graph.relation_id(r) for r in example.gold_path)
    except LookupError as exc:
        raise GoldPathError(f"cannot resolve example against graph: {exc}") from None
    frontier: tuple[int, ...] = (topic,)
    cand_sets = []
    for rel in gold:
        cands = frontier_relations(graph, frontier)
        if rel not in cands:
            raise GoldPathError(
                f"gold relation {graph.relation_label(rel)!r} not available at its hop"
            )
        cand_sets.append(cands)
        frontier = transit_frontier(graph, frontier, rel)
    final_exts = frontier_relations(graph, frontier)
    tok_ids = tuple(params.vocab.id(t) for t in example.question_tokens)
    return _Resolved(tok_ids, gold, tuple(cand_sets), final_exts)


def _train_resolved(params: ScorerParams, res: _Resolved, config: TrainConfig) -> HopLosses:
    tape = backprop.example_forward(
        params,
        res.tok_ids,
        res.gold,
        res.cand_sets,
        res.final_exts,
        variant=config.variant,
        use_dq=config.use_dynamic_question,
        margin=config.margin,
    )
    backprop.example_backward(params, tape)
    return HopLosses(re_by_hop=tuple(tape.loss_re), td_by_hop=tuple(tape.loss_td))


def train_example(
    params: ScorerParams,
    example: QaExample,
    graph: KnowledgeGraph,
    config: TrainConfig,
) -> HopLosses:
    """Forward + gradient accumulation for one example (teacher-forced)."""
    return _train_resolved(params, _resolve(params, example, graph), config)


def backward(params: ScorerParams, tape) -> None:
    """Accumulate gradients for a recorded forward pass (either tape kind)."""
    if isinstance(tape, backprop.ChainTape):
        backprop.chain_backward(params, tape)
    else:
        backprop.example_backward(params, tape)


class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: ScorerParams, scale: float) -> None:
        for name, arr in params.tensors().items():
            arr -= self.lr * scale * params.grads[name]


class _RmsProp:
    def __init__(self, lr: float, rho: float, eps: float):
        self.lr, self.rho, self.eps = lr, rho, eps
        self.acc: dict[str, np.ndarray] = {}

    def step(self, params: ScorerParams, scale: float) -> None:
        for name, arr in params.tensors().items():
            g = params.grads[name] * scale
            acc = self.acc.get(name)
            if acc is None:
                acc = self.acc[name] = np.zeros_like(arr)
            acc *= self.rho
            acc += (1.0 - self.rho) * g * g
            arr -= self.lr * g / (np.sqrt(acc) + self.eps)


def _make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return _Sgd(config.learning_rate)
    return _RmsProp(config.learning_rate, config.rho, config.eps)


def _path_accuracy(params, examples, graph, engine_cfg) -> float:
    if not examples:
        return float("nan")
    scorer = EmbeddingScorer(params, engine_cfg.variant)
    hits = 0
    for ex in examples:
        gold = tuple(graph.relation_id(r) for r in ex.gold_path)
        predicted, _ = run_search(
            ex.question_tokens, graph.entity_id(ex.topic), graph, scorer, engine_cfg
        )
        hits += predicted == gold
    return hits / len(examples)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    mean_loss_re: float
    mean_loss_td: float
    valid_path_acc: float
    seconds: float


def _write_log(path, rows: list[EpochStats]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "mean_loss_re", "mean_loss_td", "valid_path_acc", "seconds"])
        for row in rows:
            writer.writerow(
                [
                    row.epoch,
                    repr(row.mean_loss),
                    repr(row.mean_loss_re),
                    repr(row.mean_loss_td),
                    repr(row.valid_path_acc),
                    f"{row.seconds:.3f}",
                ]
            )


def fit(
    params: ScorerParams,
    train: Sequence[QaExample],
    valid: Sequence[QaExample],
    graph: KnowledgeGraph,
    config: TrainConfig,
    out_dir=None,
) -> tuple[ScorerParams, list[EpochStats]]:
    """Epoch loop with seeded shuffling and early stopping on validation
    path accuracy; returns (best parameters, per-epoch log).

    With ``out_dir`` set, writes train_log.csv, the best checkpoint
    (model.ckpt + model.ckpt.vocab) and best.meta.
    """
    if not train:
        raise ValueError("training set is empty")
    if config.epochs > 0 and not valid:
        raise ValueError("validation set is required for early stopping")
    resolved = []
    for idx, ex in enumerate(train):
        try:
            resolved.append(_resolve(params, ex, graph))
        except GoldPathError as exc:
            log.warning("skipping train example %d: %s", idx, exc)
    optimizer = _make_optimizer(config)
    engine_cfg = config.engine_config()
    best_params = params.copy()
    best_acc = -1.0
    best_epoch = 0
    stale = 0
    rows: list[EpochStats] = []
    n = len(resolved)
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, epoch])))
        order = rng.permutation(n)
        sum_loss = sum_re = sum_td = 0.0
        for lo in range(0, n, config.batch_size):
            batch = order[lo : lo + config.batch_size]
            params.zero_grads()
            for idx in batch:
                losses = _train_resolved(params, resolved[idx], config)
                total = losses.total
                if not np.isfinite(total):
                    raise RuntimeError(
                        f"non-finite loss at train example {int(idx)} (epoch {epoch})"
                    )
                sum_loss += total
                sum_re += sum(losses.re_by_hop)
                sum_td += sum(losses.td_by_hop)
            optimizer.step(params, 1.0 / len(batch))
        acc = _path_accuracy(params, valid, graph, engine_cfg)
        rows.append(
            EpochStats(
                epoch=epoch,
                mean_loss=sum_loss / n,
                mean_loss_re=sum_re / n,
                mean_loss_td=sum_td / n,
                valid_path_acc=acc,
                seconds=time.perf_counter() - started,
            )
        )
        if acc > best_acc:
            best_acc = acc
            best_epoch = epoch
            best_params = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_log(out_dir / "train_log.csv", rows)
        save_checkpoint(best_params, out_dir / "model.ckpt")
        with open(out_dir / "best.meta", "w", encoding="utf-8") as fh:
            fh.write(f"epoch {best_epoch}\nvalid_path_acc {best_acc!r}\n")
    return best_params, rows


def _chain_candidates(graph, topic: int, max_hops: int, budget: int) -> list[tuple[int, ...]]:
    return [path for path, _ in enumerate_paths(graph, topic, max_hops, budget=budget)]


def fit_chain(
    params: ScorerParams,
    train: Sequence[QaExample],
    valid: Sequence[QaExample],
    graph: KnowledgeGraph,
    config: TrainConfig,
    max_hops: int,
    budget: int = 10**5,
    out_dir=None,
) -> tuple[ScorerParams, list[EpochStats]]:
    """Train the fixed-length-bound baseline: rank the gold path against all
    enumerated paths of length 1..max_hops with the same hinge and optimizer.

    Validation accuracy is argmax-over-enumerated-paths equality with gold.
    """
    if not train:
        raise ValueError("training set is empty")
    if config.epochs > 0 and not valid:
        raise ValueError("validation set is required for early stopping")
    compiled = []
    for idx, ex in enumerate(train):
        topic = graph.entity_id(ex.topic)
        gold = tuple(graph.relation_id(r) for r in ex.gold_path)
        paths = _chain_candidates(graph, topic, max_hops, budget)
        if gold not in paths:
            log.warning("skipping train example %d: gold path beyond hop bound", idx)
            continue
        tok_ids = tuple(params.vocab.id(t) for t in ex.question_tokens)
        compiled.append((tok_ids, paths, paths.index(gold)))
    optimizer = _make_optimizer(config)
    best_params = params.copy()
    best_acc = -1.0
    stale = 0
    rows: list[EpochStats] = []
    n = len(compiled)
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, epoch])))
        order = rng.permutation(n)
        sum_loss = 0.0
        for lo in range(0, n, config.batch_size):
            batch = order[lo : lo + config.batch_size]
            params.zero_grads()
            for idx in batch:
                tok_ids, paths, gold_row = compiled[idx]
                tape = backprop.chain_forward(
                    params, tok_ids, paths, gold_row,
                    variant=config.variant, margin=config.margin,
                )
                if not np.isfinite(tape.loss):
                    raise RuntimeError(f"non-finite loss at train example {int(idx)} (epoch {epoch})")
                backprop.chain_backward(params, tape)
                sum_loss += tape.loss
            optimizer.step(params, 1.0 / len(batch))
        hits = 0
        scorer = EmbeddingScorer(params, config.variant)
        for ex in valid:
            gold = tuple(graph.relation_id(r) for r in ex.gold_path)
            predicted, _ = run_chain_baseline(
                ex.question_tokens, graph.entity_id(ex.topic), graph, scorer, max_hops, budget
            )
            hits += predicted == gold
        acc = hits / len(valid) if valid else float("nan")
        rows.append(
            EpochStats(
                epoch=epoch,
                mean_loss=sum_loss / n,
                mean_loss_re=sum_loss / n,
                mean_loss_td=0.0,
                valid_path_acc=acc,
                seconds=time.perf_counter() - started,
            )
        )
        if acc > best_acc:
            best_acc, stale = acc, 0
            best_params = params.copy()
        else:
            stale += 1
            if stale >= config.patience:
                break
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_log(out_dir / "train_log.csv", rows)
        save_checkpoint(best_params, out_dir / "model.ckpt")
    return best_params, rows
