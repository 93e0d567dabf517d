"""Trainable scorer over (question, relation path) pairs.

Two variants share one parameter set:

* ``meanpool``: cosine between the pooled question vector and the path
  vector; the per-hop update is a linear map of the concatenated
  (question, path) vector.
* ``attentive``: scaled dot-product attention of the path vector over the
  question tokens, cosine between the attended vector and the path; the
  per-hop update de-focuses each token by its attention weight before a
  linear map.

A path is embedded as the mean over its relations of (relation embedding
averaged with the mean word embedding of the relation's label tokens), so a
candidate is always scored together with the history that led to it.

Question tokens may optionally carry learned position vectors
(``token_vec = word_emb + pos_emb``). Pooling and attention are otherwise
order-blind, and instruction-style questions need token order to be
recoverable; build parameters with ``n_positions=0`` for the plain
word-embedding encoding.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import VocabMismatchError
from .kg import KnowledgeGraph

__all__ = [
    "VARIANTS",
    "Vocab",
    "ScorerParams",
    "QuestionRepr",
    "RelationSeqRepr",
    "init_params",
    "encode_question",
    "encode_path",
    "score",
    "score_paths",
    "update_question",
    "save_checkpoint",
    "load_checkpoint",
    "EmbeddingScorer",
]

VARIANTS = ("meanpool", "attentive")

UNK = "<unk>"

CHECKPOINT_MAGIC = "hopwise-checkpoint"
CHECKPOINT_VERSION = 1

PARAM_NAMES = ("word_emb", "rel_emb", "pos_emb", "proj_W", "proj_B")


class Vocab:
    """Frozen token -> index map; index 0 is the unknown token.

    Tokens are lowercased both at build and at lookup, so question words and
    relation label tokens share embeddings whenever they spell the same.
    """

    def __init__(self, tokens: Sequence[str]):
        self.tokens = (UNK, *tokens)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def build(
        cls,
        questions: Iterable[Sequence[str]],
        relation_tokens: Iterable[Sequence[str]] = (),
    ) -> "Vocab":
        seen: dict[str, None] = {}
        for tokens in questions:
            for tok in tokens:
                seen.setdefault(tok.lower())
        for tokens in relation_tokens:
            for tok in tokens:
                seen.setdefault(tok.lower())
        seen.pop(UNK, None)
        return cls(tuple(seen))

    def id(self, token: str) -> int:
        return self.index.get(token.lower(), 0)

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, tok in enumerate(self.tokens):
                fh.write(f"{tok}\t{i}\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        tokens = []
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh):
                tok, _, idx = line.rstrip("\n").partition("\t")
                if int(idx) != line_no:
                    raise VocabMismatchError(f"{path}: non-contiguous index at line {line_no + 1}")
                tokens.append(tok)
        if not tokens or tokens[0] != UNK:
            raise VocabMismatchError(f"{path}: index 0 must be {UNK}")
        return cls(tuple(tokens[1:]))


@dataclass
class ScorerParams:
    """Embedding tables and transform weights with paired gradient slots."""

    variant: str
    dim: int
    vocab: Vocab
    rel_labels: tuple[str, ...]
    rel_token_ids: tuple[tuple[int, ...], ...]
    relations_digest: str
    word_emb: np.ndarray
    rel_emb: np.ndarray
    pos_emb: np.ndarray | None
    proj_W: np.ndarray
    proj_B: np.ndarray
    grads: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.grads:
            self.zero_grads()

    @property
    def n_positions(self) -> int:
        return 0 if self.pos_emb is None else self.pos_emb.shape[0]

    def tensors(self) -> dict:
        out = {
            "word_emb": self.word_emb,
            "rel_emb": self.rel_emb,
            "proj_W": self.proj_W,
            "proj_B": self.proj_B,
        }
        if self.pos_emb is not None:
            out["pos_emb"] = self.pos_emb
        return out

    def zero_grads(self) -> None:
        self.grads = {name: np.zeros_like(arr) for name, arr in self.tensors().items()}

    def copy(self) -> "ScorerParams":
        return replace(
            self,
            word_emb=self.word_emb.copy(),
            rel_emb=self.rel_emb.copy(),
            pos_emb=None if self.pos_emb is None else self.pos_emb.copy(),
            proj_W=self.proj_W.copy(),
            proj_B=self.proj_B.copy(),
            grads={},
        )


@dataclass
class QuestionRepr:
    """Per-token vectors plus a pooled vector; carries the last attention."""

    token_vecs: np.ndarray
    pooled: np.ndarray
    attn_weights: np.ndarray | None = None
    attn_path_vec: np.ndarray | None = None
    degenerate: bool = False


@dataclass(frozen=True)
class RelationSeqRepr:
    """Embedded candidate path: a d-vector plus the relation ids it encodes."""

    vec: np.ndarray
    rel_ids: tuple[int, ...]


def init_params(
    graph: KnowledgeGraph,
    vocab: Vocab,
    dim: int = 64,
    variant: str = "attentive",
    seed: int = 0,
    n_positions: int = 32,
    init_scale: float = 0.08,
) -> ScorerParams:
    """Fresh parameters: embeddings uniform in [-init_scale, init_scale],
    projection initialized to the identity map (``[I | 0]`` for meanpool)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 97])))
    word_emb = rng.uniform(-init_scale, init_scale, size=(len(vocab), dim))
    rel_emb = rng.uniform(-init_scale, init_scale, size=(graph.n_relations, dim))
    pos_emb = None
    if n_positions > 0:
        pos_emb = rng.uniform(-init_scale, init_scale, size=(n_positions, dim))
    if variant == "attentive":
        proj_W = np.eye(dim)
    else:
        proj_W = np.hstack([np.eye(dim), np.zeros((dim, dim))])
    rel_token_ids = tuple(
        tuple(vocab.id(t) for t in tokens) for tokens in graph.relation_tokens
    )
    return ScorerParams(
        variant=variant,
        dim=dim,
        vocab=vocab,
        rel_labels=graph.relation_labels,
        rel_token_ids=rel_token_ids,
        relations_digest=graph.relations_digest(),
        word_emb=word_emb,
        rel_emb=rel_emb,
        pos_emb=pos_emb,
        proj_W=proj_W,
        proj_B=np.zeros(dim),
    )


def encode_question(params: ScorerParams, tokens: Sequence[str]) -> QuestionRepr:
    """Embed tokens (plus position vectors when enabled); pooled = mean."""
    if not tokens:
        raise ValueError("cannot encode an empty question")
    ids = [params.vocab.id(t) for t in tokens]
    X = params.word_emb[ids].copy()
    if params.pos_emb is not None:
        if len(ids) > params.n_positions:
            raise ValueError(
                f"question has {len(ids)} tokens but only "
                f"{params.n_positions} positions are parameterized"
            )
        X += params.pos_emb[: len(ids)]
    return QuestionRepr(token_vecs=X, pooled=X.mean(axis=0))


def relation_unit(params: ScorerParams, rel_id: int) -> np.ndarray:
    """0.5 * relation embedding + 0.5 * mean word embedding of its label tokens."""
    if not 0 <= rel_id < params.rel_emb.shape[0]:
        raise ValueError(f"unknown relation id {rel_id}")
    tok_ids = params.rel_token_ids[rel_id]
    return 0.5 * params.rel_emb[rel_id] + 0.5 * params.word_emb[list(tok_ids)].mean(axis=0)


def encode_path(params: ScorerParams, rel_ids: Sequence[int]) -> RelationSeqRepr:
    """Mean of the per-relation unit vectors over the whole path."""
    if not rel_ids:
        raise ValueError("cannot encode an empty path")
    vec = np.mean([relation_unit(params, r) for r in rel_ids], axis=0)
    return RelationSeqRepr(vec=vec, rel_ids=tuple(rel_ids))


def score_paths(
    params: ScorerParams,
    q: QuestionRepr,
    paths: Sequence[RelationSeqRepr],
    variant: str | None = None,
) -> np.ndarray:
    """Score the question against each path; the attention cache in ``q``
    afterwards belongs to the last path in the list."""
    variant = variant or params.variant
    if not paths:
        return np.zeros(0)
    V = np.ascontiguousarray([p.vec for p in paths])
    if variant == "attentive":
        S, A, _, ok = kernels.attn_forward(q.token_vecs, V)
        q.attn_weights = A[-1].copy()
        q.attn_path_vec = V[-1].copy()
    elif variant == "meanpool":
        S, ok = kernels.cosine_forward(q.pooled, V)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    q.degenerate = bool((ok == 0).any())
    return S


def score(
    params: ScorerParams,
    q: QuestionRepr,
    p: RelationSeqRepr,
    variant: str | None = None,
) -> float:
    return float(score_paths(params, q, [p], variant)[0])


def update_question(
    params: ScorerParams,
    q: QuestionRepr,
    p: RelationSeqRepr,
    variant: str | None = None,
) -> QuestionRepr:
    """Advance the question representation after accepting ``p``.

    Attentive updates consume the attention weights cached by the most recent
    scoring call against the same path; call score()/score_paths() with ``p``
    last before updating.
    """
    variant = variant or params.variant
    if variant == "attentive":
        if q.attn_weights is None or q.attn_path_vec is None:
            raise ValueError("attentive update requires attention from a prior score() call")
        if not np.array_equal(q.attn_path_vec, p.vec):
            raise ValueError("cached attention was computed against a different path")
        X2 = kernels.attn_update_forward(
            q.token_vecs, q.attn_weights, p.vec, params.proj_W, params.proj_B
        )
        return QuestionRepr(token_vecs=X2, pooled=X2.mean(axis=0))
    if variant == "meanpool":
        pooled2 = kernels.concat_update_forward(
            q.pooled, p.vec, params.proj_W, params.proj_B
        )
        return QuestionRepr(token_vecs=q.token_vecs, pooled=pooled2)
    raise ValueError(f"unknown variant {variant!r}")


class EmbeddingScorer:
    """Engine-facing bundle of parameters and a variant.

    The engine is duck-typed over start/score_paths/update_question, where
    paths are tuples of relation ids; this adapter handles encoding.
    """

    def __init__(self, params: ScorerParams, variant: str | None = None):
        self.params = params
        self.variant = variant or params.variant

    def start(self, tokens: Sequence[str]) -> QuestionRepr:
        return encode_question(self.params, tokens)

    def score_paths(self, q: QuestionRepr, paths: Sequence[Sequence[int]]) -> np.ndarray:
        reprs = [encode_path(self.params, p) for p in paths]
        return score_paths(self.params, q, reprs, self.variant)

    def update_question(self, q: QuestionRepr, path: Sequence[int]) -> QuestionRepr:
        return update_question(self.params, q, encode_path(self.params, path), self.variant)


def _write_tensor(fh, name: str, arr: np.ndarray) -> None:
    arr2 = np.atleast_2d(arr)
    fh.write(f"tensor {name} {arr.ndim} {' '.join(str(s) for s in arr.shape)}\n")
    for row in arr2:
        fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def save_checkpoint(params: ScorerParams, path) -> None:
    """Text checkpoint: header lines, then named tensors in row-major decimal
    floats. The vocabulary is saved alongside as ``<path>.vocab``."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
        fh.write(f"variant {params.variant}\n")
        fh.write(f"dim {params.dim}\n")
        fh.write(f"vocab_size {len(params.vocab)}\n")
        fh.write(f"relation_count {len(params.rel_labels)}\n")
        fh.write(f"positions {params.n_positions}\n")
        fh.write(f"relations_digest {params.relations_digest}\n")
        for name, arr in params.tensors().items():
            _write_tensor(fh, name, arr)
    params.vocab.save(str(path) + ".vocab")


def load_checkpoint(path, graph: KnowledgeGraph) -> ScorerParams:
    """Load a checkpoint and re-derive relation token ids from ``graph``.

    Raises VocabMismatchError when the graph's relations differ from the ones
    the checkpoint was trained on, or when any tensor dimension disagrees
    with the header.
    """
    path = Path(path)
    vocab = Vocab.load(str(path) + ".vocab")
    header: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().split()
        if magic[:1] != [CHECKPOINT_MAGIC] or int(magic[1]) != CHECKPOINT_VERSION:
            raise VocabMismatchError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
        line = fh.readline()
        while line and not line.startswith("tensor "):
            key, _, value = line.rstrip("\n").partition(" ")
            header[key] = value
            line = fh.readline()
        while line:
            _, name, ndim, *shape = line.split()
            shape = tuple(int(s) for s in shape)
            rows = shape[0] if int(ndim) > 1 else 1
            data = [
                np.array(fh.readline().split(), dtype=np.float64)
                for _ in range(rows)
            ]
            arr = np.array(data)
            if int(ndim) == 1:
                arr = arr[0]
            if arr.shape != shape:
                raise VocabMismatchError(f"{path}: tensor {name} has shape {arr.shape}, header says {shape}")
            tensors[name] = arr
            line = fh.readline()
    dim = int(header["dim"])
    if int(header["vocab_size"]) != len(vocab):
        raise VocabMismatchError(f"{path}: vocab size mismatch with sidecar")
    if int(header["relation_count"]) != graph.n_relations:
        raise VocabMismatchError(
            f"{path}: checkpoint has {header['relation_count']} relations, graph has {graph.n_relations}"
        )
    if header["relations_digest"] != graph.relations_digest():
        raise VocabMismatchError(f"{path}: graph relations differ from training time")
    expected = {
        "word_emb": (len(vocab), dim),
        "rel_emb": (graph.n_relations, dim),
        "proj_W": (dim, dim) if header["variant"] == "attentive" else (dim, 2 * dim),
        "proj_B": (dim,),
    }
    n_pos = int(header["positions"])
    if n_pos:
        expected["pos_emb"] = (n_pos, dim)
    for name, shape in expected.items():
        if name not in tensors or tensors[name].shape != shape:
            raise VocabMismatchError(f"{path}: tensor {name} missing or mis-shaped")
    rel_token_ids = tuple(
        tuple(vocab.id(t) for t in tokens) for tokens in graph.relation_tokens
    )
    return ScorerParams(
        variant=header["variant"],
        dim=dim,
        vocab=vocab,
        rel_labels=graph.relation_labels,
        rel_token_ids=rel_token_ids,
        relations_digest=header["relations_digest"],
        word_emb=tensors["word_emb"],
        rel_emb=tensors["rel_emb"],
        pos_emb=tensors.get("pos_emb"),
        proj_W=tensors["proj_W"],
        proj_B=tensors["proj_B"],
    )
