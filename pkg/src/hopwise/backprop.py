"""Recorded forward pass and hand-derived reverse pass for the training loss.

The per-example loss sums, over the hops of the annotated path, a ranking
hinge over that hop's candidates and a termination hinge (continue form
before the final hop, stop form at it). The forward pass records exactly the
fixed shapes this computation touches — question states, scored blocks,
attention — so the backward pass can accumulate parameter gradients without
a general autodiff graph.

Candidate paths inside one example always extend a gold prefix, so path
vectors are built incrementally: with ``u(r)`` the unit vector of relation
``r`` and ``v_L`` the length-L gold prefix vector,

    v_L = ((L-1) v_{L-1} + u(r_L)) / L
    row(L, r) = (L v_L + u(r)) / (L + 1)

and gradients flow back down the same recurrence. Gradients with respect to
a question state propagate through the per-hop update (or unchanged when no
update ran) into the previous hop's state, ending at the embedding rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .scorer import ScorerParams, relation_unit

__all__ = [
    "Block",
    "HopTape",
    "ExampleTape",
    "ChainTape",
    "example_forward",
    "example_backward",
    "chain_forward",
    "chain_backward",
]


def _hinge_mean(s_pos: float, s_negs: np.ndarray, margin: float) -> tuple[float, np.ndarray, float]:
    """Mean hinge of s_pos against each negative.

    Returns (loss, d/ds_negs, d/ds_pos); the subgradient at the kink is 0.
    """
    if s_negs.size == 0:
        return 0.0, np.zeros(0), 0.0
    gaps = margin - (s_pos - s_negs)
    active = gaps > 0.0
    loss = float(np.where(active, gaps, 0.0).mean())
    d_negs = active / s_negs.size
    d_pos = -float(active.sum()) / s_negs.size
    return loss, d_negs, d_pos


@dataclass
class Block:
    """One kernel call: K candidate rows scored against a question state."""

    rows: list  # (prefix_level, rel_id | None) pairs
    V: np.ndarray
    S: np.ndarray
    ok: np.ndarray
    A: np.ndarray | None = None  # attentive only
    C: np.ndarray | None = None
    dS: np.ndarray | None = None


@dataclass
class HopTape:
    state: np.ndarray  # (m, d) token matrix or (d,) pooled vector
    ext: Block
    gold_row: int
    td: Block | None
    td_kind: str  # "continue" | "stop"
    updated: bool


@dataclass
class ExampleTape:
    variant: str
    use_dq: bool
    margin: float
    tok_ids: tuple[int, ...]
    gold: tuple[int, ...]
    u: dict
    v_lvl: list
    hops: list = field(default_factory=list)
    loss_re: list = field(default_factory=list)
    loss_td: list = field(default_factory=list)
    consumed: bool = False

    @property
    def loss(self) -> float:
        return float(sum(self.loss_re) + sum(self.loss_td))


class _UnitCache:
    def __init__(self, params: ScorerParams):
        self.params = params
        self.u: dict[int, np.ndarray] = {}

    def get(self, rel: int) -> np.ndarray:
        vec = self.u.get(rel)
        if vec is None:
            vec = relation_unit(self.params, rel)
            self.u[rel] = vec
        return vec

    def rows(self, rels: Sequence[int]) -> np.ndarray:
        return np.stack([self.get(r) for r in rels])


def _encode_tokens(params: ScorerParams, tok_ids: Sequence[int]) -> np.ndarray:
    X = params.word_emb[list(tok_ids)].copy()
    if params.pos_emb is not None:
        if len(tok_ids) > params.n_positions:
            raise ValueError("question longer than parameterized positions")
        X += params.pos_emb[: len(tok_ids)]
    return X


def _score_block(variant: str, state: np.ndarray, rows, V: np.ndarray) -> Block:
    if variant == "attentive":
        S, A, C, ok = kernels.attn_forward(state, V)
        return Block(rows=rows, V=V, S=S, ok=ok, A=A, C=C)
    S, ok = kernels.cosine_forward(state, V)
    return Block(rows=rows, V=V, S=S, ok=ok)


def example_forward(
    params: ScorerParams,
    tok_ids: Sequence[int],
    gold: Sequence[int],
    cand_sets: Sequence[Sequence[int]],
    final_exts: Sequence[int],
    variant: str | None = None,
    use_dq: bool = False,
    margin: float = 0.5,
) -> ExampleTape:
    """Run and record the training forward pass for one example.

    ``cand_sets[i]`` holds the candidate relations at hop i+1 (must contain
    the gold relation); ``final_exts`` the extension relations at the final
    entity (may be empty).
    """
    variant = variant or params.variant
    gold = tuple(gold)
    H = len(gold)
    if H == 0:
        raise ValueError("gold path must be non-empty")
    if len(cand_sets) != H:
        raise ValueError("need one candidate set per gold hop")
    units = _UnitCache(params)
    d = params.dim
    v_lvl = [np.zeros(d)]
    for L in range(1, H + 1):
        v_lvl.append(((L - 1) * v_lvl[L - 1] + units.get(gold[L - 1])) / L)

    X = _encode_tokens(params, tok_ids)
    state = X if variant == "attentive" else X.mean(axis=0)
    tape = ExampleTape(
        variant=variant,
        use_dq=use_dq,
        margin=margin,
        tok_ids=tuple(tok_ids),
        gold=gold,
        u=units.u,
        v_lvl=v_lvl,
    )
    for i in range(1, H + 1):
        cands = tuple(cand_sets[i - 1])
        gold_row = cands.index(gold[i - 1])
        V = (units.rows(cands) + (i - 1) * v_lvl[i - 1]) / i
        ext = _score_block(variant, state, [(i - 1, r) for r in cands], V)
        negs = np.delete(ext.S, gold_row)
        loss, d_negs, d_pos = _hinge_mean(float(ext.S[gold_row]), negs, margin)
        ext.dS = np.insert(d_negs, gold_row, d_pos)
        tape.loss_re.append(loss)

        if i < H:
            rows = [(i, gold[i]), (i, None)]
            V_td = np.stack([(i * v_lvl[i] + units.get(gold[i])) / (i + 1), v_lvl[i]])
            td = _score_block(variant, state, rows, V_td)
            gap = margin - (float(td.S[0]) - float(td.S[1]))
            active = gap > 0.0
            tape.loss_td.append(float(gap) if active else 0.0)
            td.dS = np.array([-1.0, 1.0]) * active
            td_kind = "continue"
        elif final_exts:
            exts = tuple(final_exts)
            rows = [(H, None)] + [(H, r) for r in exts]
            V_td = np.vstack([v_lvl[H][None, :], (units.rows(exts) + H * v_lvl[H]) / (H + 1)])
            td = _score_block(variant, state, rows, V_td)
            loss, d_exts, d_path = _hinge_mean(float(td.S[0]), td.S[1:], margin)
            td.dS = np.concatenate([[d_path], d_exts])
            tape.loss_td.append(loss)
            td_kind = "stop"
        else:
            td = None
            td_kind = "stop"
            tape.loss_td.append(0.0)

        updated = use_dq and i < H
        tape.hops.append(
            HopTape(state=state, ext=ext, gold_row=gold_row, td=td, td_kind=td_kind, updated=updated)
        )
        if updated:
            if variant == "attentive":
                state = kernels.attn_update_forward(
                    state, td.A[1], td.V[1], params.proj_W, params.proj_B
                )
            else:
                state = kernels.concat_update_forward(
                    state, v_lvl[i], params.proj_W, params.proj_B
                )
    return tape


def _block_backward(
    variant: str,
    state: np.ndarray,
    block: Block,
    dA_extra: np.ndarray | None,
    dv_lvl: list,
    dU: dict,
):
    """Backward through one scored block; returns the state gradient."""
    if variant == "attentive":
        dX, dV = kernels.attn_backward(
            state, block.V, block.A, block.C, block.S, block.ok, block.dS, dA_extra
        )
    else:
        dX, dV = kernels.cosine_backward(state, block.V, block.S, block.ok, block.dS)
    for (lvl, rel), dvrow in zip(block.rows, dV):
        if rel is None:
            dv_lvl[lvl] += dvrow
        else:
            if lvl > 0:
                dv_lvl[lvl] += dvrow * (lvl / (lvl + 1))
            acc = dU.get(rel)
            if acc is None:
                dU[rel] = dvrow / (lvl + 1)
            else:
                acc += dvrow / (lvl + 1)
    return dX


def _scatter_units(params: ScorerParams, dU: dict) -> None:
    g_rel = params.grads["rel_emb"]
    g_word = params.grads["word_emb"]
    for rel, du in dU.items():
        g_rel[rel] += 0.5 * du
        toks = params.rel_token_ids[rel]
        share = du * (0.5 / len(toks))
        for t in toks:
            g_word[t] += share


def _scatter_question(params: ScorerParams, tok_ids, dX: np.ndarray) -> None:
    np.add.at(params.grads["word_emb"], list(tok_ids), dX)
    if params.pos_emb is not None:
        params.grads["pos_emb"][: len(tok_ids)] += dX


def example_backward(params: ScorerParams, tape: ExampleTape) -> None:
    """Accumulate d(loss)/d(params) into ``params.grads``; the forward value
    is untouched. A tape can only be consumed once."""
    if tape.consumed:
        raise RuntimeError("backward was already run for this forward record")
    tape.consumed = True
    variant = tape.variant
    H = len(tape.gold)
    d = params.dim
    m = len(tape.tok_ids)
    dU: dict[int, np.ndarray] = {}
    dv_lvl = [np.zeros(d) for _ in range(H + 1)]
    d_state_next: np.ndarray | None = None

    for i in range(H, 0, -1):
        hop = tape.hops[i - 1]
        d_state = np.zeros((m, d)) if variant == "attentive" else np.zeros(d)
        dA_extra = None
        if hop.updated and d_state_next is not None:
            if variant == "attentive":
                dXu, da, dv, dW, dB = kernels.attn_update_backward(
                    hop.state, hop.td.A[1], hop.td.V[1], params.proj_W, d_state_next
                )
                d_state += dXu
                dA_extra = np.zeros_like(hop.td.A)
                dA_extra[1] = da
                dv_lvl[i] += dv
            else:
                dq, dv, dW, dB = kernels.concat_update_backward(
                    hop.state, tape.v_lvl[i], params.proj_W, d_state_next
                )
                d_state += dq
                dv_lvl[i] += dv
            params.grads["proj_W"] += dW
            params.grads["proj_B"] += dB
        elif d_state_next is not None:
            d_state += d_state_next

        if hop.td is not None:
            d_state += _block_backward(variant, hop.state, hop.td, dA_extra, dv_lvl, dU)
        d_state += _block_backward(variant, hop.state, hop.ext, None, dv_lvl, dU)
        d_state_next = d_state

    for L in range(H, 0, -1):
        rel = tape.gold[L - 1]
        acc = dU.get(rel)
        if acc is None:
            dU[rel] = dv_lvl[L] / L
        else:
            acc += dv_lvl[L] / L
        if L > 1:
            dv_lvl[L - 1] += dv_lvl[L] * ((L - 1) / L)

    _scatter_units(params, dU)
    if variant == "attentive":
        _scatter_question(params, tape.tok_ids, d_state_next)
    else:
        _scatter_question(params, tape.tok_ids, np.tile(d_state_next / m, (m, 1)))


@dataclass
class ChainTape:
    """Forward record for the fixed-length-bound chain baseline: one hinge
    block over whole candidate paths, no termination terms, no updates."""

    variant: str
    margin: float
    tok_ids: tuple[int, ...]
    paths: list
    gold_row: int
    state: np.ndarray
    block: Block
    u: dict
    loss: float = 0.0
    consumed: bool = False


def chain_forward(
    params: ScorerParams,
    tok_ids: Sequence[int],
    paths: Sequence[Sequence[int]],
    gold_row: int,
    variant: str | None = None,
    margin: float = 0.5,
) -> ChainTape:
    variant = variant or params.variant
    units = _UnitCache(params)
    V = np.stack([units.rows(p).mean(axis=0) for p in paths])
    X = _encode_tokens(params, tok_ids)
    state = X if variant == "attentive" else X.mean(axis=0)
    block = _score_block(variant, state, list(paths), V)
    negs = np.delete(block.S, gold_row)
    loss, d_negs, d_pos = _hinge_mean(float(block.S[gold_row]), negs, margin)
    block.dS = np.insert(d_negs, gold_row, d_pos)
    return ChainTape(
        variant=variant,
        margin=margin,
        tok_ids=tuple(tok_ids),
        paths=[tuple(p) for p in paths],
        gold_row=gold_row,
        state=state,
        block=block,
        u=units.u,
        loss=loss,
    )


def chain_backward(params: ScorerParams, tape: ChainTape) -> None:
    if tape.consumed:
        raise RuntimeError("backward was already run for this forward record")
    tape.consumed = True
    if tape.variant == "attentive":
        dX, dV = kernels.attn_backward(
            tape.state, tape.block.V, tape.block.A, tape.block.C,
            tape.block.S, tape.block.ok, tape.block.dS, None,
        )
    else:
        dq, dV = kernels.cosine_backward(
            tape.state, tape.block.V, tape.block.S, tape.block.ok, tape.block.dS
        )
        m = len(tape.tok_ids)
        dX = np.tile(dq / m, (m, 1))
    dU: dict[int, np.ndarray] = {}
    for path, dvrow in zip(tape.paths, dV):
        share = dvrow / len(path)
        for rel in path:
            acc = dU.get(rel)
            if acc is None:
                dU[rel] = share.copy()
            else:
                acc += share
    _scatter_units(params, dU)
    _scatter_question(params, tape.tok_ids, dX)
