"""Deterministic scoring stubs used to exercise the search engine.

The prefix oracle grades a candidate by how much of the annotated path it
matches: a k-relation gold prefix scores k/H (the full gold path scores 1.0)
and anything else scores 0. The graded ramp keeps the gold extension strictly
above the current prefix mid-search, so the stop-on-tie rule fires exactly at
the gold length.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = ["PrefixOracle", "ConstantScorer"]


class PrefixOracle:
    """Scores gold-path prefixes on a ramp up to 1.0; everything else 0."""

    def __init__(self, gold_rel_ids: Sequence[int]):
        if not gold_rel_ids:
            raise ValueError("oracle needs a non-empty gold path")
        self.gold = tuple(gold_rel_ids)

    def start(self, tokens):
        return None

    def score_paths(self, q, paths) -> np.ndarray:
        h = len(self.gold)
        out = np.zeros(len(paths))
        for i, p in enumerate(paths):
            p = tuple(p)
            if len(p) <= h and p == self.gold[: len(p)]:
                out[i] = len(p) / h
        return out

    def update_question(self, q, path):
        return q


class ConstantScorer:
    """Scores every candidate the same; exposes tie-handling behavior."""

    def __init__(self, value: float = 0.0):
        self.value = float(value)

    def start(self, tokens):
        return None

    def score_paths(self, q, paths) -> np.ndarray:
        return np.full(len(paths), self.value)

    def update_question(self, q, path):
        return q
