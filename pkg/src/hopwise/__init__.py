"""Hop-by-hop relation path extraction over knowledge graphs.

A trainable scorer ranks candidate relation paths hop by hop; a comparative
stopping rule ends the search when no one-relation extension beats the path
found so far, so no maximum hop count has to be fixed in advance.
"""

from .kg import KnowledgeGraph, load_triples
from .datagen import GridSpec, SynthSpec, QaExample, gen_gridworld, gen_synth, load_examples
from .scorer import ScorerParams, Vocab, EmbeddingScorer, init_params
from .engine import EngineConfig, SearchTrace, run_search, run_chain_baseline
from .oracle import PrefixOracle
from .trainer import TrainConfig, fit, train_example
from .evaluate import EvalReport, attribute_error, evaluate

__version__ = "0.1.0"

__all__ = [
    "KnowledgeGraph",
    "load_triples",
    "GridSpec",
    "SynthSpec",
    "QaExample",
    "gen_gridworld",
    "gen_synth",
    "load_examples",
    "ScorerParams",
    "Vocab",
    "EmbeddingScorer",
    "init_params",
    "EngineConfig",
    "SearchTrace",
    "run_search",
    "run_chain_baseline",
    "PrefixOracle",
    "TrainConfig",
    "fit",
    "train_example",
    "EvalReport",
    "attribute_error",
    "evaluate",
    "__version__",
]
