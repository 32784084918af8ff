"""Idiom mining with a Dirichlet-process tree substitution grammar."""

__version__ = "0.1.0"

from .corpus_io import SchemaError, ingest_corpus, write_corpus
from .estimators import CorpusTransformer, IdiomMiner, IdiomSuggester, check_corpus
from .evaluation import (LiftMatrix, MatchReport, avg_matched_size, coverage, lift_matrix, match_fragment,
                         recall_at_rank_k, set_precision, suggest, suggestion_frequency)
from .generate import sample_tree_from_ptsg
from .grammar import Fragment, Pcfg, PriorParams, Production, estimate_pcfg, fragment_prior, sample_fragment_from_prior
from .idioms import Idiom, IdiomSet, contains_fragment, extract_idioms, render_template
from .sampler import (FragmentTable, PosteriorSample, SamplerState, gibbs_sweep, init_state, log_joint,
                      merge_probability, run_chain)
from .symbols import Symbol, SymbolTable
from .transforms import binarize, debinarize, prepare_corpus, prune_and_freeze, symbolize
from .trees import RawNode, SourceTree, TreeNode

__all__ = [
    "CorpusTransformer", "Fragment", "FragmentTable", "Idiom", "IdiomMiner", "IdiomSet", "IdiomSuggester",
    "LiftMatrix", "MatchReport", "Pcfg", "PosteriorSample", "PriorParams", "Production", "RawNode",
    "SamplerState", "SchemaError", "SourceTree", "Symbol", "SymbolTable", "TreeNode",
    "avg_matched_size", "binarize", "check_corpus", "contains_fragment", "coverage", "debinarize",
    "estimate_pcfg", "extract_idioms", "fragment_prior", "gibbs_sweep", "ingest_corpus", "init_state",
    "lift_matrix", "log_joint", "match_fragment", "merge_probability", "prepare_corpus", "prune_and_freeze",
    "recall_at_rank_k", "render_template", "run_chain", "sample_fragment_from_prior", "sample_tree_from_ptsg",
    "set_precision", "suggest", "suggestion_frequency", "symbolize", "write_corpus",
]
