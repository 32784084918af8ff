"""scikit-learn style front door to the mining pipeline."""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import demolang
from .evaluation import IndexedTree, coverage, lift_matrix, match_fragment, match_reports, recall_at_rank_k, suggest
from .grammar import PriorParams, estimate_pcfg
from .idioms import IdiomSet, extract_idioms
from .sampler import GibbsKernel, init_state, run_chain
from .symbols import SymbolTable
from .transforms import DEFAULT_FREEZE, DEFAULT_IMPORT_KINDS, DEFAULT_NAME_KINDS, transform_tree
from .trees import RawNode, SourceTree, TreeNode

DEFAULT_INIT = 0.0


def check_corpus(X, allow_raw: bool = True) -> list:
    """Normalise estimator input to a list of :class:`SourceTree`.

    Accepts source trees, bare raw or symbolized roots, and demo-language
    source strings (parsed on the fly).
    """
    if isinstance(X, (str, SourceTree, RawNode, TreeNode)):
        raise TypeError("expected a sequence of trees, got a single item")
    try:
        items = list(X)
    except TypeError:
        raise TypeError(f"expected a sequence of trees, got {type(X).__name__}") from None
    out = []
    for i, item in enumerate(items):
        if isinstance(item, SourceTree):
            tree = item
        elif isinstance(item, (RawNode, TreeNode)):
            tree = SourceTree(f"<tree {i}>", [], item)
        elif isinstance(item, str):
            tree = SourceTree(f"<source {i}>", [], demolang.parse_program(item))
        else:
            raise TypeError(f"item {i}: cannot interpret {type(item).__name__} as a tree")
        if isinstance(tree.root, RawNode) and not allow_raw:
            raise TypeError(f"item {i}: tree has not been transformed")
        out.append(tree)
    return out


def _is_raw(corpus) -> bool:
    return any(isinstance(t.root, RawNode) for t in corpus)


class CorpusTransformer(TransformerMixin, BaseEstimator):
    """Symbolize, add metavariables, prune imports, freeze and binarize.

    ``fit`` creates the symbol table; ``transform`` may be called on further
    corpora and keeps extending the same table.
    """

    def __init__(self, freeze_categories=DEFAULT_FREEZE, name_kinds=DEFAULT_NAME_KINDS,
                 import_kinds=DEFAULT_IMPORT_KINDS):
        self.freeze_categories = freeze_categories
        self.name_kinds = name_kinds
        self.import_kinds = import_kinds

    def fit(self, X, y=None):
        check_corpus(X)
        self.symbols_ = SymbolTable()
        return self

    def transform(self, X):
        check_is_fitted(self, "symbols_")
        out = []
        for tree in check_corpus(X):
            if not isinstance(tree.root, RawNode):
                out.append(tree)
                continue
            out.append(transform_tree(tree, self.symbols_, frozenset(self.freeze_categories),
                                      name_kinds=frozenset(self.name_kinds),
                                      import_kinds=frozenset(self.import_kinds)))
        return out


class IdiomMiner(BaseEstimator):
    """Mine idioms by Gibbs sampling a DP tree substitution grammar.

    ``fit`` takes a transformed corpus (raw trees and demo source are run
    through :class:`CorpusTransformer` first).  Chain ``c`` of ``n_chains``
    is seeded with ``random_state + c``; samples of all chains are pooled
    before extraction.
    """

    def __init__(self, alpha=1.0, p_stop=0.7, n_iter=100, burn_in=75, sample_every=1,
                 c_min=2, n_min=5, init=DEFAULT_INIT, scan="fixed", n_chains=1,
                 random_state=0, kernel=None):
        self.alpha = alpha
        self.p_stop = p_stop
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.sample_every = sample_every
        self.c_min = c_min
        self.n_min = n_min
        self.init = init
        self.scan = scan
        self.n_chains = n_chains
        self.random_state = random_state
        self.kernel = kernel

    def _validate(self):
        params = PriorParams(float(self.p_stop), float(self.alpha))
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError(f"need 0 <= burn_in < n_iter, got {self.burn_in} and {self.n_iter}")
        if self.n_chains < 1:
            raise ValueError("n_chains must be at least 1")
        if self.c_min < 1 or self.n_min < 1:
            raise ValueError("c_min and n_min must be positive")
        return params

    def config(self) -> dict:
        return {"alpha": float(self.alpha), "pstop": float(self.p_stop), "cmin": int(self.c_min),
                "nmin": int(self.n_min), "seed": self.random_state}

    def fit(self, X, y=None, symbols: Optional[SymbolTable] = None):
        params = self._validate()
        corpus = check_corpus(X)
        if not corpus:
            raise ValueError("cannot mine an empty corpus")
        if _is_raw(corpus):
            tf = CorpusTransformer().fit(corpus)
            if symbols is not None:
                tf.symbols_ = symbols
            corpus = tf.transform(corpus)
            symbols = tf.symbols_
        if symbols is None:
            symbols = _collect_symbols(corpus)
        self.symbols_ = symbols
        self.corpus_ = corpus
        self.pcfg_ = estimate_pcfg(corpus, symbols)
        kernel = self.kernel if self.kernel is not None else GibbsKernel(self.scan)
        self.states_, self.samples_ = [], []
        seed = 0 if self.random_state is None else int(self.random_state)
        for c in range(self.n_chains):
            state = init_state(corpus, self.pcfg_, params, seed=seed + c, init=self.init)
            self.samples_.extend(run_chain(state, self.n_iter, self.burn_in, self.sample_every, kernel))
            self.states_.append(state)
        self.idioms_ = extract_idioms(self.samples_, self.c_min, self.n_min, symbols, self.config())
        return self

    def transform(self, X):
        """Match counts, one row per file and one column per idiom."""
        check_is_fitted(self, "idioms_")
        corpus = self._prepare(X)
        out = np.zeros((len(corpus), len(self.idioms_)), dtype=np.int64)
        for r, tree in enumerate(corpus):
            idx = IndexedTree(tree)
            for c, idiom in enumerate(self.idioms_):
                out[r, c] = len(match_fragment(idiom.fragment, idx))
        return out

    def score(self, X, y=None) -> float:
        """Coverage of ``X`` by the mined idioms."""
        check_is_fitted(self, "idioms_")
        return coverage(self.idioms_, self._prepare(X))

    def _prepare(self, X):
        corpus = check_corpus(X)
        if _is_raw(corpus):
            tf = CorpusTransformer().fit(corpus)
            tf.symbols_ = self.symbols_
            corpus = tf.transform(corpus)
        return corpus


def _collect_symbols(corpus):
    found = {}
    for t in corpus:
        for n in t.root.walk():
            found[n.symbol.id] = n.symbol
    return found


class IdiomSuggester(BaseEstimator):
    """Suggest idioms for a file from its imports, via import/idiom lift.

    ``fit`` estimates the lift matrix on a transformed corpus whose files
    carry import lists.  ``predict`` maps import sets to ranked idiom ids.
    """

    def __init__(self, idioms=None, s_th=0.0, k=5):
        self.idioms = idioms
        self.s_th = s_th
        self.k = k

    def fit(self, X, y=None):
        if self.idioms is None:
            raise ValueError("IdiomSuggester needs an idiom set")
        corpus = check_corpus(X, allow_raw=False)
        reports = match_reports(self.idioms, corpus)
        self.lift_ = lift_matrix(self.idioms, corpus, reports=reports)
        if isinstance(self.idioms, IdiomSet):
            # mining-time file counts break score ties
            self.file_counts_ = {i: idiom.file_count for i, idiom in enumerate(self.idioms)}
        else:
            self.file_counts_ = {i: sum(1 for r in reports if i in r.locations) for i in range(len(self.lift_.idioms))}
        return self

    def predict(self, import_sets) -> list:
        check_is_fitted(self, "lift_")
        return [[t for t, _ in suggest(imps, self.lift_, self.s_th, self.file_counts_)] for imps in import_sets]

    def score(self, X, y=None) -> float:
        """Recall at rank ``k`` on a transformed corpus."""
        check_is_fitted(self, "lift_")
        corpus = check_corpus(X, allow_raw=False)
        ranked = self.predict([t.imports for t in corpus])
        relevant = [r.matched_idioms for r in match_reports(self.idioms, corpus)]
        return recall_at_rank_k(ranked, relevant, self.k)

