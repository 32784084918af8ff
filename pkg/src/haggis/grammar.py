"""Base PCFG, tree fragments and the geometric fragment prior.

Fragments are stored as nested tuples of symbol ids::

    (E, (T, F, "*", F), "+", T)   # with ids in place of the names

An expanded node is a tuple ``(symbol, *children)``; a bare int child is a
leaf of the fragment, either a terminal or a nonterminal frontier (a
metavariable slot).  The tuple is hashable, which makes it directly usable as
a count-table key.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional

import numpy as np

from .symbols import Symbol, SymbolTable
from .trees import SourceTree, TreeNode

DEFAULT_P_STOP = 0.7
DEFAULT_ALPHA = 1.0


class Production(NamedTuple):
    lhs: int
    rhs: tuple


@dataclass(frozen=True)
class PriorParams:
    """Stop probability of the geometric size prior and DP concentration."""

    p_stop: float = DEFAULT_P_STOP
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not 0.0 < self.p_stop <= 1.0:
            raise ValueError(f"p_stop must lie in (0, 1], got {self.p_stop}")
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


def log_geometric(n: int, p: float) -> float:
    """log of p (1-p)^(n-1), support n >= 1."""
    if n < 1:
        return -math.inf
    if n == 1:
        return math.log(p)
    if p >= 1.0:
        return -math.inf
    return math.log(p) + (n - 1) * math.log1p(-p)


# -- fragments ---------------------------------------------------------------

def iter_productions(key) -> Iterable[Production]:
    stack = [key]
    while stack:
        node = stack.pop()
        stack.extend(c for c in node[1:] if type(c) is tuple)
        yield Production(node[0], tuple(c[0] if type(c) is tuple else c for c in node[1:]))


def fragment_size(key) -> int:
    """Number of productions (internal nodes) in a fragment."""
    return 1 + sum(fragment_size(c) for c in key[1:] if type(c) is tuple)


def is_glued_symbol(sym) -> bool:
    """Property-group heads are part of their parent's rule, never a size unit."""
    return getattr(sym, "role", None) == "group"


def prior_size(key, symbols: Optional[Mapping[int, Symbol]] = None) -> int:
    """Size used by the geometric prior: productions not headed by a group."""
    if not symbols:
        return fragment_size(key)
    n = 0 if is_glued_symbol(symbols.get(key[0])) else 1
    return n + sum(prior_size(c, symbols) for c in key[1:] if type(c) is tuple)


def fragment_leaves(key) -> list:
    out = []
    for c in key[1:]:
        if type(c) is tuple:
            out.extend(fragment_leaves(c))
        else:
            out.append(c)
    return out


@dataclass(frozen=True)
class Fragment:
    """A connected piece of a parse tree; see the module docstring for ``key``."""

    key: tuple

    @property
    def root(self) -> int:
        return self.key[0]

    @property
    def size(self) -> int:
        return fragment_size(self.key)

    def productions(self) -> list:
        return list(iter_productions(self.key))

    def frontier(self, symbols: Mapping[int, Symbol]) -> list:
        """Nonterminal leaves, i.e. the metavariable slots."""
        return [s for s in fragment_leaves(self.key) if not symbols[s].is_terminal]

    def node_count(self, symbols: Mapping[int, Symbol]) -> int:
        """Nodes the fragment pins down: expanded nodes plus terminal leaves.

        Frontier slots and encoding artifacts (group heads, binarization
        dummies) are not counted.
        """
        return _count_nodes(self.key, symbols)

    def to_tree(self, symbols: Mapping[int, Symbol]) -> TreeNode:
        """Tree view of the fragment; frontier nonterminals have no children."""
        return _key_to_tree(self.key, symbols)

    def to_json(self, symbols: Mapping[int, Symbol]):
        return _key_to_json(self.key, symbols)

    @classmethod
    def from_json(cls, obj, table: SymbolTable) -> "Fragment":
        return cls(_key_from_json(obj, table))

    @classmethod
    def from_tree(cls, node: TreeNode) -> "Fragment":
        """Fragment rooted at ``node``, following ``z`` flags below it."""
        return cls(tree_fragment_key(node))

    def format(self, symbols: Mapping[int, Symbol]) -> str:
        return _format_key(self.key, symbols)


def _count_nodes(key, symbols):
    n = 0 if symbols[key[0]].is_dummy else 1
    for c in key[1:]:
        if type(c) is tuple:
            n += _count_nodes(c, symbols)
        elif symbols[c].is_terminal:
            n += 1
    return n


def _key_to_tree(key, symbols):
    kids = []
    for c in key[1:]:
        if type(c) is tuple:
            kids.append(_key_to_tree(c, symbols))
        else:
            sym = symbols[c]
            kids.append(TreeNode(sym, leaf_text=sym.kind if sym.role == "token" else None))
    return TreeNode(symbols[key[0]], kids)


def _key_to_json(key, symbols):
    if type(key) is not tuple:
        return symbols[key].text
    return [symbols[key[0]].text] + [_key_to_json(c, symbols) for c in key[1:]]


def _key_from_json(obj, table):
    if isinstance(obj, str):
        return table.by_text(obj).id
    return (table.by_text(obj[0]).id,) + tuple(_key_from_json(c, table) for c in obj[1:])


def _format_key(key, symbols):
    if type(key) is not tuple:
        return symbols[key].text
    return "(" + " ".join(_format_key(k, symbols) if i else symbols[k].text for i, k in enumerate(key)) + ")"


def tree_fragment_key(node: TreeNode) -> tuple:
    parts = [node.symbol.id]
    for child in node.children:
        if child.children and not child.z:
            parts.append(tree_fragment_key(child))
        else:
            parts.append(child.symbol.id)
    return tuple(parts)


# -- PCFG --------------------------------------------------------------------

@dataclass
class Pcfg:
    """Maximum-likelihood PCFG: rule counts, P(r | lhs) and the start symbol."""

    counts: dict
    start: int
    symbols: Mapping[int, Symbol] = field(default_factory=dict)

    def __post_init__(self):
        totals = Counter()
        for rule, c in self.counts.items():
            if c <= 0:
                raise ValueError(f"rule count must be positive: {rule}")
            totals[rule.lhs] += c
        self.lhs_totals = dict(totals)
        self.probs = {r: c / totals[r.lhs] for r, c in self.counts.items()}
        self.logprobs = {r: math.log(p) for r, p in self.probs.items()}
        by_lhs = defaultdict(list)
        for r in sorted(self.counts):
            by_lhs[r.lhs].append(r)
        self.by_lhs = dict(by_lhs)
        self._choice = {
            lhs: (rules, np.cumsum([self.probs[r] for r in rules]))
            for lhs, rules in self.by_lhs.items()
        }

    def __contains__(self, rule):
        return rule in self.counts

    @property
    def nonterminals(self):
        return set(self.by_lhs)

    def prob(self, rule: Production) -> float:
        return self.probs.get(rule, 0.0)

    def is_nonterminal(self, sym: int) -> bool:
        return sym in self.by_lhs

    def draw_rule(self, lhs: int, rng) -> Production:
        rules, cdf = self._choice[lhs]
        i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return rules[min(i, len(rules) - 1)]

    def is_valid_tree(self, node: TreeNode) -> bool:
        """True if every internal node uses a rule of this grammar."""
        for n in node.walk():
            if n.children:
                if Production(n.symbol.id, tuple(c.symbol.id for c in n.children)) not in self.counts:
                    return False
            elif n.symbol.id in self.by_lhs and not n.symbol.is_terminal:
                return False
        return True

    def to_json(self) -> dict:
        ids = sorted({r.lhs for r in self.counts} | {s for r in self.counts for s in r.rhs} | {self.start})
        return {
            "symbols": [{"id": i, "text": self.symbols[i].text} for i in ids],
            "rules": [
                {"lhs": r.lhs, "rhs": list(r.rhs), "count": self.counts[r], "prob": self.probs[r]}
                for r in sorted(self.counts)
            ],
            "start": self.start,
        }

    @classmethod
    def from_json(cls, obj, table: Optional[SymbolTable] = None) -> "Pcfg":
        """Load a grammar, re-registering its symbols in ``table``.

        Probabilities are re-derived from the stored counts.
        """
        table = SymbolTable() if table is None else table
        remap = {s["id"]: table.by_text(s["text"]).id for s in obj["symbols"]}
        counts = {
            Production(remap[r["lhs"]], tuple(remap[x] for x in r["rhs"])): int(r["count"])
            for r in obj["rules"]
        }
        return cls(counts, remap[obj["start"]], table)


def _as_root(tree):
    return tree.root if isinstance(tree, SourceTree) else tree


def estimate_pcfg(corpus, symbols: Optional[Mapping[int, Symbol]] = None) -> Pcfg:
    """Count every internal node's production and normalise per left-hand side.

    The start symbol is the most frequent root symbol.
    """
    roots = [_as_root(t) for t in corpus]
    if not roots:
        raise ValueError("cannot estimate a grammar from an empty corpus")
    counts = Counter()
    found = {}
    for root in roots:
        for node in root.walk():
            found[node.symbol.id] = node.symbol
            if node.children:
                counts[Production(node.symbol.id, tuple(c.symbol.id for c in node.children))] += 1
    if not counts:
        raise ValueError("corpus contains no internal nodes")
    starts = Counter(r.symbol.id for r in roots)
    start = min(starts, key=lambda s: (-starts[s], s))
    return Pcfg(dict(counts), start, symbols if symbols is not None else found)


# -- prior -------------------------------------------------------------------

def fragment_prior(frag, pcfg: Pcfg, params: PriorParams) -> float:
    """log P0(T) = log Pgeom(|T|; p_stop) + sum of log P_ML(r) over T's rules.

    ``|T|`` skips property-group productions (see :func:`prior_size`).
    """
    key = frag.key if isinstance(frag, Fragment) else frag
    total = 0.0
    for rule in iter_productions(key):
        lp = pcfg.logprobs.get(rule)
        if lp is None:
            raise KeyError(f"production {rule} not in grammar")
        total += lp
    return log_geometric(prior_size(key, pcfg.symbols), params.p_stop) + total


def sample_fragment_from_prior(root: int, pcfg: Pcfg, params: PriorParams, rng,
                               max_tries: int = 1000) -> Fragment:
    """Draw a fragment whose size is Geometric(p_stop) and rules follow P_ML.

    The target size is drawn first; the fragment then grows from ``root`` by
    expanding a uniformly chosen frontier nonterminal with a rule drawn from
    P_ML.  If the growth runs out of frontier before reaching the target, the
    shape is redrawn (up to ``max_tries`` times, after which the largest
    attempt is returned).
    """
    if not pcfg.is_nonterminal(root):
        raise ValueError(f"cannot grow a fragment from terminal symbol {root}")
    rng = np.random.default_rng(rng) if not hasattr(rng, "random") else rng
    target = int(rng.geometric(params.p_stop)) if params.p_stop < 1.0 else 1
    # no amount of redrawing reaches a size the grammar cannot produce
    target = min(target, max_fragment_sizes(pcfg)[root])
    best = None
    for _ in range(max_tries):
        tree, size = _grow(root, target, pcfg, rng)
        if size == target:
            return Fragment(tree)
        if best is None or size > best[1]:
            best = (tree, size)
    return Fragment(best[0])


def max_fragment_sizes(pcfg: Pcfg) -> dict:
    """Largest prior size of any fragment rooted at each nonterminal (inf if unbounded)."""
    cached = getattr(pcfg, "_max_sizes", None)
    if cached is not None:
        return cached
    glued = {s for s in pcfg.by_lhs if is_glued_symbol(pcfg.symbols.get(s))}
    out = {}
    active = set()

    def size(x):
        if x in out:
            return out[x]
        if x in active:
            return math.inf
        active.add(x)
        best = 0
        for rule in pcfg.by_lhs[x]:
            best = max(best, sum(size(c) for c in rule.rhs if pcfg.is_nonterminal(c)))
        active.discard(x)
        out[x] = best + (0 if x in glued else 1)
        return out[x]

    for x in pcfg.by_lhs:
        size(x)
    pcfg._max_sizes = out
    return out


def _grow(root, target, pcfg, rng):
    glued = {s for s in pcfg.by_lhs if is_glued_symbol(pcfg.symbols.get(s))}
    top = [root]
    frontier = [(None, 0, root)]
    size = 0

    def expand(parent, idx, sym):
        rule = pcfg.draw_rule(sym, rng)
        node = [sym] + list(rule.rhs)
        if parent is not None:
            parent[idx] = node
        for i, child in enumerate(rule.rhs, start=1):
            if child in glued:
                expand(node, i, child)
            elif pcfg.is_nonterminal(child):
                frontier.append((node, i, child))
        return node

    while size < target and frontier:
        parent, idx, sym = frontier.pop(int(rng.integers(len(frontier))))
        node = expand(parent, idx, sym)
        if parent is None:
            top = node
        size += 0 if sym in glued else 1

    def freeze(n):
        return tuple(freeze(c) if isinstance(c, list) else c for c in n)

    return freeze(top), size
