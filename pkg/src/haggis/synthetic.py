"""Small synthetic grammars and corpora for calibration and recovery checks.

Two grammars live here.  ``ARITH`` is the textbook expression grammar::

    E -> T + T  0.7     T -> F * F  0.6     F -> ( E )  0.1
    E -> T      0.3     T -> F      0.4     F -> id     0.9

``STMT`` is a toy statement language used for planted-idiom experiments.
Trees are built straight from :class:`TreeNode` objects; terminals are
token symbols, so no demo-language machinery is involved.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grammar import Pcfg, Production
from .symbols import SymbolTable
from .trees import SourceTree, TreeNode

# (lhs, rhs, weight); lower-case or punctuation symbols are terminals
ARITH = (
    ("E", ("T", "+", "T"), 7),
    ("E", ("T",), 3),
    ("T", ("F", "*", "F"), 6),
    ("T", ("F",), 4),
    ("F", ("(", "E", ")"), 1),
    ("F", ("id",), 9),
)

STMT = (
    ("S", ("Stmt", "S"), 75),
    ("S", ("Stmt",), 25),
    ("Stmt", ("Call",), 55),
    ("Stmt", ("Assign",), 34),
    ("Stmt", ("If",), 10),
    ("Stmt", ("Try",), 1),
    ("Call", ("f", "Expr"), 50),
    ("Call", ("g", "Expr"), 50),
    ("Call", ("open", "Expr"), 0),
    ("Call", ("close",), 0),
    ("Assign", ("Name", "Expr"), 100),
    ("If", ("Expr", "Stmt"), 100),
    ("Try", ("Stmt", "Stmt"), 100),
    ("Expr", ("Name",), 50),
    ("Expr", ("num",), 30),
    ("Expr", ("Call",), 20),
    ("Name", ("a",), 25),
    ("Name", ("b",), 25),
    ("Name", ("c",), 25),
    ("Name", ("d",), 25),
)

# six productions, nine nodes, no slots
PLANTED = ("Try", ("Stmt", ("Call", "open", ("Expr", "num"))), ("Stmt", ("Call", "close")))


@dataclass
class ToyGrammar:
    rules: tuple
    table: SymbolTable

    def __post_init__(self):
        self.nonterminals = {lhs for lhs, _, _ in self.rules}
        for lhs, rhs, _ in self.rules:
            self.sym(lhs)
            for s in rhs:
                self.sym(s)
        self.by_lhs = {}
        for lhs, rhs, w in self.rules:
            self.by_lhs.setdefault(lhs, []).append((rhs, w))

    def sym(self, name: str):
        role = "node" if name in self.nonterminals else "token"
        return self.table.intern(name, role=role)

    def pcfg(self) -> Pcfg:
        counts = {Production(self.sym(l).id, tuple(self.sym(s).id for s in r)): w for l, r, w in self.rules if w}
        return Pcfg(counts, self.sym(self.rules[0][0]).id, self.table)

    def node(self, name, children=()) -> TreeNode:
        sym = self.sym(name)
        return TreeNode(sym, list(children), leaf_text=None if name in self.nonterminals else name)

    def key(self, spec) -> tuple:
        """Fragment key for a nested ``(name, *children)`` spec."""
        if isinstance(spec, str):
            return self.sym(spec).id
        return (self.sym(spec[0]).id,) + tuple(self.key(c) for c in spec[1:])

    def generate(self, name: str, rng, max_depth: int = 30, depth: int = 0) -> TreeNode:
        if name not in self.nonterminals:
            return self.node(name)
        options = self.by_lhs[name]
        if depth >= max_depth:
            rhs = min(options, key=lambda o: sum(s in self.nonterminals for s in o[0]))[0]
        else:
            w = np.array([o[1] for o in options], dtype=float)
            rhs = options[int(rng.choice(len(options), p=w / w.sum()))][0]
        return self.node(name, [self.generate(s, rng, max_depth, depth + 1) for s in rhs])

    def instantiate(self, spec, rng) -> TreeNode:
        """Tree for a fragment spec, with slots filled from the grammar."""
        if isinstance(spec, str):
            return self.generate(spec, rng)
        return self.node(spec[0], [self.instantiate(c, rng) for c in spec[1:]])


def arith_grammar(table: Optional[SymbolTable] = None) -> ToyGrammar:
    return ToyGrammar(ARITH, SymbolTable() if table is None else table)


def stmt_grammar(table: Optional[SymbolTable] = None) -> ToyGrammar:
    return ToyGrammar(STMT, SymbolTable() if table is None else table)


def arith_corpus(scale: int = 1, seed: int = 0, table: Optional[SymbolTable] = None):
    """Complete derivation trees whose rule counts are exactly 7:3, 6:4 and 1:9.

    With ``e = 250 * scale`` E nodes the balance equations give integral
    counts for every rule and ``182 * scale`` trees rooted at E.  Rules are
    handed out in random order from the fixed pool, so tree shapes vary with
    ``seed`` but the counts never do.
    """
    g = arith_grammar(table)
    e = 250 * scale
    pool = {
        ("E", ("T", "+", "T")): 175 * scale,
        ("E", ("T",)): 75 * scale,
        ("T", ("F", "*", "F")): 255 * scale,
        ("T", ("F",)): 170 * scale,
        ("F", ("(", "E", ")")): 68 * scale,
        ("F", ("id",)): 612 * scale,
    }
    n_roots = e - pool[("F", ("(", "E", ")"))]
    rng = np.random.default_rng(seed)
    roots = [TreeNode(g.sym("E")) for _ in range(n_roots)]
    pending = list(roots)
    while pending:
        node = pending.pop(int(rng.integers(len(pending))))
        name = node.symbol.kind
        options = [(rhs, pool[(lhs, rhs)]) for lhs, rhs in pool if lhs == name and pool[(lhs, rhs)] > 0]
        w = np.array([c for _, c in options], dtype=float)
        rhs = options[int(rng.choice(len(options), p=w / w.sum()))][0]
        pool[(name, rhs)] -= 1
        for s in rhs:
            child = g.node(s)
            node.children.append(child)
            if s in g.nonterminals:
                pending.append(child)
    if any(pool.values()):
        raise AssertionError("rule pool not exhausted")
    for r in roots:
        r.z = True
    return [SourceTree(f"arith/{i}", [], r) for i, r in enumerate(roots)], g


@dataclass
class PlantedCorpus:
    trees: list
    grammar: ToyGrammar
    planted: tuple          # fragment key of the planted idiom
    planted_in: frozenset   # indices of trees carrying it


def planted_corpus(n_trees: int = 200, rate: float = 0.3, seed: int = 0,
                   spec=PLANTED, table: Optional[SymbolTable] = None) -> PlantedCorpus:
    """Statement-grammar trees with a fixed fragment planted in ``rate`` of them.

    Each carrier tree gets one extra statement at a random position of its
    top-level statement chain, holding the fragment (below a ``Stmt`` node
    when the fragment is not itself rooted at ``Stmt``); the fragment's
    slots are filled from the grammar.
    """
    g = stmt_grammar(table)
    rng = np.random.default_rng(seed)
    n_planted = int(round(rate * n_trees))
    carriers = frozenset(int(i) for i in rng.choice(n_trees, size=n_planted, replace=False))
    trees = []
    for i in range(n_trees):
        root = g.generate("S", rng)
        if i in carriers:
            stmts = []
            node = root
            while True:
                stmts.append(node.children[0])
                if len(node.children) == 1:
                    break
                node = node.children[1]
            planted = g.instantiate(spec, rng)
            if spec[0] != "Stmt":
                planted = g.node("Stmt", [planted])
            stmts.insert(int(rng.integers(len(stmts) + 1)), planted)
            root = _chain(g, stmts)
        root.z = True
        trees.append(SourceTree(f"planted/{i}", [], root))
    return PlantedCorpus(trees, g, g.key(spec), carriers)


def _chain(g, stmts):
    node = g.node("S", [stmts[-1]])
    for s in reversed(stmts[:-1]):
        node = g.node("S", [s, node])
    return node


def rule_counts(trees) -> Counter:
    out = Counter()
    for t in trees:
        root = t.root if isinstance(t, SourceTree) else t
        for n in root.walk():
            if n.children:
                out[(n.symbol.kind, tuple(c.symbol.kind for c in n.children))] += 1
    return out
