"""Draw synthetic trees from a posterior pTSG.

Each frontier nonterminal ``X`` is expanded with a fragment from the DP
posterior predictive: an already seen fragment rooted at ``X`` with
probability ``count / (total(X) + alpha)``, or a fresh draw from the prior
with probability ``alpha / (total(X) + alpha)``.  Past ``max_depth`` the
expansion falls back to plain greedy CFG rules that terminate fastest.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .grammar import Pcfg, PriorParams, sample_fragment_from_prior
from .sampler import FragmentTable
from .trees import SourceTree, TreeNode

DEFAULT_MAX_DEPTH = 40


def termination_rules(pcfg: Pcfg) -> dict:
    """For every nonterminal, the rule used once the depth cap is reached.

    Rules whose right-hand side is all terminals win (highest probability
    first); otherwise the rule with the smallest derivation height.
    """
    height = {}
    changed = True
    while changed:
        changed = False
        for lhs, rules in pcfg.by_lhs.items():
            for r in rules:
                hs = [height.get(s, math.inf) if pcfg.is_nonterminal(s) else 0 for s in r.rhs]
                h = 1 + max(hs, default=0)
                if h < height.get(lhs, math.inf):
                    height[lhs] = h
                    changed = True
    best = {}
    for lhs, rules in pcfg.by_lhs.items():
        def rank(r):
            h = 1 + max((height.get(s, math.inf) if pcfg.is_nonterminal(s) else 0 for s in r.rhs), default=0)
            return (h, -pcfg.probs[r], r)
        best[lhs] = min(rules, key=rank)
    return best


class PtsgSampler:
    """Reusable generator over a fixed table, grammar and prior."""

    def __init__(self, table: FragmentTable, pcfg: Pcfg, params: PriorParams,
                 max_depth: int = DEFAULT_MAX_DEPTH):
        self.pcfg = pcfg
        self.params = params
        self.max_depth = max_depth
        self.fallback = termination_rules(pcfg)
        self.choices = {}
        for root, entries in table.by_root().items():
            keys = [k for k, _ in entries]
            cum = np.cumsum([c for _, c in entries], dtype=float)
            self.choices[root] = (keys, cum)

    def draw_fragment(self, sym: int, rng) -> tuple:
        keys, cum = self.choices.get(sym, ((), None))
        total = cum[-1] if keys else 0.0
        u = rng.random() * (total + self.params.alpha)
        if u < total:
            return keys[int(np.searchsorted(cum, u, side="right"))]
        return sample_fragment_from_prior(sym, self.pcfg, self.params, rng).key

    def tree(self, rng, root: Optional[int] = None) -> TreeNode:
        root = self.pcfg.start if root is None else root
        symbols = self.pcfg.symbols
        top = TreeNode(symbols[root], z=True)
        # (node, depth) pairs whose children still need to be filled in
        pending = [(top, 0)]
        while pending:
            node, depth = pending.pop()
            sid = node.symbol.id
            if depth >= self.max_depth:
                rule = self.fallback[sid]
                node.children = [TreeNode(symbols[s], leaf_text=_text(symbols[s])) for s in rule.rhs]
                pending.extend((c, depth + 1) for c in node.children if self.pcfg.is_nonterminal(c.symbol.id))
                continue
            key = self.draw_fragment(sid, rng)
            self._instantiate(node, key, depth, pending)
        return top

    def _instantiate(self, node, key, depth, pending):
        symbols = self.pcfg.symbols
        for c in key[1:]:
            if type(c) is tuple:
                child = TreeNode(symbols[c[0]])
                node.children.append(child)
                self._instantiate(child, c, depth + 1, pending)
            else:
                child = TreeNode(symbols[c], leaf_text=_text(symbols[c]))
                node.children.append(child)
                if self.pcfg.is_nonterminal(c):
                    child.z = True
                    pending.append((child, depth + 1))


def _text(sym):
    return sym.kind if sym.role == "token" else None


def sample_tree_from_ptsg(table: FragmentTable, pcfg: Pcfg, params: PriorParams, rng,
                          max_depth: int = DEFAULT_MAX_DEPTH, root: Optional[int] = None,
                          path: str = "<sample>") -> SourceTree:
    """Generate one tree; see the module docstring for the process."""
    rng = np.random.default_rng(rng) if not hasattr(rng, "random") else rng
    return SourceTree(path, [], PtsgSampler(table, pcfg, params, max_depth).tree(rng, root))
