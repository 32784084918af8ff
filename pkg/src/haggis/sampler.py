"""Collapsed Gibbs sampling of fragment boundaries under a DP-pTSG.

Every internal node ``t`` carries a flag ``z_t``: 1 if ``t`` starts a new
fragment, 0 if it belongs to its parent's fragment.  The DP weights are
integrated out, so the state is just the ``z`` flags plus a table counting
how often each fragment occurs in the current segmentation.  Resampling
``z_t`` compares two segmentations that differ only around ``t``::

    P(z_t = 0) = Ppost(T_join) / (Ppost(T_join) + Ppost(T_s) Ppost(T_t))

with the posterior predictive

    Ppost(T) = (count(T) + alpha P0(T)) / (count(root(T)) + alpha)

where the counts exclude the fragments touching ``t`` and ``T_t`` is scored
after ``T_s`` has been added back, which makes the update the exact
conditional of the exchangeable joint.
"""
from __future__ import annotations

import json
import math
import os
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

from .grammar import Pcfg, PriorParams, estimate_pcfg, fragment_prior
from .trees import SourceTree

CHECKPOINT_VERSION = 1


class FragmentTable:
    """Occurrence counts of fragments and per-root-symbol totals."""

    def __init__(self):
        self.counts: dict = {}
        self.totals: dict = {}

    def add(self, key, n: int = 1):
        self.counts[key] = self.counts.get(key, 0) + n
        self.totals[key[0]] = self.totals.get(key[0], 0) + n

    def remove(self, key, n: int = 1):
        c = self.counts[key] - n
        if c < 0:
            raise ValueError("fragment count would become negative")
        if c:
            self.counts[key] = c
        else:
            del self.counts[key]
        t = self.totals[key[0]] - n
        if t:
            self.totals[key[0]] = t
        else:
            del self.totals[key[0]]

    def count(self, key) -> int:
        return self.counts.get(key, 0)

    def total(self, root: int) -> int:
        return self.totals.get(root, 0)

    def by_root(self) -> dict:
        out = {}
        for key in sorted(self.counts, key=repr):
            out.setdefault(key[0], []).append((key, self.counts[key]))
        return out

    def copy(self) -> "FragmentTable":
        new = FragmentTable()
        new.counts = dict(self.counts)
        new.totals = dict(self.totals)
        return new

    def __len__(self):
        return len(self.counts)

    def __eq__(self, other):
        if not isinstance(other, FragmentTable):
            return NotImplemented
        return self.counts == other.counts and self.totals == other.totals

    def __repr__(self):
        return f"FragmentTable({len(self.counts)} fragments, {sum(self.counts.values())} occurrences)"

    @classmethod
    def from_counts(cls, counts) -> "FragmentTable":
        table = cls()
        for key, n in counts.items():
            if n:
                table.add(key, n)
        return table


@dataclass
class PosteriorSample:
    """The corpus segmentation at one iteration."""

    iteration: int
    fragments: Counter
    files: dict = field(default_factory=dict)


def _parse_init(init):
    if init in ("boundaries", "all", "all-boundaries"):
        return 1.0
    if isinstance(init, (int, float)) and not isinstance(init, bool):
        q = float(init)
    elif isinstance(init, str) and init.startswith("bernoulli"):
        q = float(init.split(":", 1)[1] if ":" in init else init[len("bernoulli("):-1])
    else:
        raise ValueError(f"unknown init policy {init!r}")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"bernoulli init probability must lie in [0, 1], got {q}")
    return q


class SamplerState:
    """Flattened corpus, boundary flags and the fragment table of one chain.

    Nodes are numbered in pre-order, tree after tree.  ``z`` is kept for
    every node; terminal leaves permanently hold 1 so that "expand this
    child" is simply ``not z[child]``.
    """

    def __init__(self, corpus, pcfg: Pcfg, params: PriorParams, seed=0):
        self.corpus = list(corpus)
        self.pcfg = pcfg
        self.params = params
        self.seed = seed
        self.rng = random.Random(seed)
        self.iteration = 0
        self.table = FragmentTable()
        self._flatten()
        self._set_params(params)

    def _set_params(self, params):
        self.params = params
        self._alpha = params.alpha
        self._log_alpha = math.log(params.alpha)
        self._log_p = math.log(params.p_stop)
        self._log_q = math.log1p(-params.p_stop) if params.p_stop < 1.0 else -math.inf

    def _flatten(self):
        sym, kids, parent, nodes, tree_of, rule_lp, internal = [], [], [], [], [], [], []
        self.tree_offsets = []
        logprobs = self.pcfg.logprobs
        from .grammar import Production

        for ti, src in enumerate(self.corpus):
            root = src.root if isinstance(src, SourceTree) else src
            self.tree_offsets.append(len(sym))
            stack = [(root, -1)]
            while stack:
                node, par = stack.pop()
                i = len(sym)
                nodes.append(node)
                sym.append(node.symbol.id)
                parent.append(par)
                tree_of.append(ti)
                kids.append([])
                if par >= 0:
                    kids[par].append(i)
                internal.append(bool(node.children))
                if node.children:
                    rule = Production(node.symbol.id, tuple(c.symbol.id for c in node.children))
                    if rule not in logprobs:
                        raise ValueError(f"tree {ti} uses a production missing from the grammar")
                    rule_lp.append(logprobs[rule])
                else:
                    rule_lp.append(0.0)
                stack.extend((c, i) for c in reversed(node.children))
        self.tree_offsets.append(len(sym))
        self.sym = sym
        self.kids = [tuple(k) for k in kids]
        self.parent = parent
        self.nodes = nodes
        self.tree_of = tree_of
        self.rule_lp = rule_lp
        self.internal = internal
        n = len(sym)
        self.is_root = [parent[i] < 0 for i in range(n)]
        self.weight = [0 if nodes[i].symbol.role == "group" else 1 for i in range(n)]
        self.glued = [
            internal[i] and not self.is_root[i] and (nodes[i].frozen or nodes[i].symbol.role == "group")
            for i in range(n)
        ]
        self.eligible = [i for i in range(n) if internal[i] and not self.is_root[i] and not self.glued[i]]
        self.sweep_order = self._postorder()
        self.z = bytearray(n)

    def _postorder(self):
        order = []
        eligible = set(self.eligible)
        for ti in range(len(self.corpus)):
            stack = [(self.tree_offsets[ti], False)]
            while stack:
                i, done = stack.pop()
                if done:
                    if i in eligible:
                        order.append(i)
                    continue
                stack.append((i, True))
                stack.extend((c, False) for c in reversed(self.kids[i]))
        return order

    @property
    def n_nodes(self) -> int:
        return len(self.sym)

    # -- fragments -----------------------------------------------------------
    def _build(self, i, stop=-1, sub=None):
        """Key, prior size and summed rule log-prob of the fragment at ``i``.

        ``stop`` is treated as a frontier, or replaced by ``sub`` (a
        ``(key, n, logp)`` triple) when given.
        """
        sym, kids, z, rule_lp, weight = self.sym, self.kids, self.z, self.rule_lp, self.weight

        def rec(i):
            parts = [sym[i]]
            n = weight[i]
            lp = rule_lp[i]
            for c in kids[i]:
                if c == stop:
                    if sub is None:
                        parts.append(sym[c])
                    else:
                        parts.append(sub[0])
                        n += sub[1]
                        lp += sub[2]
                elif z[c]:
                    parts.append(sym[c])
                else:
                    k, m, l = rec(c)
                    parts.append(k)
                    n += m
                    lp += l
            return tuple(parts), n, lp

        return rec(i)

    def fragment_root(self, i: int) -> int:
        z, parent = self.z, self.parent
        while not z[i]:
            i = parent[i]
        return i

    def fragment_key(self, i: int) -> tuple:
        """Key of the fragment rooted at internal node ``i``."""
        return self._build(i)[0]

    def segmentation(self):
        """Yield ``(tree index, node index, key)`` for every fragment."""
        for i in range(len(self.sym)):
            if self.internal[i] and self.z[i]:
                yield self.tree_of[i], i, self._build(i)[0]

    def recount(self) -> FragmentTable:
        table = FragmentTable()
        for _, _, key in self.segmentation():
            table.add(key)
        return table

    def snapshot(self) -> PosteriorSample:
        frags = Counter()
        files = {}
        for ti, _, key in self.segmentation():
            frags[key] += 1
            files.setdefault(key, set()).add(ti)
        return PosteriorSample(self.iteration, frags, {k: frozenset(v) for k, v in files.items()})

    def write_back(self):
        """Copy the flat ``z`` flags onto the corpus TreeNodes."""
        for i, node in enumerate(self.nodes):
            node.z = bool(self.z[i]) if self.internal[i] else False

    def z_config(self) -> tuple:
        return tuple(self.z[i] for i in self.eligible)

    # -- conditional ---------------------------------------------------------
    def _log_post(self, key, n, lp, extra_count=0, extra_total=0):
        counts, totals = self.table.counts, self.table.totals
        lp0 = (self._log_p + (n - 1) * self._log_q if n > 1 else self._log_p) + lp
        a = self._log_alpha + lp0
        c = counts.get(key, 0) + extra_count
        if c:
            lc = math.log(c)
            a = lc + math.log1p(math.exp(a - lc)) if lc >= a else a + math.log1p(math.exp(lc - a))
        return a - math.log(totals.get(key[0], 0) + extra_total + self._alpha)

    def _pieces(self, t):
        r = self.fragment_root(self.parent[t])
        frag_t = self._build(t)
        frag_s = self._build(r, t)
        frag_j = self._build(r, t, frag_t)
        return frag_j, frag_s, frag_t

    def _join_probability(self, frag_j, frag_s, frag_t):
        lj = self._log_post(*frag_j)
        ls = self._log_post(*frag_s)
        same_key = 1 if frag_t[0] == frag_s[0] else 0
        same_root = 1 if frag_t[0][0] == frag_s[0][0] else 0
        lt = self._log_post(*frag_t, same_key, same_root)
        d = ls + lt - lj
        if d > 700.0:
            return 0.0
        return 1.0 / (1.0 + math.exp(d))

    def exclude(self, t):
        """Remove the fragments containing ``t`` and its parent from the table."""
        frag_j, frag_s, frag_t = self._pieces(t)
        if self.z[t]:
            self.table.remove(frag_s[0])
            self.table.remove(frag_t[0])
        else:
            self.table.remove(frag_j[0])
        return frag_j, frag_s, frag_t

    def include(self, t, pieces=None):
        frag_j, frag_s, frag_t = pieces or self._pieces(t)
        if self.z[t]:
            self.table.add(frag_s[0])
            self.table.add(frag_t[0])
        else:
            self.table.add(frag_j[0])

    def resample(self, t):
        pieces = self.exclude(t)
        p_join = self._join_probability(*pieces)
        self.z[t] = 0 if self.rng.random() < p_join else 1
        self.include(t, pieces)

    # -- persistence ---------------------------------------------------------
    def checkpoint(self, **extra) -> dict:
        state = self.rng.getstate()
        z_trees = []
        for ti in range(len(self.corpus)):
            lo, hi = self.tree_offsets[ti], self.tree_offsets[ti + 1]
            z_trees.append("".join("1" if self.z[i] else "0" for i in range(lo, hi)))
        return {
            "version": CHECKPOINT_VERSION,
            "seed": self.seed,
            "iteration": self.iteration,
            "params": {"alpha": self.params.alpha, "pstop": self.params.p_stop},
            "rng_state": [state[0], list(state[1]), state[2]],
            "z": z_trees,
            **extra,
        }

    def restore(self, ckpt: dict):
        if ckpt.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unknown checkpoint version {ckpt.get('version')!r}")
        if len(ckpt["z"]) != len(self.corpus):
            raise ValueError("checkpoint and corpus disagree on the number of trees")
        for ti, bits in enumerate(ckpt["z"]):
            lo, hi = self.tree_offsets[ti], self.tree_offsets[ti + 1]
            if len(bits) != hi - lo:
                raise ValueError(f"checkpoint tree {ti} has {len(bits)} nodes, corpus has {hi - lo}")
            for j, b in enumerate(bits):
                self.z[lo + j] = b == "1"
        self.seed = ckpt["seed"]
        self.iteration = ckpt["iteration"]
        s = ckpt["rng_state"]
        self.rng.setstate((s[0], tuple(s[1]), s[2]))
        self._set_params(PriorParams(ckpt["params"]["pstop"], ckpt["params"]["alpha"]))
        self.table = self.recount()
        return self


def init_state(corpus, pcfg: Optional[Pcfg] = None, params: Optional[PriorParams] = None,
               seed=0, init="boundaries") -> SamplerState:
    """Set the initial boundaries and fill the fragment table by a full scan.

    ``init`` is ``"boundaries"`` (every eligible node starts a fragment) or a
    Bernoulli probability given as a float or ``"bernoulli:q"``.
    """
    pcfg = estimate_pcfg(corpus) if pcfg is None else pcfg
    params = PriorParams() if params is None else params
    q = _parse_init(init)
    state = SamplerState(corpus, pcfg, params, seed)
    z = state.z
    for i in range(state.n_nodes):
        if not state.internal[i] or state.is_root[i]:
            z[i] = 1
    if q >= 1.0:
        for i in state.eligible:
            z[i] = 1
    elif q > 0.0:
        rand = state.rng.random
        for i in state.eligible:
            z[i] = 1 if rand() < q else 0
    state.table = state.recount()
    return state


def log_rising(log_a: float, n: int) -> float:
    """log of a (a+1) ... (a+n-1), stable for tiny ``a = exp(log_a)``."""
    if n == 0:
        return 0.0
    if log_a < -30.0:
        # a is negligible next to 1; the product is a (n-1)! up to O(a)
        return log_a + math.lgamma(n)
    a = math.exp(log_a)
    return math.lgamma(a + n) - math.lgamma(a)


def log_joint(table: FragmentTable, pcfg: Pcfg, params: PriorParams) -> float:
    """Exact log-probability of a segmentation with the DP weights integrated out.

    Per root symbol ``X`` with ``N`` fragments, the exchangeable joint is
    ``prod_T rising(alpha P0(T), n_T) / rising(alpha, N)``; it equals any
    ordering of sequential predictive draws.
    """
    total = 0.0
    for root, entries in table.by_root().items():
        n_root = 0
        for key, n in entries:
            total += log_rising(math.log(params.alpha) + fragment_prior(key, pcfg, params), n)
            n_root += n
        total -= math.lgamma(params.alpha + n_root) - math.lgamma(params.alpha)
    return total


def merge_probability(state: SamplerState, t: int) -> float:
    """P(z_t = 0) given the table, which must already exclude ``t``'s fragments.

    Use :meth:`SamplerState.exclude` / :meth:`SamplerState.include` around
    the call when inspecting a live chain.
    """
    if t not in set(state.eligible):
        raise ValueError(f"node {t} is not eligible for resampling")
    return state._join_probability(*state._pieces(t))


def gibbs_sweep(state: SamplerState, scan: str = "fixed") -> SamplerState:
    """Resample every eligible node once.

    ``scan="fixed"`` visits nodes tree by tree in post-order;
    ``scan="random"`` shuffles the visiting order each sweep.
    """
    order = state.sweep_order
    if scan == "random":
        order = list(order)
        state.rng.shuffle(order)
    elif scan != "fixed":
        raise ValueError(f"unknown scan order {scan!r}")
    resample = state.resample
    for t in order:
        resample(t)
    state.iteration += 1
    return state


class GibbsKernel:
    """Transition kernel doing one full Gibbs sweep per call.

    ``run_chain`` accepts any callable taking the state, so other kernels
    (blocked or type-based moves) can be dropped in.
    """

    def __init__(self, scan: str = "fixed"):
        self.scan = scan

    def __call__(self, state: SamplerState) -> SamplerState:
        return gibbs_sweep(state, self.scan)


def run_chain(state: SamplerState, iterations: int, burn_in: int, sample_every: int = 1,
              kernel: Optional[Callable] = None, callback=None) -> list:
    """Sweep until ``state.iteration == iterations``; keep post-burn-in samples.

    Samples are taken after iterations ``k`` with ``burn_in < k <= iterations``
    and ``(k - burn_in) % sample_every == 0``.  A restored state resumes
    from its stored iteration.
    """
    if not 0 <= burn_in < iterations:
        raise ValueError(f"need 0 <= burn_in < iterations, got {burn_in} and {iterations}")
    if sample_every < 1:
        raise ValueError("sample_every must be at least 1")
    kernel = GibbsKernel() if kernel is None else kernel
    samples = []
    while state.iteration < iterations:
        kernel(state)
        k = state.iteration
        if k > burn_in and (k - burn_in) % sample_every == 0:
            samples.append(state.snapshot())
        if callback is not None:
            callback(state)
    state.write_back()
    return samples


def save_checkpoint(state: SamplerState, path, **extra):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(state.checkpoint(**extra), fh)
    os.replace(tmp, path)


def load_checkpoint(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
