"""Fragment matching and the corpus-level idiom metrics.

Node counts everywhere skip property-group heads and binarization dummies,
and a match covers the nodes its idiom pins down: internal nodes and
terminal leaves, but not the subtrees plugged into its nonterminal slots.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .grammar import Fragment
from .trees import SourceTree, TreeNode


class Match(NamedTuple):
    root: int           # pre-order index of the match root
    nodes: frozenset    # pre-order indices of covered nodes


class IndexedTree:
    """Pre-order view of a tree used by the matcher."""

    __slots__ = ("nodes", "index", "by_symbol", "countable")

    def __init__(self, tree):
        root = tree.root if isinstance(tree, SourceTree) else tree
        self.nodes = list(root.walk())
        self.index = {id(n): i for i, n in enumerate(self.nodes)}
        self.by_symbol = {}
        for i, n in enumerate(self.nodes):
            self.by_symbol.setdefault(n.symbol.id, []).append(i)
        self.countable = frozenset(i for i, n in enumerate(self.nodes) if not n.symbol.is_dummy)

    @property
    def node_count(self) -> int:
        return len(self.countable)


def _embed(key, node: TreeNode, index, out) -> bool:
    kids = node.children
    if len(kids) != len(key) - 1:
        return False
    out.append(index[id(node)])
    for spec, child in zip(key[1:], kids):
        if type(spec) is tuple:
            if child.symbol.id != spec[0] or not _embed(spec, child, index, out):
                return False
        elif child.symbol.id != spec:
            return False
        elif child.symbol.is_terminal:
            out.append(index[id(child)])
    return True


def match_fragment(fragment, tree) -> list:
    """Every place where ``fragment`` embeds in ``tree``.

    A match at node v requires v to carry the fragment's root symbol, every
    expanded fragment node to agree with the tree on symbol and child
    symbols, and every nonterminal leaf to sit on a tree node of the same
    symbol (whatever lies below it).  Returns :class:`Match` records sorted by
    root position.
    """
    key = fragment.key if isinstance(fragment, Fragment) else fragment
    idx = tree if isinstance(tree, IndexedTree) else IndexedTree(tree)
    found = []
    for i in idx.by_symbol.get(key[0], ()):
        covered = []
        if _embed(key, idx.nodes[i], idx.index, covered):
            found.append(Match(i, frozenset(covered) & idx.countable))
    return found


# -- per-file reports ----------------------------------------------------------

@dataclass
class MatchReport:
    path: str
    total_nodes: int
    matched_nodes: int = 0
    locations: dict = field(default_factory=dict)   # idiom id -> list[Match]

    @property
    def matched_idioms(self) -> set:
        return {i for i, locs in self.locations.items() if locs}


def _fragments(idioms) -> list:
    out = []
    for item in idioms:
        if isinstance(item, Fragment):
            out.append(item)
        elif hasattr(item, "fragment"):
            out.append(item.fragment)
        else:
            out.append(Fragment(item))
    return out


def match_reports(idioms, corpus: Iterable) -> list:
    """One :class:`MatchReport` per corpus file; idiom ids are list positions."""
    frags = _fragments(idioms)
    reports = []
    for n, tree in enumerate(corpus):
        idx = IndexedTree(tree)
        path = tree.path if isinstance(tree, SourceTree) else f"<tree {n}>"
        report = MatchReport(path, idx.node_count)
        covered = set()
        for i, frag in enumerate(frags):
            locs = match_fragment(frag, idx)
            if locs:
                report.locations[i] = locs
                for m in locs:
                    covered |= m.nodes
        report.matched_nodes = len(covered)
        reports.append(report)
    return reports


def _reports(idioms, corpus, reports):
    return match_reports(idioms, corpus) if reports is None else reports


def coverage(idioms, corpus, reports=None) -> float:
    """Share of corpus nodes covered by at least one idiom match."""
    reports = _reports(idioms, corpus, reports)
    total = sum(r.total_nodes for r in reports)
    return sum(r.matched_nodes for r in reports) / total if total else 0.0


def set_precision(idioms, corpus, reports=None) -> float:
    """Share of idioms that match somewhere in the corpus (0 for an empty set)."""
    n = len(_fragments(idioms))
    if n == 0:
        return 0.0
    reports = _reports(idioms, corpus, reports)
    hit = set().union(*(r.matched_idioms for r in reports)) if reports else set()
    return len(hit) / n


class AverageSize(NamedTuple):
    value: float
    defined: bool

    def __float__(self):
        return self.value


def avg_matched_size(idioms, corpus, reports=None) -> AverageSize:
    """Mean covered-node count over all match instances.

    With no matches at all the mean is undefined; the result is then
    ``AverageSize(0.0, defined=False)``.
    """
    reports = _reports(idioms, corpus, reports)
    sizes = [len(m.nodes) for r in reports for locs in r.locations.values() for m in locs]
    if not sizes:
        return AverageSize(0.0, False)
    return AverageSize(sum(sizes) / len(sizes), True)


def evaluation_report(idioms, corpus) -> dict:
    """The JSON-ready summary written by ``haggis evaluate``."""
    corpus = list(corpus)
    frags = _fragments(idioms)
    reports = match_reports(frags, corpus)
    size = avg_matched_size(frags, corpus, reports)
    per_idiom = []
    for i in range(len(frags)):
        locs = [m for r in reports for m in r.locations.get(i, ())]
        per_idiom.append({
            "id": i,
            "files": sum(1 for r in reports if i in r.locations),
            "matches": len(locs),
            "avgSize": sum(len(m.nodes) for m in locs) / len(locs) if locs else 0.0,
        })
    return {
        "coverage": coverage(frags, corpus, reports),
        "precision": set_precision(frags, corpus, reports),
        "avgSize": size.value,
        "avgSizeDefined": size.defined,
        "files": len(reports),
        "nodes": sum(r.total_nodes for r in reports),
        "perIdiom": per_idiom,
    }


# -- lift ----------------------------------------------------------------------

@dataclass
class LiftMatrix:
    """Lift of idiom ``t`` (rows) against package import ``p`` (columns)."""

    packages: list
    idioms: list
    lift: np.ndarray
    mask: np.ndarray                       # True where the cell is defined
    p_package: Optional[np.ndarray] = None
    p_idiom: Optional[np.ndarray] = None
    joint: Optional[np.ndarray] = None

    def __post_init__(self):
        self.lift = np.asarray(self.lift, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.lift.shape != (len(self.idioms), len(self.packages)) or self.mask.shape != self.lift.shape:
            raise ValueError("lift matrix shape does not match idiom/package lists")

    def value(self, idiom, package) -> Optional[float]:
        i, j = self.idioms.index(idiom), self.packages.index(package)
        return float(self.lift[i, j]) if self.mask[i, j] else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["idiom"] + list(self.packages))
        for i, t in enumerate(self.idioms):
            w.writerow([t] + [repr(float(v)) if ok else "" for v, ok in zip(self.lift[i], self.mask[i])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LiftMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or not rows[0] or rows[0][0] != "idiom":
            raise ValueError("not a lift CSV: header must start with 'idiom'")
        packages = rows[0][1:]
        idioms, lift, mask = [], [], []
        for row in rows[1:]:
            if not row:
                continue
            if len(row) != len(packages) + 1:
                raise ValueError(f"ragged lift CSV row for idiom {row[0]!r}")
            idioms.append(_idiom_id(row[0]))
            lift.append([float(c) if c else 0.0 for c in row[1:]])
            mask.append([bool(c) for c in row[1:]])
        shape = (len(idioms), len(packages))
        return cls(packages, idioms, np.array(lift, dtype=float).reshape(shape),
                   np.array(mask, dtype=bool).reshape(shape))


def _idiom_id(text):
    try:
        return int(text)
    except ValueError:
        return text


def lift_from_sets(file_imports: Sequence, file_idioms: Sequence, packages=None,
                   idioms=None) -> LiftMatrix:
    """Lift from per-file import sets and per-file matched-idiom sets."""
    if len(file_imports) != len(file_idioms):
        raise ValueError("need one import set and one idiom set per file")
    n = len(file_imports)
    if packages is None:
        packages = sorted(set().union(*map(set, file_imports))) if n else []
    if idioms is None:
        idioms = sorted(set().union(*map(set, file_idioms))) if n else []
    has_p = np.array([[p in set(imps) for p in packages] for imps in file_imports], dtype=float).reshape(n, len(packages))
    has_t = np.array([[t in set(ids) for t in idioms] for ids in file_idioms], dtype=float).reshape(n, len(idioms))
    if n == 0:
        zeros = np.zeros((len(idioms), len(packages)))
        return LiftMatrix(list(packages), list(idioms), zeros, zeros.astype(bool),
                          np.zeros(len(packages)), np.zeros(len(idioms)), zeros)
    p_p = has_p.mean(axis=0)
    p_t = has_t.mean(axis=0)
    joint = has_t.T @ has_p / n
    denom = np.outer(p_t, p_p)
    mask = denom > 0
    lift = np.divide(joint, denom, out=np.zeros_like(joint), where=mask)
    return LiftMatrix(list(packages), list(idioms), lift, mask, p_p, p_t, joint)


def lift_matrix(idioms, corpus, packages=None, reports=None) -> LiftMatrix:
    """File-level lift between every imported package and every idiom."""
    corpus = list(corpus)
    reports = _reports(idioms, corpus, reports)
    imports = [set(t.imports) if isinstance(t, SourceTree) else set() for t in corpus]
    return lift_from_sets(imports, [r.matched_idioms for r in reports], packages,
                          list(range(len(_fragments(idioms)))))


# -- suggestion ----------------------------------------------------------------

def suggest(imports, matrix: LiftMatrix, s_th: float = 0.0,
            file_counts: Optional[Mapping] = None) -> list:
    """Rank idioms by their best lift against the given imports.

    Score is ``max over p in imports of lift(p, t)`` over defined cells;
    idioms scoring above ``s_th`` are returned as ``(idiom, score)`` pairs,
    best first, ties broken by larger file count and then smaller id.
    """
    cols = [matrix.packages.index(p) for p in set(imports) if p in matrix.packages]
    if not cols:
        return []
    file_counts = file_counts or {}
    scored = []
    for i, t in enumerate(matrix.idioms):
        vals = [matrix.lift[i, j] for j in cols if matrix.mask[i, j]]
        if not vals:
            continue
        s = float(max(vals))
        if s > s_th:
            scored.append((t, s))
    scored.sort(key=lambda ts: (-ts[1], -file_counts.get(ts[0], 0), _sort_id(ts[0])))
    return scored


def _sort_id(t):
    return (0, t, "") if isinstance(t, (int, np.integer)) else (1, 0, str(t))


def suggestion_frequency(suggestions: Sequence) -> float:
    """Share of query files that received at least one suggestion."""
    return sum(1 for s in suggestions if len(s)) / len(suggestions) if len(suggestions) else 0.0


def recall_at_rank_k(suggestions: Sequence, relevant: Sequence, k: int) -> float:
    """Share of files where one of the top ``k`` suggestions really matches.

    ``suggestions`` holds one ranked list per file (bare ids or
    ``(id, score)`` pairs); ``relevant`` holds the set of idioms that match
    each file.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(suggestions) != len(relevant):
        raise ValueError("need one relevant set per suggestion list")
    if not suggestions:
        return 0.0
    hits = 0
    for ranked, rel in zip(suggestions, relevant):
        top = [s[0] if isinstance(s, tuple) else s for s in list(ranked)[:k]]
        hits += any(t in rel for t in top)
    return hits / len(suggestions)
