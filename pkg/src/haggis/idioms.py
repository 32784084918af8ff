"""Turning posterior samples into a ranked, pruned idiom set."""
from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import demolang
from .grammar import Fragment
from .symbols import Symbol, SymbolTable
from .transforms import PLACEHOLDER, UNKNOWN_TYPE, to_raw
from .trees import RawNode

IDIOM_FILE_FIELDS = ("alpha", "pstop", "cmin", "nmin", "seed")


@dataclass
class Idiom:
    fragment: Fragment
    sample_count: int
    file_count: int
    template: str = ""


@dataclass
class IdiomSet:
    idioms: list
    symbols: Mapping[int, Symbol]
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.idioms)

    def __iter__(self):
        return iter(self.idioms)

    def __getitem__(self, i):
        return self.idioms[i]

    @property
    def fragments(self) -> list:
        return [idiom.fragment for idiom in self.idioms]

    @property
    def provenance(self) -> str:
        """Short hash of the run configuration."""
        blob = json.dumps(self.config, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_json(self) -> dict:
        return {
            "config": {k: self.config.get(k) for k in IDIOM_FILE_FIELDS},
            "idioms": [
                {
                    "template": idiom.template or render_template(idiom.fragment, self.symbols),
                    "fragment": idiom.fragment.to_json(self.symbols),
                    "sampleCount": idiom.sample_count,
                    "fileCount": idiom.file_count,
                }
                for idiom in self.idioms
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_json(cls, obj, table: SymbolTable) -> "IdiomSet":
        idioms = [
            Idiom(Fragment.from_json(item["fragment"], table), int(item["sampleCount"]),
                  int(item["fileCount"]), item.get("template", ""))
            for item in obj["idioms"]
        ]
        return cls(idioms, table, dict(obj.get("config") or {}))

    @classmethod
    def load(cls, path, table: SymbolTable) -> "IdiomSet":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh), table)


def extract_idioms(samples: Iterable, c_min: int, n_min: int, symbols: Mapping[int, Symbol],
                   config=None) -> IdiomSet:
    """Merge the samples' fragments into one multiset and prune it.

    Fragments seen fewer than ``c_min`` times over all samples, or with fewer
    than ``n_min`` nodes, are dropped.  The rest are ranked by the number of
    distinct files they occur in, then by occurrences, then by size.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one posterior sample")
    counts = Counter()
    files = {}
    for sample in samples:
        counts.update(sample.fragments)
        for key, where in sample.files.items():
            files.setdefault(key, set()).update(where)
    kept = []
    for key, c in counts.items():
        if c < c_min:
            continue
        frag = Fragment(key)
        if frag.node_count(symbols) < n_min:
            continue
        kept.append(Idiom(frag, c, len(files.get(key, ()))))
    kept.sort(key=lambda i: (-i.file_count, -i.sample_count, -i.fragment.node_count(symbols),
                             i.fragment.format(symbols)))
    config = dict(config or {})
    config.setdefault("cmin", c_min)
    config.setdefault("nmin", n_min)
    return IdiomSet(kept, symbols, config)


# -- rendering ---------------------------------------------------------------

def _lower_first(kind: str) -> str:
    return kind[:1].lower() + kind[1:]


def _slot(symbol: Symbol, group, last) -> RawNode:
    def hole(text):
        return RawNode(PLACEHOLDER, text=text)

    statements = group is not None and group.endswith("::statements")
    if symbol.role == "dummy":
        return hole("$BODY$" if symbol.kind.endswith("::statements") else "$...")
    kind = symbol.kind
    if kind == "MetaVariable":
        vtype = symbol.prop("type", UNKNOWN_TYPE)
        return hole("$name" if vtype == UNKNOWN_TYPE else f"$({vtype.rsplit('.', 1)[-1]})")
    if kind == "SimpleName":
        return hole("$name")
    if kind == "Block":
        return RawNode("Block", children=(("statements", [hole("$BODY$")]),))
    if statements and last:
        return hole("$BODY$")
    if kind == "CatchClause":
        return hole("$catch")
    if kind == "StringLiteral":
        return hole("$stringLit")
    return hole("$" + _lower_first(kind))


def _render_code(frag: Fragment, symbols) -> str:
    tree = frag.to_tree(symbols)
    if tree.symbol.role == "dummy":
        group = tree.symbol.kind
        members = []

        def splice(node):
            for c in node.children:
                if c.symbol.role == "dummy" and c.children:
                    splice(c)
                elif c.symbol.role == "dummy":
                    members.append(_slot(c.symbol, group, True))
                else:
                    members.append(c)

        splice(tree)
        raw = [m if isinstance(m, RawNode) else to_raw(m, _slot, group, i == len(members) - 1)
               for i, m in enumerate(members)]
        if group.endswith("::statements"):
            return "\n".join(demolang.print_stmt(r, 0) for r in raw)
        if group.endswith("::catches"):
            return demolang.print_program(RawNode("CatchClauses", children=(("catches", raw),)))
        return demolang.print_expr(RawNode("ExpressionList", children=(("expressions", raw),)))
    return demolang.print_program(to_raw(tree, _slot))


def _render_brackets(key, symbols) -> str:
    if type(key) is not tuple:
        sym = symbols[key]
        return sym.text if sym.is_terminal else "$" + sym.text
    return "(" + " ".join([symbols[key[0]].text] + [_render_brackets(c, symbols) for c in key[1:]]) + ")"


def render_template(frag: Fragment, symbols: Mapping[int, Symbol]) -> str:
    """Human-readable form of an idiom.

    Demo-language fragments become source code with ``$`` slots:
    ``$BODY$`` for statement blocks, ``$(Type)`` for typed variables,
    ``$name`` for untyped ones and ``$kind`` for other nonterminals.
    Binarization dummies and property groups are invisible.  Fragments of any
    other grammar are printed as bracketed trees with ``$``-prefixed frontier
    symbols.
    """
    try:
        return _render_code(frag, symbols)
    except (ValueError, KeyError, IndexError, TypeError):
        return _render_brackets(frag.key, symbols)


# -- containment ---------------------------------------------------------------

def _head(x):
    return x[0] if type(x) is tuple else x


def _embeds_at(small, big) -> bool:
    if type(big) is not tuple or len(small) != len(big) or small[0] != big[0]:
        return False
    for s, b in zip(small[1:], big[1:]):
        if type(s) is tuple:
            if not _embeds_at(s, b):
                return False
        elif s != _head(b):
            return False
    return True


def contains_fragment(big, small) -> bool:
    """True when ``small`` embeds somewhere inside ``big``.

    Expanded nodes of ``small`` must be expanded identically in ``big``;
    its slots may be either slots or expansions in ``big``.
    """
    big = big.key if isinstance(big, Fragment) else big
    small = small.key if isinstance(small, Fragment) else small
    stack = [big]
    while stack:
        node = stack.pop()
        if _embeds_at(small, node):
            return True
        stack.extend(c for c in node[1:] if type(c) is tuple)
    return False
