"""Grammar symbols and the registry that hands out their ids.

A symbol is identified by ``(role, kind, props)``.  Roles:

``node``   an AST node that has children (nonterminal)
``leaf``   an AST node without children (terminal)
``token``  identifier or literal text hanging under a node (terminal)
``group``  head of one structural property, e.g. ``IfStatement::then``
``dummy``  binarization helper inside a property group, e.g. ``Block::statements+``

The printed ``text`` of a symbol is unique and can be parsed back, which is
what lets idiom and grammar files be re-attached to a freshly built table.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field

ROLES = ("node", "leaf", "token", "group", "dummy")
TERMINAL_ROLES = frozenset({"leaf", "token"})
ENCODING_ROLES = frozenset({"group", "dummy"})


@dataclass(frozen=True)
class Symbol:
    id: int
    text: str
    is_terminal: bool
    role: str = "node"
    kind: str = ""
    props: tuple = field(default=())

    @property
    def is_dummy(self) -> bool:
        """True for symbols that only exist because of the tree encoding."""
        return self.role in ENCODING_ROLES

    def prop(self, name, default=None):
        for k, v in self.props:
            if k == name:
                return v
        return default

    def __repr__(self):
        return f"Symbol({self.id}, {self.text!r})"


def symbol_text(role: str, kind: str, props=()) -> str:
    if role == "token":
        return json.dumps(kind, ensure_ascii=False)
    suffix = ""
    if props:
        suffix = json.dumps(dict(props), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    if role == "leaf":
        return ":" + kind + suffix
    if role == "dummy":
        return kind + "+"
    return kind + suffix


def parse_symbol_text(text: str) -> tuple[str, str, tuple]:
    """Inverse of :func:`symbol_text`; returns ``(role, kind, props)``."""
    if text.startswith('"'):
        return "token", json.loads(text), ()
    role = "node"
    if text.startswith(":"):
        role, text = "leaf", text[1:]
    if "::" in text and "{" not in text:
        if text.endswith("+"):
            return "dummy", text[:-1], ()
        return "group", text, ()
    brace = text.find("{")
    if brace < 0:
        return role, text, ()
    props = tuple(sorted(json.loads(text[brace:]).items()))
    return role, text[:brace], props


class SymbolTable:
    """Registry mapping ``(role, kind, sorted props)`` to dense integer ids.

    Registration is guarded by a lock so that per-file transformation may run
    in worker threads that share one table.
    """

    def __init__(self):
        self._by_key: dict[tuple, Symbol] = {}
        self._by_id: list[Symbol] = []
        self._by_text: dict[str, Symbol] = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._by_id)

    def __iter__(self):
        return iter(self._by_id)

    def __getitem__(self, sid: int) -> Symbol:
        return self._by_id[sid]

    def __contains__(self, text: str) -> bool:
        return text in self._by_text

    def get(self, sid, default=None):
        if 0 <= sid < len(self._by_id):
            return self._by_id[sid]
        return default

    def intern(self, kind: str, props=(), role: str = "node") -> Symbol:
        if role not in ROLES:
            raise ValueError(f"unknown symbol role {role!r}")
        props = tuple(sorted((str(k), str(v)) for k, v in props))
        key = (role, kind, props)
        sym = self._by_key.get(key)
        if sym is not None:
            return sym
        with self._lock:
            sym = self._by_key.get(key)
            if sym is None:
                text = symbol_text(role, kind, props)
                sym = Symbol(len(self._by_id), text, role in TERMINAL_ROLES, role, kind, props)
                self._by_key[key] = sym
                self._by_id.append(sym)
                self._by_text[text] = sym
        return sym

    def by_text(self, text: str) -> Symbol:
        """Look up a symbol by its printed form, registering it if new."""
        sym = self._by_text.get(text)
        if sym is None:
            role, kind, props = parse_symbol_text(text)
            sym = self.intern(kind, props, role)
        return sym

    def to_json(self) -> list:
        return [s.text for s in self._by_id]

    @classmethod
    def from_json(cls, texts) -> "SymbolTable":
        table = cls()
        for i, text in enumerate(texts):
            sym = table.by_text(text)
            if sym.id != i:
                raise ValueError(f"duplicate symbol text {text!r} in table")
        return table
