"""Tree containers shared by the frontend, the sampler and the evaluation code."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from .symbols import Symbol, SymbolTable


@dataclass
class RawNode:
    """An AST node as delivered by a parser, before symbolization.

    ``props`` holds the simple properties and ``children`` the structural
    ones, both as ordered ``(name, value)`` pairs.
    """

    kind: str
    props: tuple = ()
    children: tuple = ()
    text: Optional[str] = None

    def __post_init__(self):
        self.props = tuple((str(k), str(v)) for k, v in self.props)
        self.children = tuple((str(k), list(v)) for k, v in self.children)
        names = [k for k, _ in self.children]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate structural property on {self.kind}: {names}")

    def prop(self, name, default=None):
        for k, v in self.props:
            if k == name:
                return v
        return default

    def group(self, name):
        for k, v in self.children:
            if k == name:
                return v
        return []

    def walk(self) -> Iterator["RawNode"]:
        yield self
        for _, kids in self.children:
            for kid in kids:
                yield from kid.walk()


@dataclass(eq=True)
class TreeNode:
    symbol: Symbol
    children: list = field(default_factory=list)
    z: bool = False
    frozen: bool = False
    meta_var_type: Optional[str] = None
    leaf_text: Optional[str] = None

    def __repr__(self):
        return f"TreeNode({format_tree(self)})"

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def walk(self) -> Iterator["TreeNode"]:
        """Pre-order traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def postorder(self) -> Iterator["TreeNode"]:
        for child in self.children:
            yield from child.postorder()
        yield self

    def size(self) -> int:
        return sum(1 for _ in self.walk())


@dataclass
class SourceTree:
    """One file: its path, imported package names and the tree itself.

    ``root`` is a :class:`RawNode` straight after ingestion and a
    :class:`TreeNode` once the tree went through the transformations.
    """

    path: str
    imports: list = field(default_factory=list)
    root: Union[RawNode, TreeNode, None] = None


def format_tree(node: TreeNode) -> str:
    """Bracketed rendering, e.g. ``(E (T (F "id")))``."""
    if not node.children:
        return node.symbol.text
    inner = " ".join(format_tree(c) for c in node.children)
    return f"({node.symbol.text} {inner})"


_TOKEN = re.compile(r'\(|\)|"(?:[^"\\]|\\.)*"|[^\s()]+')


def parse_bracketed(text: str, table: SymbolTable) -> TreeNode:
    """Read a bracketed tree such as ``(E (T (F id)) + (T (F id)))``.

    Labels directly after ``(`` become nonterminal nodes; bare atoms become
    terminal tokens.  Quoted atoms are JSON strings.  This is the quickest way
    to build toy-grammar corpora by hand.
    """
    import json

    tokens = _TOKEN.findall(text)
    pos = 0

    def atom(tok):
        value = json.loads(tok) if tok.startswith('"') else tok
        return TreeNode(table.intern(value, role="token"), leaf_text=value)

    def parse():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok != "(":
            if tok == ")":
                raise ValueError(f"unexpected ')' in {text!r}")
            return atom(tok)
        label = tokens[pos]
        pos += 1
        kids = []
        while tokens[pos] != ")":
            kids.append(parse())
        pos += 1
        if not kids:
            return TreeNode(table.intern(label, role="leaf"))
        return TreeNode(table.intern(label), kids)

    tree = parse()
    if pos != len(tokens):
        raise ValueError(f"trailing input in {text!r}")
    tree.z = True
    return tree


def content_nodes(node: TreeNode) -> Iterator[TreeNode]:
    """Nodes of a tree that are not encoding artifacts (groups, dummies)."""
    for n in node.walk():
        if not n.symbol.is_dummy:
            yield n
