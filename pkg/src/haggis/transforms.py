"""AST transformations that turn raw parser output into sampler-ready trees.

Pipeline order used by :func:`prepare_corpus`::

    symbolize -> insert_metavariables -> prune_and_freeze -> binarize

Structural properties become ``group`` nodes labelled ``Kind::prop``.  Group
nodes are glued to their parent (never fragment roots), which keeps the CFG
rules unambiguous.  Binarization then works inside groups only.
"""
from __future__ import annotations

from typing import Callable, Iterable, Mapping, Optional

from .symbols import Symbol, SymbolTable
from .trees import RawNode, SourceTree, TreeNode

UNKNOWN_TYPE = "?"
METAVARIABLE = "MetaVariable"
PLACEHOLDER = "Placeholder"

# Demo-language translation of the un-splittable node list: invocation
# arguments, non-block children of if/while/for, parenthesized / postfix /
# infix expressions and variable declaration statements.  ``A::b`` entries
# freeze every member of property ``b`` of an ``A`` node; plain entries freeze
# nodes of that kind.
DEFAULT_FREEZE = frozenset({
    "MethodInvocation::arguments",
    "ClassInstanceCreation::arguments",
    "IfStatement::expression",
    "WhileStatement::expression",
    "ForStatement::init",
    "ForStatement::expression",
    "ForStatement::update",
    "ParenthesizedExpression",
    "PostfixExpression",
    "InfixExpression",
    "VariableDeclarationStatement",
})
DEFAULT_NAME_KINDS = frozenset({"SimpleName"})
DEFAULT_IMPORT_KINDS = frozenset({"ImportDeclaration"})


def symbolize(node: RawNode, table: SymbolTable) -> TreeNode:
    """Map a raw AST onto grammar symbols.

    ``(kind, simple props)`` selects the symbol.  Identifier/literal text
    becomes a terminal token child; every non-empty structural property
    becomes a group node holding that property's children in order.
    """
    kids = []
    if node.text is not None:
        kids.append(TreeNode(table.intern(node.text, role="token"), leaf_text=node.text))
    for prop, members in node.children:
        if not members:
            continue
        head = table.intern(f"{node.kind}::{prop}", role="group")
        kids.append(TreeNode(head, [symbolize(m, table) for m in members]))
    role = "node" if kids else "leaf"
    return TreeNode(table.intern(node.kind, node.props, role), kids)


def declared_types(root: RawNode, name_kinds=DEFAULT_NAME_KINDS) -> dict:
    """Collect ``name -> type`` from declarations in a raw tree.

    Any node carrying a ``type`` simple property and a ``name`` structural
    property holding a name node counts as a declaration.
    """
    types = {}
    for node in root.walk():
        declared = node.prop("type")
        if declared is None:
            continue
        for name in node.group("name"):
            if name.kind in name_kinds and name.text is not None:
                types.setdefault(name.text, declared)
    return types


def insert_metavariables(tree: TreeNode, type_of: Mapping[str, str], table: SymbolTable,
                         name_kinds=DEFAULT_NAME_KINDS) -> TreeNode:
    """Put a ``MetaVariable[type]`` node above every variable-name node."""

    def visit(node):
        out = []
        for child in node.children:
            visit(child)
            if child.symbol.kind in name_kinds and child.symbol.role == "node":
                text = child.children[0].leaf_text if child.children else None
                vtype = type_of.get(text, UNKNOWN_TYPE) if text is not None else UNKNOWN_TYPE
                meta = table.intern(METAVARIABLE, (("type", vtype),))
                child = TreeNode(meta, [child], meta_var_type=vtype)
            out.append(child)
        node.children = out

    if tree.symbol.kind in name_kinds and tree.symbol.role == "node":
        raise ValueError("a variable name cannot be the root of a tree")
    visit(tree)
    return tree


def _import_name(node: TreeNode) -> str:
    name = node.symbol.prop("name")
    if name is not None:
        return name
    texts = [n.leaf_text for n in node.walk() if n.leaf_text is not None]
    return ".".join(texts) if texts else node.symbol.kind


def prune_and_freeze(tree: SourceTree, freeze_categories: Iterable[str] = DEFAULT_FREEZE,
                     table: Optional[SymbolTable] = None,
                     import_kinds=DEFAULT_IMPORT_KINDS) -> SourceTree:
    """Drop import declarations and pin ``z=0`` on un-splittable nodes.

    Removed imports are appended to ``tree.imports``.  A node is frozen when
    its kind is listed, or when it sits (possibly below binarization dummies)
    inside a property group whose ``Kind::prop`` label is listed.
    """
    freeze = frozenset(freeze_categories)
    imports = list(tree.imports)

    def strip(node):
        kept = []
        for child in node.children:
            if child.symbol.kind in import_kinds:
                name = _import_name(child)
                if name not in imports:
                    imports.append(name)
                continue
            strip(child)
            if child.symbol.is_dummy and not child.children:
                continue
            kept.append(child)
        if len(kept) != len(node.children):
            node.children = kept
            if not kept and node.symbol.role == "node":
                if table is None:
                    raise ValueError("pruning emptied a node; pass the symbol table")
                node.symbol = table.intern(node.symbol.kind, node.symbol.props, "leaf")

    def mark(node, group_label):
        for child in node.children:
            if child.symbol.role == "group":
                label = child.symbol.kind
            elif child.symbol.role == "dummy":
                label = group_label
            else:
                label = None
            frozen = child.symbol.kind in freeze or (group_label is not None and group_label in freeze)
            child.frozen = frozen
            child.z = False
            mark(child, label)

    root = tree.root
    strip(root)
    root.frozen = False
    root.z = True
    mark(root, None)
    return SourceTree(tree.path, imports, root)


def binarize(tree: TreeNode, table: SymbolTable) -> TreeNode:
    """Right-leaning binarization of property groups with three or more members.

    ``G(s1, s2, s3, s4)`` becomes ``G(s1, D(s2, D(s3, s4)))`` with dummy
    symbol ``D = G+``.  A dummy is frozen when everything it chains is frozen.
    """
    for child in tree.children:
        binarize(child, table)
    if tree.symbol.role == "group" and len(tree.children) >= 3:
        dummy = table.intern(tree.symbol.kind, role="dummy")
        members = tree.children
        chain = TreeNode(dummy, members[-2:], frozen=all(m.frozen for m in members[-2:]))
        for m in reversed(members[1:-2]):
            chain = TreeNode(dummy, [m, chain], frozen=m.frozen and chain.frozen)
        tree.children = [members[0], chain]
    return tree


def debinarize(tree: TreeNode) -> TreeNode:
    """Inverse of :func:`binarize`; returns a new tree."""

    def flat(node):
        if node.symbol.role == "dummy":
            for c in node.children:
                yield from flat(c)
        else:
            yield debinarize(node)

    kids = [k for c in tree.children for k in flat(c)]
    return TreeNode(tree.symbol, kids, tree.z, tree.frozen, tree.meta_var_type, tree.leaf_text)


def transform_tree(raw: SourceTree, table: SymbolTable, freeze_categories=DEFAULT_FREEZE,
                   type_of: Optional[Mapping[str, str]] = None,
                   name_kinds=DEFAULT_NAME_KINDS, import_kinds=DEFAULT_IMPORT_KINDS) -> SourceTree:
    if type_of is None:
        type_of = declared_types(raw.root, name_kinds)
    root = symbolize(raw.root, table)
    root = insert_metavariables(root, type_of, table, name_kinds)
    tree = prune_and_freeze(SourceTree(raw.path, list(raw.imports), root), freeze_categories,
                            table, import_kinds)
    binarize(tree.root, table)
    return tree


def prepare_corpus(raw_trees: Iterable[SourceTree], table: Optional[SymbolTable] = None,
                   freeze_categories=DEFAULT_FREEZE, **kwargs) -> tuple[list, SymbolTable]:
    """Run the whole transformation pipeline over an ingested corpus."""
    table = SymbolTable() if table is None else table
    return [transform_tree(t, table, freeze_categories, **kwargs) for t in raw_trees], table


# -- back to raw form --------------------------------------------------------

SlotFn = Callable[[Symbol, Optional[str], bool], RawNode]


def _default_slot(symbol, group, last):
    return RawNode(PLACEHOLDER, text="$" + symbol.kind)


def to_raw(node: TreeNode, slot: SlotFn = _default_slot, group: Optional[str] = None,
           last: bool = True) -> RawNode:
    """Undo symbolization, metavariables and binarization.

    A nonterminal without children is a fragment frontier; it is replaced by
    whatever ``slot(symbol, enclosing_group, is_last_in_group)`` returns.
    """
    sym = node.symbol
    if sym.role == "leaf":
        return RawNode(sym.kind, sym.props)
    if sym.role == "token":
        return RawNode(PLACEHOLDER, text=node.leaf_text or sym.kind)
    if not node.children:
        return slot(sym, group, last)
    if sym.kind == METAVARIABLE and sym.role == "node":
        name = node.children[0]
        if not name.children and not name.symbol.is_terminal:
            return slot(sym, group, last)
        return to_raw(name, slot, group, last)
    text = None
    groups = []
    for child in node.children:
        if child.symbol.role == "token":
            text = child.leaf_text if child.leaf_text is not None else child.symbol.kind
            continue
        if child.symbol.role != "group":
            raise ValueError(f"unexpected child {child.symbol.text} under {sym.text}")
        label = child.symbol.kind
        members = list(_spliced(child))
        raw_members = []
        for i, m in enumerate(members):
            if isinstance(m, Symbol):
                raw_members.append(slot(m, label, True))
            else:
                raw_members.append(to_raw(m, slot, label, i == len(members) - 1))
        groups.append((label.split("::", 1)[1], raw_members))
    return RawNode(sym.kind, sym.props, tuple(groups), text)


def _spliced(group_node):
    """Members of a group with dummies spliced out.

    A dummy without children (a frontier inside a fragment) is yielded as its
    bare symbol so the caller can emit a slot for "the rest of the list".
    """
    for c in group_node.children:
        if c.symbol.role == "dummy":
            if c.children:
                yield from _spliced(c)
            else:
                yield c.symbol
        else:
            yield c
