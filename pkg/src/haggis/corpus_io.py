"""Canonical tree format: UTF-8 JSON Lines, one record per source file.

Each record looks like::

    {"version": 1, "path": "a/B.mj", "imports": ["x.y"],
     "root": {"kind": "CompilationUnit", "props": {}, "children": {...}}}

where a node is ``{"kind": str, "props": {str: str},
"children": {str: [node]}, "text": str}`` and every field except ``kind`` is
optional.
"""
from __future__ import annotations

import io
import json
import os
from typing import Iterable

import jsonschema

from .trees import RawNode, SourceTree

FORMAT_VERSION = 1

NODE_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"type": "string", "minLength": 1},
        "props": {"type": "object", "additionalProperties": {"type": "string"}},
        "children": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": {"$ref": "#/$defs/node"}},
        },
        "text": {"type": "string"},
    },
    "additionalProperties": False,
}

RECORD_SCHEMA = {
    "$defs": {"node": NODE_SCHEMA},
    "type": "object",
    "required": ["version", "path", "root"],
    "properties": {
        "version": {"type": "integer"},
        "path": {"type": "string"},
        "imports": {"type": "array", "items": {"type": "string"}},
        "root": {"$ref": "#/$defs/node"},
    },
    "additionalProperties": False,
}

_validator = jsonschema.Draft202012Validator(RECORD_SCHEMA)


class SchemaError(ValueError):
    """A corpus record does not conform to the canonical tree format."""

    def __init__(self, index, field, message):
        self.index = index
        self.field = field
        super().__init__(f"record {index}: {field}: {message}")


def node_from_json(obj) -> RawNode:
    return RawNode(
        kind=obj["kind"],
        props=tuple(obj.get("props", {}).items()),
        children=tuple((k, [node_from_json(c) for c in v]) for k, v in obj.get("children", {}).items()),
        text=obj.get("text"),
    )


def node_to_json(node: RawNode) -> dict:
    out = {"kind": node.kind}
    if node.props:
        out["props"] = dict(node.props)
    if node.children:
        out["children"] = {k: [node_to_json(c) for c in v] for k, v in node.children}
    if node.text is not None:
        out["text"] = node.text
    return out


def _check(index, obj):
    if not isinstance(obj, dict):
        raise SchemaError(index, "<record>", "record must be a JSON object")
    if "version" in obj and obj["version"] != FORMAT_VERSION:
        raise SchemaError(index, "version", f"unknown schema version {obj['version']!r}")
    error = jsonschema.exceptions.best_match(_validator.iter_errors(obj))
    if error is not None:
        path = ".".join(str(p) for p in error.absolute_path) or "<record>"
        if error.validator == "required":
            missing = [r for r in error.validator_value if r not in error.instance]
            path = ".".join(filter(None, [".".join(str(p) for p in error.absolute_path), missing[0]]))
        raise SchemaError(index, path, error.message)


def read_records(lines: Iterable[str]) -> list[SourceTree]:
    trees = []
    index = 0
    for line in lines:
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(index, "<record>", f"invalid JSON ({exc.msg})") from None
        _check(index, obj)
        trees.append(SourceTree(obj["path"], list(obj.get("imports", [])), node_from_json(obj["root"])))
        index += 1
    return trees


def ingest_corpus(*sources) -> list[SourceTree]:
    """Read one or more canonical tree files (paths or open text streams).

    Records come back in input order and untransformed.
    """
    trees = []
    for src in sources:
        if isinstance(src, (str, os.PathLike)):
            with open(src, encoding="utf-8") as fh:
                trees.extend(read_records(fh))
        else:
            trees.extend(read_records(src))
    return trees


def write_corpus(trees: Iterable[SourceTree], dest) -> None:
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", encoding="utf-8") if own else dest
    try:
        for tree in trees:
            record = {
                "version": FORMAT_VERSION,
                "path": tree.path,
                "imports": list(tree.imports),
                "root": node_to_json(tree.root),
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    finally:
        if own:
            fh.close()


def dumps_corpus(trees) -> str:
    buf = io.StringIO()
    write_corpus(trees, buf)
    return buf.getvalue()
