"""A miniature Java-like language used to exercise the pipeline end to end.

Supports imports, blocks, ``if``/``while``/``for``/for-each, ``try`` with
``catch`` and ``finally``, ``return``/``break``/``continue``/``throw``,
variable declarations, calls, field and array access, ``new``, assignments,
infix/prefix/postfix operators, string/int/boolean/null literals.

Template slots such as ``$BODY$``, ``$(Cursor)``, ``$name`` or ``$...`` are
accepted wherever an expression or a statement may appear and are parsed
into ``Placeholder`` nodes, so rendered idioms can be read back.

The node kinds mirror the Eclipse JDT names.  Identifiers starting with an
upper-case letter in expression position are ``TypeName`` (class
references), everything else is a ``SimpleName`` (a variable).
"""
from __future__ import annotations

import re
from typing import Optional

from .trees import RawNode

KEYWORDS = frozenset({
    "if", "else", "while", "for", "try", "catch", "finally", "return", "break",
    "continue", "throw", "new", "null", "true", "false", "import", "this",
})

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|//[^\n]*|/\*.*?\*/)
  | (?P<slot>\$\([^)]*\)|\$\.\.\.|\$[A-Za-z_][A-Za-z_0-9]*\$?)
  | (?P<num>\d+(?:\.\d+)?[LlFfDd]?)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\+\+|--|\+=|-=|\*=|/=|==|!=|<=|>=|&&|\|\||[{}()\[\];,.=<>+\-*/%!:?])
""", re.VERBOSE | re.DOTALL)

ASSIGN_OPS = ("=", "+=", "-=", "*=", "/=")
BINARY_LEVELS = (("||",), ("&&",), ("==", "!="), ("<", ">", "<=", ">="), ("+", "-"), ("*", "/", "%"))
PRECEDENCE = {op: i + 1 for i, ops in enumerate(BINARY_LEVELS) for op in ops}


class ParseError(ValueError):
    pass


class Token:
    __slots__ = ("kind", "value", "pos")

    def __init__(self, kind, value, pos):
        self.kind, self.value, self.pos = kind, value, pos

    def __repr__(self):
        return f"{self.kind}:{self.value}"


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r} at offset {pos}")
        kind = m.lastgroup
        if kind != "ws":
            value = m.group()
            if kind == "ident" and value in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, value, pos))
        pos = m.end()
    tokens.append(Token("eof", "", len(source)))
    return tokens


def N(kind, props=(), children=(), text=None):
    return RawNode(kind, tuple(props), tuple((k, v) for k, v in children if v), text)


class Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, value, k=0) -> bool:
        t = self.peek(k) if k else self.tok
        return t.value == value and t.kind in ("op", "kw")

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, value) -> Token:
        if not self.at(value):
            raise ParseError(f"expected {value!r} at offset {self.tok.pos}, got {self.tok.value!r}")
        return self.advance()

    def accept(self, value) -> bool:
        if self.at(value):
            self.i += 1
            return True
        return False

    def ident(self) -> str:
        if self.tok.kind != "ident":
            raise ParseError(f"expected identifier at offset {self.tok.pos}, got {self.tok.value!r}")
        return self.advance().value

    # -- program structure
    def program(self) -> RawNode:
        imports = []
        while self.at("import"):
            self.advance()
            parts = [self.ident()]
            while self.accept("."):
                parts.append("*" if self.accept("*") else self.ident())
            self.expect(";")
            imports.append(N("ImportDeclaration", [("name", ".".join(parts))]))
        stmts = []
        while self.tok.kind != "eof":
            stmts.append(self.statement())
        return N("CompilationUnit", children=[("imports", imports), ("statements", stmts)])

    def block(self) -> RawNode:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise ParseError("unterminated block")
            stmts.append(self.statement())
        self.expect("}")
        return N("Block", children=[("statements", stmts)])

    def _type_at(self, k):
        """Length of a type starting ``k`` tokens ahead, or 0."""
        if self.peek(k).kind != "ident":
            return 0
        n = 1
        while self.peek(k + n).value == "." and self.peek(k + n + 1).kind == "ident":
            n += 2
        while self.peek(k + n).value == "[" and self.peek(k + n + 1).value == "]":
            n += 2
        return n

    def _is_declaration(self, terminators=("=", ";")) -> bool:
        n = self._type_at(0)
        if not n:
            return False
        name = self.peek(n)
        return name.kind in ("ident", "slot") and self.peek(n + 1).value in terminators

    def type_name(self) -> str:
        parts = [self.ident()]
        while self.at(".") and self.peek().kind == "ident":
            self.advance()
            parts.append(self.ident())
        name = ".".join(parts)
        while self.at("[") and self.at("]", 1):
            self.i += 2
            name += "[]"
        return name

    def declared_name(self) -> RawNode:
        if self.tok.kind == "slot":
            return N("Placeholder", text=self.advance().value)
        return N("SimpleName", text=self.ident())

    def declaration(self, semicolon=True) -> RawNode:
        vtype = self.type_name()
        name = self.declared_name()
        init = [self.expression()] if self.accept("=") else []
        if semicolon:
            self.expect(";")
        return N("VariableDeclarationStatement", [("type", vtype)], [("name", [name]), ("initializer", init)])

    def statement(self) -> RawNode:
        t = self.tok
        if t.kind == "op" and t.value == "{":
            return self.block()
        if t.kind == "kw":
            handler = getattr(self, f"stmt_{t.value}", None)
            if handler is not None:
                return handler()
        if t.kind == "slot" and not self._slot_continues():
            self.advance()
            if self.accept(";"):
                return N("ExpressionStatement", children=[("expression", [N("Placeholder", text=t.value)])])
            return N("Placeholder", text=t.value)
        if self._is_declaration():
            return self.declaration()
        expr = self.expression()
        self.expect(";")
        return N("ExpressionStatement", children=[("expression", [expr])])

    def _slot_continues(self) -> bool:
        nxt = self.peek()
        return nxt.kind == "op" and (nxt.value in (".", "[", "(", "++", "--") or nxt.value in ASSIGN_OPS
                                     or nxt.value in PRECEDENCE)

    def stmt_if(self):
        self.advance()
        self.expect("(")
        cond = self.expression()
        self.expect(")")
        then = self.statement()
        other = [self.statement()] if self.accept("else") else []
        return N("IfStatement", children=[("expression", [cond]), ("then", [then]), ("else", other)])

    def stmt_while(self):
        self.advance()
        self.expect("(")
        cond = self.expression()
        self.expect(")")
        return N("WhileStatement", children=[("expression", [cond]), ("body", [self.statement()])])

    def stmt_for(self):
        self.advance()
        self.expect("(")
        if self._is_declaration(terminators=(":",)):
            vtype = self.type_name()
            name = self.declared_name()
            self.expect(":")
            iterable = self.expression()
            self.expect(")")
            return N("EnhancedForStatement", [("type", vtype)],
                     [("name", [name]), ("expression", [iterable]), ("body", [self.statement()])])
        init = []
        if not self.at(";"):
            if self._is_declaration(terminators=("=", ";")):
                init.append(self.declaration(semicolon=False))
            else:
                init.append(self.expression())
            while self.accept(","):
                init.append(self.expression())
        self.expect(";")
        cond = [] if self.at(";") else [self.expression()]
        self.expect(";")
        update = []
        if not self.at(")"):
            update.append(self.expression())
            while self.accept(","):
                update.append(self.expression())
        self.expect(")")
        return N("ForStatement", children=[("init", init), ("expression", cond), ("update", update),
                                           ("body", [self.statement()])])

    def catch_clause(self) -> RawNode:
        self.expect("catch")
        self.expect("(")
        ctype = self.type_name()
        name = self.declared_name()
        self.expect(")")
        return N("CatchClause", [("type", ctype)], [("name", [name]), ("body", [self.block()])])

    def stmt_try(self):
        self.advance()
        body = self.block()
        catches = []
        while self.at("catch") or (self.tok.kind == "slot" and self.tok.value.startswith("$catch")):
            if self.tok.kind == "slot":
                catches.append(N("Placeholder", text=self.advance().value))
            else:
                catches.append(self.catch_clause())
        fin = [self.block()] if self.accept("finally") else []
        if not catches and not fin:
            raise ParseError("try without catch or finally")
        return N("TryStatement", children=[("body", [body]), ("catches", catches), ("finally", fin)])

    def stmt_return(self):
        self.advance()
        value = [] if self.at(";") else [self.expression()]
        self.expect(";")
        return N("ReturnStatement", children=[("expression", value)])

    def stmt_throw(self):
        self.advance()
        value = self.expression()
        self.expect(";")
        return N("ThrowStatement", children=[("expression", [value])])

    def stmt_break(self):
        self.advance()
        self.expect(";")
        return N("BreakStatement")

    def stmt_continue(self):
        self.advance()
        self.expect(";")
        return N("ContinueStatement")

    # -- expressions
    def expression(self) -> RawNode:
        left = self.binary(1)
        if self.tok.kind == "op" and self.tok.value in ASSIGN_OPS:
            op = self.advance().value
            right = self.expression()
            return N("Assignment", [("operator", op)], [("left", [left]), ("right", [right])])
        return left

    def binary(self, level) -> RawNode:
        if level > len(BINARY_LEVELS):
            return self.unary()
        left = self.binary(level + 1)
        while self.tok.kind == "op" and self.tok.value in BINARY_LEVELS[level - 1]:
            op = self.advance().value
            right = self.binary(level + 1)
            left = N("InfixExpression", [("operator", op)], [("left", [left]), ("right", [right])])
        return left

    def unary(self) -> RawNode:
        if self.tok.kind == "op" and self.tok.value in ("!", "-", "++", "--"):
            op = self.advance().value
            return N("PrefixExpression", [("operator", op)], [("operand", [self.unary()])])
        return self.postfix(self.primary())

    def arguments(self) -> list:
        self.expect("(")
        args = []
        if not self.at(")"):
            args.append(self.expression())
            while self.accept(","):
                args.append(self.expression())
        self.expect(")")
        return args

    def postfix(self, expr) -> RawNode:
        while True:
            if self.at("."):
                self.advance()
                name = self.ident()
                if self.at("("):
                    expr = N("MethodInvocation", [("name", name)],
                             [("expression", [expr]), ("arguments", self.arguments())])
                else:
                    expr = N("FieldAccess", [("name", name)], [("expression", [expr])])
            elif self.at("["):
                self.advance()
                index = self.expression()
                self.expect("]")
                expr = N("ArrayAccess", children=[("array", [expr]), ("index", [index])])
            elif self.at("++") or self.at("--"):
                op = self.advance().value
                expr = N("PostfixExpression", [("operator", op)], [("operand", [expr])])
            else:
                return expr

    def primary(self) -> RawNode:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return N("NumberLiteral", text=t.value)
        if t.kind == "str":
            self.advance()
            return N("StringLiteral", text=t.value[1:-1])
        if t.kind == "slot":
            self.advance()
            return N("Placeholder", text=t.value)
        if t.kind == "kw":
            if t.value == "null":
                self.advance()
                return N("NullLiteral")
            if t.value in ("true", "false"):
                self.advance()
                return N("BooleanLiteral", [("value", t.value)])
            if t.value == "this":
                self.advance()
                return N("ThisExpression")
            if t.value == "new":
                self.advance()
                ctype = self.type_name()
                return N("ClassInstanceCreation", [("type", ctype)], [("arguments", self.arguments())])
        if t.kind == "ident":
            self.advance()
            if self.at("("):
                return N("MethodInvocation", [("name", t.value)], [("arguments", self.arguments())])
            kind = "TypeName" if t.value[0].isupper() else "SimpleName"
            return N(kind, text=t.value)
        if t.kind == "op" and t.value == "(":
            self.advance()
            inner = self.expression()
            self.expect(")")
            return N("ParenthesizedExpression", children=[("expression", [inner])])
        raise ParseError(f"unexpected {t.value!r} at offset {t.pos}")

    def finish(self, node):
        if self.tok.kind != "eof":
            raise ParseError(f"trailing input at offset {self.tok.pos}: {self.tok.value!r}")
        return node


def parse_program(source: str) -> RawNode:
    p = Parser(source)
    return p.finish(p.program())


def parse_snippet(source: str) -> RawNode:
    """Parse a rendered idiom: a program, else one expression, else a list.

    Lists come back as ``ExpressionList`` or ``CatchClauses`` nodes.
    """
    attempts = (
        lambda p: p.program(),
        lambda p: p.expression(),
        lambda p: N("ExpressionList", children=[("expressions", _comma_list(p))]),
        lambda p: N("CatchClauses", children=[("catches", _catch_list(p))]),
    )
    error = None
    for attempt in attempts:
        p = Parser(source)
        try:
            return p.finish(attempt(p))
        except ParseError as exc:
            error = error or exc
    raise error


def _comma_list(p):
    items = [p.expression()]
    while p.accept(","):
        items.append(p.expression())
    return items


def _catch_list(p):
    items = [p.catch_clause()]
    while p.at("catch"):
        items.append(p.catch_clause())
    return items


# -- printing ----------------------------------------------------------------

INDENT = "    "
STATEMENT_KINDS = frozenset({
    "Block", "IfStatement", "WhileStatement", "ForStatement", "EnhancedForStatement", "TryStatement",
    "VariableDeclarationStatement", "ReturnStatement", "ThrowStatement", "BreakStatement",
    "ContinueStatement", "ExpressionStatement",
})


def _one(node: RawNode, prop) -> Optional[RawNode]:
    members = node.group(prop)
    return members[0] if members else None


def _escape(text: str) -> str:
    return '"' + text + '"'


def print_expr(node: RawNode, outer: int = 0) -> str:
    k = node.kind
    if k in ("SimpleName", "TypeName", "NumberLiteral", "Placeholder"):
        return node.text or ""
    if k == "StringLiteral":
        return _escape(node.text or "")
    if k == "NullLiteral":
        return "null"
    if k == "ThisExpression":
        return "this"
    if k == "BooleanLiteral":
        return node.prop("value", "true")
    if k == "ParenthesizedExpression":
        return "(" + print_expr(_one(node, "expression")) + ")"
    if k == "Assignment":
        text = f"{print_expr(_one(node, 'left'), 1)} {node.prop('operator')} {print_expr(_one(node, 'right'))}"
        return f"({text})" if outer else text
    if k == "InfixExpression":
        op = node.prop("operator")
        prec = PRECEDENCE.get(op, 1)
        text = f"{print_expr(_one(node, 'left'), prec)} {op} {print_expr(_one(node, 'right'), prec + 1)}"
        return f"({text})" if outer > prec else text
    if k == "PrefixExpression":
        return node.prop("operator") + print_expr(_one(node, "operand"), len(BINARY_LEVELS) + 1)
    if k == "PostfixExpression":
        return print_expr(_one(node, "operand"), len(BINARY_LEVELS) + 1) + node.prop("operator")
    args = "(" + ", ".join(print_expr(a) for a in node.group("arguments")) + ")"
    if k == "MethodInvocation":
        recv = _one(node, "expression")
        prefix = print_expr(recv, len(BINARY_LEVELS) + 1) + "." if recv is not None else ""
        return prefix + node.prop("name") + args
    if k == "ClassInstanceCreation":
        return "new " + node.prop("type") + args
    if k == "FieldAccess":
        return print_expr(_one(node, "expression"), len(BINARY_LEVELS) + 1) + "." + node.prop("name")
    if k == "ArrayAccess":
        return f"{print_expr(_one(node, 'array'), len(BINARY_LEVELS) + 1)}[{print_expr(_one(node, 'index'))}]"
    if k == "VariableDeclarationStatement":
        return _declaration(node)
    if k == "ExpressionList":
        return ", ".join(print_expr(e) for e in node.group("expressions"))
    if k in STATEMENT_KINDS:
        return print_stmt(node, 0)
    raise ValueError(f"cannot print node kind {k!r}")


def _declaration(node):
    text = f"{node.prop('type')} {print_expr(_one(node, 'name'))}"
    init = _one(node, "initializer")
    return text + (f" = {print_expr(init)}" if init is not None else "")


def _body(node: Optional[RawNode], depth: int) -> str:
    """Statement following a header such as ``if (...)``."""
    if node is None:
        return "{ }"
    if node.kind == "Block":
        return _block(node, depth)
    return print_stmt(node, depth).lstrip()


def _block(node: RawNode, depth: int) -> str:
    stmts = node.group("statements")
    if not stmts:
        return "{ }"
    inner = "\n".join(print_stmt(s, depth + 1) for s in stmts)
    return "{\n" + inner + "\n" + INDENT * depth + "}"


def print_stmt(node: RawNode, depth: int = 0) -> str:
    pad = INDENT * depth
    k = node.kind
    if k == "Block":
        return pad + _block(node, depth)
    if k == "Placeholder":
        return pad + (node.text or "")
    if k == "ExpressionStatement":
        return pad + print_expr(_one(node, "expression")) + ";"
    if k == "VariableDeclarationStatement":
        return pad + _declaration(node) + ";"
    if k == "ReturnStatement":
        value = _one(node, "expression")
        return pad + "return" + (" " + print_expr(value) if value is not None else "") + ";"
    if k == "ThrowStatement":
        return pad + "throw " + print_expr(_one(node, "expression")) + ";"
    if k == "BreakStatement":
        return pad + "break;"
    if k == "ContinueStatement":
        return pad + "continue;"
    if k == "IfStatement":
        text = f"{pad}if ({print_expr(_one(node, 'expression'))}) {_body(_one(node, 'then'), depth)}"
        other = _one(node, "else")
        if other is not None:
            text += " else " + _body(other, depth)
        return text
    if k == "WhileStatement":
        return f"{pad}while ({print_expr(_one(node, 'expression'))}) {_body(_one(node, 'body'), depth)}"
    if k == "ForStatement":
        init = ", ".join(print_expr(e) for e in node.group("init"))
        cond = ", ".join(print_expr(e) for e in node.group("expression"))
        update = ", ".join(print_expr(e) for e in node.group("update"))
        header = f"for ({init}; {cond}; {update})".replace("( ;", "(;").replace("; ;", ";;").replace("; )", ";)")
        return f"{pad}{header} {_body(_one(node, 'body'), depth)}"
    if k == "EnhancedForStatement":
        return (f"{pad}for ({node.prop('type')} {print_expr(_one(node, 'name'))} : "
                f"{print_expr(_one(node, 'expression'))}) {_body(_one(node, 'body'), depth)}")
    if k == "TryStatement":
        text = f"{pad}try {_body(_one(node, 'body'), depth)}"
        for clause in node.group("catches"):
            text += " " + _catch(clause, depth)
        fin = _one(node, "finally")
        if fin is not None:
            text += " finally " + _body(fin, depth)
        return text
    if k == "CatchClause":
        return pad + _catch(node, depth)
    return pad + print_expr(node) + ";"


def _catch(node, depth):
    if node.kind == "Placeholder":
        return node.text or ""
    return f"catch ({node.prop('type')} {print_expr(_one(node, 'name'))}) {_body(_one(node, 'body'), depth)}"


def print_program(node: RawNode) -> str:
    """Canonical source text for any parsed or reconstructed node."""
    k = node.kind
    if k == "CompilationUnit":
        lines = [f"import {imp.prop('name')};" for imp in node.group("imports")]
        lines += [print_stmt(s, 0) for s in node.group("statements")]
        return "\n".join(lines)
    if k == "CatchClauses":
        return " ".join(_catch(c, 0) for c in node.group("catches"))
    if k in STATEMENT_KINDS or k == "CatchClause":
        return print_stmt(node, 0)
    return print_expr(node)
