"""Lexer and recursive-descent parser for the C-like subject language.

Grammar (informal)::

    program  := (record | function)*
    record   := 'struct' IDENT '{' (type IDENT ';')* '}' ';'?
    function := type IDENT '(' [type IDENT (',' type IDENT)*] ')'
                ['requires' expr] ['ensures' expr] block
    block    := '{' stmt* '}'
    stmt     := type IDENT ['=' expr] ';'
              | IDENT ('=' | '+=' | '-=' | '*=') expr ';'
              | postfix '.' IDENT ('=' | '+=' | '-=' | '*=') expr ';'
              | 'if' '(' expr ')' body ['else' body]
              | 'while' '(' expr ')' body
              | 'return' [expr] ';'
              | 'check' '(' expr [',' STRING] ')' ';'
              | call ';'
    body     := block | stmt

Expression precedence follows C: ``||`` < ``&&`` < equality < relational <
additive < multiplicative < unary < postfix.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from . import ast as A
from .values import INT_MAX

KEYWORDS = {
    "struct", "int", "bool", "void", "if", "else", "while", "return", "check",
    "requires", "ensures", "true", "false", "null", "new",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<op>&&|\|\||==|!=|<=|>=|\+=|-=|\*=|[{}();,.=<>+\-*/%!])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str  # 'int', 'ident', 'kw', 'string', 'op', 'eof'
    text: str
    line: int
    col: int

    def describe(self) -> str:
        return "end of input" if self.kind == "eof" else repr(self.text)


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int, expected: tuple[str, ...] = ()):
        self.message = message
        self.line = line
        self.col = col
        self.expected = expected
        super().__init__(f"{line}:{col}: {message}")

    def format(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.message}"


def tokenize(source: str) -> list[Token]:
    toks: list[Token] = []
    pos, line, line_start = 0, 1, 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "comment":
            nls = text.count("\n")
            if nls:
                line += nls
                line_start = pos + text.rfind("\n") + 1
        elif kind == "ident":
            toks.append(Token("kw" if text in KEYWORDS else "ident", text, line, col))
        elif kind != "ws":
            toks.append(Token(kind, text, line, col))
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1))
    return toks


_COMPOUND = {"+=": "+", "-=": "-", "*=": "*"}
_BINARY_LEVELS = [
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
]


class Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0

    # -- token helpers -------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.text in texts

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def error(self, expected: tuple[str, ...]):
        t = self.tok
        exp = " or ".join(expected)
        raise ParseError(f"expected {exp}, found {t.describe()}", t.line, t.col, expected)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error((repr(text),))
        return self.advance()

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            self.error(("identifier",))
        return self.advance()

    # -- declarations --------------------------------------------------------

    def program(self) -> A.Program:
        prog = A.Program()
        while self.tok.kind != "eof":
            start = self.tok
            if self.at("struct"):
                rec = self.record()
                if rec.name in prog.records or rec.name in prog.functions:
                    raise ParseError(f"duplicate declaration of {rec.name!r}", start.line, start.col)
                prog.records[rec.name] = rec
            else:
                fn = self.function()
                if fn.name in prog.functions or fn.name in prog.records:
                    raise ParseError(f"duplicate declaration of {fn.name!r}", start.line, start.col)
                prog.functions[fn.name] = fn
        return prog

    def record(self) -> A.RecordDecl:
        kw = self.expect("struct")
        name = self.ident().text
        self.expect("{")
        fields: list[A.Param] = []
        while not self.at("}"):
            t = self.tok
            ty = self.type_name()
            fname = self.ident().text
            if any(f.name == fname for f in fields):
                raise ParseError(f"duplicate field {fname!r} in {name}", t.line, t.col)
            fields.append(A.Param(fname, ty))
            self.expect(";")
        self.expect("}")
        if self.at(";"):
            self.advance()
        return A.RecordDecl(name, fields, kw.line, kw.col)

    def is_type_start(self) -> bool:
        t = self.tok
        return (t.kind == "kw" and t.text in A.PRIMITIVES) or t.kind == "ident"

    def type_name(self) -> str:
        t = self.tok
        if t.kind == "kw" and t.text in A.PRIMITIVES:
            return self.advance().text
        if t.kind == "ident":
            return self.advance().text
        self.error(("type",))

    def function(self) -> A.FunctionDef:
        start = self.tok
        if not self.is_type_start():
            self.error(("'struct'", "type"))
        ret = self.type_name()
        name = self.ident().text
        self.expect("(")
        params: list[A.Param] = []
        if not self.at(")"):
            while True:
                ty = self.type_name()
                pt = self.ident()
                if any(p.name == pt.text for p in params):
                    raise ParseError(f"duplicate parameter {pt.text!r}", pt.line, pt.col)
                params.append(A.Param(pt.text, ty))
                if not self.at(","):
                    break
                self.advance()
        self.expect(")")
        requires = ensures = None
        if self.at("requires"):
            self.advance()
            requires = self.expr()
        if self.at("ensures"):
            self.advance()
            ensures = self.expr()
        body = self.block()
        return A.FunctionDef(name, params, ret, body, requires, ensures, start.line, start.col)

    # -- statements ----------------------------------------------------------

    def block(self) -> list[A.Stmt]:
        self.expect("{")
        stmts: list[A.Stmt] = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.error(("'}'",))
            stmts.append(self.stmt())
        self.advance()
        return stmts

    def body(self) -> list[A.Stmt]:
        if self.at("{"):
            return self.block()
        return [self.stmt()]

    def stmt(self) -> A.Stmt:
        t = self.tok
        if self.at("if"):
            self.advance()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then = self.body()
            orelse: list[A.Stmt] = []
            if self.at("else"):
                self.advance()
                orelse = self.body()
            return A.If(cond, then, orelse, t.line, t.col)
        if self.at("while"):
            self.advance()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            return A.While(cond, self.body(), t.line, t.col)
        if self.at("return"):
            self.advance()
            value = None if self.at(";") else self.expr()
            self.expect(";")
            return A.Return(value, t.line, t.col)
        if self.at("check"):
            self.advance()
            self.expect("(")
            cond = self.expr()
            message = None
            if self.at(","):
                self.advance()
                if self.tok.kind != "string":
                    self.error(("string literal",))
                message = _unquote(self.advance().text)
            self.expect(")")
            self.expect(";")
            return A.Check(cond, message, t.line, t.col)
        # declaration: type followed by identifier
        if (t.kind == "kw" and t.text in ("int", "bool")) or (
            t.kind == "ident" and self.peek().kind == "ident"
        ):
            ty = self.type_name()
            name = self.ident().text
            init = None
            if self.at("="):
                self.advance()
                init = self.expr()
            self.expect(";")
            return A.Decl(ty, name, init, t.line, t.col)
        if t.kind == "ident" and self.peek().kind == "op" and self.peek().text in ("=", "+=", "-=", "*="):
            name = self.advance().text
            op = self.advance().text
            value = self.expr()
            if op != "=":
                value = A.Binary(_COMPOUND[op], A.Var(name, t.line, t.col), value, t.line, t.col)
            self.expect(";")
            return A.Assign(name, value, t.line, t.col)
        lhs = self.postfix()
        if self.at("=", "+=", "-=", "*="):
            if not isinstance(lhs, A.Field):
                self.error(("';'",))
            op = self.advance().text
            value = self.expr()
            if op != "=":
                value = A.Binary(_COMPOUND[op], A.Field(lhs.obj, lhs.name, lhs.line, lhs.col), value, t.line, t.col)
            self.expect(";")
            return A.Store(lhs, value, t.line, t.col)
        if isinstance(lhs, A.Call):
            self.expect(";")
            return A.ExprStmt(lhs, t.line, t.col)
        self.error(("'='",))

    # -- expressions ---------------------------------------------------------

    def expr(self) -> A.Expr:
        return self.binary(0)

    def binary(self, level: int) -> A.Expr:
        if level == len(_BINARY_LEVELS):
            return self.unary()
        left = self.binary(level + 1)
        ops = _BINARY_LEVELS[level]
        while self.tok.kind == "op" and self.tok.text in ops:
            op_tok = self.advance()
            right = self.binary(level + 1)
            left = A.Binary(op_tok.text, left, right, op_tok.line, op_tok.col)
        return left

    def unary(self) -> A.Expr:
        t = self.tok
        if self.at("-"):
            self.advance()
            if self.tok.kind == "int":
                lit = self.advance()
                v = int(lit.text)
                if v > INT_MAX + 1:
                    raise ParseError(f"integer literal {lit.text} out of range", lit.line, lit.col)
                return A.IntLit(-v, t.line, t.col)
            return A.Unary("-", self.unary(), t.line, t.col)
        if self.at("!"):
            self.advance()
            return A.Unary("!", self.unary(), t.line, t.col)
        return self.postfix()

    def postfix(self) -> A.Expr:
        e = self.primary()
        while self.at("."):
            self.advance()
            name = self.ident()
            e = A.Field(e, name.text, name.line, name.col)
        return e

    def primary(self) -> A.Expr:
        t = self.tok
        if t.kind == "int":
            self.advance()
            v = int(t.text)
            if v > INT_MAX:
                raise ParseError(f"integer literal {t.text} out of range", t.line, t.col)
            return A.IntLit(v, t.line, t.col)
        if self.at("true", "false"):
            self.advance()
            return A.BoolLit(t.text == "true", t.line, t.col)
        if self.at("null"):
            self.advance()
            return A.NullLit(t.line, t.col)
        if self.at("new"):
            self.advance()
            rec = self.ident()
            if self.at("("):
                self.advance()
                self.expect(")")
            return A.New(rec.text, t.line, t.col)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.advance()
            if self.at("("):
                self.advance()
                args: list[A.Expr] = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.at(","):
                        self.advance()
                        args.append(self.expr())
                self.expect(")")
                return A.Call(t.text, args, t.line, t.col)
            return A.Var(t.text, t.line, t.col)
        self.error(("expression",))


def _unquote(text: str) -> str:
    return bytes(text[1:-1], "utf-8").decode("unicode_escape")


def parse(source: str) -> A.Program:
    """Parse a complete translation unit. Raises :class:`ParseError`."""
    return Parser(source).program()


def parse_expr(source: str) -> A.Expr:
    p = Parser(source)
    e = p.expr()
    if p.tok.kind != "eof":
        p.error(("end of input",))
    return e
