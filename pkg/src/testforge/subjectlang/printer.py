"""Pretty printer; ``parse(pretty(p))`` reproduces ``p`` up to source positions."""
from __future__ import annotations

from . import ast as A

_PREC = {
    "||": 1, "&&": 2, "==": 3, "!=": 3,
    "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5, "*": 6, "/": 6, "%": 6,
}
_UNARY_PREC = 7


def expr_str(e: A.Expr, parent_prec: int = 0) -> str:
    if isinstance(e, A.IntLit):
        s = str(e.value)
        return f"({s})" if e.value < 0 and parent_prec >= _UNARY_PREC else s
    if isinstance(e, A.BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, A.NullLit):
        return "null"
    if isinstance(e, A.Var):
        return e.name
    if isinstance(e, A.Field):
        return f"{expr_str(e.obj, 8)}.{e.name}"
    if isinstance(e, A.New):
        return f"new {e.record}"
    if isinstance(e, A.Call):
        return f"{e.name}({', '.join(expr_str(a) for a in e.args)})"
    if isinstance(e, A.Unary):
        inner = expr_str(e.operand, _UNARY_PREC)
        # keep '-' followed by a literal from re-parsing as a negative literal
        if e.op == "-" and isinstance(e.operand, A.IntLit) and not inner.startswith("("):
            inner = f"({inner})"
        return f"{e.op}{inner}"
    if isinstance(e, A.Binary):
        prec = _PREC[e.op]
        # left-associative: right operand of equal precedence needs parentheses
        s = f"{expr_str(e.left, prec)} {e.op} {expr_str(e.right, prec + 1)}"
        return f"({s})" if prec < parent_prec else s
    raise TypeError(f"not an expression: {e!r}")


def _body(stmts: list[A.Stmt], indent: int) -> list[str]:
    lines = []
    for s in stmts:
        lines.extend(stmt_lines(s, indent))
    return lines


def stmt_lines(s: A.Stmt, indent: int = 1) -> list[str]:
    pad = "    " * indent
    if isinstance(s, A.Decl):
        init = f" = {expr_str(s.init)}" if s.init is not None else ""
        return [f"{pad}{s.type} {s.name}{init};"]
    if isinstance(s, A.Assign):
        return [f"{pad}{s.name} = {expr_str(s.value)};"]
    if isinstance(s, A.Store):
        return [f"{pad}{expr_str(s.target)} = {expr_str(s.value)};"]
    if isinstance(s, A.If):
        out = [f"{pad}if ({expr_str(s.cond)}) {{"] + _body(s.then, indent + 1)
        if s.orelse:
            out += [f"{pad}}} else {{"] + _body(s.orelse, indent + 1)
        return out + [f"{pad}}}"]
    if isinstance(s, A.While):
        return [f"{pad}while ({expr_str(s.cond)}) {{"] + _body(s.body, indent + 1) + [f"{pad}}}"]
    if isinstance(s, A.Return):
        return [f"{pad}return;" if s.value is None else f"{pad}return {expr_str(s.value)};"]
    if isinstance(s, A.Check):
        msg = ""
        if s.message is not None:
            escaped = s.message.replace("\\", "\\\\").replace('"', '\\"')
            msg = f', "{escaped}"'
        return [f"{pad}check({expr_str(s.cond)}{msg});"]
    if isinstance(s, A.ExprStmt):
        return [f"{pad}{expr_str(s.expr)};"]
    raise TypeError(f"not a statement: {s!r}")


def pretty(p: A.Program) -> str:
    chunks = []
    for rec in p.records.values():
        fields = "".join(f"    {f.type} {f.name};\n" for f in rec.fields)
        chunks.append(f"struct {rec.name} {{\n{fields}}}\n")
    for fn in p.functions.values():
        params = ", ".join(f"{q.type} {q.name}" for q in fn.params)
        head = f"{fn.ret} {fn.name}({params})"
        if fn.requires is not None:
            head += f"\n    requires {expr_str(fn.requires)}"
        if fn.ensures is not None:
            head += f"\n    ensures {expr_str(fn.ensures)}"
        chunks.append("\n".join([head + " {"] + _body(fn.body, 1) + ["}"]) + "\n")
    return "\n".join(chunks)
