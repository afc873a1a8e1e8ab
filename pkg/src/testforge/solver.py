"""Bounded integer constraint solver over 32-bit wraparound arithmetic.

Search is interval propagation (forward evaluation, backward narrowing) plus
branching. Intervals are kept on wrapped values; an arithmetic result whose
unbounded range falls inside a single 2^32 window is shifted back exactly,
otherwise it widens to the full int32 range. Boxes small enough are settled by
vectorized enumeration.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, NamedTuple, Optional, Union

import numpy as np

from .subjectlang.values import INT_MAX, INT_MIN, tdiv, tmod, wrap32

DEFAULT_BUDGET = 10**6
_SWEEPS = 30
_SMALL = 8
_LEAF = 1 << 15
# term evaluations that count as one extra search node, so that huge
# constraint sets cannot make a single node arbitrarily expensive
_WORK_PER_NODE = 200
_FULL = (INT_MIN, INT_MAX)
_W = 1 << 32


class MalformedConstraint(ValueError):
    pass


# -- expressions ---------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    value: int

    def __str__(self) -> str:
        return str(self.value) if self.value >= 0 else f"({self.value})"


@dataclass(frozen=True)
class Neg:
    arg: SymExpr

    def __str__(self) -> str:
        return f"-{self.arg}"


@dataclass(frozen=True)
class Add:
    left: SymExpr
    right: SymExpr

    def __str__(self) -> str:
        return f"({self.left} + {self.right})"


@dataclass(frozen=True)
class Sub:
    left: SymExpr
    right: SymExpr

    def __str__(self) -> str:
        return f"({self.left} - {self.right})"


@dataclass(frozen=True)
class Mul:
    left: SymExpr
    right: SymExpr

    def __str__(self) -> str:
        return f"({self.left} * {self.right})"


@dataclass(frozen=True)
class Div:
    arg: SymExpr
    divisor: int

    def __post_init__(self):
        if self.divisor == 0:
            raise MalformedConstraint("division by constant zero")

    def __str__(self) -> str:
        return f"({self.arg} / {Const(self.divisor)})"


@dataclass(frozen=True)
class Mod:
    arg: SymExpr
    divisor: int

    def __post_init__(self):
        if self.divisor == 0:
            raise MalformedConstraint("modulo by constant zero")

    def __str__(self) -> str:
        return f"({self.arg} % {Const(self.divisor)})"


SymExpr = Union[Var, Const, Neg, Add, Sub, Mul, Div, Mod]

RELATIONS = ("<", "<=", ">", ">=", "==", "!=")
_NEGATED = {"<": ">=", ">=": "<", "<=": ">", ">": "<=", "==": "!=", "!=": "=="}
_MIRRORED = {"<": ">", ">": "<", "<=": ">=", ">=": "<=", "==": "==", "!=": "!="}


class Origin(NamedTuple):
    """Where a constraint came from: a branch location and the side taken."""

    loc: Any
    polarity: bool


@dataclass(frozen=True)
class Constraint:
    rel: str
    lhs: SymExpr
    rhs: SymExpr
    origin: Optional[Origin] = None

    def __post_init__(self):
        if self.rel not in RELATIONS:
            raise MalformedConstraint(f"unknown relation {self.rel!r}")

    def __str__(self) -> str:
        return f"{_strip(str(self.lhs))} {self.rel} {_strip(str(self.rhs))}"


def _strip(s: str) -> str:
    return s[1:-1] if s.startswith("(") and s.endswith(")") and _balanced(s[1:-1]) else s


def _balanced(s: str) -> bool:
    depth = 0
    for ch in s:
        depth += (ch == "(") - (ch == ")")
        if depth < 0:
            return False
    return depth == 0


def negate(c: Constraint) -> Constraint:
    origin = c.origin._replace(polarity=not c.origin.polarity) if c.origin is not None else None
    return Constraint(_NEGATED[c.rel], c.lhs, c.rhs, origin)


def dump(cs: list[Constraint]) -> str:
    """One constraint per line, for debugging."""
    return "".join(f"{c}\n" for c in cs)


# -- concrete evaluation -------------------------------------------------------

def evaluate(e: SymExpr, model: dict[str, int]) -> int:
    if isinstance(e, Var):
        return model[e.name]
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Neg):
        return wrap32(-evaluate(e.arg, model))
    if isinstance(e, Add):
        return wrap32(evaluate(e.left, model) + evaluate(e.right, model))
    if isinstance(e, Sub):
        return wrap32(evaluate(e.left, model) - evaluate(e.right, model))
    if isinstance(e, Mul):
        return wrap32(evaluate(e.left, model) * evaluate(e.right, model))
    if isinstance(e, Div):
        return wrap32(tdiv(evaluate(e.arg, model), e.divisor))
    if isinstance(e, Mod):
        return wrap32(tmod(evaluate(e.arg, model), e.divisor))
    raise MalformedConstraint(f"not a symbolic expression: {e!r}")


def _compare(rel: str, a, b):
    if rel == "<":
        return a < b
    if rel == "<=":
        return a <= b
    if rel == ">":
        return a > b
    if rel == ">=":
        return a >= b
    if rel == "==":
        return a == b
    return a != b


def holds(c: Constraint, model: dict[str, int]) -> bool:
    return bool(_compare(c.rel, evaluate(c.lhs, model), evaluate(c.rhs, model)))


def variables(e: SymExpr | Constraint, out: dict[str, None] | None = None) -> dict[str, None]:
    """Variable names in first-occurrence order (an ordered set)."""
    out = {} if out is None else out
    if isinstance(e, Constraint):
        variables(e.lhs, out)
        variables(e.rhs, out)
    elif isinstance(e, Var):
        out.setdefault(e.name)
    elif isinstance(e, (Neg, Div, Mod)):
        variables(e.arg, out)
    elif isinstance(e, (Add, Sub, Mul)):
        variables(e.left, out)
        variables(e.right, out)
    return out


def substitute(e: SymExpr, env: dict[str, int]) -> SymExpr:
    if isinstance(e, Var):
        return Const(env[e.name]) if e.name in env else e
    if isinstance(e, Const):
        return e
    if isinstance(e, (Neg,)):
        return Neg(substitute(e.arg, env))
    if isinstance(e, (Div, Mod)):
        return type(e)(substitute(e.arg, env), e.divisor)
    return type(e)(substitute(e.left, env), substitute(e.right, env))


# -- simplification ------------------------------------------------------------

def fold(e: SymExpr) -> SymExpr:
    """Constant folding and removal of arithmetic identities."""
    if isinstance(e, (Var, Const)):
        return e
    if isinstance(e, Neg):
        a = fold(e.arg)
        if isinstance(a, Const):
            return Const(wrap32(-a.value))
        if isinstance(a, Neg):
            return a.arg
        return Neg(a)
    if isinstance(e, (Div, Mod)):
        a = fold(e.arg)
        if isinstance(a, Const):
            return Const(evaluate(type(e)(a, e.divisor), {}))
        if isinstance(e, Div) and e.divisor == 1:
            return a
        if isinstance(e, Div) and e.divisor == -1:
            return fold(Neg(a))
        if isinstance(e, Mod) and abs(e.divisor) == 1:
            return Const(0)
        return type(e)(a, e.divisor)
    a, b = fold(e.left), fold(e.right)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(evaluate(type(e)(a, b), {}))
    if isinstance(e, Add):
        if a == Const(0):
            return b
        if b == Const(0):
            return a
    elif isinstance(e, Sub):
        if b == Const(0):
            return a
        if a == Const(0):
            return fold(Neg(b))
    elif isinstance(e, Mul):
        if Const(0) in (a, b):
            return Const(0)
        if a == Const(1):
            return b
        if b == Const(1):
            return a
        if a == Const(-1):
            return fold(Neg(b))
        if b == Const(-1):
            return fold(Neg(a))
    return type(e)(a, b)


def _linear(e: SymExpr) -> tuple[dict, int]:
    """Coefficients (mod 2^32) of the non-linear atoms of ``e``, plus the constant term."""
    if isinstance(e, Const):
        return {}, e.value % _W
    if isinstance(e, Neg):
        terms, k = _linear(e.arg)
        return {a: -c % _W for a, c in terms.items()}, -k % _W
    if isinstance(e, (Add, Sub)):
        (ta, ka), (tb, kb) = _linear(e.left), _linear(e.right)
        sign = 1 if isinstance(e, Add) else -1
        out = dict(ta)
        for a, c in tb.items():
            out[a] = (out.get(a, 0) + sign * c) % _W
        return out, (ka + sign * kb) % _W
    if isinstance(e, Mul):
        (ta, ka), (tb, kb) = _linear(e.left), _linear(e.right)
        if not ta or not tb:
            terms, k, f = (tb, kb, ka) if not ta else (ta, ka, kb)
            return {a: c * f % _W for a, c in terms.items()}, k * f % _W
        return {Mul(linearize(e.left), linearize(e.right)): 1}, 0
    if isinstance(e, (Div, Mod)):
        arg = linearize(e.arg)
        if isinstance(arg, Const):
            return {}, evaluate(type(e)(arg, e.divisor), {}) % _W
        return {type(e)(arg, e.divisor): 1}, 0
    return {e: 1}, 0


def linearize(e: SymExpr) -> SymExpr:
    """Rewrite every linear part of ``e`` as a canonical sum of coefficient-atom terms.

    Addition, subtraction, negation and multiplication by a constant are ring
    operations modulo 2^32, so the rewrite is exact under wraparound.
    """
    terms, k = _linear(e)
    acc = None
    for atom, c in terms.items():
        c = wrap32(c)
        if c == 0:
            continue
        if acc is None:
            acc = atom if c == 1 else Neg(atom) if c == -1 else Mul(Const(c), atom)
        elif c > 0 or c == INT_MIN:
            acc = Add(acc, atom if c == 1 else Mul(Const(c), atom))
        else:
            acc = Sub(acc, atom if c == -1 else Mul(Const(-c), atom))
    k = wrap32(k)
    if acc is None:
        return Const(k)
    if k == 0:
        return acc
    return Sub(acc, Const(-k)) if INT_MIN < k < 0 else Add(acc, Const(k))


_FALSE = Constraint("!=", Const(0), Const(0))


def _bound_of(c: Constraint):
    """(name, lo, hi) when ``c`` is a variable compared against a constant, else None."""
    lhs, rel, rhs = c.lhs, c.rel, c.rhs
    if isinstance(lhs, Const) and isinstance(rhs, Var):
        lhs, rhs, rel = rhs, lhs, _MIRRORED[rel]
    if not (isinstance(lhs, Var) and isinstance(rhs, Const)) or rel == "!=":
        return None
    k = rhs.value
    lo, hi = {
        "<": (INT_MIN, k - 1), "<=": (INT_MIN, k), ">": (k + 1, INT_MAX),
        ">=": (k, INT_MAX), "==": (k, k),
    }[rel]
    return lhs.name, lo, hi


def simplify(cs: list[Constraint]) -> list[Constraint]:
    """Fold constants, normalize linear terms, drop tautologies, merge variable bounds
    and substitute fixed variables.

    The result has exactly the same models as the input. An unsatisfiable
    system collapses to the single constraint ``0 != 0``.
    """
    work = list(cs)
    for _ in range(64):
        folded: list[Constraint] = []
        for c in work:
            c = Constraint(c.rel, linearize(fold(c.lhs)), linearize(fold(c.rhs)), c.origin)
            if isinstance(c.lhs, Const) and isinstance(c.rhs, Const):
                if not holds(c, {}):
                    return [_FALSE]
                continue
            folded.append(c)
        # merge bounds of the form var REL const, keeping the first position
        bounds: dict[str, list] = {}
        order: list[Union[Constraint, str]] = []
        for c in folded:
            b = _bound_of(c)
            if b is None:
                if c not in order:
                    order.append(c)
                continue
            name, lo, hi = b
            if name in bounds:
                cur = bounds[name]
                cur[0], cur[1] = max(cur[0], lo), min(cur[1], hi)
                cur[2] = None
            else:
                bounds[name] = [lo, hi, c]
                order.append(name)
        out: list[Constraint] = []
        fixed: dict[str, int] = {}
        for item in order:
            if isinstance(item, Constraint):
                out.append(item)
                continue
            lo, hi, single = bounds[item]
            if lo > hi:
                return [_FALSE]
            v = Var(item)
            if lo == hi:
                fixed[item] = lo
            if single is not None:
                out.append(single)
            elif lo == hi:
                out.append(Constraint("==", v, Const(lo)))
            else:
                if lo > INT_MIN:
                    out.append(Constraint(">=", v, Const(lo)))
                if hi < INT_MAX:
                    out.append(Constraint("<=", v, Const(hi)))
        if fixed:
            subst = []
            for c in out:
                if _bound_of(c) is None:
                    c = Constraint(c.rel, substitute(c.lhs, fixed), substitute(c.rhs, fixed), c.origin)
                subst.append(c)
            out = subst
        if out == work:
            return out
        work = out
    return work


# -- interval propagation ------------------------------------------------------

def _wrap_hull(a: int, b: int) -> tuple[int, int]:
    """Wrapped-value hull of the unbounded interval [a, b]."""
    if a >= INT_MIN and b <= INT_MAX:
        return a, b
    ka = (a - INT_MIN) >> 32
    if ka == (b - INT_MIN) >> 32:
        s = ka << 32
        return a - s, b - s
    return _FULL


def _unwrap(a: int, b: int, lo: int, hi: int):
    """Hull of the values v in [a, b] whose wrapped value lies in [lo, hi]; None if empty."""
    ka, kb = (a - INT_MIN) >> 32, (b - INT_MIN) >> 32
    if kb - ka > 3:
        return a, b
    rlo = rhi = None
    for k in range(ka, kb + 1):
        s = k << 32
        plo, phi = max(a, lo + s), min(b, hi + s)
        if plo <= phi:
            rlo = plo if rlo is None else rlo
            rhi = phi
    return None if rlo is None else (rlo, rhi)


def _mod_range(lo: int, hi: int, m: int) -> tuple[int, int]:
    if lo >= 0:
        if lo // m == hi // m:
            return lo % m, hi % m
        return 0, min(m - 1, hi)
    if hi <= 0:
        if tdiv(lo, m) == tdiv(hi, m):
            return tmod(lo, m), tmod(hi, m)
        return max(-(m - 1), lo), 0
    return max(-(m - 1), lo), min(m - 1, hi)


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


class _Empty(Exception):
    pass


class _Propagator:
    def __init__(self, box: dict[str, tuple[int, int]]):
        self.box = box
        self.memo: dict[int, tuple[int, int]] = {}
        self.changed = False
        self.work = 0

    def fwd(self, e: SymExpr) -> tuple[int, int]:
        # shared subterms are evaluated once per pass; a stale range is a
        # superset of the current one, so reuse stays sound
        if isinstance(e, Var):
            r = self.box[e.name]
            self.memo[id(e)] = r
            return r
        hit = self.memo.get(id(e))
        if hit is not None:
            return hit
        self.work += 1
        if isinstance(e, Const):
            r = (e.value, e.value)
        elif isinstance(e, Neg) or (isinstance(e, Div) and e.divisor == -1):
            lo, hi = self.fwd(e.arg)
            r = _wrap_hull(-hi, -lo)
        elif isinstance(e, Add):
            (alo, ahi), (blo, bhi) = self.fwd(e.left), self.fwd(e.right)
            r = _wrap_hull(alo + blo, ahi + bhi)
        elif isinstance(e, Sub):
            (alo, ahi), (blo, bhi) = self.fwd(e.left), self.fwd(e.right)
            r = _wrap_hull(alo - bhi, ahi - blo)
        elif isinstance(e, Mul):
            (alo, ahi), (blo, bhi) = self.fwd(e.left), self.fwd(e.right)
            ps = (alo * blo, alo * bhi, ahi * blo, ahi * bhi)
            r = _wrap_hull(min(ps), max(ps))
        elif isinstance(e, Div):
            lo, hi = self.fwd(e.arg)
            c = e.divisor
            r = (tdiv(lo, c), tdiv(hi, c)) if c > 0 else (tdiv(hi, c), tdiv(lo, c))
        elif isinstance(e, Mod):
            lo, hi = self.fwd(e.arg)
            r = _mod_range(lo, hi, abs(e.divisor))
        else:
            raise MalformedConstraint(f"not a symbolic expression: {e!r}")
        self.memo[id(e)] = r
        return r

    def bwd(self, e: SymExpr, lo: int, hi: int) -> None:
        clo, chi = self.memo[id(e)]
        lo, hi = max(lo, clo), min(hi, chi)
        if lo > hi:
            raise _Empty
        if (lo, hi) == (clo, chi) and not isinstance(e, Mul):
            return
        if isinstance(e, Var):
            blo, bhi = self.box[e.name]
            lo, hi = max(lo, blo), min(hi, bhi)
            if lo > hi:
                raise _Empty
            if (lo, hi) == (blo, bhi):
                return
            self.box[e.name] = (lo, hi)
            # tiny cuts off a huge domain are not worth another sweep
            if hi - lo < 256 or 10 * (hi - lo) < 9 * (chi - clo):
                self.changed = True
        elif isinstance(e, Neg) or (isinstance(e, Div) and e.divisor == -1):
            alo, ahi = self.memo[id(e.arg)]
            t = self._unwrap(-ahi, -alo, lo, hi)
            self.bwd(e.arg, -t[1], -t[0])
        elif isinstance(e, Add):
            (alo, ahi), (blo, bhi) = self.memo[id(e.left)], self.memo[id(e.right)]
            tlo, thi = self._unwrap(alo + blo, ahi + bhi, lo, hi)
            self.bwd(e.left, tlo - bhi, thi - blo)
            self.bwd(e.right, tlo - ahi, thi - alo)
        elif isinstance(e, Sub):
            (alo, ahi), (blo, bhi) = self.memo[id(e.left)], self.memo[id(e.right)]
            tlo, thi = self._unwrap(alo - bhi, ahi - blo, lo, hi)
            self.bwd(e.left, tlo + blo, thi + bhi)
            self.bwd(e.right, alo - thi, ahi - tlo)
        elif isinstance(e, Mul):
            a, b = self.memo[id(e.left)], self.memo[id(e.right)]
            if b[0] == b[1]:
                self._bwd_mul(e.left, a, b[0], lo, hi)
            elif a[0] == a[1]:
                self._bwd_mul(e.right, b, a[0], lo, hi)
        elif isinstance(e, Div):
            m = abs(e.divisor)
            if e.divisor < 0:
                lo, hi = -hi, -lo
            xlo = lo * m if lo > 0 else lo * m - (m - 1)
            xhi = hi * m + (m - 1) if hi >= 0 else hi * m
            self.bwd(e.arg, xlo, xhi)
        elif isinstance(e, Mod):
            if lo > 0:
                self.bwd(e.arg, 1, INT_MAX)
            elif hi < 0:
                self.bwd(e.arg, INT_MIN, -1)

    @staticmethod
    def _unwrap(a, b, lo, hi):
        t = _unwrap(a, b, lo, hi)
        if t is None:
            raise _Empty
        return t

    def _bwd_mul(self, x: SymExpr, xr: tuple[int, int], c: int, lo: int, hi: int) -> None:
        """Narrow ``x`` given ``x * c`` (wrapped) lies in [lo, hi]."""
        if c == 0:
            return
        xlo, xhi = xr
        if lo == hi:
            # exact: x * c == lo (mod 2^32)
            cu = c % _W
            k = (cu & -cu).bit_length() - 1
            if lo % (1 << k):
                raise _Empty
            m = 1 << (32 - k)
            base = ((lo >> k) * pow(cu >> k, -1, m)) % m
            first = xlo + (base - xlo) % m
            last = xhi - (xhi - base) % m
            if first > last:
                raise _Empty
            self.bwd(x, first, last)
            return
        p = (xlo * c, xhi * c)
        tlo, thi = self._unwrap(min(p), max(p), lo, hi)
        if c > 0:
            self.bwd(x, _ceil_div(tlo, c), thi // c)
        else:
            self.bwd(x, _ceil_div(thi, c), tlo // c)

    def narrow(self, c: Constraint) -> None:
        self.memo = {}
        llo, lhi = self.fwd(c.lhs)
        rlo, rhi = self.fwd(c.rhs)
        rel = c.rel
        if rel == "<":
            nl, nr = (llo, min(lhi, rhi - 1)), (max(rlo, llo + 1), rhi)
        elif rel == "<=":
            nl, nr = (llo, min(lhi, rhi)), (max(rlo, llo), rhi)
        elif rel == ">":
            nl, nr = (max(llo, rlo + 1), lhi), (rlo, min(rhi, lhi - 1))
        elif rel == ">=":
            nl, nr = (max(llo, rlo), lhi), (rlo, min(rhi, lhi))
        elif rel == "==":
            lo, hi = max(llo, rlo), min(lhi, rhi)
            nl = nr = (lo, hi)
        else:
            nl, nr = _shave(llo, lhi, rlo, rhi), _shave(rlo, rhi, llo, lhi)
        self.bwd(c.lhs, *nl)
        self.bwd(c.rhs, *nr)

    def status(self, c: Constraint) -> Optional[bool]:
        """True if entailed by the box, False if refuted, None if undecided."""
        self.memo = {}
        llo, lhi = self.fwd(c.lhs)
        rlo, rhi = self.fwd(c.rhs)
        rel = c.rel
        if rel == "<":
            return True if lhi < rlo else False if llo >= rhi else None
        if rel == "<=":
            return True if lhi <= rlo else False if llo > rhi else None
        if rel == ">":
            return True if llo > rhi else False if lhi <= rlo else None
        if rel == ">=":
            return True if llo >= rhi else False if lhi < rlo else None
        disjoint = lhi < rlo or rhi < llo
        same = llo == lhi == rlo == rhi
        if rel == "==":
            return True if same else False if disjoint else None
        return True if disjoint else False if same else None


def _shave(lo: int, hi: int, olo: int, ohi: int) -> tuple[int, int]:
    """Narrow [lo, hi] for ``!= other`` when the other side is a single value."""
    if olo != ohi:
        return lo, hi
    if lo == olo:
        lo += 1
    if hi == olo:
        hi -= 1
    return lo, hi


def _propagate(box: dict[str, tuple[int, int]], cs: list[Constraint]) -> tuple[bool, int]:
    """Narrow ``box`` in place; return (consistent, work done)."""
    prop = _Propagator(box)
    try:
        for _ in range(_SWEEPS):
            prop.changed = False
            for c in cs:
                prop.narrow(c)
            if not prop.changed:
                break
    except _Empty:
        return False, prop.work
    return True, prop.work


# -- vectorized enumeration ----------------------------------------------------

def _np_eval(e: SymExpr, env: dict[str, np.ndarray], memo: Optional[dict] = None) -> np.ndarray:
    # terms from loops share subterms heavily, so evaluate each node once
    if memo is None:
        memo = {}
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit[1]
    if isinstance(e, Var):
        out = env[e.name]
    elif isinstance(e, Const):
        out = np.int64(e.value)
    elif isinstance(e, Neg):
        out = _np_wrap(-_np_eval(e.arg, env, memo))
    elif isinstance(e, Add):
        out = _np_wrap(_np_eval(e.left, env, memo) + _np_eval(e.right, env, memo))
    elif isinstance(e, Sub):
        out = _np_wrap(_np_eval(e.left, env, memo) - _np_eval(e.right, env, memo))
    elif isinstance(e, Mul):
        out = _np_wrap(_np_eval(e.left, env, memo) * _np_eval(e.right, env, memo))
    else:
        a = _np_eval(e.arg, env, memo)
        c = e.divisor
        q = np.abs(a) // abs(c)
        q = np.where((a < 0) != (c < 0), -q, q)
        out = _np_wrap(q if isinstance(e, Div) else a - c * q)
    memo[key] = (e, out)  # keep e alive so its id stays unique
    return out


def _np_wrap(a):
    return ((a - INT_MIN) & (_W - 1)) + INT_MIN


_NP_REL = {
    "<": np.less, "<=": np.less_equal, ">": np.greater,
    ">=": np.greater_equal, "==": np.equal, "!=": np.not_equal,
}


def _enumerate_box(box, names, cs, targets, memo):
    """Settle a small box exhaustively; return the best assignment or None.

    ``memo`` receives every evaluated subterm, so its size measures the work.
    """
    axes = [np.arange(box[n][0], box[n][1] + 1, dtype=np.int64) for n in names]
    grid = np.meshgrid(*axes, indexing="ij")
    env = {n: g.ravel() for n, g in zip(names, grid)}
    for n, (lo, hi) in box.items():
        if n not in env and lo == hi:
            env[n] = np.int64(lo)
    ok = np.ones(env[names[0]].shape, dtype=bool)
    for c in cs:
        ok &= _NP_REL[c.rel](_np_eval(c.lhs, env, memo), _np_eval(c.rhs, env, memo))
        if not ok.any():
            return None
    score = sum(np.abs(env[n] - targets[n]) for n in names)
    i = int(np.argmin(np.where(ok, score, np.iinfo(np.int64).max)))
    return {n: int(env[n][i]) for n in names}


# -- search --------------------------------------------------------------------

@dataclass
class Result:
    status: str  # 'sat' | 'unsat' | 'unknown'
    model: Optional[dict[str, int]] = None
    nodes: int = 0

    @property
    def sat(self) -> bool:
        return self.status == "sat"


SAT, UNSAT, UNKNOWN = "sat", "unsat", "unknown"


def _factor_target(c: Constraint):
    """``(a, b, k)`` when ``c`` reads ``a * b == k`` for distinct variables and k != 0."""
    if c.rel != "==":
        return None
    lhs, rhs = c.lhs, c.rhs
    if isinstance(lhs, Const):
        lhs, rhs = rhs, lhs
    if (isinstance(lhs, Mul) and isinstance(rhs, Const) and rhs.value != 0
            and isinstance(lhs.left, Var) and isinstance(lhs.right, Var)
            and lhs.left.name != lhs.right.name):
        return lhs.left.name, lhs.right.name, rhs.value
    return None


def _divisors(k: int) -> list[int]:
    k = abs(k)
    small = [d for d in range(1, int(k**0.5) + 1) if k % d == 0]
    ds = sorted(set(small + [k // d for d in small]))
    return [s * d for d in ds for s in (1, -1)]


def _outward_key(t: int):
    return lambda v: (abs(v - t), v < t)


def _check_domains(cs, domains):
    for c in cs:
        if not isinstance(c, Constraint):
            raise MalformedConstraint(f"not a constraint: {c!r}")
        for name in variables(c):
            if name not in domains:
                raise MalformedConstraint(f"variable {name!r} has no domain")
    for name, (lo, hi) in domains.items():
        if not (INT_MIN <= lo <= hi <= INT_MAX):
            raise MalformedConstraint(f"domain of {name!r} must be a nonempty int32 interval")


def solve(cs: list[Constraint], domains: dict[str, tuple[int, int]],
          budget: int = DEFAULT_BUDGET) -> Result:
    """Decide ``cs`` over the given variable domains.

    The model covers every variable in ``domains`` and is re-checked against
    ``cs`` by substitution before it is returned.
    """
    _check_domains(cs, domains)
    work = simplify(cs)
    order = {n: i for i, n in enumerate(domains)}
    targets = {n: max(lo, min(hi, tdiv(lo + hi, 2))) for n, (lo, hi) in domains.items()}
    occurrences = {n: 0 for n in domains}
    for c in work:
        for n in variables(c):
            occurrences[n] += 1

    def finish(box, overrides=None):
        model = {n: max(lo, min(hi, targets[n])) for n, (lo, hi) in box.items()}
        if overrides:
            model.update(overrides)
        return model if all(holds(c, model) for c in cs) else None

    stack: list[tuple[dict, bool]] = [(dict(domains), False)]
    nodes = 0
    while stack:
        if nodes >= budget:
            return Result(UNKNOWN, None, nodes)
        nodes += 1
        box, factored = stack.pop()
        consistent, effort = _propagate(box, work)
        nodes += effort // _WORK_PER_NODE
        if not consistent:
            continue
        prop = _Propagator(box)
        open_cs = []
        refuted = False
        for c in work:
            st = prop.status(c)
            if st is False:
                refuted = True
                break
            if st is None:
                open_cs.append(c)
        nodes += prop.work // _WORK_PER_NODE
        if refuted:
            continue
        if not open_cs:
            model = finish(box)
            if model is not None:
                return Result(SAT, model, nodes)
            open_cs = work
        names = [n for n in domains if box[n][0] < box[n][1]
                 and any(n in variables(c) for c in open_cs)]
        if not names:
            continue
        size = 1
        for n in names:
            size *= box[n][1] - box[n][0] + 1
            if size > _LEAF:
                break
        if size <= _LEAF:
            memo: dict = {}
            best = _enumerate_box(box, names, open_cs, targets, memo)
            nodes += len(memo) * size // (_WORK_PER_NODE * 64)
            if best is not None:
                model = finish(box, best)
                if model is not None:
                    return Result(SAT, model, nodes)
            continue

        children: list[tuple[dict, bool]] = []
        ft = None if factored else next(
            (t for t in map(_factor_target, open_cs) if t and t[0] in names and t[1] in names), None)
        if ft is not None:
            a, b, k = ft
            for d in sorted(_divisors(k), key=_outward_key(targets[a])):
                e = k // d
                if box[a][0] <= d <= box[a][1] and box[b][0] <= e <= box[b][1]:
                    child = dict(box)
                    child[a], child[b] = (d, d), (e, e)
                    children.append((child, False))
            children.append((dict(box), True))
        else:
            v = min(names, key=lambda n: (box[n][1] - box[n][0], -occurrences[n], order[n]))
            lo, hi = box[v]
            t = max(lo, min(hi, targets[v]))
            if hi - lo + 1 <= _SMALL:
                for val in sorted(range(lo, hi + 1), key=_outward_key(t)):
                    child = dict(box)
                    child[v] = (val, val)
                    children.append((child, factored))
            else:
                mid = (lo + hi) >> 1
                halves = [(lo, mid), (mid + 1, hi)]
                if t > mid:
                    halves.reverse()
                for h in halves:
                    child = dict(box)
                    child[v] = h
                    children.append((child, factored))
        stack.extend(reversed(children))
    return Result(UNSAT, None, nodes)
