"""Expression grammar: parsing and canonical serialization.

Grammar (identifiers `[a-zA-Z][a-zA-Z0-9]*`):

    expr   := term (('+'|'-') term)*
    term   := unary (('*'|'/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          right-associative
    atom   := NUMBER | jetvar | call | name | '(' expr ')'

Jet variables are written `u`, `u_t`, `u_xx`, `u_txx`: an underscore followed
by derivative letters, one per independent variable, order-insensitive
(`u_tx` == `u_xt`).  Rational literals are integers; `1/2` is the division
operator applied to literals, which is exact.  Serialization of normalized
expressions uses this same grammar with the canonical term order, so
parse/print round-trips are identity on normal forms.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .coeffs import Affine, ParamRat
from .expr import (
    Base,
    FuncNode,
    Indep,
    JetExpr,
    JetVar,
    Param,
    SumBase,
    Term,
    ZERO,
    add,
    as_expr,
    const,
    func_node,
    mul,
    param,
    pow_,
    var,
)


class ExprSyntaxError(ValueError):
    def __init__(self, msg: str, pos: int, text: str):
        super().__init__(f"{msg} at position {pos}: {text[:pos]}<HERE>{text[pos:]}")
        self.pos = pos


class UndeclaredIdentifier(ValueError):
    pass


_DERIV_NAME = re.compile(r"^((?:D\d+)+)([A-Za-z][A-Za-z0-9]*)$")


class Context:
    """Variable and parameter declarations used to resolve identifiers."""

    def __init__(
        self,
        independent: Sequence[str],
        dependent: Sequence[str],
        params: Sequence[str] = (),
        functions=None,
    ):
        self.independent = tuple(independent)
        self.dependent = tuple(dependent)
        self.params = tuple(params)
        self.functions = functions
        names = list(self.independent) + list(self.dependent) + list(self.params)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate declarations in {names}")
        for n in self.independent:
            if len(n) != 1:
                raise ValueError(
                    f"independent variable {n!r} must be a single letter "
                    "(derivative suffixes are spelled letter by letter)"
                )
        self._indep_idx = {n: i for i, n in enumerate(self.independent)}
        self._dep_idx = {n: i for i, n in enumerate(self.dependent)}

    @property
    def n_indep(self) -> int:
        return len(self.independent)

    def jet(self, dep_name: str, derivs: str = "") -> JetVar:
        dep = self._dep_idx[dep_name]
        multi = [0] * self.n_indep
        for ch in derivs:
            if ch not in self._indep_idx:
                raise UndeclaredIdentifier(
                    f"derivative letter {ch!r} is not an independent variable"
                )
            multi[self._indep_idx[ch]] += 1
        return JetVar(dep, multi)

    def var(self, text: str) -> JetExpr:
        """Parse a single variable/parameter reference."""
        return parse(text, self)

    def jetvar_name(self, v: JetVar) -> str:
        name = self.dependent[v.dep]
        if v.order == 0:
            return name
        suffix = "".join(
            self.independent[i] * k for i, k in enumerate(v.multi)
        )
        return f"{name}_{suffix}"


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<jet>[A-Za-z][A-Za-z0-9]*_[A-Za-z0-9]+)"
    r"|(?P<name>[A-Za-z][A-Za-z0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == m.start():
            if text[pos:].strip():
                raise ExprSyntaxError("unexpected character", pos, text)
            break
        if m.lastgroup is None:
            break
        out.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
        pos = m.end()
    stripped = text[pos:].strip()
    if stripped:
        raise ExprSyntaxError("unexpected character", pos + text[pos:].index(stripped[0]), text)
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, ctx: Context):
        self.text = text
        self.ctx = ctx
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, op: str):
        kind, val, pos = self.next()
        if kind != "op" or val != op:
            raise ExprSyntaxError(f"expected {op!r}", pos, self.text)

    def parse(self) -> JetExpr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"trailing input {val!r}", pos, self.text)
        return e

    def expr(self) -> JetExpr:
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                rhs = self.term()
                e = add(e, rhs if val == "+" else -rhs)
            else:
                return e

    def term(self) -> JetExpr:
        e = self.unary()
        while True:
            kind, val, pos = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                rhs = self.unary()
                if val == "*":
                    e = mul(e, rhs)
                else:
                    e = self._divide(e, rhs, pos)
            else:
                return e

    def _divide(self, a: JetExpr, b: JetExpr, pos: int) -> JetExpr:
        try:
            return mul(a, pow_(b, -1))
        except (ValueError, ZeroDivisionError) as exc:
            raise ExprSyntaxError(f"cannot divide: {exc}", pos, self.text)

    def unary(self) -> JetExpr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.next()
            return -self.unary()
        return self.power()

    def power(self) -> JetExpr:
        base = self.atom()
        kind, val, pos = self.peek()
        if kind == "op" and val == "^":
            self.next()
            exp = self.unary()
            try:
                return pow_(base, _as_exponent(exp))
            except (ValueError, ZeroDivisionError) as exc:
                raise ExprSyntaxError(f"bad exponent: {exc}", pos, self.text)
        return base

    def atom(self) -> JetExpr:
        kind, val, pos = self.next()
        if kind == "num":
            return const(int(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "jet":
            name, derivs = val.split("_", 1)
            if name not in self.ctx._dep_idx:
                raise UndeclaredIdentifier(f"undeclared dependent variable {name!r} in {val!r}")
            try:
                return var(self.ctx.jet(name, derivs))
            except UndeclaredIdentifier as exc:
                raise ExprSyntaxError(str(exc), pos, self.text)
        if kind == "name":
            nkind, nval, _ = self.peek()
            if nkind == "op" and nval == "(":
                return self.call(val, pos)
            if val in self.ctx._dep_idx:
                return var(self.ctx.jet(val))
            if val in self.ctx._indep_idx:
                return var(Indep(self.ctx._indep_idx[val]))
            if val in self.ctx.params:
                return param(val)
            raise UndeclaredIdentifier(f"undeclared identifier {val!r}")
        raise ExprSyntaxError(f"unexpected {val!r}", pos, self.text)

    def call(self, name: str, pos: int) -> JetExpr:
        dcounts_prefix = ()
        base_name = name
        m = _DERIV_NAME.match(name)
        table = self.ctx.functions
        if table is not None and not table.has(name) and m and table.has(m.group(2)):
            base_name = m.group(2)
            slots = [int(s) for s in re.findall(r"D(\d+)", m.group(1))]
            nargs = table.nargs(base_name)
            dc = [0] * nargs
            for s in slots:
                if not 1 <= s <= nargs:
                    raise ExprSyntaxError(
                        f"derivative slot {s} out of range for {base_name}", pos, self.text
                    )
                dc[s - 1] += 1
            dcounts_prefix = tuple(dc)
        elif table is None or not table.has(base_name):
            raise UndeclaredIdentifier(f"undeclared function {name!r}")
        self.expect("(")
        args = [self.expr()]
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val == ",":
                self.next()
                args.append(self.expr())
            else:
                break
        self.expect(")")
        nargs = table.nargs(base_name)
        if len(args) != nargs:
            raise ExprSyntaxError(
                f"{base_name} expects {nargs} argument(s), got {len(args)}", pos, self.text
            )
        dcounts = dcounts_prefix or tuple([0] * nargs)
        return func_node(base_name, dcounts, tuple(args), table)


def _as_exponent(e: JetExpr) -> Affine:
    """An exponent expression must normalize to a rational or an affine form
    in parameter symbols."""
    out = Affine(0)
    for t in e.terms:
        if t.factors:
            raise ValueError("exponent is not affine in the parameters")
        c = t.coeff
        if c.den:
            raise ValueError("exponent has a parameter denominator")
        for mono, coef in c.num:
            if mono == ():
                out = out + Affine(coef)
            elif len(mono) == 1 and mono[0][1] == 1:
                out = out + Affine(0, ((mono[0][0], coef),))
            else:
                raise ValueError("exponent is not affine in the parameters")
    return out


def parse(text: str, ctx: Context) -> JetExpr:
    """Parse `text` in the given declaration context; returns the normal form."""
    return _Parser(text, ctx).parse()


# ---------------------------------------------------------------------------
# Serialization


def _exp_str(e: Affine) -> str:
    if e.is_const():
        c = e.const
        if c.denominator == 1 and c >= 0:
            return str(c)
        return f"({c})"
    if not e.const and len(e.terms) == 1 and e.terms[0][1] == 1:
        return e.terms[0][0]
    return f"({e})"


def _coeff_parts(c: ParamRat) -> str:
    return str(c)


def _base_str(b: Base, ctx: Optional[Context]) -> str:
    if isinstance(b, JetVar):
        if ctx is None:
            name = f"u{b.dep}" if b.dep else "u"
            letters = "txyzw"
            suffix = "".join(letters[i] * k for i, k in enumerate(b.multi))
            return f"{name}_{suffix}" if suffix else name
        return ctx.jetvar_name(b)
    if isinstance(b, Indep):
        if ctx is None:
            return "txyzw"[b.idx]
        return ctx.independent[b.idx]
    if isinstance(b, Param):
        return b.name
    if isinstance(b, FuncNode):
        prefix = "".join(f"D{i + 1}" * k for i, k in enumerate(b.dcounts))
        args = ",".join(to_string(a, ctx) for a in b.args)
        return f"{prefix}{b.name}({args})"
    if isinstance(b, SumBase):
        return f"({to_string(b.expr, ctx)})"
    raise TypeError(b)


def _needs_parens(s: str) -> bool:
    depth = 0
    for i, ch in enumerate(s):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif depth == 0 and (ch == "+" or (ch == "-" and i > 0)):
            return True
    return False


def _term_str(t: Term, ctx: Optional[Context]) -> str:
    facs = []
    for base, exp in t.factors:
        bs = _base_str(base, ctx)
        facs.append(bs if exp == Affine(1) else f"{bs}^{_exp_str(exp)}")
    c = t.coeff
    neg = False
    cs = _coeff_parts(c)
    if cs.startswith("-"):
        alt = -c
        if str(alt) == cs[1:]:
            neg = True
            cs = cs[1:]
    if facs and _needs_parens(cs):
        cs = f"({cs})"
    if not facs:
        body = cs
    elif cs == "1":
        body = "*".join(facs)
    else:
        body = "*".join([cs] + facs)
    return ("-" + body) if neg else body


def to_string(e: JetExpr, ctx: Optional[Context] = None) -> str:
    """Canonical rendering; parses back to the same normal form."""
    if not e.terms:
        return "0"
    parts = [_term_str(t, ctx) for t in e.terms]
    out = parts[0]
    for p in parts[1:]:
        out += p if p.startswith("-") else "+" + p
    return out
