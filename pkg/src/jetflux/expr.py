"""Canonical jet-space expressions with exact arithmetic.

An expression is a sum of terms; a term is a `ParamRat` coefficient times a
product of power factors.  A factor base is a jet coordinate, an independent
variable, a parameter symbol, an opaque function node, or an atomic sum base
(a non-monomial expression kept unexpanded under a negative or fractional
exponent).  Exponents are affine forms in the parameter symbols.

Normalization is performed on construction and is canonical for the
generalized-polynomial class: two expressions are mathematically equal as
generalized polynomials iff they are structurally equal.  Opaque function
nodes compare structurally; sum bases under negative exponents are compared
structurally, with denominator clearing available for zero decisions.

All values are immutable; all operations are pure functions.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

from .coeffs import AFFINE_ONE, Affine, ParamRat, PR_ONE, PR_ZERO, RatLike

ExpLike = Union[Affine, Fraction, int]


class Base:
    """A power-factor base; subclasses are immutable and ordered."""

    __slots__ = ()
    kind = -1

    def sort_key(self):
        raise NotImplementedError


class JetVar(Base):
    """One jet coordinate: dependent-variable index plus derivative counts.

    `multi` has one slot per independent variable, time first.
    """

    __slots__ = ("dep", "multi", "_hash")
    kind = 0

    def __init__(self, dep: int, multi: Sequence[int]):
        self.dep = dep
        self.multi = tuple(multi)
        if any(k < 0 for k in self.multi):
            raise ValueError(f"negative multi-index {self.multi}")
        self._hash = hash((JetVar, dep, self.multi))

    @property
    def order(self) -> int:
        return sum(self.multi)

    def raised(self, iv: int) -> "JetVar":
        m = list(self.multi)
        m[iv] += 1
        return JetVar(self.dep, m)

    def lowered(self, iv: int) -> Optional["JetVar"]:
        if self.multi[iv] == 0:
            return None
        m = list(self.multi)
        m[iv] -= 1
        return JetVar(self.dep, m)

    def descends_from(self, other: "JetVar") -> bool:
        """True when self is `other` or a repeated total derivative of it."""
        return self.dep == other.dep and all(
            a >= b for a, b in zip(self.multi, other.multi)
        )

    def sort_key(self):
        return (0, self.order, self.dep, self.multi)

    def __eq__(self, other):
        return (
            isinstance(other, JetVar)
            and self.dep == other.dep
            and self.multi == other.multi
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"JetVar({self.dep},{self.multi})"


class Indep(Base):
    """An independent variable t or x^i, by slot index (t is 0)."""

    __slots__ = ("idx", "_hash")
    kind = 1

    def __init__(self, idx: int):
        self.idx = idx
        self._hash = hash((Indep, idx))

    def sort_key(self):
        return (1, self.idx)

    def __eq__(self, other):
        return isinstance(other, Indep) and self.idx == other.idx

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Indep({self.idx})"


class Param(Base):
    """A free parameter symbol appearing with a non-integer exponent.

    Integer powers of parameters live in the coefficient field instead; the
    normalizer migrates them automatically.
    """

    __slots__ = ("name", "_hash")
    kind = 2

    def __init__(self, name: str):
        self.name = name
        self._hash = hash((Param, name))

    def sort_key(self):
        return (2, self.name)

    def __eq__(self, other):
        return isinstance(other, Param) and self.name == other.name

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Param({self.name})"


class FuncNode(Base):
    """Opaque function node f(args) with formal derivative counts per slot.

    Structural equality only; differentiation raises `dcounts` unless a
    registered rewrite rule maps the derivative to another expression.
    """

    __slots__ = ("name", "dcounts", "args", "_hash")
    kind = 3

    def __init__(self, name: str, dcounts: Sequence[int], args: Sequence["JetExpr"]):
        self.name = name
        self.dcounts = tuple(dcounts)
        self.args = tuple(args)
        if len(self.dcounts) != len(self.args):
            raise ValueError("dcounts/args length mismatch")
        self._hash = hash((FuncNode, name, self.dcounts, self.args))

    def sort_key(self):
        return (3, self.name, self.dcounts, tuple(a.sort_key() for a in self.args))

    def __eq__(self, other):
        return (
            isinstance(other, FuncNode)
            and self.name == other.name
            and self.dcounts == other.dcounts
            and self.args == other.args
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"FuncNode({self.name},{self.dcounts})"


class SumBase(Base):
    """A non-monomial expression kept atomic under its exponent."""

    __slots__ = ("expr", "_hash")
    kind = 4

    def __init__(self, expr: "JetExpr"):
        self.expr = expr
        self._hash = hash((SumBase, expr))

    def sort_key(self):
        return (4, self.expr.sort_key())

    def __eq__(self, other):
        return isinstance(other, SumBase) and self.expr == other.expr

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"SumBase({self.expr!r})"


Factor = tuple  # (Base, Affine)
Factors = tuple  # sorted tuple of Factor


class Term:
    __slots__ = ("coeff", "factors", "_hash")

    def __init__(self, coeff: ParamRat, factors: Factors):
        self.coeff = coeff
        self.factors = factors
        self._hash = hash((coeff, factors))

    def sort_key(self):
        return tuple((b.sort_key(), e.sort_key()) for b, e in self.factors)

    def __eq__(self, other):
        return (
            isinstance(other, Term)
            and self.coeff == other.coeff
            and self.factors == other.factors
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Term({self.coeff},{self.factors})"


class JetExpr:
    """A normalized sum of terms.  Immutable and hashable."""

    __slots__ = ("terms", "_hash", "_key")

    def __init__(self, terms: tuple):
        self.terms = terms
        self._hash = hash(terms)
        self._key = None

    def sort_key(self):
        if self._key is None:
            object.__setattr__(self, "_key", tuple(t.sort_key() + (t.coeff.sort_key(),) for t in self.terms))
        return self._key

    def is_zero_expr(self) -> bool:
        return not self.terms

    def __eq__(self, other):
        return isinstance(other, JetExpr) and self.terms == other.terms

    def __hash__(self):
        return self._hash

    def __add__(self, other):
        return add(self, as_expr(other))

    __radd__ = __add__

    def __neg__(self):
        return JetExpr(tuple(Term(-t.coeff, t.factors) for t in self.terms))

    def __sub__(self, other):
        return add(self, -as_expr(other))

    def __rsub__(self, other):
        return add(as_expr(other), -self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, pow_(as_expr(other), -1))

    def __pow__(self, e):
        return pow_(self, e)

    def __repr__(self):
        from .parser import to_string

        try:
            return f"<{to_string(self)}>"
        except Exception:
            return f"JetExpr({self.terms!r})"


ZERO = JetExpr(())
ONE = JetExpr((Term(PR_ONE, ()),))


def as_expr(v) -> JetExpr:
    if isinstance(v, JetExpr):
        return v
    if isinstance(v, (int, Fraction)):
        return const(v)
    if isinstance(v, ParamRat):
        return JetExpr((Term(v, ()),)) if not v.is_zero() else ZERO
    if isinstance(v, Base):
        return var(v)
    raise TypeError(f"cannot coerce {v!r} to JetExpr")


def const(c: RatLike) -> JetExpr:
    c = Fraction(c)
    return ZERO if c == 0 else JetExpr((Term(ParamRat.from_rat(c), ()),))


def coeff_expr(c: ParamRat) -> JetExpr:
    return ZERO if c.is_zero() else JetExpr((Term(c, ()),))


def var(b: Base, exp: ExpLike = 1) -> JetExpr:
    return _build([(PR_ONE, {b: Affine.of(exp)})])


def param(name: str) -> JetExpr:
    return coeff_expr(ParamRat.param(name))


def _build(raw_terms: Iterable) -> JetExpr:
    """Normalize raw (coeff, base->exp dict) pairs into a JetExpr."""
    acc: dict = {}
    pending = list(raw_terms)
    while pending:
        coeff, fmap = pending.pop()
        if coeff.is_zero():
            continue
        mono = []
        expand = []
        ok = True
        for base, exp in fmap.items():
            if exp.is_zero():
                continue
            if isinstance(base, Param) and exp.is_int():
                coeff = coeff * (ParamRat.param(base.name) ** int(exp.const))
                if coeff.is_zero():
                    ok = False
                    break
            elif isinstance(base, SumBase) and exp.is_const():
                c = exp.const
                if c.denominator == 1:
                    k = int(c)
                    if k > 0:
                        expand.extend([base.expr] * k)
                    else:
                        mono.append((base, exp))
                elif c > 1:
                    fl = c.numerator // c.denominator
                    expand.extend([base.expr] * fl)
                    mono.append((base, Affine(c - fl)))
                else:
                    mono.append((base, exp))
            else:
                mono.append((base, exp))
        if not ok:
            continue
        mono.sort(key=lambda f: (f[0].sort_key(), f[1].sort_key()))
        if expand:
            prod = JetExpr((Term(coeff, tuple(mono)),))
            for e in expand:
                prod = mul(prod, e)
            for t in prod.terms:
                acc[t.factors] = acc.get(t.factors, PR_ZERO) + t.coeff
        else:
            key = tuple(mono)
            acc[key] = acc.get(key, PR_ZERO) + coeff
    terms = [Term(c, f) for f, c in acc.items() if not c.is_zero()]
    terms.sort(key=Term.sort_key)
    return JetExpr(tuple(terms))


def add(a: JetExpr, b: JetExpr) -> JetExpr:
    if not a.terms:
        return b
    if not b.terms:
        return a
    acc: dict = {}
    for t in a.terms + b.terms:
        acc[t.factors] = acc.get(t.factors, PR_ZERO) + t.coeff
    terms = [Term(c, f) for f, c in acc.items() if not c.is_zero()]
    terms.sort(key=Term.sort_key)
    return JetExpr(tuple(terms))


def add_all(exprs: Iterable[JetExpr]) -> JetExpr:
    acc: dict = {}
    for e in exprs:
        for t in e.terms:
            acc[t.factors] = acc.get(t.factors, PR_ZERO) + t.coeff
    terms = [Term(c, f) for f, c in acc.items() if not c.is_zero()]
    terms.sort(key=Term.sort_key)
    return JetExpr(tuple(terms))


def mul(a: JetExpr, b: JetExpr) -> JetExpr:
    if not a.terms or not b.terms:
        return ZERO
    raw = []
    for ta in a.terms:
        for tb in b.terms:
            fmap: dict = dict(ta.factors)
            for base, exp in tb.factors:
                prev = fmap.get(base)
                fmap[base] = exp if prev is None else prev + exp
            raw.append((ta.coeff * tb.coeff, fmap))
    return _build(raw)


def mul_all(exprs: Iterable[JetExpr]) -> JetExpr:
    out = ONE
    for e in exprs:
        out = mul(out, e)
    return out


def _frac_root(c: Fraction, e: Fraction) -> Fraction:
    """Exact c**e for rational e, or raise."""
    if e.denominator == 1:
        return c ** int(e)
    if c < 0:
        raise ValueError(f"negative base {c} with non-integer exponent {e}")
    if c == 0:
        if e > 0:
            return Fraction(0)
        raise ZeroDivisionError("0 to a negative power")

    def iroot(n: int, k: int) -> int:
        r = round(n ** (1.0 / k))
        for cand in (r - 1, r, r + 1):
            if cand >= 0 and cand**k == n:
                return cand
        raise ValueError(f"{n} has no exact {k}th root")

    k = e.denominator
    base = Fraction(iroot(c.numerator, k), iroot(c.denominator, k))
    return base ** e.numerator


def pow_(a: JetExpr, e: ExpLike) -> JetExpr:
    e = Affine.of(e)
    if e.is_zero():
        if not a.terms:
            raise ZeroDivisionError("0^0")
        return ONE
    if e == AFFINE_ONE:
        return a
    if not a.terms:
        # symbolic exponents are taken as positive (the corpus uses p > 0)
        if not e.is_const() or e.const > 0:
            return ZERO
        raise ZeroDivisionError("zero base with non-positive exponent")
    if len(a.terms) == 1:
        t = a.terms[0]
        fmap: dict = {}
        for base, bexp in t.factors:
            if bexp.is_const():
                fmap[base] = e * bexp.const
            elif e.is_const():
                fmap[base] = bexp * e.const
            else:
                raise ValueError("product of two symbolic exponents")
        coeff = t.coeff
        if coeff.is_one():
            return _build([(PR_ONE, fmap)])
        if e.is_int():
            return _build([(coeff ** int(e.const), fmap)])
        if e.is_const() and coeff.is_rational():
            return _build([(ParamRat.from_rat(_frac_root(coeff.as_fraction(), e.const)), fmap)])
        if not coeff.den and len(coeff.num) == 1:
            # pure parameter monomial: move symbols into power factors
            mono, c = coeff.num[0]
            for name, k in mono:
                b = Param(name)
                prev = fmap.get(b)
                grown = e * k
                fmap[b] = grown if prev is None else prev + grown
            if c == 1:
                return _build([(PR_ONE, fmap)])
            if e.is_const():
                return _build([(ParamRat.from_rat(_frac_root(c, e.const)), fmap)])
        raise ValueError(f"cannot raise coefficient {coeff} to power {e}")
    # Multi-term base.
    if e.is_int():
        k = int(e.const)
        if k >= 0:
            out = ONE
            for _ in range(k):
                out = mul(out, a)
            return out
    content, inner = _extract_content(a, e)
    return mul(content, _build([(PR_ONE, {SumBase(inner): e})]))


def _extract_content(a: JetExpr, e: Affine) -> tuple:
    """Pull a monomial content out of a sum so SumBase contents are canonical.

    Returns (content^e as JetExpr, reduced inner sum).  For exponents where
    the coefficient root is inexact the rational content stays inside.
    """
    first = a.terms[0]
    common: dict = {}
    for base, exp in first.factors:
        if not exp.is_const():
            continue
        lo = exp.const
        okbase = True
        for t in a.terms[1:]:
            found = None
            for b2, e2 in t.factors:
                if b2 == base and e2.is_const():
                    found = e2.const
                    break
            if found is None:
                okbase = False
                break
            lo = min(lo, found)
        if okbase and lo != 0:
            common[base] = lo
    c0 = first.coeff
    coeff_ok = True
    if e.is_int():
        pass
    elif e.is_const() and c0.is_rational():
        try:
            _frac_root(c0.as_fraction(), e.const)
        except (ValueError, ZeroDivisionError):
            coeff_ok = False
    else:
        coeff_ok = c0.is_one()
    if not common and (not coeff_ok or c0.is_one()):
        return ONE, a
    content_map = {b: Affine(x) for b, x in common.items()}
    inv_map = {b: Affine(-x) for b, x in common.items()}
    if coeff_ok and not c0.is_one():
        content = _build([(c0, content_map)])
        inv = _build([(c0.inverse(), inv_map)])
    else:
        content = _build([(PR_ONE, content_map)])
        inv = _build([(PR_ONE, inv_map)])
    inner = mul(a, inv)
    return pow_(content, e), inner


# ---------------------------------------------------------------------------
# Differentiation


def _term_without(t: Term, idx: int) -> dict:
    return {b: e for j, (b, e) in enumerate(t.factors) if j != idx}


def total_derivative(e: JetExpr, iv: int, funcs=None) -> JetExpr:
    """Total derivative D_t (iv=0) or D_{x^iv}; chain rule over all bases."""
    parts = []
    for t in e.terms:
        for j, (base, exp) in enumerate(t.factors):
            d = _d_base(base, iv, funcs)
            if d is None or not d.terms:
                continue
            rest = _term_without(t, j)
            rest[base] = exp - 1
            lead = _build([(t.coeff * ParamRat.from_affine(exp), rest)])
            parts.append(mul(lead, d))
    return add_all(parts) if parts else ZERO


def _d_base(base: Base, iv: int, funcs) -> Optional[JetExpr]:
    if isinstance(base, JetVar):
        return var(base.raised(iv))
    if isinstance(base, Indep):
        return ONE if base.idx == iv else ZERO
    if isinstance(base, Param):
        return ZERO
    if isinstance(base, FuncNode):
        parts = []
        for k, arg in enumerate(base.args):
            darg = total_derivative(arg, iv, funcs)
            if not darg.terms:
                continue
            parts.append(mul(func_node(base.name, _raise_slot(base.dcounts, k), base.args, funcs), darg))
        return add_all(parts) if parts else ZERO
    if isinstance(base, SumBase):
        return total_derivative(base.expr, iv, funcs)
    raise TypeError(base)


def _raise_slot(dcounts: tuple, k: int) -> tuple:
    out = list(dcounts)
    out[k] += 1
    return tuple(out)


def func_node(name: str, dcounts: Sequence[int], args: Sequence[JetExpr], funcs=None) -> JetExpr:
    """Build a function-node expression, applying registered rewrite rules."""
    if funcs is not None:
        rewritten = funcs.rewrite(name, tuple(dcounts), tuple(args))
        if rewritten is not None:
            return rewritten
    return var(FuncNode(name, dcounts, args))


def partial_jet(e: JetExpr, target: Base, funcs=None) -> JetExpr:
    """Formal partial derivative treating all jet coordinates as independent."""
    if isinstance(target, Param):
        return _partial_param(e, target.name)
    parts = []
    for t in e.terms:
        for j, (base, exp) in enumerate(t.factors):
            d = _d_base_partial(base, target, funcs)
            if d is None or not d.terms:
                continue
            rest = _term_without(t, j)
            rest[base] = exp - 1
            lead = _build([(t.coeff * ParamRat.from_affine(exp), rest)])
            parts.append(mul(lead, d))
    return add_all(parts) if parts else ZERO


def _d_base_partial(base: Base, target: Base, funcs) -> Optional[JetExpr]:
    if base == target:
        return ONE
    if isinstance(base, FuncNode):
        parts = []
        for k, arg in enumerate(base.args):
            darg = partial_jet(arg, target, funcs)
            if not darg.terms:
                continue
            parts.append(mul(func_node(base.name, _raise_slot(base.dcounts, k), base.args, funcs), darg))
        return add_all(parts) if parts else ZERO
    if isinstance(base, SumBase):
        return partial_jet(base.expr, target, funcs)
    return ZERO


def _partial_param(e: JetExpr, name: str) -> JetExpr:
    raw = []
    for t in e.terms:
        for base, exp in t.factors:
            if name in dict(exp.terms):
                raise ValueError(
                    f"symbolic parameter {name} occurs in an exponent; "
                    "its partial derivative leaves the polynomial class"
                )
            if isinstance(base, (FuncNode, SumBase)):
                inner = base.args if isinstance(base, FuncNode) else (base.expr,)
                for a in inner:
                    if name in collect_param_names(a):
                        raise ValueError(
                            f"parameter {name} occurs inside an opaque node"
                        )
        dcoeff = t.coeff.dparam(name)
        if not dcoeff.is_zero():
            raw.append((dcoeff, dict(t.factors)))
        for j, (base, exp) in enumerate(t.factors):
            if isinstance(base, Param) and base.name == name:
                rest = _term_without(t, j)
                rest[base] = exp - 1
                raw.append((t.coeff * ParamRat.from_affine(exp), rest))
    return _build(raw)


# ---------------------------------------------------------------------------
# Substitution and parameter binding


def substitute(e: JetExpr, mapping: Mapping[JetVar, JetExpr], funcs=None) -> JetExpr:
    """Simultaneous replacement of jet coordinates, then normalization.

    Replacement is coordinate-exact: only the listed jet variables change,
    not their differential consequences.
    """
    if not mapping:
        return e
    parts = []
    for t in e.terms:
        prod = coeff_expr(t.coeff)
        for base, exp in t.factors:
            rep = _subs_base(base, mapping, funcs)
            if rep is None:
                prod = mul(prod, _build([(PR_ONE, {base: exp})]))
            else:
                prod = mul(prod, pow_(rep, exp))
            if not prod.terms:
                break
        parts.append(prod)
    return add_all(parts)


def _subs_base(base: Base, mapping, funcs) -> Optional[JetExpr]:
    if isinstance(base, JetVar):
        return mapping.get(base)
    if isinstance(base, FuncNode):
        newargs = tuple(substitute(a, mapping, funcs) for a in base.args)
        if newargs == base.args:
            return None
        return func_node(base.name, base.dcounts, newargs, funcs)
    if isinstance(base, SumBase):
        inner = substitute(base.expr, mapping, funcs)
        if inner == base.expr:
            return None
        return inner
    return None


def substitute_params(e: JetExpr, values: Mapping[str, Fraction], funcs=None) -> JetExpr:
    """Bind parameter symbols to exact rationals and renormalize."""
    if not values:
        return e
    raw = []
    for t in e.terms:
        coeff = t.coeff.subs(values)
        prod = coeff_expr(coeff)
        for base, exp in t.factors:
            exp = exp.subs(values)
            if isinstance(base, Param) and base.name in values:
                c = values[base.name]
                if exp.is_const():
                    prod = mul(prod, const(_frac_root(c, exp.const)))
                    continue
                raise ValueError("parameter value under symbolic exponent")
            if isinstance(base, FuncNode):
                base = FuncNode(
                    base.name,
                    base.dcounts,
                    tuple(substitute_params(a, values, funcs) for a in base.args),
                )
            elif isinstance(base, SumBase):
                base = SumBase(substitute_params(base.expr, values, funcs))
            prod = mul(prod, _build([(PR_ONE, {base: exp})]))
            if not prod.terms:
                break
        raw.append(prod)
    return add_all(raw)


# ---------------------------------------------------------------------------
# Inspection helpers


def jet_vars(e: JetExpr) -> set:
    """All jet coordinates occurring anywhere, including inside nodes."""
    out: set = set()
    _collect_jet_vars(e, out)
    return out


def _collect_jet_vars(e: JetExpr, out: set):
    for t in e.terms:
        for base, _ in t.factors:
            if isinstance(base, JetVar):
                out.add(base)
            elif isinstance(base, FuncNode):
                for a in base.args:
                    _collect_jet_vars(a, out)
            elif isinstance(base, SumBase):
                _collect_jet_vars(base.expr, out)


def collect_param_names(e: JetExpr) -> set:
    out: set = set()
    for t in e.terms:
        out |= t.coeff.param_names()
        for base, exp in t.factors:
            out.update(n for n, _ in exp.terms)
            if isinstance(base, Param):
                out.add(base.name)
            elif isinstance(base, FuncNode):
                for a in base.args:
                    out |= collect_param_names(a)
            elif isinstance(base, SumBase):
                out |= collect_param_names(base.expr)
    return out


def has_func_nodes(e: JetExpr) -> bool:
    for t in e.terms:
        for base, _ in t.factors:
            if isinstance(base, FuncNode):
                return True
            if isinstance(base, SumBase) and has_func_nodes(base.expr):
                return True
    return False


def sum_bases(e: JetExpr) -> set:
    out = set()
    for t in e.terms:
        for base, exp in t.factors:
            if isinstance(base, SumBase):
                out.add(base)
    return out


def max_order(e: JetExpr) -> int:
    return max((v.order for v in jet_vars(e)), default=0)


# ---------------------------------------------------------------------------
# Zero decision


def _mul_atomic(e: JetExpr, base: Base, k: int) -> JetExpr:
    """Multiply by base**k merging exponents before canonical expansion, so
    negative powers of the same base cancel exactly."""
    raw = []
    for t in e.terms:
        fmap = dict(t.factors)
        fmap[base] = fmap.get(base, Affine(0)) + Affine(k)
        raw.append((t.coeff, fmap))
    return _build(raw)


def is_zero(e: JetExpr) -> Optional[bool]:
    """Tri-state zero test: True, False, or None for undetermined.

    True is always sound.  False is claimed only for pure generalized
    polynomials (no opaque nodes); in the presence of opaque nodes or
    uncleared sum bases a nonzero normal form yields None.
    """
    verdict, _ = zero_report(e)
    return verdict


def zero_report(e: JetExpr) -> tuple:
    """Zero decision plus notes (e.g. whether denominators were cleared)."""
    if not e.terms:
        return True, []
    neg_sums = {}
    for t in e.terms:
        for base, exp in t.factors:
            if isinstance(base, SumBase) and exp.is_const() and exp.const < 0:
                k = -exp.const
                need = int(k) if k.denominator == 1 else int(k.numerator // k.denominator) + 1
                neg_sums[base] = max(neg_sums.get(base, 0), need)
    if neg_sums:
        cleared = e
        for base, k in neg_sums.items():
            cleared = _mul_atomic(cleared, base, k)
        notes = [
            "zero test after clearing denominators: "
            + ", ".join(f"({_short(b.expr)})^{k}" for b, k in neg_sums.items())
        ]
        sub_verdict, sub_notes = zero_report(cleared)
        if sub_verdict is True:
            return True, notes + sub_notes + [
                "result may mask a removable singularity where a cleared factor vanishes"
            ]
        if sub_verdict is False:
            return False, notes + sub_notes
        return None, notes + sub_notes
    if has_func_nodes(e) or sum_bases(e):
        return None, ["nonzero normal form containing opaque content: undetermined"]
    return False, []


def _short(e: JetExpr, n: int = 40) -> str:
    from .parser import to_string

    s = to_string(e)
    return s if len(s) <= n else s[: n - 3] + "..."


# ---------------------------------------------------------------------------
# Exact numeric evaluation


def eval_numeric(
    e: JetExpr,
    point: Mapping[Base, Fraction],
    params: Mapping[str, Fraction] | None = None,
    funcs=None,
) -> Fraction:
    """Exact rational value at a jet point; the independent oracle.

    `point` must bind every jet coordinate and independent variable that
    occurs; opaque nodes need numeric profiles registered in `funcs`.
    """
    params = dict(params or {})
    total = Fraction(0)
    for t in e.terms:
        c = t.coeff.subs(params)
        val = c.as_fraction()
        for base, exp in t.factors:
            ev = exp.subs(params)
            x = _eval_base(base, point, params, funcs)
            val *= _frac_root(x, ev.as_fraction())
            if val == 0:
                break
        total += val
    return total


def _eval_base(base: Base, point, params, funcs) -> Fraction:
    if isinstance(base, (JetVar, Indep)):
        try:
            return Fraction(point[base])
        except KeyError:
            raise KeyError(f"missing binding for {base!r}")
    if isinstance(base, Param):
        if base.name in params:
            return params[base.name]
        raise KeyError(f"missing parameter value for {base.name}")
    if isinstance(base, SumBase):
        return eval_numeric(base.expr, point, params, funcs)
    if isinstance(base, FuncNode):
        if funcs is None:
            raise KeyError(f"no function table for node {base.name}")
        argv = [eval_numeric(a, point, params, funcs) for a in base.args]
        return funcs.eval_node(base.name, base.dcounts, argv)
    raise TypeError(base)


# ---------------------------------------------------------------------------
# Linear-homotopy scaling and lambda integration

_LAM = "_lam"


def homotopy_substitute(
    e: JetExpr, shift: Mapping[int, Fraction] | None = None, funcs=None
) -> JetExpr:
    """Replace every jet coordinate u_J by its value on the homotopy line
    u_(lam) = lam*u + (1-lam)*u0, with u0 a constant vector (default 0)."""
    shift = dict(shift or {})
    lam = param(_LAM)
    mapping = {}
    for v in jet_vars(e):
        if v.order == 0 and shift.get(v.dep):
            c = shift[v.dep]
            mapping[v] = add(mul(lam, var(v)), mul(const(c), add(ONE, -lam)))
        else:
            mapping[v] = mul(lam, var(v))
    return substitute(e, mapping, funcs)


def integrate_lambda(e: JetExpr) -> JetExpr:
    """Integrate the internal homotopy parameter over [0, 1] in closed form.

    Raises on a singular exponent (a term scaling as lam^-1).
    """
    raw = []
    for t in e.terms:
        lam_aff = Affine(0)
        rest: dict = {}
        for base, exp in t.factors:
            if isinstance(base, Param) and base.name == _LAM:
                lam_aff = lam_aff + exp
            else:
                if isinstance(base, (FuncNode, SumBase)):
                    inner = base.args if isinstance(base, FuncNode) else (base.expr,)
                    for a in inner:
                        if _LAM in collect_param_names(a):
                            raise ValueError(
                                "homotopy parameter inside an opaque node; "
                                "the integrand is outside the polynomial class"
                            )
                rest[base] = exp
        if _LAM in t.coeff.param_names():
            den_shift = 0
            den_rest = []
            for key, kexp in t.coeff.den:
                names = [n for n, _ in key[:-1]]
                if names == [_LAM]:
                    if key != ((_LAM, 1), 0):
                        raise ValueError("homotopy parameter mixed into a denominator factor")
                    den_shift += kexp
                elif _LAM in names:
                    raise ValueError("homotopy parameter mixed into a denominator factor")
                else:
                    den_rest.append((key, kexp))
            # integer lambda powers migrated into the coefficient polynomial
            for mono, c in t.coeff.num:
                md = dict(mono)
                k = md.pop(_LAM, 0)
                piece = ParamRat(((tuple(sorted(md.items())), c),), tuple(den_rest))
                raw.append((piece, dict(rest), lam_aff + k - den_shift))
        else:
            raw.append((t.coeff, dict(rest), lam_aff))
    out = []
    for coeff, rest, lam_aff in raw:
        denom = lam_aff + 1
        if denom.is_zero():
            raise SingularHomotopy(
                "homotopy integrand scales as 1/lam; shift the base point"
            )
        out.append((coeff / ParamRat.from_affine(denom), rest))
    return _build(out)


class SingularHomotopy(ValueError):
    pass


def at_constant_point(
    e: JetExpr, values: Mapping[int, Fraction] | None = None, funcs=None
) -> JetExpr:
    """Evaluate at the constant section u = u0: order-zero jets become the
    given constants, all derivative jets become zero."""
    values = dict(values or {})
    mapping = {}
    for v in jet_vars(e):
        if v.order == 0:
            mapping[v] = const(values.get(v.dep, 0))
        else:
            mapping[v] = ZERO
    return substitute(e, mapping, funcs)
