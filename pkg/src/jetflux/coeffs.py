"""Exact coefficient arithmetic over parameter symbols.

Term coefficients in a jet expression are rational functions of the free
parameter symbols (e.g. the nonlinearity power p): a polynomial numerator
over Q divided by a product of affine factors such as (p+1).  Denominators
never need to be more general than that, because they only ever arise from
homotopy-integration of affine exponents and from user input of the same
shape.  Keeping the denominator factored makes reduction cheap (trial
division by each affine factor) and the representation canonical without
general multivariate GCDs.

Exponents of power factors are a separate, smaller class: affine forms in
the parameters with rational coefficients (`Affine`), e.g. p+1 or 3/2.
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd
from typing import Iterable, Mapping, Optional, Union

Rat = Fraction
RatLike = Union[Fraction, int]

# A monomial in parameter symbols: sorted ((name, power>0), ...).
Monomial = tuple
# A polynomial: mapping monomial -> nonzero Fraction, stored canonically sorted.
PolyItems = tuple

# A primitive affine key: ((name, int_coeff)..., int_const) with integer
# coefficients, content 1, first nonzero coefficient positive.
AffineKey = tuple

_ONE_MONO: Monomial = ()


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    out = dict(a)
    for name, k in b:
        out[name] = out.get(name, 0) + k
    return tuple(sorted((n, k) for n, k in out.items() if k))


def _poly_from_items(items: Iterable) -> PolyItems:
    acc: dict = {}
    for mono, c in items:
        if not c:
            continue
        acc[mono] = acc.get(mono, Fraction(0)) + c
    return tuple(sorted((m, c) for m, c in acc.items() if c))


def _poly_add(a: PolyItems, b: PolyItems) -> PolyItems:
    return _poly_from_items(list(a) + list(b))


def _poly_neg(a: PolyItems) -> PolyItems:
    return tuple((m, -c) for m, c in a)


def _poly_mul(a: PolyItems, b: PolyItems) -> PolyItems:
    if not a or not b:
        return ()
    out: dict = {}
    for ma, ca in a:
        for mb, cb in b:
            m = _mono_mul(ma, mb)
            out[m] = out.get(m, Fraction(0)) + ca * cb
    return tuple(sorted((m, c) for m, c in out.items() if c))


def _poly_scale(a: PolyItems, s: Fraction) -> PolyItems:
    if not s:
        return ()
    return tuple((m, c * s) for m, c in a)


def _poly_const(c: Fraction) -> PolyItems:
    return ((_ONE_MONO, c),) if c else ()


def _affine_key_poly(key: AffineKey) -> PolyItems:
    *terms, const = key
    items = [(((name, 1),), Fraction(k)) for name, k in terms]
    if const:
        items.append((_ONE_MONO, Fraction(const)))
    return _poly_from_items(items)


def _poly_div_affine(poly: PolyItems, key: AffineKey) -> Optional[PolyItems]:
    """Exact division of a polynomial by a primitive affine factor, or None."""
    *terms, const = key
    if not terms:
        raise ValueError("constant affine factor")
    pivot, a = terms[0]
    # B = key - a*pivot, as a polynomial.
    b_poly = _poly_from_items(
        [(((n, 1),), Fraction(k)) for n, k in terms[1:]] + [(_ONE_MONO, Fraction(const))]
    )
    # View poly as sum_i coeff_i(others) * pivot^i.
    by_deg: dict = {}
    for mono, c in poly:
        d = 0
        rest = []
        for name, k in mono:
            if name == pivot:
                d = k
            else:
                rest.append((name, k))
        by_deg.setdefault(d, []).append((tuple(rest), c))
    if not by_deg:
        return ()
    maxd = max(by_deg)
    rem = {d: _poly_from_items(items) for d, items in by_deg.items()}
    quot: dict = {}
    for d in range(maxd, 0, -1):
        top = rem.pop(d, ())
        if not top:
            continue
        q = _poly_scale(top, Fraction(1, a))
        quot[d - 1] = q
        # subtract q * B at degree d-1
        sub = _poly_mul(q, b_poly)
        rem[d - 1] = _poly_add(rem.get(d - 1, ()), _poly_neg(sub))
    if rem.get(0, ()):
        return None
    out = []
    for d, q in quot.items():
        for mono, c in q:
            m = _mono_mul(mono, ((pivot, d),) if d else ())
            out.append((m, c))
    return _poly_from_items(out)


class Affine:
    """Affine form in parameter symbols with rational coefficients.

    Used for power-factor exponents: p+1, 3/2, 2p.  Immutable, hashable,
    compared structurally.
    """

    __slots__ = ("const", "terms", "_hash")

    def __init__(self, const: RatLike = 0, terms: Mapping[str, RatLike] | Iterable = ()):
        if isinstance(terms, Mapping):
            items = terms.items()
        else:
            items = terms
        acc: dict = {}
        for name, c in items:
            c = Fraction(c)
            if c:
                acc[name] = acc.get(name, Fraction(0)) + c
        self.const = Fraction(const)
        self.terms = tuple(sorted((n, c) for n, c in acc.items() if c))
        self._hash = hash((self.const, self.terms))

    @staticmethod
    def of(v: "Affine" | RatLike) -> "Affine":
        return v if isinstance(v, Affine) else Affine(v)

    @staticmethod
    def param(name: str) -> "Affine":
        return Affine(0, ((name, 1),))

    def __add__(self, other):
        o = Affine.of(other)
        return Affine(self.const + o.const, list(self.terms) + list(o.terms))

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.const, tuple((n, -c) for n, c in self.terms))

    def __sub__(self, other):
        return self + (-Affine.of(other))

    def __mul__(self, s: RatLike):
        s = Fraction(s)
        return Affine(self.const * s, tuple((n, c * s) for n, c in self.terms))

    __rmul__ = __mul__

    def is_const(self) -> bool:
        return not self.terms

    def as_fraction(self) -> Fraction:
        if self.terms:
            raise ValueError(f"exponent {self} is not a constant")
        return self.const

    def is_int(self) -> bool:
        return self.is_const() and self.const.denominator == 1

    def is_zero(self) -> bool:
        return not self.terms and not self.const

    def subs(self, values: Mapping[str, Fraction]) -> "Affine":
        const = self.const
        rest = []
        for n, c in self.terms:
            if n in values:
                const += c * values[n]
            else:
                rest.append((n, c))
        return Affine(const, rest)

    def param_names(self):
        return [n for n, _ in self.terms]

    def primitive(self) -> tuple[Fraction, AffineKey]:
        """Factor as scale * primitive-integer-key; requires a nonzero form."""
        coeffs = [c for _, c in self.terms] + ([self.const] if self.const else [])
        if not coeffs:
            raise ValueError("zero affine form has no primitive part")
        from functools import reduce

        den = reduce(lambda a, b: a * b // gcd(a, b), (c.denominator for c in coeffs), 1)
        ints = [int(c * den) for _, c in self.terms] + [int(self.const * den)]
        g = reduce(gcd, (abs(i) for i in ints if i), 0)
        lead = next(i for i in ints if i)
        sign = -1 if lead < 0 else 1
        scale = Fraction(sign * g, den)
        key = tuple((n, int(c * den) // (sign * g)) for n, c in self.terms) + (
            int(self.const * den) // (sign * g),
        )
        return scale, key

    def sort_key(self):
        return (self.const, self.terms)

    def __eq__(self, other):
        return (
            isinstance(other, Affine)
            and self.const == other.const
            and self.terms == other.terms
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Affine({self})"

    def __str__(self):
        parts = []
        for n, c in self.terms:
            if c == 1:
                parts.append(n)
            elif c == -1:
                parts.append(f"-{n}")
            else:
                parts.append(f"{c}*{n}")
        if self.const or not parts:
            parts.append(str(self.const))
        out = parts[0]
        for p in parts[1:]:
            out += p if p.startswith("-") else "+" + p
        return out


AFFINE_ZERO = Affine(0)
AFFINE_ONE = Affine(1)


class ParamRat:
    """A rational function of parameter symbols in reduced canonical form.

    Numerator: polynomial over Q.  Denominator: product of primitive affine
    factors with positive integer exponents, none of which divides the
    numerator.  The representation is unique, so equality and zero-testing
    are structural.
    """

    __slots__ = ("num", "den", "_hash")

    def __init__(self, num: PolyItems, den: tuple = ()):
        self.num, self.den = self._reduce(num, den)
        self._hash = hash((self.num, self.den))

    @staticmethod
    def _reduce(num: PolyItems, den: tuple):
        if not num:
            return (), ()
        factors = []
        for key, k in den:
            for _ in range(k):
                q = _poly_div_affine(num, key)
                if q is None:
                    factors.append(key)
                else:
                    num = q
        acc: dict = {}
        for key in factors:
            acc[key] = acc.get(key, 0) + 1
        return num, tuple(sorted(acc.items()))

    @staticmethod
    def from_rat(c: RatLike) -> "ParamRat":
        return ParamRat(_poly_const(Fraction(c)))

    @staticmethod
    def param(name: str) -> "ParamRat":
        return ParamRat(((((name, 1),), Fraction(1)),))

    @staticmethod
    def from_affine(a: Affine) -> "ParamRat":
        return ParamRat(
            _poly_from_items(
                [(((n, 1),), c) for n, c in a.terms] + [(_ONE_MONO, a.const)]
            )
        )

    def is_zero(self) -> bool:
        return not self.num

    def is_one(self) -> bool:
        return self.num == ((_ONE_MONO, Fraction(1)),) and not self.den

    def is_rational(self) -> bool:
        return not self.den and (not self.num or (len(self.num) == 1 and self.num[0][0] == _ONE_MONO))

    def as_fraction(self) -> Fraction:
        if not self.num:
            return Fraction(0)
        if not self.is_rational():
            raise ValueError(f"coefficient {self} is not a plain rational")
        return self.num[0][1]

    def _den_lcm(self, other: "ParamRat") -> tuple:
        keys = {k: e for k, e in self.den}
        for k, e in other.den:
            keys[k] = max(keys.get(k, 0), e)
        return tuple(sorted(keys.items()))

    def _scale_to_den(self, lcm: tuple) -> PolyItems:
        have = {k: e for k, e in self.den}
        num = self.num
        for key, e in lcm:
            for _ in range(e - have.get(key, 0)):
                num = _poly_mul(num, _affine_key_poly(key))
        return num

    def __add__(self, other):
        o = other if isinstance(other, ParamRat) else ParamRat.from_rat(other)
        lcm = self._den_lcm(o)
        return ParamRat(_poly_add(self._scale_to_den(lcm), o._scale_to_den(lcm)), lcm)

    __radd__ = __add__

    def __neg__(self):
        return ParamRat(_poly_neg(self.num), self.den)

    def __sub__(self, other):
        o = other if isinstance(other, ParamRat) else ParamRat.from_rat(other)
        return self + (-o)

    def __mul__(self, other):
        o = other if isinstance(other, ParamRat) else ParamRat.from_rat(other)
        den: dict = {}
        for k, e in self.den + o.den:
            den[k] = den.get(k, 0) + e
        return ParamRat(_poly_mul(self.num, o.num), tuple(sorted(den.items())))

    __rmul__ = __mul__

    def inverse(self) -> "ParamRat":
        """Invert; the numerator must factor as monomial * affine products."""
        if not self.num:
            raise ZeroDivisionError("inverting zero coefficient")
        num = self.num
        # Strip monomial content.
        content: dict = {}
        if num:
            first = dict(num[0][0])
            for name in list(first):
                k = min((dict(m).get(name, 0) for m, _ in num), default=0)
                if k > 0:
                    content[name] = k
            if content:
                stripped = []
                for m, c in num:
                    md = dict(m)
                    for name, k in content.items():
                        md[name] -= k
                    stripped.append((tuple(sorted((n, e) for n, e in md.items() if e)), c))
                num = _poly_from_items(stripped)
        new_den: dict = {}
        scale = Fraction(1)
        for name, k in content.items():
            key = ((name, 1), 0)
            new_den[key] = new_den.get(key, 0) + k
        if len(num) == 1 and num[0][0] == _ONE_MONO:
            scale = num[0][1]
        else:
            factored = _factor_affine_product(num)
            if factored is None:
                raise ValueError(f"cannot invert non-affine coefficient {self}")
            scale, keys = factored
            for key in keys:
                new_den[key] = new_den.get(key, 0) + 1
        out_num = _poly_const(Fraction(1, 1) / scale)
        for key, e in self.den:
            for _ in range(e):
                out_num = _poly_mul(out_num, _affine_key_poly(key))
        return ParamRat(out_num, tuple(sorted(new_den.items())))

    def __truediv__(self, other):
        o = other if isinstance(other, ParamRat) else ParamRat.from_rat(other)
        return self * o.inverse()

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        out = ParamRat.from_rat(1)
        for _ in range(k):
            out = out * self
        return out

    def dparam(self, name: str) -> "ParamRat":
        """Partial derivative with respect to one parameter symbol."""
        out = ParamRat(_d_poly(self.num, name), self.den)
        for key, e in self.den:
            dkey = dict((n, Fraction(c)) for n, c in key[:-1]).get(name)
            if dkey:
                den = dict(self.den)
                den[key] = den[key] + 1
                out = out + ParamRat(
                    _poly_scale(self.num, -e * dkey), tuple(sorted(den.items()))
                )
        return out

    def subs(self, values: Mapping[str, Fraction]) -> "ParamRat":
        num = _subs_poly(self.num, values)
        den: dict = {}
        scale = Fraction(1)
        for key, e in self.den:
            aff = Affine(
                Fraction(key[-1]), tuple((n, Fraction(c)) for n, c in key[:-1])
            ).subs(values)
            if aff.is_const():
                v = aff.as_fraction()
                if v == 0:
                    raise ZeroDivisionError(
                        f"denominator factor {_affine_key_str(key)} vanishes at {dict(values)}"
                    )
                scale /= v**e
            else:
                s, k2 = aff.primitive()
                scale /= s**e
                den[k2] = den.get(k2, 0) + e
        return ParamRat(_poly_scale(num, scale), tuple(sorted(den.items())))

    def param_names(self) -> set:
        names = set()
        for m, _ in self.num:
            names.update(n for n, _ in m)
        for key, _ in self.den:
            names.update(n for n, _ in key[:-1])
        return names

    def sort_key(self):
        return (self.num, self.den)

    def __eq__(self, other):
        return (
            isinstance(other, ParamRat)
            and self.num == other.num
            and self.den == other.den
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"ParamRat({self})"

    def __str__(self):
        num = _poly_str(self.num)
        if not self.den:
            return num
        dparts = []
        for key, e in self.den:
            s = f"({_affine_key_str(key)})"
            dparts.append(s if e == 1 else f"{s}^{e}")
        den = "*".join(dparts)
        if len(dparts) > 1:
            den = f"({den})"
        if len(self.num) > 1 or (self.num and ("/" in num or "*" in num)):
            num = f"({num})"
        return f"{num}/{den}"


PR_ZERO = ParamRat.from_rat(0)
PR_ONE = ParamRat.from_rat(1)


def _d_poly(poly: PolyItems, name: str) -> PolyItems:
    out = []
    for mono, c in poly:
        md = dict(mono)
        k = md.get(name, 0)
        if k:
            md[name] = k - 1
            out.append((tuple(sorted((n, e) for n, e in md.items() if e)), c * k))
    return _poly_from_items(out)


def _subs_poly(poly: PolyItems, values: Mapping[str, Fraction]) -> PolyItems:
    out = []
    for mono, c in poly:
        rest = []
        for name, k in mono:
            if name in values:
                c = c * values[name] ** k
            else:
                rest.append((name, k))
        out.append((tuple(rest), c))
    return _poly_from_items(out)


def _factor_affine_product(poly: PolyItems) -> Optional[tuple]:
    """Factor a polynomial into rational * affine factors, or None.

    Degree-1 polynomials are affine directly; univariate higher degrees are
    split by rational-root search.  Genuinely irreducible or multivariate
    numerators stay unfactored (the caller raises).
    """
    names = set()
    for mono, _ in poly:
        names.update(n for n, _ in mono)
    aff = _poly_to_affine(poly)
    if aff is not None:
        s, key = aff.primitive()
        return s, [key]
    if len(names) != 1:
        return None
    (name,) = names
    coeffs: dict = {}
    for mono, c in poly:
        d = mono[0][1] if mono else 0
        coeffs[d] = c
    deg = max(coeffs)
    from functools import reduce

    den = reduce(
        lambda a, b: a * b // gcd(a, b), (c.denominator for c in coeffs.values()), 1
    )
    ints = {d: int(c * den) for d, c in coeffs.items()}
    lead, const = ints.get(deg, 0), ints.get(0, 0)
    if const == 0 or abs(const) > 10**9 or abs(lead) > 10**9:
        return None

    def divisors(n: int):
        n = abs(n)
        out = set()
        i = 1
        while i * i <= n and i <= 10**4:
            if n % i == 0:
                out.add(i)
                out.add(n // i)
            i += 1
        return sorted(out)

    for pnum in divisors(const):
        for qden in divisors(lead):
            for sign in (1, -1):
                root = Fraction(sign * pnum, qden)
                key = Affine(-root, ((name, Fraction(1)),)).primitive()[1]
                q = _poly_div_affine(poly, key)
                if q is not None:
                    rest = _factor_affine_product(q)
                    if rest is None:
                        return None
                    s, keys = rest
                    return s, keys + [key]
    return None


def _poly_to_affine(poly: PolyItems) -> Optional[Affine]:
    const = Fraction(0)
    terms = []
    for mono, c in poly:
        if mono == _ONE_MONO:
            const = c
        elif len(mono) == 1 and mono[0][1] == 1:
            terms.append((mono[0][0], c))
        else:
            return None
    a = Affine(const, terms)
    return None if a.is_zero() else a


def _mono_str(mono: Monomial) -> str:
    return "*".join(n if k == 1 else f"{n}^{k}" for n, k in mono)


def _poly_str(poly: PolyItems) -> str:
    if not poly:
        return "0"
    parts = []
    for mono, c in poly:
        ms = _mono_str(mono)
        if not ms:
            parts.append(str(c))
        elif c == 1:
            parts.append(ms)
        elif c == -1:
            parts.append(f"-{ms}")
        else:
            parts.append(f"{c}*{ms}")
    out = parts[0]
    for p in parts[1:]:
        out += p if p.startswith("-") else "+" + p
    return out


def _affine_key_str(key: AffineKey) -> str:
    *terms, const = key
    a = Affine(const, tuple((n, Fraction(c)) for n, c in terms))
    return str(a)
