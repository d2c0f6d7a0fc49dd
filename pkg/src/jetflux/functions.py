"""Registry for opaque function nodes.

A declared function has a fixed number of argument slots.  Differentiation
produces formal derivative nodes (written `D1f`, `D2D2g`, ...) unless a
rewrite rule maps a derivative pattern to an expression: this is how a named
antiderivative gets its registered derivative (D1g -> f(u)) and how
constrained functions are normalized (a harmonic alpha rewrites its second
x-derivative to minus its second y-derivative).

For the numeric oracle a function may carry a profile: a concrete expression
over placeholder arguments with exact rational coefficients, differentiated
formally and evaluated exactly.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping, Optional, Sequence

from . import expr as E
from .expr import JetExpr, JetVar, substitute, partial_jet


class FuncDecl:
    def __init__(self, name: str, nargs: int):
        self.name = name
        self.nargs = nargs
        # (dcounts pattern) -> template over placeholder args
        self.rules: dict = {}
        self.profile: Optional[JetExpr] = None


def _placeholder(slot: int) -> JetVar:
    # Placeholder argument variables live in a private 0-spatial context:
    # dependent index = slot, no derivative coordinates.
    return JetVar(slot, (0,))


class FunctionTable:
    """Declared opaque functions with derivative rules and numeric profiles."""

    def __init__(self):
        self._decls: dict = {}

    def declare(self, name: str, nargs: int) -> FuncDecl:
        if name in self._decls:
            raise ValueError(f"function {name} already declared")
        d = FuncDecl(name, nargs)
        self._decls[name] = d
        return d

    def has(self, name: str) -> bool:
        return name in self._decls

    def nargs(self, name: str) -> int:
        return self._decls[name].nargs

    def names(self):
        return sorted(self._decls)

    def add_rule(self, name: str, dcounts: Sequence[int], template: JetExpr):
        """Rewrite the `dcounts` derivative of `name` to `template`.

        The template is written over placeholder arguments (see
        `placeholder_context`); actual arguments substitute in on use.
        """
        self._decls[name].rules[tuple(dcounts)] = template

    def set_profile(self, name: str, template: JetExpr):
        self._decls[name].profile = template

    def rewrite(self, name: str, dcounts: tuple, args: tuple) -> Optional[JetExpr]:
        decl = self._decls.get(name)
        if decl is None or not decl.rules:
            return None
        for pat in sorted(decl.rules, reverse=True):
            if all(d >= p for d, p in zip(dcounts, pat)) and any(p for p in pat):
                template = decl.rules[pat]
                # Remaining formal derivatives act on the template over the
                # placeholder arguments; node creation inside recurses through
                # this table, so chained rules compose.
                for slot, (d, p) in enumerate(zip(dcounts, pat)):
                    for _ in range(d - p):
                        template = partial_jet(template, _placeholder(slot), self)
                return substitute(
                    template, {_placeholder(i): a for i, a in enumerate(args)}, self
                )
        return None

    def eval_node(self, name: str, dcounts: tuple, argv: Sequence[Fraction]) -> Fraction:
        decl = self._decls.get(name)
        if decl is None or decl.profile is None:
            raise KeyError(f"no numeric profile registered for function {name}")
        e = decl.profile
        for slot, k in enumerate(dcounts):
            for _ in range(k):
                e = partial_jet(e, _placeholder(slot), self)
        point = {_placeholder(i): Fraction(v) for i, v in enumerate(argv)}
        return E.eval_numeric(e, point, {}, self)


def placeholder_context(arg_names: Sequence[str], params: Sequence[str] = (), functions=None):
    """A parsing context whose dependents are the function's argument slots.

    The single dummy independent variable is chosen to avoid a collision
    with the argument names, so templates like `a(t)` parse with `t` bound
    to the placeholder slot.
    """
    from .parser import Context

    dummy = next(ch for ch in "qvwzs" if ch not in arg_names and ch not in params)
    return Context(
        independent=[dummy], dependent=list(arg_names), params=params, functions=functions
    )
