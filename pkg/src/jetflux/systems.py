"""Regular PDE systems in solved form: validation, restriction to the
solution space, lifting off it, and low-order jet classification."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .coeffs import Affine, ParamRat
from .expr import (
    JetExpr,
    JetVar,
    ZERO,
    add,
    add_all,
    coeff_expr,
    const,
    has_func_nodes,
    is_zero,
    jet_vars,
    max_order,
    mul,
    substitute,
    total_derivative,
    var,
)
from .parser import Context, parse


class InvalidSystem(ValueError):
    pass


@dataclass(frozen=True)
class Equation:
    lead: JetVar
    rhs: JetExpr

    @property
    def expression(self) -> JetExpr:
        """The PDE expression G = lead - rhs."""
        return add(var(self.lead), -self.rhs)


class LinearDiffOperator:
    """Sum of coefficient * D^multi applications, one row per equation slot."""

    def __init__(self, rows: Sequence[Sequence[Tuple[JetExpr, Tuple[int, ...]]]]):
        self.rows = tuple(tuple(row) for row in rows)

    def apply(self, vec: Sequence[JetExpr], funcs=None) -> JetExpr:
        parts = []
        for row, comp in zip(self.rows, vec):
            for coeff, multi in row:
                d = comp
                for iv, k in enumerate(multi):
                    for _ in range(k):
                        d = total_derivative(d, iv, funcs)
                parts.append(mul(coeff, d))
        return add_all(parts)

    def adjoint(self, chi: JetExpr, funcs=None) -> List[JetExpr]:
        """Componentwise formal adjoint applied to a differential function:
        row a maps to sum of (-D)^multi (coeff * chi)."""
        out = []
        for row in self.rows:
            parts = []
            for coeff, multi in row:
                d = mul(coeff, chi)
                sign = 1
                for iv, k in enumerate(multi):
                    for _ in range(k):
                        d = total_derivative(d, iv, funcs)
                        sign = -sign
                parts.append(d if sign > 0 else -d)
            out.append(add_all(parts))
        return out


@dataclass
class ScalingAction:
    """Weights of a scaling transformation: t, each x^i, each dependent."""

    name: str
    t_weight: ParamRat
    x_weights: Tuple[ParamRat, ...]
    dep_weights: Tuple[ParamRat, ...]
    param_weights: Dict[str, ParamRat] = field(default_factory=dict)

    def characteristic(self, system: "PdeSystem") -> List[JetExpr]:
        """P in the characteristic form of the scaling generator."""
        from .expr import Indep

        out = []
        for alpha in range(len(system.ctx.dependent)):
            u = var(JetVar(alpha, [0] * system.ctx.n_indep))
            p = mul(coeff_expr(self.dep_weights[alpha]), u)
            p = add(p, -mul(coeff_expr(self.t_weight), mul(var(Indep(0)), var(JetVar(alpha, _unit(system.ctx.n_indep, 0))))))
            for i, bw in enumerate(self.x_weights, start=1):
                p = add(p, -mul(coeff_expr(bw), mul(var(Indep(i)), var(JetVar(alpha, _unit(system.ctx.n_indep, i))))))
            out.append(p)
        return out

    def tau_xi(self, system: "PdeSystem") -> Tuple[JetExpr, List[JetExpr]]:
        from .expr import Indep

        tau = mul(coeff_expr(self.t_weight), var(Indep(0)))
        xi = [
            mul(coeff_expr(bw), var(Indep(i)))
            for i, bw in enumerate(self.x_weights, start=1)
        ]
        return tau, xi

    def divergence_factor(self) -> ParamRat:
        out = self.t_weight
        for bw in self.x_weights:
            out = out + bw
        return out


def _unit(n: int, i: int) -> Tuple[int, ...]:
    m = [0] * n
    m[i] = 1
    return tuple(m)


@dataclass
class ValidationReport:
    valid: bool
    evolution_form: bool
    errors: List[str]
    notes: List[str]

    def __bool__(self):
        return self.valid


class PdeSystem:
    """A regular PDE system in solved form.  Immutable after load."""

    def __init__(
        self,
        name: str,
        ctx: Context,
        equations: Sequence[Equation],
        identities: Sequence[LinearDiffOperator] = (),
        scalings: Mapping[str, ScalingAction] | None = None,
        alt_leads: Sequence[JetVar] = (),
        description: str = "",
    ):
        self.name = name
        self.ctx = ctx
        self.equations = tuple(equations)
        self.identities = tuple(identities)
        self.scalings = dict(scalings or {})
        self.alt_leads = tuple(alt_leads)
        self.description = description
        self._restrict_cache: dict = {}
        self._dexpr_cache: dict = {}

    # -- basic views ------------------------------------------------------

    @property
    def funcs(self):
        return self.ctx.functions

    @property
    def leads(self) -> Tuple[JetVar, ...]:
        return tuple(eq.lead for eq in self.equations)

    @property
    def n_eqs(self) -> int:
        return len(self.equations)

    @property
    def n_deps(self) -> int:
        return len(self.ctx.dependent)

    def expressions(self) -> List[JetExpr]:
        """The PDE expressions G^a = lead_a - rhs_a."""
        return [eq.expression for eq in self.equations]

    @property
    def order(self) -> int:
        out = 0
        for eq in self.equations:
            out = max(out, eq.lead.order, max_order(eq.rhs))
        return out

    def scaling(self, name: str = "default") -> ScalingAction:
        try:
            return self.scalings[name]
        except KeyError:
            raise InvalidSystem(
                f"system {self.name} declares no scaling action {name!r}"
            )

    def parse(self, text: str) -> JetExpr:
        return parse(text, self.ctx)

    # -- validation --------------------------------------------------------

    def lead_of_descendant(self, v: JetVar) -> Optional[int]:
        for a, eq in enumerate(self.equations):
            if v.descends_from(eq.lead):
                return a
        return None

    def validate(self) -> ValidationReport:
        errors: List[str] = []
        notes: List[str] = []
        seen = set()
        for eq in self.equations:
            if eq.lead in seen:
                errors.append(f"duplicate leading derivative {self.ctx.jetvar_name(eq.lead)}")
            seen.add(eq.lead)
        for a, ea in enumerate(self.equations):
            for b, eb in enumerate(self.equations):
                if a != b and ea.lead.descends_from(eb.lead):
                    errors.append(
                        f"lead {self.ctx.jetvar_name(ea.lead)} is a derivative of "
                        f"lead {self.ctx.jetvar_name(eb.lead)}"
                    )
        for a, eq in enumerate(self.equations):
            for v in jet_vars(eq.rhs):
                hit = self.lead_of_descendant(v)
                if hit is not None:
                    errors.append(
                        f"equation {a + 1} (lead {self.ctx.jetvar_name(eq.lead)}): "
                        f"right side contains {self.ctx.jetvar_name(v)}, a descendant "
                        f"of lead {self.ctx.jetvar_name(self.equations[hit].lead)}"
                    )
        for j, ident in enumerate(self.identities):
            if len(ident.rows) != self.n_eqs:
                errors.append(f"identity {j + 1} has {len(ident.rows)} rows, expected {self.n_eqs}")
                continue
            resid = ident.apply(self.expressions(), self.funcs)
            zr = is_zero(resid)
            if zr is not True:
                errors.append(f"identity {j + 1} residual does not normalize to zero")
        evolution = self._evolution_form()
        if evolution:
            notes.append("leads are pure t-derivatives of distinct dependent variables (evolution form)")
        return ValidationReport(not errors, evolution, errors, notes)

    def _evolution_form(self) -> bool:
        deps = set()
        for eq in self.equations:
            if any(k for k in eq.lead.multi[1:]) or eq.lead.multi[0] == 0:
                return False
            if eq.lead.dep in deps:
                return False
            deps.add(eq.lead.dep)
        return True

    # -- restriction to the solution space ---------------------------------

    def _descendant_value(self, a: int, delta: Tuple[int, ...]) -> JetExpr:
        key = (a, delta)
        hit = self._dexpr_cache.get(key)
        if hit is not None:
            return hit
        e = self.equations[a].rhs
        for iv, k in enumerate(delta):
            for _ in range(k):
                e = total_derivative(e, iv, self.funcs)
        self._dexpr_cache[key] = e
        return e

    def restrict(self, e: JetExpr) -> JetExpr:
        """Eliminate leading derivatives and their differential consequences,
        to a fixed point; the result is e restricted to the solution space."""
        hit = self._restrict_cache.get(e)
        if hit is not None:
            return hit
        orig = e
        guard = max_order(e) + self.order + 8
        passes = 0
        while True:
            mapping = {}
            for v in jet_vars(e):
                a = self.lead_of_descendant(v)
                if a is not None:
                    delta = tuple(
                        vi - li for vi, li in zip(v.multi, self.equations[a].lead.multi)
                    )
                    mapping[v] = self._descendant_value(a, delta)
            if not mapping:
                break
            e = substitute(e, mapping, self.funcs)
            passes += 1
            if passes > guard:
                raise InvalidSystem(
                    f"restriction did not terminate after {passes} passes; "
                    "the system is not closed in solved form"
                )
        if len(self._restrict_cache) < 20000:
            self._restrict_cache[orig] = e
        return e

    def restrict_vector(self, vec: Sequence[JetExpr]) -> List[JetExpr]:
        return [self.restrict(c) for c in vec]

    # -- lifting off the solution space -------------------------------------

    def ghost_context(self) -> Context:
        names = list(self.ctx.dependent) + [f"GH{a + 1}" for a in range(self.n_eqs)]
        return Context(self.ctx.independent, names, self.ctx.params, self.funcs)

    def lift_off_solution_space(self, e: JetExpr):
        """Rewrite e as restrict(e) + R_e(G) plus any remainder nonlinear in G.

        Returns (restricted, rows, remainder) where rows maps
        (equation index, derivative multi-index) -> coefficient of D^multi G.
        """
        m = self.n_deps
        guard = max_order(e) + self.order + 8
        passes = 0
        work = e
        while True:
            mapping = {}
            for v in jet_vars(work):
                if v.dep >= m:
                    continue
                a = self.lead_of_descendant(v)
                if a is not None:
                    delta = tuple(
                        vi - li for vi, li in zip(v.multi, self.equations[a].lead.multi)
                    )
                    ghost = var(JetVar(m + a, delta))
                    mapping[v] = add(self._descendant_value(a, delta), ghost)
            if not mapping:
                break
            work = substitute(work, mapping, self.funcs)
            passes += 1
            if passes > guard:
                raise InvalidSystem("lift did not terminate; system not closed")
        restricted_terms = []
        rows: Dict[Tuple[int, Tuple[int, ...]], JetExpr] = {}
        remainder_terms = []
        for t in work.terms:
            one = JetExpr((t,))
            linear_ghost = None
            degree = 0
            opaque_ghost = False
            for base, exp in t.factors:
                if isinstance(base, JetVar):
                    if base.dep >= m:
                        if exp == Affine(1):
                            degree += 1
                            linear_ghost = base
                        else:
                            degree += 2
                else:
                    if any(v.dep >= m for v in jet_vars(var(base))):
                        opaque_ghost = True
            if opaque_ghost:
                remainder_terms.append(one)
            elif degree == 0:
                restricted_terms.append(one)
            elif degree == 1:
                coeff = mul(one, var(linear_ghost, -1))
                key = (linear_ghost.dep - m, linear_ghost.multi)
                rows[key] = add(rows.get(key, ZERO), coeff)
            else:
                remainder_terms.append(one)
        return add_all(restricted_terms), rows, add_all(remainder_terms)

    def operator_from_rows(self, rows: Mapping) -> LinearDiffOperator:
        """Package lift rows as a LinearDiffOperator over the equations."""
        by_eq: List[List[Tuple[JetExpr, Tuple[int, ...]]]] = [[] for _ in range(self.n_eqs)]
        for (a, multi), coeff in sorted(rows.items()):
            by_eq[a].append((coeff, multi))
        return LinearDiffOperator(by_eq)

    # -- low-order classification -------------------------------------------

    def all_leads(self) -> Tuple[JetVar, ...]:
        return self.leads + self.alt_leads

    def low_order_variables(self) -> List[JetVar]:
        """Jet variables that some repeated total derivative maps onto a
        leading derivative (declared or declared-alternative), excluding the
        leads and their descendants."""
        leads = self.all_leads()
        out = set()
        for lead in leads:
            for multi in _sub_multis(lead.multi):
                v = JetVar(lead.dep, multi)
                if any(v.descends_from(l2) for l2 in leads):
                    continue
                out.add(v)
        return sorted(out, key=lambda v: v.sort_key())

    def resolve_for(self, a: int, new_lead: JetVar) -> Equation:
        """Re-solve equation a for an alternative leading derivative; the
        equation must be linear in it with a monomial coefficient."""
        from .expr import partial_jet

        g = self.equations[a].expression
        coeff = partial_jet(g, new_lead, self.funcs)
        if new_lead in jet_vars(coeff) or not coeff.terms:
            raise InvalidSystem(
                f"equation {a + 1} is not linear in {self.ctx.jetvar_name(new_lead)}"
            )
        if len(coeff.terms) != 1:
            raise InvalidSystem(
                f"coefficient of {self.ctx.jetvar_name(new_lead)} is not a monomial; refusing to re-solve"
            )
        rest = add(g, -mul(coeff, var(new_lead)))
        from .expr import pow_

        rhs = mul(-rest, pow_(coeff, -1))
        return Equation(new_lead, rhs)


def _sub_multis(multi: Tuple[int, ...]):
    if not multi:
        yield ()
        return
    head, tail = multi[0], multi[1:]
    for k in range(head + 1):
        for rest in _sub_multis(tail):
            yield (k,) + rest
