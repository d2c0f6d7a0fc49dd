"""Constructing and verifying conserved currents from multipliers.

Three constructions: the homotopy integral, the algebraic scaling formula,
and direct integration of the characteristic equation; plus multiplier
recovery from a current and the equivalence decision between currents.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .coeffs import ParamRat
from .detsys import (
    LinearAnsatz,
    NonlinearResidual,
    Verdict,
    _linear_rows,
    _verdict_from_residuals,
    triviality_check,
    verify_multiplier,
)
from .expr import (
    JetExpr,
    JetVar,
    ZERO,
    add,
    add_all,
    coeff_expr,
    const,
    is_zero,
    jet_vars,
    mul,
    param,
    substitute,
    var,
)
from .linalg import solve_affine
from .systems import PdeSystem
from .varcalc import (
    Current,
    EulerImageError,
    divergence,
    divergence_antiderivative,
    euler,
    euler_single,
    scaling_identity,
    zero_current,
)


@dataclass
class ConservedCurrent:
    """A density/flux pair with provenance."""

    current: Current
    method: str = "user"
    multiplier: Optional[List[JetExpr]] = None
    omega: Optional[ParamRat] = None
    notes: List[str] = field(default_factory=list)

    @property
    def t(self) -> JetExpr:
        return self.current.t

    @property
    def x(self) -> Tuple[JetExpr, ...]:
        return self.current.x


class CriticalScalingWeight(ValueError):
    pass


class SubleadingUndefined(ValueError):
    pass


# ---------------------------------------------------------------------------
# Verification


def characteristic_residual(system: PdeSystem, cur: Current, q_vec: Sequence[JetExpr]) -> JetExpr:
    gq = add_all(mul(g, q) for g, q in zip(system.expressions(), q_vec))
    return add(divergence(cur, system.funcs), -gq)


def verify_characteristic(system: PdeSystem, cur: Current, q_vec: Sequence[JetExpr]) -> Verdict:
    """The characteristic equation D_t T + Div X = G.Q, identically."""
    return _verdict_from_residuals([characteristic_residual(system, cur, q_vec)])


def verify_conservation(system: PdeSystem, cur: Current) -> Verdict:
    """D_t T + Div X restricted to the solution space normalizes to zero."""
    resid = system.restrict(divergence(cur, system.funcs))
    return _verdict_from_residuals([resid])


# ---------------------------------------------------------------------------
# Homotopy construction


def current_from_multiplier_homotopy(
    system: PdeSystem,
    q_vec: Sequence[JetExpr],
    base_point: Mapping[int, Fraction] | None = None,
) -> ConservedCurrent:
    """The homotopy-integral current: satisfies the characteristic equation
    exactly, off the solution space."""
    gq = add_all(mul(g, q) for g, q in zip(system.expressions(), q_vec))
    try:
        cur = divergence_antiderivative(
            gq,
            system.n_deps,
            system.ctx.n_indep,
            base_point,
            system.funcs,
            check_euler=True,
        )
    except EulerImageError:
        raise EulerImageError(
            "G.Q is not a total divergence: Q fails the multiplier determining equation"
        )
    out = ConservedCurrent(cur, "homotopy", list(q_vec))
    if base_point:
        out.notes.append(f"homotopy base point {dict(base_point)}")
    return out


# ---------------------------------------------------------------------------
# Scaling construction


def current_from_multiplier_scaling(
    system: PdeSystem,
    q_vec: Sequence[JetExpr],
    action_name: str = "default",
) -> ConservedCurrent:
    """Algebraic construction: omega * (T, X) = scaling current of G.Q on the
    solution space; requires a scaling symmetry and a non-critical weight."""
    from .detsys import symmetry_residual

    action = system.scaling(action_name)
    p_vec = action.characteristic(system)
    sym = symmetry_residual(system, p_vec)
    for r in sym:
        if is_zero(r) is False:
            raise ValueError(
                f"declared scaling action {action_name!r} is not a symmetry of {system.name}"
            )
    gq = add_all(mul(g, q) for g, q in zip(system.expressions(), q_vec))
    res = scaling_identity(gq, action, system)
    if res.omega.is_zero():
        raise CriticalScalingWeight(
            "scaling weight omega = 0: critical power for this multiplier; "
            "use the homotopy integral or a dimensional scaling action"
        )
    raw = res.current.map(system.restrict)
    inv = res.omega.inverse()
    out = ConservedCurrent(raw.scale(inv), "scaling", list(q_vec), omega=res.omega)
    out.notes.append(f"scaling weight omega = {res.omega}")
    return out


def verify_dimensional_scaling(
    system_aug: PdeSystem,
    q_full: Sequence[JetExpr],
    action_name: str,
    constant_values: Mapping[str, Fraction],
    base_system: PdeSystem,
) -> Tuple[ConservedCurrent, ConservedCurrent]:
    """Dimensional-analysis construction on an augmented system whose
    dimensionful constants are promoted to constant dependent variables.

    `q_full` pairs one multiplier component with every augmented equation
    (the auxiliary components included).  Returns (raw, normalized): the raw
    formula output omega*(T, X) with the constants set to their values, and
    the same divided through by omega.
    """
    action = system_aug.scaling(action_name)
    funcs = system_aug.funcs
    if len(q_full) != system_aug.n_eqs:
        raise ValueError(
            f"augmented multiplier needs {system_aug.n_eqs} components, got {len(q_full)}"
        )
    f = add_all(mul(g, q) for g, q in zip(system_aug.expressions(), q_full))
    for alpha, comp in enumerate(euler(f, system_aug.n_deps, funcs)):
        if is_zero(comp) is not True:
            name = system_aug.ctx.dependent[alpha]
            raise ValueError(
                f"auxiliary multipliers fail their determining system: "
                f"Euler component for {name} is nonzero"
            )
    res = scaling_identity(f, action, system_aug)
    if res.omega.is_zero():
        raise CriticalScalingWeight(
            f"omega = 0 for dimensional action {action_name!r}; pick another action"
        )
    raw = res.current.map(system_aug.restrict)
    mapping = {}
    dep_index = {n: i for i, n in enumerate(system_aug.ctx.dependent)}
    for name, value in constant_values.items():
        mapping[dep_index[name]] = Fraction(value)

    def eliminate(e: JetExpr) -> JetExpr:
        sub = {}
        for v in jet_vars(e):
            if v.dep in mapping:
                sub[v] = const(mapping[v.dep]) if v.order == 0 else ZERO
        return substitute(e, sub, funcs)

    raw = raw.map(eliminate)
    raw_cc = ConservedCurrent(raw, "dimensional-scaling", list(q_full), omega=res.omega)
    norm = ConservedCurrent(
        raw.scale(res.omega.inverse()), "dimensional-scaling", list(q_full), omega=res.omega
    )
    raw_cc.notes.append(f"dimensional action {action_name!r}, omega = {res.omega}")
    norm.notes.append(f"dimensional action {action_name!r}, omega = {res.omega}")
    return raw_cc, norm


# ---------------------------------------------------------------------------
# Direct integration


class AnsatzTooSmall(ValueError):
    pass


def current_from_multiplier_direct(
    system: PdeSystem,
    q_vec: Sequence[JetExpr],
    t_basis: Sequence[JetExpr],
    x_basis: Sequence[JetExpr],
) -> ConservedCurrent:
    """Solve D_t T + Div X = G.Q as an exact linear system over ansatz
    coefficients for T and each flux component."""
    n_space = system.ctx.n_indep - 1
    entries: List[Tuple[int, JetExpr]] = [(0, b) for b in t_basis]
    for i in range(n_space):
        entries.extend((1 + i, b) for b in x_basis)
    ansatz = LinearAnsatz(entries, 1 + n_space)
    unknowns = [f"_c{i + 1}" for i in range(len(entries))]
    vec = ansatz.candidate(unknowns)
    cur = Current(vec[0], tuple(vec[1:]))
    resid = characteristic_residual(system, cur, q_vec)
    rows, rhs, ncols, _ = _linear_rows([resid], unknowns, inhomogeneous=True)
    sol = solve_affine(rows, rhs, ncols)
    if sol is None:
        unmatched = _unmatched_monomials(resid, unknowns, system)
        raise AnsatzTooSmall(
            "characteristic equation is inconsistent over the given ansatz; "
            f"unmatched monomials include: {', '.join(unmatched[:6])}"
        )
    x0, null = sol
    vecs = ansatz.materialize(x0)
    out = ConservedCurrent(
        Current(vecs[0], tuple(vecs[1:])), "direct", list(q_vec)
    )
    out.notes.append(
        f"trivial-current freedom dimension {len(null)}; free coefficients pinned to 0"
    )
    return out


def _unmatched_monomials(resid: JetExpr, unknowns, system) -> List[str]:
    from .parser import to_string

    names = set(unknowns)
    out = []
    for t in resid.terms:
        if not any(n in names for n in t.coeff.param_names()):
            out.append(to_string(JetExpr((t,)), system.ctx))
    return out


# ---------------------------------------------------------------------------
# Multiplier recovery and equivalence


def multiplier_from_current(system: PdeSystem, cur: Current) -> List[JetExpr]:
    """Q_a = E_(subleading/t)(T) + sum_i E_(subleading/x^i)(X^i).

    Components restrict to the solution space first (changing the current
    only by a locally trivial one).
    """
    funcs = system.funcs
    t_comp = system.restrict(cur.t)
    x_comps = [system.restrict(c) for c in cur.x]
    out = []
    for a, eq in enumerate(system.equations):
        lead = eq.lead
        parts = []
        any_slot = False
        if lead.multi[0] > 0:
            sub = lead.lowered(0)
            parts.append(euler_single(t_comp, sub, funcs))
            any_slot = True
        for i in range(1, len(lead.multi)):
            if lead.multi[i] > 0:
                sub = lead.lowered(i)
                parts.append(euler_single(x_comps[i - 1], sub, funcs))
                any_slot = True
        if not any_slot:
            raise SubleadingUndefined(
                f"equation {a + 1}: lead {system.ctx.jetvar_name(lead)} has no "
                "subleading derivative in any direction"
            )
        out.append(add_all(parts))
    return out


def current_equivalence(
    system: PdeSystem,
    c1: Current,
    c2: Current,
    chi_basis: Optional[Sequence[JetExpr]] = None,
) -> Verdict:
    """Two conserved currents are locally equivalent iff the multiplier of
    their difference is trivial."""
    diff = c1 - c2
    q_diff = multiplier_from_current(system, diff)
    verdict = triviality_check(system, q_diff, chi_basis)
    return Verdict(verdict.status, verdict.residuals, verdict.notes)


# ---------------------------------------------------------------------------
# Default ansatz helpers for the direct method


def default_direct_bases(system: PdeSystem, degree: int = 3, tx_degree: int = 1):
    """Low-order monomials for T and X with bounded explicit (t, x) degree."""
    from .detsys import monomial_basis
    from .expr import Indep

    jets = system.low_order_variables()
    tx: List[JetExpr] = [const(1)]
    for i in range(system.ctx.n_indep):
        if tx_degree >= 1:
            tx.append(var(Indep(i)))
    jet_mons = monomial_basis(system, degree=degree, include_tx=False)
    t_basis = [mul(a, b) for a in tx for b in jet_mons]
    extra = set()
    x_vars = list(jets)
    for eq in system.equations:
        lead = eq.lead
        if lead.multi[0] > 0:
            for v in jet_vars(eq.rhs):
                extra.add(v)
    x_jets = sorted(set(x_vars) | extra, key=lambda v: v.sort_key())
    x_mons = monomial_basis(system, degree=degree + 1, include_tx=False, variables=x_jets)
    x_basis = [mul(a, b) for a in tx for b in x_mons]
    return t_basis, x_basis
