"""Determining equations and exact linear-ansatz solving.

Residual builders come in two levels: identity-level conditions must vanish
identically in jet space (multipliers, variational symmetries), while
on-shell conditions vanish after restriction to the solution space
(symmetries, adjoint-symmetries).  Identity-level residuals are split over
every monomial of free jet space; on-shell residuals are restricted first so
the split runs over solution-space coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .coeffs import ParamRat
from .expr import (
    JetExpr,
    JetVar,
    ZERO,
    add,
    add_all,
    coeff_expr,
    collect_param_names,
    const,
    is_zero,
    jet_vars,
    mul,
    param,
    var,
)
from .linalg import nullspace, solve_affine
from .systems import PdeSystem
from .varcalc import (
    adjoint_vector,
    apply_D,
    euler,
    frechet,
    higher_euler,
)


# ---------------------------------------------------------------------------
# Residuals


def symmetry_residual(system: PdeSystem, p_vec: Sequence[JetExpr]) -> List[JetExpr]:
    """Restriction of the linearized system along P; zero iff P generates an
    infinitesimal symmetry in characteristic form."""
    funcs = system.funcs
    return [system.restrict(frechet(g, p_vec, funcs)) for g in system.expressions()]


def adjoint_symmetry_residual(system: PdeSystem, q_vec: Sequence[JetExpr]) -> List[JetExpr]:
    """Restriction of the adjoint-linearized system weighted by Q."""
    funcs = system.funcs
    comps = adjoint_vector(system.expressions(), q_vec, system.n_deps, funcs)
    return [system.restrict(c) for c in comps]


def multiplier_residual(system: PdeSystem, q_vec: Sequence[JetExpr]) -> List[JetExpr]:
    """Euler image of G.Q per dependent; identically zero iff Q is a
    multiplier."""
    funcs = system.funcs
    gq = add_all(mul(g, q) for g, q in zip(system.expressions(), q_vec))
    return euler(gq, system.n_deps, funcs)


def variational_symmetry_residual(system: PdeSystem, p_vec: Sequence[JetExpr]) -> List[JetExpr]:
    """frechet(G, P) + adjoint of P weighted by G, required to vanish
    identically for a variational symmetry of a variational system."""
    funcs = system.funcs
    adj = adjoint_vector(list(p_vec), system.expressions(), system.n_deps, funcs)
    return [
        add(frechet(g, p_vec, funcs), adj[a])
        for a, g in enumerate(system.expressions())
    ]


@dataclass
class Verdict:
    status: str  # "pass" | "fail" | "undetermined"
    residuals: List[JetExpr]
    notes: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "pass"


def _verdict_from_residuals(residuals: Sequence[JetExpr], notes=None) -> Verdict:
    from .expr import zero_report

    status = "pass"
    all_notes = list(notes or [])
    for r in residuals:
        z, zn = zero_report(r)
        all_notes.extend(zn)
        if z is False:
            status = "fail"
            break
        if z is None and status == "pass":
            status = "undetermined"
    return Verdict(status, list(residuals), all_notes)


def verify_multiplier(system: PdeSystem, q_vec: Sequence[JetExpr]) -> Verdict:
    return _verdict_from_residuals(multiplier_residual(system, q_vec))


# ---------------------------------------------------------------------------
# Helmholtz-type split for adjoint-symmetries


@dataclass
class SplitRow:
    dep_index: int
    eq_index: int
    multi: Tuple[int, ...]
    residual: JetExpr

    @property
    def zero(self) -> bool:
        return not self.residual.terms


@dataclass
class HelmholtzTypeReport:
    adjoint_residuals: List[JetExpr]
    rows: List[SplitRow]
    nonlinear_remainders: List[JetExpr]
    notes: List[str] = field(default_factory=list)

    def adjoint_ok(self) -> Optional[bool]:
        out = True
        for r in self.adjoint_residuals:
            z = is_zero(r)
            if z is False:
                return False
            if z is None:
                out = None
        return out

    def rows_ok(self) -> bool:
        return all(r.zero for r in self.rows)

    def multiplier_verdict(self) -> str:
        a = self.adjoint_ok()
        if a is False or (a is True and not self.rows_ok()):
            return "fail"
        if a is None:
            return "undetermined"
        return "pass" if self.rows_ok() else "fail"


def helmholtz_type_split(system: PdeSystem, q_vec: Sequence[JetExpr]) -> HelmholtzTypeReport:
    """Split the multiplier determining equation into the adjoint-symmetry
    part on the solution space and per-order Helmholtz-type conditions on the
    lift coefficients."""
    funcs = system.funcs
    comps = adjoint_vector(system.expressions(), q_vec, system.n_deps, funcs)
    adjoint_residuals = []
    rows: List[SplitRow] = []
    remainders = []
    notes: List[str] = []
    for beta, comp in enumerate(comps):
        restricted, lift_rows, remainder = system.lift_off_solution_space(comp)
        adjoint_residuals.append(restricted)
        if remainder.terms:
            remainders.append(remainder)
        keys = set(lift_rows)
        for a in range(system.n_eqs):
            he_keys = set()
            for v in jet_vars(q_vec[a]):
                if v.dep == beta:
                    he_keys.update(_lower_multis(v.multi))
            for key in he_keys | {k[1] for k in keys if k[0] == a}:
                r_co = lift_rows.get((a, key), ZERO)
                he = higher_euler(q_vec[a], beta, key, funcs) if any(key) else euler(q_vec[a], system.n_deps, funcs)[beta]
                sign = -1 if sum(key) % 2 else 1
                resid = add(r_co, he if sign > 0 else -he)
                rows.append(SplitRow(beta, a, key, system.restrict(resid)))
    if remainders:
        notes.append(
            "lift produced terms nonlinear in the equations; the split is incomplete for this Q"
        )
    if system.identities:
        notes.append(
            "system declares differential identities: lift coefficients are canonical "
            "only modulo the identity adjoint; rows report the raw lift"
        )
    return HelmholtzTypeReport(adjoint_residuals, rows, remainders, notes)


def _lower_multis(multi: Tuple[int, ...]):
    from .systems import _sub_multis

    return list(_sub_multis(multi))


# ---------------------------------------------------------------------------
# Gauge multipliers and triviality


def gauge_multiplier(system: PdeSystem, chi: JetExpr, identity_index: int = 0) -> List[JetExpr]:
    """Adjoint of a declared differential identity applied to chi."""
    if not system.identities:
        raise ValueError(f"system {system.name} declares no differential identity")
    ident = system.identities[identity_index]
    return ident.adjoint(chi, system.funcs)


def default_chi_basis(system: PdeSystem, degree: int = 2) -> List[JetExpr]:
    return monomial_basis(system, degree=degree)


def triviality_check(
    system: PdeSystem,
    q_vec: Sequence[JetExpr],
    chi_basis: Optional[Sequence[JetExpr]] = None,
) -> Verdict:
    """A multiplier is trivial iff it vanishes on the solution space; with
    differential identities, iff it equals a gauge multiplier there."""
    restricted = [system.restrict(q) for q in q_vec]
    if not system.identities:
        return _verdict_from_residuals(restricted)
    basis = list(chi_basis) if chi_basis is not None else default_chi_basis(system)
    unknowns = [f"_c{i + 1}" for i in range(len(basis))]
    chi = add_all(mul(param(n), b) for n, b in zip(unknowns, basis))
    gauge = gauge_multiplier(system, chi)
    resid = [
        system.restrict(add(q, -g)) for q, g in zip(restricted, gauge)
    ]
    rows, rhs, ncols, notes = _linear_rows(resid, unknowns, inhomogeneous=True)
    sol = solve_affine(rows, rhs, ncols)
    if sol is None:
        return Verdict("fail", resid, ["no gauge witness chi in the given ansatz"])
    from .parser import to_string

    witness = add_all(mul(const(c), b) for c, b in zip(sol[0], basis) if c)
    return Verdict(
        "pass",
        resid,
        [f"gauge witness chi = {to_string(witness, system.ctx)}"] + notes,
    )


# ---------------------------------------------------------------------------
# Linear ansatz solving


@dataclass
class LinearAnsatz:
    """Candidate = sum of unknown rational coefficients times basis entries.

    Each entry attaches one unknown to (slot, expression); slots index the
    target vector (dependent variables for symmetries, equations for
    multipliers).
    """

    entries: List[Tuple[int, JetExpr]]
    n_slots: int

    @staticmethod
    def scalar(basis: Sequence[JetExpr]) -> "LinearAnsatz":
        return LinearAnsatz([(0, b) for b in basis], 1)

    @staticmethod
    def uniform(basis: Sequence[JetExpr], n_slots: int) -> "LinearAnsatz":
        return LinearAnsatz(
            [(s, b) for s in range(n_slots) for b in basis], n_slots
        )

    def candidate(self, unknowns: Sequence[str]) -> List[JetExpr]:
        vec = [ZERO] * self.n_slots
        for name, (slot, b) in zip(unknowns, self.entries):
            vec[slot] = add(vec[slot], mul(param(name), b))
        return vec

    def materialize(self, coeffs: Sequence[Fraction]) -> List[JetExpr]:
        vec = [ZERO] * self.n_slots
        for c, (slot, b) in zip(coeffs, self.entries):
            if c:
                vec[slot] = add(vec[slot], mul(const(c), b))
        return vec


@dataclass
class SolutionSet:
    ansatz: LinearAnsatz
    vectors: List[List[Fraction]]
    rank: int
    solutions: List[List[JetExpr]]
    notes: List[str] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return len(self.vectors)


class ResidualBuilder:
    def __init__(self, name: str, fn: Callable, level: str, slot_kind: str):
        self.name = name
        self.fn = fn
        self.level = level  # "identity" | "onshell"
        self.slot_kind = slot_kind  # "dependent" | "equation"

    def __call__(self, system, vec):
        return self.fn(system, vec)


BUILDERS: Dict[str, ResidualBuilder] = {
    "multipliers": ResidualBuilder("multipliers", multiplier_residual, "identity", "equation"),
    "symmetries": ResidualBuilder("symmetries", symmetry_residual, "onshell", "dependent"),
    "adjoint_symmetries": ResidualBuilder(
        "adjoint_symmetries", adjoint_symmetry_residual, "onshell", "equation"
    ),
    "variational": ResidualBuilder(
        "variational", variational_symmetry_residual, "identity", "dependent"
    ),
}


class NonlinearResidual(ValueError):
    pass


def _linear_rows(
    residuals: Sequence[JetExpr], unknowns: Sequence[str], inhomogeneous: bool = False
):
    """Split residual components over complete monomials; each distinct
    monomial contributes one exact linear row over the unknowns."""
    index = {n: i for i, n in enumerate(unknowns)}
    rows_map: Dict[tuple, List[Fraction]] = {}
    rhs_map: Dict[tuple, Fraction] = {}
    notes: List[str] = []
    for comp_i, comp in enumerate(residuals):
        for t in comp.terms:
            key = (comp_i, t.factors)
            if any(set(k for k, _ in kk[:-1]) & set(index) for kk, _ in t.coeff.den):
                raise NonlinearResidual("unknown coefficient in a denominator")
            for mono, c in t.coeff.num:
                cs = [(n, k) for n, k in mono if n in index]
                rest = [(n, k) for n, k in mono if n not in index]
                if rest:
                    raise ValueError(
                        f"free parameter {rest[0][0]!r} in a residual coefficient; "
                        "solving requires numeric parameter values"
                    )
                if sum(k for _, k in cs) > 1:
                    raise NonlinearResidual(
                        "residual is nonlinear in the ansatz unknowns"
                    )
                row = rows_map.setdefault(key, [Fraction(0)] * len(unknowns))
                if cs:
                    row[index[cs[0][0]]] += c
                else:
                    if not inhomogeneous:
                        raise NonlinearResidual(
                            "residual has an unknown-free term; the condition is not homogeneous"
                        )
                    rhs_map[key] = rhs_map.get(key, Fraction(0)) - c
    keys = sorted(rows_map, key=lambda k: (k[0], tuple(_row_key(k[1]))))
    rows = [rows_map[k] for k in keys]
    rhs = [rhs_map.get(k, Fraction(0)) for k in keys]
    return rows, rhs, len(unknowns), notes


def _row_key(factors) -> tuple:
    return tuple((b.sort_key(), e.sort_key()) for b, e in factors)


def solve_linear_ansatz(
    system: PdeSystem,
    builder: ResidualBuilder | str,
    ansatz: LinearAnsatz,
) -> SolutionSet:
    """Assemble and solve the exact linear system for the ansatz unknowns.

    Identity-level residuals split over free jet space directly; on-shell
    residuals are restricted before splitting, so the split monomials are
    solution-space coordinates.
    """
    if isinstance(builder, str):
        builder = BUILDERS[builder]
    free = _free_params(system)
    if free:
        raise ValueError(
            f"system has free parameters {sorted(free)}; bind them numerically "
            "(e.g. --param p=2) before solving"
        )
    for slot, b in ansatz.entries:
        for v in jet_vars(b):
            if system.lead_of_descendant(v) is not None:
                raise ValueError(
                    f"ansatz entry {b!r} contains a leading-derivative descendant"
                )
    unknowns = [f"_c{i + 1}" for i in range(len(ansatz.entries))]
    vec = ansatz.candidate(unknowns)
    residuals = builder(system, vec)
    if builder.level == "onshell":
        residuals = [system.restrict(r) for r in residuals]
    rows, _rhs, ncols, notes = _linear_rows(residuals, unknowns)
    basis = nullspace(rows, ncols)
    rank = ncols - len(basis)
    solutions = [ansatz.materialize(v) for v in basis]
    return SolutionSet(ansatz, basis, rank, solutions, notes)


def _free_params(system: PdeSystem) -> set:
    free = set()
    for eq in system.equations:
        free |= collect_param_names(eq.rhs)
    return free


# ---------------------------------------------------------------------------
# Ansatz generation


def monomial_basis(
    system: PdeSystem,
    degree: int = 4,
    include_tx: bool = True,
    variables: Optional[Sequence[JetVar]] = None,
) -> List[JetExpr]:
    """Monomials over the low-order jet variables (plus t, x) up to a total
    degree; the default basis for low-order multiplier/symmetry solving."""
    from .expr import Indep

    gens: List[JetExpr] = []
    if include_tx:
        gens.extend(var(Indep(i)) for i in range(system.ctx.n_indep))
    vs = list(variables) if variables is not None else system.low_order_variables()
    gens.extend(var(v) for v in vs)
    out = [const(1)]
    seen = {out[0]}
    for d in range(1, degree + 1):
        for combo in combinations_with_replacement(range(len(gens)), d):
            m = const(1)
            for i in combo:
                m = mul(m, gens[i])
            if m not in seen:
                seen.add(m)
                out.append(m)
    return out
