"""Variational-calculus operators on jet expressions.

Frechet derivative and adjoint, the integration-by-parts boundary current,
Euler and higher Euler operators, homotopy inversion of total divergences,
Helmholtz conditions with Lagrangian recovery, and the scaling identity.

Vector quantities are plain lists of JetExpr indexed by dependent variable
(directions v, characteristics P) or by equation (multipliers Q).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .coeffs import Affine, ParamRat
from .expr import (
    JetExpr,
    JetVar,
    ZERO,
    ONE,
    add,
    add_all,
    at_constant_point,
    coeff_expr,
    const,
    homotopy_substitute,
    integrate_lambda,
    is_zero,
    jet_vars,
    mul,
    partial_jet,
    substitute,
    total_derivative,
    var,
)


@dataclass(frozen=True)
class Current:
    """A density/flux pair (T, X); X has one component per spatial variable."""

    t: JetExpr
    x: Tuple[JetExpr, ...]

    def __iter__(self):
        yield self.t
        yield from self.x

    @property
    def n_space(self) -> int:
        return len(self.x)

    def map(self, fn) -> "Current":
        return Current(fn(self.t), tuple(fn(c) for c in self.x))

    def __add__(self, other: "Current") -> "Current":
        return Current(add(self.t, other.t), tuple(add(a, b) for a, b in zip(self.x, other.x)))

    def __sub__(self, other: "Current") -> "Current":
        return self + other.map(lambda c: -c)

    def scale(self, c) -> "Current":
        factor = coeff_expr(c) if isinstance(c, ParamRat) else const(c)
        return self.map(lambda e: mul(factor, e))


def zero_current(n_space: int) -> Current:
    return Current(ZERO, tuple([ZERO] * n_space))


def divergence(cur: Current, funcs=None) -> JetExpr:
    parts = [total_derivative(cur.t, 0, funcs)]
    for i, comp in enumerate(cur.x, start=1):
        parts.append(total_derivative(comp, i, funcs))
    return add_all(parts)


def _jets_by_dep(f: JetExpr) -> Dict[int, List[JetVar]]:
    out: Dict[int, List[JetVar]] = {}
    for v in jet_vars(f):
        out.setdefault(v.dep, []).append(v)
    for lst in out.values():
        lst.sort(key=lambda v: v.sort_key())
    return out


def apply_D(e: JetExpr, multi: Sequence[int], funcs=None) -> JetExpr:
    for iv, k in enumerate(multi):
        for _ in range(k):
            e = total_derivative(e, iv, funcs)
    return e


def frechet(f: JetExpr, v: Sequence[JetExpr], funcs=None) -> JetExpr:
    """Linearization of f in the direction v (one component per dependent)."""
    parts = []
    for alpha, jets in _jets_by_dep(f).items():
        if alpha >= len(v):
            raise ValueError(f"direction vector too short for dependent index {alpha}")
        direction = v[alpha]
        for jv in jets:
            co = partial_jet(f, jv, funcs)
            if not co.terms:
                continue
            parts.append(mul(co, apply_D(direction, jv.multi, funcs)))
    return add_all(parts)


def frechet_adjoint(f: JetExpr, w: JetExpr, n_dep: int, funcs=None) -> List[JetExpr]:
    """Adjoint linearization: component alpha is sum of
    (-D)^J (w * df/du^alpha_J)."""
    out = [ZERO] * n_dep
    for alpha, jets in _jets_by_dep(f).items():
        if alpha >= n_dep:
            raise ValueError(f"dependent index {alpha} out of range")
        parts = []
        for jv in jets:
            co = partial_jet(f, jv, funcs)
            if not co.terms:
                continue
            sign = -1 if jv.order % 2 else 1
            d = apply_D(mul(w, co), jv.multi, funcs)
            parts.append(d if sign > 0 else -d)
        out[alpha] = add_all(parts)
    return out


def adjoint_vector(
    g_vec: Sequence[JetExpr], w_vec: Sequence[JetExpr], n_dep: int, funcs=None
) -> List[JetExpr]:
    """Sum over equations of the adjoint linearization applied to weights:
    component alpha of delta*_w G."""
    out = [ZERO] * n_dep
    for g, w in zip(g_vec, w_vec):
        for alpha, comp in enumerate(frechet_adjoint(g, w, n_dep, funcs)):
            out[alpha] = add(out[alpha], comp)
    return out


def _ibp_current(a: JetExpr, v_dir: JetExpr, multi: Tuple[int, ...], funcs=None) -> List[JetExpr]:
    """Integration-by-parts current: components C with
    a * D^multi(v) - (-D)^multi(a) * v = D . C.  Peeling order: t first."""
    n = len(multi)
    cur = [ZERO] * n
    j = list(multi)
    while any(j):
        iv = next(i for i, k in enumerate(j) if k)
        j[iv] -= 1
        cur[iv] = add(cur[iv], mul(a, apply_D(v_dir, j, funcs)))
        a = -total_derivative(a, iv, funcs)
    return cur


def adjoint_current(
    f: JetExpr, v: Sequence[JetExpr], w: JetExpr, funcs=None
) -> Current:
    """The boundary current Psi(v, w; f) with
    w*frechet(f,v) - v.frechet_adjoint(f,w) = D . Psi exactly."""
    n = _n_indep(f, v, [w])
    comps = [ZERO] * n
    for alpha, jets in _jets_by_dep(f).items():
        direction = v[alpha]
        for jv in jets:
            co = partial_jet(f, jv, funcs)
            if not co.terms:
                continue
            a = mul(w, co)
            for i, c in enumerate(_ibp_current(a, direction, jv.multi, funcs)):
                comps[i] = add(comps[i], c)
    return Current(comps[0], tuple(comps[1:]))


def _n_indep(f: JetExpr, *vecs) -> int:
    for e in [f] + [c for vec in vecs for c in vec]:
        for jv in jet_vars(e):
            return len(jv.multi)
    raise ValueError("cannot infer the number of independent variables")


def euler(f: JetExpr, n_dep: int, funcs=None) -> List[JetExpr]:
    """Euler operator (variational derivative), one component per dependent."""
    return frechet_adjoint(f, ONE, n_dep, funcs)


def euler_single(f: JetExpr, base_var: JetVar, funcs=None) -> JetExpr:
    """Euler operator with respect to one jet variable:
    sum over J >= sigma of (-D)^(J-sigma) df/du_J."""
    parts = []
    for jv in jet_vars(f):
        if jv.dep != base_var.dep:
            continue
        if not all(a >= b for a, b in zip(jv.multi, base_var.multi)):
            continue
        delta = tuple(a - b for a, b in zip(jv.multi, base_var.multi))
        co = partial_jet(f, jv, funcs)
        if not co.terms:
            continue
        sign = -1 if sum(delta) % 2 else 1
        d = apply_D(co, delta, funcs)
        parts.append(d if sign > 0 else -d)
    return add_all(parts)


def higher_euler(f: JetExpr, alpha: int, K: Tuple[int, ...], funcs=None) -> JetExpr:
    """Higher Euler operator in multi-index coordinates:
    E^[K](f) = sum over J >= K of C(J, K) (-D)^(J-K) df/du_J.

    These are the multiplicity-weighted symmetric-tensor components; they
    pair with coordinate partial derivatives in the Helmholtz conditions.
    """
    parts = []
    for jv in jet_vars(f):
        if jv.dep != alpha:
            continue
        if not all(a >= b for a, b in zip(jv.multi, K)):
            continue
        delta = tuple(a - b for a, b in zip(jv.multi, K))
        factor = 1
        for a, b in zip(jv.multi, K):
            factor *= comb(a, b)
        co = partial_jet(f, jv, funcs)
        if not co.terms:
            continue
        sign = -1 if sum(delta) % 2 else 1
        d = apply_D(mul(const(factor), co), delta, funcs)
        parts.append(d if sign > 0 else -d)
    return add_all(parts)


def higher_euler_order(f: JetExpr, alpha: int, level: int, n_indep: int, funcs=None) -> Dict[Tuple[int, ...], JetExpr]:
    """All E^[K] components with |K| = level."""
    out = {}
    for K in _multis_of_order(level, n_indep):
        out[K] = higher_euler(f, alpha, K, funcs)
    return out


def _multis_of_order(total: int, n: int):
    if n == 1:
        yield (total,)
        return
    for k in range(total + 1):
        for rest in _multis_of_order(total - k, n - 1):
            yield (k,) + rest


def euler_current(f: JetExpr, v: Sequence[JetExpr], funcs=None) -> Current:
    """Upsilon_f(v) = Psi(v, 1; f): frechet(f,v) = v.euler(f) + D.Upsilon."""
    return adjoint_current(f, v, ONE, funcs)


# ---------------------------------------------------------------------------
# Homotopy inversion


class EulerImageError(ValueError):
    pass


def _ghost_directions(n_dep: int, n_indep: int) -> List[JetExpr]:
    return [var(JetVar(n_dep + a, [0] * n_indep)) for a in range(n_dep)]


def _substitute_ghosts(e: JetExpr, n_dep: int, shift: Mapping[int, Fraction], funcs=None) -> JetExpr:
    mapping = {}
    for jv in jet_vars(e):
        if jv.dep >= n_dep:
            alpha = jv.dep - n_dep
            target = var(JetVar(alpha, jv.multi))
            if jv.order == 0 and shift.get(alpha):
                target = add(target, const(-shift[alpha]))
            mapping[jv] = target
    return substitute(e, mapping, funcs)


def _homotopy_scale_primary(e: JetExpr, n_dep: int, shift: Mapping[int, Fraction], funcs=None) -> JetExpr:
    """Scale only the primary dependents (dep < n_dep) along the homotopy
    line, leaving ghost directions fixed."""
    from .expr import param, _LAM

    lam = param(_LAM)
    mapping = {}
    for jv in jet_vars(e):
        if jv.dep < n_dep:
            if jv.order == 0 and shift.get(jv.dep):
                c = shift[jv.dep]
                mapping[jv] = add(mul(lam, var(jv)), mul(const(c), add(ONE, -lam)))
            else:
                mapping[jv] = mul(lam, var(jv))
    return substitute(e, mapping, funcs)


def divergence_antiderivative(
    f: JetExpr,
    n_dep: int,
    n_indep: int,
    base_point: Mapping[int, Fraction] | None = None,
    funcs=None,
    check_euler: bool = True,
) -> Current:
    """Invert a total divergence: find F with D . F = f.

    Requires the Euler image of f to vanish identically.  Uses the linear
    homotopy u_(lam) = lam*u + (1-lam)*u0 with a constant base point u0
    (default 0); raises SingularHomotopy when a lambda exponent hits -1.
    """
    shift = dict(base_point or {})
    if check_euler:
        for alpha, comp in enumerate(euler(f, n_dep, funcs)):
            zr = is_zero(comp)
            if zr is not True:
                raise EulerImageError(
                    f"Euler image component {alpha} is not identically zero; "
                    "the expression is not a total divergence"
                )
    ghosts = _ghost_directions(n_dep, n_indep)
    ups = euler_current(f, ghosts, funcs)

    def integrate(comp: JetExpr) -> JetExpr:
        scaled = _homotopy_scale_primary(comp, n_dep, shift, funcs)
        return _substitute_ghosts(integrate_lambda(scaled), n_dep, shift, funcs)

    out = ups.map(integrate)
    f0 = at_constant_point(f, shift, funcs)
    if f0.terms:
        out = Current(out.t, (add(out.x[0], _x1_antiderivative(f0)),) + out.x[1:])
    return out


def _x1_antiderivative(f0: JetExpr) -> JetExpr:
    """Antiderivative in x^1 of a (t, x)-explicit expression."""
    from .expr import Indep, _build
    from .coeffs import PR_ONE

    x1 = Indep(1)
    raw = []
    for t in f0.terms:
        fmap = dict(t.factors)
        exp = fmap.get(x1, Affine(0))
        if not exp.is_const():
            raise ValueError("symbolic x-exponent in the constant-section term")
        if exp.const == -1:
            raise ValueError("constant-section term scales as 1/x; shift the base point")
        fmap[x1] = exp + 1
        raw.append((t.coeff / ParamRat.from_rat(exp.const + 1), fmap))
    return _build(raw)


# ---------------------------------------------------------------------------
# Helmholtz machinery


@dataclass
class HelmholtzRow:
    k: int
    eq_index: int
    dep_index: int
    multi: Tuple[int, ...]
    residual: JetExpr

    @property
    def zero(self) -> bool:
        return not self.residual.terms


@dataclass
class HelmholtzReport:
    variational: bool
    reasons: List[str]
    rows: List[HelmholtzRow]

    def failing(self) -> List[HelmholtzRow]:
        return [r for r in self.rows if not r.zero]


def helmholtz_check(system) -> HelmholtzReport:
    """Self-adjointness conditions on the system's expressions, per order k.

    The k-th condition compares the coordinate derivative dG^a/du^b_J with
    (-1)^k E^[J]_{u^a}(G^b) for |J| = k.
    """
    reasons: List[str] = []
    m = system.n_deps
    M = system.n_eqs
    if M != m:
        return HelmholtzReport(
            False, [f"{M} equations for {m} dependent variables: not variational"], []
        )
    g_vec = system.expressions()
    n = system.ctx.n_indep
    N = system.order
    if N % 2 == 1:
        reasons.append(f"system order {N} is odd: cannot be variational")
    rows: List[HelmholtzRow] = []
    funcs = system.funcs
    for k in range(N + 1):
        for K in _multis_of_order(k, n):
            for a in range(M):
                for b in range(m):
                    lhs = partial_jet(g_vec[a], JetVar(b, K), funcs)
                    rhs = higher_euler(g_vec[b], a, K, funcs) if k else euler(g_vec[b], m, funcs)[a]
                    sign = -1 if k % 2 else 1
                    resid = add(lhs, -rhs if sign > 0 else rhs)
                    if resid.terms or (a == b):
                        rows.append(HelmholtzRow(k, a, b, K, resid))
    ok = not reasons and all(r.zero for r in rows)
    return HelmholtzReport(ok, reasons, rows)


class NotVariational(ValueError):
    pass


def lagrangian_from_system(system) -> JetExpr:
    """Recover a Lagrangian by the homotopy integral along u_(lam) = lam*u;
    euler(L) reproduces the system's expressions."""
    report = helmholtz_check(system)
    if not report.variational:
        raise NotVariational(
            "; ".join(report.reasons) or "Helmholtz conditions fail"
        )
    m = system.n_deps
    n = system.ctx.n_indep
    ghosts = _ghost_directions(m, n)
    integrand = add_all(
        mul(ghosts[alpha], g) for alpha, g in enumerate(system.expressions())
    )
    scaled = _homotopy_scale_primary(integrand, m, {}, system.funcs)
    return _substitute_ghosts(integrate_lambda(scaled), m, {}, system.funcs)


# ---------------------------------------------------------------------------
# Scaling identity


class NotScalingHomogeneous(ValueError):
    pass


@dataclass
class ScalingResult:
    weight: ParamRat  # s: scaling weight of f itself
    omega: ParamRat  # s + a + sum(b): weight of the space-time integral
    current: Current


def scaling_identity(f: JetExpr, action, system) -> ScalingResult:
    """The identity omega*f = P_scal . E(f) + D . F for a scaling-homogeneous
    differential function on the given system's jet space."""
    if not f.terms:
        raise NotScalingHomogeneous("zero function has no well-defined weight")
    funcs = system.funcs
    p_vec = action.characteristic(system)
    tau, xi = action.tau_xi(system)
    g = frechet(f, p_vec, funcs)
    g = add(g, mul(tau, total_derivative(f, 0, funcs)))
    for i, x_i in enumerate(xi, start=1):
        g = add(g, mul(x_i, total_derivative(f, i, funcs)))
    s = _match_scale(f, g)
    resid = add(g, -mul(coeff_expr(s), f))
    if is_zero(resid) is not True:
        raise NotScalingHomogeneous(
            "function is not homogeneous under the declared scaling action"
        )
    omega = s + action.divergence_factor()
    ups = euler_current(f, p_vec, funcs)
    ft = add(mul(f, tau), ups.t)
    fx = tuple(add(mul(f, x_i), c) for x_i, c in zip(xi, ups.x))
    return ScalingResult(s, omega, Current(ft, fx))


def _match_scale(f: JetExpr, g: JetExpr) -> ParamRat:
    lookup = {t.factors: t.coeff for t in g.terms}
    t0 = f.terms[0]
    c = lookup.get(t0.factors)
    if c is None:
        return ParamRat.from_rat(0)
    return c / t0.coeff
