"""Random-point numeric oracles, exact over the rationals.

The independent check for everything else in the package: evaluate
expressions at random jet points whose leading-derivative coordinates are
generated consistently from the system's solved form, so restricted and
unrestricted forms of the same quantity must agree exactly.
"""

from __future__ import annotations

import random
from fractions import Fraction
from math import lcm
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from .expr import (
    Base,
    FuncNode,
    Indep,
    JetExpr,
    JetVar,
    SumBase,
    eval_numeric,
    jet_vars,
)
from .systems import PdeSystem


def _exponent_lcms(exprs: Iterable[JetExpr]) -> Dict[int, int]:
    """Per-dependent lcm of exponent denominators, so sampled values can be
    exact perfect powers."""
    out: Dict[int, int] = {}

    def scan(e: JetExpr):
        for t in e.terms:
            for base, exp in t.factors:
                if isinstance(base, JetVar):
                    den = exp.const.denominator
                    for _, c in exp.terms:
                        den = lcm(den, c.denominator)
                    out[base.dep] = lcm(out.get(base.dep, 1), den)
                elif isinstance(base, FuncNode):
                    for a in base.args:
                        scan(a)
                elif isinstance(base, SumBase):
                    scan(base.expr)

    for e in exprs:
        scan(e)
    return out


class ConsistentPoint(dict):
    """Lazy jet point: non-leading coordinates are random; leading-derivative
    descendants are computed from the solved form, recursively."""

    def __init__(
        self,
        system: PdeSystem,
        rng: random.Random,
        lcms: Mapping[int, int],
        params: Mapping[str, Fraction],
    ):
        super().__init__()
        self.system = system
        self.rng = rng
        self.lcms = dict(lcms)
        self.params = dict(params)

    def _fresh(self, dep: Optional[int]) -> Fraction:
        v = Fraction(self.rng.randint(1, 9), self.rng.randint(1, 4))
        k = self.lcms.get(dep, 1) if dep is not None else 1
        if k > 1:
            return v**k
        if self.rng.random() < 0.5:
            return -v
        return v

    def __missing__(self, base: Base) -> Fraction:
        if isinstance(base, Indep):
            val = self._fresh(None)
        elif isinstance(base, JetVar):
            a = self.system.lead_of_descendant(base)
            if a is None:
                val = self._fresh(base.dep)
            else:
                delta = tuple(
                    vi - li
                    for vi, li in zip(base.multi, self.system.equations[a].lead.multi)
                )
                expr = self.system._descendant_value(a, delta)
                val = eval_numeric(expr, self, self.params, self.system.funcs)
        else:
            raise KeyError(base)
        self[base] = val
        return val


def sample_point(
    system: PdeSystem,
    exprs: Sequence[JetExpr],
    rng: random.Random,
    params: Mapping[str, Fraction] | None = None,
) -> ConsistentPoint:
    lcms = _exponent_lcms(list(exprs) + [eq.rhs for eq in system.equations])
    return ConsistentPoint(system, rng, lcms, params or {})


def spot_check_zero(
    system: PdeSystem,
    expr: JetExpr,
    trials: int = 20,
    seed: int = 7,
    params: Mapping[str, Fraction] | None = None,
) -> List[Fraction]:
    """Evaluate an on-solution-space residual at consistent random points;
    every value must be exactly zero for a conserved quantity."""
    rng = random.Random(seed)
    out = []
    for _ in range(trials):
        pt = sample_point(system, [expr], rng, params)
        out.append(eval_numeric(expr, pt, params or {}, system.funcs))
    return out
