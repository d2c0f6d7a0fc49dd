"""System-definition files (TOML) and the corpus data they carry.

Schema:

    [system]
    name = "gkdv"
    independent = ["t", "x"]
    dependent = ["u"]
    alt_leads = ["u_xxx"]          # optional alternative leading derivatives

    [params]
    p = "free"                     # or an exact number / "3/2" string

    [[function]]                   # optional opaque functions
    name = "g"
    args = ["u"]
    derivs = { "1" = "f(u)" }      # dcounts pattern -> expression over args
    profile = "u^2+1"              # optional exact numeric profile

    [[equation]]
    lead = "u_t"
    rhs = "-u^p*u_x-u_xxx"

    [[identity]]                   # optional differential identities
    rows = [[["1", "x"]], [["1", "y"]], [["-1", ""]], [["-1", "t"]]]

    [scaling]                      # default scaling action: weights per name
    t = 3
    x = 1
    u = "-2/p"

    [scalings.mass]                # named actions (dimensional analysis)
    u = 1
    mu = "-p"

    [[current]]                    # corpus: known conserved currents
    name = "mass"
    T = "u"
    X = ["u^(p+1)/(p+1)+u_xx"]
    multiplier = ["1"]             # optional characteristic-form multiplier

    [[known_multiplier]]
    name = "Q3"
    Q = ["u_xx+u^(p+1)/(p+1)"]

Numeric parameter values are substituted at load; `params` overrides replace
file values (e.g. to instantiate p).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .coeffs import ParamRat
from .expr import JetExpr, substitute_params
from .functions import FunctionTable, placeholder_context
from .parser import Context, parse
from .systems import Equation, InvalidSystem, LinearDiffOperator, PdeSystem, ScalingAction


@dataclass
class KnownCurrent:
    name: str
    t_text: str
    x_texts: Tuple[str, ...]
    multiplier_texts: Optional[Tuple[str, ...]] = None


@dataclass
class KnownMultiplier:
    name: str
    q_texts: Tuple[str, ...]


@dataclass
class CorpusData:
    currents: List[KnownCurrent] = field(default_factory=list)
    multipliers: List[KnownMultiplier] = field(default_factory=list)


def _as_fraction(v) -> Fraction:
    if isinstance(v, bool):
        raise InvalidSystem(f"expected a number, got {v!r}")
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, str):
        return Fraction(v)
    raise InvalidSystem(f"expected an exact number, got {v!r} (floats are not exact)")


def _weight(v, ctx: Context) -> ParamRat:
    """Parse a scaling weight: number or expression in the parameters."""
    if isinstance(v, int):
        return ParamRat.from_rat(v)
    e = parse(str(v), ctx)
    out = ParamRat.from_rat(0)
    for t in e.terms:
        if t.factors:
            raise InvalidSystem(f"scaling weight {v!r} is not a parameter constant")
        out = out + t.coeff
    return out


def load_system(path, params: Mapping[str, Fraction] | None = None) -> Tuple[PdeSystem, CorpusData]:
    data = tomllib.loads(Path(path).read_text())
    return build_system(data, params, source=str(path))


def load_system_text(text: str, params: Mapping[str, Fraction] | None = None) -> Tuple[PdeSystem, CorpusData]:
    data = tomllib.loads(text)
    return build_system(data, params)


def build_system(
    data: dict, params: Mapping[str, Fraction] | None = None, source: str = "<inline>"
) -> Tuple[PdeSystem, CorpusData]:
    try:
        sysblock = data["system"]
        name = sysblock["name"]
        independent = list(sysblock["independent"])
        dependent = list(sysblock["dependent"])
    except KeyError as exc:
        raise InvalidSystem(f"{source}: missing [system] key {exc}")

    raw_params = dict(data.get("params", {}))
    overrides = {k: Fraction(v) for k, v in (params or {}).items()}
    for k in overrides:
        if k not in raw_params:
            raise InvalidSystem(f"{source}: override for undeclared parameter {k!r}")
    values: Dict[str, Fraction] = {}
    names: List[str] = []
    for pname, pval in raw_params.items():
        names.append(pname)
        if pname in overrides:
            values[pname] = overrides[pname]
        elif pval != "free":
            values[pname] = _as_fraction(pval)

    table = FunctionTable()
    for fblock in data.get("function", []):
        fname = fblock["name"]
        args = list(fblock["args"])
        table.declare(fname, len(args))
    # second pass so rules may reference any declared function
    for fblock in data.get("function", []):
        fname = fblock["name"]
        args = list(fblock["args"])
        pctx = placeholder_context(args, tuple(names), table)
        for key, text in dict(fblock.get("derivs", {})).items():
            dcounts = _parse_dcounts(key, len(args), source)
            table.add_rule(fname, dcounts, parse(text, pctx))
        if "profile" in fblock:
            table.set_profile(fname, parse(fblock["profile"], pctx))

    ctx = Context(independent, dependent, tuple(names), table)

    def bound(text: str) -> JetExpr:
        return substitute_params(parse(text, ctx), values, table)

    equations = []
    for eblock in data.get("equation", []):
        lead_expr = parse(eblock["lead"], ctx)
        lead = _single_jetvar(lead_expr, eblock["lead"], source)
        equations.append(Equation(lead, bound(eblock["rhs"])))
    if not equations:
        raise InvalidSystem(f"{source}: no [[equation]] blocks")

    identities = []
    for iblock in data.get("identity", []):
        rows = []
        for row in iblock["rows"]:
            parsed_row = []
            for coeff_text, derivs in row:
                multi = [0] * len(independent)
                for ch in derivs:
                    multi[independent.index(ch)] += 1
                parsed_row.append((bound(coeff_text), tuple(multi)))
            rows.append(parsed_row)
        identities.append(LinearDiffOperator(rows))

    scalings = {}
    if "scaling" in data:
        scalings["default"] = _scaling_action("default", data["scaling"], ctx, values)
    for sname, block in data.get("scalings", {}).items():
        scalings[sname] = _scaling_action(sname, block, ctx, values)

    alt_leads = []
    for text in sysblock.get("alt_leads", []):
        alt_leads.append(_single_jetvar(parse(text, ctx), text, source))

    system = PdeSystem(
        name,
        ctx,
        equations,
        identities,
        scalings,
        alt_leads,
        description=sysblock.get("description", ""),
    )
    system.param_values = dict(values)

    corpus = CorpusData()
    for cblock in data.get("current", []):
        corpus.currents.append(
            KnownCurrent(
                cblock.get("name", f"current{len(corpus.currents) + 1}"),
                cblock["T"],
                tuple(cblock["X"]),
                tuple(cblock["multiplier"]) if "multiplier" in cblock else None,
            )
        )
    for mblock in data.get("known_multiplier", []):
        corpus.multipliers.append(
            KnownMultiplier(
                mblock.get("name", f"Q{len(corpus.multipliers) + 1}"),
                tuple(mblock["Q"]),
            )
        )
    return system, corpus


def _scaling_action(name: str, block: dict, ctx: Context, values) -> ScalingAction:
    weights = {k: _weight(v, ctx) for k, v in block.items()}
    for k in weights:
        if k not in ctx.independent and k not in ctx.dependent and k not in ctx.params:
            raise InvalidSystem(f"scaling weight for undeclared name {k!r}")
    zero = ParamRat.from_rat(0)

    def subs(w: ParamRat) -> ParamRat:
        return w.subs(values)

    return ScalingAction(
        name,
        subs(weights.get(ctx.independent[0], zero)),
        tuple(subs(weights.get(n, zero)) for n in ctx.independent[1:]),
        tuple(subs(weights.get(n, zero)) for n in ctx.dependent),
        {k: subs(w) for k, w in weights.items() if k in ctx.params},
    )


def _parse_dcounts(key: str, nargs: int, source: str) -> Tuple[int, ...]:
    parts = [p.strip() for p in key.split(",")]
    if len(parts) == 1 and nargs == 1:
        return (int(parts[0]),)
    if len(parts) != nargs:
        raise InvalidSystem(f"{source}: derivative pattern {key!r} does not match {nargs} args")
    return tuple(int(p) for p in parts)


def _single_jetvar(e: JetExpr, text: str, source: str):
    from .coeffs import Affine
    from .expr import JetVar

    if len(e.terms) == 1 and len(e.terms[0].factors) == 1:
        ((base, exp),) = e.terms[0].factors
        if isinstance(base, JetVar) and exp == Affine(1) and e.terms[0].coeff.is_one():
            return base
    raise InvalidSystem(f"{source}: {text!r} is not a single jet variable")
