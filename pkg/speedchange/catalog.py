"""
Builtin models and model files
Model files are JSON documents whose rates are truth tables or polynomial
expressions in occupancies, e.g. "3 - eta(-1) - eta(2)" or "1 - eta(1,0)".
"""

import json
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Union

import sympy as sp
from pydantic import BaseModel, Field, ValidationError, model_validator
from sympy.core.function import AppliedUndef

from . import polynomial as poly
from .errors import InputError
from .model import Model, RateTable, model_from_polynomials, to_fraction
from .polynomial import Poly
from .sites import Site, neg, normalize, scale, unit

logger = logging.getLogger(__name__)

ETA = sp.Function("eta")


class TableSpec(BaseModel):
    """Explicit truth table entry"""
    window: List[List[int]] = Field(..., description="Window sites; bit i of a pattern index is window[i]")
    values: List[Union[int, float, str]] = Field(..., description="Rate per pattern index")


class RateEntry(BaseModel):
    """Rate of one displacement, given as a table or an expression"""
    y: List[int] = Field(..., description="Displacement")
    table: Optional[TableSpec] = Field(None, description="Truth table form")
    expression: Optional[str] = Field(None, description="Polynomial in eta(site) terms")

    @model_validator(mode="after")
    def _one_form(self) -> "RateEntry":
        if (self.table is None) == (self.expression is None):
            raise ValueError("give exactly one of 'table' or 'expression'")
        return self


class ModelFile(BaseModel):
    """On-disk model definition"""
    name: str = Field(..., description="Model name")
    dimension: int = Field(..., ge=1, description="Spatial dimension d")
    radius: Optional[int] = Field(None, ge=1, description="Interaction radius K; derived when omitted")
    rates: List[RateEntry] = Field(..., min_length=1)


def parse_expression(text: str, d: int) -> Poly:
    """Compile an occupancy expression into a density-free polynomial"""
    try:
        expr = sp.sympify(text, locals={"eta": ETA}, rational=True)
    except (sp.SympifyError, SyntaxError, TypeError) as e:
        raise InputError(f"cannot parse rate expression {text!r}: {e}") from e

    symbols: Dict[Any, Site] = {}
    for atom in expr.atoms(AppliedUndef):
        if atom.func != ETA:
            raise InputError(f"unknown function {atom.func} in {text!r}")
        if len(atom.args) != d or not all(arg.is_Integer for arg in atom.args):
            raise InputError(f"{atom} is not an integer site in dimension {d}")
        symbols[atom] = tuple(int(arg) for arg in atom.args)
    if expr.free_symbols:
        raise InputError(f"free symbols {expr.free_symbols} in {text!r}")

    dummies = {atom: sp.Dummy(f"eta_{i}") for i, atom in enumerate(symbols)}
    body = sp.expand(expr.subs(dummies))
    gens = list(dummies.values())
    if not gens:
        return poly.constant(to_fraction(sp.Rational(body)))
    site_of = {dummies[atom]: site for atom, site in symbols.items()}
    out: Dict[Any, Any] = {}
    try:
        terms = sp.Poly(body, *gens).terms()
    except sp.PolynomialError as e:
        raise InputError(f"rate expression {text!r} is not a polynomial in occupancies") from e
    for exponents, coefficient in terms:
        # eta_x^k = eta_x for occupancies
        key = normalize(site_of[g] for g, k in zip(gens, exponents) if k > 0)
        out[key] = out.get(key, 0) + to_fraction(coefficient)
    return poly.clean(out)


def parse_model(data: Mapping[str, Any]) -> Model:
    try:
        document = ModelFile.model_validate(data)
    except ValidationError as e:
        raise InputError(f"invalid model definition: {e}") from e

    d = document.dimension
    rates: Dict[Site, Poly] = {}
    for entry in document.rates:
        y = tuple(entry.y)
        if len(y) != d:
            raise InputError(f"displacement {entry.y} is not {d}-dimensional")
        if y in rates:
            raise InputError(f"displacement {entry.y} given twice")
        if entry.table is not None:
            try:
                table = RateTable(window=tuple(tuple(s) for s in entry.table.window), values=entry.table.values)
            except (ValidationError, ValueError) as e:
                raise InputError(f"invalid table for {entry.y}: {e}") from e
            rates[y] = table.polynomial()
        else:
            rates[y] = parse_expression(entry.expression or "", d)

    model = model_from_polynomials(document.name, d, rates)
    if document.radius is not None:
        model = model.model_copy(update={"K": document.radius})
    return model


def load_model(path: Union[str, Path]) -> Model:
    """Read a JSON model file"""
    path = Path(path)
    logger.info(f"Loading model file {path}")
    try:
        data = json.loads(path.read_text())
    except OSError as e:
        raise InputError(f"cannot read model file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"model file {path} is not valid JSON: {e}") from e
    return parse_model(data)


def _eta(site: Site) -> Poly:
    return {(site,): 1}


def exclusion(jumps: Mapping[Any, Any], name: str = "exclusion") -> Model:
    """Finite range exclusion r(y, eta) = p(y)"""
    rates: Dict[Site, Poly] = {}
    for y, rate in jumps.items():
        if isinstance(y, str):
            key = tuple(int(v) for v in y.split(","))
        elif isinstance(y, int):
            key = (y,)
        else:
            key = tuple(int(v) for v in y)
        rates[key] = poly.constant(to_fraction(rate))
    if not rates:
        raise InputError("exclusion needs at least one jump")
    d = len(next(iter(rates)))
    return model_from_polynomials(name, d, rates)


def ssep(d: int = 1) -> Model:
    jumps = {}
    for axis in range(d):
        e = unit(d, axis)
        jumps[e] = 1
        jumps[neg(e)] = 1
    return exclusion(jumps, name="ssep" if d == 1 else f"ssep{d}d")


def asep(p: Any = 2, q: Any = 1) -> Model:
    return exclusion({1: p, -1: q}, name="asep")


def tasep() -> Model:
    return exclusion({1: 1}, name="tasep")


def simplerates() -> Model:
    """r(1) = 3 - eta_{-1} - eta_2 and r(-1) = 2"""
    rates = {
        (1,): poly.add({(): 3}, poly.scale(_eta((-1,)), -1), poly.scale(_eta((2,)), -1)),
        (-1,): poly.constant(2),
    }
    return model_from_polynomials("simplerates", 1, rates)


def perturbed() -> Model:
    """Like simplerates but with weight 2 on eta_2; violates the divergence condition"""
    rates = {
        (1,): poly.add({(): 3}, poly.scale(_eta((-1,)), -1), poly.scale(_eta((2,)), -2)),
        (-1,): poly.constant(2),
    }
    return model_from_polynomials("perturbed", 1, rates)


def oneblock(y: int = 2, c: Any = 1, holes: bool = False, base: Optional[Model] = None) -> Model:
    """
    Exclusion whose jump of size y gains rate c when the sites strictly
    between start and end are all occupied (or, with holes=True, all empty)
    """
    if y == 0:
        raise InputError("oneblock needs a nonzero jump")
    base = base or ssep(1)
    if base.d != 1:
        raise InputError("oneblock is one dimensional")
    step = 1 if y > 0 else -1
    bonus: Poly = {(): to_fraction(c)}
    for z in range(step, y, step):
        bonus = poly.multiply(bonus, poly.one_minus((z,)) if holes else _eta((z,)))
    rates = dict(base.polynomials)
    rates[(y,)] = poly.add(rates.get((y,), {}), bonus)
    return model_from_polynomials(f"oneblock({y})", 1, rates)


def product_d(*models: Model) -> Model:
    """Axis-wise product of one dimensional models: r(y e_i, eta) = r_i(y, P_i eta)"""
    if not models:
        raise InputError("product_d needs at least one model")
    d = len(models)
    rates: Dict[Site, Poly] = {}
    for axis, component in enumerate(models):
        if component.d != 1:
            raise InputError(f"component {component.name} is not one dimensional")
        e = unit(d, axis)
        for (y,), rate in component.polynomials.items():
            lifted = {normalize(scale(e, s[0]) for s in key): value for key, value in rate.items()}
            rates[scale(e, y)] = lifted
    name = "product(" + ",".join(m.name for m in models) + ")"
    return model_from_polynomials(name, d, rates)


def modified2d(p: Optional[Mapping[Any, Any]] = None, modified: Optional[Sequence[Sequence[int]]] = None, d: int = 2) -> Model:
    """Exclusion with jump law p where the listed jumps get rate p_y (3 - eta_{-y} - eta_{2y})"""
    base = exclusion(p, name="base") if p else ssep(d)
    targets = [tuple(y) for y in (modified or [unit(base.d, 0)])]
    rates = dict(base.polynomials)
    for y in targets:
        if y not in rates:
            raise InputError(f"modified jump {y} has zero base rate")
        factor = poly.add({(): 3}, poly.scale(_eta(neg(y)), -1), poly.scale(_eta(scale(y, 2)), -1))
        rates[y] = poly.multiply(rates[y], factor)
    return model_from_polynomials(f"modified{base.d}d", base.d, rates)


BUILTINS: Dict[str, Callable[..., Model]] = {
    "ssep": ssep,
    "asep": asep,
    "tasep": tasep,
    "exclusion": exclusion,
    "simplerates": simplerates,
    "perturbed": perturbed,
    "oneblock": oneblock,
    "product_d": product_d,
    "modified2d": modified2d,
}


def builtin_model(name: str, params: Optional[Mapping[str, Any]] = None) -> Model:
    """Construct a named example model"""
    params = dict(params or {})
    if name not in BUILTINS:
        raise InputError(f"unknown model {name!r}; choose from {sorted(BUILTINS)}")
    try:
        if name == "product_d":
            components = [builtin_model(c) if isinstance(c, str) else c for c in params.pop("models", [])]
            if params:
                raise TypeError(f"unexpected parameters {sorted(params)}")
            return product_d(*components)
        if name == "oneblock" and isinstance(params.get("base"), str):
            params["base"] = builtin_model(params["base"])
        return BUILTINS[name](**params)
    except TypeError as e:
        raise InputError(f"invalid parameters for {name}: {e}") from e


def resolve_model(reference: str, params: Optional[Mapping[str, Any]] = None) -> Model:
    """A path to a JSON model file, or a builtin name"""
    path = Path(reference)
    if path.suffix == ".json" or path.exists():
        return load_model(path)
    return builtin_model(reference, params)


def describe(model: Model) -> List[str]:
    """Human-readable rate lines, e.g. 'r(1) = 3 - eta(-1) - eta(2)'"""
    lines = []
    for y, rate in model.polynomials.items():
        terms = []
        for key, value in sorted(rate.items(), key=lambda kv: (len(kv[0]), kv[0])):
            factors = "*".join(f"eta({','.join(str(v) for v in site)})" for site in key)
            terms.append(f"{value}" if not key else f"{value}*{factors}")
        label = ",".join(str(v) for v in y)
        lines.append(f"r({label}) = " + " + ".join(terms))
    return lines
