"""
Orthonormal basis algebra at a fixed density
eta-hat_x = (eta_x - rho) / sqrt(chi); products over finite sets form an
orthonormal basis of L2(pi_rho). Also flux extraction, the macroscopic flux,
regime classification and dimension reduction.
"""

import itertools
import logging
import math
from collections import defaultdict
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import sympy as sp
from pydantic import BaseModel, ConfigDict, Field

from . import polynomial as poly
from .config import ZERO_THRESHOLD
from .model import DensityContext, Model, RateTable, adjoint_model, require_valid, telescope
from .polynomial import Poly, Scalar
from .sites import Site, SiteSet, canonical, from_gaps, neg, normalize, origin, subsets, to_gaps

logger = logging.getLogger(__name__)

RHO = sp.Symbol("rho")

ReducedKey = Union[Tuple[int, ...], SiteSet]


class DualFunction:
    """Sparse coefficients f_Lambda of a local function in the eta-hat basis"""

    def __init__(self, ctx: DensityContext, coeffs: Optional[Mapping[SiteSet, Scalar]] = None, d: Optional[int] = None):
        self.ctx = ctx
        self.coeffs: Dict[SiteSet, Scalar] = poly.clean(coeffs or {})
        if d is None:
            d = next((len(key[0]) for key in self.coeffs if key), 1)
        self.d = d

    def __repr__(self) -> str:
        return f"DualFunction(rho={self.ctx.rho}, terms={len(self.coeffs)})"

    def __len__(self) -> int:
        return len(self.coeffs)

    def __bool__(self) -> bool:
        return bool(self.coeffs)

    def __getitem__(self, key: SiteSet) -> Scalar:
        return self.coeffs.get(key, 0)

    def items(self) -> Iterable[Tuple[SiteSet, Scalar]]:
        return self.coeffs.items()

    def _like(self, coeffs: Mapping[SiteSet, Scalar]) -> "DualFunction":
        return DualFunction(self.ctx, coeffs, self.d)

    def __add__(self, other: "DualFunction") -> "DualFunction":
        return self._like(poly.add(self.coeffs, other.coeffs))

    def __sub__(self, other: "DualFunction") -> "DualFunction":
        return self._like(poly.sub(self.coeffs, other.coeffs))

    def __neg__(self) -> "DualFunction":
        return self._like(poly.scale(self.coeffs, -1))

    def __mul__(self, factor: Scalar) -> "DualFunction":
        return self._like(poly.scale(self.coeffs, factor))

    __rmul__ = __mul__

    @property
    def degree_span(self) -> Tuple[int, int]:
        sizes = [len(key) for key in self.coeffs]
        return (min(sizes), max(sizes)) if sizes else (0, 0)

    @property
    def mean(self) -> Scalar:
        return self.coeffs.get((), 0)

    def degree_part(self, n: int) -> "DualFunction":
        return self._like({key: value for key, value in self.coeffs.items() if len(key) == n})

    def without_degrees(self, *degrees: int) -> "DualFunction":
        return self._like({key: value for key, value in self.coeffs.items() if len(key) not in degrees})

    def shift(self, x: Site) -> "DualFunction":
        return self._like(poly.shift(self.coeffs, x))

    def inner(self, other: "DualFunction") -> Scalar:
        """E[fg] by orthonormality"""
        total: Scalar = 0
        small, large = (self, other) if len(self) <= len(other) else (other, self)
        for key, value in small.items():
            if key in large.coeffs:
                total += value * large.coeffs[key]
        return total

    def covariance(self, other: "DualFunction") -> Scalar:
        return self.inner(other) - self.mean * other.mean

    def to_monomials(self) -> Poly:
        return to_monomials(self)

    def support(self) -> SiteSet:
        return poly.support(self.coeffs)


def expand_dual(function: Union[Mapping[SiteSet, Scalar], RateTable], ctx: DensityContext, d: Optional[int] = None) -> DualFunction:
    """
    Coefficients of a local function in the eta-hat basis
    eta_A = sum_{B subset A} chi^{|B|/2} rho^{|A|-|B|} eta-hat_B.
    """
    monomials = function.polynomial() if isinstance(function, RateTable) else function
    s, rho = ctx.sqrt_chi, ctx.rho
    out: Dict[SiteSet, Scalar] = defaultdict(int)
    for key, value in monomials.items():
        n = len(key)
        for sub in subsets(key):
            out[sub] += value * s ** len(sub) * rho ** (n - len(sub))
    return DualFunction(ctx, out, d)


def to_monomials(f: DualFunction) -> Poly:
    """Inverse of expand_dual"""
    s, rho = f.ctx.sqrt_chi, f.ctx.rho
    out: Dict[SiteSet, Scalar] = defaultdict(int)
    for key, value in f.items():
        n = len(key)
        scale = value / s ** n
        for sub in subsets(key):
            out[sub] += scale * (-rho) ** (n - len(sub))
    return poly.clean(out)


def multiply(f: DualFunction, g: DualFunction) -> DualFunction:
    """Pointwise product, linearised with eta-hat_x^2 = 1 + kappa eta-hat_x"""
    kappa = f.ctx.kappa
    out: Dict[SiteSet, Scalar] = defaultdict(int)
    for a, ca in f.items():
        set_a = set(a)
        for b, cb in g.items():
            common = normalize(set_a.intersection(b))
            sym = set_a.symmetric_difference(b)
            for s in subsets(common):
                if s and kappa == 0:
                    continue
                out[normalize(sym.union(s))] += ca * cb * kappa ** len(s)
    return DualFunction(f.ctx, out, f.d)


def covariance_on_window(f: DualFunction, g: DualFunction) -> Scalar:
    """E[fg] - E[f]E[g] by exhaustive enumeration of the joint support"""
    pf, pg = to_monomials(f), to_monomials(g)
    window = normalize(list(poly.support(pf)) + list(poly.support(pg)))
    rho = f.ctx.rho
    ef: Scalar = 0
    eg: Scalar = 0
    efg: Scalar = 0
    for bits in itertools.product((0, 1), repeat=len(window)):
        occupied = dict(zip(window, bits))
        k = sum(bits)
        weight = rho ** k * (1 - rho) ** (len(window) - k)
        vf, vg = poly.evaluate(pf, occupied), poly.evaluate(pg, occupied)
        ef += weight * vf
        eg += weight * vg
        efg += weight * vf * vg
    return efg - ef * eg


class FluxBundle(BaseModel):
    """Microscopic fluxes and derived quantities, one entry per axis"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    model_name: str
    ctx: DensityContext
    d: int
    W: List[DualFunction] = Field(..., description="Flux with L eta_0 = sum_i (W_i o tau_{e_i} - W_i)")
    W_star: List[DualFunction] = Field(..., description="Same for the adjoint generator")
    w: List[DualFunction] = Field(..., description="Symmetrised flux without degree 0 and 1 parts")
    v: List[DualFunction] = Field(..., description="Antisymmetrised flux (W - W*)/2")
    j: List[Any] = Field(..., description="Macroscopic flux per axis as a sympy Poly in rho")
    C: List[Scalar] = Field(..., description="C_ii = sum_y y_i^2 E r(y, .)")


def generator_on_origin(model: Model) -> Poly:
    """L eta_0 in the monomial basis"""
    zero = origin(model.d)
    terms = []
    for y, rate in model.polynomials.items():
        back = neg(y)
        arriving = poly.multiply(poly.shift(rate, back), {(back,): 1})
        terms.append(poly.multiply(arriving, poly.one_minus(zero)))
        leaving = poly.multiply(rate, {(zero,): 1})
        terms.append(poly.scale(poly.multiply(leaving, poly.one_minus(y)), -1))
    return poly.add(*terms)


def _sympy_number(value: Scalar) -> Any:
    if isinstance(value, Fraction):
        return sp.Rational(value.numerator, value.denominator)
    return sp.Float(value)


def macroscopic_flux(model: Model) -> List[sp.Poly]:
    """j_i(rho) = sum_y y_i E_rho[r(y, .)] rho (1 - rho) as exact polynomials"""
    out = []
    for axis in range(model.d):
        total = sp.Integer(0)
        for y, rate in model.polynomials.items():
            if y[axis] == 0:
                continue
            mean = sum((_sympy_number(c) * RHO ** len(key) for key, c in rate.items()), sp.Integer(0))
            total += y[axis] * mean * RHO * (1 - RHO)
        out.append(sp.Poly(sp.expand(total), RHO))
    return out


def microscopic_flux(model: Model, ctx: DensityContext, axis_order: Optional[Sequence[int]] = None) -> FluxBundle:
    """W, W*, w, v, j and C for a validated model"""
    require_valid(model)
    logger.info(f"Computing flux bundle for {model.name} at rho={ctx.rho}")
    d = model.d
    W_poly = telescope(poly.scale(generator_on_origin(model), -1), d, axis_order)
    W_star_poly = telescope(generator_on_origin(adjoint_model(model)), d, axis_order)

    W = [expand_dual(p, ctx, d) for p in W_poly]
    W_star = [expand_dual(p, ctx, d) for p in W_star_poly]
    w = [((a + b) * Fraction(1, 2)).without_degrees(0, 1) for a, b in zip(W, W_star)]
    v = [(a - b) * Fraction(1, 2) for a, b in zip(W, W_star)]

    C: List[Scalar] = []
    for axis in range(d):
        total: Scalar = 0
        for y, rate in model.polynomials.items():
            total += y[axis] ** 2 * poly.expectation(rate, ctx.rho)
        C.append(total)
    logger.debug(f"Flux degrees for {model.name}: {[f.degree_span for f in w]}")
    return FluxBundle(model_name=model.name, ctx=ctx, d=d, W=W, W_star=W_star, w=w, v=v, j=macroscopic_flux(model), C=C)


def flux_derivative(bundle: FluxBundle, k: int, axis: int = 0) -> float:
    """k-th density derivative of j_i from the degree-k coefficients of w_i"""
    chi = float(bundle.ctx.chi)
    total = sum(float(value) for key, value in bundle.w[axis].items() if len(key) == k)
    return math.factorial(k) * chi ** (-k / 2) * total


def symbolic_derivative(j: sp.Poly, k: int, rho: Any) -> Any:
    value = sp.diff(j.as_expr(), RHO, k).subs(RHO, _sympy_number(rho) if isinstance(rho, (Fraction, float)) else rho)
    return value


class AxisRegime(BaseModel):
    axis: int
    j1: float = Field(..., description="j'(rho)")
    j2: float = Field(..., description="j''(rho)")
    j3: float = Field(..., description="j'''(rho)")
    regime: str
    prediction: str
    proved_lower: str
    proved_upper: str


class RegimeReport(BaseModel):
    """Expected and proved behaviour of D-hat(lambda) as lambda -> 0"""
    model_name: str
    rho: float
    d: int
    regime: str = Field(..., description="Tag of the primary axis")
    prediction: str
    proved_lower: str
    proved_upper: str
    axes: List[AxisRegime]

    def summary(self) -> str:
        return f"{self.regime}; proved bounds: {self.proved_lower} <= D-hat <= {self.proved_upper}"


REGIMES: Dict[str, Tuple[str, str, str]] = {
    "d1_generic": ("lambda^(-1/3)", "C*lambda^(-1/4)", "C*lambda^(-1/2)"),
    "d1_inflection": ("(log lambda^(-1))^(1/2)", "C*log log lambda^(-1)", "C*log lambda^(-1)"),
    "d1_double_inflection": ("bounded (diffusive)", "C_ii", "C"),
    "d2_generic": ("(log lambda^(-1))^(2/3)", "C*(log lambda^(-1))^(1/2)", "C*log lambda^(-1)"),
    "d2_diffusive": ("bounded (diffusive)", "C_ii", "C"),
    "d3_diffusive": ("bounded (diffusive)", "C_ii", "C"),
}


def _is_zero(value: Any) -> bool:
    if isinstance(value, sp.Rational):
        return value == 0
    return abs(float(value)) < ZERO_THRESHOLD


def regime_tag(d: int, j2: Any, j3: Any) -> str:
    if d == 1:
        if not _is_zero(j2):
            return "d1_generic"
        return "d1_inflection" if not _is_zero(j3) else "d1_double_inflection"
    if d == 2:
        return "d2_generic" if not _is_zero(j2) else "d2_diffusive"
    return "d3_diffusive"


def classify_regime(model: Model, rho: Any, axis: int = 0) -> RegimeReport:
    ctx = rho if isinstance(rho, DensityContext) else DensityContext(rho=rho)
    require_valid(model)
    axes = []
    for i, j in enumerate(macroscopic_flux(model)):
        derivatives = [symbolic_derivative(j, k, ctx.rho) for k in (1, 2, 3)]
        tag = regime_tag(model.d, derivatives[1], derivatives[2])
        prediction, lower, upper = REGIMES[tag]
        axes.append(AxisRegime(
            axis=i,
            j1=float(derivatives[0]),
            j2=float(derivatives[1]),
            j3=float(derivatives[2]),
            regime=tag,
            prediction=prediction,
            proved_lower=lower,
            proved_upper=upper,
        ))
    primary = axes[axis]
    logger.info(f"Regime of {model.name} at rho={ctx.rho}: {primary.regime}")
    return RegimeReport(
        model_name=model.name,
        rho=float(ctx.rho),
        d=model.d,
        regime=primary.regime,
        prediction=primary.prediction,
        proved_lower=primary.proved_lower,
        proved_upper=primary.proved_upper,
        axes=axes,
    )


class ReducedFunction:
    """
    Translation-quotiented coefficients of one degree
    Keys are gap vectors for d = 1 and canonical site sets otherwise.
    """

    def __init__(self, n: int, d: int, coeffs: Optional[Mapping[ReducedKey, Scalar]] = None):
        self.n = n
        self.d = d
        self.coeffs: Dict[ReducedKey, Scalar] = {k: v for k, v in (coeffs or {}).items() if not poly.is_zero(v)}

    def __repr__(self) -> str:
        return f"ReducedFunction(n={self.n}, d={self.d}, terms={len(self.coeffs)})"

    def __len__(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, key: ReducedKey) -> Scalar:
        return self.coeffs.get(key, 0)

    def items(self) -> Iterable[Tuple[ReducedKey, Scalar]]:
        return self.coeffs.items()

    def _like(self, coeffs: Mapping[ReducedKey, Scalar]) -> "ReducedFunction":
        return ReducedFunction(self.n, self.d, coeffs)

    def __add__(self, other: "ReducedFunction") -> "ReducedFunction":
        out: Dict[ReducedKey, Scalar] = defaultdict(int, self.coeffs)
        for key, value in other.items():
            out[key] += value
        return self._like(out)

    def __sub__(self, other: "ReducedFunction") -> "ReducedFunction":
        return self + other * -1

    def __mul__(self, factor: Scalar) -> "ReducedFunction":
        return self._like({key: value * factor for key, value in self.coeffs.items()})

    __rmul__ = __mul__

    def total(self) -> Scalar:
        return sum(self.coeffs.values(), 0)

    def site_set(self, key: ReducedKey) -> SiteSet:
        return from_gaps(key) if self.d == 1 else key  # type: ignore[arg-type]

    def lift(self, ctx: DensityContext) -> DualFunction:
        """A local function whose reduction is this one (each class at its canonical translate)"""
        return DualFunction(ctx, {self.site_set(key): value for key, value in self.coeffs.items()}, self.d)


def reduced_key(sset: SiteSet, d: int) -> ReducedKey:
    rep = canonical(sset)[0]
    return to_gaps(rep) if d == 1 else rep


def dimension_reduce(f: DualFunction, n: int) -> ReducedFunction:
    """f-bar_Lambda = sum_y f_{Lambda + y} over the degree-n part"""
    out: Dict[ReducedKey, Scalar] = defaultdict(int)
    for key, value in f.items():
        if len(key) == n:
            out[reduced_key(key, f.d)] += value
    return ReducedFunction(n, f.d, out)


def bilinear_reduced(f: ReducedFunction, g: ReducedFunction) -> Scalar:
    """<<f, g>> from reduced coefficients; zero across degrees"""
    if f.n != g.n or f.d != g.d:
        return 0
    total: Scalar = 0
    for key, value in f.items():
        if key in g.coeffs:
            total += value * g.coeffs[key]
    return total


def double_inner(f: DualFunction, g: DualFunction) -> Scalar:
    """<<f, g>> = sum_x <f; tau_x g> over all degrees n >= 1"""
    degrees = {len(key) for key in f.coeffs if key} & {len(key) for key in g.coeffs if key}
    return sum((bilinear_reduced(dimension_reduce(f, n), dimension_reduce(g, n)) for n in sorted(degrees)), 0)


def translated_covariance_sum(f: DualFunction, g: DualFunction, radius: int) -> Scalar:
    """sum over |x|_inf <= radius of <f; tau_x g>, the defining limit of <<f, g>>"""
    total: Scalar = 0
    for x in itertools.product(range(-radius, radius + 1), repeat=f.d):
        total += f.covariance(g.shift(tuple(x)))
    return total


def unit_class(key: Sequence[int], ctx: DensityContext) -> DualFunction:
    """eta-hat of the d = 1 class with the given gap vector"""
    return DualFunction(ctx, {from_gaps(tuple(key)): 1}, 1)
