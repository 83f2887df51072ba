"""
Lattice gas models defined by local jump rates
Validates locality, the divergence condition and coercivity, and provides
exact finite-torus oracles (invariance residual, generator matrix).
"""

import itertools
import logging
import math
from collections import defaultdict, deque
from fractions import Fraction
from functools import cached_property, reduce
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sparse
import sympy as sp
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import polynomial as poly
from .config import ZERO_THRESHOLD
from .errors import InputError, ResourceError, StructuralError
from .polynomial import Poly, Scalar
from .sites import (
    Site,
    SiteSet,
    add,
    canonical,
    flat_index,
    half_space,
    l1_norm,
    neg,
    origin,
    sub,
    sup_norm,
    torus_sites,
    unit,
    wrap,
)

logger = logging.getLogger(__name__)

MAX_TABLE_WINDOW = 20
MAX_TORUS_SITES = 20


def to_fraction(value: Any) -> Fraction:
    """Exact rational from int, Fraction, decimal float or 'p/q' string"""
    if isinstance(value, bool):
        raise ValueError("booleans are not rates")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value}")
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, sp.Rational):
        return Fraction(int(value.p), int(value.q))
    raise ValueError(f"cannot interpret {value!r} as a rational number")


class RateTable(BaseModel):
    """Jump rate for one displacement as a truth table over a local window"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    window: Tuple[Site, ...] = Field(..., description="Ordered window sites; bit i of a pattern is window[i]")
    values: Tuple[Fraction, ...] = Field(..., description="One nonnegative rate per occupancy pattern")

    @field_validator("values", mode="before")
    @classmethod
    def _exact_values(cls, value: Any) -> Tuple[Fraction, ...]:
        return tuple(to_fraction(v) for v in value)

    @model_validator(mode="after")
    def _check_shape(self) -> "RateTable":
        if len(set(self.window)) != len(self.window):
            raise ValueError("window sites must be distinct")
        if len(self.window) > MAX_TABLE_WINDOW:
            raise ValueError(f"window wider than {MAX_TABLE_WINDOW} sites")
        if len(self.values) != 1 << len(self.window):
            raise ValueError(f"expected {1 << len(self.window)} values, got {len(self.values)}")
        if any(v < 0 for v in self.values):
            raise ValueError("rates must be nonnegative")
        return self

    @classmethod
    def constant(cls, value: Any) -> "RateTable":
        return cls(window=(), values=(value,))

    @classmethod
    def from_polynomial(cls, rate: Poly) -> "RateTable":
        window = poly.support(rate)
        if len(window) > MAX_TABLE_WINDOW:
            raise ResourceError(f"rate depends on {len(window)} sites; at most {MAX_TABLE_WINDOW} supported")
        return cls(window=window, values=poly.truth_table(rate, window))

    def polynomial(self) -> Poly:
        return poly.mobius(self.window, self.values)

    @property
    def max_rate(self) -> Fraction:
        return max(self.values)

    @property
    def is_zero(self) -> bool:
        return all(v == 0 for v in self.values)


class Model(BaseModel):
    """A speed-change exclusion lattice gas on Z^d"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = Field(..., description="Human-readable model name")
    d: int = Field(..., ge=1, description="Spatial dimension")
    K: int = Field(..., ge=1, description="Interaction radius")
    rates: Dict[Site, RateTable] = Field(..., description="Rate table per displacement")

    @model_validator(mode="after")
    def _check_rates(self) -> "Model":
        zero = origin(self.d)
        for y, table in self.rates.items():
            if len(y) != self.d:
                raise ValueError(f"displacement {y} is not {self.d}-dimensional")
            if y == zero:
                raise ValueError("displacement 0 is not a jump")
            for site in table.window:
                if len(site) != self.d:
                    raise ValueError(f"window site {site} is not {self.d}-dimensional")
                if site in (zero, y):
                    raise ValueError(f"rate for {y} may not read sites 0 or y (found {site})")
        return self

    @cached_property
    def polynomials(self) -> Dict[Site, Poly]:
        """Rate polynomials of the nonzero displacements"""
        out = {}
        for y in sorted(self.rates):
            if not self.rates[y].is_zero:
                out[y] = self.rates[y].polynomial()
        return out

    @property
    def displacements(self) -> List[Site]:
        return list(self.polynomials)

    def polynomial(self, y: Site) -> Poly:
        return self.polynomials.get(tuple(y), {})

    def reverse_polynomial(self, y: Site) -> Poly:
        """Rate of the reverse jump y -> 0, read from the jumping particle at 0"""
        return poly.shift(self.polynomial(neg(y)), y)

    @property
    def jump_set(self) -> List[Site]:
        """Displacements together with their negations"""
        return sorted(set(self.displacements) | {neg(y) for y in self.displacements})


class Configuration(BaseModel):
    """Occupancy of a periodic box of side L in d dimensions (flattened, row-major)"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    L: int = Field(..., ge=1)
    d: int = Field(..., ge=1)
    occupancy: np.ndarray = Field(..., description="uint8 array of length L**d")

    @model_validator(mode="after")
    def _check_size(self) -> "Configuration":
        if self.occupancy.shape != (self.L ** self.d,):
            raise ValueError("occupancy length must equal L**d")
        if np.any((self.occupancy != 0) & (self.occupancy != 1)):
            raise ValueError("occupancies must be 0 or 1")
        return self

    @classmethod
    def bernoulli(cls, L: int, d: int, rho: float, rng: np.random.Generator) -> "Configuration":
        occupancy = (rng.random(L ** d) < rho).astype(np.uint8)
        return cls(L=L, d=d, occupancy=occupancy)


class DensityContext(BaseModel):
    """Density rho with chi = rho(1-rho) and kappa = (1-2rho)/sqrt(chi)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    rho: Fraction = Field(..., description="Density in (0, 1), stored exactly")

    @field_validator("rho", mode="before")
    @classmethod
    def _exact_rho(cls, value: Any) -> Fraction:
        return to_fraction(value)

    @field_validator("rho")
    @classmethod
    def _open_interval(cls, value: Fraction) -> Fraction:
        if not 0 < value < 1:
            raise ValueError("density must lie in (0, 1)")
        return value

    @property
    def chi(self) -> Fraction:
        return self.rho * (1 - self.rho)

    @cached_property
    def sqrt_chi(self) -> Scalar:
        chi = self.chi
        num, den = math.isqrt(chi.numerator), math.isqrt(chi.denominator)
        if num * num == chi.numerator and den * den == chi.denominator:
            return Fraction(num, den)
        return math.sqrt(float(chi))

    @property
    def exact(self) -> bool:
        return isinstance(self.sqrt_chi, Fraction)

    @property
    def kappa(self) -> Scalar:
        return (1 - 2 * self.rho) / self.sqrt_chi


class ConditionReport(BaseModel):
    """Outcome of one structural check"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    condition: str
    passed: bool
    details: List[str] = Field(default_factory=list)
    counterexample: Optional[Any] = None


class DivergenceWitness(BaseModel):
    """Local functions R_i with g = sum_i grad_i R_i, or the first failing class"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    passed: bool
    R: List[Dict[SiteSet, Any]] = Field(default_factory=list, description="Per-axis witness polynomials")
    counterexample: Optional[SiteSet] = Field(None, description="Translation class with nonzero reduced coefficient")
    coefficient: Optional[Any] = None


class ComparisonConstants(BaseModel):
    """Constants with c1 * S0 <= S <= c2 * S0 as Dirichlet forms"""

    c1: float
    c2: float
    c_min: float = Field(..., description="Smallest symmetrised rate over the coercive set")
    coercive_set: List[Site]
    path_lengths: List[int] = Field(..., description="Coercive-jump path length to each unit vector")


def rate_eval(model: Model, y: Sequence[int], pattern: Union[Sequence[int], Mapping[Site, int]]) -> Fraction:
    """Rate of the jump 0 -> y given the occupancies of the window"""
    table = model.rates.get(tuple(y))
    if table is None:
        return Fraction(0)
    if isinstance(pattern, Mapping):
        missing = [site for site in table.window if site not in pattern]
        if missing:
            raise InputError(f"pattern does not cover window sites {missing}")
        bits = [pattern[site] for site in table.window]
    else:
        bits = list(pattern)
        if len(bits) != len(table.window):
            raise InputError(f"pattern has {len(bits)} entries, window of {tuple(y)} has {len(table.window)}")
    if any(b not in (0, 1) for b in bits):
        raise InputError("occupancies must be 0 or 1")
    index = sum(b << i for i, b in enumerate(bits))
    return table.values[index]


def model_from_polynomials(name: str, d: int, rates: Mapping[Site, Poly]) -> Model:
    """Compile rate polynomials into truth tables, choosing the smallest valid K"""
    tables = {}
    K = 1
    for y, rate in rates.items():
        rate = poly.clean(rate)
        if not rate:
            continue
        if any(site in (origin(d), tuple(y)) for site in poly.support(rate)):
            raise InputError(f"rate for {tuple(y)} reads site 0 or y")
        tables[tuple(y)] = RateTable.from_polynomial(rate)
        K = max(K, poly.radius(rate), sup_norm(y) + 1)
    return Model(name=name, d=d, K=K, rates=tables)


def validate_locality(model: Model) -> ConditionReport:
    details = []
    for y, table in sorted(model.rates.items()):
        if table.is_zero:
            continue
        if sup_norm(y) >= model.K:
            details.append(f"displacement {y} has |y| >= K = {model.K}")
        outside = [site for site in table.window if sup_norm(site) > model.K]
        if outside:
            details.append(f"rate for {y} reads sites outside [-K, K]^d: {outside}")
    passed = not details
    logger.debug(f"Locality for {model.name}: {'pass' if passed else details}")
    return ConditionReport(condition="locality", passed=passed, details=details)


def divergence_polynomial(model: Model) -> Poly:
    """g = sum_y r(y, .)(eta_y - eta_0) in the monomial basis"""
    zero = origin(model.d)
    terms = []
    for y, rate in model.polynomials.items():
        terms.append(poly.multiply(rate, {(y,): 1}))
        terms.append(poly.multiply(rate, {(zero,): -1}))
    return poly.add(*terms)


def translation_classes(p: Mapping[SiteSet, Scalar]) -> Dict[SiteSet, Scalar]:
    """Sum of coefficients over each translation class, keyed by canonical representative"""
    out: Dict[SiteSet, Scalar] = defaultdict(int)
    for key, value in p.items():
        out[canonical(key)[0]] += value
    return poly.clean(out)


def telescope(p: Mapping[SiteSet, Scalar], d: int, axis_order: Optional[Sequence[int]] = None) -> List[Poly]:
    """
    Write a polynomial with vanishing class sums as sum_i grad_i R_i
    grad_e eta_A = eta_A - eta_{A-e}; each monomial is walked back to its
    canonical translate one axis at a time.
    """
    order = list(axis_order) if axis_order is not None else list(range(d))
    if sorted(order) != list(range(d)):
        raise InputError(f"axis order {order} is not a permutation of range({d})")
    leftover = translation_classes(p)
    if leftover:
        key = min(leftover)
        raise StructuralError(f"class {key} has nonzero coefficient {leftover[key]}", counterexample=key)
    R: List[Dict[SiteSet, Scalar]] = [defaultdict(int) for _ in range(d)]
    for key, c in p.items():
        _, offset = canonical(key)
        current = key
        for axis in order:
            k = offset[axis]
            e = unit(d, axis)
            if k > 0:
                for j in range(k):
                    R[axis][tuple(sub(s, tuple(j * u for u in e)) for s in current)] += c
                current = tuple(sub(s, tuple(k * u for u in e)) for s in current)
            elif k < 0:
                for j in range(1, -k + 1):
                    R[axis][tuple(add(s, tuple(j * u for u in e)) for s in current)] -= c
                current = tuple(add(s, tuple(-k * u for u in e)) for s in current)
    return [poly.clean(r) for r in R]


def gradient(R: Sequence[Mapping[SiteSet, Scalar]], d: int) -> Poly:
    """sum_i grad_i R_i, the inverse of telescope"""
    terms = []
    for axis, r in enumerate(R):
        e = unit(d, axis)
        terms.append(dict(r))
        terms.append(poly.scale(poly.shift(r, neg(e)), -1))
    return poly.add(*terms)


def validate_divergence(model: Model, axis_order: Optional[Sequence[int]] = None) -> DivergenceWitness:
    g = divergence_polynomial(model)
    classes = translation_classes(g)
    if classes:
        key = min(classes, key=lambda k: (len(k), k))
        logger.info(f"Divergence condition fails for {model.name}: class {key} -> {classes[key]}")
        return DivergenceWitness(passed=False, counterexample=key, coefficient=classes[key])
    R = telescope(g, model.d, axis_order)
    logger.debug(f"Divergence witness for {model.name}: {R}")
    return DivergenceWitness(passed=True, R=R)


def _rate_extrema(rate: Poly) -> Tuple[float, float]:
    window = poly.support(rate)
    if len(window) > 22:
        raise ResourceError(f"rate sum depends on {len(window)} sites; exhaustive search infeasible")
    values = poly.table_array(rate, window)
    return float(values.min()), float(values.max())


def symmetrised_rate(model: Model, y: Site) -> Poly:
    """r(y, eta) + rate of the reverse jump, as a polynomial"""
    return poly.add(model.polynomial(y), model.reverse_polynomial(y))


def coercive_set(model: Model) -> Dict[Site, float]:
    """Displacements whose symmetrised rate is uniformly positive, with that minimum"""
    out = {}
    for y in model.jump_set:
        low, _ = _rate_extrema(symmetrised_rate(model, y))
        if low > ZERO_THRESHOLD:
            out[y] = low
    return out


def generates_lattice(vectors: Sequence[Site], d: int) -> bool:
    """True when the integer span of the vectors is all of Z^d"""
    if len(vectors) < d:
        return False
    minors = []
    for rows in itertools.combinations(vectors, d):
        minors.append(int(sp.Matrix(rows).det()))
    return reduce(math.gcd, minors, 0) == 1


def validate_coercivity(model: Model) -> ConditionReport:
    Y = coercive_set(model)
    passed = generates_lattice(sorted(Y), model.d)
    details = [f"coercive displacements: {sorted(Y)}"]
    if not passed:
        details.append("coercive displacements do not generate Z^d")
    logger.debug(f"Coercivity for {model.name}: {passed}")
    return ConditionReport(condition="coercivity", passed=passed, details=details, counterexample=None if passed else sorted(Y))


def validate_all(model: Model) -> List[ConditionReport]:
    """Locality, divergence and coercivity reports in that order"""
    logger.info(f"Validating model {model.name}")
    locality = validate_locality(model)
    witness = validate_divergence(model)
    divergence = ConditionReport(
        condition="divergence",
        passed=witness.passed,
        details=[] if witness.passed else [f"class {witness.counterexample} has reduced coefficient {witness.coefficient}"],
        counterexample=witness.counterexample,
    )
    return [locality, divergence, validate_coercivity(model)]


def require_valid(model: Model) -> None:
    """Raise StructuralError unless all three conditions hold"""
    for report in validate_all(model):
        if not report.passed:
            raise StructuralError(f"{report.condition} condition fails for {model.name}: {report.details}", counterexample=report.counterexample)


def adjoint_model(model: Model) -> Model:
    """Time-reversed model: the rate of 0 -> y is the rate of the original reverse jump"""
    rates = {}
    for y in model.jump_set:
        reverse = model.reverse_polynomial(y)
        if reverse:
            rates[y] = reverse
    return model_from_polynomials(f"{model.name}*", model.d, rates)


def _check_torus(model: Model, L: int) -> None:
    zero = origin(model.d)
    for y, rate in model.polynomials.items():
        target = wrap(y, L)
        if target == zero:
            raise InputError(f"displacement {y} wraps onto the origin for L={L}")
        for site in poly.support(rate):
            if wrap(site, L) in (zero, target):
                raise InputError(f"window site {site} of {y} collides with 0 or y for L={L}")


def _swap(p: Mapping[SiteSet, Scalar], a: Site, b: Site) -> Poly:
    out: Dict[SiteSet, Scalar] = defaultdict(int)
    for key, value in p.items():
        out[tuple(sorted(b if s == a else a if s == b else s for s in key))] += value
    return poly.clean(out)


def invariance_residual_torus(model: Model, L: int, rho: Any, f: Mapping[SiteSet, Scalar]) -> Scalar:
    """
    |E_pi[L f]| on the periodic box of side L, computed exactly
    f is a density-free polynomial; rational rho keeps the computation in Fractions.
    """
    if L ** model.d > 4096:
        raise ResourceError(f"torus with {L ** model.d} sites is too large for the exact residual")
    if L <= 2 * model.K + 2:
        logger.warning(f"L={L} is not above 2K+2={2 * model.K + 2}; wrapped windows may overlap and the residual need not vanish")
    _check_torus(model, L)
    density = to_fraction(rho)
    fL = poly.on_torus(f, L)
    touched = set(site for key in fL for site in key)
    total: Scalar = 0
    for y, rate in model.polynomials.items():
        for x in torus_sites(L, model.d):
            target = wrap(add(x, y), L)
            if x not in touched and target not in touched:
                continue
            diff = poly.sub(_swap(fL, x, target), fL)
            if not diff:
                continue
            jump = poly.multiply(poly.on_torus(poly.shift(rate, x), L), {(x,): 1})
            jump = poly.multiply(jump, poly.one_minus(target))
            total += poly.expectation(poly.on_torus(poly.multiply(jump, diff), L), density)
    return abs(total)


def torus_generator(model: Model, L: int) -> sparse.csr_matrix:
    """Generator matrix on all 2^(L^d) configurations of the periodic box"""
    n_sites = L ** model.d
    if n_sites > MAX_TORUS_SITES:
        raise ResourceError(f"2^{n_sites} configurations exceed the enumeration limit 2^{MAX_TORUS_SITES}")
    _check_torus(model, L)
    states = np.arange(1 << n_sites, dtype=np.int64)

    def bit(index: int) -> np.ndarray:
        return (states >> index) & 1

    rows, cols, vals = [], [], []
    for y, table in sorted(model.rates.items()):
        if table.is_zero:
            continue
        values = np.array([float(v) for v in table.values])
        for x in torus_sites(L, model.d):
            source = flat_index(x, L)
            target = flat_index(add(x, y), L)
            pattern = np.zeros_like(states)
            for b, z in enumerate(table.window):
                pattern |= bit(flat_index(add(x, z), L)) << b
            rate = values[pattern]
            selected = (bit(source) == 1) & (bit(target) == 0) & (rate > 0)
            origin_states = states[selected]
            rows.append(origin_states)
            cols.append(origin_states ^ (1 << source) ^ (1 << target))
            vals.append(rate[selected])
    size = 1 << n_sites
    off = sparse.coo_matrix(
        (np.concatenate(vals) if vals else np.zeros(0), (np.concatenate(rows) if rows else np.zeros(0, int), np.concatenate(cols) if cols else np.zeros(0, int))),
        shape=(size, size),
    ).tocsr()
    exit_rates = np.asarray(off.sum(axis=1)).ravel()
    logger.debug(f"Torus generator for {model.name}, L={L}: {off.nnz} transitions")
    return (off - sparse.diags(exit_rates)).tocsr()


def comparison_constants(model: Model) -> ComparisonConstants:
    """Dirichlet-form comparison with simple exclusion via path decompositions"""
    d = model.d
    Y = coercive_set(model)
    if not generates_lattice(sorted(Y), d):
        raise StructuralError(f"model {model.name} is not coercive", counterexample=sorted(Y))
    c_min = min(Y.values())

    c2 = 0.0
    for y in model.jump_set:
        if not half_space(y):
            continue
        _, high = _rate_extrema(symmetrised_rate(model, y))
        c2 += 0.5 * high * (2 * l1_norm(y) - 1) ** 2

    # breadth-first search over coercive jumps
    bound = 4 * model.K * d + 4
    steps = list(Y)
    distance = {origin(d): 0}
    queue = deque([origin(d)])
    while queue:
        site = queue.popleft()
        for y in steps:
            nxt = add(site, y)
            if sup_norm(nxt) <= bound and nxt not in distance:
                distance[nxt] = distance[site] + 1
                queue.append(nxt)
    paths = []
    for axis in range(d):
        e = unit(d, axis)
        if e not in distance:
            raise StructuralError(f"no coercive path to {e} within radius {bound}")
        paths.append(distance[e])
    c1 = c_min / (2 * sum((2 * p - 1) ** 2 for p in paths))
    logger.debug(f"Comparison constants for {model.name}: c1={c1}, c2={c2}, paths={paths}")
    return ComparisonConstants(c1=c1, c2=c2, c_min=c_min, coercive_set=sorted(Y), path_lengths=paths)
