"""
Graded operators in the eta-hat basis
The free symmetric exclusion generator S0, exact actions of L, L* and S,
the building-block decomposition of the asymmetric part A = (L - L*)/2,
quadratic forms and truncated resolvent solves on reduced classes.
"""

import logging
import math
from collections import defaultdict
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as splinalg
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import polynomial as poly
from .config import SOLVER_MAX_ITER, SOLVER_TOLERANCE
from .dual import (
    DualFunction,
    ReducedFunction,
    bilinear_reduced,
    dimension_reduce,
    double_inner,
    expand_dual,
    to_monomials,
)
from .errors import InputError, NumericalError
from .model import DensityContext, Model, adjoint_model
from .polynomial import Poly, Scalar
from .sites import Site, SiteSet, add, canonical, from_gaps, neg, normalize, origin, sub, subsets, to_gaps, translate, unit_vectors

logger = logging.getLogger(__name__)

AnyFunction = Union[DualFunction, ReducedFunction]


def _set_moves(sset: SiteSet, d: int) -> Iterator[SiteSet]:
    """Single-particle nearest neighbour moves onto empty sites"""
    occupied = set(sset)
    for x in sset:
        for e in unit_vectors(d):
            for step in (e, neg(e)):
                target = add(x, step)
                if target not in occupied:
                    yield normalize((occupied - {x}) | {target})


def gap_moves(gaps: Tuple[int, ...]) -> Iterator[Tuple[int, ...]]:
    """Reduced d = 1 moves: particle k steps left or right when the site is empty"""
    n = len(gaps) + 1
    for k in range(n):
        if k == 0 or gaps[k - 1] > 0:
            h = list(gaps)
            if k > 0:
                h[k - 1] -= 1
            if k < n - 1:
                h[k] += 1
            yield tuple(h)
        if k == n - 1 or gaps[k] > 0:
            h = list(gaps)
            if k < n - 1:
                h[k] -= 1
            if k > 0:
                h[k - 1] += 1
            yield tuple(h)


def reduced_moves(key: Any, d: int) -> Iterator[Any]:
    if d == 1:
        yield from gap_moves(key)
        return
    for moved in _set_moves(key, d):
        yield canonical(moved)[0]


def apply_s0(f: AnyFunction) -> AnyFunction:
    """Free symmetric exclusion generator; degree preserving"""
    if isinstance(f, ReducedFunction):
        out: Dict[Any, Scalar] = defaultdict(int)
        for key, value in f.items():
            for moved in reduced_moves(key, f.d):
                out[moved] += value
                out[key] -= value
        return ReducedFunction(f.n, f.d, out)
    coeffs: Dict[SiteSet, Scalar] = defaultdict(int)
    for key, value in f.items():
        for moved in _set_moves(key, f.d):
            coeffs[moved] += value
            coeffs[key] -= value
    return DualFunction(f.ctx, coeffs, f.d)


def dirichlet_form(f: AnyFunction) -> Scalar:
    """1/2 sum over allowed moves of squared differences; equals <f, -S0 f>"""
    if isinstance(f, ReducedFunction):
        values: Mapping[Any, Scalar] = f.coeffs
        moves: Callable[[Any], Iterable[Any]] = lambda key: reduced_moves(key, f.d)
    else:
        values = f.coeffs
        moves = lambda key: _set_moves(key, f.d)
    total: Scalar = 0
    for key, value in values.items():
        if not key and isinstance(f, DualFunction):
            continue
        for moved in moves(key):
            other = values.get(moved, 0)
            total += (other - value) ** 2
            if moved not in values:
                # the edge is seen once more from its outside endpoint
                total += value ** 2
    return total / 2


def _generator_on_monomials(model: Model, p: Mapping[SiteSet, Scalar]) -> Poly:
    terms: List[Poly] = []
    for A, c in p.items():
        occupied = set(A)
        for y, rate in model.polynomials.items():
            for x in A:
                target = add(x, y)
                if target not in occupied:
                    piece = poly.multiply(poly.shift(rate, x), {A: -c})
                    terms.append(poly.multiply(piece, poly.one_minus(target)))
            for z in A:
                x = sub(z, y)
                if x not in occupied:
                    rest = normalize(occupied - {z})
                    piece = poly.multiply(poly.shift(rate, x), {normalize(rest + (x,)): c})
                    terms.append(poly.multiply(piece, poly.one_minus(z)))
    return poly.add(*terms)


def apply_generator(model: Model, ctx: DensityContext, f: DualFunction) -> DualFunction:
    """Exact L f for a local f"""
    return expand_dual(_generator_on_monomials(model, to_monomials(f)), ctx, f.d)


def apply_adjoint(model: Model, ctx: DensityContext, f: DualFunction) -> DualFunction:
    return apply_generator(adjoint_model(model), ctx, f)


def apply_symmetric(model: Model, ctx: DensityContext, f: DualFunction) -> DualFunction:
    """S = (L + L*)/2"""
    return (apply_generator(model, ctx, f) + apply_adjoint(model, ctx, f)) * Fraction(1, 2)


def apply_antisymmetric(model: Model, ctx: DensityContext, f: DualFunction) -> DualFunction:
    """A = (L - L*)/2 assembled directly from the rates"""
    return (apply_generator(model, ctx, f) - apply_adjoint(model, ctx, f)) * Fraction(1, 2)


class BuildingBlock(BaseModel):
    """
    Pattern-match-and-replace operator A[B1, B2, B3, y] with a weight

    (A f)_Omega = sum_x 1{B1+x in Omega, (B2+x) disjoint from Omega}
                  (f at Omega minus B1+x plus B3^{0,y}+x  -  f at Omega minus B1+x plus B3+x)
    where B3^{0,y} replaces y by 0.
    """

    model_config = ConfigDict(frozen=True)

    B1: SiteSet
    B2: SiteSet
    B3: SiteSet
    y: Site
    weight: Any = Field(1, description="Scalar multiplier")

    @model_validator(mode="after")
    def _structure(self) -> "BuildingBlock":
        zero = origin(len(self.y))
        union = set(self.B1) | set(self.B2)
        if set(self.B1) & set(self.B2):
            raise ValueError("B1 and B2 must be disjoint")
        if zero not in union or self.y not in union:
            raise ValueError("0 and y must lie in B1 union B2")
        if self.y not in self.B3 or zero in self.B3:
            raise ValueError("B3 must contain y and not 0")
        if not set(self.B3) <= union:
            raise ValueError("B3 must be a subset of B1 union B2")
        return self

    @property
    def B3_swapped(self) -> SiteSet:
        zero = origin(len(self.y))
        return normalize((set(self.B3) - {self.y}) | {zero})

    @property
    def degree_shift(self) -> int:
        return len(self.B1) - len(self.B3)

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return (len(self.B1), len(self.B2), len(self.B3))


def apply_block(block: BuildingBlock, f: AnyFunction, ctx: Optional[DensityContext] = None) -> AnyFunction:
    """Weighted block action; reduced input gives reduced output"""
    if isinstance(f, ReducedFunction):
        if ctx is None:
            raise InputError("a density context is needed to act on reduced functions")
        image = apply_block(block, f.lift(ctx))
        return dimension_reduce(image, f.n + block.degree_shift)  # type: ignore[arg-type]

    union = set(block.B1) | set(block.B2)
    out: Dict[SiteSet, Scalar] = defaultdict(int)
    for B3, sign in ((block.B3, -1), (block.B3_swapped, 1)):
        rest = [s for s in union if s not in set(B3)]
        anchor = B3[0]
        for theta, value in f.items():
            occupied = set(theta)
            for site in theta:
                x = sub(site, anchor)
                moved = translate(B3, x)
                if not set(moved) <= occupied:
                    continue
                if any(add(s, x) in occupied for s in rest):
                    continue
                omega = (occupied - set(moved)) | set(translate(block.B1, x))
                out[normalize(omega)] += sign * block.weight * value
    return DualFunction(f.ctx, out, f.d)


class OperatorSum(BaseModel):
    """Weighted sum of building blocks plus a multiple of S0"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    blocks: List[BuildingBlock] = Field(default_factory=list)
    s0_coefficient: Any = Field(0, description="Scalar multiple of S0 included in the sum")
    label: str = ""
    ctx: Optional[DensityContext] = None

    def apply(self, f: AnyFunction) -> AnyFunction:
        if isinstance(f, ReducedFunction):
            if self.ctx is None:
                raise InputError("operator has no density context for reduced input")
            return self._apply_dual(f.lift(self.ctx))  # type: ignore[return-value]
        return self._apply_dual(f)

    def _apply_dual(self, f: DualFunction) -> DualFunction:
        total = DualFunction(f.ctx, {}, f.d)
        for block in self.blocks:
            total = total + apply_block(block, f)  # type: ignore[operator]
        if self.s0_coefficient:
            total = total + apply_s0(f) * self.s0_coefficient  # type: ignore[operator]
        return total

    def table_sums(self) -> Dict[Tuple[int, int, int], Scalar]:
        out: Dict[Tuple[int, int, int], Scalar] = defaultdict(int)
        for block in self.blocks:
            out[block.sizes] += block.weight
        return dict(out)

    def __len__(self) -> int:
        return len(self.blocks)


def _pair_weight(S: Tuple[Site, ...], kappa: Scalar) -> Scalar:
    if len(S) == 0:
        return 2
    if len(S) == 1:
        return kappa
    return -2


def block_terms(y: Site, Lam: SiteSet, c: Scalar, ctx: DensityContext, reversed_time: bool = False) -> List[BuildingBlock]:
    """Blocks of the asymmetric action of one dual rate term c * eta-hat_Lambda at jump y"""
    zero = origin(len(y))
    pair = (zero, y)
    kappa = ctx.kappa
    base = -Fraction(1, 2) * ctx.sqrt_chi * c
    if reversed_time:
        base = -base
    blocks = []
    for S in subsets(normalize(pair)):
        q = _pair_weight(S, kappa)
        if q == 0:
            continue
        for Gamma in subsets(Lam):
            for Gamma1 in subsets(Gamma):
                factor = kappa ** len(Gamma1)
                if factor == 0:
                    continue
                B1 = normalize(set(Lam) - set(Gamma) | set(Gamma1) | set(S))
                B2 = normalize(set(Gamma) - set(Gamma1) | (set(pair) - set(S)))
                B3 = normalize(set(Gamma) | {y})
                blocks.append(BuildingBlock(B1=B1, B2=B2, B3=B3, y=y, weight=base * factor * q))
    return blocks


def expected_table(ell: int, c: Scalar, ctx: DensityContext, reversed_time: bool = False) -> Dict[Tuple[int, int, int], Scalar]:
    """Closed-form coefficient sums per (|B1|, |B2|, |B3|) for a rate term of degree ell"""
    kappa = ctx.kappa
    base = -Fraction(1, 2) * ctx.sqrt_chi * c
    if reversed_time:
        base = -base
    Q = {0: 2, 1: 2 * kappa, 2: -2}
    out: Dict[Tuple[int, int, int], Scalar] = defaultdict(int)
    for a in range(ell + 1):
        for g in range(a + 1):
            for s in range(3):
                key = (ell - a + g + s, a - g + 2 - s, a + 1)
                out[key] += base * math.comb(ell, a) * math.comb(a, g) * kappa ** g * Q[s]
    return {key: value for key, value in out.items() if not poly.is_zero(value)}


def decompose_asymmetric(model: Model, ctx: DensityContext, reversed_time: bool = False) -> OperatorSum:
    """A = (L - L*)/2 as a weighted block sum; reversed_time flips the sign convention"""
    blocks: List[BuildingBlock] = []
    for y, rate in model.polynomials.items():
        coefficients = expand_dual(rate, ctx, model.d)
        for Lam, c in coefficients.items():
            blocks.extend(block_terms(y, Lam, c, ctx, reversed_time))
    logger.debug(f"Asymmetric part of {model.name}: {len(blocks)} blocks")
    return OperatorSum(blocks=blocks, label=f"A[{model.name}]", ctx=ctx)


def expansion_pair(block: BuildingBlock, z: Site) -> Tuple[BuildingBlock, BuildingBlock]:
    """A[B1,B2,B3,y] = A[B1,B2+z,B3,y] + A[B1+z,B2,B3+z,y] for z outside B1, B2 and 0"""
    if z in block.B1 or z in block.B2 or z == origin(len(z)):
        raise InputError(f"expansion site {z} must avoid B1, B2 and the origin")
    first = BuildingBlock(B1=block.B1, B2=normalize(block.B2 + (z,)), B3=block.B3, y=block.y, weight=block.weight)
    second = BuildingBlock(
        B1=normalize(block.B1 + (z,)), B2=block.B2, B3=normalize(block.B3 + (z,)), y=block.y, weight=block.weight
    )
    return first, second


def bilinear_form(f: AnyFunction, op: Any, g: AnyFunction, ctx: Optional[DensityContext] = None) -> Scalar:
    """
    <<f, Op g>> from reduced coefficients
    op is None (identity), "S0", an OperatorSum, a BuildingBlock or a callable.
    """
    if op is None:
        image = g
    elif isinstance(op, str):
        if op != "S0":
            raise InputError(f"unknown operator tag {op!r}")
        image = apply_s0(g)
    elif isinstance(op, OperatorSum):
        image = op.apply(g)
    elif isinstance(op, BuildingBlock):
        image = apply_block(op, g, ctx)
    else:
        image = op(g)
    return _pairing(f, image)


def _pairing(f: AnyFunction, g: AnyFunction) -> Scalar:
    if isinstance(f, ReducedFunction) and isinstance(g, ReducedFunction):
        return bilinear_reduced(f, g)
    if isinstance(f, ReducedFunction):
        return bilinear_reduced(f, dimension_reduce(g, f.n))  # type: ignore[arg-type]
    if isinstance(g, ReducedFunction):
        return bilinear_reduced(dimension_reduce(f, g.n), g)
    return double_inner(f, g)


class Truncation(BaseModel):
    """Finite reduced space: d = 1 classes of degree <= n_max and diameter <= R"""

    model_config = ConfigDict(frozen=True)

    n_max: int = Field(..., ge=1)
    R: int = Field(..., ge=1, description="Largest allowed diameter x_n - x_1")
    lam: float = Field(..., gt=0, description="Resolvent parameter lambda")
    n_min: int = Field(1, ge=1)


def truncated_classes(n: int, R: int) -> List[Tuple[int, ...]]:
    """Gap vectors of degree n with sum(g) <= R - (n - 1)"""
    budget = R - (n - 1)
    if budget < 0:
        return []

    def build(k: int, left: int) -> Iterator[Tuple[int, ...]]:
        if k == 0:
            yield ()
            return
        for g in range(left + 1):
            for rest in build(k - 1, left - g):
                yield (g,) + rest

    return list(build(n - 1, budget))


class ReducedSpace:
    """Index of truncated reduced classes across degrees"""

    def __init__(self, degrees: Sequence[int], R: int):
        self.keys: List[Tuple[int, Tuple[int, ...]]] = []
        for n in degrees:
            self.keys.extend((n, key) for key in truncated_classes(n, R))
        self.index = {key: i for i, key in enumerate(self.keys)}

    def __len__(self) -> int:
        return len(self.keys)

    def vector(self, functions: Iterable[ReducedFunction]) -> np.ndarray:
        out = np.zeros(len(self.keys))
        for f in functions:
            for key, value in f.items():
                i = self.index.get((f.n, key))
                if i is not None:
                    out[i] += float(value)
        return out

    def functions(self, vector: np.ndarray) -> List[ReducedFunction]:
        grouped: Dict[int, Dict[Tuple[int, ...], float]] = defaultdict(dict)
        for (n, key), value in zip(self.keys, vector):
            grouped[n][key] = float(value)
        return [ReducedFunction(n, 1, grouped[n]) for n in sorted(grouped)]


def s0_matrix(n: int, R: int, lam: float) -> Tuple[ReducedSpace, sparse.csr_matrix]:
    """lambda - S0 on degree-n classes with absorbing boundary"""
    space = ReducedSpace([n], R)
    rows, cols, vals = [], [], []
    for i, (_, key) in enumerate(space.keys):
        moves = list(gap_moves(key))
        rows.append(i)
        cols.append(i)
        vals.append(lam + len(moves))
        for moved in moves:
            j = space.index.get((n, moved))
            if j is not None:
                rows.append(i)
                cols.append(j)
                vals.append(-1.0)
    size = len(space)
    matrix = sparse.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    return space, matrix


def generator_matrix(model: Model, ctx: DensityContext, space: ReducedSpace) -> sparse.csr_matrix:
    """Reduced matrix of L on the truncated space, one column per lifted unit class"""
    rows, cols, vals = [], [], []
    for j, (n, key) in enumerate(space.keys):
        image = apply_generator(model, ctx, DualFunction(ctx, {from_gaps(key): 1}, 1))
        reduced: Dict[Tuple[int, Tuple[int, ...]], float] = defaultdict(float)
        for omega, value in image.items():
            if omega:
                reduced[(len(omega), to_gaps(canonical(omega)[0]))] += float(value)
        for target, value in reduced.items():
            i = space.index.get(target)
            if i is not None and value != 0.0:
                rows.append(i)
                cols.append(j)
                vals.append(value)
    size = len(space)
    return sparse.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()


def _check_solution(matrix: sparse.spmatrix, solution: np.ndarray, rhs: np.ndarray, info: int, method: str, tol: float) -> None:
    residual = float(np.linalg.norm(matrix @ solution - rhs))
    scale = float(np.linalg.norm(rhs)) or 1.0
    logger.debug(f"{method}: info={info}, relative residual={residual / scale:.3e}")
    if info != 0 or residual > 10 * tol * scale:
        raise NumericalError(
            f"{method} did not converge (info={info})",
            diagnostics={"relative_residual": residual / scale, "size": matrix.shape[0]},
        )


def resolvent_solve(
    op: str,
    rhs: Union[ReducedFunction, Sequence[ReducedFunction]],
    trunc: Truncation,
    model: Optional[Model] = None,
    ctx: Optional[DensityContext] = None,
    tol: float = SOLVER_TOLERANCE,
) -> Union[ReducedFunction, List[ReducedFunction]]:
    """
    Solve (lambda - Op) u = rhs on the truncated reduced space
    op "S0": one degree, conjugate gradients. op "L": degrees n_min..n_max, GMRES.
    """
    if op == "S0":
        if not isinstance(rhs, ReducedFunction):
            raise InputError("S0 solves take a single reduced function")
        if rhs.d != 1:
            raise InputError("truncated solves are one dimensional")
        space, matrix = s0_matrix(rhs.n, trunc.R, trunc.lam)
        b = space.vector([rhs])
        solution, info = splinalg.cg(matrix, b, rtol=tol, atol=0.0, maxiter=SOLVER_MAX_ITER)
        _check_solution(matrix, solution, b, info, "cg", tol)
        return space.functions(solution)[0] if len(space) else ReducedFunction(rhs.n, 1, {})

    if op != "L":
        raise InputError(f"unknown operator {op!r}")
    if model is None or ctx is None:
        raise InputError("lambda - L solves need the model and a density")
    if model.d != 1:
        raise InputError("truncated solves are one dimensional")
    parts = [rhs] if isinstance(rhs, ReducedFunction) else list(rhs)
    space = ReducedSpace(range(trunc.n_min, trunc.n_max + 1), trunc.R)
    matrix = (trunc.lam * sparse.identity(len(space), format="csr") - generator_matrix(model, ctx, space)).tocsr()
    b = space.vector(parts)
    solution, info = splinalg.gmres(matrix, b, rtol=tol, atol=0.0, restart=min(200, len(space)), maxiter=SOLVER_MAX_ITER)
    _check_solution(matrix, solution, b, info, "gmres", tol)
    return space.functions(solution)


def resolvent_quadratic(f: ReducedFunction, trunc: Truncation) -> float:
    """<<f, (lambda - S0)^{-1} f>> on the truncated space"""
    u = resolvent_solve("S0", f, trunc)
    return float(bilinear_reduced(f, u))  # type: ignore[arg-type]


def degree_restricted_dhat(w: DualFunction, model: Model, ctx: DensityContext, trunc: Truncation) -> float:
    """Truncated <<w, (lambda - L)^{-1} w>> over degrees n_min..n_max"""
    parts = [dimension_reduce(w, n) for n in range(trunc.n_min, trunc.n_max + 1)]
    parts = [p for p in parts if len(p)]
    if not parts:
        return 0.0
    solution = resolvent_solve("L", parts, trunc, model, ctx)
    total = 0.0
    for u in solution:  # type: ignore[union-attr]
        for p in parts:
            total += float(bilinear_reduced(p, u))
    logger.debug(f"Truncated w-term at lambda={trunc.lam}: {total}")
    return total


class SimplifiedOperator:
    """Simplified operators on reduced d = 1 functions with a user-supplied coefficient"""

    KINDS = {"m2_to4": (2, 4), "m3_to3": (3, 3), "m3_to4": (3, 4), "m3_to5": (3, 5)}

    def __init__(self, kind: str, coefficient: float = 1.0):
        if kind not in self.KINDS:
            raise InputError(f"unknown simplified operator {kind!r}; choose from {sorted(self.KINDS)}")
        self.kind = kind
        self.coefficient = coefficient
        self.n_in, self.n_out = self.KINDS[kind]

    def __repr__(self) -> str:
        return f"SimplifiedOperator({self.kind!r}, {self.coefficient})"

    def _candidates(self, f: ReducedFunction) -> Iterator[Tuple[int, ...]]:
        for key in f.coeffs:
            if self.kind == "m2_to4":
                (k,) = key
                yield from ((0, 0, k), (0, 0, k - 1), (k - 1, 0, 0), (k - 2, 0, 0))
            elif self.kind in ("m3_to3", "m3_to4"):
                a, b = key
                if self.kind == "m3_to3":
                    yield from ((0, b), (0, b - 1), (a, 0), (a - 1, 0))
                else:
                    yield from ((0, 0, b), (0, 0, b - 1), (a, 0, 0), (a - 1, 0, 0))
            else:
                a, b = key
                yield from ((0, 0, a, b), (0, 0, a - 1, b), (a - 1, 0, 0, b - 1), (a - 2, 0, 0, b), (a, b - 1, 0, 0), (a, b - 2, 0, 0))

    def _value(self, f: ReducedFunction, g: Tuple[int, ...]) -> Scalar:
        if self.kind == "m2_to4":
            y1, y2, y3 = g
            value = 0
            if y1 == y2 == 0:
                value += f[(y3 + 1,)] - f[(y3,)]
            if y2 == y3 == 0:
                value += f[(y1 + 1,)] - f[(y1 + 2,)]
            return value
        if self.kind == "m3_to3":
            y1, y2 = g
            value = 0
            if y1 == 0:
                value += f[(0, y2)] - f[(0, y2 + 1)]
            if y2 == 0:
                value += f[(y1, 0)] - f[(y1 + 1, 0)]
            return value
        if self.kind == "m3_to4":
            y1, y2, y3 = g
            value = 0
            if y1 == y2 == 0:
                value += f[(0, y3 + 1)] - f[(0, y3)]
            if y2 == y3 == 0:
                value += f[(y1, 0)] - f[(y1 + 1, 0)]
            return value
        y1, y2, y3, y4 = g
        value = 0
        if y1 == y2 == 0:
            value += f[(y3 + 1, y4)] - f[(y3, y4)]
        if y2 == y3 == 0:
            value += f[(y1 + 1, y4 + 1)] - f[(y1 + 2, y4)]
        if y3 == y4 == 0:
            value += f[(y1, y2 + 1)] - f[(y1, y2 + 2)]
        return value

    def __call__(self, f: ReducedFunction) -> ReducedFunction:
        if f.d != 1 or f.n != self.n_in:
            raise InputError(f"{self.kind} acts on degree {self.n_in} functions in d = 1")
        out = {}
        for g in set(self._candidates(f)):
            if min(g) < 0:
                continue
            value = self._value(f, g)
            if value:
                out[g] = self.coefficient * value
        return ReducedFunction(self.n_out, 1, out)


def simplified_operator(kind: str, coefficient: float = 1.0) -> SimplifiedOperator:
    return SimplifiedOperator(kind, coefficient)
