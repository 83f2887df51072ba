"""
Certified bounds on the Laplace-transformed diffusivity
D-hat(lambda) = C_ii + (2/chi) <<w, (lambda - L)^{-1} w>> - (2/chi) <<v, (lambda - L)^{-1} v>>
The upper curve bounds the w-term through the comparison S >= c1 S0 and the
free resolvent bounds in greens; the lower curve is variational, using
block-constant test functions with explicit Fourier profiles.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sparse
import scipy.sparse.linalg as splinalg
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import integrate

from . import polynomial as poly
from .config import (
    BLOCK_FACTOR,
    DEFAULT_LAMBDA0,
    DEFAULT_LAMBDA_COUNT,
    DEFAULT_LAMBDA_RATIO,
    ZERO_THRESHOLD,
    get_settings,
)
from .dual import FluxBundle, ReducedFunction, classify_regime, dimension_reduce, microscopic_flux
from .errors import InputError, NumericalError, StructuralError
from .greens import class_distance, green_bound
from .model import DensityContext, Model, comparison_constants, torus_generator
from .operators import decompose_asymmetric
from .sites import canonical, flat_index, torus_sites

logger = logging.getLogger(__name__)

FAMILY_REGIMES = ("d1_generic", "d1_inflection", "d2_generic")
RADIAL_PANELS = 24
GAUSS_NODES = 8
ANGLES = 48
LINE_NODES = 400
PLANE_NODES = 160


class LambdaGrid(BaseModel):
    """Geometric grid lambda_k = lambda_0 * ratio^k, k < count"""

    lam0: float = Field(DEFAULT_LAMBDA0, gt=0, lt=1)
    ratio: float = Field(DEFAULT_LAMBDA_RATIO, gt=0, lt=1)
    count: int = Field(DEFAULT_LAMBDA_COUNT, ge=1)

    @classmethod
    def spanning(cls, high: float, low: float, count: int) -> "LambdaGrid":
        """Grid from high down to low inclusive"""
        if not 0 < low < high < 1 or count < 2:
            raise InputError(f"cannot span lambda in [{low}, {high}] with {count} points")
        return cls(lam0=high, ratio=(low / high) ** (1 / (count - 1)), count=count)

    def values(self) -> np.ndarray:
        return self.lam0 * self.ratio ** np.arange(self.count)


class DhatCurve(BaseModel):
    """Lower and upper bounds on D-hat over a lambda grid"""

    model_name: str
    rho: float
    axis: int
    C: float = Field(..., description="Constant term C_ii")
    lambdas: List[float]
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    lower_w: Optional[List[float]] = Field(None, description="Certified lower bound on the w-term resolvent")
    upper_w: Optional[List[float]] = Field(None, description="Upper bound on the w-term resolvent")
    regime: Optional[str] = None
    constants: Dict[str, float] = Field(default_factory=dict, description="c1, c2, P, V and related constants")
    pieces: Dict[str, List[float]] = Field(default_factory=dict, description="Per-degree upper contributions")

    @field_validator("lower", "upper", "lower_w", "upper_w")
    @classmethod
    def _finite(cls, values: Optional[List[float]]) -> Optional[List[float]]:
        if values is not None and not all(math.isfinite(v) for v in values):
            raise ValueError("bound values must be finite")
        return values

    def check_sandwich(self) -> None:
        if self.lower is None or self.upper is None:
            return
        for lam, lo, up in zip(self.lambdas, self.lower, self.upper):
            if lo > up * (1 + 1e-9):
                raise NumericalError(
                    f"lower bound exceeds upper bound at lambda={lam}",
                    diagnostics={"lambda": lam, "lower": lo, "upper": up},
                )

    def merged(self, other: "DhatCurve") -> "DhatCurve":
        update: Dict[str, Any] = {
            "lower": self.lower if self.lower is not None else other.lower,
            "upper": self.upper if self.upper is not None else other.upper,
            "lower_w": self.lower_w if self.lower_w is not None else other.lower_w,
            "upper_w": self.upper_w if self.upper_w is not None else other.upper_w,
            "regime": self.regime or other.regime,
            "constants": {**other.constants, **self.constants},
            "pieces": {**other.pieces, **self.pieces},
        }
        return self.model_copy(update=update)

    def to_frame(self) -> pd.DataFrame:
        n = len(self.lambdas)
        return pd.DataFrame({
            "lambda": self.lambdas,
            "lower": self.lower if self.lower is not None else [np.nan] * n,
            "upper": self.upper if self.upper is not None else [np.nan] * n,
            "lower_w": self.lower_w if self.lower_w is not None else [np.nan] * n,
            "upper_w": self.upper_w if self.upper_w is not None else [np.nan] * n,
        })


def _fan_out(func: Callable[[float], Any], lambdas: np.ndarray) -> List[Any]:
    threads = get_settings().threads
    if threads == 1 or len(lambdas) == 1:
        return [func(float(lam)) for lam in lambdas]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(func, (float(lam) for lam in lambdas)))


def _wrap(t: np.ndarray) -> np.ndarray:
    return (t + np.pi) % (2 * np.pi) - np.pi


def dirichlet_kernel_sq(t: np.ndarray, M: int) -> np.ndarray:
    """|sum_{r < M} e^{irt}|^2"""
    t = np.asarray(t, dtype=float)
    half = np.sin(t / 2)
    out = np.full(t.shape, float(M * M))
    mask = np.abs(half) > 1e-12
    out[mask] = (np.sin(M * t[mask] / 2) / half[mask]) ** 2
    return out


def aliased_weight(points: np.ndarray, weight: Callable[..., np.ndarray], M: int) -> np.ndarray:
    """
    Omega(s) = M^{-d} sum_m w(t_m) prod_i |D_M(t_m,i)|^2 with t_m = (s + 2 pi m)/M
    Integrating |G(s)|^2 Omega(s) over the coarse torus gives the fine-lattice
    quadratic form of a function constant on blocks of side M.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    d = pts.shape[1]
    shifts = 2 * np.pi * np.arange(M)
    grids = [_wrap((pts[:, i, None] + shifts) / M) for i in range(d)]
    kernels = [dirichlet_kernel_sq(g, M) for g in grids]
    if d == 1:
        return np.mean(weight(grids[0]) * kernels[0], axis=1)
    if d == 2:
        total = np.zeros(pts.shape[0])
        for m in range(M):
            t1 = grids[0][:, m:m + 1]
            total += np.sum(weight(t1, grids[1]) * kernels[0][:, m:m + 1] * kernels[1], axis=1)
        return total / M ** 2
    raise InputError("block penalties are implemented for d <= 2")


def sinh_nodes(scale: float, upper: float, count: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on [0, upper] clustered at the scale of a peak at 0"""
    x, weights = np.polynomial.legendre.leggauss(count)
    top = math.asinh(upper / scale)
    xi = (x + 1) * top / 2
    nodes = scale * np.sinh(xi)
    return nodes, weights * scale * np.cosh(xi) * top / 2


def _panel_nodes(low: float, high: float, panels: int, count: int) -> Tuple[np.ndarray, np.ndarray]:
    x, weights = np.polynomial.legendre.leggauss(count)
    edges = np.linspace(low, high, panels + 1)
    nodes, out = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append((x + 1) * (b - a) / 2 + a)
        out.append(weights * (b - a) / 2)
    return np.concatenate(nodes), np.concatenate(out)


class TestFunctionFamily(BaseModel):
    """
    Block-constant test functions F(x) = H(j(x)) with H the inverse Fourier
    transform of a closed-form profile G. One family per divergent regime:
    d1_generic (degree 2, blocks of 2K~), d1_inflection (degree 3, gap pairs,
    blocks of 2K~), d2_generic (degree 2, relative vectors, blocks of 2K~+1).
    """

    model_config = ConfigDict(frozen=True)
    __test__ = False

    regime: str
    block: int = Field(..., ge=1, description="Cell size K~ = 10K")
    direction: Tuple[float, float] = Field((1.0, 0.0), description="Unit drift direction (d = 2 only)")

    @field_validator("regime")
    @classmethod
    def _known(cls, value: str) -> str:
        if value not in FAMILY_REGIMES:
            raise ValueError(f"no test function family for regime {value!r}")
        return value

    @classmethod
    def for_model(cls, model: Model, ctx: DensityContext, axis: int = 0) -> "TestFunctionFamily":
        report = classify_regime(model, ctx, axis)
        if report.regime not in FAMILY_REGIMES:
            raise InputError(f"regime {report.regime} is diffusive; no divergent lower bound applies")
        direction = (1.0, 0.0)
        if model.d == 2:
            j2 = np.array([a.j2 for a in report.axes])
            direction = tuple(j2 / np.linalg.norm(j2))  # type: ignore[assignment]
        return cls(regime=report.regime, block=BLOCK_FACTOR * model.K, direction=direction)

    @property
    def degree(self) -> int:
        return 3 if self.regime == "d1_inflection" else 2

    @property
    def d(self) -> int:
        return 2 if self.regime == "d2_generic" else 1

    @property
    def M(self) -> int:
        return 2 * self.block + 1 if self.regime == "d2_generic" else 2 * self.block

    def block_index(self, key: Any) -> Tuple[int, ...]:
        if self.regime == "d1_generic":
            return ((key[0] + self.block) // self.M,)
        if self.regime == "d1_inflection":
            return tuple((g + self.block) // self.M for g in key)
        z = tuple(b - a for a, b in zip(key[0], key[1]))
        return tuple((c + self.block) // self.M for c in z)

    def profile(self, lam: float, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.regime == "d1_generic":
            s = pts.reshape(-1)
            return np.where(np.abs(s) <= 0.5, 1.0 / (lam + lam ** -0.5 * s ** 2), 0.0)
        r2 = np.sum(pts ** 2, axis=-1)
        if self.regime == "d1_inflection":
            inside = (r2 >= lam) & (r2 <= 0.5)
            safe = np.where(inside, r2, 0.25)
            return np.where(inside, -1.0 / (safe * np.log(safe)), 0.0)
        a, b = self.direction
        u = a * pts[..., 0] + b * pts[..., 1]
        v = -b * pts[..., 0] + a * pts[..., 1]
        return np.where(r2 <= 0.5, 1.0 / (lam + v ** 2 + abs(math.log(lam)) * u ** 2), 0.0)

    def _nodes(self, lam: float) -> Tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes covering the profile support, with weights including (2 pi)^{-d}"""
        if self.regime == "d1_generic":
            s, w = sinh_nodes(lam ** 0.75, 0.5, LINE_NODES)
            return np.concatenate([s, -s]), np.concatenate([w, w]) / (2 * math.pi)
        if self.regime == "d1_inflection":
            u, wu = _panel_nodes(0.5 * math.log(lam), 0.5 * math.log(0.5), RADIAL_PANELS, GAUSS_NODES)
            theta = 2 * math.pi * np.arange(ANGLES) / ANGLES
            r = np.exp(u)
            pts = np.stack([np.outer(r, np.cos(theta)).ravel(), np.outer(r, np.sin(theta)).ravel()], axis=1)
            weights = np.outer(wu * r ** 2, np.full(ANGLES, 2 * math.pi / ANGLES)).ravel()
            return pts, weights / (2 * math.pi) ** 2
        L = abs(math.log(lam))
        a, b = self.direction
        us, wus = sinh_nodes(math.sqrt(lam / L), math.sqrt(0.5), PLANE_NODES)
        pts, weights = [], []
        for u, wu in zip(us, wus):
            top = math.sqrt(max(0.5 - u * u, 0.0))
            if top == 0.0:
                continue
            vs, wvs = sinh_nodes(math.sqrt(lam + L * u * u), top, PLANE_NODES)
            for sign_u in (1.0, -1.0):
                for sign_v in (1.0, -1.0):
                    uu, vv = sign_u * u, sign_v * vs
                    pts.append(np.stack([a * uu - b * vv, b * uu + a * vv], axis=1))
                    weights.append(wu * wvs)
        return np.concatenate(pts), np.concatenate(weights) / (2 * math.pi) ** 2

    def center_value(self, lam: float) -> float:
        """H(0), the value of the test function on the block holding the origin"""
        if self.regime == "d1_inflection":
            return math.log(abs(math.log(lam)) / math.log(2)) / (4 * math.pi)
        if self.regime == "d1_generic":
            a = lam ** -0.5
            return math.atan(0.5 * math.sqrt(a / lam)) / (math.pi * math.sqrt(lam * a))
        L = abs(math.log(lam))

        def inner(u: float) -> float:
            c = lam + L * u * u
            top = math.sqrt(max(0.5 - u * u, 0.0))
            return 2 * math.atan(top / math.sqrt(c)) / math.sqrt(c)

        value, _ = integrate.quad(inner, 0.0, math.sqrt(0.5), points=[math.sqrt(lam / L)], limit=200)
        return 2 * value / (2 * math.pi) ** 2

    def block_value(self, lam: float, j: Tuple[int, ...]) -> float:
        """H(j) = (2 pi)^{-d} int G(s) cos(j.s) ds"""
        if not any(j):
            return self.center_value(lam)
        pts, weights = self._nodes(lam)
        phase = pts * j[0] if self.d == 1 else pts @ np.array(j, dtype=float)
        return float(np.sum(weights * self.profile(lam, pts) * np.cos(phase)))

    def realize(self, lam: float, blocks: int = 2) -> ReducedFunction:
        """The reduced test function on all classes within the given number of blocks"""
        span = (2 * blocks + 1) * self.block
        cache: Dict[Tuple[int, ...], float] = {}

        def value(key: Any) -> float:
            j = self.block_index(key)
            if j not in cache:
                cache[j] = self.block_value(lam, j)
            return cache[j]

        coeffs: Dict[Any, float] = {}
        if self.regime == "d1_generic":
            for g in range(span):
                coeffs[(g,)] = value((g,))
        elif self.regime == "d1_inflection":
            for g1 in range(span):
                for g2 in range(span):
                    coeffs[(g1, g2)] = value((g1, g2))
        else:
            zero = (0, 0)
            for z1 in range(-span, span + 1):
                for z2 in range(-span, span + 1):
                    if (z1, z2) == zero:
                        continue
                    key = canonical((zero, (z1, z2)))[0]
                    coeffs[key] = value(key)
        return ReducedFunction(self.degree, self.d, coeffs)

    def check_membership(self, f: ReducedFunction) -> None:
        """Block constancy on cells [i K~, (i+1) K~ - 1] and the required symmetries"""
        cells: Dict[Tuple[int, ...], float] = {}
        for key, value in f.items():
            if self.regime == "d2_generic":
                z = tuple(b - a for a, b in zip(key[0], key[1]))
                cell = tuple((c + self.block) // self.M for c in z)
                mirror = canonical(((0, 0), tuple(-c for c in z)))[0]
                if mirror in f.coeffs and f.coeffs[mirror] != value:
                    raise StructuralError("test function is not even in the relative position", counterexample=key)
            else:
                cell = tuple(g // self.block for g in key)
                if self.regime == "d1_inflection":
                    swapped = (key[1], key[0])
                    if swapped in f.coeffs and f.coeffs[swapped] != value:
                        raise StructuralError("test function is not symmetric in its gaps", counterexample=key)
            if cell in cells and cells[cell] != value:
                raise StructuralError("test function is not constant on a cell", counterexample=key)
            cells[cell] = value

    def penalty(self, lam: float) -> float:
        """Fourier upper bound on the quadratic form of the realised test function"""
        pts, weights = self._nodes(lam)
        G2 = self.profile(lam, pts) ** 2
        if self.regime == "d1_generic":
            def weight(t: np.ndarray) -> np.ndarray:
                return lam + t ** 2 + t ** 2 / math.sqrt(lam)

            return float(np.sum(weights * G2 * aliased_weight(pts, weight, self.M)))

        if self.regime == "d2_generic":
            L = abs(math.log(lam))
            a, b = self.direction

            def weight2(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
                return lam + t1 ** 2 + t2 ** 2 + L * (a * t1 + b * t2) ** 2

            return float(np.sum(weights * G2 * aliased_weight(pts, weight2, self.M)))

        def quadratic(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
            return lam + t1 ** 2 + t2 ** 2

        def logarithmic(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
            r2 = t1 ** 2 + t2 ** 2
            return r2 * np.abs(np.log(lam + r2))

        T1 = float(np.sum(weights * G2 * aliased_weight(pts, quadratic, self.M)))
        T2 = float(np.sum(weights * G2 * aliased_weight(pts, logarithmic, self.M)))
        T3 = self._slice_penalty(lam)
        logger.debug(f"Inflection penalty at lambda={lam}: T1={T1:.4e} T2={T2:.4e} T3={T3:.4e}")
        return T1 + T2 + T3

    def _slice(self, lam: float, s1: float) -> float:
        top2 = 0.5 - s1 * s1
        if top2 <= 0:
            return 0.0
        low = math.sqrt(max(lam - s1 * s1, 0.0))
        high = math.sqrt(top2)
        if low >= high:
            return 0.0

        def integrand(s2: float) -> float:
            r2 = s1 * s1 + s2 * s2
            return -1.0 / (r2 * math.log(r2))

        value, _ = integrate.quad(integrand, low, high, limit=200)
        return 2 * value / (2 * math.pi)

    def _slice_penalty(self, lam: float) -> float:
        s, w = sinh_nodes(math.sqrt(lam), math.sqrt(0.5), LINE_NODES // 4)
        sliced = np.array([self._slice(lam, x) for x in s])
        omega = aliased_weight(s, np.abs, self.M)
        return float(2 * np.sum(w * sliced ** 2 * omega) / (2 * math.pi))


def _degree_parts(f, d: int) -> List[ReducedFunction]:
    degrees = sorted({len(key) for key, _ in f.items() if key})
    return [dimension_reduce(f, n) for n in degrees]


def upper_pieces(w, d: int, c1: float, lam: float) -> Dict[int, float]:
    """(|s_n| sqrt(G_n(lambda/c1)) + cost_n)^2 / c1 per degree n"""
    mu = lam / c1
    out: Dict[int, float] = {}
    for part in _degree_parts(w, d):
        total = float(part.total())
        cost = sum(abs(float(value)) * class_distance(key, part.n, d) for key, value in part.items())
        G = green_bound(part.n, d, mu) if abs(total) > ZERO_THRESHOLD else 0.0
        out[part.n] = (abs(total) * math.sqrt(G) + cost) ** 2 / c1
    return out


def v_term_bound(v, d: int, c1: float) -> float:
    """lambda-independent bound on <<v, (lambda - L)^{-1} v>>; v must have zero reduced sums"""
    total = 0.0
    for part in _degree_parts(v, d):
        s = float(part.total())
        scale = sum(abs(float(value)) for _, value in part.items()) or 1.0
        if abs(s) > ZERO_THRESHOLD * max(scale, 1.0):
            raise NumericalError(
                f"antisymmetric flux has nonzero reduced sum in degree {part.n}",
                diagnostics={"degree": part.n, "sum": s},
            )
        cost = sum(abs(float(value)) * class_distance(key, part.n, d) for key, value in part.items())
        total += cost ** 2
    return total / c1


def upper_bound_dhat(bundle: FluxBundle, grid: LambdaGrid, model: Model, axis: int = 0) -> DhatCurve:
    """Upper curve C_ii + (2/chi) * upper bound of the w-term"""
    logger.info(f"Upper bound for {bundle.model_name}, axis {axis}, {grid.count} lambdas")
    constants = comparison_constants(model)
    chi = float(bundle.ctx.chi)
    C = float(bundle.C[axis])
    lambdas = grid.values()
    pieces = _fan_out(lambda lam: upper_pieces(bundle.w[axis], bundle.d, constants.c1, lam), lambdas)
    upper_w = [sum(p.values()) for p in pieces]
    upper = [C + 2 / chi * value for value in upper_w]
    degrees = sorted({n for p in pieces for n in p})
    return DhatCurve(
        model_name=bundle.model_name,
        rho=float(bundle.ctx.rho),
        axis=axis,
        C=C,
        lambdas=[float(x) for x in lambdas],
        upper=upper,
        upper_w=upper_w,
        constants={"c1": constants.c1, "c2": constants.c2, "c_min": constants.c_min},
        pieces={f"degree_{n}": [p.get(n, 0.0) for p in pieces] for n in degrees},
    )


def penalty_constant(model: Model, ctx: DensityContext, c1: float, c2: float) -> Tuple[float, float]:
    """P = max(1, c2) + max(1, 1/c1) W_A^2 with W_A the total block weight of A"""
    A = decompose_asymmetric(model, ctx)
    W_A = sum(abs(float(block.weight)) for block in A.blocks)
    return max(1.0, c2) + max(1.0, 1.0 / c1) * W_A ** 2, W_A


def lower_bound_dhat(
    model: Model,
    ctx: DensityContext,
    grid: LambdaGrid,
    family: Optional[TestFunctionFamily] = None,
    axis: int = 0,
    bundle: Optional[FluxBundle] = None,
) -> DhatCurve:
    """Lower curve C_ii + (2/chi) lin^2 / (P * penalty) - (2/chi) V"""
    regime = classify_regime(model, ctx, axis).regime
    if family is not None and family.regime != regime:
        raise InputError(f"test function family {family.regime} does not match regime {regime}")
    bundle = bundle or microscopic_flux(model, ctx)
    constants = comparison_constants(model)
    chi = float(ctx.chi)
    C = float(bundle.C[axis])
    V = v_term_bound(bundle.v[axis], model.d, constants.c1)
    P, W_A = penalty_constant(model, ctx, constants.c1, constants.c2)
    lambdas = grid.values()
    logger.info(f"Lower bound for {model.name} ({regime}), axis {axis}, {grid.count} lambdas")

    if family is None and regime in FAMILY_REGIMES:
        family = TestFunctionFamily.for_model(model, ctx, axis)

    if family is None:
        variational = [0.0] * len(lambdas)
    else:
        target = dimension_reduce(bundle.w[axis], family.degree)
        chosen = family

        def one(lam: float) -> float:
            cache: Dict[Tuple[int, ...], float] = {}
            lin = 0.0
            for key, value in target.items():
                j = chosen.block_index(key)
                if j not in cache:
                    cache[j] = chosen.block_value(lam, j)
                lin += float(value) * cache[j]
            if abs(lin) <= ZERO_THRESHOLD:
                logger.warning(f"Linear term vanishes at lambda={lam}; lower bound reduces to zero")
                return 0.0
            return lin * lin / (P * chosen.penalty(lam))

        variational = _fan_out(one, lambdas)

    lower = [C + 2 / chi * value - 2 / chi * V for value in variational]
    return DhatCurve(
        model_name=model.name,
        rho=float(ctx.rho),
        axis=axis,
        C=C,
        lambdas=[float(x) for x in lambdas],
        lower=lower,
        lower_w=[float(value) for value in variational],
        regime=regime,
        constants={"c1": constants.c1, "c2": constants.c2, "P": P, "W_A": W_A, "V": V},
    )


def dhat_bounds(model: Model, ctx: DensityContext, grid: LambdaGrid, axis: int = 0) -> DhatCurve:
    """Both curves on one grid, checked for the sandwich"""
    bundle = microscopic_flux(model, ctx)
    upper = upper_bound_dhat(bundle, grid, model, axis)
    lower = lower_bound_dhat(model, ctx, grid, axis=axis, bundle=bundle)
    curve = lower.merged(upper)
    curve.check_sandwich()
    return curve


def _state_bits(n_sites: int) -> np.ndarray:
    states = np.arange(1 << n_sites, dtype=np.int64)
    return ((states[:, None] >> np.arange(n_sites)) & 1).astype(float)


def _torus_observable(p: poly.Poly, L: int, d: int, bits: np.ndarray) -> np.ndarray:
    """sum_x tau_x p evaluated on every configuration of the periodic box"""
    out = np.zeros(bits.shape[0])
    for x in torus_sites(L, d):
        shifted = poly.on_torus(poly.shift(p, x), L)
        for key, value in shifted.items():
            term = np.full(bits.shape[0], float(value))
            for site in key:
                term = term * bits[:, flat_index(site, L)]
            out += term
    return out


def gk_exact_torus(model: Model, rho: Any, L: int, lambdas: List[float], axis: int = 0) -> List[float]:
    """
    Exact finite-volume D-hat on the periodic box of side L:
    C_ii + (2/chi)(1/L^d) [<Phi_w, (lambda - Q)^{-1} Phi_w>_pi - same for v]
    """
    ctx = rho if isinstance(rho, DensityContext) else DensityContext(rho=rho)
    bundle = microscopic_flux(model, ctx)
    Q = torus_generator(model, L)
    n_sites = L ** model.d
    bits = _state_bits(n_sites)
    r = float(ctx.rho)
    counts = bits.sum(axis=1)
    pi = r ** counts * (1 - r) ** (n_sites - counts)
    phi_w = _torus_observable(bundle.w[axis].to_monomials(), L, model.d, bits)
    phi_v = _torus_observable(bundle.v[axis].to_monomials(), L, model.d, bits)
    # phi_w is left as is, matching the uncentred simulation estimator; v has zero reduced sum per degree
    phi_v = phi_v - float(pi @ phi_v)
    identity = sparse.identity(Q.shape[0], format="csc")
    chi = float(ctx.chi)
    out = []
    for lam in lambdas:
        matrix = (lam * identity - Q).tocsc()
        u_w = splinalg.spsolve(matrix, phi_w)
        u_v = splinalg.spsolve(matrix, phi_v)
        w_term = float(pi @ (phi_w * u_w)) / n_sites
        v_term = float(pi @ (phi_v * u_v)) / n_sites
        out.append(float(bundle.C[axis]) + 2 / chi * (w_term - v_term))
        logger.debug(f"Exact torus D-hat at lambda={lam}: w={w_term:.6e}, v={v_term:.6e}")
    return out
