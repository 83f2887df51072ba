"""
Density-free occupancy polynomials
A polynomial maps site sets A to the coefficient of eta_A = prod_{x in A} eta_x.
Occupancies are 0/1, so eta_x^2 = eta_x and products are set unions.
"""

from collections import defaultdict
from fractions import Fraction
from typing import Any, Dict, Iterable, Mapping, Sequence, Tuple, Union

import numpy as np

from .sites import Site, SiteSet, normalize, sup_norm, translate, wrap

Scalar = Union[Fraction, float]
Poly = Dict[SiteSet, Scalar]

CUTOFF = 1e-14


def is_zero(value: Any) -> bool:
    if isinstance(value, (int, Fraction)):
        return value == 0
    return abs(value) < CUTOFF


def clean(poly: Mapping[SiteSet, Scalar]) -> Poly:
    return {key: value for key, value in poly.items() if not is_zero(value)}


def constant(value: Scalar) -> Poly:
    return clean({(): value})


def monomial(sites: Iterable[Site], coefficient: Scalar = 1) -> Poly:
    return clean({normalize(sites): coefficient})


def add(*polys: Mapping[SiteSet, Scalar]) -> Poly:
    out: Dict[SiteSet, Scalar] = defaultdict(int)
    for poly in polys:
        for key, value in poly.items():
            out[key] += value
    return clean(out)


def scale(poly: Mapping[SiteSet, Scalar], factor: Scalar) -> Poly:
    return clean({key: value * factor for key, value in poly.items()})


def sub(p: Mapping[SiteSet, Scalar], q: Mapping[SiteSet, Scalar]) -> Poly:
    return add(p, scale(q, -1))


def multiply(p: Mapping[SiteSet, Scalar], q: Mapping[SiteSet, Scalar]) -> Poly:
    out: Dict[SiteSet, Scalar] = defaultdict(int)
    for a, ca in p.items():
        for b, cb in q.items():
            out[normalize(a + b)] += ca * cb
    return clean(out)


def shift(poly: Mapping[SiteSet, Scalar], x: Site) -> Poly:
    """Poly whose monomial eta_A becomes eta_{A+x}"""
    return {translate(key, x): value for key, value in poly.items()}


def one_minus(site: Site) -> Poly:
    return {(): 1, (site,): -1}


def degree(poly: Mapping[SiteSet, Scalar]) -> int:
    return max((len(key) for key in poly), default=0)


def support(poly: Mapping[SiteSet, Scalar]) -> SiteSet:
    return normalize(site for key in poly for site in key)


def radius(poly: Mapping[SiteSet, Scalar]) -> int:
    return max((sup_norm(site) for site in support(poly)), default=0)


def evaluate(poly: Mapping[SiteSet, Scalar], occupied: Mapping[Site, int]) -> Scalar:
    total: Scalar = 0
    for key, value in poly.items():
        if all(occupied.get(site, 0) for site in key):
            total += value
    return total


def expectation(poly: Mapping[SiteSet, Scalar], rho: Any) -> Any:
    """E under product Bernoulli(rho); rho may be a number or a sympy symbol"""
    total: Any = 0
    for key, value in poly.items():
        total += value * rho ** len(key)
    return total


def on_torus(poly: Mapping[SiteSet, Scalar], L: int) -> Poly:
    """Reduce every site modulo L; sets may merge since eta_x^2 = eta_x"""
    out: Dict[SiteSet, Scalar] = defaultdict(int)
    for key, value in poly.items():
        out[normalize(wrap(site, L) for site in key)] += value
    return clean(out)


def mobius(window: Sequence[Site], values: Sequence[Scalar]) -> Poly:
    """
    Polynomial of a truth table over a window
    Bit i of a pattern index is the occupancy of window[i].
    """
    n = len(window)
    coeffs = list(values)
    # subset-sum inversion over the boolean lattice
    for bit in range(n):
        step = 1 << bit
        for index in range(1 << n):
            if index & step:
                coeffs[index] = coeffs[index] - coeffs[index ^ step]
    out: Poly = {}
    for index, value in enumerate(coeffs):
        if is_zero(value):
            continue
        out[normalize(window[i] for i in range(n) if index >> i & 1)] = value
    return out


def truth_table(poly: Mapping[SiteSet, Scalar], window: Sequence[Site]) -> Tuple[Scalar, ...]:
    """Values of the polynomial on every pattern of the window"""
    position = {site: i for i, site in enumerate(window)}
    masks = []
    for key, value in poly.items():
        mask = 0
        for site in key:
            mask |= 1 << position[site]
        masks.append((mask, value))
    table = []
    for index in range(1 << len(window)):
        total: Scalar = 0
        for mask, value in masks:
            if index & mask == mask:
                total += value
        table.append(total)
    return tuple(table)


def table_array(poly: Mapping[SiteSet, Scalar], window: Sequence[Site]) -> np.ndarray:
    """Vectorised float truth table, for windows too wide for the exact loop"""
    n = len(window)
    position = {site: i for i, site in enumerate(window)}
    indices = np.arange(1 << n, dtype=np.int64)
    out = np.zeros(1 << n, dtype=float)
    for key, value in poly.items():
        mask = 0
        for site in key:
            mask |= 1 << position[site]
        out += float(value) * ((indices & mask) == mask)
    return out
