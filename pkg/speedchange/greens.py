"""
Resolvent bounds for the free symmetric exclusion on reduced classes
G(n, d, mu) bounds <<e, (mu - S0)^{-1} e>> for the unit e at the reference
class of degree n; dist() is the S0 path cost from any class to it.
"""

import itertools
import logging
import math
from collections import defaultdict
from functools import lru_cache
from typing import Dict, FrozenSet, List, Sequence, Tuple

import numpy as np
from scipy import integrate, special

from .errors import NumericalError
from .sites import Site, l1_norm, neg, sub, unit

logger = logging.getLogger(__name__)

QUAD_LIMIT = 400
RETURN_HORIZON_1D = 400.0
RETURN_HORIZON_2D = 200.0
RETURN_HORIZON_3D = 20.0

Gaps = Tuple[int, ...]


def fold(x: int) -> int:
    """Reflection of Z onto Z_+ about -1/2"""
    return x if x >= 0 else -x - 1


def _quad(func, a: float, b: float, points: Sequence[float] = ()) -> float:
    inner = [p for p in points if a < p < b]
    value, error = integrate.quad(func, a, b, points=inner or None, limit=QUAD_LIMIT)
    if not math.isfinite(value):
        raise NumericalError("quadrature returned a non-finite value", diagnostics={"a": a, "b": b})
    logger.debug(f"quad on [{a}, {b}]: {value:.6e} +- {error:.1e}")
    return value


def line_green(mu: float, k: int) -> float:
    """(mu - Q)^{-1}(0, k) for the walk on Z with rate 2 per direction"""
    a, b = mu + 4.0, 4.0
    root = math.sqrt(a * a - b * b)
    zeta = b / (a + root)
    return zeta ** abs(k) / root


def triangular_green(nu: float, k: Tuple[int, int]) -> float:
    """Resolvent of three free particles in gap coordinates, between gap vectors 0 and k"""
    k1, k2 = k

    def integrand(t: float) -> float:
        a = nu + 6.0 - 2.0 * math.cos(t)
        b = 4.0 * math.cos(t / 2.0)
        root = math.sqrt(a * a - b * b)
        zeta = b / (a + root)
        return math.cos((k1 + k2 / 2.0) * t) * zeta ** abs(k2) / root

    return _quad(integrand, 0.0, math.pi, [math.sqrt(nu)]) / math.pi


def planar_green(nu: float, k: Tuple[int, int]) -> float:
    """(nu - Q)^{-1}(0, k) for the walk on Z^2 with rate 2 per direction"""
    k1, k2 = k

    def integrand(t: float) -> float:
        a = nu + 8.0 - 4.0 * math.cos(t)
        b = 4.0
        root = math.sqrt(a * a - b * b)
        zeta = b / (a + root)
        return math.cos(k1 * t) * zeta ** abs(k2) / root

    return _quad(integrand, 0.0, math.pi, [math.sqrt(nu)]) / math.pi


def gap_move_displacements(n: int) -> List[Gaps]:
    """Gap changes of the 2n free single-particle moves"""
    moves = []
    for k in range(n):
        for sign in (1, -1):
            m = [0] * (n - 1)
            if k > 0:
                m[k - 1] += sign
            if k < n - 1:
                m[k] -= sign
            moves.append(tuple(m))
    return moves


def _exclusion_moves(state: Gaps) -> List[Gaps]:
    n = len(state) + 1
    out = []
    for k in range(n):
        for sign in (1, -1):
            if sign == 1 and not (k == n - 1 or state[k] > 0):
                continue
            if sign == -1 and not (k == 0 or state[k - 1] > 0):
                continue
            h = list(state)
            if k > 0:
                h[k - 1] += sign
            if k < n - 1:
                h[k] -= sign
            out.append(tuple(h))
    return out


def path_length_bound(n: int) -> int:
    return max(min(k, n - k) + min(k + 1, n - k - 1) for k in range(0, n - 1))


def _raise_path(state: Gaps, j: int) -> List[Gaps]:
    """States visited when gap j (1-based) grows by one through exclusion moves"""
    n = len(state) + 1
    path = [state]
    current = list(state)
    if j <= n - j:
        # particles 1..j step left in turn
        for i in range(1, j + 1):
            if i > 1:
                current[i - 2] -= 1
            if i <= n - 1:
                current[i - 1] += 1
            path.append(tuple(current))
    else:
        # particles n..j+1 step right in turn
        for i in range(n, j, -1):
            current[i - 2] += 1
            if i <= n - 1:
                current[i - 1] -= 1
            path.append(tuple(current))
    return path


def _route(source: Gaps, delta: Gaps) -> List[Gaps]:
    target = tuple(s + d for s, d in zip(source, delta))
    if target in _exclusion_moves(source):
        return [source, target]
    path = [source]
    current = source
    for j, step in enumerate(delta, start=1):
        for _ in range(max(step, 0)):
            leg = _raise_path(current, j)
            path.extend(leg[1:])
            current = leg[-1]
    for j, step in enumerate(delta, start=1):
        for _ in range(max(-step, 0)):
            lowered = tuple(c - (1 if i == j - 1 else 0) for i, c in enumerate(current))
            leg = list(reversed(_raise_path(lowered, j)))
            path.extend(leg[1:])
            current = leg[-1]
    return path


@lru_cache(maxsize=None)
def fold_congestion(n: int) -> float:
    """
    Congestion of routing folded free moves through exclusion moves on
    gap vectors; bounds the folded free Dirichlet form by B times the
    reduced exclusion Dirichlet form.
    """
    ell = path_length_bound(n)
    top = 3 * ell + 3
    limit = 2 * ell + 2
    moves = gap_move_displacements(n)
    load: Dict[FrozenSet[Gaps], float] = defaultdict(float)
    for source in itertools.product(range(top + 1), repeat=n - 1):
        for signs in itertools.product((0, 1), repeat=n - 1):
            x = [a if s == 0 else -a - 1 for a, s in zip(source, signs)]
            for m in moves:
                image = tuple(fold(xi + mi) for xi, mi in zip(x, m))
                delta = tuple(i - a for i, a in zip(image, source))
                if not any(delta):
                    continue
                path = _route(source, delta)
                for u, v in zip(path, path[1:]):
                    load[frozenset((u, v))] += 0.5 * (len(path) - 1)
    inner = [value for edge, value in load.items() if all(max(state) <= limit for state in edge)]
    B = max(inner)
    logger.debug(f"Fold congestion for n={n}: {B}")
    return B


def crude_congestion(n: int) -> float:
    ell = path_length_bound(n)
    return 0.5 * 2 ** (n - 1) * (2 * n) * ell * (2 * ell + 1) ** (n - 1)


def return_integral_1d(n: int, horizon: float = RETURN_HORIZON_1D) -> float:
    """int_0^inf sum_z p_t(z)^n dt for n free walkers with unit rate per direction"""
    if n < 4:
        raise ValueError("the return integral diverges for fewer than four walkers")
    radius = int(6 * math.sqrt(2 * horizon)) + 5
    z = np.arange(-radius, radius + 1)

    def integrand(t: float) -> float:
        return float(np.sum(special.ive(z, 2 * t) ** n))

    body = _quad(integrand, 0.0, horizon, [1.0, 10.0])
    h = (n - 1) / 2
    tail = n ** -0.5 * (4 * math.pi) ** (-h) * horizon ** (1 - h) / (h - 1)
    return body + tail


def _lattice_return(d: int, k: Site, horizon: float) -> float:
    def integrand(t: float) -> float:
        return float(np.prod(special.ive(np.array(k), 4 * t)))

    body = _quad(integrand, 0.0, horizon, [1.0])
    h = d / 2
    tail = (4 * math.pi) ** (-h) * horizon ** (1 - h) / (h - 1)
    return body + tail


def reference_class(n: int, d: int) -> Tuple[Site, ...]:
    """Sites of the reference class the bounds are centred on"""
    if d == 1:
        return tuple((k,) for k in range(n))
    e1 = unit(d, 0)
    if n == 2:
        return (tuple(0 for _ in range(d)), e1)
    return tuple(tuple(2 * k * c for c in e1) for k in range(n))


def _multi_return(d: int, n: int) -> float:
    horizon = RETURN_HORIZON_2D if d == 2 else RETURN_HORIZON_3D
    anchors = [tuple(2 * k if i == 0 else 0 for i in range(d)) for k in range(n)]
    radius = 2 * (n - 1) + int(6 * math.sqrt(2 * horizon)) + 2
    axis = np.arange(-radius, radius + 1)

    def integrand(t: float) -> float:
        p1 = special.ive(axis, 2 * t)
        p = p1
        for _ in range(d - 1):
            p = np.multiply.outer(p, p1)
        h = np.zeros_like(p)
        for a in anchors:
            h += np.roll(p, shift=a, axis=tuple(range(d)))
        total = np.ones_like(p)
        for b in anchors:
            total *= np.roll(h, shift=tuple(-c for c in b), axis=tuple(range(d)))
        return float(total.sum())

    body = _quad(integrand, 0.0, horizon, [1.0, 10.0])
    h = d * (n - 1) / 2
    tail = n ** n * (2 * math.pi) ** (-h) * horizon ** (1 - h) / (h - 1)
    return body + tail


@lru_cache(maxsize=None)
def _constant_bound(n: int, d: int) -> float:
    if d == 1:
        B = fold_congestion(n) if n == 4 else crude_congestion(n)
        return B * return_integral_1d(n)
    if n == 2:
        horizon = RETURN_HORIZON_3D
        zero = tuple(0 for _ in range(d))
        shifted = tuple(2 if i == 0 else 0 for i in range(d))
        return 3 * (_lattice_return(d, zero, horizon) + _lattice_return(d, shifted, horizon))
    return _multi_return(d, n)


def green_bound(n: int, d: int, mu: float) -> float:
    """Upper bound on <<e, (mu - S0)^{-1} e>> at the reference class of degree n"""
    if mu <= 0:
        raise ValueError("mu must be positive")
    if n < 2:
        raise ValueError("degree must be at least 2")
    if d == 1 and n == 2:
        return line_green(mu, 0) + line_green(mu, 1)
    if d == 1 and n == 3:
        B = fold_congestion(3)
        nu = B * mu / 4
        total = 0.0
        corners = list(itertools.product((0, -1), repeat=2))
        for x in corners:
            for xp in corners:
                total += triangular_green(nu, (x[0] - xp[0], x[1] - xp[1]))
        return B / 16 * total
    if d == 2 and n == 2:
        nu = 2 * mu
        return 3 * (planar_green(nu, (0, 0)) + planar_green(nu, (2, 0)))
    return _constant_bound(n, d)


def class_distance(key, n: int, d: int) -> int:
    """Number of S0 moves from a reduced class to the reference class"""
    if n <= 1:
        return 0
    if d == 1:
        return sum(min(k, n - k) * g for k, g in enumerate(key, start=1))
    e1 = unit(d, 0)
    if n == 2:
        z = sub(key[1], key[0])
        if z == e1 or z == neg(e1):
            return 0
        return min(l1_norm(sub(z, e1)), l1_norm(sub(z, neg(e1)))) + 2
    sites = sorted(key)
    a = [s[0] for s in sites]
    b = [a[0]]
    for value in a[1:]:
        b.append(max(value, b[-1] + 2))
    cost = sum(bk - ak for ak, bk in zip(a, b))
    for axis in range(1, d):
        coords = [s[axis] for s in sites]
        median = int(np.median(coords)) if n % 2 else sorted(coords)[n // 2]
        cost += sum(abs(c - median) for c in coords)
    offsets = [bk - 2 * k for k, bk in enumerate(b)]
    center = sorted(offsets)[n // 2]
    cost += sum(abs(bk - (center + 2 * k)) for k, bk in enumerate(b))
    return cost
