"""
Lattice sites and finite site sets
Sites are integer tuples; finite sets are stored as sorted tuples of sites
"""

import itertools
from typing import Iterable, List, Sequence, Tuple

Site = Tuple[int, ...]
SiteSet = Tuple[Site, ...]


def origin(d: int) -> Site:
    return (0,) * d


def add(a: Site, b: Site) -> Site:
    return tuple(x + y for x, y in zip(a, b))


def sub(a: Site, b: Site) -> Site:
    return tuple(x - y for x, y in zip(a, b))


def neg(a: Site) -> Site:
    return tuple(-x for x in a)


def scale(a: Site, k: int) -> Site:
    return tuple(k * x for x in a)


def sup_norm(a: Site) -> int:
    return max((abs(x) for x in a), default=0)


def l1_norm(a: Site) -> int:
    return sum(abs(x) for x in a)


def unit(d: int, axis: int) -> Site:
    return tuple(1 if i == axis else 0 for i in range(d))


def unit_vectors(d: int) -> List[Site]:
    return [unit(d, i) for i in range(d)]


def normalize(sites: Iterable[Site]) -> SiteSet:
    """Sorted, duplicate-free tuple representation of a site set"""
    return tuple(sorted(set(sites)))


def translate(sset: SiteSet, x: Site) -> SiteSet:
    # translation preserves lexicographic order
    return tuple(add(s, x) for s in sset)


def canonical(sset: SiteSet) -> Tuple[SiteSet, Site]:
    """
    Canonical translate of a site set and the offset it was shifted by

    The representative is the translate whose lexicographically smallest
    site sits at the origin; ``sset == translate(rep, offset)``.
    """
    if not sset:
        return (), ()
    offset = sset[0]
    return tuple(sub(s, offset) for s in sset), offset


def to_gaps(rep: SiteSet) -> Tuple[int, ...]:
    """Gap coordinates of a one dimensional set: (x2-x1-1, x3-x2-1, ...)"""
    xs = [s[0] for s in rep]
    return tuple(b - a - 1 for a, b in zip(xs, xs[1:]))


def from_gaps(gaps: Sequence[int]) -> SiteSet:
    position = 0
    sites = [(0,)]
    for gap in gaps:
        position += gap + 1
        sites.append((position,))
    return tuple(sites)


def spread(sset: SiteSet) -> int:
    """Largest coordinate extent of a set (its sup-norm diameter)"""
    if not sset:
        return 0
    d = len(sset[0])
    return max(max(s[i] for s in sset) - min(s[i] for s in sset) for i in range(d))


def wrap(site: Site, L: int) -> Site:
    return tuple(x % L for x in site)


def flat_index(site: Site, L: int) -> int:
    index = 0
    for x in site:
        index = index * L + (x % L)
    return index


def torus_sites(L: int, d: int) -> List[Site]:
    return [tuple(p) for p in itertools.product(range(L), repeat=d)]


def subsets(sset: SiteSet) -> Iterable[SiteSet]:
    """All subsets of a (sorted) site set, each again sorted"""
    for r in range(len(sset) + 1):
        yield from itertools.combinations(sset, r)


def half_space(y: Site) -> bool:
    """True when the first nonzero coordinate of y is positive"""
    for x in y:
        if x != 0:
            return x > 0
    return False
