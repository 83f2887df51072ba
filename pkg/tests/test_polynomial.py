"""
Test suite for occupancy polynomials and lattice-site helpers
"""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from speedchange import polynomial as poly
from speedchange.sites import canonical, flat_index, from_gaps, half_space, spread, to_gaps, translate

WINDOW = [(-1,), (2,), (3,)]

tables = st.lists(st.integers(0, 6), min_size=8, max_size=8)


@pytest.mark.unit
class TestSites:
    """Test cases for site-set helpers"""

    def test_canonical_translate(self):
        """Test that sets are shifted so their first site is the origin"""
        rep, offset = canonical(((2, 1), (3, 0)))
        assert rep == ((0, 0), (1, -1))
        assert translate(rep, offset) == ((2, 1), (3, 0))
        assert canonical(()) == ((), ())

    def test_gap_coordinates(self):
        """Test gap coordinates of one dimensional sets"""
        assert to_gaps(((0,), (1,), (4,))) == (0, 2)
        assert from_gaps((0, 2)) == ((0,), (1,), (4,))
        assert from_gaps((1,)) == ((0,), (2,))

    def test_torus_indexing(self):
        """Test wrapping flat indices"""
        assert flat_index((-1,), 5) == 4
        assert flat_index((1, 2), 4) == 6

    def test_spread_and_half_space(self):
        """Test diameters and the positive half space"""
        assert spread(((0, 0), (1, 3))) == 3
        assert half_space((0, 1)) and not half_space((0, -1)) and not half_space((0, 0))


@pytest.mark.unit
class TestPolynomials:
    """Test cases for multilinear occupancy polynomials"""

    def test_idempotent_product(self):
        """Test eta_x^2 = eta_x"""
        a = poly.add({(): 1}, {((0,),): 1})
        assert poly.multiply(a, a) == {(): 1, ((0,),): 3}

    def test_expectation(self):
        """Test Bernoulli expectations with exact densities"""
        rate = {(): 3, ((-1,),): -1, ((2,),): -1}
        assert poly.expectation(rate, Fraction(1, 2)) == 2

    def test_on_torus_merges_sites(self):
        """Test reduction of sites modulo L"""
        assert poly.on_torus({((0,), (4,)): 2, ((1,),): 1}, 4) == {((0,),): 2, ((1,),): 1}

    @given(values=tables)
    def test_mobius_inverts_truth_table(self, values):
        """Test that a table survives compilation to a polynomial and back"""
        p = poly.mobius(WINDOW, values)
        assert list(poly.truth_table(p, WINDOW)) == values
        assert np.array_equal(poly.table_array(p, WINDOW), np.array(values, dtype=float))
