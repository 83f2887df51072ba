"""
Test suite for free-exclusion resolvent bounds
"""

import math

import pytest

from speedchange.greens import (
    class_distance,
    crude_congestion,
    fold,
    fold_congestion,
    gap_move_displacements,
    green_bound,
    line_green,
    path_length_bound,
    planar_green,
    reference_class,
    return_integral_1d,
    triangular_green,
)


@pytest.mark.unit
class TestWalkGreens:
    """Test cases for lattice walk resolvents"""

    def test_fold(self):
        """Test reflection about -1/2"""
        assert [fold(x) for x in (-3, -1, 0, 2)] == [2, 0, 0, 2]

    @pytest.mark.parametrize("mu", [0.5, 2.0])
    def test_line_green_mass(self, mu):
        """Test that the resolvent row sums to 1/mu"""
        total = sum(line_green(mu, k) for k in range(-400, 401))
        assert total == pytest.approx(1.0 / mu, rel=1e-10)

    def test_line_green_small_mu(self):
        """Test the diffusive blow-up (mu - Q)^{-1}(0, 0) ~ 1/sqrt(8 mu)"""
        mu = 1e-8
        assert line_green(mu, 0) == pytest.approx(1.0 / math.sqrt(8 * mu), rel=1e-3)

    def test_planar_symmetry(self):
        """Test lattice symmetry of the planar walk resolvent"""
        assert planar_green(0.5, (2, 0)) == pytest.approx(planar_green(0.5, (0, 2)), rel=1e-6)
        assert planar_green(0.5, (0, 0)) > planar_green(0.5, (1, 0))

    def test_triangular_symmetry(self):
        """Test the k1 <-> k2 symmetry of the three particle resolvent"""
        assert triangular_green(1.0, (1, 0)) == pytest.approx(triangular_green(1.0, (0, 1)), rel=1e-6)

    def test_planar_logarithmic_growth(self):
        """Test that the planar diagonal grows like log(1/nu) / (8 pi)"""
        slope = (planar_green(1e-6, (0, 0)) - planar_green(1e-4, (0, 0))) / math.log(100.0)
        assert slope == pytest.approx(1.0 / (8 * math.pi), rel=0.05)


@pytest.mark.unit
class TestPathCombinatorics:
    """Test cases for gap-space moves and routing"""

    def test_gap_move_displacements(self):
        """Test free moves of two particles in gap coordinates"""
        assert gap_move_displacements(2) == [(-1,), (1,), (1,), (-1,)]
        assert len(gap_move_displacements(4)) == 8

    def test_path_length_bound(self):
        """Test the longest routing path"""
        assert path_length_bound(2) == 1
        assert path_length_bound(3) == 2

    def test_fold_congestion(self):
        """Test that the folded congestion is finite and not below one"""
        B = fold_congestion(3)
        assert 1.0 <= B < crude_congestion(3) * 10

    def test_class_distance(self):
        """Test S0 path costs to the reference class"""
        assert class_distance((3,), 2, 1) == 3
        assert class_distance((0, 0), 3, 1) == 0
        assert class_distance(((0, 0), (1, 0)), 2, 2) == 0
        assert class_distance(((0, 0), (0, 1)), 2, 2) == 4
        assert class_distance((), 1, 1) == 0

    def test_reference_class(self):
        """Test the centring classes"""
        assert reference_class(3, 1) == ((0,), (1,), (2,))
        assert reference_class(2, 2) == ((0, 0), (1, 0))


@pytest.mark.unit
class TestGreenBound:
    """Test cases for G(n, d, mu)"""

    def test_pair_bound(self):
        """Test the exact degree-two bound in one dimension"""
        assert green_bound(2, 1, 0.1) == pytest.approx(line_green(0.1, 0) + line_green(0.1, 1))

    def test_monotone_in_mu(self):
        """Test that the bound grows as mu decreases"""
        values = [green_bound(3, 1, mu) for mu in (1e-1, 1e-2, 1e-3)]
        assert values[0] < values[1] < values[2]

    def test_two_dimensional_pair(self):
        """Test that the planar pair bound is finite and grows as mu decreases"""
        assert 0 < green_bound(2, 2, 1e-2) < green_bound(2, 2, 1e-4)

    @pytest.mark.parametrize("n,d,mu", [(2, 1, 0.0), (2, 1, -1.0), (1, 1, 1.0)])
    def test_invalid_arguments(self, n, d, mu):
        """Test argument validation"""
        with pytest.raises(ValueError):
            green_bound(n, d, mu)

    def test_return_integral_needs_four_walkers(self):
        """Test that fewer than four walkers are refused"""
        with pytest.raises(ValueError):
            return_integral_1d(3)

    @pytest.mark.slow
    def test_return_integral_finite(self):
        """Test the four-walker return integral"""
        value = return_integral_1d(4)
        assert math.isfinite(value) and value > 0
