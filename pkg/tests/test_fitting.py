"""
Test suite for scaling-law fits
"""

import numpy as np
import pytest

from speedchange.errors import InputError
from speedchange.fitting import MIN_POINTS, fit_scaling, linear_fit

LAMBDAS = np.logspace(-2, -7, 11)


@pytest.mark.unit
class TestLinearFit:
    """Test cases for least-squares lines"""

    def test_exact_line(self):
        """Test a noiseless line"""
        fit = linear_fit([0.0, 1.0, 2.0, 3.0], [1.0, 3.0, 5.0, 7.0])
        assert fit.slope == pytest.approx(2.0)
        assert fit.intercept == pytest.approx(1.0)
        assert fit.r2 == pytest.approx(1.0)


@pytest.mark.unit
class TestScalingFit:
    """Test cases for competing asymptotic forms"""

    def test_power_law(self):
        """Test that lambda^(-1/2) selects the power form"""
        fit = fit_scaling(LAMBDAS, 3.0 * LAMBDAS ** -0.5)
        assert fit.selected == "power"
        assert fit.exponent == pytest.approx(-0.5)
        assert not fit.log_flag

    def test_logarithmic_growth(self):
        """Test that 2 + log(1/lambda) selects the log-linear form"""
        fit = fit_scaling(LAMBDAS, 2.0 + np.log(1 / LAMBDAS))
        assert fit.selected == "log_linear"
        assert fit.log_linear.slope == pytest.approx(1.0)
        assert fit.log_flag

    def test_window(self):
        """Test restriction to a lambda window"""
        values = np.where(LAMBDAS > 1e-3, 100.0, LAMBDAS ** -0.25)
        fit = fit_scaling(LAMBDAS, values, window=(1e-7, 1e-3))
        assert fit.exponent == pytest.approx(-0.25)

    def test_too_few_points(self):
        """Test the minimum number of fit points"""
        with pytest.raises(InputError):
            fit_scaling(LAMBDAS[: MIN_POINTS - 1], np.ones(MIN_POINTS - 1))

    @pytest.mark.parametrize("values", [
        -np.ones(11),
        np.full(11, np.nan),
    ])
    def test_invalid_values(self, values):
        """Test that values must be positive and finite"""
        with pytest.raises(InputError):
            fit_scaling(LAMBDAS, values)

    def test_length_mismatch(self):
        """Test that grids and values must align"""
        with pytest.raises(InputError):
            fit_scaling(LAMBDAS, np.ones(5))
