"""
Test suite for the orthonormal basis algebra, fluxes and regime classification
"""

from fractions import Fraction

import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from speedchange import polynomial as poly
from speedchange.catalog import builtin_model, modified2d
from speedchange.dual import (
    RHO,
    DualFunction,
    bilinear_reduced,
    classify_regime,
    covariance_on_window,
    dimension_reduce,
    double_inner,
    expand_dual,
    flux_derivative,
    macroscopic_flux,
    microscopic_flux,
    multiply,
    symbolic_derivative,
    to_monomials,
    translated_covariance_sum,
    unit_class,
)
from speedchange.errors import StructuralError
from speedchange.model import DensityContext
from speedchange.sites import normalize

SITES = [(x,) for x in range(4)]


def local_functions(ctx):
    keys = st.lists(st.sampled_from(SITES), min_size=0, max_size=3).map(normalize)
    return st.dictionaries(keys, st.integers(-3, 3), max_size=5).map(lambda c: DualFunction(ctx, c, 1))


@pytest.mark.unit
class TestBasisAlgebra:
    """Test cases for eta-hat expansions and products"""

    @settings(max_examples=40, deadline=None)
    @given(data=st.data())
    def test_covariance_matches_enumeration(self, data):
        """Test Parseval: basis covariance equals the exhaustive Bernoulli average"""
        ctx = DensityContext(rho=Fraction(1, 2))
        f = data.draw(local_functions(ctx))
        g = data.draw(local_functions(ctx))
        assert covariance_on_window(f, g) == f.covariance(g)

    @settings(max_examples=30, deadline=None)
    @given(data=st.data())
    def test_product_matches_monomials(self, data):
        """Test that the linearised product agrees with monomial multiplication"""
        ctx = DensityContext(rho=Fraction(1, 5))
        f = data.draw(local_functions(ctx))
        g = data.draw(local_functions(ctx))
        expected = poly.multiply(to_monomials(f), to_monomials(g))
        assert to_monomials(multiply(f, g)) == expected

    def test_single_occupation(self, fifth):
        """Test eta_x = rho + sqrt(chi) eta-hat_x"""
        f = expand_dual({((3,),): 1}, fifth)
        assert f.coeffs == {(): Fraction(1, 5), ((3,),): Fraction(2, 5)}
        assert to_monomials(f) == {((3,),): 1}

    def test_square_of_basis_element(self, fifth):
        """Test eta-hat_x^2 = 1 + kappa eta-hat_x"""
        x = DualFunction(fifth, {((0,),): 1})
        assert multiply(x, x).coeffs == {(): 1, ((0,),): Fraction(3, 2)}

    def test_degree_helpers(self, half):
        """Test degree span, degree parts and removal"""
        f = DualFunction(half, {(): 2, ((0,),): 1, ((0,), (1,)): 3})
        assert f.degree_span == (0, 2)
        assert f.degree_part(2).coeffs == {((0,), (1,)): 3}
        assert f.without_degrees(0, 1).coeffs == {((0,), (1,)): 3}
        assert f.mean == 2


@pytest.mark.unit
class TestFluxes:
    """Test cases for the macroscopic and microscopic fluxes"""

    def test_macroscopic_flux(self, simplerates, asep):
        """Test j(rho) for the example models"""
        j = macroscopic_flux(simplerates)[0].as_expr()
        assert sp.expand(j - (1 - 2 * RHO) * RHO * (1 - RHO)) == 0
        j_asep = macroscopic_flux(asep)[0].as_expr()
        assert sp.expand(j_asep - RHO * (1 - RHO)) == 0

    def test_asep_flux_bundle(self, asep, half):
        """Test the symmetrised flux of ASEP at density 1/2"""
        bundle = microscopic_flux(asep, half)
        assert bundle.C == [3]
        assert bundle.w[0].degree_span == (2, 2)
        assert dimension_reduce(bundle.w[0], 2).coeffs == {(0,): Fraction(-1, 4)}
        for part in (dimension_reduce(bundle.v[0], n) for n in (1, 2)):
            assert part.total() == 0

    def test_flux_means(self, simplerates, fifth):
        """Test E[W] = E[W*] = j(rho)"""
        bundle = microscopic_flux(simplerates, fifth)
        j = symbolic_derivative(bundle.j[0], 0, fifth.rho)
        assert bundle.W[0].mean == pytest.approx(float(j))
        assert bundle.W_star[0].mean == pytest.approx(float(j))

    @pytest.mark.parametrize("name,rho", [
        ("simplerates", Fraction(1, 5)),
        ("simplerates", Fraction(1, 2)),
        ("asep", Fraction(1, 2)),
        ("tasep", Fraction(1, 3)),
    ])
    @pytest.mark.parametrize("k", [2, 3])
    def test_derivatives_from_coefficients(self, name, rho, k):
        """Test that degree-k flux coefficients give the k-th derivative of j"""
        model = builtin_model(name)
        ctx = DensityContext(rho=rho)
        bundle = microscopic_flux(model, ctx)
        expected = float(symbolic_derivative(bundle.j[0], k, ctx.rho))
        assert flux_derivative(bundle, k) == pytest.approx(expected, rel=1e-9, abs=1e-9)

    def test_invalid_model_refused(self, half):
        """Test that the perturbed model has no flux bundle"""
        with pytest.raises(StructuralError):
            microscopic_flux(builtin_model("perturbed"), half)


@pytest.mark.unit
class TestRegimes:
    """Test cases for regime classification"""

    @pytest.mark.parametrize("name,rho,regime", [
        ("asep", "1/2", "d1_generic"),
        ("tasep", "1/3", "d1_generic"),
        ("simplerates", "1/2", "d1_inflection"),
        ("ssep", "1/3", "d1_double_inflection"),
        ("ssep", "1/2", "d1_double_inflection"),
    ])
    def test_one_dimensional(self, name, rho, regime):
        """Test the one dimensional regime tags"""
        assert classify_regime(builtin_model(name), rho).regime == regime

    def test_two_dimensional(self):
        """Test that j'' decides the two dimensional regime"""
        model = modified2d()
        assert classify_regime(model, "1/3").regime == "d2_generic"
        assert classify_regime(model, "1/2").regime == "d2_generic"
        assert classify_regime(model, "2/3").regime == "d2_diffusive"
        assert classify_regime(model, "1/3", axis=1).regime == "d2_diffusive"

    def test_summary(self, simplerates):
        """Test the one line summary"""
        report = classify_regime(simplerates, "1/2")
        assert report.summary() == "d1_inflection; proved bounds: C*log log lambda^(-1) <= D-hat <= C*log lambda^(-1)"
        assert report.axes[0].j2 == 0.0
        assert report.axes[0].j3 == pytest.approx(12.0)

    def test_invalid_model(self):
        """Test that classification requires a valid model"""
        with pytest.raises(StructuralError):
            classify_regime(builtin_model("perturbed"), "1/2")


@pytest.mark.unit
class TestDimensionReduction:
    """Test cases for translation-quotiented coefficients"""

    def test_reduce_sums_translates(self, half):
        """Test that translates of one class are summed"""
        f = DualFunction(half, {((0,), (1,)): 2, ((5,), (6,)): 3})
        reduced = dimension_reduce(f, 2)
        assert reduced.coeffs == {(0,): 5}
        assert bilinear_reduced(reduced, reduced) == 25
        assert double_inner(f, f) == 25

    def test_double_inner_is_translated_covariance(self, half):
        """Test <<f, f>> against the truncated sum of translated covariances"""
        f = DualFunction(half, {((0,), (1,)): 2, ((5,), (6,)): 3})
        assert translated_covariance_sum(f, f, 6) == 25

    def test_mixed_degrees(self, half):
        """Test that different degrees are orthogonal for <<., .>>"""
        f = DualFunction(half, {((0,),): 1, ((0,), (2,)): 1})
        g = DualFunction(half, {((4,),): 2})
        assert double_inner(f, g) == 2

    def test_unit_class(self, half):
        """Test the lifted basis element of a gap class"""
        assert unit_class((1,), half).coeffs == {((0,), (2,)): 1}
        assert dimension_reduce(unit_class((1,), half), 2).coeffs == {(1,): 1}

    def test_lift_round_trip(self, half):
        """Test that reducing a lifted function recovers it"""
        reduced = dimension_reduce(DualFunction(half, {((3,), (4,), (9,)): 7}), 3)
        assert dimension_reduce(reduced.lift(half), 3).coeffs == reduced.coeffs
