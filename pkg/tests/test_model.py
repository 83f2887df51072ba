"""
Test suite for model definitions
Tests rate tables, structural validation, comparison constants and torus oracles
"""

import itertools
import logging
from fractions import Fraction

import numpy as np
import pytest
from pydantic import ValidationError

from speedchange.catalog import builtin_model, modified2d, oneblock, product_d, ssep
from speedchange.errors import InputError, ResourceError, StructuralError
from speedchange.model import (
    Configuration,
    DensityContext,
    RateTable,
    adjoint_model,
    comparison_constants,
    divergence_polynomial,
    gradient,
    invariance_residual_torus,
    rate_eval,
    require_valid,
    to_fraction,
    torus_generator,
    validate_all,
    validate_divergence,
)

VALID_MODELS = [
    builtin_model("ssep"),
    builtin_model("asep"),
    builtin_model("tasep"),
    builtin_model("simplerates"),
    oneblock(2),
    oneblock(2, holes=True),
    product_d(ssep(1), builtin_model("simplerates")),
    modified2d(),
]


@pytest.mark.unit
class TestRateTable:
    """Test cases for truth-table rates"""

    def test_values_are_exact(self):
        """Test that rates are stored as exact rationals"""
        table = RateTable(window=((1,),), values=["1/3", 0.5])
        assert table.values == (Fraction(1, 3), Fraction(1, 2))

    def test_negative_rate_rejected(self):
        """Test that negative rates fail validation"""
        with pytest.raises(ValidationError):
            RateTable(window=((1,),), values=[1, -1])

    def test_wrong_length_rejected(self):
        """Test that the table must have one value per pattern"""
        with pytest.raises(ValidationError):
            RateTable(window=((1,), (2,)), values=[1, 2, 3])

    def test_polynomial_round_trip(self):
        """Test that a table and its polynomial describe the same rate"""
        rate = {(): Fraction(3), ((-1,),): Fraction(-1), ((2,),): Fraction(-1)}
        table = RateTable.from_polynomial(rate)
        assert table.polynomial() == rate
        assert table.max_rate == 3

    def test_to_fraction(self):
        """Test parsing of exact rationals"""
        assert to_fraction("1/3") == Fraction(1, 3)
        assert to_fraction(0.1) == Fraction(1, 10)
        with pytest.raises(ValueError):
            to_fraction(True)


@pytest.mark.unit
class TestModel:
    """Test cases for model construction"""

    def test_window_may_not_read_origin(self):
        """Test that a rate reading site 0 is rejected"""
        from speedchange.model import Model

        with pytest.raises(ValidationError):
            Model(name="bad", d=1, K=2, rates={(1,): RateTable(window=((0,),), values=[1, 1])})

    def test_interaction_radius(self, simplerates, tasep):
        """Test that K covers both the jump and the window"""
        assert simplerates.K == 2
        assert tasep.K == 2

    def test_rate_eval(self, simplerates):
        """Test rate lookup by pattern"""
        assert rate_eval(simplerates, (1,), {(-1,): 0, (2,): 0}) == 3
        assert rate_eval(simplerates, (1,), {(-1,): 1, (2,): 1}) == 1
        assert rate_eval(simplerates, (-1,), []) == 2
        with pytest.raises(InputError):
            rate_eval(simplerates, (1,), {(-1,): 1})

    def test_adjoint_reverses_drift(self, asep):
        """Test that the time reversal of ASEP swaps its jump rates"""
        adjoint = adjoint_model(asep)
        assert adjoint.polynomial((1,)) == {(): 1}
        assert adjoint.polynomial((-1,)) == {(): 2}

    def test_bernoulli_configuration(self):
        """Test random initial configurations"""
        state = Configuration.bernoulli(8, 2, 0.5, np.random.default_rng(1))
        assert state.occupancy.shape == (64,)
        assert set(np.unique(state.occupancy)) <= {0, 1}

    def test_density_context(self):
        """Test chi, sqrt(chi) and kappa"""
        ctx = DensityContext(rho="1/2")
        assert ctx.chi == Fraction(1, 4)
        assert ctx.sqrt_chi == Fraction(1, 2)
        assert ctx.kappa == 0
        with pytest.raises(ValidationError):
            DensityContext(rho=1)


@pytest.mark.unit
class TestValidation:
    """Test cases for locality, divergence and coercivity"""

    @pytest.mark.parametrize("model", VALID_MODELS, ids=lambda m: m.name)
    def test_examples_pass(self, model):
        """Test that every example model satisfies all three conditions"""
        reports = validate_all(model)
        assert [r.condition for r in reports] == ["locality", "divergence", "coercivity"]
        assert all(r.passed for r in reports), [r.details for r in reports]

    def test_perturbed_fails_divergence(self):
        """Test that the perturbed model fails only the divergence condition"""
        reports = {r.condition: r for r in validate_all(builtin_model("perturbed"))}
        assert reports["locality"].passed
        assert reports["coercivity"].passed
        assert not reports["divergence"].passed
        assert reports["divergence"].counterexample is not None
        with pytest.raises(StructuralError):
            require_valid(builtin_model("perturbed"))

    def test_witness_reproduces_divergence(self, simplerates):
        """Test that the telescoped witness has the divergence polynomial as its gradient"""
        witness = validate_divergence(simplerates)
        assert witness.passed
        assert gradient(witness.R, 1) == divergence_polynomial(simplerates)

    def test_axis_order_does_not_change_validity(self):
        """Test the divergence witness under both telescoping orders in d = 2"""
        model = modified2d()
        for order in ([0, 1], [1, 0]):
            witness = validate_divergence(model, order)
            assert gradient(witness.R, 2) == divergence_polynomial(model)

    def test_non_coercive_model(self):
        """Test that a jump set not generating Z fails coercivity"""
        from speedchange.catalog import exclusion

        reports = {r.condition: r for r in validate_all(exclusion({2: 1, -2: 1}))}
        assert not reports["coercivity"].passed


@pytest.mark.unit
class TestComparisonConstants:
    """Test cases for the Dirichlet-form comparison with simple exclusion"""

    def test_ssep_is_its_own_reference(self, ssep):
        """Test that SSEP compares to itself with constants 1"""
        constants = comparison_constants(ssep)
        assert constants.c1 == pytest.approx(1.0)
        assert constants.c2 == pytest.approx(1.0)
        assert constants.path_lengths == [1]

    def test_simplerates(self, simplerates):
        """Test constants from the symmetrised rates 3..5"""
        constants = comparison_constants(simplerates)
        assert constants.c_min == pytest.approx(3.0)
        assert constants.c1 == pytest.approx(1.5)
        assert constants.c2 == pytest.approx(2.5)


@pytest.mark.unit
class TestTorusOracles:
    """Test cases for exact finite-torus computations"""

    @pytest.mark.parametrize("L", [6, 7])
    @pytest.mark.parametrize("rho", [Fraction(1, 3), Fraction(1, 2)])
    def test_invariance_is_exact(self, simplerates, L, rho):
        """Test that product Bernoulli measures are invariant for local observables"""
        for A in [((0,),), ((0,), (1,)), ((0,), (2,)), ((0,), (1,), (3,))]:
            assert invariance_residual_torus(simplerates, L, rho, {A: 1}) == 0

    def test_small_torus_warns(self, simplerates, caplog):
        """Test that boxes not above 2K+2 are flagged in the log"""
        L = 2 * simplerates.K + 2
        with caplog.at_level(logging.WARNING, logger="speedchange.model"):
            invariance_residual_torus(simplerates, L, Fraction(1, 2), {((0,),): 1})
        assert any("2K+2" in record.getMessage() for record in caplog.records)
        caplog.clear()
        with caplog.at_level(logging.WARNING, logger="speedchange.model"):
            invariance_residual_torus(simplerates, L + 1, Fraction(1, 2), {((0,),): 1})
        assert not caplog.records

    def test_perturbed_is_not_invariant(self):
        """Test that breaking the divergence condition breaks invariance"""
        model = builtin_model("perturbed")
        sites = [(x,) for x in range(6)]
        residuals = [
            invariance_residual_torus(model, 6, Fraction(1, 2), {A: 1})
            for n in (1, 2, 3, 4)
            for A in itertools.combinations(sites, n)
        ]
        assert max(float(r) for r in residuals) > 1e-6

    def test_generator_rows_sum_to_zero(self, simplerates):
        """Test that the torus generator is conservative"""
        Q = torus_generator(simplerates, 6)
        assert Q.shape == (64, 64)
        assert np.allclose(np.asarray(Q.sum(axis=1)).ravel(), 0.0)

    @pytest.mark.parametrize("name", ["tasep", "simplerates"])
    def test_adjoint_matches_transpose(self, name):
        """Test that the adjoint model generates the transpose within each particle sector"""
        model = builtin_model(name)
        Q = torus_generator(model, 6).toarray()
        Q_star = torus_generator(adjoint_model(model), 6).toarray()
        assert np.max(np.abs(Q_star - Q.T)) < 1e-12

    def test_large_torus_refused(self, tasep):
        """Test the enumeration limit"""
        with pytest.raises(ResourceError):
            torus_generator(tasep, 30)
