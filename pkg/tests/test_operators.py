"""
Test suite for graded operators
Tests S0, exact generator actions, the block decomposition and truncated solves
"""

from collections import defaultdict
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speedchange.catalog import builtin_model
from speedchange.dual import DualFunction, ReducedFunction, bilinear_reduced, expand_dual, microscopic_flux
from speedchange.errors import InputError
from speedchange.greens import green_bound, line_green
from speedchange.operators import (
    BuildingBlock,
    Truncation,
    apply_antisymmetric,
    apply_block,
    apply_generator,
    apply_s0,
    apply_symmetric,
    bilinear_form,
    decompose_asymmetric,
    degree_restricted_dhat,
    dirichlet_form,
    expansion_pair,
    expected_table,
    gap_moves,
    resolvent_quadratic,
    simplified_operator,
    truncated_classes,
)

reduced_three = st.dictionaries(
    st.tuples(st.integers(0, 4), st.integers(0, 4)), st.integers(-5, 5), max_size=6
).map(lambda c: ReducedFunction(3, 1, c))


def nonzero(table):
    return {key: value for key, value in table.items() if value != 0}


@pytest.mark.unit
class TestFreeExclusion:
    """Test cases for the free symmetric exclusion generator"""

    def test_gap_moves_at_contact(self):
        """Test that two adjacent particles can only separate"""
        assert sorted(gap_moves((0,))) == [(1,), (1,)]
        assert sorted(gap_moves((2,))) == [(1,), (1,), (3,), (3,)]

    def test_unit_class(self):
        """Test S0 on the nearest neighbour pair"""
        f = ReducedFunction(2, 1, {(0,): 1})
        assert apply_s0(f).coeffs == {(1,): 2, (0,): -2}
        assert dirichlet_form(f) == 2

    @settings(max_examples=50, deadline=None)
    @given(f=reduced_three)
    def test_dirichlet_form_is_quadratic_form(self, f):
        """Test that the Dirichlet form equals <<f, -S0 f>>"""
        assert dirichlet_form(f) == -bilinear_reduced(f, apply_s0(f))
        assert bilinear_form(f, "S0", f) == -dirichlet_form(f)

    def test_dual_and_reduced_agree(self, half):
        """Test S0 on a local function against S0 on its reduction"""
        f = DualFunction(half, {((0,), (2,)): 3})
        reduced = ReducedFunction(2, 1, {(1,): 3})
        assert dirichlet_form(f) == dirichlet_form(reduced)

    def test_unknown_operator_tag(self):
        """Test that only S0 is accepted as a string tag"""
        f = ReducedFunction(2, 1, {(0,): 1})
        with pytest.raises(InputError):
            bilinear_form(f, "S1", f)


@pytest.mark.unit
class TestGeneratorActions:
    """Test cases for L, L* and their symmetric and antisymmetric parts"""

    def test_generator_on_occupation(self, tasep, half):
        """Test L eta_0 for TASEP at density 1/2"""
        eta0 = expand_dual({((0,),): 1}, half)
        image = apply_generator(tasep, half, eta0)
        assert image.mean == 0

    def test_parts_recombine(self, simplerates, fifth):
        """Test L = S + A"""
        f = DualFunction(fifth, {((0,), (1,)): 1, ((3,),): 2})
        total = apply_symmetric(simplerates, fifth, f) + apply_antisymmetric(simplerates, fifth, f)
        assert not (total - apply_generator(simplerates, fifth, f))

    def test_ssep_is_symmetric(self, ssep, fifth):
        """Test that SSEP has no antisymmetric part"""
        f = DualFunction(fifth, {((0,), (2,)): 1})
        assert not apply_antisymmetric(ssep, fifth, f)


@pytest.mark.unit
class TestBlockDecomposition:
    """Test cases for building blocks and their coefficient tables"""

    @pytest.mark.parametrize("name,rho", [("tasep", Fraction(1, 2)), ("simplerates", Fraction(1, 5))])
    def test_table_sums(self, name, rho):
        """Test block coefficient sums against the closed-form table"""
        from speedchange.model import DensityContext

        model = builtin_model(name)
        ctx = DensityContext(rho=rho)
        expected = defaultdict(int)
        for y, rate in model.polynomials.items():
            for Lam, c in expand_dual(rate, ctx, model.d).items():
                for key, value in expected_table(len(Lam), c, ctx).items():
                    expected[key] += value
        assert nonzero(decompose_asymmetric(model, ctx).table_sums()) == nonzero(expected)

    @pytest.mark.parametrize("name", ["tasep", "asep"])
    def test_blocks_reproduce_antisymmetric_part(self, name, half):
        """Test that the block sum acts like (L - L*)/2"""
        model = builtin_model(name)
        op = decompose_asymmetric(model, half)
        for f in (
            DualFunction(half, {((0,),): 1}),
            DualFunction(half, {((0,), (1,)): 1}),
            DualFunction(half, {((0,), (2,)): 2, ((5,),): 1}),
        ):
            assert not (op.apply(f) - apply_antisymmetric(model, half, f))

    def test_reversed_time_flips_sign(self, tasep, half):
        """Test the sign convention switch"""
        forward = decompose_asymmetric(tasep, half)
        backward = decompose_asymmetric(tasep, half, reversed_time=True)
        f = DualFunction(half, {((0,), (1,)): 1})
        assert not (forward.apply(f) + backward.apply(f))

    def test_expansion_identity(self, tasep, half):
        """Test A[B1,B2,B3,y] = A[B1,B2+z,B3,y] + A[B1+z,B2,B3+z,y]"""
        f = DualFunction(half, {((0,), (1,)): 1, ((2,), (3,), (7,)): 2, ((4,),): -1})
        for block in decompose_asymmetric(tasep, half).blocks:
            first, second = expansion_pair(block, (5,))
            combined = apply_block(first, f) + apply_block(second, f)
            assert not (combined - apply_block(block, f))

    def test_expansion_site_must_be_free(self):
        """Test that the expansion site must avoid the block"""
        block = BuildingBlock(B1=((0,),), B2=((1,),), B3=((1,),), y=(1,))
        with pytest.raises(InputError):
            expansion_pair(block, (1,))

    def test_block_structure_validation(self):
        """Test that B3 must contain y"""
        from pydantic import ValidationError

        with pytest.raises(ValidationError):
            BuildingBlock(B1=((0,),), B2=((1,),), B3=((0,),), y=(1,))

    def test_reduced_input(self, tasep, half):
        """Test block action on reduced functions"""
        block = decompose_asymmetric(tasep, half).blocks[0]
        with pytest.raises(InputError):
            apply_block(block, ReducedFunction(2, 1, {(0,): 1}))
        image = apply_block(block, ReducedFunction(2, 1, {(0,): 1}), half)
        assert isinstance(image, ReducedFunction)


@pytest.mark.unit
class TestTruncatedSolves:
    """Test cases for resolvents on truncated reduced spaces"""

    def test_truncated_classes(self):
        """Test class enumeration by diameter"""
        assert truncated_classes(2, 3) == [(0,), (1,), (2,)]
        assert len(truncated_classes(3, 3)) == 3
        assert truncated_classes(3, 1) == []

    def test_pair_resolvent_matches_line_green(self):
        """Test that degree-two S0 is a reflected walk"""
        f = ReducedFunction(2, 1, {(0,): 1})
        lam = 1e-2
        value = resolvent_quadratic(f, Truncation(n_max=2, R=2000, lam=lam))
        assert value == pytest.approx(line_green(lam, 0) + line_green(lam, 1), rel=1e-5)
        assert value == pytest.approx(green_bound(2, 1, lam), rel=1e-5)

    @pytest.mark.slow
    @pytest.mark.parametrize("lam", [1e-4, 1e-3])
    def test_pair_resolvent_small_lambda(self, lam):
        """Test the reflected-walk identity deeper into small lambda"""
        f = ReducedFunction(2, 1, {(0,): 1})
        value = resolvent_quadratic(f, Truncation(n_max=2, R=30000, lam=lam))
        assert value == pytest.approx(green_bound(2, 1, lam), rel=1e-4)

    def test_degree_restricted_dhat(self, tasep, half):
        """Test that the truncated w-term is positive"""
        bundle = microscopic_flux(tasep, half)
        value = degree_restricted_dhat(bundle.w[0], tasep, half, Truncation(n_max=2, n_min=2, R=40, lam=0.1))
        assert value > 0

    def test_unknown_operator(self):
        """Test that resolvent solves reject unknown operators"""
        from speedchange.operators import resolvent_solve

        with pytest.raises(InputError):
            resolvent_solve("A", ReducedFunction(2, 1, {(0,): 1}), Truncation(n_max=2, R=10, lam=1.0))


@pytest.mark.unit
class TestSimplifiedOperators:
    """Test cases for the simplified reduced operators"""

    def test_three_to_three(self):
        """Test the degree preserving simplified operator on the contact class"""
        image = simplified_operator("m3_to3")(ReducedFunction(3, 1, {(0, 0): 1}))
        assert image.n == 3
        assert image.coeffs == {(0, 0): 2}

    def test_two_to_four(self):
        """Test that m2_to4 raises the degree by two"""
        image = simplified_operator("m2_to4", 0.5)(ReducedFunction(2, 1, {(1,): 1}))
        assert image.n == 4
        assert image.coeffs

    def test_invalid_kind_and_degree(self):
        """Test kind and degree validation"""
        with pytest.raises(InputError):
            simplified_operator("m4_to4")
        with pytest.raises(InputError):
            simplified_operator("m3_to3")(ReducedFunction(2, 1, {(0,): 1}))
