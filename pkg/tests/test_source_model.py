"""
Tests for the source_model module.
"""

import itertools

import numpy as np
import pytest

from source_model import (
    IndexOutOfRange,
    NegativeProbability,
    NotNormalized,
    OverlappingSets,
    ShapeMismatch,
    SourceModelError,
    conditional_entropy,
    conditional_mutual_information,
    dsbs,
    empirical_entropy,
    entropy,
    independent_pmf,
    marginal,
    mutual_information,
    new_joint_pmf,
    pmf_from_descriptor,
    sample_block,
)

pytestmark = pytest.mark.unit

H_011 = 0.499916


def random_pmf(rng, sizes):
    return new_joint_pmf(sizes, rng.dirichlet(np.ones(int(np.prod(sizes)))).reshape(sizes))


def random_disjoint_sets(rng, num_variables, count):
    labels = rng.integers(0, count + 1, size=num_variables)
    return [[i for i in range(num_variables) if labels[i] == k] for k in range(count)]


class TestNewJointPmf:
    """Tests for building and validating joint pmfs."""

    def test_uniform_three_node(self):
        pmf = new_joint_pmf([1, 2, 2], [0.25] * 4)
        assert pmf.num_sources == 2
        assert pmf.probs.shape == (1, 2, 2)

    def test_not_normalized(self):
        with pytest.raises(NotNormalized):
            new_joint_pmf([1, 2, 2], [0.2, 0.2, 0.25, 0.25])

    def test_negative_entry(self):
        with pytest.raises(NegativeProbability):
            new_joint_pmf([1, 2], [1.5, -0.5])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            new_joint_pmf([1, 2, 2], [0.5, 0.5])

    def test_tiny_normalization_error_is_absorbed(self):
        pmf = new_joint_pmf([2], [0.5, 0.5 + 1e-10])
        assert pmf.probs.sum() == pytest.approx(1.0, abs=1e-15)

    def test_probabilities_are_read_only(self):
        pmf = new_joint_pmf([2], [0.5, 0.5])
        with pytest.raises(ValueError):
            pmf.probs[0] = 1.0

    def test_dsbs_entries(self):
        pmf = dsbs(0.11)
        assert pmf.probs[0, 0, 0] == pytest.approx(0.445)
        assert pmf.probs[0, 0, 1] == pytest.approx(0.055)
        assert pmf.probs.sum() == pytest.approx(1.0)

    def test_descriptor_forms(self):
        inline = pmf_from_descriptor({"alphabets": [1, 2, 2], "probs": [0.445, 0.055, 0.055, 0.445]})
        named = pmf_from_descriptor({"dsbs": {"crossover": 0.11}})
        np.testing.assert_allclose(inline.probs, named.probs)


class TestConditionalEntropy:
    """Tests for H(U_S | U_T)."""

    def test_independent_fair_bits(self):
        pmf = independent_pmf([[1.0], [0.5, 0.5], [0.5, 0.5]])
        assert conditional_entropy(pmf, [1], [2]) == pytest.approx(1.0)

    def test_empty_set(self, dsbs_source):
        assert conditional_entropy(dsbs_source, [], [1, 2]) == 0.0

    def test_dsbs(self, dsbs_source):
        assert conditional_entropy(dsbs_source, [1], [2]) == pytest.approx(H_011, abs=1e-4)

    def test_overlapping_sets(self, dsbs_source):
        with pytest.raises(OverlappingSets):
            conditional_entropy(dsbs_source, [1, 2], [2])

    def test_index_out_of_range(self, dsbs_source):
        with pytest.raises(IndexOutOfRange):
            conditional_entropy(dsbs_source, [3], [])

    def test_bounded_by_log_alphabet(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            pmf = random_pmf(rng, [2, 3, 2])
            value = conditional_entropy(pmf, [1], [0, 2])
            assert 0.0 <= value <= np.log2(3) + 1e-12

    def test_chain_rule(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            pmf = random_pmf(rng, [2, 2, 3, 2])
            s, t = random_disjoint_sets(rng, 4, 2)
            assert entropy(pmf, s + t) == pytest.approx(entropy(pmf, t) + conditional_entropy(pmf, s, t), abs=1e-10)

    def test_conditioning_reduces_entropy(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            pmf = random_pmf(rng, [2, 2, 2, 3])
            s, t, w = random_disjoint_sets(rng, 4, 3)
            assert conditional_entropy(pmf, s, t + w) <= conditional_entropy(pmf, s, t) + 1e-10


class TestMutualInformation:
    """Tests for I(U_S; U_T) and its conditional form."""

    def test_independent(self):
        pmf = independent_pmf([[0.3, 0.7], [0.2, 0.8]])
        assert mutual_information(pmf, [0], [1]) == pytest.approx(0.0, abs=1e-12)

    def test_identical_bits(self):
        pmf = new_joint_pmf([2, 2], [[0.5, 0.0], [0.0, 0.5]])
        assert mutual_information(pmf, [0], [1]) == pytest.approx(1.0)

    def test_dsbs(self, dsbs_source):
        assert mutual_information(dsbs_source, [1], [2]) == pytest.approx(1 - H_011, abs=1e-4)

    def test_symmetric_and_nonnegative(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            pmf = random_pmf(rng, [3, 2, 2])
            forward = mutual_information(pmf, [0], [1, 2])
            assert forward >= -1e-12
            assert forward == pytest.approx(mutual_information(pmf, [1, 2], [0]), abs=1e-12)

    def test_conditional_chain_rule(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            pmf = random_pmf(rng, [2, 2, 2])
            # I(X; Y Z) = I(X; Z) + I(X; Y | Z)
            total = mutual_information(pmf, [0], [1, 2])
            split = mutual_information(pmf, [0], [2]) + conditional_mutual_information(pmf, [0], [1], [2])
            assert total == pytest.approx(split, abs=1e-10)

    def test_trivial_conditioning(self, dsbs_source):
        assert conditional_mutual_information(dsbs_source, [1], [2], [0]) == pytest.approx(
            mutual_information(dsbs_source, [1], [2]), abs=1e-12)


class TestMarginal:
    """Tests for marginal pmfs."""

    def test_axis_order_follows_request(self):
        pmf = new_joint_pmf([2, 3], np.arange(6, dtype=float).reshape(2, 3) / 15)
        swapped = marginal(pmf, [1, 0])
        assert swapped.alphabet_sizes == (3, 2)
        np.testing.assert_allclose(swapped.probs, pmf.probs.T)

    def test_sums_out_the_rest(self, dsbs_source):
        np.testing.assert_allclose(marginal(dsbs_source, [2]).probs, [0.5, 0.5])


class TestSampleBlock:
    """Tests for i.i.d. block sampling."""

    def test_point_mass_gives_constant_sequences(self):
        pmf = new_joint_pmf([1, 2, 3], [[[0, 0, 0], [0, 0, 1.0]]])
        block = sample_block(pmf, 50, seed=0)
        assert np.all(block.sequence(1) == 1)
        assert np.all(block.sequence(2) == 2)

    def test_same_seed_same_block(self, dsbs_source):
        a = sample_block(dsbs_source, 100, seed=42)
        b = sample_block(dsbs_source, 100, seed=42)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_shape_and_alphabet(self, dsbs_source):
        block = sample_block(dsbs_source, 64, seed=1)
        assert block.samples.shape == (3, 64)
        assert block.samples.max() <= 1

    def test_disagreement_rate(self, dsbs_source):
        block = sample_block(dsbs_source, 10_000, seed=2024)
        assert np.mean(block.sequence(1) != block.sequence(2)) == pytest.approx(0.11, abs=0.01)

    def test_empirical_entropy_matches(self):
        rng = np.random.default_rng(9)
        for pmf in (dsbs(0.11), random_pmf(rng, [2, 3, 2])):
            block = sample_block(pmf, 100_000, seed=17)
            for s in itertools.chain.from_iterable(
                    itertools.combinations(range(pmf.num_variables), k) for k in (1, 2, 3)):
                assert empirical_entropy(block, s) == pytest.approx(entropy(pmf, s), abs=0.02)

    def test_rejects_empty_block(self, dsbs_source):
        with pytest.raises(SourceModelError):
            sample_block(dsbs_source, 0, seed=0)
