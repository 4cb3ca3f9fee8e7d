"""
Unit tests for the determinantal point process machinery.

Tests subset probabilities, kernel conversions, the exact enumeration
oracles and both spectral samplers against them.
"""
import itertools
from collections import Counter

import numpy as np
import pytest
from pydantic import ValidationError

from src.exceptions import CapExceededError, InsufficientRankError, KernelDomainError
from src.sampling.dpp import (
    LEnsemble,
    MarginalKernel,
    elementary_symmetric,
    enumerate_dpp_distribution,
    enumerate_k_dpp_distribution,
    expected_size,
    l_to_marginal,
    lensemble_subset_probability,
    marginal_inclusion_probability,
    marginal_to_l,
    negative_dependence_check,
    sample_dpp,
    sample_dpp_l,
    sample_k_dpp,
)


def random_ensemble(n_items: int, rng: np.random.Generator) -> LEnsemble:
    factor = rng.normal(size=(n_items, n_items))
    return LEnsemble(matrix=factor @ factor.T / n_items)


def total_variation(law: dict, draws: list) -> float:
    counts = Counter(draws)
    support = set(law) | set(counts)
    return 0.5 * sum(abs(counts.get(s, 0) / len(draws) - law.get(s, 0.0)) for s in support)


@pytest.fixture
def rng():
    """Fixture to provide a seeded random stream"""
    return np.random.default_rng(31)


@pytest.fixture
def small_ensemble():
    """The two-item ensemble [[2, 1], [1, 2]]"""
    return LEnsemble(matrix=[[2.0, 1.0], [1.0, 2.0]])


@pytest.mark.unit
class TestKernels:
    """Test suite for L-ensembles, marginal kernels and conversions"""

    def test_subset_probability_example(self, small_ensemble):
        """Test subset probabilities of a 2x2 ensemble"""
        assert lensemble_subset_probability(small_ensemble, {0, 1}) == pytest.approx(3.0 / 8.0)
        assert lensemble_subset_probability(small_ensemble, set()) == pytest.approx(1.0 / 8.0)

    def test_minors_sum_to_normalizer(self, rng):
        """Test subset probabilities over every subset sum to one"""
        L = random_ensemble(5, rng)
        total = sum(
            lensemble_subset_probability(L, subset)
            for size in range(6)
            for subset in itertools.combinations(range(5), size)
        )
        assert total == pytest.approx(1.0, rel=1e-9)

    def test_rejects_asymmetric(self):
        """Test an asymmetric L is rejected"""
        with pytest.raises(ValidationError):
            LEnsemble(matrix=[[1.0, 0.5], [0.0, 1.0]])

    def test_rejects_indefinite(self):
        """Test an indefinite L is rejected"""
        with pytest.raises(ValidationError):
            LEnsemble(matrix=[[1.0, 2.0], [2.0, 1.0]])

    def test_marginal_rejects_eigenvalue_above_one(self):
        """Test a marginal kernel with an eigenvalue above one is rejected"""
        with pytest.raises(ValidationError):
            MarginalKernel(matrix=[[1.5, 0.0], [0.0, 0.5]])

    def test_subset_outside_ground_set(self, small_ensemble):
        """Test subsets outside the ground set are rejected"""
        with pytest.raises(ValueError):
            lensemble_subset_probability(small_ensemble, {2})

    def test_conversion_round_trip(self, rng):
        """Test L to K and back recovers L"""
        L = random_ensemble(4, rng)
        np.testing.assert_allclose(marginal_to_l(l_to_marginal(L)).matrix, L.matrix, atol=1e-8)

    def test_marginal_matches_enumeration(self, rng):
        """Test K matches inclusion probabilities from enumeration"""
        L = random_ensemble(4, rng)
        K = l_to_marginal(L)
        law = enumerate_dpp_distribution(L)
        for pair in [(0,), (1, 3), (0, 2, 3)]:
            contains = sum(p for subset, p in law.items() if set(pair) <= set(subset))
            assert marginal_inclusion_probability(K, pair) == pytest.approx(contains, abs=1e-10)

    def test_marginal_to_l_needs_eigenvalues_below_one(self):
        """Test K with eigenvalue one has no L-ensemble"""
        with pytest.raises(KernelDomainError):
            marginal_to_l(MarginalKernel(matrix=np.eye(2)))

    def test_expected_size(self, rng):
        """Test the expected size against enumeration"""
        L = random_ensemble(5, rng)
        law = enumerate_dpp_distribution(L)
        assert expected_size(L) == pytest.approx(sum(len(s) * p for s, p in law.items()), abs=1e-10)

    def test_negative_dependence(self):
        """Test pairs are negatively correlated"""
        K = MarginalKernel(matrix=[[0.5, 0.2, 0.0], [0.2, 0.5, 0.0], [0.0, 0.0, 0.5]])
        assert negative_dependence_check(K, 0, 1)
        assert not negative_dependence_check(K, 0, 2)

    def test_elementary_symmetric(self):
        """Test the elementary symmetric polynomial table"""
        table = elementary_symmetric([1.0, 2.0, 3.0], 3)
        np.testing.assert_allclose(table[:, 3], [1.0, 6.0, 11.0, 6.0])


@pytest.mark.unit
class TestEnumeration:
    """Test suite for the exact oracles"""

    def test_dpp_law_sums_to_one(self, rng):
        """Test the enumerated DPP law sums to one"""
        law = enumerate_dpp_distribution(random_ensemble(6, rng))
        assert len(law) == 2 ** 6
        assert sum(law.values()) == pytest.approx(1.0, abs=1e-10)

    def test_k_dpp_law(self, small_ensemble):
        """Test the k-DPP law of a small ensemble"""
        law = enumerate_k_dpp_distribution(small_ensemble, 1)
        assert law == pytest.approx({(0,): 0.5, (1,): 0.5})

    def test_caps(self):
        """Test enumeration refuses ground sets above the cap"""
        with pytest.raises(CapExceededError):
            enumerate_dpp_distribution(LEnsemble(matrix=np.eye(17)))
        with pytest.raises(CapExceededError):
            enumerate_k_dpp_distribution(LEnsemble(matrix=np.eye(21)), 2)

    def test_explicit_cap(self):
        """Test an explicit enumeration cap"""
        with pytest.raises(CapExceededError):
            enumerate_dpp_distribution(LEnsemble(matrix=np.eye(4)), cap=3)


@pytest.mark.unit
class TestSamplers:
    """Test suite for the spectral samplers"""

    def test_k_dpp_returns_k_distinct_items(self, rng):
        """Test k-DPP samples hold k distinct items"""
        L = random_ensemble(10, rng)
        for k in (1, 4, 10):
            subset = sample_k_dpp(L, k, rng)
            assert len(subset) == k
            assert len(set(subset)) == k
            assert list(subset) == sorted(subset)

    def test_k_dpp_zero(self, rng):
        """Test a 0-DPP sample is empty"""
        assert sample_k_dpp(random_ensemble(3, rng), 0, rng) == ()

    def test_k_dpp_above_rank(self, rng):
        """Test k above the rank raises"""
        v = rng.normal(size=(5, 1))
        L = LEnsemble(matrix=v @ v.T)
        with pytest.raises(InsufficientRankError) as exc_info:
            sample_k_dpp(L, 2, rng)
        assert exc_info.value.rank == 1

    def test_identity_k_dpp_is_uniform(self, rng):
        """Test the identity kernel gives uniform subsets"""
        draws = [sample_k_dpp(LEnsemble(matrix=np.eye(4)), 2, rng) for _ in range(6000)]
        law = {subset: 1.0 / 6.0 for subset in itertools.combinations(range(4), 2)}
        assert total_variation(law, draws) < 0.03

    def test_k_dpp_matches_enumeration(self, rng):
        """Test the k-DPP sampler against enumeration"""
        L = random_ensemble(5, rng)
        law = enumerate_k_dpp_distribution(L, 2)
        draws = [sample_k_dpp(L, 2, rng) for _ in range(20_000)]
        assert total_variation(law, draws) < 0.03

    def test_dpp_matches_enumeration(self, rng):
        """Test the DPP sampler against enumeration"""
        L = random_ensemble(5, rng)
        law = enumerate_dpp_distribution(L)
        draws = [sample_dpp_l(L, rng) for _ in range(20_000)]
        assert total_variation(law, draws) < 0.03

    def test_inclusion_frequencies_match_diagonal(self, rng):
        """Test inclusion frequencies match the diagonal of K"""
        K = l_to_marginal(random_ensemble(6, rng))
        counts = np.zeros(6)
        trials = 20_000
        for _ in range(trials):
            for item in sample_dpp(K, rng):
                counts[item] += 1
        np.testing.assert_allclose(counts / trials, np.diag(K.matrix), atol=0.02)

    def test_same_seed_same_sample(self, rng):
        """Test equal seeds give equal samples"""
        L = random_ensemble(8, rng)
        first = [sample_k_dpp(L, 3, np.random.default_rng(5)) for _ in range(3)]
        second = [sample_k_dpp(L, 3, np.random.default_rng(5)) for _ in range(3)]
        assert first == second

    @pytest.mark.slow
    def test_samplers_match_enumeration_tightly(self):
        """Test both samplers stay within total variation 0.01 of enumeration"""
        rng = np.random.default_rng(2024)
        for _ in range(3):
            n_items = int(rng.integers(3, 6))
            L = random_ensemble(n_items, rng)
            k = int(rng.integers(1, n_items))
            k_draws = [sample_k_dpp(L, k, rng) for _ in range(200_000)]
            assert total_variation(enumerate_k_dpp_distribution(L, k), k_draws) < 0.01
            draws = [sample_dpp_l(L, rng) for _ in range(200_000)]
            assert total_variation(enumerate_dpp_distribution(L), draws) < 0.01
