"""
Unit tests for the DPPMC sampling engine.
"""
import logging

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.spatial.distance import pdist, squareform

from src.engine.dppmc import (
    DppmcConfig,
    KernelScale,
    Similarity,
    dppmc_draw,
    dppmc_estimate,
    dppmc_l_ensemble,
    dppmc_select,
    iid_draw,
    median_bandwidth,
    rbf_l_ensemble,
    similarity_l_ensemble,
)
from src.exceptions import InsufficientRankError
from src.sampling.distributions import SamplePool, sample_isotropic_gaussian


def isotropic_sampler(d):
    return lambda n, rng: sample_isotropic_gaussian(d, n, rng)


def mean_nearest_neighbor_distance(vectors: np.ndarray) -> float:
    distances = squareform(pdist(vectors))
    np.fill_diagonal(distances, np.inf)
    return float(distances.min(axis=1).mean())


def off_diagonal(matrix: np.ndarray) -> np.ndarray:
    return matrix[~np.eye(matrix.shape[0], dtype=bool)]


@pytest.fixture
def rng():
    """Fixture to provide a seeded random stream"""
    return np.random.default_rng(11)


@pytest.mark.unit
class TestDppmcConfig:
    """Test suite for DPPMC hyperparameters"""

    def test_pool_size(self):
        """Test the pool holds rho * m vectors"""
        assert DppmcConfig(m=8, rho=10.0).pool_size == 80
        assert DppmcConfig(m=3, rho=2.5).pool_size == 8

    def test_pool_size_exceeds_m(self):
        """Test the pool is always larger than m"""
        assert DppmcConfig(m=2, rho=1.05).pool_size == 3

    def test_rho_must_exceed_one(self):
        """Test rho = 1 is rejected"""
        with pytest.raises(ValidationError):
            DppmcConfig(m=4, rho=1.0)

    def test_unknown_fields_rejected(self):
        """Test unknown keyword arguments are rejected"""
        with pytest.raises(ValidationError):
            DppmcConfig(m=4, bandwidth=0.5)

    def test_with_m(self):
        """Test with_m keeps every other setting"""
        cfg = DppmcConfig(m=4, rho=5.0, sigma=0.25).with_m(9)
        assert cfg.m == 9
        assert cfg.sigma == 0.25

    def test_median_scale_by_default(self):
        """Test sigma is relative to the median distance unless told otherwise"""
        assert DppmcConfig(m=4).scale == KernelScale.MEDIAN
        assert DppmcConfig(m=4, scale="absolute").scale == KernelScale.ABSOLUTE


@pytest.mark.unit
class TestSimilarityKernels:
    """Test suite for the fixed L-ensemble kernels"""

    def test_rbf_entries(self):
        """Test RBF entries for known distances"""
        pool = SamplePool.from_array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
        L = rbf_l_ensemble(pool, sigma=0.5)
        np.testing.assert_allclose(np.diag(L.matrix), 1.0)
        assert L.matrix[0, 1] == pytest.approx(np.exp(-1.0 / 0.5))
        assert L.matrix[1, 2] == pytest.approx(np.exp(-5.0 / 0.5))

    def test_rbf_rejects_nonpositive_sigma(self):
        """Test sigma = 0 is rejected"""
        with pytest.raises(ValueError):
            rbf_l_ensemble(SamplePool.from_array(np.eye(2)), sigma=0.0)

    def test_cosine_kernel(self):
        """Test cosine entries for known angles"""
        pool = SamplePool.from_array([[1.0, 0.0], [0.0, 3.0], [2.0, 2.0]])
        L = similarity_l_ensemble(pool, 0.5, Similarity.COSINE)
        assert L.matrix[0, 1] == pytest.approx(0.0)
        assert L.matrix[0, 2] == pytest.approx(np.sqrt(0.5))

    def test_axial_kernel(self):
        """Test axial entries depend on the angle only, not on length or sign"""
        pool = SamplePool.from_array([[1.0, 0.0], [0.0, 1.0], [3.0, 3.0], [-2.0, 0.0]])
        L = similarity_l_ensemble(pool, 1.0, Similarity.AXIAL)
        assert L.matrix[0, 1] == pytest.approx(np.exp(-1.0))
        assert L.matrix[0, 2] == pytest.approx(np.exp(-0.5))
        assert L.matrix[0, 3] == pytest.approx(1.0)

    def test_duplicates_are_jittered(self):
        """Test duplicate pool vectors get a diagonal jitter"""
        pool = SamplePool.from_array([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
        L = similarity_l_ensemble(pool, 0.5)
        assert L.matrix[0, 0] > 1.0
        assert L.matrix[2, 2] > 1.0

    def test_median_bandwidth(self):
        """Test the bandwidth is sigma times the median pairwise distance"""
        points = SamplePool.from_array([[0.0], [1.0], [3.0]])
        sq_dists = squareform(pdist(points.vectors, metric="sqeuclidean"))
        assert median_bandwidth(sq_dists, 0.5) == pytest.approx(1.0)
        assert median_bandwidth(np.zeros((3, 3)), 0.5) == 0.5
        assert median_bandwidth(np.zeros((1, 1)), 0.5) == 0.5

    def test_median_scale_matches_absolute_rescaled(self):
        """Test median scaling equals an absolute kernel at the rescaled bandwidth"""
        pool = SamplePool.from_array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
        scaled = similarity_l_ensemble(pool, 0.5, scale=KernelScale.MEDIAN).matrix
        bandwidth = median_bandwidth(squareform(pdist(pool.vectors, metric="sqeuclidean")), 0.5)
        np.testing.assert_allclose(scaled, rbf_l_ensemble(pool, bandwidth).matrix)

    def test_default_kernel_is_informative_in_sixteen_dimensions(self, rng):
        """Test the default kernel over 160 standard normal draws in R^16 is far from the identity"""
        pool = SamplePool.from_array(rng.standard_normal((160, 16)))
        scaled = off_diagonal(dppmc_l_ensemble(pool, DppmcConfig(m=16)).matrix)
        absolute = off_diagonal(dppmc_l_ensemble(pool, DppmcConfig(m=16, scale=KernelScale.ABSOLUTE)).matrix)
        assert scaled.max() > 0.3
        assert scaled.mean() > 0.05
        assert absolute.max() < 0.05


@pytest.mark.unit
class TestDppmcDraw:
    """Test suite for oversample-then-downsample draws"""

    def test_selects_m_distinct_pool_vectors(self, rng):
        """Test a draw keeps m distinct vectors of its pool"""
        cfg = DppmcConfig(m=6, rho=5.0)
        draw = dppmc_draw(isotropic_sampler(3), cfg, rng)
        assert draw.pool.size == 30
        assert draw.selected.size == 6
        assert len(set(draw.selected_indices)) == 6
        np.testing.assert_array_equal(draw.selected.vectors, draw.pool.vectors[list(draw.selected_indices)])

    def test_renormalization_only_shapes_the_kernel(self, rng):
        """Test renormalization never changes the vectors handed back"""
        cfg = DppmcConfig(m=5, rho=4.0, renormalize=True)
        draw = dppmc_draw(isotropic_sampler(4), cfg, rng)
        np.testing.assert_array_equal(draw.selected.vectors, draw.pool.vectors[list(draw.selected_indices)])
        norms = np.linalg.norm(draw.selected.vectors, axis=1)
        assert np.ptp(norms) > 0.0

    def test_seed_from_config(self):
        """Test the config seed makes draws repeatable"""
        cfg = DppmcConfig(m=4, rho=3.0, seed=42)
        first = dppmc_draw(isotropic_sampler(2), cfg)
        second = dppmc_draw(isotropic_sampler(2), cfg)
        assert first.selected_indices == second.selected_indices
        np.testing.assert_array_equal(first.pool.vectors, second.pool.vectors)

    def test_iid_draw(self, rng):
        """Test the baseline keeps every drawn vector"""
        draw = iid_draw(isotropic_sampler(2), 7, rng)
        assert draw.selected.size == 7
        assert draw.selected_indices == tuple(range(7))

    def test_cannot_select_more_than_pool(self, rng):
        """Test selecting more than the pool holds is rejected"""
        pool = sample_isotropic_gaussian(2, 3, rng)
        with pytest.raises(ValueError):
            dppmc_select(pool, 4, DppmcConfig(m=4), rng)

    def test_rank_deficiency_retries_then_raises(self, rng, caplog):
        """Test a rank-deficient kernel is retried once at half sigma"""
        # Points 1e-8 apart look identical to an RBF kernel of absolute bandwidth 0.5
        pool = SamplePool.from_array(np.arange(6, dtype=float)[:, None] * 1e-8)
        cfg = DppmcConfig(m=3, sigma=0.5, scale=KernelScale.ABSOLUTE)
        with caplog.at_level(logging.WARNING, logger="dppmc"):
            with pytest.raises(InsufficientRankError):
                dppmc_select(pool, 3, cfg, rng)
        assert "retrying with sigma=0.25" in caplog.text

    def test_spreads_points_more_than_iid(self):
        """Test DPPMC selections are more spread out than i.i.d. draws"""
        dppmc_spread = []
        iid_spread = []
        for seed in range(30):
            rng = np.random.default_rng(seed)
            draw = dppmc_draw(isotropic_sampler(2), DppmcConfig(m=10, rho=10.0, sigma=0.5), rng)
            dppmc_spread.append(mean_nearest_neighbor_distance(draw.selected.vectors))
            iid_spread.append(mean_nearest_neighbor_distance(iid_draw(isotropic_sampler(2), 10, rng).selected.vectors))
        assert np.mean(dppmc_spread) > np.mean(iid_spread)


@pytest.mark.unit
class TestDppmcEstimate:
    """Test suite for the plain-average estimator"""

    def test_constant_function(self, rng):
        """Test a constant integrand is estimated exactly"""
        draw = dppmc_draw(isotropic_sampler(3), DppmcConfig(m=5), rng)
        np.testing.assert_allclose(dppmc_estimate(draw, lambda v: 2.5), [2.5])

    def test_average_over_selected(self, rng):
        """Test the estimate is the plain mean over the selection"""
        draw = dppmc_draw(isotropic_sampler(3), DppmcConfig(m=5), rng)
        np.testing.assert_allclose(dppmc_estimate(draw, lambda v: v), draw.selected.vectors.mean(axis=0))
