"""
Unit tests for Gaussian mixture kernels, random-feature estimators, the MSE
harness and dataset loading.
"""
import numpy as np
import pytest
from scipy import integrate

from src.engine.dppmc import DppmcConfig, Similarity
from src.engine.kernels import (
    FeatureFrequencies,
    FeatureMethod,
    GaussianMixtureKernel,
    MseReport,
    MseRow,
    draw_frequencies,
    empirical_mse,
    gm_kernel_exact,
    gm_kernel_feature_estimate,
    latent_config,
    load_pair_dataset,
    mse_sweep,
    pair_points,
    qmc_spectral,
    random_gm_kernel,
    rbf_spectral_mixture,
    read_dataset_csv,
    sample_spectral,
    sample_spectral_with_latent,
    standardize,
    synthetic_dataset,
    write_dataset_csv,
)
from src.exceptions import NonNumericCellError, RaggedRowsError
from src.sampling.distributions import GaussianMixture, SamplePool, gaussian_mixture_density


@pytest.fixture
def rng():
    """Fixture to provide a seeded random stream"""
    return np.random.default_rng(7)


@pytest.fixture
def standard_kernel():
    """One zero-mean unit-variance component in one dimension"""
    return GaussianMixtureKernel(gm=GaussianMixture.isotropic(1))


@pytest.fixture
def pairs(rng):
    """Five random (x, y) pairs in R^3"""
    points = rng.normal(size=(10, 3))
    return [(points[i], points[i + 5]) for i in range(5)]


@pytest.mark.unit
class TestExactKernel:
    """Test suite for the closed-form kernel"""

    def test_value_at_zero_lag(self, rng):
        """Test the kernel equals one at zero lag"""
        kernel = random_gm_kernel(3, 4, rng)
        x = rng.normal(size=4)
        assert gm_kernel_exact(kernel, x, x) == pytest.approx(1.0)

    def test_standard_component(self, standard_kernel):
        """Test a standard normal component against its closed form"""
        assert gm_kernel_exact(standard_kernel, [0.5], [0.0]) == pytest.approx(np.exp(-np.pi ** 2 / 2.0), abs=1e-6)
        assert gm_kernel_exact(standard_kernel, [0.5], [0.0]) == pytest.approx(0.0071918, abs=1e-6)

    def test_symmetric(self, rng):
        """Test K(x, y) = K(y, x)"""
        kernel = random_gm_kernel(2, 3, rng)
        x, y = rng.normal(size=3), rng.normal(size=3)
        assert gm_kernel_exact(kernel, x, y) == pytest.approx(gm_kernel_exact(kernel, y, x))

    def test_matches_quadrature(self, rng):
        """Test the closed form against numerical Fourier quadrature"""
        gm = GaussianMixture(weights=[0.3, 0.7], means=[[0.4], [-0.2]], variances=[[0.5], [0.1]])
        kernel = GaussianMixtureKernel(gm=gm)
        tau = 0.37
        value, _ = integrate.quad(
            lambda w: np.cos(2.0 * np.pi * w * tau) * gaussian_mixture_density(gm, [w]), -15.0, 15.0, limit=400
        )
        assert gm_kernel_exact(kernel, [tau], [0.0]) == pytest.approx(value, abs=1e-6)

    def test_rbf_spectral_mixture(self):
        """Test the single-component mixture reproduces the RBF kernel"""
        kernel = rbf_spectral_mixture(2, sigma=1.5)
        tau = np.array([0.3, -1.2])
        expected = np.exp(-np.sum(tau ** 2) / (2.0 * 1.5 ** 2))
        assert gm_kernel_exact(kernel, tau, np.zeros(2)) == pytest.approx(expected)

    def test_dimension_mismatch(self, standard_kernel):
        """Test inputs of the wrong dimension are rejected"""
        with pytest.raises(ValueError):
            gm_kernel_exact(standard_kernel, [0.0, 1.0], [0.0, 0.0])


@pytest.mark.unit
class TestFeatureEstimate:
    """Test suite for the random-feature estimator"""

    def test_zero_lag_is_one(self, rng, standard_kernel):
        """Test the estimate is exactly one at zero lag"""
        freqs = draw_frequencies(standard_kernel, FeatureMethod.IID, 10, rng)
        assert gm_kernel_feature_estimate(freqs, [0.3], [0.3]) == pytest.approx(1.0)

    def test_half_period_is_minus_one(self):
        """Test a half-period frequency gives minus one"""
        freqs = FeatureFrequencies(frequencies=SamplePool.from_array([[0.5]]), method=FeatureMethod.IID)
        assert gm_kernel_feature_estimate(freqs, [1.0], [0.0]) == pytest.approx(-1.0)

    def test_estimates_lie_in_unit_interval(self, rng):
        """Test every estimate lies in [-1, 1]"""
        kernel = random_gm_kernel(2, 3, rng)
        freqs = draw_frequencies(kernel, FeatureMethod.IID, 7, rng)
        for _ in range(20):
            assert -1.0 <= gm_kernel_feature_estimate(freqs, rng.normal(size=3), rng.normal(size=3)) <= 1.0

    def test_large_sample_close_to_exact(self, rng, standard_kernel):
        """Test 100000 i.i.d. features land within 4 standard errors"""
        freqs = sample_spectral(standard_kernel, 100_000, rng)
        values = np.cos(2.0 * np.pi * freqs.vectors[:, 0] * 0.5)
        stderr = values.std(ddof=1) / np.sqrt(values.size)
        exact = gm_kernel_exact(standard_kernel, [0.5], [0.0])
        assert abs(values.mean() - exact) < 4.0 * stderr

    def test_unbiased_for_random_mixtures(self):
        """Test i.i.d. features are unbiased for random mixtures"""
        rng = np.random.default_rng(123)
        for _ in range(20):
            gm = GaussianMixture.random(2, 3, rng, mean_scale=0.5, variance_range=(0.01, 0.05))
            kernel = GaussianMixtureKernel(gm=gm)
            tau = rng.normal(size=3)
            values = np.cos(2.0 * np.pi * sample_spectral(kernel, 10_000, rng).vectors @ tau)
            stderr = values.std(ddof=1) / np.sqrt(values.size)
            assert abs(values.mean() - gm_kernel_exact(kernel, tau, np.zeros(3))) < 4.0 * stderr + 1e-12

    def test_qmc_frequencies_are_deterministic(self, rng):
        """Test Halton frequencies repeat for the same offset"""
        kernel = random_gm_kernel(2, 3, rng)
        np.testing.assert_array_equal(qmc_spectral(kernel, 16).vectors, qmc_spectral(kernel, 16).vectors)

    @pytest.mark.parametrize("method", list(FeatureMethod))
    def test_draw_frequencies_shape(self, rng, method):
        """Test every method returns m frequencies tagged with the method"""
        kernel = random_gm_kernel(2, 4, rng)
        freqs = draw_frequencies(kernel, method, 8, rng, DppmcConfig(m=1, rho=5.0))
        assert freqs.frequencies.vectors.shape == (8, 4)
        assert freqs.method == method


@pytest.mark.unit
class TestDppmcFrequencies:
    """Test suite for frequencies selected through their latent normals"""

    def test_latent_parts_rebuild_frequencies(self, rng):
        """Test each frequency is a signed mean plus the scaled latent normal"""
        gm = GaussianMixture(weights=[1.0], means=[[0.3, -0.2]], variances=[[0.5, 2.0]])
        freqs, latent = sample_spectral_with_latent(GaussianMixtureKernel(gm=gm), 50, rng)
        signed_means = (freqs.vectors - np.sqrt(gm.variances[0]) * latent.vectors) / gm.means[0]
        np.testing.assert_allclose(np.abs(signed_means), 1.0)

    def test_same_stream_as_iid_frequencies(self):
        """Test the i.i.d. sampler returns the frequencies of the latent sampler"""
        kernel = random_gm_kernel(2, 3, np.random.default_rng(0))
        plain = sample_spectral(kernel, 20, np.random.default_rng(5))
        paired, _ = sample_spectral_with_latent(kernel, 20, np.random.default_rng(5))
        np.testing.assert_array_equal(plain.vectors, paired.vectors)

    def test_latent_config(self):
        """Test the selection uses the axial kernel and keeps rho and sigma"""
        cfg = latent_config(DppmcConfig(m=1, rho=4.0, sigma=0.3, similarity="cosine", renormalize=True), 6)
        assert (cfg.m, cfg.rho, cfg.sigma) == (6, 4.0, 0.3)
        assert cfg.similarity == Similarity.AXIAL
        assert not cfg.renormalize

    @pytest.mark.slow
    def test_dppmc_estimate_is_unbiased(self):
        """Test the mean DPPMC estimate matches the exact kernel within 4 standard errors"""
        rng = np.random.default_rng(21)
        kernel = random_gm_kernel(2, 3, rng)
        x, y = np.array([0.4, -0.3, 0.2]), np.zeros(3)
        estimates = np.array(
            [
                gm_kernel_feature_estimate(draw_frequencies(kernel, "dppmc", 3, rng, DppmcConfig(m=3, rho=5.0)), x, y)
                for _ in range(3000)
            ]
        )
        stderr = estimates.std(ddof=1) / np.sqrt(estimates.size)
        assert abs(estimates.mean() - gm_kernel_exact(kernel, x, y)) < 4.0 * stderr + 1e-12

@pytest.mark.unit
class TestEmpiricalMse:
    """Test suite for the MSE harness"""

    def test_deterministic_given_seed(self, pairs):
        """Test equal seeds give equal MSE rows"""
        kernel = random_gm_kernel(2, 3, np.random.default_rng(0))
        first = empirical_mse(kernel, "dppmc", 6, pairs, 4, np.random.default_rng(9))
        second = empirical_mse(kernel, "dppmc", 6, pairs, 4, np.random.default_rng(9))
        assert first == second

    def test_many_frequencies_give_small_error(self, pairs):
        """Test 20000 frequencies give a small MSE"""
        kernel = random_gm_kernel(2, 3, np.random.default_rng(0))
        row = empirical_mse(kernel, FeatureMethod.IID, 20_000, pairs, 3, np.random.default_rng(1))
        assert row.mse < 1e-3
        assert row.ratio == pytest.approx(20_000 / 3)
        assert row.trials == 3

    def test_rejects_single_repetition(self, pairs):
        """Test a single repetition is rejected"""
        kernel = random_gm_kernel(1, 3, np.random.default_rng(0))
        with pytest.raises(ValueError):
            empirical_mse(kernel, FeatureMethod.IID, 3, pairs, 1, np.random.default_rng(1))

    def test_sweep_has_one_row_per_cell(self, pairs):
        """Test the sweep has one row per ratio and method"""
        kernel = random_gm_kernel(2, 3, np.random.default_rng(0))
        report = mse_sweep(kernel, ["iid", "qmc"], [1.0, 2.0], pairs, 3, np.random.default_rng(2))
        assert len(report.rows) == 4
        assert report.row(2.0, "qmc").ratio == 2.0
        with pytest.raises(KeyError):
            report.row(3.0, "iid")

    def test_report_csv(self, tmp_path):
        """Test the MSE report CSV keeps its rows and digest"""
        report = MseReport(
            rows=[
                MseRow(ratio=1.0, method=FeatureMethod.IID, mse=0.125, stderr=0.01, trials=10),
                MseRow(ratio=2.0, method=FeatureMethod.DPPMC, mse=1.0 / 3.0, stderr=0.0, trials=10),
            ]
        )
        path = report.to_csv(tmp_path / "mse.csv", digest="abc123")
        assert path.read_text().splitlines()[0] == "# config_digest=abc123"
        assert MseReport.from_csv(path) == report

    @pytest.mark.slow
    def test_iid_error_scales_inversely_with_samples(self, pairs):
        """Test i.i.d. MSE shrinks roughly as 1/m"""
        kernel = random_gm_kernel(2, 3, np.random.default_rng(0))
        small = empirical_mse(kernel, FeatureMethod.IID, 6, pairs, 400, np.random.default_rng(3))
        large = empirical_mse(kernel, FeatureMethod.IID, 18, pairs, 400, np.random.default_rng(4))
        assert 1.5 < small.mse / large.mse < 6.0


@pytest.mark.unit
class TestDatasets:
    """Test suite for dataset loading and pairing"""

    def test_standardize(self, rng):
        """Test columns get zero mean and unit variance"""
        points = standardize(rng.normal(5.0, 3.0, size=(200, 4)))
        np.testing.assert_allclose(points.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(points.std(axis=0), 1.0)

    def test_standardize_constant_column(self):
        """Test a constant column maps to zeros"""
        points = standardize(np.array([[1.0, 2.0], [1.0, 4.0]]))
        np.testing.assert_array_equal(points[:, 0], [0.0, 0.0])

    def test_synthetic_round_trip_is_exact(self, rng, tmp_path):
        """Test a written dataset reads back exactly"""
        points = synthetic_dataset(30, 4, rng)
        path = write_dataset_csv(points, tmp_path / "points.csv", header=True)
        np.testing.assert_array_equal(read_dataset_csv(path), points)

    def test_headerless_csv(self, tmp_path):
        """Test a CSV without header"""
        path = tmp_path / "data.csv"
        path.write_text("1,2\n3,4\n")
        np.testing.assert_array_equal(read_dataset_csv(path), [[1.0, 2.0], [3.0, 4.0]])

    def test_non_numeric_cell(self, tmp_path):
        """Test a non-numeric cell names its value"""
        path = tmp_path / "data.csv"
        path.write_text("a,b\n1,2\n3,oops\n")
        with pytest.raises(NonNumericCellError) as exc_info:
            read_dataset_csv(path)
        assert exc_info.value.value == "oops"

    def test_ragged_rows(self, tmp_path):
        """Test rows of unequal length are rejected"""
        path = tmp_path / "data.csv"
        path.write_text("1,2\n3,4,5\n")
        with pytest.raises(RaggedRowsError):
            read_dataset_csv(path)

    def test_two_rows_make_one_pair(self, tmp_path, rng):
        """Test two rows give one pair"""
        path = tmp_path / "data.csv"
        path.write_text("x,y\n0,1\n2,3\n")
        dataset = load_pair_dataset(path, rng)
        assert len(dataset.pairs) == 1
        assert sorted(dataset.pairs[0]) == [0, 1]

    def test_pairs_are_disjoint(self, rng):
        """Test pairs never share a point"""
        dataset = pair_points(rng.normal(size=(11, 2)), rng)
        flat = [i for pair in dataset.pairs for i in pair]
        assert len(dataset.pairs) == 5
        assert len(set(flat)) == 10

    def test_pair_limit(self, rng):
        """Test the pair count can be capped"""
        dataset = pair_points(rng.normal(size=(20, 2)), rng, n_pairs=3)
        assert len(dataset.pair_vectors()) == 3
