"""
Gaussian Mixture Kernels and Random-Feature Estimation

Exact evaluation of stationary Gaussian mixture kernels and their random
feature estimators (i.i.d., QMC and DPPMC frequencies), plus the empirical
MSE harness used to compare the three.

Fourier convention:
    The kernel with spectral mixture {w_q, mu_q, v_q} is

        K(x, y) = sum_q w_q prod_i exp(-2 pi^2 tau_i^2 v_i^q) cos(2 pi tau_i mu_i^q),

    tau = x - y. Frequencies are stored in the same units as mu and v and the
    feature map is cos(2 pi v^T tau). The product of per-coordinate cosines
    is the characteristic function of the coordinate-wise symmetrized
    mixture, so frequency draws flip the sign of every coordinate
    independently with probability 1/2. The estimator is then unbiased for
    the exact kernel in every dimension.

DPPMC frequencies:
    The k-DPP runs on the standard normal parts y of an oversampled pool
    (axial kernel on their directions) and the matching frequencies are
    kept. Component labels and signs stay i.i.d., so every kept frequency
    still follows the symmetrized spectral mixture and the estimate stays
    unbiased. Any similarity or renormalize setting is overridden.

MSE harness:
    Each repetition draws one frequency set and scores it on every (x, y)
    pair; the MSE is the mean squared error over repetitions and pairs and
    the standard error is taken across repetitions.

Datasets:
    Any numeric CSV (optional header) or synthetic standardized Gaussian
    blobs. Points are standardized per column and paired at random.
"""
import csv
from enum import Enum
from pathlib import Path
from typing import ClassVar, Iterable, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.engine.dppmc import DppmcConfig, Similarity, dppmc_select
from src.exceptions import NonNumericCellError, RaggedRowsError
from src.sampling.distributions import (
    GaussianMixture,
    SamplePool,
    halton_points,
    map_uniform_to_mixture,
    qmc_dimension,
)

# Default experiment scale
DEFAULT_PAIRS = 50
DEFAULT_REPETITIONS = 200
DEFAULT_POINTS = 200
DEFAULT_DIM = 8

# Random spectral mixtures: lengthscales in [1, 3] on standardized data
LENGTHSCALE_RANGE = (1.0, 3.0)
MEAN_FREQUENCY_SCALE = 0.1

# QMC repetitions start at a random index of the sequence
QMC_OFFSET_RANGE = 2 ** 20


class FeatureMethod(str, Enum):
    """How random-feature frequencies are drawn"""
    IID = "iid"
    QMC = "qmc"
    DPPMC = "dppmc"


class GaussianMixtureKernel(BaseModel):
    """Stationary kernel whose spectral density is a Gaussian mixture"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gm: GaussianMixture

    @property
    def dim(self) -> int:
        return self.gm.dim


class FeatureFrequencies(BaseModel):
    """Frequency samples of one random-feature estimator"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    frequencies: SamplePool
    method: FeatureMethod


class MseRow(BaseModel):
    """Empirical MSE of one method at one samples-per-dimension ratio"""

    ratio: float
    method: FeatureMethod
    mse: float = Field(..., ge=0.0)
    stderr: float = Field(..., ge=0.0)
    trials: int = Field(..., ge=2)


class MseReport(BaseModel):
    """Rows of ratio, method, mse, stderr, trials"""

    rows: list[MseRow] = Field(default_factory=list)

    CSV_HEADER: ClassVar[tuple[str, ...]] = ("ratio", "method", "mse", "stderr", "trials")

    def row(self, ratio: float, method: Union[FeatureMethod, str]) -> MseRow:
        method = FeatureMethod(method)
        for row in self.rows:
            if row.ratio == ratio and row.method == method:
                return row
        raise KeyError(f"no row for ratio={ratio}, method={method.value}")

    def to_csv(self, path: Union[str, Path], digest: Optional[str] = None) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as handle:
            if digest:
                handle.write(f"# config_digest={digest}\n")
            writer = csv.writer(handle)
            writer.writerow(self.CSV_HEADER)
            for row in self.rows:
                writer.writerow([repr(row.ratio), row.method.value, repr(row.mse), repr(row.stderr), row.trials])
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "MseReport":
        with open(path, newline="", encoding="utf-8") as handle:
            lines = [line for line in handle if not line.startswith("#")]
        reader = csv.DictReader(lines)
        return cls(rows=[MseRow(**record) for record in reader])


class PairDataset(BaseModel):
    """Standardized points and a seeded random pairing of them"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray
    pairs: tuple[tuple[int, int], ...]

    def pair_vectors(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.points[i], self.points[j]) for i, j in self.pairs]


def random_gm_kernel(n_components: int, dim: int, rng: np.random.Generator) -> GaussianMixtureKernel:
    """Random spectral mixture scaled for standardized inputs."""
    weights = rng.dirichlet(np.ones(n_components))
    weights = weights / weights.sum()
    means = rng.uniform(0.0, MEAN_FREQUENCY_SCALE, size=(n_components, dim))
    lengthscales = rng.uniform(*LENGTHSCALE_RANGE, size=(n_components, dim))
    variances = 1.0 / (4.0 * np.pi ** 2 * lengthscales ** 2)
    return GaussianMixtureKernel(gm=GaussianMixture(weights=weights, means=means, variances=variances))


def rbf_spectral_mixture(dim: int, sigma: float) -> GaussianMixtureKernel:
    """exp(-|tau|^2 / (2 sigma^2)) as a one-component mixture with v = 1 / (4 pi^2 sigma^2)."""
    variance = 1.0 / (4.0 * np.pi ** 2 * sigma ** 2)
    return GaussianMixtureKernel(gm=GaussianMixture.isotropic(dim, variance))


def gm_kernel_exact(kernel: GaussianMixtureKernel, x, y) -> float:
    """Closed-form Gaussian mixture kernel value."""
    tau = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if tau.shape != (kernel.dim,):
        raise ValueError(f"inputs must have dimension {kernel.dim}")
    gm = kernel.gm
    envelope = np.exp(-2.0 * np.pi ** 2 * tau ** 2 * gm.variances)
    oscillation = np.cos(2.0 * np.pi * tau * gm.means)
    return float(gm.weights @ np.prod(envelope * oscillation, axis=1))


def gm_kernel_feature_estimate(freqs: FeatureFrequencies, x, y) -> float:
    """(1/m) * sum_v cos(2 pi v^T (x - y))."""
    tau = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if tau.shape != (freqs.frequencies.dim,):
        raise ValueError(f"inputs must have dimension {freqs.frequencies.dim}")
    return float(np.mean(np.cos(2.0 * np.pi * freqs.frequencies.vectors @ tau)))


def sample_spectral(kernel: GaussianMixtureKernel, n: int, rng: np.random.Generator) -> SamplePool:
    """i.i.d. frequencies from the coordinate-wise symmetrized spectral mixture."""
    return sample_spectral_with_latent(kernel, n, rng)[0]


def sample_spectral_with_latent(
    kernel: GaussianMixtureKernel, n: int, rng: np.random.Generator
) -> tuple[SamplePool, SamplePool]:
    """
    i.i.d. frequencies together with their standard normal parts.

    Each frequency is s * mu_q + sqrt(v_q) * y with y = s * e, where q is the
    component, s the random signs and e the Gaussian noise. y is N(0, I) and
    independent of (q, s).

    Returns:
        (frequencies, latent y), row-aligned
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    gm = kernel.gm
    components = rng.choice(gm.n_components, size=n, p=gm.weights)
    noise = rng.standard_normal((n, gm.dim))
    signs = rng.choice(np.array([-1.0, 1.0]), size=noise.shape)
    latent = signs * noise
    frequencies = signs * gm.means[components] + np.sqrt(gm.variances[components]) * latent
    return SamplePool.from_array(frequencies), SamplePool.from_array(latent)


def qmc_spectral(kernel: GaussianMixtureKernel, n: int, sequence_offset: int = 1) -> SamplePool:
    """Halton frequencies; d extra coordinates decide the per-coordinate signs."""
    base_dim = qmc_dimension(kernel.gm)
    uniforms = halton_points(base_dim + kernel.dim, n, sequence_offset)
    draws = map_uniform_to_mixture(kernel.gm, uniforms[:, :base_dim])
    signs = np.where(uniforms[:, base_dim:] < 0.5, -1.0, 1.0)
    return SamplePool.from_array(draws * signs)


def latent_config(dppmc: DppmcConfig, m: int) -> DppmcConfig:
    """Selection settings for the latent normals: m items, axial kernel on their directions."""
    return dppmc.model_copy(update={"m": m, "similarity": Similarity.AXIAL, "renormalize": False})


def draw_frequencies(
    kernel: GaussianMixtureKernel,
    method: Union[FeatureMethod, str],
    m: int,
    rng: np.random.Generator,
    dppmc: Optional[DppmcConfig] = None,
) -> FeatureFrequencies:
    """
    Frequencies for one random-feature estimate.

    Args:
        kernel: Target kernel
        method: iid, qmc or dppmc
        m: Number of frequencies
        rng: Random stream (QMC uses it only for the sequence offset)
        dppmc: Oversampling and kernel settings for the dppmc method

    Returns:
        FeatureFrequencies tagged with the method
    """
    method = FeatureMethod(method)
    if method == FeatureMethod.IID:
        pool = sample_spectral(kernel, m, rng)
    elif method == FeatureMethod.QMC:
        offset = 1 + int(rng.integers(0, QMC_OFFSET_RANGE))
        pool = qmc_spectral(kernel, m, offset)
    else:
        cfg = latent_config(dppmc or DppmcConfig(m=m), m)
        oversampled, latent = sample_spectral_with_latent(kernel, cfg.pool_size, rng)
        pool = oversampled.subset(dppmc_select(latent, m, cfg, rng))
    return FeatureFrequencies(frequencies=pool, method=method)


def empirical_mse(
    kernel: GaussianMixtureKernel,
    method: Union[FeatureMethod, str],
    m: int,
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    t: int,
    rng: np.random.Generator,
    dppmc: Optional[DppmcConfig] = None,
) -> MseRow:
    """
    Empirical MSE of the random-feature estimator over t repetitions.

    Returns:
        MseRow with ratio m / d, the MSE averaged over repetitions and pairs
        and the standard error across repetitions
    """
    if t < 2 or m < 1:
        raise ValueError(f"need t >= 2 and m >= 1, got t={t}, m={m}")
    if not pairs:
        raise ValueError("at least one (x, y) pair is required")
    taus = np.array([np.asarray(x, dtype=float) - np.asarray(y, dtype=float) for x, y in pairs])
    exact = np.array([gm_kernel_exact(kernel, x, y) for x, y in pairs])

    per_repetition = np.empty(t)
    for rep, stream in enumerate(rng.spawn(t)):
        freqs = draw_frequencies(kernel, method, m, stream, dppmc)
        estimates = np.mean(np.cos(2.0 * np.pi * taus @ freqs.frequencies.vectors.T), axis=1)
        per_repetition[rep] = np.mean((estimates - exact) ** 2)

    return MseRow(
        ratio=m / kernel.dim,
        method=FeatureMethod(method),
        mse=float(per_repetition.mean()),
        stderr=float(per_repetition.std(ddof=1) / np.sqrt(t)),
        trials=t,
    )


def mse_sweep(
    kernel: GaussianMixtureKernel,
    methods: Iterable[Union[FeatureMethod, str]],
    ratios: Iterable[float],
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    t: int,
    rng: np.random.Generator,
    dppmc: Optional[DppmcConfig] = None,
) -> MseReport:
    """One MseRow per (ratio, method), each with its own child stream."""
    cells = [(ratio, FeatureMethod(method)) for ratio in ratios for method in methods]
    streams = rng.spawn(len(cells))
    rows = []
    for (ratio, method), stream in zip(cells, streams):
        m = max(1, int(round(ratio * kernel.dim)))
        rows.append(empirical_mse(kernel, method, m, pairs, t, stream, dppmc))
    return MseReport(rows=rows)


def standardize(points: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance per column; constant columns are only centered."""
    points = np.asarray(points, dtype=float)
    centered = points - points.mean(axis=0)
    scale = points.std(axis=0)
    return centered / np.where(scale > 0, scale, 1.0)


def _parse_cell(text: str, row: int, column: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise NonNumericCellError(row, column, text)


def read_dataset_csv(path: Union[str, Path]) -> np.ndarray:
    """Numeric CSV, one point per row; a non-numeric first row is a header."""
    with open(path, newline="", encoding="utf-8") as handle:
        rows = [row for row in csv.reader(handle) if row and not row[0].startswith("#")]
    if not rows:
        raise ValueError(f"dataset '{path}' is empty")
    try:
        [float(cell) for cell in rows[0]]
    except ValueError:
        rows = rows[1:]
    width = len(rows[0]) if rows else 0
    values = []
    for r, row in enumerate(rows):
        if len(row) != width:
            raise RaggedRowsError(r, width, len(row))
        values.append([_parse_cell(cell.strip(), r, c) for c, cell in enumerate(row)])
    return np.array(values, dtype=float)


def write_dataset_csv(points: np.ndarray, path: Union[str, Path], header: bool = False) -> Path:
    """Write points with shortest round-trip float formatting."""
    path = Path(path)
    points = np.asarray(points, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        if header:
            writer.writerow([f"x{i}" for i in range(points.shape[1])])
        for row in points:
            writer.writerow([repr(float(value)) for value in row])
    return path


def pair_points(points: np.ndarray, rng: np.random.Generator, n_pairs: Optional[int] = None) -> PairDataset:
    """Random disjoint pairing: shuffle, then pair consecutive points."""
    order = rng.permutation(points.shape[0])
    pairs = tuple((int(order[i]), int(order[i + 1])) for i in range(0, len(order) - 1, 2))
    if n_pairs is not None:
        pairs = pairs[:n_pairs]
    return PairDataset(points=points, pairs=pairs)


def load_pair_dataset(
    path: Union[str, Path], rng: np.random.Generator, n_pairs: Optional[int] = None
) -> PairDataset:
    """Read a CSV dataset, standardize it and pair its points at random."""
    points = read_dataset_csv(path)
    if points.shape[0] < 2:
        raise ValueError(f"dataset '{path}' needs at least two rows")
    return pair_points(standardize(points), rng, n_pairs)


def synthetic_dataset(
    n: int = DEFAULT_POINTS, d: int = DEFAULT_DIM, rng: Optional[np.random.Generator] = None, blobs: int = 3
) -> np.ndarray:
    """Standardized mixture of Gaussian blobs standing in for a real dataset."""
    rng = rng if rng is not None else np.random.default_rng(0)
    centers = rng.normal(0.0, 3.0, size=(blobs, d))
    labels = rng.integers(0, blobs, size=n)
    return standardize(centers[labels] + rng.standard_normal((n, d)))
