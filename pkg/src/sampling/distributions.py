"""
Sampling Distributions

Isotropic and nonisotropic distributions that Monte Carlo estimators draw
from, plus a deterministic low-discrepancy (QMC) path.

Types:
    - GaussianMixture: weights, means and diagonal variances in R^d
    - SamplePool: an ordered, immutable set of d-dimensional draws with a
      provenance tag per vector (fresh, reused or renormalized)

Random streams:
    Every operation that consumes randomness takes an explicit
    numpy.random.Generator. Nothing reads global random state, so equal
    seeds give bitwise-identical pools.

QMC path:
    An unscrambled Halton sequence (scipy.stats.qmc) with the first point
    skipped. For mixtures with more than one component the first Halton
    coordinate picks the component through the inverse CDF of the weights;
    the remaining coordinates go through the inverse standard-normal CDF.

Example:
    gm = GaussianMixture(weights=[0.5, 0.5], means=[[-1.0], [1.0]], variances=[[1.0], [1.0]])
    pool = sample_gaussian_mixture(gm, 1000, np.random.default_rng(0))
    qmc_pool = qmc_gaussian_mixture(gm, 64)
"""
from enum import Enum
from typing import Iterator, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.special import logsumexp, ndtri
from scipy.stats import qmc

from src.exceptions import QmcDimensionError

WEIGHT_SUM_TOL = 1e-12

# One prime base per Halton coordinate; the first 200 primes are supported
MAX_QMC_DIM = 200


class SampleTag(str, Enum):
    """Provenance of a vector inside a SamplePool"""
    FRESH = "fresh"
    REUSED = "reused"
    RENORMALIZED = "renormalized"


def _as_float_array(value, ndim: int) -> np.ndarray:
    array = np.array(value, dtype=float)
    if array.ndim != ndim:
        raise ValueError(f"expected a {ndim}-dimensional array, got shape {array.shape}")
    array.setflags(write=False)
    return array


class GaussianMixture(BaseModel):
    """Mixture of diagonal Gaussians in R^d"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @field_validator("weights", mode="before")
    @classmethod
    def _coerce_weights(cls, v):
        return _as_float_array(v, 1)

    @field_validator("means", "variances", mode="before")
    @classmethod
    def _coerce_matrix(cls, v):
        return _as_float_array(v, 2)

    @model_validator(mode="after")
    def _check_invariants(self):
        n_components = self.weights.shape[0]
        if n_components == 0:
            raise ValueError("a mixture needs at least one component")
        if self.means.shape != self.variances.shape or self.means.shape[0] != n_components:
            raise ValueError(
                f"means {self.means.shape} and variances {self.variances.shape} "
                f"must both be ({n_components}, d)"
            )
        if self.means.shape[1] == 0:
            raise ValueError("dimension must be at least 1")
        if np.any(self.weights <= 0):
            raise ValueError("mixture weights must be strictly positive")
        if abs(self.weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"mixture weights sum to {self.weights.sum()!r}, not 1")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be strictly positive")
        if not (np.all(np.isfinite(self.means)) and np.all(np.isfinite(self.variances))):
            raise ValueError("means and variances must be finite")
        return self

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    @property
    def n_components(self) -> int:
        return int(self.weights.shape[0])

    @property
    def components(self) -> Iterator[tuple[float, np.ndarray, np.ndarray]]:
        for q in range(self.n_components):
            yield float(self.weights[q]), self.means[q], self.variances[q]

    @classmethod
    def isotropic(cls, dim: int, variance: float = 1.0) -> "GaussianMixture":
        """Single zero-mean component with covariance variance * I."""
        return cls(weights=[1.0], means=np.zeros((1, dim)), variances=np.full((1, dim), variance))

    @classmethod
    def random(
        cls,
        n_components: int,
        dim: int,
        rng: np.random.Generator,
        mean_scale: float = 1.0,
        variance_range: tuple[float, float] = (0.5, 2.0),
    ) -> "GaussianMixture":
        """Dirichlet(1) weights, uniform means in [0, mean_scale), uniform variances."""
        weights = rng.dirichlet(np.ones(n_components))
        # Dirichlet draws can sum to 1 +/- a few ulp
        weights = weights / weights.sum()
        means = rng.uniform(0.0, mean_scale, size=(n_components, dim))
        variances = rng.uniform(variance_range[0], variance_range[1], size=(n_components, dim))
        return cls(weights=weights, means=means, variances=variances)


class SamplePool(BaseModel):
    """Ordered collection of vectors in R^d with per-vector provenance tags"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    vectors: np.ndarray
    tags: tuple[SampleTag, ...]

    @field_validator("vectors", mode="before")
    @classmethod
    def _coerce_vectors(cls, v):
        return _as_float_array(v, 2)

    @model_validator(mode="after")
    def _check_tags(self):
        if len(self.tags) != self.vectors.shape[0]:
            raise ValueError(f"{len(self.tags)} tags for {self.vectors.shape[0]} vectors")
        return self

    @classmethod
    def from_array(cls, vectors, tag: SampleTag = SampleTag.FRESH) -> "SamplePool":
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        return cls(vectors=vectors, tags=(tag,) * vectors.shape[0])

    @property
    def size(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return self.size

    def as_array(self) -> np.ndarray:
        return np.array(self.vectors)

    def subset(self, indices: Sequence[int]) -> "SamplePool":
        idx = list(indices)
        return SamplePool(vectors=self.vectors[idx], tags=tuple(self.tags[i] for i in idx))

    def concat(self, other: "SamplePool") -> "SamplePool":
        if other.dim != self.dim:
            raise ValueError(f"cannot concatenate pools of dimension {self.dim} and {other.dim}")
        return SamplePool(
            vectors=np.vstack([self.vectors, other.vectors]),
            tags=self.tags + other.tags,
        )

    def renormalized(self) -> "SamplePool":
        """View with every nonzero vector rescaled to the pool's mean Euclidean norm."""
        norms = np.linalg.norm(self.vectors, axis=1)
        target = norms.mean()
        scale = np.divide(target, norms, out=np.ones_like(norms), where=norms > 0)
        return SamplePool(
            vectors=self.vectors * scale[:, None],
            tags=(SampleTag.RENORMALIZED,) * self.size,
        )


def sample_gaussian_mixture(gm: GaussianMixture, n: int, rng: np.random.Generator) -> SamplePool:
    """
    Draw n i.i.d. vectors from a Gaussian mixture.

    The component index is drawn from the categorical weights, then a
    diagonal Gaussian draw is taken from that component.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    components = rng.choice(gm.n_components, size=n, p=gm.weights)
    noise = rng.standard_normal((n, gm.dim))
    vectors = gm.means[components] + np.sqrt(gm.variances[components]) * noise
    return SamplePool.from_array(vectors)


def sample_isotropic_gaussian(d: int, n: int, rng: np.random.Generator) -> SamplePool:
    """n i.i.d. standard normal vectors in R^d."""
    if n < 1 or d < 1:
        raise ValueError(f"need d >= 1 and n >= 1, got d={d}, n={n}")
    return SamplePool.from_array(rng.standard_normal((n, d)))


def halton_points(dim: int, n: int, offset: int = 1) -> np.ndarray:
    """
    Unscrambled Halton points in (0, 1)^dim.

    Args:
        dim: Number of coordinates (one prime base each)
        n: Number of points
        offset: Index of the first point; the default skips the origin

    Returns:
        Array of shape (n, dim)
    """
    if dim > MAX_QMC_DIM:
        raise QmcDimensionError(dim, MAX_QMC_DIM)
    if offset < 0:
        raise ValueError(f"sequence offset must be nonnegative, got {offset}")
    engine = qmc.Halton(d=dim, scramble=False)
    if offset:
        engine.fast_forward(offset)
    return engine.random(n)


def map_uniform_to_mixture(gm: GaussianMixture, uniforms: np.ndarray) -> np.ndarray:
    """
    Push points of (0, 1)^(d or d+1) through the mixture's inverse CDF.

    Single-component mixtures use all d coordinates for the Gaussian part;
    otherwise coordinate 0 selects the component.
    """
    if gm.n_components == 1:
        components = np.zeros(uniforms.shape[0], dtype=int)
        gaussian_part = uniforms
    else:
        cumulative = np.cumsum(gm.weights)
        components = np.minimum(np.searchsorted(cumulative, uniforms[:, 0], side="right"), gm.n_components - 1)
        gaussian_part = uniforms[:, 1:]
    if gaussian_part.shape[1] != gm.dim:
        raise ValueError(f"expected {gm.dim} Gaussian coordinates, got {gaussian_part.shape[1]}")
    return gm.means[components] + np.sqrt(gm.variances[components]) * ndtri(gaussian_part)


def qmc_dimension(gm: GaussianMixture) -> int:
    """Halton coordinates consumed per point by qmc_gaussian_mixture."""
    return gm.dim if gm.n_components == 1 else gm.dim + 1


def qmc_gaussian_mixture(gm: GaussianMixture, n: int, sequence_offset: int = 1) -> SamplePool:
    """Deterministic low-discrepancy point set mapped to the mixture."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    uniforms = halton_points(qmc_dimension(gm), n, sequence_offset)
    return SamplePool.from_array(map_uniform_to_mixture(gm, uniforms))


def gaussian_mixture_density(gm: GaussianMixture, x) -> float:
    """Sum_q w_q * prod_i N(x_i; mu_i^q, v_i^q)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != gm.dim:
        raise ValueError(f"point has dimension {x.shape[0]}, mixture has {gm.dim}")
    diff = x[None, :] - gm.means
    log_components = -0.5 * np.sum(diff ** 2 / gm.variances + np.log(2.0 * np.pi * gm.variances), axis=1)
    return float(np.exp(logsumexp(log_components, b=gm.weights)))


def star_discrepancy_2d(points: np.ndarray) -> float:
    """
    Box-counting proxy for the star discrepancy of points in [0, 1)^2.

    Anchored boxes [0, a) x [0, b) are enumerated with corners at the
    point coordinates (plus 1); both open and closed counts are compared
    against the box volume.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    xs = np.unique(np.append(points[:, 0], 1.0))
    ys = np.unique(np.append(points[:, 1], 1.0))
    below_x_open = points[None, :, 0] < xs[:, None]
    below_x_closed = points[None, :, 0] <= xs[:, None]
    below_y_open = points[None, :, 1] < ys[:, None]
    below_y_closed = points[None, :, 1] <= ys[:, None]
    open_counts = below_x_open.astype(float) @ below_y_open.T.astype(float)
    closed_counts = below_x_closed.astype(float) @ below_y_closed.T.astype(float)
    volume = np.outer(xs, ys)
    return float(max(np.max(np.abs(open_counts / n - volume)), np.max(np.abs(closed_counts / n - volume))))
