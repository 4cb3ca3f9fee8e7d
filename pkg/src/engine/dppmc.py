"""
DPPMC Sampling Engine

Structured Monte Carlo for nonisotropic distributions:

    1. Oversample: draw rho * m i.i.d. vectors from the target distribution
    2. (Optional) renormalize: rescale every vector to the pool's mean norm,
       used only to build the similarity kernel
    3. Build a fixed-kernel L-ensemble over the pool
       (RBF: L_ij = exp(-|x_i - x_j|^2 / (2 s^2)))
    4. Downsample m vectors with a k-DPP (k = m)
    5. Estimate E[h(v)] by the plain average of h over the selected vectors

The vectors handed to the estimator are always the ORIGINAL pool vectors;
renormalization never changes what h is evaluated on.

Bandwidth:
    With scale="median" (the default) the RBF bandwidth is s = sigma * the
    median pairwise distance of the kernel view, so sigma = 0.5 means the
    same thing for 2-d and 16-d pools. scale="absolute" uses s = sigma.

Axial similarity:
    RBF over the embedding u -> u u^T of the unit directions u = x / |x|,
    with |u u^T - v v^T|^2 = 2 - 2 (u . v)^2. It ignores lengths and treats
    x and -x as the same point. For a pool of i.i.d. standard normal vectors
    the selection then depends on directions only, so every selected vector
    is still marginally N(0, I).

Rank deficiency:
    If the k-DPP cannot draw m items from the kernel's numerical rank the
    selection is retried once with sigma halved (RBF and axial kernels),
    then the error propagates.
    Duplicate pool vectors get a 1e-10 diagonal jitter before decomposition.

Example:
    cfg = DppmcConfig(m=8, rho=10.0, sigma=0.5)
    draw = dppmc_draw(lambda n, rng: sample_isotropic_gaussian(2, n, rng), cfg, rng)
    estimate = dppmc_estimate(draw, lambda v: np.cos(v @ tau))
"""
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial.distance import pdist, squareform

from src.exceptions import InsufficientRankError
from src.sampling.distributions import SamplePool
from src.sampling.dpp import LEnsemble, sample_k_dpp
from src.utils.logger import logger

# rho = 10 oversampling, RBF bandwidth 0.5
DEFAULT_RHO = 10.0
DEFAULT_SIGMA = 0.5
DUPLICATE_JITTER = 1e-10

# Draws n vectors from the target distribution
Sampler = Callable[[int, np.random.Generator], SamplePool]


class Similarity(str, Enum):
    """Fixed kernels available for the L-ensemble"""
    RBF = "rbf"
    COSINE = "cosine"
    AXIAL = "axial"


class KernelScale(str, Enum):
    """Units of the RBF bandwidth sigma"""
    ABSOLUTE = "absolute"
    MEDIAN = "median"


class DppmcConfig(BaseModel):
    """Hyperparameters of one DPPMC draw"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    m: int = Field(..., ge=1, description="Number of vectors kept after downsampling")
    rho: float = Field(DEFAULT_RHO, gt=1.0, description="Oversampling multiplier")
    renormalize: bool = Field(False, description="Build the kernel on equal-length copies of the pool")
    sigma: float = Field(DEFAULT_SIGMA, gt=0.0, description="RBF bandwidth")
    scale: KernelScale = Field(KernelScale.MEDIAN, description="sigma as is, or times the median pairwise distance")
    similarity: Similarity = Field(Similarity.RBF, description="Kernel used for the L-ensemble")
    seed: Optional[int] = Field(None, description="Seed used when the caller does not pass a stream")

    @property
    def pool_size(self) -> int:
        """rho * m rounded to the nearest integer, never below m + 1."""
        return max(int(round(self.rho * self.m)), self.m + 1)

    def with_m(self, m: int) -> "DppmcConfig":
        return self.model_copy(update={"m": m})


class DppmcDraw(BaseModel):
    """Downsampled set S_DPP together with the pool it came from"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    selected: SamplePool
    pool: SamplePool
    selected_indices: tuple[int, ...]


def _squared_distances(vectors: np.ndarray) -> np.ndarray:
    if vectors.shape[0] < 2:
        return np.zeros((vectors.shape[0], vectors.shape[0]))
    return squareform(pdist(vectors, metric="sqeuclidean"))


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    return vectors / np.where(norms > 0, norms, 1.0)[:, None]


def _axial_distances(vectors: np.ndarray) -> np.ndarray:
    """|u_i u_i^T - u_j u_j^T|_F^2 = 2 - 2 (u_i . u_j)^2 for unit directions u."""
    unit = _unit_rows(vectors)
    sq_dists = np.clip(2.0 - 2.0 * (unit @ unit.T) ** 2, 0.0, None)
    np.fill_diagonal(sq_dists, 0.0)
    return sq_dists


def _rbf_from_distances(sq_dists: np.ndarray, bandwidth: float) -> np.ndarray:
    matrix = np.exp(-sq_dists / (2.0 * bandwidth ** 2))
    np.fill_diagonal(matrix, 1.0)
    return matrix


def _rbf_matrix(vectors: np.ndarray, sigma: float) -> np.ndarray:
    return _rbf_from_distances(_squared_distances(vectors), sigma)


def _cosine_matrix(vectors: np.ndarray) -> np.ndarray:
    unit = _unit_rows(vectors)
    matrix = unit @ unit.T
    np.fill_diagonal(matrix, 1.0)
    return matrix


def median_bandwidth(sq_dists: np.ndarray, sigma: float) -> float:
    """sigma times the median off-diagonal distance; sigma itself when every pair coincides."""
    n = sq_dists.shape[0]
    if n < 2:
        return sigma
    median = float(np.sqrt(np.median(sq_dists[np.triu_indices(n, k=1)])))
    return sigma * median if median > 0 else sigma


def rbf_l_ensemble(pool: SamplePool, sigma: float) -> LEnsemble:
    """L_ij = exp(-|x_i - x_j|^2 / (2 sigma^2)); the diagonal is exactly 1."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return LEnsemble(matrix=_rbf_matrix(pool.vectors, sigma))


def similarity_l_ensemble(
    pool: SamplePool,
    sigma: float,
    similarity: Similarity = Similarity.RBF,
    scale: KernelScale = KernelScale.ABSOLUTE,
) -> LEnsemble:
    """L-ensemble for the configured similarity, jittered when the pool has duplicates."""
    if similarity == Similarity.COSINE:
        matrix = _cosine_matrix(pool.vectors)
    else:
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        if similarity == Similarity.AXIAL:
            sq_dists = _axial_distances(pool.vectors)
        else:
            sq_dists = _squared_distances(pool.vectors)
        bandwidth = median_bandwidth(sq_dists, sigma) if scale == KernelScale.MEDIAN else sigma
        matrix = _rbf_from_distances(sq_dists, bandwidth)
    if np.unique(pool.vectors, axis=0).shape[0] < pool.size:
        matrix = matrix + DUPLICATE_JITTER * np.eye(pool.size)
    return LEnsemble(matrix=matrix)


def dppmc_l_ensemble(pool: SamplePool, cfg: DppmcConfig, sigma: Optional[float] = None) -> LEnsemble:
    """The L-ensemble dppmc_select samples from (sigma overrides cfg.sigma)."""
    view = pool.renormalized() if cfg.renormalize else pool
    return similarity_l_ensemble(view, cfg.sigma if sigma is None else sigma, cfg.similarity, cfg.scale)


def dppmc_select(
    pool: SamplePool, m: int, cfg: DppmcConfig, rng: np.random.Generator
) -> tuple[int, ...]:
    """
    Pick m indices of the pool with a k-DPP over the configured kernel.

    Args:
        pool: Oversampled vectors
        m: Number of indices to keep
        cfg: Kernel settings (sigma, scale, similarity, renormalize)
        rng: Random stream

    Returns:
        Sorted tuple of m distinct indices into the pool
    """
    if m > pool.size:
        raise ValueError(f"cannot select {m} vectors from a pool of {pool.size}")
    sigma = cfg.sigma
    try:
        return sample_k_dpp(dppmc_l_ensemble(pool, cfg), m, rng)
    except InsufficientRankError as exc:
        if cfg.similarity == Similarity.COSINE:
            raise
        logger.warning(f"k-DPP rank {exc.rank} < {m} at sigma={sigma}; retrying with sigma={sigma / 2}")
        return sample_k_dpp(dppmc_l_ensemble(pool, cfg, sigma / 2.0), m, rng)


def dppmc_draw(dist: Sampler, cfg: DppmcConfig, rng: Optional[np.random.Generator] = None) -> DppmcDraw:
    """Oversample rho * m vectors from dist and keep m of them via the k-DPP."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    pool = dist(cfg.pool_size, rng)
    indices = dppmc_select(pool, cfg.m, cfg, rng)
    return DppmcDraw(selected=pool.subset(indices), pool=pool, selected_indices=indices)


def iid_draw(dist: Sampler, m: int, rng: np.random.Generator) -> DppmcDraw:
    """Plain Monte Carlo baseline with the same shape as a DPPMC draw."""
    pool = dist(m, rng)
    return DppmcDraw(selected=pool, pool=pool, selected_indices=tuple(range(m)))


def dppmc_estimate(
    draw: DppmcDraw, h: Callable[[np.ndarray], Union[float, Sequence[float], np.ndarray]]
) -> np.ndarray:
    """(1/m) * sum over the selected vectors of h(v); no importance weights."""
    values = np.array([np.atleast_1d(np.asarray(h(v), dtype=float)) for v in draw.selected.vectors])
    return values.mean(axis=0)
