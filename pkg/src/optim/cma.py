"""
CMA-ES with an optional DPPMC candidate sampler.

Standard (mu/mu_w, lambda)-CMA-ES: weighted recombination of the best
mu = floor(lambda/2) candidates, cumulative step-size adaptation through
p_sigma, and rank-one plus rank-mu covariance updates through p_c.

DPPMC variant:
    rho * lambda whitened draws z ~ N(0, I) are pooled and a k-DPP keeps
    lambda of them before the C^(1/2) transform, so the bandwidth does not
    depend on the conditioning of C. The kernel is the axial RBF on the
    directions of z, which ignores lengths and signs. Every kept z is
    therefore still marginally N(0, I); only the search directions spread.
    Function evaluations per generation stay at lambda.

After every update C is symmetrized and its eigenvalues are floored at
1e-14; a step size above 1e8 aborts the run with CovarianceBlowupError.
"""
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import eigh

from src.engine.dppmc import DppmcConfig, Similarity, dppmc_select
from src.exceptions import CovarianceBlowupError
from src.models.run_record import RunRecord, RunRow
from src.optim.blackbox import Blackbox
from src.sampling.distributions import SamplePool
from src.utils.logger import logger

EIGEN_FLOOR = 1e-14
MAX_STEP_SIZE = 1e8
MIN_POPULATION = 4

# Hansen's default constants
HSIG_THRESHOLD = 1.4
CSA_DAMPING_OFFSET = 1.0
RANK_ONE_OFFSET = 1.3
CUMULATION_OFFSET = 4.0


class CmaParameters(BaseModel):
    """Strategy constants for a given dimension and population size"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lam: int = Field(..., ge=MIN_POPULATION)
    mu: int
    weights: np.ndarray
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    chi_n: float

    @classmethod
    def default(cls, dim: int, lam: int) -> "CmaParameters":
        if lam < MIN_POPULATION:
            raise ValueError(f"population must be at least {MIN_POPULATION}, got {lam}")
        mu = lam // 2
        raw = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
        weights = raw / raw.sum()
        mu_eff = 1.0 / np.sum(weights ** 2)
        n = float(dim)
        c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0)
        d_sigma = CSA_DAMPING_OFFSET + 2.0 * max(0.0, np.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
        c_c = (CUMULATION_OFFSET + mu_eff / n) / (n + CUMULATION_OFFSET + 2.0 * mu_eff / n)
        c_1 = 2.0 / ((n + RANK_ONE_OFFSET) ** 2 + mu_eff)
        c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
        chi_n = np.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n ** 2))
        return cls(
            lam=lam, mu=mu, weights=weights, mu_eff=float(mu_eff), c_sigma=float(c_sigma),
            d_sigma=float(d_sigma), c_c=float(c_c), c_1=float(c_1), c_mu=float(c_mu), chi_n=float(chi_n),
        )


class CmaState(BaseModel):
    """Mean, step size, covariance and evolution paths"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: np.ndarray
    sigma: float = Field(..., gt=0.0)
    cov: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    generation: int = Field(0, ge=0)
    evaluations: int = Field(0, ge=0)

    @classmethod
    def initial(cls, mean, sigma: float) -> "CmaState":
        mean = np.array(mean, dtype=float)
        d = mean.shape[0]
        return cls(mean=mean, sigma=sigma, cov=np.eye(d), p_sigma=np.zeros(d), p_c=np.zeros(d))

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        """(B, D) with C = B diag(D^2) B^T."""
        values, vectors = eigh(self.cov)
        return vectors, np.sqrt(np.maximum(values, EIGEN_FLOOR))


def floor_covariance(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and clip eigenvalues at the floor."""
    cov = 0.5 * (cov + cov.T)
    values, vectors = eigh(cov)
    if values.min() >= EIGEN_FLOOR:
        return cov
    floored = (vectors * np.maximum(values, EIGEN_FLOOR)) @ vectors.T
    return 0.5 * (floored + floored.T)


def whitened_config(dppmc: DppmcConfig, lam: int) -> DppmcConfig:
    """Selection settings for whitened draws: lambda items, axial kernel on the directions."""
    return dppmc.model_copy(update={"m": lam, "similarity": Similarity.AXIAL, "renormalize": False})


def whitened_draws(
    dim: int, lam: int, dppmc: Optional[DppmcConfig], rng: np.random.Generator
) -> np.ndarray:
    """lambda standard normal draws, i.i.d. or kept from a rho * lambda pool by the k-DPP."""
    if dppmc is None:
        return rng.standard_normal((lam, dim))
    cfg = whitened_config(dppmc, lam)
    pool = SamplePool.from_array(rng.standard_normal((cfg.pool_size, dim)))
    return pool.vectors[list(dppmc_select(pool, lam, cfg, rng))]


def cma_es_step(
    state: CmaState,
    f: Blackbox,
    lam: int,
    dppmc: Optional[DppmcConfig],
    rng: np.random.Generator,
    params: Optional[CmaParameters] = None,
    seed: int = 0,
) -> tuple[CmaState, RunRow]:
    """
    One CMA-ES generation (lambda evaluations).

    Args:
        state: Current strategy state
        f: Counted blackbox (minimized)
        lam: Population size, at least 4
        dppmc: Oversample-and-downsample the whitened draws when set
        rng: Random stream
        params: Strategy constants; defaults for (d, lam) when omitted

    Returns:
        New state and the generation's RunRow

    Raises:
        CovarianceBlowupError: If the step size exceeds 1e8
    """
    params = params or CmaParameters.default(state.dim, lam)
    b, d = state.eigensystem()

    z = whitened_draws(state.dim, lam, dppmc, rng)
    y = (z * d) @ b.T
    candidates = state.mean + state.sigma * y
    values = f.evaluate_batch(candidates)

    order = np.argsort(values, kind="stable")[: params.mu]
    w = params.weights
    y_w = w @ y[order]
    z_w = w @ z[order]
    mean = state.mean + state.sigma * y_w

    p_sigma = (1.0 - params.c_sigma) * state.p_sigma + np.sqrt(
        params.c_sigma * (2.0 - params.c_sigma) * params.mu_eff
    ) * (b @ z_w)
    generation = state.generation + 1
    norm_ps = np.linalg.norm(p_sigma)
    h_sigma = float(
        norm_ps / np.sqrt(1.0 - (1.0 - params.c_sigma) ** (2 * generation))
        < (HSIG_THRESHOLD + 2.0 / (state.dim + 1.0)) * params.chi_n
    )
    p_c = (1.0 - params.c_c) * state.p_c + h_sigma * np.sqrt(params.c_c * (2.0 - params.c_c) * params.mu_eff) * y_w

    rank_mu = (y[order].T * w) @ y[order]
    correction = (1.0 - h_sigma) * params.c_c * (2.0 - params.c_c)
    cov = (
        (1.0 - params.c_1 - params.c_mu) * state.cov
        + params.c_1 * (np.outer(p_c, p_c) + correction * state.cov)
        + params.c_mu * rank_mu
    )
    sigma = state.sigma * np.exp((params.c_sigma / params.d_sigma) * (norm_ps / params.chi_n - 1.0))
    if not np.isfinite(sigma) or sigma > MAX_STEP_SIZE:
        raise CovarianceBlowupError(generation, float(sigma))

    new_state = CmaState(
        mean=mean,
        sigma=float(sigma),
        cov=floor_covariance(cov),
        p_sigma=p_sigma,
        p_c=p_c,
        generation=generation,
        evaluations=state.evaluations + lam,
    )
    row = RunRow(
        iteration=generation,
        cumulative_evals=new_state.evaluations,
        objective=f.monitor(mean),
        seed=seed,
        method="cmaes+dppmc" if dppmc is not None else "cmaes",
    )
    logger.debug(f"cmaes generation {generation}: sigma={sigma:.3g} objective={row.objective:.6g}")
    return new_state, row


def run_cma_es(
    f: Blackbox,
    x0,
    sigma0: float,
    lam: int,
    generations: int,
    rng: np.random.Generator,
    dppmc: Optional[DppmcConfig] = None,
    seed: int = 0,
) -> RunRecord:
    """Run CMA-ES for a fixed number of generations."""
    state = CmaState.initial(x0, sigma0)
    params = CmaParameters.default(state.dim, lam)
    record = RunRecord(seed=seed, method="cmaes+dppmc" if dppmc is not None else "cmaes")
    for _ in range(generations):
        state, row = cma_es_step(state, f, lam, dppmc, rng, params, seed)
        record.rows.append(row)
    return record
