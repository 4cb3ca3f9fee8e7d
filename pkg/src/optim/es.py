"""
Evolution-Strategy Optimizers

ES gradient estimation from blackbox evaluations plus two ES optimizers,
each with an optional DPPMC perturbation sampler.

Gradient estimator (Gaussian smoothing):
    forward     (1 / (m sigma)) sum_i f(theta + sigma g_i) g_i
    antithetic  (1 / m) sum_i (f(theta + sigma g_i) - f(theta - sigma g_i)) / (2 sigma) g_i

    For an affine f the antithetic terms are exactly (c^T g_i) g_i, so the
    estimate is (G^T G / m) c and equals c whenever G^T G = m I.

Guided ES:
    Perturbations z ~ N(0, Sigma), Sigma = (alpha/d) I + ((1-alpha)/k) U U^T,
    U an orthonormal basis of the last k gradient estimates. With an empty
    buffer Sigma = I/d. The antithetic estimate is scaled by beta = 2 and
    theta moves against it with a fixed learning rate. alpha = 1 is vanilla ES.

Trust-Region ES with sample reuse:
    Each epoch reuses the round(delta m) archived points closest to the
    current theta and samples m - round(delta m) fresh Gaussian
    perturbations. The DPPMC variant samples round((1 - delta/2) m) fresh
    perturbations, pools them with the reused ones (relative to the current
    theta) and keeps m via a k-DPP; only kept fresh perturbations are
    evaluated. The first epoch has no archive and samples m fresh.

    Gradient modes:
        mc     forward estimator over the fresh directions
        ridge  (G^T G + lambda I) g = G^T y, y_i = f(theta + eps_i) - f(theta)
"""
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import orth, solve

from src.engine.dppmc import DppmcConfig, dppmc_select
from src.models.run_record import RunRecord, RunRow
from src.optim.blackbox import Blackbox
from src.sampling.distributions import SamplePool, SampleTag
from src.utils.logger import logger

GUIDED_BETA = 2.0
DEFAULT_ALPHA = 0.5
DEFAULT_BUFFER = 1
DEFAULT_DELTA = 0.2
DEFAULT_RIDGE_LAMBDA = 1e-3
LEARNING_RATES = (0.5, 0.1, 0.05, 0.01)


def _array(value) -> np.ndarray:
    array = np.array(value, dtype=float)
    array.setflags(write=False)
    return array


class EsGradientEstimate(BaseModel):
    """Smoothed-gradient estimate and what it cost"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gradient: np.ndarray
    evaluations_used: int = Field(..., ge=1)
    sigma: float = Field(..., gt=0.0)


def forward_gradient(values: np.ndarray, directions: np.ndarray, sigma: float) -> np.ndarray:
    """(1 / (m sigma)) sum_i values_i directions_i."""
    return directions.T @ values / (directions.shape[0] * sigma)


def es_gradient(
    f: Blackbox, theta, sigma: float, perturbations: SamplePool, antithetic: bool = False
) -> EsGradientEstimate:
    """
    ES estimate of the sigma-smoothed gradient at theta.

    Args:
        f: Counted blackbox
        theta: Current parameters
        sigma: Smoothing radius
        perturbations: Directions g_i (unscaled)
        antithetic: Use (f(theta + sigma g) - f(theta - sigma g)) pairs

    Returns:
        EsGradientEstimate with m (forward) or 2m (antithetic) evaluations
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if perturbations.size == 0:
        raise ValueError("at least one perturbation is required")
    theta = np.asarray(theta, dtype=float)
    directions = perturbations.vectors
    if antithetic:
        plus = f.evaluate_batch(theta + sigma * directions)
        minus = f.evaluate_batch(theta - sigma * directions)
        gradient = directions.T @ ((plus - minus) / (2.0 * sigma)) / directions.shape[0]
        used = 2 * directions.shape[0]
    else:
        gradient = forward_gradient(f.evaluate_batch(theta + sigma * directions), directions, sigma)
        used = directions.shape[0]
    return EsGradientEstimate(gradient=_array(gradient), evaluations_used=used, sigma=sigma)


def _method_label(base: str, dppmc: bool) -> str:
    return f"{base}+dppmc" if dppmc else base


# Guided ES

class GuidedEsState(BaseModel):
    """Parameters plus the surrogate-gradient buffer that shapes the sampling covariance"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    theta: np.ndarray
    buffer: tuple[np.ndarray, ...] = ()
    k: int = Field(DEFAULT_BUFFER, ge=1, description="Buffer capacity")
    alpha: float = Field(DEFAULT_ALPHA, ge=0.0, le=1.0, description="Isotropic share of the covariance")
    sigma: float = Field(0.1, gt=0.0)
    learning_rate: float = Field(0.1, gt=0.0)
    iteration: int = Field(0, ge=0)
    evaluations: int = Field(0, ge=0)

    @property
    def dim(self) -> int:
        return int(self.theta.shape[0])

    def basis(self) -> Optional[np.ndarray]:
        """Orthonormal d x k_eff basis of the buffer, or None when it spans nothing."""
        if not self.buffer:
            return None
        u = orth(np.column_stack(self.buffer))
        return u if u.shape[1] > 0 else None

    def covariance(self) -> np.ndarray:
        u = self.basis()
        if u is None:
            return np.eye(self.dim) / self.dim
        return (self.alpha / self.dim) * np.eye(self.dim) + ((1.0 - self.alpha) / self.k) * (u @ u.T)

    def push(self, gradient: np.ndarray) -> tuple[np.ndarray, ...]:
        return (self.buffer + (_array(gradient),))[-self.k:]


def guided_perturbations(state: GuidedEsState, n: int, rng: np.random.Generator) -> SamplePool:
    """n draws of sqrt(alpha/d) xi + sqrt((1-alpha)/k) U eta."""
    u = state.basis()
    xi = rng.standard_normal((n, state.dim))
    if u is None:
        return SamplePool.from_array(xi / np.sqrt(state.dim))
    eta = rng.standard_normal((n, u.shape[1]))
    return SamplePool.from_array(
        np.sqrt(state.alpha / state.dim) * xi + np.sqrt((1.0 - state.alpha) / state.k) * eta @ u.T
    )


def guided_es_step(
    state: GuidedEsState,
    f: Blackbox,
    m: int,
    dppmc: Optional[DppmcConfig],
    rng: np.random.Generator,
    seed: int = 0,
) -> tuple[GuidedEsState, RunRow]:
    """
    One Guided ES iteration (2m evaluations).

    With dppmc set, rho * m perturbations are drawn from N(0, Sigma) and a
    k-DPP keeps m of them.
    """
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    if dppmc is None:
        perturbations = guided_perturbations(state, m, rng)
    else:
        cfg = dppmc.with_m(m)
        pool = guided_perturbations(state, cfg.pool_size, rng)
        perturbations = pool.subset(dppmc_select(pool, m, cfg, rng))

    estimate = es_gradient(f, state.theta, state.sigma, perturbations, antithetic=True)
    gradient = GUIDED_BETA * estimate.gradient
    theta = state.theta - state.learning_rate * gradient

    new_state = state.model_copy(
        update={
            "theta": _array(theta),
            "buffer": state.push(gradient),
            "iteration": state.iteration + 1,
            "evaluations": state.evaluations + estimate.evaluations_used,
        }
    )
    row = RunRow(
        iteration=new_state.iteration,
        cumulative_evals=new_state.evaluations,
        objective=f.monitor(theta),
        seed=seed,
        method=_method_label("guided-es", dppmc is not None),
    )
    logger.debug(f"guided-es step {row.iteration}: evals={row.cumulative_evals} objective={row.objective:.6g}")
    return new_state, row


def run_guided_es(
    f: Blackbox,
    theta0,
    iterations: int,
    rng: np.random.Generator,
    m: Optional[int] = None,
    dppmc: Optional[DppmcConfig] = None,
    seed: int = 0,
    **state_kwargs,
) -> RunRecord:
    """Run Guided ES for a fixed number of iterations; m defaults to d."""
    state = GuidedEsState(theta=_array(theta0), **state_kwargs)
    m = m or state.dim
    record = RunRecord(seed=seed, method=_method_label("guided-es", dppmc is not None))
    for _ in range(iterations):
        state, row = guided_es_step(state, f, m, dppmc, rng, seed)
        record.rows.append(row)
    return record


# Trust-Region ES

class GradientMode(str, Enum):
    MC = "mc"
    RIDGE = "ridge"


class TrustRegionPlan(BaseModel):
    """Sample counts of one Trust-Region epoch"""

    n_reuse: int
    n_fresh: int
    pool_size: int
    n_selected: int


def plan_trust_region(m: int, delta: float, dppmc: bool, archive_size: int = -1) -> TrustRegionPlan:
    """
    Reuse round(delta m); sample m - reuse fresh (baseline) or
    round((1 - delta/2) m) fresh (DPPMC). An empty archive means m fresh.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    n_reuse = int(round(delta * m))
    if n_reuse < 1:
        raise ValueError(f"delta * m must be at least 1, got {delta * m}")
    if n_reuse >= m:
        raise ValueError(f"delta={delta} leaves no fresh perturbations at m={m}")
    if archive_size == 0:
        return TrustRegionPlan(n_reuse=0, n_fresh=m, pool_size=m, n_selected=m)
    if dppmc:
        n_fresh = int(round((1.0 - delta / 2.0) * m))
        return TrustRegionPlan(n_reuse=n_reuse, n_fresh=n_fresh, pool_size=n_reuse + n_fresh, n_selected=m)
    return TrustRegionPlan(n_reuse=n_reuse, n_fresh=m - n_reuse, pool_size=m, n_selected=m)


class TrustRegionState(BaseModel):
    """Parameters plus the previous epoch's evaluated points"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    theta: np.ndarray
    archive_points: Optional[np.ndarray] = Field(None, description="Absolute points theta_prev + eps_i")
    archive_values: Optional[np.ndarray] = None
    delta: float = Field(DEFAULT_DELTA, gt=0.0, lt=1.0)
    ridge_lambda: float = Field(DEFAULT_RIDGE_LAMBDA, gt=0.0)
    mode: GradientMode = GradientMode.RIDGE
    sigma: float = Field(0.1, gt=0.0)
    learning_rate: float = Field(0.1, gt=0.0)
    iteration: int = Field(0, ge=0)
    evaluations: int = Field(0, ge=0)

    @property
    def archive_size(self) -> int:
        return 0 if self.archive_points is None else int(self.archive_points.shape[0])


def ridge_gradient(perturbations: np.ndarray, differences: np.ndarray, ridge_lambda: float) -> np.ndarray:
    """Solve (G^T G + lambda I) g = G^T y."""
    d = perturbations.shape[1]
    gram = perturbations.T @ perturbations + ridge_lambda * np.eye(d)
    return solve(gram, perturbations.T @ differences, assume_a="pos")


def _closest(points: np.ndarray, theta: np.ndarray, n: int) -> np.ndarray:
    distances = np.linalg.norm(points - theta, axis=1)
    return np.argsort(distances, kind="stable")[:n]


def trust_region_es_step(
    state: TrustRegionState,
    f: Blackbox,
    m: int,
    dppmc_enabled: bool,
    rng: np.random.Generator,
    dppmc: Optional[DppmcConfig] = None,
    seed: int = 0,
) -> tuple[TrustRegionState, RunRow]:
    """
    One Trust-Region ES epoch.

    Args:
        state: Current parameters and archive
        f: Counted blackbox
        m: Perturbations used for the gradient each epoch
        dppmc_enabled: Use the oversample-and-downsample variant
        rng: Random stream
        dppmc: Kernel settings for the k-DPP (defaults when omitted)

    Returns:
        New state (archive of size m) and the epoch's RunRow
    """
    plan = plan_trust_region(m, state.delta, dppmc_enabled, state.archive_size)
    theta = state.theta
    used = 0

    if plan.n_reuse:
        keep = _closest(state.archive_points, theta, plan.n_reuse)
        reused_eps = state.archive_points[keep] - theta
        reused_values = state.archive_values[keep]
    else:
        reused_eps = np.empty((0, theta.shape[0]))
        reused_values = np.empty(0)
    fresh_directions = rng.standard_normal((plan.n_fresh, theta.shape[0]))

    # Pool in eps / sigma units: reused first, then fresh
    pool = SamplePool(
        vectors=np.vstack([reused_eps / state.sigma, fresh_directions]),
        tags=(SampleTag.REUSED,) * plan.n_reuse + (SampleTag.FRESH,) * plan.n_fresh,
    )
    if plan.pool_size > plan.n_selected:
        cfg = (dppmc or DppmcConfig(m=m)).with_m(m)
        selected = np.array(dppmc_select(pool, m, cfg, rng))
    else:
        selected = np.arange(pool.size)

    reused_sel = selected[selected < plan.n_reuse]
    fresh_sel = selected[selected >= plan.n_reuse] - plan.n_reuse
    fresh_eps = state.sigma * fresh_directions[fresh_sel]
    fresh_values = f.evaluate_batch(theta + fresh_eps) if fresh_sel.size else np.empty(0)
    used += fresh_sel.size

    eps = np.vstack([reused_eps[reused_sel], fresh_eps])
    values = np.concatenate([reused_values[reused_sel], fresh_values])

    if state.mode == GradientMode.RIDGE:
        f_theta = f(theta)
        used += 1
        gradient = ridge_gradient(eps, values - f_theta, state.ridge_lambda)
    else:
        gradient = forward_gradient(fresh_values, fresh_directions[fresh_sel], state.sigma)

    new_theta = theta - state.learning_rate * gradient
    new_state = state.model_copy(
        update={
            "theta": _array(new_theta),
            "archive_points": _array(theta + eps),
            "archive_values": _array(values),
            "iteration": state.iteration + 1,
            "evaluations": state.evaluations + used,
        }
    )
    row = RunRow(
        iteration=new_state.iteration,
        cumulative_evals=new_state.evaluations,
        objective=f.monitor(new_theta),
        seed=seed,
        method=_method_label("trust-region-es", dppmc_enabled),
    )
    logger.debug(
        f"trust-region-es epoch {row.iteration}: reused={reused_sel.size} fresh={fresh_sel.size} "
        f"objective={row.objective:.6g}"
    )
    return new_state, row


def run_trust_region_es(
    f: Blackbox,
    theta0,
    iterations: int,
    rng: np.random.Generator,
    m: Optional[int] = None,
    dppmc_enabled: bool = False,
    dppmc: Optional[DppmcConfig] = None,
    seed: int = 0,
    **state_kwargs,
) -> RunRecord:
    """Run Trust-Region ES for a fixed number of epochs; m defaults to d."""
    state = TrustRegionState(theta=_array(theta0), **state_kwargs)
    m = m or int(state.theta.shape[0])
    record = RunRecord(seed=seed, method=_method_label("trust-region-es", dppmc_enabled))
    for _ in range(iterations):
        state, row = trust_region_es_step(state, f, m, dppmc_enabled, rng, dppmc, seed)
        record.rows.append(row)
    return record
