"""
Variance-Reduction Verification Suite

Constructive checks that DPP downsampling with matched marginals never
increases, and for suitable kernels strictly reduces, the variance of
importance-weighted Monte Carlo estimators.

Estimator:
    F_hat = (1/N) sum_i (eps_i / w_i) a_i,  eps_i = 1[i in S],  E[eps_i] = p_i

    w = p is the unbiased form; any other positive w gives the biased form
    whose bias (1/N) sum_i (p_i / w_i - 1) a_i is the same under every law
    with marginals p.

Closed form from pairwise moments P_ij = E[eps_i eps_j] (P_ii = p_i):
    Var = (1/N^2) sum_{i,j} (P_ij - p_i p_j) / (w_i w_j) <a_i, a_j>

    For a DPP with marginal kernel K, P_ij = p_i p_j - K_ij^2 off the
    diagonal, so

    Var_iid - Var_dpp = (1/N^2) sum_{i != j} K_ij^2 <a_i, a_j> / (w_i w_j)

Kernel construction:
    K_ii = p_i and K_ij = eps on every pair with <a_i, a_j> > 0. eps is the
    largest value in (0, min_i min(p_i, 1 - p_i)] keeping the spectrum of K
    inside (1e-9, 1 - 1e-9), found by 60 bisection steps and shrunk by 0.99.

Exact law:
    P(S = A) = |det(K - I_{complement of A})| for N <= 10.

Randomized checks (the pairwise-negative-correlation search) support but
do not prove their claims.
"""
import itertools
from typing import Callable, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import linalg
from scipy.stats import ortho_group

from src.config.settings import settings
from src.exceptions import CapExceededError, KernelDomainError, NoPositivePairError
from src.optim.blackbox import BENCHMARKS
from src.sampling.dpp import MarginalKernel, marginal_to_l, sample_dpp_l
from src.utils.logger import logger

SPECTRUM_MARGIN = 1e-9
BISECTION_STEPS = 60
INTERIOR_SHRINK = 0.99
EXACT_TOL = 1e-10
INCLUSION_LAW_CAP = 10
STANDARD_ERRORS = 3.0
DEFAULT_TRIALS = 100_000
UNIT_NORM_TOL = 1e-9


class DownsampledEstimatorSpec(BaseModel):
    """Values a_i, inclusion probabilities p_i and importance weights w_i"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray = Field(..., description="(N, d) array; scalar values are stored as d = 1")
    probabilities: np.ndarray
    weights: Optional[np.ndarray] = Field(None, description="Defaults to the probabilities (unbiased form)")

    @field_validator("values", mode="before")
    @classmethod
    def _coerce_values(cls, v):
        array = np.array(v, dtype=float)
        return array.reshape(-1, 1) if array.ndim == 1 else array

    @field_validator("probabilities", "weights", mode="before")
    @classmethod
    def _coerce_vector(cls, v):
        return None if v is None else np.array(v, dtype=float).reshape(-1)

    @model_validator(mode="after")
    def _check_lengths(self):
        n = self.values.shape[0]
        if self.probabilities.shape[0] != n:
            raise ValueError(f"{self.probabilities.shape[0]} probabilities for {n} values")
        if np.any(self.probabilities <= 0) or np.any(self.probabilities > 1):
            raise ValueError("probabilities must lie in (0, 1]")
        if self.weights is not None:
            if self.weights.shape[0] != n:
                raise ValueError(f"{self.weights.shape[0]} weights for {n} values")
            if np.any(self.weights <= 0):
                raise ValueError("weights must be strictly positive")
        return self

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def w(self) -> np.ndarray:
        return self.probabilities if self.weights is None else self.weights

    @property
    def scalar(self) -> bool:
        return self.values.shape[1] == 1

    @property
    def full_average(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def gram(self) -> np.ndarray:
        return self.values @ self.values.T

    def estimate(self, included: Sequence[int]) -> np.ndarray:
        idx = list(included)
        if not idx:
            return np.zeros(self.values.shape[1])
        return (self.values[idx] / self.w[idx, None]).sum(axis=0) / self.n

    def expected_value(self) -> np.ndarray:
        """(1/N) sum_i (p_i / w_i) a_i under any law with marginals p."""
        return ((self.probabilities / self.w)[:, None] * self.values).sum(axis=0) / self.n

    def bias(self) -> np.ndarray:
        return self.expected_value() - self.full_average


class ConstructedKernel(BaseModel):
    """Marginal kernel built for a spec and the pairs that received eps"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kernel: MarginalKernel
    epsilon: float
    pairs: tuple[tuple[int, int], ...]


class VarianceGap(BaseModel):
    lhs: float = Field(..., description="var_iid - var_dpp")
    rhs: float = Field(..., description="(1/N^2) sum_{i != j} K_ij^2 <a_i, a_j> / (w_i w_j)")


class VarianceReport(BaseModel):
    """Closed-form, enumerated and sampled variances of one construction"""

    name: str
    passed: bool
    exact_checks_passed: bool = Field(..., description="Closed-form and enumerated comparisons")
    sampled_checks_passed: bool = Field(..., description="Sampled mean and variance within 3 standard errors")
    epsilon: float
    var_iid: float
    var_dpp_closed_form: float
    var_dpp_enumerated: Optional[float] = None
    var_dpp_empirical: float
    var_dpp_stderr: float
    mean_iid: list[float]
    mean_dpp: list[float]
    mean_dpp_empirical: list[float]
    gap_identity_error: float
    trials: int

    def summary(self) -> str:
        return f"var_iid={self.var_iid:.6g} var_dpp={self.var_dpp_closed_form:.6g} eps={self.epsilon:.4g}"


class BiasedVarianceReport(BaseModel):
    name: str
    passed: bool
    bias_iid: list[float]
    bias_dpp: list[float]
    mse_iid: float
    mse_dpp: float
    variance_gap: float

    def summary(self) -> str:
        return f"mse_iid={self.mse_iid:.6g} mse_dpp={self.mse_dpp:.6g}"


class NegativeCorrelationReport(BaseModel):
    name: str
    passed: bool
    d: int
    simplex_max_dot: float
    trials: int
    violations: int

    def summary(self) -> str:
        return f"d={self.d} simplex_dot={self.simplex_max_dot:.4g} violations={self.violations}/{self.trials}"


class OrthogonalityReport(BaseModel):
    name: str
    passed: bool
    k: int
    max_det: float
    maximizers: list[list[int]]
    orthogonal_subsets: list[list[int]]
    max_root_det: float = Field(..., description="max over subsets of det(L_A)^(1/k)")

    def summary(self) -> str:
        return f"k={self.k} max_det={self.max_det:.12g} maximizers={len(self.maximizers)}"


TheoryReport = Union[VarianceReport, BiasedVarianceReport, NegativeCorrelationReport, OrthogonalityReport]


# Pairwise moments and exact laws

def pairwise_independent(probabilities) -> np.ndarray:
    """E[eps_i eps_j] for independent Bernoulli(p_i) inclusions."""
    p = np.asarray(probabilities, dtype=float)
    pairwise = np.outer(p, p)
    np.fill_diagonal(pairwise, p)
    return pairwise


def pairwise_from_kernel(K: MarginalKernel) -> np.ndarray:
    """E[eps_i eps_j] = det(K_{ij}) for a DPP with marginal kernel K."""
    p = np.diag(K.matrix)
    pairwise = np.outer(p, p) - K.matrix ** 2
    np.fill_diagonal(pairwise, p)
    return pairwise


def exact_variance_from_pairwise(spec: DownsampledEstimatorSpec, pairwise) -> float:
    """
    Trace of the estimator covariance from pairwise inclusion moments.

    Args:
        spec: Values, probabilities and weights
        pairwise: Symmetric N x N table of E[eps_i eps_j] with diagonal p

    Returns:
        (1/N^2) sum_{i,j} (P_ij - p_i p_j) / (w_i w_j) <a_i, a_j>
    """
    pairwise = np.asarray(pairwise, dtype=float)
    p = spec.probabilities
    if pairwise.shape != (spec.n, spec.n):
        raise ValueError(f"pairwise table must be {spec.n} x {spec.n}")
    if np.max(np.abs(pairwise - pairwise.T)) > EXACT_TOL:
        raise ValueError("pairwise table must be symmetric")
    if np.max(np.abs(np.diag(pairwise) - p)) > EXACT_TOL:
        raise ValueError("pairwise diagonal must equal the inclusion probabilities")
    covariance = (pairwise - np.outer(p, p)) / np.outer(spec.w, spec.w)
    return float(np.sum(covariance * spec.gram()) / spec.n ** 2)


def enumerate_inclusion_law(K: MarginalKernel, cap: int = INCLUSION_LAW_CAP) -> dict[tuple[int, ...], float]:
    """Exact P(S = A) for every subset A, via |det(K - I_complement)|."""
    n = K.n_items
    if n > cap:
        raise CapExceededError(n, cap)
    law = {}
    for size in range(n + 1):
        for subset in itertools.combinations(range(n), size):
            complement = np.ones(n)
            complement[list(subset)] = 0.0
            law[subset] = abs(float(np.linalg.det(K.matrix - np.diag(complement))))
    return law


def independent_inclusion_law(probabilities) -> dict[tuple[int, ...], float]:
    p = np.asarray(probabilities, dtype=float)
    law = {}
    for size in range(p.shape[0] + 1):
        for subset in itertools.combinations(range(p.shape[0]), size):
            inside = np.zeros(p.shape[0], dtype=bool)
            inside[list(subset)] = True
            law[subset] = float(np.prod(np.where(inside, p, 1.0 - p)))
    return law


def value_scale(spec: DownsampledEstimatorSpec) -> float:
    """Largest |a_i / w_i|, at least 1; enumerated means are compared relative to it."""
    return max(1.0, float(np.max(np.abs(spec.values / spec.w[:, None]))))


def law_moments(spec: DownsampledEstimatorSpec, law: dict[tuple[int, ...], float]) -> tuple[np.ndarray, float]:
    """Mean vector and trace variance of F_hat under an enumerated law."""
    estimates = np.array([spec.estimate(subset) for subset in law])
    probs = np.array(list(law.values()))
    mean = probs @ estimates
    return mean, float(probs @ np.sum((estimates - mean) ** 2, axis=1))


# Construction

def _qualifying_pairs(spec: DownsampledEstimatorSpec) -> tuple[tuple[int, int], ...]:
    scaled = spec.gram() / np.outer(spec.w, spec.w)
    return tuple((i, j) for i, j in itertools.combinations(range(spec.n), 2) if scaled[i, j] > 0.0)


def _kernel_matrix(p: np.ndarray, pairs: Sequence[tuple[int, int]], epsilon: float) -> np.ndarray:
    matrix = np.diag(p).astype(float)
    for i, j in pairs:
        matrix[i, j] = matrix[j, i] = epsilon
    return matrix


def _interior(matrix: np.ndarray) -> bool:
    values = linalg.eigvalsh(matrix)
    return bool(values[0] > SPECTRUM_MARGIN and values[-1] < 1.0 - SPECTRUM_MARGIN)


def construct_variance_reducing_kernel(
    spec: DownsampledEstimatorSpec, epsilon: Optional[float] = None
) -> ConstructedKernel:
    """
    Marginal kernel with K_ii = p_i and K_ij = eps on positively aligned pairs.

    Args:
        spec: Estimator to improve; scalar specs need N >= 3, vector specs N >= d + 2
        epsilon: Off-diagonal value; bisected when omitted

    Returns:
        ConstructedKernel with the kernel, eps and the qualifying pairs

    Raises:
        NoPositivePairError: If no pair has <a_i, a_j> > 0
        KernelDomainError: If an explicit eps leaves the spectrum outside (0, 1)
    """
    p = spec.probabilities
    if np.any(p >= 1.0):
        raise ValueError("construction needs every p_i < 1")
    if spec.scalar and spec.n < 3:
        raise ValueError(f"scalar construction needs N >= 3, got {spec.n}")
    if not spec.scalar and spec.n < spec.values.shape[1] + 2:
        raise ValueError(f"vector construction needs N >= d + 2, got N={spec.n}, d={spec.values.shape[1]}")

    pairs = _qualifying_pairs(spec)
    if not pairs:
        raise NoPositivePairError(spec.n)

    if epsilon is None:
        eps_max = float(np.min(np.minimum(p, 1.0 - p)))
        if not _interior(_kernel_matrix(p, pairs, 0.0)):
            raise KernelDomainError("inclusion probabilities sit on the boundary of (0, 1)")
        if _interior(_kernel_matrix(p, pairs, eps_max)):
            boundary = eps_max
        else:
            lo, hi = 0.0, eps_max
            for _ in range(BISECTION_STEPS):
                mid = 0.5 * (lo + hi)
                if _interior(_kernel_matrix(p, pairs, mid)):
                    lo = mid
                else:
                    hi = mid
            boundary = lo
        epsilon = INTERIOR_SHRINK * boundary
    elif epsilon < 0 or not _interior(_kernel_matrix(p, pairs, epsilon)):
        raise KernelDomainError(f"eps={epsilon} puts the spectrum of K outside (0, 1)")

    logger.debug(f"Constructed kernel: N={spec.n} pairs={len(pairs)} eps={epsilon:.6g}")
    return ConstructedKernel(
        kernel=MarginalKernel(matrix=_kernel_matrix(p, pairs, epsilon)), epsilon=float(epsilon), pairs=pairs
    )


def variance_gap_identity(spec: DownsampledEstimatorSpec, K: MarginalKernel) -> VarianceGap:
    """Both sides of var_iid - var_dpp = (1/N^2) sum_{i != j} K_ij^2 <a_i, a_j> / (w_i w_j)."""
    var_iid = exact_variance_from_pairwise(spec, pairwise_independent(spec.probabilities))
    var_dpp = exact_variance_from_pairwise(spec, pairwise_from_kernel(K))
    off_diagonal = K.matrix ** 2
    np.fill_diagonal(off_diagonal, 0.0)
    rhs = np.sum(off_diagonal * spec.gram() / np.outer(spec.w, spec.w)) / spec.n ** 2
    return VarianceGap(lhs=var_iid - var_dpp, rhs=float(rhs))


# Verifications

def verify_variance_reduction(
    spec: DownsampledEstimatorSpec,
    trials: int = DEFAULT_TRIALS,
    rng: Optional[np.random.Generator] = None,
    name: str = "variance_reduction",
    epsilon: Optional[float] = None,
) -> VarianceReport:
    """
    Build the kernel, compare variances in closed form, by enumeration and by sampling.

    Passes when var_dpp < var_iid strictly, the gap identity holds to 1e-10
    relative to var_iid, enumerated means agree to 1e-10 relative to the
    largest |a_i / w_i| and the sampled mean and variance lie within 3
    standard errors of their closed forms.
    """
    rng = rng if rng is not None else np.random.default_rng(settings.seed)
    constructed = construct_variance_reducing_kernel(spec, epsilon)
    K = constructed.kernel

    var_iid = exact_variance_from_pairwise(spec, pairwise_independent(spec.probabilities))
    var_dpp = exact_variance_from_pairwise(spec, pairwise_from_kernel(K))
    gap = variance_gap_identity(spec, K)
    target = spec.expected_value()

    mean_iid = mean_dpp = target
    var_enumerated = None
    if spec.n <= INCLUSION_LAW_CAP:
        mean_iid, _ = law_moments(spec, independent_inclusion_law(spec.probabilities))
        mean_dpp, var_enumerated = law_moments(spec, enumerate_inclusion_law(K))

    L = marginal_to_l(K)
    estimates = np.array([spec.estimate(sample_dpp_l(L, rng)) for _ in range(trials)])
    empirical_mean = estimates.mean(axis=0)
    mean_stderr = estimates.std(axis=0, ddof=1) / np.sqrt(trials)
    squared = np.sum((estimates - target) ** 2, axis=1)
    var_empirical = float(squared.mean())
    var_stderr = float(squared.std(ddof=1) / np.sqrt(trials))
    gap_error = abs(gap.lhs - gap.rhs)
    mean_tol = EXACT_TOL * value_scale(spec)

    exact_checks = [
        var_dpp < var_iid,
        gap_error <= EXACT_TOL * max(1.0, var_iid),
        np.allclose(mean_iid, target, rtol=0.0, atol=mean_tol),
        np.allclose(mean_dpp, target, rtol=0.0, atol=mean_tol),
        var_enumerated is None or abs(var_enumerated - var_dpp) <= EXACT_TOL * max(1.0, var_dpp),
    ]
    sampled_checks = [
        bool(np.all(np.abs(empirical_mean - target) <= STANDARD_ERRORS * mean_stderr + EXACT_TOL)),
        abs(var_empirical - var_dpp) <= STANDARD_ERRORS * var_stderr + EXACT_TOL,
    ]
    report = VarianceReport(
        name=name,
        passed=all(exact_checks) and all(sampled_checks),
        exact_checks_passed=all(exact_checks),
        sampled_checks_passed=all(sampled_checks),
        epsilon=constructed.epsilon,
        var_iid=var_iid,
        var_dpp_closed_form=var_dpp,
        var_dpp_enumerated=var_enumerated,
        var_dpp_empirical=var_empirical,
        var_dpp_stderr=var_stderr,
        mean_iid=[float(x) for x in mean_iid],
        mean_dpp=[float(x) for x in mean_dpp],
        mean_dpp_empirical=[float(x) for x in empirical_mean],
        gap_identity_error=gap_error,
        trials=trials,
    )
    logger.info(f"{name}: {'PASS' if report.passed else 'FAIL'} {report.summary()}")
    return report


def es_terms(
    f: Callable[[np.ndarray], float], theta, sigma: float, directions: np.ndarray
) -> np.ndarray:
    """a_i = (1/sigma) f(theta + sigma g_i) g_i."""
    theta = np.asarray(theta, dtype=float)
    values = np.array([f(theta + sigma * g) for g in directions])
    return values[:, None] * directions / sigma


def verify_es_variance_reduction(
    d: int,
    n: int,
    f: Union[str, Callable[[np.ndarray], float]],
    theta,
    sigma: float,
    p: float,
    trials: int = DEFAULT_TRIALS,
    rng: Optional[np.random.Generator] = None,
    name: str = "es_variance",
) -> VarianceReport:
    """Variance-reduction check with a_i the ES gradient terms at Gaussian directions g_i."""
    if n < d + 2:
        raise ValueError(f"need N >= d + 2, got N={n}, d={d}")
    rng = rng if rng is not None else np.random.default_rng(settings.seed)
    fn = BENCHMARKS[f] if isinstance(f, str) else f
    directions = rng.standard_normal((n, d))
    spec = DownsampledEstimatorSpec(values=es_terms(fn, theta, sigma, directions), probabilities=np.full(n, p))
    return verify_variance_reduction(spec, trials, rng, name=name)


def verify_biased_variance(
    spec: DownsampledEstimatorSpec, name: str = "biased_variance"
) -> BiasedVarianceReport:
    """
    Same bias under both laws; the MSE gap equals the variance gap.

    Bias is measured against the full average (1/N) sum_i a_i.
    """
    constructed = construct_variance_reducing_kernel(spec)
    var_iid = exact_variance_from_pairwise(spec, pairwise_independent(spec.probabilities))
    var_dpp = exact_variance_from_pairwise(spec, pairwise_from_kernel(constructed.kernel))

    if spec.n <= INCLUSION_LAW_CAP:
        mean_iid, _ = law_moments(spec, independent_inclusion_law(spec.probabilities))
        mean_dpp, _ = law_moments(spec, enumerate_inclusion_law(constructed.kernel))
    else:
        mean_iid = mean_dpp = spec.expected_value()
    bias_iid = mean_iid - spec.full_average
    bias_dpp = mean_dpp - spec.full_average
    mse_iid = var_iid + float(bias_iid @ bias_iid)
    mse_dpp = var_dpp + float(bias_dpp @ bias_dpp)
    gap = var_iid - var_dpp
    mean_tol = EXACT_TOL * value_scale(spec)

    passed = (
        np.allclose(bias_iid, bias_dpp, rtol=0.0, atol=mean_tol)
        and np.allclose(bias_iid, spec.bias(), rtol=0.0, atol=mean_tol)
        and mse_dpp < mse_iid
        and abs((mse_iid - mse_dpp) - gap) <= EXACT_TOL * max(1.0, mse_iid)
    )
    report = BiasedVarianceReport(
        name=name,
        passed=bool(passed),
        bias_iid=[float(x) for x in bias_iid],
        bias_dpp=[float(x) for x in bias_dpp],
        mse_iid=mse_iid,
        mse_dpp=mse_dpp,
        variance_gap=gap,
    )
    logger.info(f"{name}: {'PASS' if report.passed else 'FAIL'} {report.summary()}")
    return report


def regular_simplex(d: int) -> np.ndarray:
    """d + 1 unit vectors in R^d with pairwise dot products -1/d."""
    if d < 1:
        raise ValueError(f"d must be at least 1, got {d}")
    centered = np.eye(d + 1) - 1.0 / (d + 1)
    basis = linalg.null_space(np.ones((1, d + 1)))
    vertices = centered @ basis
    return vertices / np.linalg.norm(vertices, axis=1, keepdims=True)


def verify_negative_correlation_bound(
    d: int, trials: int = 10_000, rng: Optional[np.random.Generator] = None
) -> NegativeCorrelationReport:
    """
    d + 1 pairwise obtuse unit vectors exist; d + 2 do not turn up in random search.

    The search is supporting evidence only.
    """
    rng = rng if rng is not None else np.random.default_rng(settings.seed)
    simplex = regular_simplex(d)
    dots = simplex @ simplex.T
    simplex_max_dot = float(np.max(dots[~np.eye(d + 1, dtype=bool)]))

    vectors = rng.standard_normal((trials, d + 2, d))
    vectors /= np.linalg.norm(vectors, axis=2, keepdims=True)
    gram = np.einsum("tij,tkj->tik", vectors, vectors)
    off = ~np.eye(d + 2, dtype=bool)
    violations = int(np.sum(np.all(gram[:, off] < 0.0, axis=1)))

    report = NegativeCorrelationReport(
        name=f"negative_correlation_d{d}",
        passed=simplex_max_dot < 0.0 and violations == 0,
        d=d,
        simplex_max_dot=simplex_max_dot,
        trials=trials,
        violations=violations,
    )
    logger.info(f"{report.name}: {'PASS' if report.passed else 'FAIL'} {report.summary()}")
    return report


def verify_orthogonality_argmax(features, k: int, name: str = "orthogonality_argmax") -> OrthogonalityReport:
    """
    Enumerate det(L_A) over all k-subsets of unit-norm features (L = F F^T).

    Passes when the maximizers are exactly the pairwise-orthogonal subsets,
    the maximum is 1 and det(L_A)^(1/k) <= 1 everywhere.
    """
    features = np.asarray(features, dtype=float)
    if np.max(np.abs(np.linalg.norm(features, axis=1) - 1.0)) > UNIT_NORM_TOL:
        raise ValueError("features must have unit norm")
    n = features.shape[0]
    if n > settings.enumeration_cap_k_dpp:
        raise CapExceededError(n, settings.enumeration_cap_k_dpp)
    gram = features @ features.T

    dets = {}
    orthogonal = []
    for subset in itertools.combinations(range(n), k):
        block = gram[np.ix_(subset, subset)]
        dets[subset] = float(np.linalg.det(block))
        if np.all(np.abs(block[~np.eye(k, dtype=bool)]) <= UNIT_NORM_TOL):
            orthogonal.append(list(subset))
    if not orthogonal:
        raise ValueError(f"no pairwise-orthogonal subset of size {k}")

    max_det = max(dets.values())
    maximizers = [list(s) for s, v in dets.items() if v >= max_det - EXACT_TOL]
    max_root = max(max(v, 0.0) ** (1.0 / k) for v in dets.values())
    report = OrthogonalityReport(
        name=name,
        passed=maximizers == orthogonal and abs(max_det - 1.0) <= EXACT_TOL and max_root <= 1.0 + EXACT_TOL,
        k=k,
        max_det=max_det,
        maximizers=maximizers,
        orthogonal_subsets=orthogonal,
        max_root_det=max_root,
    )
    logger.info(f"{name}: {'PASS' if report.passed else 'FAIL'} {report.summary()}")
    return report


def planted_orthogonal_instance(n: int, k: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """k orthonormal vectors at random positions among n - k random unit vectors."""
    if not 1 <= k <= min(n, dim):
        raise ValueError(f"need 1 <= k <= min(n, dim), got k={k}, n={n}, dim={dim}")
    if dim < 2:
        raise ValueError("planted instances need dim >= 2")
    planted = ortho_group.rvs(dim, random_state=rng)[:k]
    noise = rng.standard_normal((n - k, dim))
    noise /= np.linalg.norm(noise, axis=1, keepdims=True)
    features = np.vstack([planted, noise])
    return features[rng.permutation(n)]


def basis_instance() -> np.ndarray:
    """e1, e2, e3 and (e1 + e2) / sqrt(2) in R^3."""
    return np.vstack([np.eye(3), np.array([[1.0, 1.0, 0.0]]) / np.sqrt(2.0)])


def run_theory_suite(
    seed: int = 0, trials: int = DEFAULT_TRIALS, random_cases: int = 20
) -> list[TheoryReport]:
    """
    Every verification with seeded child streams, in a fixed order.

    Args:
        seed: Root seed
        trials: Sampled DPP draws per variance check
        random_cases: Random vector cases and planted orthogonality instances
    """
    streams = iter(np.random.default_rng(seed).spawn(4 + 2 * random_cases + 4))
    reports: list[TheoryReport] = []

    scalar = DownsampledEstimatorSpec(values=[1.0, 1.0, 1.0, 1.0], probabilities=[0.5] * 4)
    reports.append(verify_variance_reduction(scalar, trials, next(streams), name="variance_scalar"))
    reports.append(
        verify_es_variance_reduction(2, 5, "sphere", [1.0, 1.0], 0.1, 0.5, trials, next(streams), name="variance_vector")
    )
    for case in range(random_cases):
        stream = next(streams)
        f = "sphere" if case % 2 == 0 else "rosenbrock"
        theta = stream.standard_normal(2)
        reports.append(
            verify_es_variance_reduction(2, 5, f, theta, 0.1, 0.5, trials, stream, name=f"es_variance_{f}_{case}")
        )

    biased_values = np.array([1.0, 2.0, 3.0, 4.0])
    p = np.full(4, 0.5)
    reports.append(
        verify_biased_variance(
            DownsampledEstimatorSpec(values=biased_values, probabilities=p, weights=2.0 * p), name="biased_variance_2p"
        )
    )
    stream = next(streams)
    reports.append(
        verify_biased_variance(
            DownsampledEstimatorSpec(values=biased_values, probabilities=p, weights=p * stream.uniform(0.5, 2.0, 4)),
            name="biased_variance_random_w",
        )
    )

    for d in range(1, 5):
        reports.append(verify_negative_correlation_bound(d, rng=next(streams)))

    reports.append(verify_orthogonality_argmax(basis_instance(), 2, name="orthogonality_basis"))
    for case in range(random_cases):
        stream = next(streams)
        k = int(stream.integers(2, 5))
        n = int(stream.integers(k + 2, 13))
        features = planted_orthogonal_instance(n, k, k + 1, stream)
        reports.append(verify_orthogonality_argmax(features, k, name=f"orthogonality_planted_{case}"))
    return reports
