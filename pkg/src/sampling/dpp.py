"""
Determinantal Point Processes

Exact DPP machinery over a finite ground set [N] = {0, ..., N-1}.

Types:
    - LEnsemble: PSD matrix L, P(S) = det(L_S) / det(L + I)
    - MarginalKernel: matrix K with 0 <= K <= I, P(A subset of S) = det(K_A)
    - Spectrum: eigendecomposition with nonincreasing eigenvalues

Sampling:
    Both samplers follow the spectral algorithm. Phase 1 picks a set of
    eigenvectors (independently with probability lambda_n for a DPP; through
    the elementary symmetric polynomial recursion for a k-DPP). Phase 2 is
    the elementary-DPP loop: select item i with probability
    (1/|V|) * sum_v v_i^2, project V onto the complement of e_i and
    re-orthonormalize with modified Gram-Schmidt.

Numerical tolerances:
    Eigenvalues within [-1e-8, 0) are clamped to 0, marginal-kernel
    eigenvalues within (1, 1 + 1e-8] are clamped to 1. Anything further out
    fails validation.

Enumeration oracles:
    enumerate_k_dpp_distribution and enumerate_dpp_distribution return the
    exact law and are capped (N <= 20 and N <= 16 by default) because they
    visit every subset.

Example:
    L = LEnsemble(matrix=[[2.0, 1.0], [1.0, 2.0]])
    lensemble_subset_probability(L, {0, 1})       # 3/8
    sample_k_dpp(L, 1, np.random.default_rng(0))  # (0,) or (1,)
"""
import itertools
from functools import cached_property
from typing import Iterable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy import linalg

from src.config.settings import settings
from src.exceptions import CapExceededError, InsufficientRankError, KernelDomainError

SYMMETRY_TOL = 1e-10
EIGEN_TOL = 1e-8
RANK_TOL = 1e-10
GRAM_SCHMIDT_REPASS = 1e-7


class Spectrum(BaseModel):
    """Eigenvalues (nonincreasing) and orthonormal eigenvector columns"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def rank(self) -> int:
        return int(np.sum(self.eigenvalues > RANK_TOL))

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


def decompose(matrix: np.ndarray, upper: Optional[float] = None) -> Spectrum:
    """
    Symmetric eigendecomposition with drift clamping.

    Args:
        matrix: Symmetric matrix
        upper: Optional upper clamp for the eigenvalues (1 for marginal kernels)

    Returns:
        Spectrum with eigenvalues sorted nonincreasing
    """
    values, vectors = linalg.eigh(np.asarray(matrix, dtype=float))
    order = np.argsort(values)[::-1]
    values = np.clip(values[order], 0.0, upper)
    vectors = vectors[:, order]
    values.setflags(write=False)
    vectors.setflags(write=False)
    return Spectrum(eigenvalues=values, eigenvectors=vectors)


def _symmetric_matrix(value) -> np.ndarray:
    matrix = np.array(value, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("matrix entries must be finite")
    scale = max(1.0, float(np.max(np.abs(matrix)))) if matrix.size else 1.0
    if np.max(np.abs(matrix - matrix.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError("matrix is not symmetric")
    matrix = 0.5 * (matrix + matrix.T)
    matrix.setflags(write=False)
    return matrix


class LEnsemble(BaseModel):
    """DPP parameterized by a positive semidefinite matrix L"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray

    @field_validator("matrix", mode="before")
    @classmethod
    def _coerce(cls, v):
        return _symmetric_matrix(v)

    @model_validator(mode="after")
    def _check_psd(self):
        if self.n_items and linalg.eigvalsh(self.matrix)[0] < -EIGEN_TOL:
            raise ValueError("L-ensemble matrix is not positive semidefinite")
        return self

    @property
    def n_items(self) -> int:
        return int(self.matrix.shape[0])

    @cached_property
    def spectrum(self) -> Spectrum:
        return decompose(self.matrix)


class MarginalKernel(BaseModel):
    """DPP parameterized by its marginal kernel K, 0 <= K <= I"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray

    @field_validator("matrix", mode="before")
    @classmethod
    def _coerce(cls, v):
        return _symmetric_matrix(v)

    @model_validator(mode="after")
    def _check_spectrum(self):
        if self.n_items:
            values = linalg.eigvalsh(self.matrix)
            if values[0] < -EIGEN_TOL or values[-1] > 1.0 + EIGEN_TOL:
                raise ValueError(
                    f"marginal kernel eigenvalues [{values[0]:.3g}, {values[-1]:.3g}] outside [0, 1]"
                )
        return self

    @property
    def n_items(self) -> int:
        return int(self.matrix.shape[0])

    @cached_property
    def spectrum(self) -> Spectrum:
        return decompose(self.matrix, upper=1.0)


def _principal_minor(matrix: np.ndarray, subset: Iterable[int]) -> float:
    idx = sorted(subset)
    if not idx:
        return 1.0
    return float(np.linalg.det(matrix[np.ix_(idx, idx)]))


def _check_subset(subset: Iterable[int], n_items: int) -> list[int]:
    idx = sorted(set(subset))
    if idx and (idx[0] < 0 or idx[-1] >= n_items):
        raise ValueError(f"subset {idx} is not contained in the ground set of size {n_items}")
    return idx


def lensemble_subset_probability(L: LEnsemble, subset: Iterable[int]) -> float:
    """P[S] = det(L_S) / det(L + I), with det(L_empty) = 1."""
    idx = _check_subset(subset, L.n_items)
    normalizer = float(np.linalg.det(L.matrix + np.eye(L.n_items)))
    return _principal_minor(L.matrix, idx) / normalizer


def marginal_inclusion_probability(K: MarginalKernel, subset: Iterable[int]) -> float:
    """P[A subset of S] = det(K_A)."""
    return _principal_minor(K.matrix, _check_subset(subset, K.n_items))


def l_to_marginal(L: LEnsemble) -> MarginalKernel:
    """K = L (L + I)^-1, sharing L's eigenvectors with eigenvalues lambda / (1 + lambda)."""
    spectrum = L.spectrum
    values = spectrum.eigenvalues / (1.0 + spectrum.eigenvalues)
    return MarginalKernel(matrix=(spectrum.eigenvectors * values) @ spectrum.eigenvectors.T)


def marginal_to_l(K: MarginalKernel) -> LEnsemble:
    """L = K (I - K)^-1; defined only when every eigenvalue of K is below 1."""
    spectrum = K.spectrum
    if np.any(spectrum.eigenvalues >= 1.0 - EIGEN_TOL):
        raise KernelDomainError("marginal kernel has an eigenvalue at 1, so L = K(I-K)^-1 does not exist")
    values = spectrum.eigenvalues / (1.0 - spectrum.eigenvalues)
    return LEnsemble(matrix=(spectrum.eigenvectors * values) @ spectrum.eigenvectors.T)


def expected_size(L: LEnsemble) -> float:
    """E|S| = sum_n lambda_n / (1 + lambda_n)."""
    values = L.spectrum.eigenvalues
    return float(np.sum(values / (1.0 + values)))


def elementary_symmetric(eigenvalues, k_max: int) -> np.ndarray:
    """
    Table E with E[k, n] = e_k(lambda_1, ..., lambda_n).

    Recursion: E[k, n] = E[k, n-1] + lambda_n * E[k-1, n-1], E[0, n] = 1,
    E[k, 0] = 0 for k >= 1.
    """
    values = np.asarray(eigenvalues, dtype=float)
    n_items = values.shape[0]
    if k_max > n_items or k_max < 0:
        raise ValueError(f"k_max must lie in [0, {n_items}], got {k_max}")
    table = np.zeros((k_max + 1, n_items + 1))
    table[0, :] = 1.0
    for k in range(1, k_max + 1):
        for n in range(1, n_items + 1):
            table[k, n] = table[k, n - 1] + values[n - 1] * table[k - 1, n - 1]
    return table


def _orthonormalize(basis: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt over the columns, with a second pass for weak columns."""
    basis = np.array(basis, dtype=float)
    for j in range(basis.shape[1]):
        column = basis[:, j]
        original = np.linalg.norm(column)
        for _ in range(2):
            for i in range(j):
                column = column - (basis[:, i] @ column) * basis[:, i]
            norm = np.linalg.norm(column)
            if norm >= GRAM_SCHMIDT_REPASS * max(original, 1.0):
                break
        basis[:, j] = column / norm if norm > 0 else column
    return basis


def _sample_elementary(basis: np.ndarray, rng: np.random.Generator) -> tuple[int, ...]:
    """Elementary-DPP phase: one item per column of the orthonormal basis."""
    n_items = basis.shape[0]
    selected = []
    basis = np.array(basis, dtype=float)
    while basis.shape[1] > 0:
        weights = np.sum(basis ** 2, axis=1)
        weights = np.clip(weights, 0.0, None)
        item = int(rng.choice(n_items, p=weights / weights.sum()))
        selected.append(item)

        # Eliminate the column with the largest weight on the chosen item
        pivot = int(np.argmax(np.abs(basis[item])))
        pivot_column = basis[:, pivot]
        basis = np.delete(basis, pivot, axis=1)
        if basis.shape[1] == 0:
            break
        basis = basis - np.outer(pivot_column, basis[item] / pivot_column[item])
        basis = _orthonormalize(basis)
    return tuple(sorted(selected))


def sample_dpp_from_spectrum(spectrum: Spectrum, rng: np.random.Generator) -> tuple[int, ...]:
    """Sample DPP(K) given the spectrum of the marginal kernel K."""
    keep = rng.random(spectrum.eigenvalues.shape[0]) < spectrum.eigenvalues
    return _sample_elementary(spectrum.eigenvectors[:, keep], rng)


def sample_dpp(K: MarginalKernel, rng: np.random.Generator) -> tuple[int, ...]:
    """Random subset whose law satisfies P(A subset of S) = det(K_A)."""
    return sample_dpp_from_spectrum(K.spectrum, rng)


def sample_dpp_l(L: LEnsemble, rng: np.random.Generator) -> tuple[int, ...]:
    """Random subset with P(S) = det(L_S) / det(L + I)."""
    values = L.spectrum.eigenvalues
    marginal = Spectrum(eigenvalues=values / (1.0 + values), eigenvectors=L.spectrum.eigenvectors)
    return sample_dpp_from_spectrum(marginal, rng)


def sample_k_dpp_from_spectrum(spectrum: Spectrum, k: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Sample a k-DPP given the spectrum of its L-ensemble."""
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    rank = spectrum.rank
    if k > rank:
        raise InsufficientRankError(k, rank)
    if k == 0:
        return ()

    # k-DPP probabilities are invariant to rescaling L; keep E in floating range
    values = spectrum.eigenvalues / np.mean(spectrum.eigenvalues[spectrum.eigenvalues > RANK_TOL])
    table = elementary_symmetric(values, k)

    chosen = []
    remaining = k
    for n in range(values.shape[0], 0, -1):
        if remaining == 0:
            break
        denominator = table[remaining, n]
        if denominator <= 0.0:
            raise InsufficientRankError(k, k - remaining)
        if n == remaining:
            marginal = 1.0
        else:
            marginal = values[n - 1] * table[remaining - 1, n - 1] / denominator
        if rng.random() < marginal:
            chosen.append(n - 1)
            remaining -= 1
    if remaining > 0:
        raise InsufficientRankError(k, k - remaining)

    return _sample_elementary(spectrum.eigenvectors[:, chosen], rng)


def sample_k_dpp(L: LEnsemble, k: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Exactly k distinct items with probability proportional to det(L_S)."""
    return sample_k_dpp_from_spectrum(L.spectrum, k, rng)


def enumerate_k_dpp_distribution(L: LEnsemble, k: int, cap: Optional[int] = None) -> dict[tuple[int, ...], float]:
    """Exact law of the k-DPP: det(L_S) / sum_{|S'|=k} det(L_S')."""
    cap = settings.enumeration_cap_k_dpp if cap is None else cap
    if L.n_items > cap:
        raise CapExceededError(L.n_items, cap)
    minors = {
        subset: max(_principal_minor(L.matrix, subset), 0.0)
        for subset in itertools.combinations(range(L.n_items), k)
    }
    total = sum(minors.values())
    if total <= 0.0:
        raise InsufficientRankError(k, L.spectrum.rank)
    return {subset: value / total for subset, value in minors.items()}


def enumerate_dpp_distribution(L: LEnsemble, cap: Optional[int] = None) -> dict[tuple[int, ...], float]:
    """Exact law of DPP(L) over all 2^N subsets."""
    cap = settings.enumeration_cap_dpp if cap is None else cap
    if L.n_items > cap:
        raise CapExceededError(L.n_items, cap)
    normalizer = float(np.linalg.det(L.matrix + np.eye(L.n_items)))
    law = {}
    for size in range(L.n_items + 1):
        for subset in itertools.combinations(range(L.n_items), size):
            law[subset] = max(_principal_minor(L.matrix, subset), 0.0) / normalizer
    return law


def negative_dependence_check(K: MarginalKernel, i: int, j: int) -> bool:
    """True iff P[i in S | j in S] < P[i in S], i.e. iff K_ij^2 > 0."""
    if i == j:
        raise ValueError("negative dependence needs two distinct items")
    if K.matrix[j, j] <= 0.0:
        raise ValueError(f"item {j} has zero inclusion probability")
    conditional = K.matrix[i, i] - K.matrix[i, j] ** 2 / K.matrix[j, j]
    return bool(conditional < K.matrix[i, i])
