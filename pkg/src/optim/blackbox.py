"""
Blackbox objectives with evaluation accounting.

A Blackbox wraps f: R^d -> R, counts every evaluation exactly once and can
add Gaussian observation noise (absolute std plus a std proportional to
|f|). monitor() reads the noiseless value without touching the counter, so
learning curves never cost evaluations.

Benchmarks (all minimized):
    sphere      sum x_i^2
    cigar       x_1^2 + 1e6 * sum_{i>=2} x_i^2
    rosenbrock  sum_{i<d} 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2
    rastrigin   10 d + sum x_i^2 - 10 cos(2 pi x_i)
"""
import threading
from typing import Callable, Optional

import numpy as np

from src.utils.logger import logger

Objective = Callable[[np.ndarray], float]

CIGAR_CONDITIONING = 1e6


def sphere(x: np.ndarray) -> float:
    return float(np.sum(x ** 2))


def cigar(x: np.ndarray) -> float:
    return float(x[0] ** 2 + CIGAR_CONDITIONING * np.sum(x[1:] ** 2))


def rosenbrock(x: np.ndarray) -> float:
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def rastrigin(x: np.ndarray) -> float:
    return float(10.0 * x.shape[0] + np.sum(x ** 2 - 10.0 * np.cos(2.0 * np.pi * x)))


BENCHMARKS: dict[str, Objective] = {
    "sphere": sphere,
    "cigar": cigar,
    "rosenbrock": rosenbrock,
    "rastrigin": rastrigin,
}


class Blackbox:
    """Counted, optionally noisy objective on R^d"""

    def __init__(
        self,
        name: str,
        dim: int,
        fn: Objective,
        noise_std: float = 0.0,
        relative_noise: float = 0.0,
        rng: Optional[np.random.Generator] = None,
    ):
        """
        Args:
            name: Label used in records and logs
            dim: Input dimension d
            fn: Noiseless objective
            noise_std: Absolute observation-noise std (>= 0)
            relative_noise: Extra noise std as a fraction of |f(x)| (>= 0)
            rng: Stream for observation noise; required when any noise is set
        """
        if dim < 1:
            raise ValueError(f"dimension must be at least 1, got {dim}")
        if noise_std < 0 or relative_noise < 0:
            raise ValueError("noise levels must be nonnegative")
        if (noise_std > 0 or relative_noise > 0) and rng is None:
            raise ValueError("a noisy blackbox needs a random stream")
        self.name = name
        self.dim = dim
        self.fn = fn
        self.noise_std = noise_std
        self.relative_noise = relative_noise
        self.rng = rng
        self._evaluations = 0
        self._lock = threading.Lock()

    @property
    def evaluations(self) -> int:
        return self._evaluations

    @property
    def noisy(self) -> bool:
        return self.noise_std > 0 or self.relative_noise > 0

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"{self.name} expects shape ({self.dim},), got {x.shape}")
        return x

    def _observe(self, value: float) -> float:
        if not self.noisy:
            return value
        std = self.noise_std + self.relative_noise * abs(value)
        return value + std * float(self.rng.standard_normal())

    def __call__(self, x) -> float:
        value = self.fn(self._check(x))
        with self._lock:
            self._evaluations += 1
            return self._observe(value)

    def evaluate_batch(self, points: np.ndarray) -> np.ndarray:
        """Evaluate rows in order; noise is drawn sequentially for reproducibility."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        clean = [self.fn(self._check(x)) for x in points]
        with self._lock:
            self._evaluations += len(clean)
            return np.array([self._observe(value) for value in clean])

    def monitor(self, x) -> float:
        """Noiseless value, not counted."""
        return self.fn(self._check(x))

    def __repr__(self) -> str:
        return f"Blackbox(name={self.name!r}, dim={self.dim}, evaluations={self._evaluations})"


def benchmark_function(
    name: str,
    d: int,
    noise_std: float = 0.0,
    relative_noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Blackbox:
    """
    Build a counted benchmark blackbox.

    Args:
        name: cigar, sphere, rosenbrock or rastrigin
        d: Dimension, at least 2

    Returns:
        Blackbox with a fresh evaluation counter
    """
    if name not in BENCHMARKS:
        raise ValueError(f"unknown benchmark '{name}', expected one of {sorted(BENCHMARKS)}")
    if d < 2:
        raise ValueError(f"benchmarks need d >= 2, got {d}")
    logger.debug(f"Benchmark {name} d={d} noise_std={noise_std} relative_noise={relative_noise}")
    return Blackbox(name, d, BENCHMARKS[name], noise_std=noise_std, relative_noise=relative_noise, rng=rng)
