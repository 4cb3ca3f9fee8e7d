"""
Experiment configuration files.

Configs are TOML, validated by strict pydantic models: unknown keys,
duplicate seeds, learning rates off the grid and duplicate rho values are
all fatal. Any failure is re-raised as ConfigValidationError with the
offending key path (or the TOML line for syntax errors).

Seeds resolve as --seeds > DPPMC_SEED > the config's seed list.

The config digest is the first 16 hex characters of the SHA-256 of the
canonical JSON form (sorted keys, no whitespace) of the validated config.

Example:
    kind = "cmaes"
    seeds = [0, 1, 2, 3, 4]
    budget = 100

    [optimizer]
    functions = ["sphere", "rastrigin"]
    dim = 16
    population = 16

    [dppmc]
    rho = 10.0
    sigma = 0.5
"""
import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.config.settings import Settings
from src.engine.dppmc import DEFAULT_RHO, DEFAULT_SIGMA, DppmcConfig, KernelScale, Similarity
from src.engine.kernels import DEFAULT_DIM, DEFAULT_PAIRS, DEFAULT_POINTS, DEFAULT_REPETITIONS, FeatureMethod
from src.exceptions import ConfigValidationError
from src.optim.blackbox import BENCHMARKS
from src.optim.es import DEFAULT_ALPHA, DEFAULT_BUFFER, DEFAULT_DELTA, DEFAULT_RIDGE_LAMBDA, LEARNING_RATES, GradientMode
from src.theory.checks import DEFAULT_TRIALS
from src.utils.logger import logger

DIGEST_LENGTH = 16


class ExperimentKind(str, Enum):
    KERNEL_MSE = "kernel-mse"
    GUIDED_ES = "guided-es"
    TRUST_REGION_ES = "trust-region-es"
    CMAES = "cmaes"
    THEORY_CHECK = "theory-check"
    DPP_SAMPLE = "dpp-sample"
    RHO_ABLATION = "rho-ablation"


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DppmcBlock(Strict):
    """Oversampling and kernel settings shared by every DPPMC method"""

    rho: float = Field(DEFAULT_RHO, gt=1.0)
    sigma: float = Field(DEFAULT_SIGMA, gt=0.0)
    renormalize: bool = False
    similarity: Similarity = Similarity.RBF
    scale: KernelScale = KernelScale.MEDIAN

    def to_config(self, m: int) -> DppmcConfig:
        return DppmcConfig(
            m=m,
            rho=self.rho,
            sigma=self.sigma,
            renormalize=self.renormalize,
            similarity=self.similarity,
            scale=self.scale,
        )


class OptimizerBlock(Strict):
    """Benchmarks and optimizer hyperparameters"""

    functions: list[str] = Field(default_factory=lambda: ["sphere"])
    dim: int = Field(16, ge=2)
    methods: list[str] = Field(default_factory=lambda: ["baseline", "dppmc"])
    population: Optional[int] = Field(None, ge=1, description="lambda for CMA-ES, m for ES (default d)")
    x0: Union[float, list[float]] = 1.0
    sigma0: float = Field(0.5, gt=0.0, description="Initial CMA-ES step size")
    es_sigma: float = Field(0.1, gt=0.0, description="ES smoothing radius")
    learning_rate: float = 0.1
    alpha: float = Field(DEFAULT_ALPHA, ge=0.0, le=1.0)
    buffer: int = Field(DEFAULT_BUFFER, ge=1)
    delta: float = Field(DEFAULT_DELTA, gt=0.0, lt=1.0)
    ridge_lambda: float = Field(DEFAULT_RIDGE_LAMBDA, gt=0.0)
    gradient_mode: GradientMode = GradientMode.RIDGE
    noise_std: float = Field(0.0, ge=0.0)
    relative_noise: float = Field(0.0, ge=0.0)

    @field_validator("functions")
    @classmethod
    def _known_functions(cls, v):
        unknown = [name for name in v if name not in BENCHMARKS]
        if unknown or not v:
            raise ValueError(f"unknown benchmarks {unknown}, expected names from {sorted(BENCHMARKS)}")
        return v

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, v):
        if not v or any(method not in ("baseline", "dppmc") for method in v) or len(set(v)) != len(v):
            raise ValueError("methods must be distinct values from ['baseline', 'dppmc']")
        return v

    @field_validator("learning_rate")
    @classmethod
    def _learning_rate_grid(cls, v):
        if v not in LEARNING_RATES:
            raise ValueError(f"learning_rate must be one of {list(LEARNING_RATES)}")
        return v

    def start(self) -> list[float]:
        if isinstance(self.x0, list):
            if len(self.x0) != self.dim:
                raise ValueError(f"x0 has {len(self.x0)} entries for dimension {self.dim}")
            return list(self.x0)
        return [float(self.x0)] * self.dim


class KernelBlock(Strict):
    """Gaussian mixture kernel MSE sweep"""

    components: list[int] = Field(default_factory=lambda: [2, 3])
    dim: int = Field(DEFAULT_DIM, ge=1)
    ratios: list[float] = Field(default_factory=lambda: [1.0, 2.0, 3.0])
    methods: list[FeatureMethod] = Field(default_factory=lambda: list(FeatureMethod))
    pairs: int = Field(DEFAULT_PAIRS, ge=1)
    repetitions: int = Field(DEFAULT_REPETITIONS, ge=2)
    dataset: Optional[str] = Field(None, description="CSV file; synthetic blobs when omitted")
    points: int = Field(DEFAULT_POINTS, ge=2)

    @field_validator("components", "ratios")
    @classmethod
    def _positive(cls, v):
        if not v or any(x <= 0 for x in v):
            raise ValueError("must be a nonempty list of positive values")
        return v


class TheoryBlock(Strict):
    """Either one estimator (values, probabilities) or the whole suite"""

    values: Optional[list[Union[float, list[float]]]] = None
    probabilities: Optional[list[float]] = None
    weights: Optional[list[float]] = None
    trials: int = Field(DEFAULT_TRIALS, ge=2)
    random_cases: int = Field(20, ge=0)

    @model_validator(mode="after")
    def _paired(self):
        if (self.values is None) != (self.probabilities is None):
            raise ValueError("values and probabilities must be given together")
        return self


class DppSampleBlock(Strict):
    """Compare DPPMC and i.i.d. selections from one distribution"""

    distribution: str = Field("isotropic", pattern="^(isotropic|mixture)$")
    dim: int = Field(2, ge=1)
    components: int = Field(2, ge=1)
    m: int = Field(10, ge=2)
    draws: int = Field(100, ge=1)


class AblationBlock(Strict):
    rho_list: list[float] = Field(default_factory=lambda: [2.0, 5.0, 10.0, 20.0])

    @field_validator("rho_list")
    @classmethod
    def _distinct(cls, v):
        if not v:
            raise ValueError("rho_list must not be empty")
        if len(set(v)) != len(v):
            raise ValueError(f"rho_list has duplicate values: {v}")
        if any(rho <= 1.0 for rho in v):
            raise ValueError("every rho must exceed 1")
        return v


class ExperimentConfig(Strict):
    """One experiment: what to run, on which seeds, for how long"""

    kind: ExperimentKind
    seeds: list[int] = Field(default_factory=lambda: [0])
    budget: int = Field(100, ge=0, description="Iterations (generations, epochs or steps) per run")
    output_dir: Optional[str] = None
    log_y: bool = True
    dppmc: DppmcBlock = Field(default_factory=DppmcBlock)
    optimizer: OptimizerBlock = Field(default_factory=OptimizerBlock)
    kernel: KernelBlock = Field(default_factory=KernelBlock)
    theory: TheoryBlock = Field(default_factory=TheoryBlock)
    dpp_sample: DppSampleBlock = Field(default_factory=DppSampleBlock)
    ablation: AblationBlock = Field(default_factory=AblationBlock)

    @field_validator("seeds")
    @classmethod
    def _distinct_seeds(cls, v):
        if not v:
            raise ValueError("seeds must not be empty")
        if len(set(v)) != len(v):
            raise ValueError(f"seeds must be distinct: {v}")
        return v

    @model_validator(mode="after")
    def _check_start(self):
        self.optimizer.start()
        return self

    def digest(self) -> str:
        return config_digest(self)

    def with_seeds(self, seeds: Sequence[int]) -> "ExperimentConfig":
        return ExperimentConfig.model_validate({**self.model_dump(mode="json"), "seeds": list(seeds)})


def config_digest(cfg: ExperimentConfig) -> str:
    canonical = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:DIGEST_LENGTH]


def _format_errors(exc: ValidationError) -> list[str]:
    return [f"{'.'.join(str(part) for part in error['loc']) or '<root>'}: {error['msg']}" for error in exc.errors()]


def parse_config(data: dict, source: str = "<config>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigValidationError(source, _format_errors(exc))


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate a TOML experiment config.

    Raises:
        ConfigValidationError: Unreadable file, TOML syntax error (with line) or schema violation
    """
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except OSError as exc:
        raise ConfigValidationError(str(path), [f"cannot read file: {exc.strerror}"])
    except tomllib.TOMLDecodeError as exc:
        raise ConfigValidationError(str(path), [str(exc)])
    return parse_config(data, str(path))


def resolve_seeds(cfg: ExperimentConfig, cli_seeds: Optional[Sequence[int]] = None) -> ExperimentConfig:
    """Apply --seeds, else DPPMC_SEED, over the config's own seed list."""
    if cli_seeds:
        try:
            return cfg.with_seeds(cli_seeds)
        except ValidationError as exc:
            raise ConfigValidationError("--seeds", _format_errors(exc))
    env_seed = Settings().seed
    if env_seed is not None:
        logger.warning(f"DPPMC_SEED={env_seed} overrides config seeds {cfg.seeds}")
        return cfg.with_seeds([env_seed])
    return cfg


def parse_seed_list(text: str) -> list[int]:
    """'1,2,3' -> [1, 2, 3]."""
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigValidationError("--seeds", [f"not a comma-separated list of integers: {text!r}"])
