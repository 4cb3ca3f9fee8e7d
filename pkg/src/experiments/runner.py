"""
Experiment Runner

Turns a validated ExperimentConfig into records, summaries and figures
inside one output directory.

Task layout:
    Optimizer kinds fan out over (function, method, seed). Each task owns
    its Blackbox and draws from a stream derived from (seed, function
    index), so baseline and DPPMC runs on the same seed share their random
    numbers and results do not depend on --jobs. Results are collected in
    task order.

Failure handling:
    A failing task is logged, every completed record is still written and
    the first failure is re-raised once the files are flushed.

Outputs (all CSVs start with "# config_digest=<hex>"; SVGs carry it as their description):
    optimizers     records.csv, summary.csv, curves.svg
    kernel-mse     mse_summary.csv, mse_q<Q>_s<seed>.csv / .svg
    theory-check   theory.json, theory_summary.csv
    dpp-sample     dpp_sample.csv, summary.csv
    rho-ablation   records.csv, ablation.csv
"""
import csv
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial.distance import pdist

from src.config.settings import Settings
from src.engine.dppmc import dppmc_select
from src.engine.kernels import (
    MseReport,
    load_pair_dataset,
    mse_sweep,
    pair_points,
    random_gm_kernel,
    synthetic_dataset,
)
from src.experiments.aggregate import SummaryRow, summarize, write_summary_csv
from src.experiments.config import ExperimentConfig, ExperimentKind
from src.experiments.plotting import render_curves, render_mse
from src.models.run_record import RunRecord, write_records_csv
from src.optim.blackbox import benchmark_function
from src.optim.cma import run_cma_es
from src.optim.es import run_guided_es, run_trust_region_es
from src.sampling.distributions import GaussianMixture, sample_gaussian_mixture, sample_isotropic_gaussian
from src.theory.checks import DownsampledEstimatorSpec, TheoryReport, run_theory_suite, verify_variance_reduction
from src.utils.logger import logger
from src.utils.output_dir import OutputDirectory

OPTIMIZER_KINDS = (ExperimentKind.GUIDED_ES, ExperimentKind.TRUST_REGION_ES, ExperimentKind.CMAES)


class AblationRow(BaseModel):
    function: str
    rho: float
    mean_final: float
    seeds: int


class ExperimentResult(BaseModel):
    """Everything one run_experiment call produced"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: ExperimentKind
    digest: str
    output_dir: str
    records: list[RunRecord] = Field(default_factory=list)
    summary: list[SummaryRow] = Field(default_factory=list)
    mse_reports: dict[str, MseReport] = Field(default_factory=dict)
    theory_reports: list = Field(default_factory=list)
    ablation: list[AblationRow] = Field(default_factory=list)
    files: list[str] = Field(default_factory=list)


def task_streams(seed: int, function_index: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(optimizer stream, observation-noise stream) for one (seed, function)."""
    sampler, noise = np.random.default_rng([seed, function_index]).spawn(2)
    return sampler, noise


def _relabel(record: RunRecord, method: str) -> RunRecord:
    rows = [row.model_copy(update={"method": method}) for row in record.rows]
    return record.model_copy(update={"method": method, "rows": rows})


def run_optimizer(
    cfg: ExperimentConfig, kind: ExperimentKind, function_index: int, method: str, seed: int, rho: Optional[float] = None
) -> RunRecord:
    """One (function, method, seed) run of an optimizer kind."""
    opt = cfg.optimizer
    function = opt.functions[function_index]
    sampler, noise = task_streams(seed, function_index)
    f = benchmark_function(
        function, opt.dim, noise_std=opt.noise_std, relative_noise=opt.relative_noise,
        rng=noise if (opt.noise_std or opt.relative_noise) else None,
    )
    dppmc_block = cfg.dppmc if rho is None else cfg.dppmc.model_copy(update={"rho": rho})
    enhanced = method == "dppmc"
    m = opt.population or opt.dim
    dppmc = dppmc_block.to_config(m) if enhanced else None

    if kind == ExperimentKind.CMAES:
        record = run_cma_es(f, opt.start(), opt.sigma0, m, cfg.budget, sampler, dppmc, seed)
    elif kind == ExperimentKind.GUIDED_ES:
        record = run_guided_es(
            f, opt.start(), cfg.budget, sampler, m=m, dppmc=dppmc, seed=seed,
            k=opt.buffer, alpha=opt.alpha, sigma=opt.es_sigma, learning_rate=opt.learning_rate,
        )
    else:
        record = run_trust_region_es(
            f, opt.start(), cfg.budget, sampler, m=m, dppmc_enabled=enhanced,
            dppmc=dppmc_block.to_config(m), seed=seed,
            delta=opt.delta, ridge_lambda=opt.ridge_lambda, mode=opt.gradient_mode,
            sigma=opt.es_sigma, learning_rate=opt.learning_rate,
        )
    if record.total_evaluations != f.evaluations:
        raise RuntimeError(f"{function}/{method} seed {seed}: recorded {record.total_evaluations} evaluations, counter {f.evaluations}")
    logger.info(f"{function}/{record.method} seed={seed}: final objective {record.final_objective}")
    return _relabel(record, f"{function}/{record.method}")


def _run_tasks(tasks: list[Callable[[], RunRecord]], jobs: int) -> tuple[list[RunRecord], list[BaseException]]:
    """Run tasks (in a thread pool when jobs > 1); results and failures in task order."""
    def guarded(task):
        try:
            return task(), None
        except Exception as exc:
            logger.error(f"Task failed: {exc}")
            return None, exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(guarded, tasks))
    else:
        outcomes = [guarded(task) for task in tasks]
    records = [record for record, _ in outcomes if record is not None]
    failures = [exc for _, exc in outcomes if exc is not None]
    return records, failures


def _write_curves(result: ExperimentResult, out: OutputDirectory, cfg: ExperimentConfig, digest: str) -> None:
    result.files.append(out.relative(write_records_csv(result.records, out.resolve("records.csv"), digest)))
    result.summary = summarize(result.records)
    result.files.append(out.relative(write_summary_csv(result.summary, out.resolve("summary.csv"), digest)))
    if result.summary:
        curves = render_curves(result.records, out.resolve("curves.svg"), log_y=cfg.log_y, digest=digest)
        result.files.append(out.relative(curves))


def _optimizer_experiment(cfg: ExperimentConfig, result: ExperimentResult, out: OutputDirectory, jobs: int) -> None:
    tasks = [
        (lambda fi=fi, method=method, seed=seed: run_optimizer(cfg, cfg.kind, fi, method, seed))
        for fi in range(len(cfg.optimizer.functions))
        for method in cfg.optimizer.methods
        for seed in cfg.seeds
    ]
    records, failures = _run_tasks(tasks, jobs)
    result.records = records
    _write_curves(result, out, cfg, result.digest)
    if failures:
        raise failures[0]


def rho_ablation(
    cfg: ExperimentConfig, out: Optional[OutputDirectory] = None, jobs: int = 1
) -> tuple[list[AblationRow], list[RunRecord]]:
    """
    Mean final CMA-ES+DPPMC objective per (function, rho) across seeds.

    Each (function, rho, seed) run is the same run a cmaes experiment with
    that rho would produce.
    """
    rhos = cfg.ablation.rho_list
    functions = cfg.optimizer.functions
    tasks = [
        (
            lambda fi=fi, rho=rho, seed=seed: _relabel(
                run_optimizer(cfg, ExperimentKind.CMAES, fi, "dppmc", seed, rho),
                f"{functions[fi]}/cmaes+dppmc@rho={rho:g}",
            )
        )
        for fi in range(len(functions))
        for rho in rhos
        for seed in cfg.seeds
    ]
    records, failures = _run_tasks(tasks, jobs)
    if failures:
        if out is not None:
            write_records_csv(records, out.resolve("records.csv"), cfg.digest())
        raise failures[0]

    rows = []
    per_cell = len(cfg.seeds)
    for cell, (function, rho) in enumerate((function, rho) for function in functions for rho in rhos):
        finals = [record.final_objective for record in records[cell * per_cell:(cell + 1) * per_cell]]
        finals = [value for value in finals if value is not None]
        rows.append(
            AblationRow(function=function, rho=rho, mean_final=float(np.mean(finals)) if finals else float("nan"), seeds=len(finals))
        )
    return rows, records


def write_ablation_csv(rows: list[AblationRow], path: Union[str, Path], digest: str) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        handle.write(f"# config_digest={digest}\n")
        writer = csv.writer(handle)
        writer.writerow(("function", "rho", "mean_final", "seeds"))
        for row in rows:
            writer.writerow([row.function, repr(row.rho), repr(row.mean_final), row.seeds])
    return path


def _kernel_experiment(cfg: ExperimentConfig, result: ExperimentResult, out: OutputDirectory) -> None:
    block = cfg.kernel
    summary_path = out.resolve("mse_summary.csv")
    with open(summary_path, "w", newline="", encoding="utf-8") as handle:
        handle.write(f"# config_digest={result.digest}\n")
        writer = csv.writer(handle)
        writer.writerow(("seed", "components", "ratio", "method", "mse", "stderr", "trials"))
        for seed in cfg.seeds:
            data_rng, kernel_rng, sweep_rng = np.random.default_rng(seed).spawn(3)
            if block.dataset:
                dataset = load_pair_dataset(block.dataset, data_rng, block.pairs)
            else:
                points = synthetic_dataset(block.points, block.dim, data_rng)
                dataset = pair_points(points, data_rng, block.pairs)
            dim = dataset.points.shape[1]
            for q, stream in zip(block.components, sweep_rng.spawn(len(block.components))):
                kernel = random_gm_kernel(q, dim, kernel_rng)
                report = mse_sweep(
                    kernel, block.methods, block.ratios, dataset.pair_vectors(), block.repetitions, stream,
                    cfg.dppmc.to_config(1),
                )
                key = f"q{q}_s{seed}"
                result.mse_reports[key] = report
                result.files.append(out.relative(report.to_csv(out.resolve(f"mse_{key}.csv"), result.digest)))
                figure = render_mse(report, out.resolve(f"mse_{key}.svg"), title=f"Q={q}", digest=result.digest)
                result.files.append(out.relative(figure))
                for row in report.rows:
                    writer.writerow([seed, q, repr(row.ratio), row.method.value, repr(row.mse), repr(row.stderr), row.trials])
                logger.info(f"kernel-mse seed={seed} Q={q}: " + ", ".join(
                    f"{row.method.value}@{row.ratio:g}={row.mse:.3g}" for row in report.rows
                ))
    result.files.insert(0, out.relative(summary_path))


def _theory_experiment(cfg: ExperimentConfig, result: ExperimentResult, out: OutputDirectory) -> None:
    block = cfg.theory
    seed = cfg.seeds[0]
    reports: list[TheoryReport]
    if block.values is not None:
        spec = DownsampledEstimatorSpec(values=block.values, probabilities=block.probabilities, weights=block.weights)
        reports = [verify_variance_reduction(spec, block.trials, np.random.default_rng(seed), name="variance_config")]
    else:
        reports = run_theory_suite(seed, block.trials, block.random_cases)
    result.theory_reports = reports

    json_path = out.resolve("theory.json")
    json_path.write_text(
        json.dumps({"config_digest": result.digest, "reports": [r.model_dump() for r in reports]}, indent=2, sort_keys=True),
        encoding="utf-8",
    )
    result.files.append(out.relative(json_path))
    summary_path = out.resolve("theory_summary.csv")
    with open(summary_path, "w", newline="", encoding="utf-8") as handle:
        handle.write(f"# config_digest={result.digest}\n")
        writer = csv.writer(handle)
        writer.writerow(("name", "passed", "summary"))
        for report in reports:
            writer.writerow([report.name, report.passed, report.summary()])
    result.files.append(out.relative(summary_path))
    failed = [report.name for report in reports if not report.passed]
    if failed:
        logger.warning(f"theory-check: {len(failed)} verification(s) failed: {', '.join(failed)}")


def mean_pairwise_cosine(vectors: np.ndarray) -> float:
    """Average cosine similarity over all pairs of rows."""
    return float(np.mean(1.0 - pdist(vectors, metric="cosine")))


def _dpp_sample_experiment(cfg: ExperimentConfig, result: ExperimentResult, out: OutputDirectory) -> None:
    block = cfg.dpp_sample
    dppmc = cfg.dppmc.to_config(block.m)
    path = out.resolve("dpp_sample.csv")
    records = []
    with open(path, "w", newline="", encoding="utf-8") as handle:
        handle.write(f"# config_digest={result.digest}\n")
        writer = csv.writer(handle)
        writer.writerow(("seed", "draw", "method", "mean_cosine"))
        for seed in cfg.seeds:
            rng = np.random.default_rng(seed)
            if block.distribution == "mixture":
                gm = GaussianMixture.random(block.components, block.dim, rng)
                sample = lambda n, stream, gm=gm: sample_gaussian_mixture(gm, n, stream)  # noqa: E731
            else:
                sample = lambda n, stream: sample_isotropic_gaussian(block.dim, n, stream)  # noqa: E731
            iid_rows, dpp_rows = [], []
            for draw in range(1, block.draws + 1):
                iid = sample(block.m, rng)
                pool = sample(dppmc.pool_size, rng)
                chosen = pool.subset(dppmc_select(pool, block.m, dppmc, rng))
                for method, selection, rows in (("iid", iid, iid_rows), ("dppmc", chosen, dpp_rows)):
                    value = mean_pairwise_cosine(selection.vectors)
                    writer.writerow([seed, draw, method, repr(value)])
                    rows.append({"iteration": draw, "cumulative_evals": draw * block.m, "objective": value, "seed": seed, "method": method})
            records.append(RunRecord(seed=seed, method="iid", rows=iid_rows))
            records.append(RunRecord(seed=seed, method="dppmc", rows=dpp_rows))
    result.files.append(out.relative(path))
    result.records = records
    result.summary = summarize(records)
    result.files.append(out.relative(write_summary_csv(result.summary, out.resolve("summary.csv"), result.digest)))


def run_experiment(
    cfg: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None, jobs: Optional[int] = None
) -> ExperimentResult:
    """
    Run a validated experiment and write its artifacts.

    Args:
        cfg: Validated config (seeds already resolved)
        out_dir: Output directory; falls back to cfg.output_dir, then DPPMC_OUTPUT_DIR
        jobs: Worker threads for independent runs; falls back to DPPMC_JOBS

    Returns:
        ExperimentResult with records, summaries and the files written
    """
    env = Settings()
    out = OutputDirectory(out_dir or cfg.output_dir or env.output_dir)
    jobs = max(1, jobs or env.jobs)
    digest = cfg.digest()
    result = ExperimentResult(kind=cfg.kind, digest=digest, output_dir=str(out.root))
    logger.info(f"Running {cfg.kind.value} experiment (digest {digest}) into {out.root}")

    if cfg.budget == 0 and cfg.kind in OPTIMIZER_KINDS + (ExperimentKind.RHO_ABLATION,):
        logger.warning("budget is 0: no iterations will run, records will be empty")

    if cfg.kind in OPTIMIZER_KINDS:
        _optimizer_experiment(cfg, result, out, jobs)
    elif cfg.kind == ExperimentKind.RHO_ABLATION:
        result.ablation, result.records = rho_ablation(cfg, out, jobs)
        _write_curves(result, out, cfg, digest)
        result.files.append(out.relative(write_ablation_csv(result.ablation, out.resolve("ablation.csv"), digest)))
    elif cfg.kind == ExperimentKind.KERNEL_MSE:
        _kernel_experiment(cfg, result, out)
    elif cfg.kind == ExperimentKind.THEORY_CHECK:
        _theory_experiment(cfg, result, out)
    else:
        _dpp_sample_experiment(cfg, result, out)

    logger.info(f"Wrote {len(result.files)} file(s) to {out.root}")
    return result
