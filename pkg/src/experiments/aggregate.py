"""
Median and inter-quartile curves across seeds.

Conventions: the median of an even number of seeds is the LOWER median and
quartiles are nearest-rank (the ceil(q n)-th smallest value). Both are
numpy's "inverted_cdf" quantile.
"""
import csv
from pathlib import Path
from typing import ClassVar, Iterable, Optional, Union

import numpy as np
from pydantic import BaseModel

from src.models.run_record import RunRecord

QUANTILE_METHOD = "inverted_cdf"


class SummaryRow(BaseModel):
    method: str
    iteration: int
    cumulative_evals: int
    median: float
    q1: float
    q3: float
    seeds: int

    CSV_HEADER: ClassVar[tuple[str, ...]] = ("method", "iteration", "cumulative_evals", "median", "q1", "q3", "seeds")


def lower_median(values) -> float:
    return float(np.quantile(np.asarray(values, dtype=float), 0.5, method=QUANTILE_METHOD))


def nearest_rank_quartiles(values) -> tuple[float, float]:
    q1, q3 = np.quantile(np.asarray(values, dtype=float), [0.25, 0.75], method=QUANTILE_METHOD)
    return float(q1), float(q3)


def summarize(records: Iterable[RunRecord]) -> list[SummaryRow]:
    """
    Per-method, per-iteration median and IQR across seeds.

    Methods appear in first-seen order; an iteration is summarized over the
    seeds that reached it.
    """
    by_method: dict[str, dict[int, list]] = {}
    for record in records:
        iterations = by_method.setdefault(record.method, {})
        for row in record.rows:
            iterations.setdefault(row.iteration, []).append(row)

    summary = []
    for method, iterations in by_method.items():
        for iteration in sorted(iterations):
            rows = sorted(iterations[iteration], key=lambda r: r.seed)
            objectives = [row.objective for row in rows]
            q1, q3 = nearest_rank_quartiles(objectives)
            summary.append(
                SummaryRow(
                    method=method,
                    iteration=iteration,
                    cumulative_evals=int(np.quantile([row.cumulative_evals for row in rows], 0.5, method=QUANTILE_METHOD)),
                    median=lower_median(objectives),
                    q1=q1,
                    q3=q3,
                    seeds=len(rows),
                )
            )
    return summary


def write_summary_csv(rows: Iterable[SummaryRow], path: Union[str, Path], digest: Optional[str] = None) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        if digest:
            handle.write(f"# config_digest={digest}\n")
        writer = csv.writer(handle)
        writer.writerow(SummaryRow.CSV_HEADER)
        for row in rows:
            writer.writerow(
                [row.method, row.iteration, row.cumulative_evals, repr(row.median), repr(row.q1), repr(row.q3), row.seeds]
            )
    return path
