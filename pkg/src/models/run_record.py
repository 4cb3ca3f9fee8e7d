"""
Per-iteration records of optimizer and estimator runs.
"""
import csv
from pathlib import Path
from typing import ClassVar, Iterable, Optional, Union

from pydantic import BaseModel, Field, model_validator


class RunRow(BaseModel):
    """One iteration of one (seed, method) run"""

    iteration: int = Field(..., ge=0, description="1-based step index")
    cumulative_evals: int = Field(..., ge=0, description="Blackbox evaluations so far")
    objective: float = Field(..., description="Noiseless objective (or MSE) after the step")
    seed: int
    method: str


class RunRecord(BaseModel):
    """Ordered rows of a single (seed, method) run"""

    seed: int
    method: str
    rows: list[RunRow] = Field(default_factory=list)
    config_digest: Optional[str] = None

    CSV_HEADER: ClassVar[tuple[str, ...]] = ("iteration", "cumulative_evals", "objective", "seed", "method")

    @model_validator(mode="after")
    def _check_order(self):
        for prev, row in zip(self.rows, self.rows[1:]):
            if row.iteration <= prev.iteration:
                raise ValueError(f"iterations must increase: {prev.iteration} then {row.iteration}")
            if row.cumulative_evals < prev.cumulative_evals:
                raise ValueError(
                    f"cumulative evaluations decreased at iteration {row.iteration}: "
                    f"{prev.cumulative_evals} -> {row.cumulative_evals}"
                )
        return self

    @property
    def final_objective(self) -> Optional[float]:
        return self.rows[-1].objective if self.rows else None

    @property
    def total_evaluations(self) -> int:
        return self.rows[-1].cumulative_evals if self.rows else 0


def write_records_csv(
    records: Iterable[RunRecord], path: Union[str, Path], digest: Optional[str] = None
) -> Path:
    """Write rows of all records, each record's rows in iteration order."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        if digest:
            handle.write(f"# config_digest={digest}\n")
        writer = csv.writer(handle)
        writer.writerow(RunRecord.CSV_HEADER)
        for record in records:
            for row in record.rows:
                writer.writerow([row.iteration, row.cumulative_evals, repr(row.objective), row.seed, row.method])
    return path


def read_records_csv(path: Union[str, Path]) -> list[RunRecord]:
    """Group CSV rows back into records keyed by (method, seed), in first-seen order."""
    digest = None
    lines = []
    with open(path, newline="", encoding="utf-8") as handle:
        for line in handle:
            if line.startswith("# config_digest="):
                digest = line.strip().split("=", 1)[1]
            elif not line.startswith("#"):
                lines.append(line)
    grouped: dict[tuple[str, int], list[RunRow]] = {}
    for raw in csv.DictReader(lines):
        row = RunRow(**raw)
        grouped.setdefault((row.method, row.seed), []).append(row)
    return [
        RunRecord(seed=seed, method=method, rows=rows, config_digest=digest)
        for (method, seed), rows in grouped.items()
    ]
