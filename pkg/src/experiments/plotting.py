"""
SVG learning curves: one median line per method with its inter-quartile band.

Output is byte-stable for fixed input: the Agg backend renders SVG with a
fixed hash salt and no date metadata. When a config digest is given it is
stored as the SVG description, as "config_digest=<hex>".
"""
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from src.engine.kernels import MseReport  # noqa: E402
from src.experiments.aggregate import SummaryRow, summarize  # noqa: E402
from src.models.run_record import RunRecord  # noqa: E402

SVG_HASH_SALT = "dppmc"
BAND_ALPHA = 0.25


def _save(fig, path: Union[str, Path], digest: Optional[str] = None) -> Path:
    path = Path(path)
    metadata = {"Date": None}
    if digest:
        metadata["Description"] = f"config_digest={digest}"
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata=metadata)
    plt.close(fig)
    return path


def _by_method(rows: Iterable[SummaryRow]) -> dict[str, list[SummaryRow]]:
    grouped: dict[str, list[SummaryRow]] = {}
    for row in rows:
        grouped.setdefault(row.method, []).append(row)
    return grouped


def render_curves(
    records: Sequence[RunRecord],
    output_path: Union[str, Path],
    log_y: bool = True,
    x_axis: str = "iteration",
    title: str = "",
    digest: Optional[str] = None,
) -> Path:
    """
    Median objective per method with a translucent IQR band.

    Args:
        records: Runs to aggregate (any mix of methods and seeds)
        output_path: SVG file to write
        log_y: Logarithmic objective axis (needs positive values)
        x_axis: "iteration" or "cumulative_evals"
        digest: Config digest recorded in the SVG description metadata

    Returns:
        Path of the written SVG
    """
    summary = summarize(records)
    if not summary:
        raise ValueError("cannot render curves without any rows")

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for method, rows in _by_method(summary).items():
        xs = [getattr(row, x_axis) for row in rows]
        medians = [row.median for row in rows]
        line, = ax.plot(xs, medians, label=method, marker="o" if len(rows) == 1 else None)
        ax.fill_between(xs, [row.q1 for row in rows], [row.q3 for row in rows], color=line.get_color(), alpha=BAND_ALPHA)

    positive = all(min(row.median, row.q1) > 0 for row in summary)
    if log_y and positive:
        ax.set_yscale("log")
    ax.set_xlabel("iteration" if x_axis == "iteration" else "function evaluations")
    ax.set_ylabel("objective")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return _save(fig, output_path, digest)


def render_mse(
    report: MseReport, output_path: Union[str, Path], title: str = "", digest: Optional[str] = None
) -> Path:
    """Log-log MSE against m/d, one line per method, error bars of one standard error."""
    if not report.rows:
        raise ValueError("cannot render an empty MSE report")
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    methods = []
    for row in report.rows:
        if row.method not in methods:
            methods.append(row.method)
    for method in methods:
        rows = sorted((row for row in report.rows if row.method == method), key=lambda r: r.ratio)
        ax.errorbar(
            [row.ratio for row in rows],
            [row.mse for row in rows],
            yerr=[row.stderr for row in rows],
            label=method.value,
            marker="o",
            capsize=3,
        )
    if all(row.mse > 0 for row in report.rows):
        ax.set_yscale("log")
    ax.set_xscale("log")
    ax.set_xlabel("m / d")
    ax.set_ylabel("MSE")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return _save(fig, output_path, digest)
