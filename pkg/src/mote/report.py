"""Report emission: CSVs, config echo, checkpoints, figures, timings.

metrics.csv rows are one per (method, seed) plus a seed-averaged row per
method; temporal_matrix.csv carries one row per (metric, i, j) cell. All
reals are written with six fractional digits, so identical runs produce
byte-identical CSVs. Wall-clock timings go to timings.txt, never into a CSV.
"""

from __future__ import annotations

from pathlib import Path

from .baselines import SourceModel, save_source_checkpoint
from .model import MoTEModel, save_checkpoint
from .runner import RunReport

__all__ = ["emit_report", "METRICS_CSV_COLUMNS", "MATRIX_CSV_COLUMNS"]

METRICS_CSV_COLUMNS = ("method", "seed", "f1_macro", "f1_samples", "auc_macro", "fair")
MATRIX_CSV_COLUMNS = ("metric", "source_domain", "target_domain", "p_ij", "delta")


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def _metric_cell(row: dict[str, float], metric: str, requested: tuple[str, ...]) -> str:
    return _fmt(row[metric]) if metric in requested else ""


def _write_metrics_csv(report: RunReport, path: Path) -> None:
    lines = [",".join(METRICS_CSV_COLUMNS)]
    if report.metrics:
        order = report.method_order or tuple(
            dict.fromkeys(r.method for r in report.method_rows)
        )
        for method in order:
            for row in report.method_rows:
                if row.method != method:
                    continue
                cells = row.report.as_row()
                lines.append(
                    ",".join(
                        [method, str(row.seed)]
                        + [_metric_cell(cells, m, report.metrics) for m in METRICS_CSV_COLUMNS[2:]]
                    )
                )
        for method in order:
            if method not in report.averaged:
                continue
            cells = report.averaged[method]
            lines.append(
                ",".join(
                    [method, "avg"]
                    + [_metric_cell(cells, m, report.metrics) for m in METRICS_CSV_COLUMNS[2:]]
                )
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_matrix_csv(report: RunReport, path: Path) -> None:
    lines = [",".join(MATRIX_CSV_COLUMNS)]
    for name in sorted(report.matrices):
        matrix = report.matrices[name]
        t = matrix.p.shape[0]
        for i in range(t):
            for j in range(t):
                lines.append(
                    f"{name},{i + 1},{j + 1},{_fmt(matrix.p[i, j])},{_fmt(matrix.delta[i, j])}"
                )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_checkpoints(report: RunReport, out_dir: Path) -> None:
    for method, model in report.checkpoints.items():
        target = out_dir / "checkpoints" / method
        if isinstance(model, MoTEModel):
            save_checkpoint(model, target)
        elif isinstance(model, SourceModel):
            save_source_checkpoint(model, target)


def _write_figures(report: RunReport, out_dir: Path) -> None:
    from . import figures

    if report.averaged:
        figures.plot_metric_bars(
            report.averaged, report.metrics, out_dir / "figure_metrics.png"
        )
    for name, matrix in report.matrices.items():
        figures.plot_temporal_heatmap(matrix, out_dir / f"figure_temporal_effect_{name}.png")
    if report.loss_traces:
        figures.plot_loss_curves(report.loss_traces, out_dir / "figure_training_loss.png")


def emit_report(report: RunReport, out_dir: str | Path) -> list[Path]:
    """Write all artifacts; returns the paths written."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out_dir}: {exc}") from exc
    written: list[Path] = []

    metrics_path = out_dir / "metrics.csv"
    _write_metrics_csv(report, metrics_path)
    written.append(metrics_path)

    if report.matrices:
        matrix_path = out_dir / "temporal_matrix.csv"
        _write_matrix_csv(report, matrix_path)
        written.append(matrix_path)

    echo_path = out_dir / "config_echo.txt"
    echo_path.write_text("\n".join(report.config_echo) + "\n", encoding="utf-8")
    written.append(echo_path)

    timing_path = out_dir / "timings.txt"
    timing_lines = [f"{stage}={seconds:.3f}s" for stage, seconds in report.timings.items()]
    timing_path.write_text("\n".join(timing_lines) + "\n", encoding="utf-8")
    written.append(timing_path)

    _write_checkpoints(report, out_dir)
    if report.figures:
        _write_figures(report, out_dir)
    return written
