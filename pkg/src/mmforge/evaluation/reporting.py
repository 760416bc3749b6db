"""Rich console tables for metric reports and grids."""

from rich.table import Table

from mmforge.models import AblationGrid, MetricsReport


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.4f}"


def metrics_table(report: MetricsReport, title: str = "Metrics") -> Table:
    """Overall and per-feature scores, plus per-horizon rows when present.

    Returns:
        The table.
    """
    units = "raw units" if report.denormalized else "normalized"
    table = Table(title=f"{title} ({report.split}, {units})")
    table.add_column("Scope", style="cyan")
    table.add_column("MSE", justify="right")
    table.add_column("MAE", justify="right")
    table.add_column("MAPE %", justify="right")
    table.add_column("Points", justify="right")
    table.add_column("Excluded", justify="right")

    table.add_row(
        "overall" if not report.per_horizon else "Avg",
        _fmt(report.mse),
        _fmt(report.mae),
        _fmt(report.mape_percent),
        str(report.n_points),
        str(report.n_excluded_mape),
    )
    for h in report.per_horizon:
        table.add_row(
            f"horizon {h.horizon}",
            _fmt(h.mse),
            _fmt(h.mae),
            _fmt(h.mape_percent),
            "",
            "",
        )
    for name, m in report.per_feature.items():
        table.add_row(
            name,
            _fmt(m.mse),
            _fmt(m.mae),
            _fmt(m.mape_percent),
            str(m.n_points),
            str(m.n_excluded_mape),
        )
    return table


def grid_table(grid: AblationGrid, title: str) -> Table:
    """Every run of a grid followed by its median rows.

    Returns:
        The table.
    """
    table = Table(title=title)
    for column in ("Variant", "Seed", "MSE", "MAE", "MAPE %"):
        table.add_column(column, justify="left" if column == "Variant" else "right")
    for row in grid.rows():
        table.add_row(
            str(row["variant"]),
            str(row["seed"]),
            _fmt(float(row["mse"])),
            _fmt(float(row["mae"])),
            _fmt(float(row["mape_percent"])),
            style="bold" if row["seed"] == "median" else None,
        )
    return table
