"""Panel specs, CSV/manifest loading, and matplotlib rendering.

The input contract is the collapse-lab output directory: a manifest of
key=value lines whose panel.* groups name CSV files in the fixed
8-column risk-curve schema.  Everything here is read-only over those
files; the only arithmetic is the 2-standard-error bar half-width.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
# stable ids and no timestamp, so rerenders of the same inputs are
# byte-identical on one platform
matplotlib.rcParams["svg.hashsalt"] = "plotviz"

import matplotlib.pyplot as plt
from matplotlib.ticker import MaxNLocator

SCHEMA = (
    "sweep_var", "sweep_value", "bias_theory", "var_theory",
    "risk_theory", "risk_emp_mean", "risk_emp_se", "reps",
)

X_VAR = {
    "risk_vs_w": "w",
    "risk_vs_t": "t",
    "wstar_vs_lambda": "lambda",
    "risk_vs_lambda": "lambda",
}
LOG_X = ("wstar_vs_lambda", "risk_vs_lambda")
AXIS_LABELS = {
    "risk_vs_w": ("mixing weight w", "risk"),
    "risk_vs_t": ("iteration t", "risk"),
    "wstar_vs_lambda": ("penalty lambda", "optimal weight w*"),
    "risk_vs_lambda": ("penalty lambda", "risk"),
}


class PlotDataError(ValueError):
    """Input file violates the manifest or CSV contract."""


@dataclass(frozen=True)
class Series:
    path: Path
    label: str


@dataclass(frozen=True)
class PanelSpec:
    """One figure panel: which CSVs to draw and how to dress the axes."""

    name: str
    kind: str
    title: str
    series: tuple[Series, ...]
    refline: float | None = None
    wstar_column: str = "risk_emp_mean"

    def __post_init__(self):
        if self.kind not in X_VAR:
            raise PlotDataError(f"unknown panel kind {self.kind!r}")
        if not self.series:
            raise PlotDataError(f"panel {self.name!r} names no series files")


@dataclass(frozen=True)
class SeriesData:
    label: str
    x: list[float]
    line: list[float]
    emp_x: list[float]
    emp_y: list[float]
    emp_err: list[float]  # 2 * standard error, 0 where the SE is absent


def _parse_field(raw: str) -> float | None:
    raw = raw.strip()
    if not raw:
        return None
    value = float(raw)
    return value if math.isfinite(value) else None


def _load_rows(path: Path) -> list[dict[str, str]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PlotDataError(f"{path}: {exc.strerror or exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise PlotDataError(f"{path}: empty file")
    header = lines[0].split(",")
    body = [ln for ln in lines[1:] if ln and not ln.startswith("#")]
    rows = list(csv.DictReader(body, fieldnames=header))
    if not rows:
        raise PlotDataError(f"{path}: no data rows")
    return rows


def extract_series(series: Series, kind: str, wstar_column: str = "risk_emp_mean") -> SeriesData:
    """Pull the plottable arrays for one CSV, validating the referenced columns."""
    rows = _load_rows(series.path)
    if kind == "wstar_vs_lambda":
        referenced = ("sweep_var", "sweep_value", wstar_column)
    else:
        referenced = ("sweep_var", "sweep_value", "risk_theory", "risk_emp_mean", "risk_emp_se")
    for column in referenced:
        if column not in rows[0]:
            raise PlotDataError(f"{series.path}: missing column {column!r}")

    want = X_VAR[kind]
    seen = {row["sweep_var"] for row in rows}
    if seen != {want}:
        raise PlotDataError(
            f"{series.path}: sweep over {sorted(seen)}, panel kind {kind!r} expects {want!r}"
        )

    line_col = wstar_column if kind == "wstar_vs_lambda" else "risk_theory"
    x, line, emp_x, emp_y, emp_err = [], [], [], [], []
    for row in rows:
        value = _parse_field(row["sweep_value"])
        if value is None:
            raise PlotDataError(f"{series.path}: sweep_value must be numeric")
        y = _parse_field(row[line_col])
        if y is not None:
            x.append(value)
            line.append(y)
        if kind == "wstar_vs_lambda":
            continue
        mean = _parse_field(row["risk_emp_mean"])
        if mean is None:
            continue
        se = _parse_field(row["risk_emp_se"])
        emp_x.append(value)
        emp_y.append(mean)
        emp_err.append(2.0 * se if se is not None else 0.0)
    return SeriesData(series.label, x, line, emp_x, emp_y, emp_err)


def render_panel(spec: PanelSpec, out, fmt: str = "svg", dpi: int = 150) -> Path:
    """Draw one panel to `out`; errors surface before any file is written."""
    out = Path(out)
    data = [extract_series(s, spec.kind, spec.wstar_column) for s in spec.series]

    fig, ax = plt.subplots(figsize=(4.8, 3.4), layout="constrained")
    try:
        for d in data:
            (handle,) = ax.plot(d.x, d.line, "-", linewidth=1.6, label=d.label)
            if d.emp_x:
                bars = ax.errorbar(
                    d.emp_x, d.emp_y, yerr=d.emp_err, fmt="x",
                    color=handle.get_color(), markersize=5,
                    elinewidth=0.9, capsize=2, linestyle="none",
                )
                bars.lines[0].set_gid(f"emp-{d.label}")
        if spec.refline is not None:
            ax.axvline(
                spec.refline, color="0.35", linestyle="--", linewidth=1.0
            ).set_gid("refline-phi")
        if spec.kind in LOG_X:
            ax.set_xscale("log")
        if spec.kind == "risk_vs_t":
            ax.xaxis.set_major_locator(MaxNLocator(integer=True))
        xlabel, ylabel = AXIS_LABELS[spec.kind]
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(spec.title, fontsize=10)
        ax.legend(frameon=False, fontsize=8)
        if fmt == "svg":
            fig.savefig(out, format="svg", metadata={"Date": None})
        else:
            fig.savefig(out, format=fmt, dpi=dpi)
    finally:
        plt.close(fig)
    return out


def read_manifest(path) -> dict[str, str]:
    path = Path(path)
    entries: dict[str, str] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise PlotDataError(f"{path}: malformed manifest line {line!r}")
        key, _, value = line.partition("=")
        entries[key] = value
    return entries


def panel_specs(entries: dict[str, str], base_dir) -> list[PanelSpec]:
    """Group panel.<name>.* manifest keys into specs, CSV paths against base_dir."""
    base_dir = Path(base_dir)
    groups: dict[str, dict[str, str]] = {}
    for key, value in entries.items():
        if not key.startswith("panel."):
            continue
        try:
            _, name, rest = key.split(".", 2)
        except ValueError:
            raise PlotDataError(f"incomplete panel key {key!r}") from None
        groups.setdefault(name, {})[rest] = value
    if not groups:
        raise PlotDataError("manifest describes no panels")

    specs = []
    for name in sorted(groups):
        group = groups[name]
        if "kind" not in group:
            raise PlotDataError(f"panel {name!r} has no kind")
        series = []
        k = 1
        while f"series.{k}.file" in group:
            series.append(
                Series(base_dir / group[f"series.{k}.file"], group.get(f"series.{k}.label", f"series {k}"))
            )
            k += 1
        refline = None
        if "refline" in group:
            try:
                refline = float(group["refline"])
            except ValueError:
                raise PlotDataError(f"panel {name!r} refline {group['refline']!r} is not a number") from None
        specs.append(
            PanelSpec(
                name=name,
                kind=group["kind"],
                title=group.get("title", name),
                series=tuple(series),
                refline=refline,
                wstar_column=entries.get("wstar_column", "risk_emp_mean"),
            )
        )
    return specs
