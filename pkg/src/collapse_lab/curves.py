"""Risk-curve container, CSV serialization, and run manifests.

One CSV schema serves every mode.  Theory-only rows leave the empirical
columns empty; the optimal-weight mode stores w_star in risk_emp_mean (the
empirical slots are otherwise unused there, and the header is fixed).
Lines starting with '#' directly after the header carry free-form notes,
e.g. clamped sweep values, and are skipped by the parser.
"""

from __future__ import annotations

from dataclasses import dataclass, field

CSV_HEADER = "sweep_var,sweep_value,bias_theory,var_theory,risk_theory,risk_emp_mean,risk_emp_se,reps"
_COLUMNS = CSV_HEADER.split(",")


@dataclass
class CurveRow:
    sweep_value: float
    bias_theory: float
    var_theory: float
    risk_theory: float
    risk_emp_mean: float | None = None
    risk_emp_se: float | None = None
    reps: int | None = None


@dataclass
class RiskCurve:
    sweep_var: str
    rows: list[CurveRow] = field(default_factory=list)
    notes: tuple[str, ...] = ()


def format_value(x: float | None) -> str:
    """Decimal form with 12 significant digits; None becomes the empty field."""
    if x is None:
        return ""
    return f"{float(x):.12g}"


def emit_csv(curve: RiskCurve, path) -> None:
    """Write the curve; UTF-8, LF endings, exact header, one row per point."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for note in curve.notes:
            fh.write(f"# {note}\n")
        for row in curve.rows:
            reps = "" if row.reps is None else str(int(row.reps))
            fields = (
                curve.sweep_var,
                format_value(row.sweep_value),
                format_value(row.bias_theory),
                format_value(row.var_theory),
                format_value(row.risk_theory),
                format_value(row.risk_emp_mean),
                format_value(row.risk_emp_se),
                reps,
            )
            fh.write(",".join(fields) + "\n")


def _maybe_float(text: str) -> float | None:
    return None if text == "" else float(text)


def parse_csv(path) -> RiskCurve:
    """Inverse of emit_csv up to the 12-digit quantization of emit."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() != ""]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: missing or malformed header")
    notes = []
    rows = []
    sweep_var = None
    for ln in lines[1:]:
        if ln.startswith("#"):
            notes.append(ln.lstrip("# "))
            continue
        parts = ln.split(",")
        if len(parts) != len(_COLUMNS):
            raise ValueError(f"{path}: row has {len(parts)} fields, expected {len(_COLUMNS)}")
        if sweep_var is None:
            sweep_var = parts[0]
        elif parts[0] != sweep_var:
            raise ValueError(f"{path}: mixed sweep variables {sweep_var!r} and {parts[0]!r}")
        rows.append(
            CurveRow(
                sweep_value=float(parts[1]),
                bias_theory=float(parts[2]),
                var_theory=float(parts[3]),
                risk_theory=float(parts[4]),
                risk_emp_mean=_maybe_float(parts[5]),
                risk_emp_se=_maybe_float(parts[6]),
                reps=None if parts[7] == "" else int(parts[7]),
            )
        )
    if sweep_var is None:
        raise ValueError(f"{path}: no data rows")
    return RiskCurve(sweep_var=sweep_var, rows=rows, notes=tuple(notes))


def write_manifest(path, entries: dict) -> None:
    """Plain key=value lines, in insertion order, no timestamps."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def read_manifest(path) -> dict:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln in fh:
            ln = ln.rstrip("\n")
            if not ln or ln.startswith("#"):
                continue
            key, sep, value = ln.partition("=")
            if not sep:
                raise ValueError(f"{path}: malformed manifest line {ln!r}")
            out[key] = value
    return out
