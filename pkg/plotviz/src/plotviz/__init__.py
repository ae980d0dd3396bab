"""Render collapse-lab risk curves into publication-style figure panels.

Consumes only the primary CLI's outputs: a run manifest plus the CSVs it
names.  Theory columns become solid lines, empirical means become markers
with 2-standard-error bars; no risks are computed here.
"""

from .panels import (
    PanelSpec,
    PlotDataError,
    Series,
    SeriesData,
    extract_series,
    panel_specs,
    read_manifest,
    render_panel,
)

__version__ = "0.1.0"

__all__ = [
    "PanelSpec",
    "PlotDataError",
    "Series",
    "SeriesData",
    "extract_series",
    "panel_specs",
    "read_manifest",
    "render_panel",
]
