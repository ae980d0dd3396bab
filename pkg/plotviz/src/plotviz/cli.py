"""plotviz entry point: render every panel a run manifest describes."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .panels import PlotDataError, panel_specs, read_manifest, render_panel


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plotviz",
        description="Render collapse-lab manifest panels into figure files.",
    )
    parser.add_argument("--manifest", metavar="PATH", required=True,
                        help="run manifest written by collapse-lab")
    parser.add_argument("--out", metavar="DIR", required=True,
                        help="directory for the rendered panels")
    parser.add_argument("--format", choices=("svg", "png"), default="svg",
                        help="vector by default, raster on request")
    parser.add_argument("--dpi", type=int, default=150, help="raster resolution")
    args = parser.parse_args(argv)

    manifest = Path(args.manifest)
    if not manifest.is_file():
        parser.error(f"manifest not found: {manifest}")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        entries = read_manifest(manifest)
        specs = panel_specs(entries, manifest.parent)
        stem = entries.get("mode", "panel")
        for spec in specs:
            dest = out_dir / f"{stem}_{spec.name}.{args.format}"
            render_panel(spec, dest, fmt=args.format, dpi=args.dpi)
            print(f"wrote {dest}")
    except PlotDataError as exc:
        print(f"plotviz: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
