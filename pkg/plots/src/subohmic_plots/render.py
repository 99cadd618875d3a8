"""Deterministic multi-panel rendering of trajectory-table columns.

A figure specification is a JSON file:

    {
      "size": [6.4, 6.4],
      "panels": [
        {
          "series": [
            {"table": "runs/alpha_0.05.csv", "x": "t", "y": "p_z",
             "label": "alpha = 0.05"},
            ...
          ],
          "xlabel": "omega_c t",
          "ylabel": "P_z",
          "xlim": [0, 40],
          "ylim": [-1, 1],
          "legend_title": "coupling"
        },
        ...
      ]
    }

Panels stack vertically and share nothing but the figure.  Table paths are
resolved relative to the specification file.  Every referenced column must
exist in its table; a mismatch is reported with the offending column and
table.  Output is fixed-size, fixed-dpi PNG with software metadata stripped,
so identical inputs give byte-identical images.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

__all__ = [
    "SeriesSpec",
    "PanelSpec",
    "FigureSpec",
    "SchemaMismatchError",
    "load_table",
    "render_family",
    "main",
]

DPI = 100


class SchemaMismatchError(ValueError):
    """A referenced column is missing from an input table."""


@dataclass
class SeriesSpec:
    table: str
    y: str
    x: str = "t"
    label: str | None = None


@dataclass
class PanelSpec:
    series: list[SeriesSpec]
    xlabel: str = "t"
    ylabel: str = ""
    xlim: tuple[float, float] | None = None
    ylim: tuple[float, float] | None = None
    legend_title: str | None = None


@dataclass
class FigureSpec:
    panels: list[PanelSpec]
    size: tuple[float, float] = (6.4, 4.8)
    base_dir: str = "."

    @classmethod
    def from_file(cls, path: str) -> "FigureSpec":
        with open(path) as fh:
            raw = json.load(fh)
        panels = []
        for panel in raw.get("panels", []):
            series = [SeriesSpec(**entry) for entry in panel.get("series", [])]
            panels.append(
                PanelSpec(
                    series=series,
                    xlabel=panel.get("xlabel", "t"),
                    ylabel=panel.get("ylabel", ""),
                    xlim=tuple(panel["xlim"]) if "xlim" in panel else None,
                    ylim=tuple(panel["ylim"]) if "ylim" in panel else None,
                    legend_title=panel.get("legend_title"),
                )
            )
        if not panels:
            raise ValueError(f"{path}: figure spec has no panels")
        size = tuple(raw.get("size", (6.4, 4.8)))
        return cls(panels=panels, size=size, base_dir=os.path.dirname(os.path.abspath(path)))


def load_table(path: str) -> dict[str, np.ndarray]:
    """Read a '#'-headed comma-separated trajectory table."""
    header: list[str] | None = None
    rows: list[list[float]] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = [c.strip() for c in line.split(",")]
                continue
            rows.append([float(x) for x in line.split(",")])
    if header is None:
        raise ValueError(f"{path}: no column header found")
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def _column(table: dict[str, np.ndarray], name: str, path: str) -> np.ndarray:
    if name not in table:
        raise SchemaMismatchError(
            f"column {name!r} not found in {path} (available: {', '.join(table)})"
        )
    return table[name]


def build_figure(spec: FigureSpec):
    """Assemble the matplotlib figure for a spec (deterministic, no output)."""
    tables: dict[str, dict[str, np.ndarray]] = {}
    for panel in spec.panels:
        for series in panel.series:
            path = os.path.join(spec.base_dir, series.table)
            if path not in tables:
                tables[path] = load_table(path)
            # validate all referenced columns before any drawing happens
            _column(tables[path], series.x, path)
            _column(tables[path], series.y, path)

    fig, axes = plt.subplots(
        len(spec.panels), 1, figsize=spec.size, dpi=DPI, squeeze=False
    )
    for ax, panel in zip(axes[:, 0], spec.panels):
        for series in panel.series:
            path = os.path.join(spec.base_dir, series.table)
            table = tables[path]
            ax.plot(
                _column(table, series.x, path),
                _column(table, series.y, path),
                label=series.label,
            )
        ax.set_xlabel(panel.xlabel)
        ax.set_ylabel(panel.ylabel)
        if panel.xlim is not None:
            ax.set_xlim(panel.xlim)
        if panel.ylim is not None:
            ax.set_ylim(panel.ylim)
        if any(s.label for s in panel.series):
            ax.legend(title=panel.legend_title)
    fig.tight_layout()
    return fig


def render_family(spec: FigureSpec, output: str, force: bool = False) -> None:
    """Render a figure spec to a PNG file (byte-identical across reruns)."""
    if os.path.exists(output) and not force:
        raise FileExistsError(f"output {output!r} exists; pass --force to overwrite")
    fig = build_figure(spec)
    try:
        fig.savefig(output, format="png", metadata={"Software": None})
    finally:
        plt.close(fig)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="subohmic-plots",
        description="Render figure families from trajectory tables",
    )
    parser.add_argument("spec", help="figure specification JSON file")
    parser.add_argument("--output", "-o", required=True, help="output PNG path")
    parser.add_argument("--force", action="store_true", help="overwrite existing output")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec.from_file(args.spec)
        render_family(spec, args.output, force=args.force)
    except (SchemaMismatchError, FileNotFoundError, FileExistsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
